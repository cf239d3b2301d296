use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use edgecache::harness::{
    cmd_evaluate, cmd_generate_trace, cmd_run, cmd_train, run_seed, run_seeds, seed_dir, ExperimentConfig, Mode,
    PolicyName, Summary,
};

fn quick(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        catalog_size: 200,
        cache_capacity: 20,
        episodes: 2,
        steps_per_episode: 100,
        eval_episodes: 2,
        seeds: vec![1, 2],
        workers: 1,
        out: out.to_path_buf(),
        ..ExperimentConfig::default()
    };
    cfg.agent.memory_capacity = 1000;
    cfg
}

/// Every file below `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

/// Hit rate recounted from the hit and request columns of a metrics file.
fn recount(path: &Path) -> f64 {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (hits, total) = (col("hit_requests"), col("total_requests"));
    let (mut h, mut t) = (0u64, 0u64);
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        h += fields[hits].parse::<u64>().unwrap();
        t += fields[total].parse::<u64>().unwrap();
    }
    h as f64 / t as f64
}

fn mean_hit_rate(cfg: &ExperimentConfig, policy: PolicyName) -> f64 {
    let results = run_seeds(cfg, policy, Mode::Run, None).unwrap();
    results.iter().map(|r| r.eval.hit_rate()).sum::<f64>() / results.len() as f64
}

#[test]
fn generated_traces_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(&dir.path().join("a"));
    cfg.trace_slots = 500;
    let a = cmd_generate_trace(&cfg).unwrap();
    cfg.out = dir.path().join("b");
    let b = cmd_generate_trace(&cfg).unwrap();
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.as_bytes(), fs::read(&b).unwrap().as_slice());
    assert!(text.lines().any(|l| l == "# users=20"), "{}", &text[..200]);
}

#[test]
fn negative_zipf_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(dir.path());
    cfg.set("zipf", "-0.5").unwrap();
    let err = cmd_generate_trace(&cfg).unwrap_err().to_string();
    assert!(err.contains("zipf"), "{err}");
}

#[test]
fn lru_hits_everything_when_the_catalog_fits() {
    let cfg = ExperimentConfig {
        catalog_size: 50,
        cache_capacity: 50,
        seeds: vec![3],
        ..quick(Path::new("unused"))
    };
    let r = run_seed(&cfg, PolicyName::Lru, 3, Mode::Run, None).unwrap();
    assert!(r.eval.total_requests > 0);
    assert_eq!(r.eval.hit_rate(), 1.0);
}

#[test]
fn lru_beats_random_on_skewed_demand() {
    let cfg = ExperimentConfig {
        catalog_size: 500,
        cache_capacity: 50,
        zipf: 1.5,
        steps_per_episode: 500,
        seeds: vec![1, 2, 3, 4, 5],
        ..quick(Path::new("unused"))
    };
    let lru = mean_hit_rate(&cfg, PolicyName::Lru);
    let random = mean_hit_rate(&cfg, PolicyName::Random);
    assert!(lru > random, "lru {lru} random {random}");
}

#[test]
fn baseline_hit_rates_follow_cache_size_and_skew() {
    let base = ExperimentConfig {
        steps_per_episode: 300,
        ..quick(Path::new("unused"))
    };
    for policy in [PolicyName::Lru, PolicyName::Fifo, PolicyName::Least] {
        let at = |n: usize, z: f64| {
            mean_hit_rate(
                &ExperimentConfig {
                    cache_capacity: n,
                    zipf: z,
                    ..base.clone()
                },
                policy,
            )
        };
        let sizes: Vec<f64> = [10, 20, 40].iter().map(|&n| at(n, 1.2)).collect();
        assert!(sizes.windows(2).all(|w| w[0] <= w[1]), "{policy} {sizes:?}");
        let (steep, flat) = (at(20, 1.5), at(20, 0.8));
        assert!(steep > flat, "{policy} z=1.5 {steep} z=0.8 {flat}");
    }
}

#[test]
fn summary_hit_rate_matches_metrics_rows() {
    let dir = tempfile::tempdir().unwrap();
    for policy in [PolicyName::Lru, PolicyName::Dqn] {
        let cfg = ExperimentConfig {
            policy,
            ..quick(dir.path())
        };
        cmd_run(&cfg).unwrap();
        for &seed in &cfg.seeds {
            let sd = seed_dir(dir.path(), policy, seed);
            let summary = Summary::parse(&fs::read_to_string(sd.join("summary.txt")).unwrap());
            let reported = summary.get_f64("hit_rate").unwrap();
            let recounted = recount(&sd.join("eval.csv"));
            assert!((reported - recounted).abs() < 1e-12, "{policy} seed {seed}: {reported} vs {recounted}");
        }
        let agg = Summary::parse(&fs::read_to_string(dir.path().join(policy.as_str()).join("summary.txt")).unwrap());
        assert!(agg.get_f64("hit_rate_mean").is_some());
    }
}

#[test]
fn evaluation_of_a_trained_checkpoint_is_reproducible() {
    for policy in [PolicyName::Dqn, PolicyName::Emrqn] {
        let dir = tempfile::tempdir().unwrap();
        let train_dir = dir.path().join("train");
        let cfg = ExperimentConfig {
            policy,
            seeds: vec![4],
            ..quick(&train_dir)
        };
        cmd_train(&cfg).unwrap();
        let sd = seed_dir(&train_dir, policy, 4);
        assert!(sd.join("checkpoint.bin").exists());
        assert!(!sd.join("checkpoint.tmp").exists());

        cmd_evaluate(&cfg).unwrap();
        let first = fs::read(sd.join("eval.csv")).unwrap();
        cmd_evaluate(&cfg).unwrap();
        assert_eq!(first, fs::read(sd.join("eval.csv")).unwrap(), "{policy}: repeated evaluation differs");

        // Train-then-evaluate in one run must match evaluating the checkpoint.
        let run_cfg = ExperimentConfig {
            out: dir.path().join("run"),
            ..cfg.clone()
        };
        cmd_run(&run_cfg).unwrap();
        let run_eval = fs::read(seed_dir(&run_cfg.out, policy, 4).join("eval.csv")).unwrap();
        assert_eq!(first, run_eval, "{policy}: checkpoint evaluation differs from the live agent");
    }
}

#[test]
fn incompatible_checkpoints_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        policy: PolicyName::Dqn,
        seeds: vec![1],
        episodes: 1,
        ..quick(dir.path())
    };
    cmd_train(&cfg).unwrap();
    let mut wider = cfg.clone();
    wider.agent.hidden += 4;
    let err = cmd_evaluate(&wider).unwrap_err().to_string();
    assert!(err.contains("checkpoint"), "{err}");

    let mut other = cfg.clone();
    other.policy = PolicyName::Emrqn;
    other.checkpoint = Some(seed_dir(dir.path(), PolicyName::Dqn, 1).join("checkpoint.bin"));
    assert!(cmd_evaluate(&other).is_err());
}

#[test]
fn baselines_cannot_be_trained_or_evaluated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(dir.path());
    assert!(cmd_train(&cfg).is_err());
    assert!(cmd_evaluate(&cfg).is_err());
}

#[test]
fn concurrent_seeds_match_sequential_seeds() {
    let dir = tempfile::tempdir().unwrap();
    for policy in [PolicyName::Least, PolicyName::Emrqn] {
        let seq = ExperimentConfig {
            policy,
            seeds: vec![1, 2, 3],
            workers: 1,
            ..quick(&dir.path().join("seq"))
        };
        let par = ExperimentConfig {
            workers: 3,
            out: dir.path().join("par"),
            ..seq.clone()
        };
        cmd_run(&seq).unwrap();
        cmd_run(&par).unwrap();
    }
    let (a, b) = (snapshot(&dir.path().join("seq")), snapshot(&dir.path().join("par")));
    let strip = |m: BTreeMap<PathBuf, Vec<u8>>| -> BTreeMap<PathBuf, Vec<u8>> {
        m.into_iter().filter(|(p, _)| !p.ends_with("config.txt")).collect()
    };
    let (a, b) = (strip(a), strip(b));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (path, bytes) in &a {
        assert!(bytes == &b[path], "{} differs", path.display());
    }
}
