//! Experiment orchestration: episode loops over seeds, evaluation,
//! checkpoints, comparisons and the files they emit.

pub mod config;
pub mod metrics;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

pub use config::{ExperimentConfig, PolicyName};
pub use metrics::{MetricsRow, Summary};

use crate::agent::{DqnAgent, EmrqnAgent};
use crate::baselines::{Baseline, BaselineKind};
use crate::env::{CacheEnv, SlotOutcome};
use crate::episode::{run_episode, EpisodeReport};
use crate::error::{Error, Result};
use crate::policy::{Policy, StepInfo};
use crate::rng::{stream, stream_rng};
use crate::workload::{build_catalog, generate_trace, random_contents, sample_slot_requests, Catalog, ContentId, RequestBatch, Trace};

/// Any runnable policy behind one type.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum AnyPolicy {
    Baseline(Baseline),
    Dqn(Box<DqnAgent<f32>>),
    Emrqn(Box<EmrqnAgent<f32>>),
}

impl AnyPolicy {
    pub fn build(name: PolicyName, cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let baseline = |kind| AnyPolicy::Baseline(Baseline::new(kind, stream_rng(seed, stream::POLICY, 0)));
        let (n, t) = (cfg.catalog_size, cfg.steps_per_episode);
        Ok(match name {
            PolicyName::Lru => baseline(BaselineKind::Lru),
            PolicyName::Fifo => baseline(BaselineKind::Fifo),
            PolicyName::Least => baseline(BaselineKind::LeastRequested),
            PolicyName::Random => baseline(BaselineKind::Random),
            PolicyName::Threshold => baseline(BaselineKind::Threshold),
            PolicyName::Dqn => AnyPolicy::Dqn(Box::new(DqnAgent::new(cfg.agent_config(name), n, t, seed)?)),
            PolicyName::Emrqn => AnyPolicy::Emrqn(Box::new(EmrqnAgent::new(cfg.agent_config(name), n, t, seed)?)),
        })
    }

    fn inner(&mut self) -> &mut dyn Policy {
        match self {
            AnyPolicy::Baseline(p) => p,
            AnyPolicy::Dqn(p) => p.as_mut(),
            AnyPolicy::Emrqn(p) => p.as_mut(),
        }
    }

    /// Freezes or unfreezes a learning agent; baselines ignore it.
    pub fn set_learning(&mut self, learning: bool) {
        match self {
            AnyPolicy::Baseline(_) => {}
            AnyPolicy::Dqn(p) => p.set_learning(learning),
            AnyPolicy::Emrqn(p) => p.set_learning(learning),
        }
    }

    pub fn save(&self) -> Option<Vec<u8>> {
        match self {
            AnyPolicy::Baseline(_) => None,
            AnyPolicy::Dqn(p) => Some(p.save()),
            AnyPolicy::Emrqn(p) => Some(p.save()),
        }
    }

    pub fn load(&mut self, bytes: &[u8]) -> Result<()> {
        match self {
            AnyPolicy::Baseline(_) => Err(Error::InvalidArgument("baseline policies have no checkpoint".into())),
            AnyPolicy::Dqn(p) => p.load(bytes),
            AnyPolicy::Emrqn(p) => p.load(bytes),
        }
    }
}

impl Policy for AnyPolicy {
    fn name(&self) -> &'static str {
        match self {
            AnyPolicy::Baseline(p) => p.name(),
            AnyPolicy::Dqn(p) => p.name(),
            AnyPolicy::Emrqn(p) => p.name(),
        }
    }

    fn begin_episode(&mut self, env: &CacheEnv) -> Result<()> {
        self.inner().begin_episode(env)
    }

    fn decide(&mut self, env: &CacheEnv) -> Result<Vec<bool>> {
        self.inner().decide(env)
    }

    fn observe(&mut self, outcome: &SlotOutcome, env: &CacheEnv, terminal: bool) -> Result<StepInfo> {
        self.inner().observe(outcome, env, terminal)
    }

    fn end_episode(&mut self) -> Result<()> {
        self.inner().end_episode()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Produces each episode's initial cache and request batches.
#[derive(Debug, Clone)]
pub struct EpisodeSource {
    catalog: Catalog,
    trace: Option<Arc<Trace>>,
    cfg: ExperimentConfig,
}

impl EpisodeSource {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let catalog = build_catalog(cfg.catalog_size, cfg.zipf)?;
        let trace = match &cfg.trace {
            Some(path) => {
                let trace = Trace::read(path)?;
                let h = &trace.header;
                if h.catalog_size != cfg.catalog_size || h.users != cfg.users {
                    return Err(Error::Config(format!(
                        "trace {} was generated for catalog_size={} users={}, config has {} and {}",
                        path.display(),
                        h.catalog_size,
                        h.users,
                        cfg.catalog_size,
                        cfg.users
                    )));
                }
                if trace.batches.len() < cfg.steps_per_episode + 1 {
                    return Err(Error::Config(format!(
                        "trace {} has {} slots, an episode needs {}",
                        path.display(),
                        trace.batches.len(),
                        cfg.steps_per_episode + 1
                    )));
                }
                Some(Arc::new(trace))
            }
            None => None,
        };
        Ok(EpisodeSource {
            catalog,
            trace,
            cfg: cfg.clone(),
        })
    }

    pub fn episode(&self, seed: u64, phase: Phase, episode: usize) -> (Vec<ContentId>, Vec<RequestBatch>) {
        let t = self.cfg.steps_per_episode;
        let (trace_tag, init_tag) = match phase {
            Phase::Train => (stream::TRACE, stream::ENV_INIT),
            Phase::Eval => (stream::EVAL_TRACE, stream::ENV_INIT + 0x100),
        };
        let initial = random_contents(
            self.cfg.catalog_size,
            self.cfg.cache_capacity,
            &mut stream_rng(seed, init_tag, episode as u64),
        );
        let batches = match &self.trace {
            Some(trace) => {
                // Episodes walk through the trace in consecutive windows.
                let span = trace.batches.len() - t;
                let start = (episode * t) % span;
                trace.batches[start..start + t + 1].to_vec()
            }
            None => {
                let mut rng = stream_rng(seed, trace_tag, episode as u64);
                (0..=t as u64)
                    .map(|slot| {
                        sample_slot_requests(
                            &self.catalog,
                            self.cfg.users,
                            self.cfg.cache_capacity,
                            self.cfg.request_law,
                            slot,
                            &mut rng,
                        )
                    })
                    .collect()
            }
        };
        (initial, batches)
    }
}

/// Aggregates of one phase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseStats {
    pub episodes: usize,
    pub mean_rewards: Vec<f64>,
    pub average_returns: Vec<f64>,
    pub hit_requests: u64,
    pub total_requests: u64,
}

impl PhaseStats {
    fn push(&mut self, report: &EpisodeReport) {
        self.episodes += 1;
        self.mean_rewards.push(report.mean_reward());
        self.average_returns.push(report.average_return);
        self.hit_requests += report.hit_requests;
        self.total_requests += report.total_requests;
    }

    pub fn hit_rate(&self) -> f64 {
        if self.total_requests == 0 {
            0.0
        } else {
            self.hit_requests as f64 / self.total_requests as f64
        }
    }

    pub fn mean_reward(&self) -> f64 {
        metrics::mean_std(&self.mean_rewards).0
    }

    pub fn average_return(&self) -> f64 {
        metrics::mean_std(&self.average_returns).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Train (if the policy learns) and then evaluate.
    Run,
    /// Train only, checkpointing after every episode.
    Train,
    /// Load a checkpoint and evaluate.
    Evaluate,
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub train: PhaseStats,
    pub eval: PhaseStats,
    pub summary: Summary,
}

/// Line-buffered output file, or nothing.
struct Sink(Option<BufWriter<File>>, PathBuf);

impl Sink {
    fn open(dir: Option<&Path>, name: &str, header: &str) -> Result<Self> {
        let Some(dir) = dir else {
            return Ok(Sink(None, PathBuf::new()));
        };
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut sink = Sink(Some(BufWriter::new(file)), path);
        sink.write(&format!("{header}\n"))?;
        Ok(sink)
    }

    fn write(&mut self, text: &str) -> Result<()> {
        if let Some(w) = &mut self.0 {
            w.write_all(text.as_bytes()).map_err(|e| Error::io(&self.1, e))?;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        if let Some(mut w) = self.0 {
            w.flush().map_err(|e| Error::io(&self.1, e))?;
        }
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary file so a crash never leaves a torn checkpoint.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write_file(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn seed_dir(root: &Path, policy: PolicyName, seed: u64) -> PathBuf {
    root.join(policy.as_str()).join(format!("seed-{seed}"))
}

fn run_phase(
    cfg: &ExperimentConfig,
    source: &EpisodeSource,
    policy: &mut AnyPolicy,
    seed: u64,
    phase: Phase,
    dir: Option<&Path>,
    checkpoint: bool,
) -> Result<PhaseStats> {
    let (episodes, metrics_name, episodes_name) = match phase {
        Phase::Train => (cfg.episodes, "metrics.csv", "episodes.csv"),
        Phase::Eval => (cfg.eval_episodes, "eval.csv", "eval-episodes.csv"),
    };
    let mut steps = Sink::open(dir, metrics_name, metrics::STEP_HEADER)?;
    let mut per_episode = Sink::open(dir, episodes_name, metrics::EPISODE_HEADER)?;
    let mut env = CacheEnv::new(cfg.env_config())?;
    let mut stats = PhaseStats::default();
    let mut rows = String::new();
    for e in 0..episodes {
        let (initial, batches) = source.episode(seed, phase, e);
        let report = run_episode(&mut env, policy, initial, batches, cfg.steps_per_episode, cfg.agent.gamma)
            .map_err(|err| match err {
                Error::Training(m) => Error::Training(format!(
                    "{} seed {seed} {phase:?} episode {e}: {m}",
                    policy.name()
                )),
                other => other,
            })?;
        rows.clear();
        metrics::push_episode_rows(&mut rows, e, &report, cfg.agent.gamma, cfg.zipf);
        steps.write(&rows)?;
        per_episode.write(&metrics::episode_row(e, &report))?;
        stats.push(&report);
        if checkpoint {
            if let (Some(dir), Some(bytes)) = (dir, policy.save()) {
                write_atomic(&dir.join("checkpoint.bin"), &bytes)?;
            }
        }
    }
    steps.finish()?;
    per_episode.finish()?;
    Ok(stats)
}

/// Runs one seed of `policy`; writes its files under `dir` when given.
pub fn run_seed(cfg: &ExperimentConfig, policy_name: PolicyName, seed: u64, mode: Mode, dir: Option<&Path>) -> Result<SeedResult> {
    let source = EpisodeSource::new(cfg)?;
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut policy = AnyPolicy::build(policy_name, cfg, seed)?;
    let mut train = PhaseStats::default();
    let mut eval = PhaseStats::default();
    if mode == Mode::Evaluate {
        if !policy_name.learns() {
            return Err(Error::InvalidArgument(format!(
                "evaluate needs a learning policy (dqn or emrqn), not {policy_name}"
            )));
        }
        let path = match (&cfg.checkpoint, dir) {
            (Some(p), _) => p.clone(),
            (None, Some(dir)) => dir.join("checkpoint.bin"),
            (None, None) => return Err(Error::InvalidArgument("no checkpoint to evaluate".into())),
        };
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        policy
            .load(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    } else if policy_name.learns() {
        train = run_phase(cfg, &source, &mut policy, seed, Phase::Train, dir, mode == Mode::Train)?;
    }
    if mode != Mode::Train {
        policy.set_learning(false);
        eval = run_phase(cfg, &source, &mut policy, seed, Phase::Eval, dir, false)?;
    }
    let mut summary = Summary::default();
    summary.put("policy", policy_name);
    summary.put("seed", seed);
    summary.put("zipf", cfg.zipf);
    summary.put("cache_capacity", cfg.cache_capacity);
    summary.put("train_episodes", train.episodes);
    summary.put("train_hit_rate", train.hit_rate());
    summary.put("train_mean_reward", train.mean_reward());
    summary.put("train_average_return", train.average_return());
    summary.put("eval_episodes", eval.episodes);
    summary.put("eval_hit_requests", eval.hit_requests);
    summary.put("eval_total_requests", eval.total_requests);
    summary.put("hit_rate", eval.hit_rate());
    summary.put("mean_reward", eval.mean_reward());
    summary.put("average_return", eval.average_return());
    if let Some(dir) = dir {
        write_file(&dir.join("summary.txt"), summary.to_text().as_bytes())?;
    }
    Ok(SeedResult {
        seed,
        train,
        eval,
        summary,
    })
}

/// Runs independent jobs on up to `workers` threads; results keep job order.
pub fn run_parallel<T: Send, J: Sync>(jobs: &[J], workers: usize, f: impl Fn(&J) -> Result<T> + Sync) -> Result<Vec<T>> {
    let workers = match workers {
        0 => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        n => n,
    }
    .min(jobs.len())
    .max(1);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let out = f(&jobs[i]);
                let failed = out.is_err();
                slots.lock().expect("worker panicked")[i] = Some(out);
                if failed {
                    next.store(jobs.len(), Ordering::Relaxed);
                }
            });
        }
    });
    let mut results = Vec::with_capacity(jobs.len());
    for slot in slots.into_inner().expect("worker panicked") {
        match slot {
            Some(r) => results.push(r?),
            None => break,
        }
    }
    Ok(results)
}

/// All seeds of one policy.
pub fn run_seeds(cfg: &ExperimentConfig, policy: PolicyName, mode: Mode, root: Option<&Path>) -> Result<Vec<SeedResult>> {
    run_parallel(&cfg.seeds, cfg.workers, |&seed| {
        let dir = root.map(|r| seed_dir(r, policy, seed));
        run_seed(cfg, policy, seed, mode, dir.as_deref())
    })
}

/// Mean ± std over seeds.
pub fn aggregate(policy: PolicyName, results: &[SeedResult]) -> Summary {
    let mut s = Summary::default();
    s.put("policy", policy);
    s.put(
        "seeds",
        results.iter().map(|r| r.seed.to_string()).collect::<Vec<_>>().join(","),
    );
    let column = |f: &dyn Fn(&SeedResult) -> f64| results.iter().map(f).collect::<Vec<f64>>();
    let stats: [(&str, Vec<f64>); 5] = [
        ("hit_rate", column(&|r| r.eval.hit_rate())),
        ("mean_reward", column(&|r| r.eval.mean_reward())),
        ("average_return", column(&|r| r.eval.average_return())),
        ("train_hit_rate", column(&|r| r.train.hit_rate())),
        ("train_average_return", column(&|r| r.train.average_return())),
    ];
    for (name, values) in stats {
        let (mean, std) = metrics::mean_std(&values);
        s.put(format!("{name}_mean"), mean);
        s.put(format!("{name}_std"), std);
    }
    for r in results {
        s.put(format!("hit_rate.seed{}", r.seed), r.eval.hit_rate());
    }
    s
}

fn prepare_out(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))
}

/// Writes a trace for the first configured seed; returns its path.
pub fn cmd_generate_trace(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    prepare_out(cfg)?;
    let catalog = build_catalog(cfg.catalog_size, cfg.zipf)?;
    let seed = cfg.seeds[0];
    let trace = generate_trace(&catalog, cfg.users, cfg.cache_capacity, cfg.request_law, cfg.trace_slots, seed);
    let path = cfg.out.join(format!("trace-seed-{seed}.csv"));
    trace.write(&path)?;
    Ok(path)
}

fn cmd_policy(cfg: &ExperimentConfig, mode: Mode) -> Result<Summary> {
    cfg.validate()?;
    prepare_out(cfg)?;
    let root = cfg.out.join(cfg.policy.as_str());
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    write_file(&root.join("config.txt"), cfg.to_text().as_bytes())?;
    let results = run_seeds(cfg, cfg.policy, mode, Some(&cfg.out))?;
    let summary = aggregate(cfg.policy, &results);
    write_file(&root.join("summary.txt"), summary.to_text().as_bytes())?;
    Ok(summary)
}

/// Trains (for learning policies) and evaluates every seed.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Summary> {
    cmd_policy(cfg, Mode::Run)
}

/// Trains every seed, checkpointing after each episode.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Summary> {
    if !cfg.policy.learns() {
        return Err(Error::InvalidArgument(format!(
            "train needs a learning policy (dqn or emrqn), not {}",
            cfg.policy
        )));
    }
    cmd_policy(cfg, Mode::Train)
}

/// Evaluates checkpoints with a frozen policy.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<Summary> {
    cmd_policy(cfg, Mode::Evaluate)
}

pub const COMPARE_HEADER: &str =
    "policy,cache_size,zipf,hit_rate_mean,hit_rate_std,mean_reward_mean,mean_reward_std,average_return_mean,average_return_std,seeds";

/// One cell of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareCell {
    pub policy: PolicyName,
    pub cache_size: usize,
    pub zipf: f64,
    pub hit_rates: Vec<f64>,
    pub mean_rewards: Vec<f64>,
    pub average_returns: Vec<f64>,
}

impl CompareCell {
    pub fn hit_rate_mean(&self) -> f64 {
        metrics::mean_std(&self.hit_rates).0
    }

    fn to_csv(&self) -> String {
        let (h, hs) = metrics::mean_std(&self.hit_rates);
        let (r, rs) = metrics::mean_std(&self.mean_rewards);
        let (g, gs) = metrics::mean_std(&self.average_returns);
        format!(
            "{},{},{},{h},{hs},{r},{rs},{g},{gs},{}",
            self.policy,
            self.cache_size,
            self.zipf,
            self.hit_rates.len()
        )
    }
}

/// Hit rate matrix over policies × cache sizes × zipf exponents, without
/// writing per-seed files.
pub fn compare(cfg: &ExperimentConfig) -> Result<Vec<CompareCell>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &zipf in &cfg.zipfs {
        for &cache_size in &cfg.cache_sizes {
            for &policy in &cfg.policies {
                for &seed in &cfg.seeds {
                    jobs.push((policy, cache_size, zipf, seed));
                }
            }
        }
    }
    let results = run_parallel(&jobs, cfg.workers, |&(policy, cache_size, zipf, seed)| {
        let cell_cfg = ExperimentConfig {
            cache_capacity: cache_size,
            zipf,
            policy,
            ..cfg.clone()
        };
        run_seed(&cell_cfg, policy, seed, Mode::Run, None)
    })?;
    let mut cells: Vec<CompareCell> = Vec::new();
    for (&(policy, cache_size, zipf, _), r) in jobs.iter().zip(&results) {
        let cell = match cells.last_mut() {
            Some(c) if c.policy == policy && c.cache_size == cache_size && c.zipf == zipf => c,
            _ => {
                cells.push(CompareCell {
                    policy,
                    cache_size,
                    zipf,
                    hit_rates: Vec::new(),
                    mean_rewards: Vec::new(),
                    average_returns: Vec::new(),
                });
                cells.last_mut().expect("just pushed")
            }
        };
        cell.hit_rates.push(r.eval.hit_rate());
        cell.mean_rewards.push(r.eval.mean_reward());
        cell.average_returns.push(r.eval.average_return());
    }
    Ok(cells)
}

/// Runs [`compare`] and writes `compare.csv`; returns its path.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<PathBuf> {
    if cfg.policies.len() < 2 {
        return Err(Error::Config("compare needs at least two policies".into()));
    }
    prepare_out(cfg)?;
    let cells = compare(cfg)?;
    let mut text = format!("{COMPARE_HEADER}\n");
    for c in &cells {
        text.push_str(&c.to_csv());
        text.push('\n');
    }
    let path = cfg.out.join("compare.csv");
    write_file(&path, text.as_bytes())?;
    write_file(&cfg.out.join("compare-config.txt"), cfg.to_text().as_bytes())?;
    Ok(path)
}
