//! Flat `key=value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; unknown or repeated keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::agent::{AgentConfig, QexMode};
use crate::env::{EmptySlotMode, EnvConfig, RewardWeights};
use crate::error::{Error, Result};
use crate::workload::RequestCountLaw;

/// Every policy the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolicyName {
    Lru,
    Fifo,
    Least,
    Random,
    Threshold,
    Dqn,
    Emrqn,
}

impl PolicyName {
    pub const ALL: [PolicyName; 7] = [
        PolicyName::Lru,
        PolicyName::Fifo,
        PolicyName::Least,
        PolicyName::Random,
        PolicyName::Threshold,
        PolicyName::Dqn,
        PolicyName::Emrqn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::Lru => "lru",
            PolicyName::Fifo => "fifo",
            PolicyName::Least => "least",
            PolicyName::Random => "random",
            PolicyName::Threshold => "threshold",
            PolicyName::Dqn => "dqn",
            PolicyName::Emrqn => "emrqn",
        }
    }

    pub fn learns(self) -> bool {
        matches!(self, PolicyName::Dqn | PolicyName::Emrqn)
    }
}

impl FromStr for PolicyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown policy `{s}` (expected one of lru, fifo, least, random, threshold, dqn, emrqn)"
                ))
            })
    }
}

impl std::fmt::Display for PolicyName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub catalog_size: usize,
    pub cache_capacity: usize,
    pub users: usize,
    pub zipf: f64,
    pub request_law: RequestCountLaw,
    pub eta: f64,
    pub lambda: f64,
    pub empty_slot_mode: EmptySlotMode,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub policy: PolicyName,
    pub out: PathBuf,
    /// Replay a recorded trace instead of sampling requests.
    pub trace: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Concurrent seed workers; 0 picks the available parallelism.
    pub workers: usize,
    pub cache_sizes: Vec<usize>,
    pub zipfs: Vec<f64>,
    pub policies: Vec<PolicyName>,
    /// Learning rate; `None` uses the agent's own default.
    pub learning_rate: Option<f64>,
    pub agent: AgentConfig,
    /// Trace length written by `generate-trace`.
    pub trace_slots: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            catalog_size: 500,
            cache_capacity: 50,
            users: 20,
            zipf: 1.2,
            request_law: RequestCountLaw::default(),
            eta: RewardWeights::default().eta,
            lambda: RewardWeights::default().lambda,
            empty_slot_mode: EmptySlotMode::default(),
            episodes: 200,
            steps_per_episode: 500,
            eval_episodes: 5,
            seeds: vec![1, 2, 3, 4, 5],
            policy: PolicyName::Lru,
            out: PathBuf::from("out"),
            trace: None,
            checkpoint: None,
            workers: 0,
            cache_sizes: vec![25, 50, 100],
            zipfs: vec![1.5, 0.8],
            policies: vec![
                PolicyName::Lru,
                PolicyName::Fifo,
                PolicyName::Least,
                PolicyName::Dqn,
                PolicyName::Emrqn,
            ],
            learning_rate: None,
            agent: AgentConfig::emrqn(),
            trace_slots: 10_000,
        }
    }
}

/// Recognised keys, in documentation order.
pub const KEYS: &[&str] = &[
    "catalog_size",
    "cache_capacity",
    "users",
    "zipf",
    "request_law",
    "request_mean",
    "request_count",
    "eta",
    "lambda",
    "empty_slot_mode",
    "episodes",
    "steps_per_episode",
    "eval_episodes",
    "seeds",
    "policy",
    "out",
    "trace",
    "checkpoint",
    "workers",
    "cache_sizes",
    "zipfs",
    "policies",
    "trace_slots",
    "learning_rate",
    "weight_decay",
    "gamma",
    "epsilon_tau",
    "epsilon_floor",
    "huber_delta",
    "batch_size",
    "replay_capacity",
    "target_sync",
    "train_every",
    "hidden",
    "lstm_hidden",
    "window",
    "knn_k",
    "memory_capacity",
    "qex_mode",
    "modify_targets",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("{key} must list at least one value")));
    }
    Ok(items)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{value}` for {key} (expected true or false)"))),
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        let mut law = (None::<String>, None::<f64>, None::<usize>);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(parse_err(format!("duplicate key `{key}`")));
            }
            let result = match key {
                "request_law" => {
                    law.0 = Some(value.to_string());
                    Ok(())
                }
                "request_mean" => parse_value(key, value).map(|v| law.1 = Some(v)),
                "request_count" => parse_value(key, value).map(|v| law.2 = Some(v)),
                _ => cfg.set(key, value),
            };
            result.map_err(|e| match e {
                Error::Config(m) => parse_err(m),
                other => other,
            })?;
        }
        cfg.request_law = match (law.0.as_deref().unwrap_or("poisson"), law.1, law.2) {
            ("poisson", mean, None) => RequestCountLaw::Poisson { mean: mean.unwrap_or(1.0) },
            ("fixed", None, count) => RequestCountLaw::Fixed(count.unwrap_or(1)),
            ("poisson", _, Some(_)) => return Err(Error::Config("request_count applies only to request_law=fixed".into())),
            ("fixed", Some(_), _) => return Err(Error::Config("request_mean applies only to request_law=poisson".into())),
            (other, _, _) => {
                return Err(Error::Config(format!(
                    "unknown request_law `{other}` (expected poisson or fixed)"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let a = &mut self.agent;
        match key {
            "catalog_size" => self.catalog_size = parse_value(key, value)?,
            "cache_capacity" => self.cache_capacity = parse_value(key, value)?,
            "users" => self.users = parse_value(key, value)?,
            "zipf" => self.zipf = parse_value(key, value)?,
            "eta" => self.eta = parse_value(key, value)?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "empty_slot_mode" => self.empty_slot_mode = value.parse()?,
            "episodes" => self.episodes = parse_value(key, value)?,
            "steps_per_episode" => self.steps_per_episode = parse_value(key, value)?,
            "eval_episodes" => self.eval_episodes = parse_value(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "policy" => self.policy = value.parse()?,
            "out" => self.out = PathBuf::from(value),
            "trace" => self.trace = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "workers" => self.workers = parse_value(key, value)?,
            "cache_sizes" => self.cache_sizes = parse_list(key, value)?,
            "zipfs" => self.zipfs = parse_list(key, value)?,
            "policies" => self.policies = parse_list(key, value)?,
            "trace_slots" => self.trace_slots = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = Some(parse_value(key, value)?),
            "weight_decay" => a.weight_decay = parse_value(key, value)?,
            "gamma" => a.gamma = parse_value(key, value)?,
            "epsilon_tau" => a.epsilon_tau = parse_value(key, value)?,
            "epsilon_floor" => a.epsilon_floor = parse_value(key, value)?,
            "huber_delta" => a.huber_delta = parse_value(key, value)?,
            "batch_size" => a.batch_size = parse_value(key, value)?,
            "replay_capacity" => a.replay_capacity = parse_value(key, value)?,
            "target_sync" => a.target_sync = parse_value(key, value)?,
            "train_every" => a.train_every = parse_value(key, value)?,
            "hidden" => a.hidden = parse_value(key, value)?,
            "lstm_hidden" => a.lstm_hidden = parse_value(key, value)?,
            "window" => a.window = parse_value(key, value)?,
            "knn_k" => a.knn_k = parse_value(key, value)?,
            "memory_capacity" => a.memory_capacity = parse_value(key, value)?,
            "qex_mode" => a.qex_mode = value.parse::<QexMode>()?,
            "modify_targets" => a.modify_targets = parse_bool(key, value)?,
            "request_law" | "request_mean" | "request_count" => {
                return Err(Error::Config(format!("{key} can only be set from a config file")))
            }
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.env_config().validate()?;
        if !(self.zipf.is_finite() && self.zipf >= 0.0) || self.zipfs.iter().any(|z| !(z.is_finite() && *z >= 0.0)) {
            return Err(Error::Config("zipf exponents must be finite and non-negative".into()));
        }
        if let RequestCountLaw::Poisson { mean } = self.request_law {
            if !(mean.is_finite() && mean >= 0.0) {
                return Err(Error::Config(format!("request_mean must be non-negative, got {mean}")));
            }
        }
        if self.steps_per_episode == 0 {
            return Err(Error::Config("steps_per_episode must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        if self.trace_slots == 0 {
            return Err(Error::Config("trace_slots must be at least 1".into()));
        }
        if let Some(&n) = self.cache_sizes.iter().find(|&&n| n == 0 || n > self.catalog_size) {
            return Err(Error::Config(format!(
                "cache size {n} must lie in 1..={}",
                self.catalog_size
            )));
        }
        for policy in [PolicyName::Dqn, PolicyName::Emrqn] {
            self.agent_config(policy).validate()?;
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            catalog_size: self.catalog_size,
            cache_capacity: self.cache_capacity,
            users: self.users,
            weights: RewardWeights {
                eta: self.eta,
                lambda: self.lambda,
            },
            empty_slot_mode: self.empty_slot_mode,
        }
    }

    /// Agent hyperparameters for `policy`, with its default learning rate
    /// unless one was configured.
    pub fn agent_config(&self, policy: PolicyName) -> AgentConfig {
        let default_lr = match policy {
            PolicyName::Emrqn => AgentConfig::emrqn().learning_rate,
            _ => AgentConfig::dqn().learning_rate,
        };
        AgentConfig {
            learning_rate: self.learning_rate.unwrap_or(default_lr),
            ..self.agent.clone()
        }
    }

    /// The effective configuration as `key=value` lines (round-trips through
    /// [`Self::parse`]).
    pub fn to_text(&self) -> String {
        let a = &self.agent;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("catalog_size", self.catalog_size.to_string());
        put("cache_capacity", self.cache_capacity.to_string());
        put("users", self.users.to_string());
        put("zipf", self.zipf.to_string());
        match self.request_law {
            RequestCountLaw::Poisson { mean } => {
                put("request_law", "poisson".into());
                put("request_mean", mean.to_string());
            }
            RequestCountLaw::Fixed(n) => {
                put("request_law", "fixed".into());
                put("request_count", n.to_string());
            }
        }
        put("eta", self.eta.to_string());
        put("lambda", self.lambda.to_string());
        put("empty_slot_mode", self.empty_slot_mode.as_str().into());
        put("episodes", self.episodes.to_string());
        put("steps_per_episode", self.steps_per_episode.to_string());
        put("eval_episodes", self.eval_episodes.to_string());
        put("seeds", join(&self.seeds));
        put("policy", self.policy.to_string());
        put("out", self.out.display().to_string());
        if let Some(t) = &self.trace {
            put("trace", t.display().to_string());
        }
        if let Some(c) = &self.checkpoint {
            put("checkpoint", c.display().to_string());
        }
        put("workers", self.workers.to_string());
        put("cache_sizes", join(&self.cache_sizes));
        put("zipfs", join(&self.zipfs));
        put("policies", join(&self.policies));
        put("trace_slots", self.trace_slots.to_string());
        if let Some(lr) = self.learning_rate {
            put("learning_rate", lr.to_string());
        }
        put("weight_decay", a.weight_decay.to_string());
        put("gamma", a.gamma.to_string());
        put("epsilon_tau", a.epsilon_tau.to_string());
        put("epsilon_floor", a.epsilon_floor.to_string());
        put("huber_delta", a.huber_delta.to_string());
        put("batch_size", a.batch_size.to_string());
        put("replay_capacity", a.replay_capacity.to_string());
        put("target_sync", a.target_sync.to_string());
        put("train_every", a.train_every.to_string());
        put("hidden", a.hidden.to_string());
        put("lstm_hidden", a.lstm_hidden.to_string());
        put("window", a.window.to_string());
        put("knn_k", a.knn_k.to_string());
        put("memory_capacity", a.memory_capacity.to_string());
        put("qex_mode", a.qex_mode.to_string());
        put("modify_targets", a.modify_targets.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("test.cfg"))
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse("# nothing\n\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.agent.gamma, 0.999);
        assert_eq!(cfg.agent_config(PolicyName::Emrqn).learning_rate, 0.00015);
        assert_eq!(cfg.agent_config(PolicyName::Dqn).learning_rate, 0.0002);
    }

    #[test]
    fn unknown_key_is_fatal() {
        let err = parse("catalog_size=100\ncache_size=5\n").unwrap_err();
        assert!(err.to_string().contains("test.cfg:2"), "{err}");
        assert!(err.to_string().contains("cache_size"), "{err}");
    }

    #[test]
    fn duplicate_key_is_fatal() {
        assert!(parse("users=3\nusers=4\n").is_err());
    }

    #[test]
    fn negative_zipf_rejected() {
        let err = parse("zipf=-0.5\n").unwrap_err();
        assert!(err.to_string().contains("zipf"), "{err}");
    }

    #[test]
    fn lists_and_laws() {
        let cfg = parse("seeds=3, 4,9\npolicies=lru,emrqn\nrequest_law=fixed\nrequest_count=2\nqex_mode=reeval\n").unwrap();
        assert_eq!(cfg.seeds, vec![3, 4, 9]);
        assert_eq!(cfg.policies, vec![PolicyName::Lru, PolicyName::Emrqn]);
        assert_eq!(cfg.request_law, RequestCountLaw::Fixed(2));
        assert_eq!(cfg.agent.qex_mode, QexMode::Reeval);
        assert!(parse("request_mean=2\nrequest_law=fixed\n").is_err());
        assert!(parse("policy=lfu\n").is_err());
    }

    #[test]
    fn text_round_trips() {
        let cfg = parse("users=7\nzipfs=0.5,2\nlearning_rate=0.01\nrequest_mean=2.5\ntrace=a.csv\n").unwrap();
        assert_eq!(parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn every_documented_key_is_accepted() {
        let cfg = ExperimentConfig {
            trace: Some("t".into()),
            checkpoint: Some("c".into()),
            learning_rate: Some(0.1),
            ..Default::default()
        };
        let text = cfg.to_text();
        for key in KEYS {
            if *key == "request_count" {
                continue;
            }
            assert!(text.lines().any(|l| l.starts_with(&format!("{key}="))), "{key}");
        }
    }
}
