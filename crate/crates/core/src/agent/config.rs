use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Where the neighbor value in the memory correction comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QexMode {
    /// The maximum Q-value stored with the record.
    #[default]
    Stored,
    /// The current network re-evaluated on the record's state under the
    /// hypothesised action.
    Reeval,
}

impl FromStr for QexMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stored" => Ok(QexMode::Stored),
            "reeval" => Ok(QexMode::Reeval),
            _ => Err(Error::Config(format!("unknown qex_mode `{s}` (expected stored or reeval)"))),
        }
    }
}

impl fmt::Display for QexMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QexMode::Stored => "stored",
            QexMode::Reeval => "reeval",
        })
    }
}

/// Hyperparameters of the Q-learning agents.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub gamma: f64,
    pub epsilon_tau: f64,
    pub epsilon_floor: f64,
    pub huber_delta: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Hard target-network sync period, in training steps.
    pub target_sync: u64,
    /// Environment steps between training steps.
    pub train_every: u64,
    pub hidden: usize,
    pub lstm_hidden: usize,
    /// Frames seen by the recurrent trunk; 1 for the feedforward agent.
    pub window: usize,
    pub knn_k: usize,
    pub memory_capacity: usize,
    pub qex_mode: QexMode,
    pub modify_targets: bool,
}

impl AgentConfig {
    pub fn dqn() -> Self {
        AgentConfig {
            learning_rate: 0.0002,
            weight_decay: 0.0,
            gamma: 0.999,
            epsilon_tau: 2000.0,
            epsilon_floor: 0.01,
            huber_delta: 1.0,
            batch_size: 8,
            replay_capacity: 100_000,
            target_sync: 200,
            train_every: 1,
            hidden: 16,
            lstm_hidden: 4,
            window: 1,
            knn_k: 32,
            memory_capacity: 80_000,
            qex_mode: QexMode::Stored,
            modify_targets: false,
        }
    }

    pub fn emrqn() -> Self {
        AgentConfig {
            learning_rate: 0.00015,
            window: 8,
            ..Self::dqn()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        positive("epsilon_tau", self.epsilon_tau)?;
        positive("huber_delta", self.huber_delta)?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.epsilon_floor) {
            return Err(Error::Config(format!("epsilon_floor must lie in [0, 1], got {}", self.epsilon_floor)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        for (name, v) in [
            ("batch_size", self.batch_size as u64),
            ("replay_capacity", self.replay_capacity as u64),
            ("target_sync", self.target_sync),
            ("train_every", self.train_every),
            ("hidden", self.hidden as u64),
            ("lstm_hidden", self.lstm_hidden as u64),
            ("window", self.window as u64),
            ("memory_capacity", self.memory_capacity as u64),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}
