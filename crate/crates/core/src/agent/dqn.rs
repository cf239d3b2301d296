//! Feedforward DQN agent.

use std::collections::BTreeMap;

use super::config::AgentConfig;
use super::learner::{greedy_bootstrap, Learner};
use super::network::{MlpQNetwork, QNetwork};
use super::select::select_action;
use crate::env::{CacheEnv, SlotOutcome};
use crate::error::{Error, Result};
use crate::policy::{Policy, StepInfo};
use crate::scalar::Scalar;

pub const KIND: &str = "dqn";

#[derive(Debug, Clone)]
pub struct DqnAgent<S: Scalar> {
    pub learner: Learner<S, MlpQNetwork<S>>,
    last_epsilon: f64,
}

impl<S: Scalar> DqnAgent<S> {
    /// `horizon` scales the recency feature (normally the episode length).
    pub fn new(mut config: AgentConfig, catalog_size: usize, horizon: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        config.window = 1;
        let hidden = config.hidden;
        Ok(DqnAgent {
            learner: Learner::new(config, catalog_size, horizon, seed, |rng| MlpQNetwork::new(hidden, rng)),
            last_epsilon: 1.0,
        })
    }

    pub fn set_learning(&mut self, learning: bool) {
        self.learner.set_learning(learning);
    }

    pub fn save(&self) -> Vec<u8> {
        self.learner.to_checkpoint(KIND, BTreeMap::new(), &[])
    }

    pub fn load(&mut self, bytes: &[u8]) -> Result<()> {
        let ckpt = self.learner.load_checkpoint(KIND, bytes)?;
        if !ckpt.payload.is_empty() {
            return Err(Error::Checkpoint("unexpected payload in a dqn checkpoint".into()));
        }
        Ok(())
    }
}

impl<S: Scalar> Policy for DqnAgent<S> {
    fn name(&self) -> &'static str {
        KIND
    }

    fn begin_episode(&mut self, env: &CacheEnv) -> Result<()> {
        self.learner.begin_episode(env);
        Ok(())
    }

    fn decide(&mut self, _env: &CacheEnv) -> Result<Vec<bool>> {
        let q = self.learner.online.forward(&self.learner.window())?;
        let epsilon = self.learner.epsilon();
        self.last_epsilon = epsilon;
        Ok(select_action(&q, epsilon, self.learner.explore_rng()))
    }

    fn observe(&mut self, outcome: &SlotOutcome, env: &CacheEnv, terminal: bool) -> Result<StepInfo> {
        let loss = self
            .learner
            .observe(env, &outcome.indicators, outcome.reward, terminal, &greedy_bootstrap)?;
        Ok(StepInfo {
            loss,
            epsilon: Some(self.last_epsilon),
        })
    }
}
