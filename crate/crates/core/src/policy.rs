use crate::env::{CacheEnv, SlotOutcome};
use crate::error::Result;

/// Learning diagnostics reported after each slot.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInfo {
    pub loss: Option<f64>,
    pub epsilon: Option<f64>,
}

/// A cache update policy: maps the current environment state to evict/retain
/// indicators over `env.candidates()`.
pub trait Policy {
    fn name(&self) -> &'static str;

    fn begin_episode(&mut self, _env: &CacheEnv) -> Result<()> {
        Ok(())
    }

    fn decide(&mut self, env: &CacheEnv) -> Result<Vec<bool>>;

    /// Called with the slot outcome and the environment after the step;
    /// `terminal` marks the last slot of the episode.
    fn observe(&mut self, _outcome: &SlotOutcome, _env: &CacheEnv, _terminal: bool) -> Result<StepInfo> {
        Ok(StepInfo::default())
    }

    fn end_episode(&mut self) -> Result<()> {
        Ok(())
    }
}
