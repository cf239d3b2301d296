//! Fixed-length episode loop shared by every policy.

use crate::env::CacheEnv;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::workload::{ContentId, RequestBatch};

/// What happened in one slot of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub slot: u64,
    pub reward: f64,
    pub epsilon: Option<f64>,
    pub loss: Option<f64>,
    pub hit_requests: u64,
    pub total_requests: u64,
    pub cache_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub steps: Vec<StepRecord>,
    /// Discounted return from every slot.
    pub returns: Vec<f64>,
    /// Mean of `returns`.
    pub average_return: f64,
    pub hit_requests: u64,
    pub total_requests: u64,
}

impl EpisodeReport {
    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.reward)
    }

    pub fn mean_reward(&self) -> f64 {
        self.rewards().sum::<f64>() / self.steps.len().max(1) as f64
    }

    pub fn hit_rate(&self) -> f64 {
        if self.total_requests == 0 {
            0.0
        } else {
            self.hit_requests as f64 / self.total_requests as f64
        }
    }
}

/// `G[t] = R[t] + γ G[t+1]`, computed backwards.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

pub fn average_return(returns: &[f64]) -> f64 {
    if returns.is_empty() {
        0.0
    } else {
        returns.iter().sum::<f64>() / returns.len() as f64
    }
}

/// Resets `env` with `initial_cache` and the first batch, then runs one slot
/// per remaining batch. `batches` must yield `steps + 1` batches.
pub fn run_episode<P: Policy + ?Sized>(
    env: &mut CacheEnv,
    policy: &mut P,
    initial_cache: Vec<ContentId>,
    batches: impl IntoIterator<Item = RequestBatch>,
    steps: usize,
    gamma: f64,
) -> Result<EpisodeReport> {
    if steps == 0 {
        return Err(Error::InvalidArgument("an episode needs at least one step".into()));
    }
    let mut batches = batches.into_iter();
    let mut next_batch = || {
        batches
            .next()
            .ok_or_else(|| Error::InvalidArgument(format!("episode of {steps} steps needs {} request batches", steps + 1)))
    };
    env.reset(initial_cache, next_batch()?)?;
    policy.begin_episode(env)?;
    let mut records = Vec::with_capacity(steps);
    for t in 0..steps {
        let indicators = policy.decide(env)?;
        let outcome = env.step(&indicators, next_batch()?)?;
        let info = policy.observe(&outcome, env, t + 1 == steps)?;
        records.push(StepRecord {
            slot: outcome.slot,
            reward: outcome.reward,
            epsilon: info.epsilon,
            loss: info.loss,
            hit_requests: outcome.hit_requests,
            total_requests: outcome.total_requests,
            cache_size: outcome.cache_after.len(),
        });
    }
    policy.end_episode()?;
    let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
    let returns = discounted_returns(&rewards, gamma);
    let (hit_requests, total_requests) = env.hit_counters();
    Ok(EpisodeReport {
        steps: records,
        average_return: average_return(&returns),
        returns,
        hit_requests,
        total_requests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_step_closed_form() {
        let g = discounted_returns(&[1.0, 1.0], 0.5);
        assert_eq!(g, vec![1.5, 1.0]);
        assert_eq!(average_return(&g), 1.25);
    }

    #[test]
    fn zero_discount_returns_rewards() {
        let r = [0.3, -0.1, 2.0];
        assert_eq!(discounted_returns(&r, 0.0), r.to_vec());
    }

    #[test]
    fn zero_rewards() {
        assert_eq!(average_return(&discounted_returns(&[0.0; 7], 0.999)), 0.0);
    }
}
