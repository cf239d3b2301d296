//! Recurrent Q-network agent with an external similarity memory.
//!
//! Greedy selection evaluates, for every candidate, the two joint actions
//! that differ from the network's greedy action only in that candidate, and
//! corrects each with the similarity-weighted neighbor values of the memory.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::config::{AgentConfig, QexMode};
use super::encode::EncodedState;
use super::learner::{greedy_bootstrap, Learner};
use super::memory::{modify_q, similarity_from_distance_sq, ExternalMemory, MemoryKey, Neighbor};
use super::network::{QNetwork, QOutput, RecurrentQNetwork, Window};
use super::select::random_action;
use crate::env::{CacheEnv, SlotOutcome};
use crate::error::Result;
use crate::policy::{Policy, StepInfo};
use crate::scalar::Scalar;
use rand::Rng;

pub const KIND: &str = "emrqn";

#[derive(Debug, Clone)]
pub struct EmrqnAgent<S: Scalar> {
    pub learner: Learner<S, RecurrentQNetwork<S>>,
    pub memory: ExternalMemory<S>,
    catalog_size: usize,
    pending_max_q: f64,
    last_epsilon: f64,
}

/// Per-candidate values of the two hypotheses, raw and corrected.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypotheses {
    pub raw: Vec<[f64; 2]>,
    pub corrected: Vec<[f64; 2]>,
}

impl Hypotheses {
    /// Argmax of the corrected values; exact ties fall back to the raw
    /// values, and remaining ties retain.
    pub fn decide(&self) -> Vec<bool> {
        self.raw
            .iter()
            .zip(&self.corrected)
            .map(|(r, c)| if c[0] != c[1] { c[1] > c[0] } else { r[1] >= r[0] })
            .collect()
    }
}

impl<S: Scalar> EmrqnAgent<S> {
    pub fn new(config: AgentConfig, catalog_size: usize, horizon: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let (lstm_hidden, hidden, window) = (config.lstm_hidden, config.hidden, config.window);
        let memory = ExternalMemory::new(catalog_size, config.memory_capacity);
        Ok(EmrqnAgent {
            learner: Learner::new(config, catalog_size, horizon, seed, |rng| {
                RecurrentQNetwork::new(lstm_hidden, hidden, window, rng)
            }),
            memory,
            catalog_size,
            pending_max_q: 0.0,
            last_epsilon: 1.0,
        })
    }

    pub fn set_learning(&mut self, learning: bool) {
        self.learner.set_learning(learning);
    }

    pub fn save(&self) -> Vec<u8> {
        let meta = BTreeMap::from([("memory_records".to_string(), self.memory.len().to_string())]);
        self.learner.to_checkpoint(KIND, meta, &self.memory.to_bytes())
    }

    /// Restores parameters and memory records. Stored windows are not part
    /// of a checkpoint, so re-evaluation falls back to stored values for
    /// restored records.
    pub fn load(&mut self, bytes: &[u8]) -> Result<()> {
        let ckpt = self.learner.load_checkpoint(KIND, bytes)?;
        let memory = ExternalMemory::from_bytes(&ckpt.payload)?;
        if memory.catalog_size() != self.catalog_size {
            return Err(crate::Error::Checkpoint(format!(
                "memory was recorded for catalog size {}, not {}",
                memory.catalog_size(),
                self.catalog_size
            )));
        }
        self.memory = memory;
        Ok(())
    }

    /// Raw and memory-corrected values of every candidate's two hypotheses.
    pub fn hypotheses(&self, q: &QOutput<S>, state: &EncodedState<S>) -> Hypotheses {
        let n = q.len();
        let base = q.greedy();
        let base_joint = q.joint(&base).as_f64();
        let pair = |i: usize, h: usize| q.pairs[i][h].as_f64();
        let raw: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let b = pair(i, base[i] as usize);
                [0, 1].map(|h| base_joint + (pair(i, h) - b) / n as f64)
            })
            .collect();
        let k = self.learner.config.knn_k;
        if self.memory.is_empty() || k == 0 || n == 0 {
            return Hypotheses {
                corrected: raw.clone(),
                raw,
            };
        }
        let key = MemoryKey::from_encoded(self.catalog_size, state, &base);
        // A hypothesis changes each distance by at most one indicator, so a
        // doubled pool around the greedy action covers its neighborhoods.
        let pool = self.memory.nearest(&key, 2 * k);
        let reeval = ReevalCache::build(self, &pool, state, &base);
        let mut corrected = raw.clone();
        let mut scored: Vec<(u32, usize)> = Vec::with_capacity(pool.len());
        for i in 0..n {
            let c = state.candidates[i];
            let cached = state.row(i)[2] > S::zero();
            let requested = state.row(i)[3] > S::zero();
            for h in [false, true] {
                scored.clear();
                for (p, nb) in pool.iter().enumerate() {
                    let bits = self.memory.bits(nb.slot, c);
                    let overlap = (cached && bits.cached) as u32 + (requested && bits.requested) as u32;
                    let before = overlap * (base[i] != bits.retained) as u32;
                    let after = overlap * (h != bits.retained) as u32;
                    scored.push((nb.distance_sq - before + after, p));
                }
                // Stable: equal distances keep the pool's recency order.
                scored.sort_by_key(|&(d2, _)| d2);
                let neighbors: Vec<(f64, f64)> = scored
                    .iter()
                    .take(k)
                    .map(|&(d2, p)| {
                        let q_ex = match &reeval {
                            Some(cache) => cache.value(p, &pool[p], c, h, base[i]),
                            None => pool[p].stored_max_q,
                        };
                        (similarity_from_distance_sq(d2), q_ex)
                    })
                    .collect();
                corrected[i][h as usize] = modify_q(raw[i][h as usize], &neighbors);
            }
        }
        Hypotheses { raw, corrected }
    }
}

/// Memory-corrected value of the greedy action at a state, used for TD
/// targets when target modification is enabled.
fn corrected_greedy_value<S: Scalar>(memory: &ExternalMemory<S>, k: usize, window: &Window<S>, q: &QOutput<S>) -> S {
    let state = window.last().expect("non-empty window");
    let greedy = q.greedy();
    let raw = q.joint(&greedy).as_f64();
    let key = MemoryKey::from_encoded(memory.catalog_size(), state, &greedy);
    let neighbors: Vec<(f64, f64)> = memory
        .nearest(&key, k)
        .iter()
        .map(|nb| (similarity_from_distance_sq(nb.distance_sq), nb.stored_max_q))
        .collect();
    S::of(modify_q(raw, &neighbors))
}

/// Pairs, candidate index and joint value of one re-evaluated neighbor.
type Reevaluated = (Vec<[f64; 2]>, HashMap<u32, usize>, f64);

/// Network outputs of pooled neighbors whose windows were retained.
struct ReevalCache<S> {
    outputs: Vec<Option<Reevaluated>>,
    _scalar: std::marker::PhantomData<S>,
}

impl<S: Scalar> ReevalCache<S> {
    fn build(agent: &EmrqnAgent<S>, pool: &[Neighbor], state: &EncodedState<S>, base: &[bool]) -> Option<Self> {
        if agent.learner.config.qex_mode != QexMode::Reeval {
            return None;
        }
        let current: HashMap<u32, bool> = state.candidates.iter().zip(base).map(|(c, &b)| (c.0, b)).collect();
        let outputs = pool
            .iter()
            .map(|nb| {
                let window = agent.memory.window(nb.slot)?;
                let q = agent.learner.online.forward(window).ok()?;
                let past = window.last()?;
                let index: HashMap<u32, usize> = past.candidates.iter().enumerate().map(|(j, c)| (c.0, j)).collect();
                // Joint value of the current greedy action mapped onto the past
                // candidates; contents outside the current set keep their
                // recorded indicator.
                let action: Vec<bool> = past
                    .candidates
                    .iter()
                    .map(|c| current.get(&c.0).copied().unwrap_or(agent.memory.bits(nb.slot, *c).retained))
                    .collect();
                let joint = q.joint(&action).as_f64();
                let pairs = q.pairs.iter().map(|p| [p[0].as_f64(), p[1].as_f64()]).collect();
                Some((pairs, index, joint))
            })
            .collect();
        Some(ReevalCache {
            outputs,
            _scalar: std::marker::PhantomData,
        })
    }

    fn value(&self, p: usize, nb: &Neighbor, c: crate::workload::ContentId, h: bool, base: bool) -> f64 {
        match &self.outputs[p] {
            Some((pairs, index, joint)) => match index.get(&c.0) {
                Some(&j) => joint + (pairs[j][h as usize] - pairs[j][base as usize]) / pairs.len() as f64,
                None => *joint,
            },
            None => nb.stored_max_q,
        }
    }
}

impl<S: Scalar> Policy for EmrqnAgent<S> {
    fn name(&self) -> &'static str {
        KIND
    }

    fn begin_episode(&mut self, env: &CacheEnv) -> Result<()> {
        self.learner.begin_episode(env);
        Ok(())
    }

    fn decide(&mut self, _env: &CacheEnv) -> Result<Vec<bool>> {
        let window = self.learner.window();
        let state = self.learner.current()?.clone();
        let q = self.learner.online.forward(&window)?;
        self.pending_max_q = q.max_joint().as_f64();
        let epsilon = self.learner.epsilon();
        self.last_epsilon = epsilon;
        if epsilon > 0.0 && self.learner.explore_rng().gen::<f64>() < epsilon {
            return Ok(random_action(q.len(), self.learner.explore_rng()));
        }
        Ok(self.hypotheses(&q, &state).decide())
    }

    fn observe(&mut self, outcome: &SlotOutcome, env: &CacheEnv, terminal: bool) -> Result<StepInfo> {
        let learning = self.learner.learning();
        if learning {
            let state = self.learner.current()?.clone();
            let key = MemoryKey::from_encoded(self.catalog_size, &state, &outcome.indicators);
            let window = (self.learner.config.qex_mode == QexMode::Reeval)
                .then(|| Arc::from(self.learner.window().into_boxed_slice()));
            self.memory.insert(&key, self.pending_max_q, window);
        }
        let loss = if self.learner.config.modify_targets {
            let (memory, k) = (&self.memory, self.learner.config.knn_k);
            self.learner.observe(env, &outcome.indicators, outcome.reward, terminal, &|w, q| {
                corrected_greedy_value(memory, k, w, q)
            })?
        } else {
            self.learner
                .observe(env, &outcome.indicators, outcome.reward, terminal, &greedy_bootstrap)?
        };
        Ok(StepInfo {
            loss,
            epsilon: Some(self.last_epsilon),
        })
    }
}
