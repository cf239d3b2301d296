//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use edgecache::baselines::{Baseline, BaselineKind};
use edgecache::env::{CacheEnv, EmptySlotMode, EnvConfig, RewardWeights, SlotOutcome};
use edgecache::grad::{Dense, LstmCell, Parameters};
use edgecache::policy::Policy;
use edgecache::rng::SimRng;
use edgecache::workload::{build_catalog, random_contents, sample_slot_requests, ContentId, RequestBatch, RequestCountLaw};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ids(v: &[u32]) -> Vec<ContentId> {
    v.iter().copied().map(ContentId).collect()
}

/// ‖a − b‖ / (‖a‖ + ‖b‖), 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        0.0
    } else {
        diff / norm
    }
}

fn uniform_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

const STEP: f64 = 1e-6;

/// Central-difference gradient of `f` at `x`, perturbing each entry in place.
fn numeric_grad(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let keep = x[i];
            x[i] = keep + STEP;
            let up = f(x);
            x[i] = keep - STEP;
            let down = f(x);
            x[i] = keep;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

/// Worst relative error of a dense layer's parameter and input gradients
/// for the loss `Σ w·(W x + b)` at a random instance.
pub fn dense_gradient_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n_in, n_out) = (r.gen_range(1..8), r.gen_range(1..8));
    let mut layer = Dense::<f64>::kaiming(n_in, n_out, &mut r);
    for p in layer.params_mut() {
        p.values = uniform_vec(p.values.len(), &mut r);
    }
    let x = uniform_vec(n_in, &mut r);
    let w = uniform_vec(n_out, &mut r);
    let loss = |layer: &Dense<f64>, x: &[f64]| {
        let mut y = vec![0.0; n_out];
        layer.forward(x, &mut y).unwrap();
        y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
    };
    layer.zero_grad();
    let mut dx = vec![0.0; n_in];
    layer.backward(&x, &w, Some(&mut dx)).unwrap();

    let mut worst = 0.0f64;
    let mut xs = x.clone();
    let numeric = numeric_grad(&mut xs, |x| loss(&layer, x));
    worst = worst.max(relative_error(&dx, &numeric));
    for k in 0..layer.params().len() {
        let analytic = layer.params()[k].grad.clone();
        let mut values = layer.params()[k].values.clone();
        let mut probe = layer.clone();
        let numeric = numeric_grad(&mut values, |v| {
            probe.params_mut()[k].values.copy_from_slice(v);
            loss(&probe, &x)
        });
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// Worst relative error of an unrolled LSTM's parameter, input and
/// initial-state gradients for the loss `Σ_t w_t · h_t`.
pub fn lstm_gradient_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n_in, n_h, len) = (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..6));
    let mut cell = LstmCell::<f64>::kaiming(n_in, n_h, &mut r);
    for p in cell.params_mut() {
        p.values = uniform_vec(p.values.len(), &mut r);
    }
    let xs: Vec<Vec<f64>> = (0..len).map(|_| uniform_vec(n_in, &mut r)).collect();
    let h0 = uniform_vec(n_h, &mut r);
    let c0 = uniform_vec(n_h, &mut r);
    let ws: Vec<Vec<f64>> = (0..len).map(|_| uniform_vec(n_h, &mut r)).collect();
    let loss = |cell: &LstmCell<f64>, xs: &[Vec<f64>], h0: &[f64], c0: &[f64]| {
        let steps = cell.forward_sequence(xs, h0, c0).unwrap();
        steps
            .iter()
            .zip(&ws)
            .map(|(s, w)| s.h.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
            .sum::<f64>()
    };
    cell.zero_grad();
    let steps = cell.forward_sequence(&xs, &h0, &c0).unwrap();
    let grads = cell.backward_sequence(&steps, &ws).unwrap();

    let mut worst = 0.0f64;
    for k in 0..cell.params().len() {
        let analytic = cell.params()[k].grad.clone();
        let mut values = cell.params()[k].values.clone();
        let mut probe = cell.clone();
        let numeric = numeric_grad(&mut values, |v| {
            probe.params_mut()[k].values.copy_from_slice(v);
            loss(&probe, &xs, &h0, &c0)
        });
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    for t in 0..len {
        let mut xt = xs[t].clone();
        let numeric = numeric_grad(&mut xt, |v| {
            let mut probe = xs.clone();
            probe[t] = v.to_vec();
            loss(&cell, &probe, &h0, &c0)
        });
        worst = worst.max(relative_error(&grads.dx[t], &numeric));
    }
    let mut h = h0.clone();
    let numeric = numeric_grad(&mut h, |v| loss(&cell, &xs, v, &c0));
    worst = worst.max(relative_error(&grads.dh0, &numeric));
    let mut c = c0.clone();
    let numeric = numeric_grad(&mut c, |v| loss(&cell, &xs, &h0, v));
    worst.max(relative_error(&grads.dc0, &numeric))
}

/// Reference LRU over a plain recency list: front = least recently used.
/// Replays requests slot by slot and returns the evicted content per miss.
pub struct ReferenceLru {
    pub order: VecDeque<ContentId>,
    pub capacity: usize,
}

impl ReferenceLru {
    pub fn new(initial: &[ContentId]) -> Self {
        ReferenceLru {
            order: initial.iter().copied().collect(),
            capacity: initial.len(),
        }
    }

    /// Serves one slot: misses evict the least recently used contents not
    /// requested this slot, then every requested content moves to the most
    /// recent end in ascending id order (one slot is one time step, so
    /// same-slot requests tie and the lower id counts as older).
    /// Returns evicted contents in eviction order.
    pub fn slot(&mut self, distinct: &BTreeSet<ContentId>) -> Vec<ContentId> {
        let misses = distinct.iter().filter(|c| !self.order.contains(c)).count();
        let mut evicted = Vec::new();
        while self.order.len() + misses > self.capacity {
            let i = self
                .order
                .iter()
                .position(|x| !distinct.contains(x))
                .expect("capacity exceeds request count");
            evicted.push(self.order.remove(i).unwrap());
        }
        self.order.retain(|c| !distinct.contains(c));
        self.order.extend(distinct.iter().copied());
        evicted
    }
}

/// Reference FIFO over an insertion queue; hits do not reorder it.
pub struct ReferenceFifo {
    pub queue: VecDeque<ContentId>,
    pub capacity: usize,
}

impl ReferenceFifo {
    pub fn new(initial: &[ContentId]) -> Self {
        ReferenceFifo {
            queue: initial.iter().copied().collect(),
            capacity: initial.len(),
        }
    }

    pub fn slot(&mut self, distinct: &BTreeSet<ContentId>) -> Vec<ContentId> {
        let misses: Vec<ContentId> = distinct.iter().filter(|c| !self.queue.contains(c)).copied().collect();
        let mut evicted = Vec::new();
        for c in misses {
            if self.queue.len() == self.capacity {
                // Requests are served before the update, so even a content
                // hit this slot leaves when it is the oldest.
                evicted.push(self.queue.pop_front().unwrap());
            }
            self.queue.push_back(c);
        }
        evicted
    }
}

/// Brute-force scorer of the slot reward, written directly from the
/// definitions: value share of retained, fetched and regretted contents.
pub fn brute_force_reward(
    old_cache: &[ContentId],
    new_cache: &[ContentId],
    evicted_last_slot: &[ContentId],
    batch: &RequestBatch,
    eta: f64,
    lambda: f64,
) -> f64 {
    let mut counts: BTreeMap<ContentId, f64> = BTreeMap::new();
    for user in &batch.per_user {
        for c in user {
            *counts.entry(*c).or_default() += 1.0;
        }
    }
    let total: f64 = counts.values().sum();
    let v = |c: &ContentId| if total == 0.0 { 0.0 } else { counts.get(c).copied().unwrap_or(0.0) / total };
    let mut reward = 0.0;
    for c in new_cache {
        if old_cache.contains(c) {
            reward += v(c);
        } else {
            reward += eta * v(c) - lambda * v(c);
        }
    }
    // Contents both evicted last slot and fetched now are charged once.
    for c in evicted_last_slot {
        let fetched = new_cache.contains(c) && !old_cache.contains(c);
        if !fetched {
            reward -= lambda * v(c);
        }
    }
    reward
}

pub fn env_config(catalog: usize, n: usize, users: usize, mode: EmptySlotMode) -> EnvConfig {
    EnvConfig {
        catalog_size: catalog,
        cache_capacity: n,
        users,
        weights: RewardWeights::default(),
        empty_slot_mode: mode,
    }
}

pub struct Rollout {
    pub batches: Vec<RequestBatch>,
    pub caches_before: Vec<Vec<ContentId>>,
    pub outcomes: Vec<SlotOutcome>,
    pub q_before: Vec<Vec<f64>>,
    pub env: CacheEnv,
}

/// Random-action rollout on a Zipf workload.
pub fn rollout(seed: u64, slots: usize, cfg: EnvConfig, zipf: f64, mean: f64) -> Rollout {
    let mut r = rng(seed);
    let catalog = build_catalog(cfg.catalog_size, zipf).unwrap();
    let law = RequestCountLaw::Poisson { mean };
    let batches: Vec<RequestBatch> = (0..=slots as u64)
        .map(|t| sample_slot_requests(&catalog, cfg.users, cfg.cache_capacity, law, t, &mut r))
        .collect();
    let mut env = CacheEnv::new(cfg.clone()).unwrap();
    env.reset(random_contents(cfg.catalog_size, cfg.cache_capacity, &mut r), batches[0].clone())
        .unwrap();
    let retain_p: f64 = r.gen_range(0.0..1.0);
    let mut out = Rollout {
        batches: batches.clone(),
        caches_before: vec![],
        outcomes: vec![],
        q_before: vec![],
        env: env.clone(),
    };
    for t in 0..slots {
        let indicators: Vec<bool> = env.candidates().iter().map(|_| r.gen_bool(retain_p)).collect();
        out.caches_before.push(env.cache().to_vec());
        out.q_before.push(env.ledger().q_values().to_vec());
        out.outcomes.push(env.step(&indicators, batches[t + 1].clone()).unwrap());
    }
    out.env = env;
    out
}

pub const DESK_CATALOG: usize = 500;
pub const DESK_N: usize = 50;
pub const DESK_USERS: usize = 20;

/// Initial cache and `slots + 1` batches on the desk-scale Zipf 1.2 workload.
pub fn baseline_trace(seed: u64, slots: usize) -> (Vec<ContentId>, Vec<RequestBatch>) {
    let catalog = build_catalog(DESK_CATALOG, 1.2).unwrap();
    let mut r = rng(seed);
    let batches = (0..=slots as u64)
        .map(|t| sample_slot_requests(&catalog, DESK_USERS, DESK_N, RequestCountLaw::Poisson { mean: 1.0 }, t, &mut r))
        .collect();
    (random_contents(DESK_CATALOG, DESK_N, &mut r), batches)
}

/// Evicted set per slot when `kind` drives the desk-scale environment.
pub fn env_evictions(kind: BaselineKind, initial: &[ContentId], batches: &[RequestBatch]) -> Vec<BTreeSet<ContentId>> {
    let mut env = CacheEnv::new(env_config(DESK_CATALOG, DESK_N, DESK_USERS, EmptySlotMode::Agent)).unwrap();
    env.reset(initial.to_vec(), batches[0].clone()).unwrap();
    let mut policy = Baseline::new(kind, SimRng::seed_from_u64(0));
    policy.begin_episode(&env).unwrap();
    let mut out = Vec::new();
    for t in 0..batches.len() - 1 {
        let ind = policy.decide(&env).unwrap();
        let o = env.step(&ind, batches[t + 1].clone()).unwrap();
        policy.observe(&o, &env, false).unwrap();
        out.push(o.evicted);
    }
    out
}
