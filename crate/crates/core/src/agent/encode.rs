//! Network input encoding of a system state.
//!
//! Layout version 1, one row per candidate (cache order, then fetched
//! contents ascending), `FEATURES` columns:
//!
//! | col | feature                                                     |
//! |-----|-------------------------------------------------------------|
//! | 0   | `q_o` divided by the number of elapsed slots (request rate) |
//! | 1   | `δ_o` of the previous slot                                  |
//! | 2   | 1 if cached                                                 |
//! | 3   | 1 if requested this slot                                    |
//! | 4   | `c_o / K`                                                   |
//! | 5   | slots since last request / horizon, clamped to 1            |
//!
//! Rows past the candidate count up to `c_max` are zero and masked out; they
//! are not materialised.

use crate::env::CacheEnv;
use crate::scalar::Scalar;
use crate::workload::ContentId;

pub const LAYOUT_VERSION: u32 = 1;
pub const FEATURES: usize = 6;
/// Length of the pooled per-slot summary fed to the recurrent trunk:
/// mean cached row, mean requested row, requested-row share, hit share.
pub const SUMMARY: usize = 2 * FEATURES + 2;

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedState<S> {
    pub candidates: Vec<ContentId>,
    /// `candidates.len() × FEATURES`, row-major.
    pub rows: Vec<S>,
    pub summary: Vec<S>,
    /// Padded row count `N + K · max requests per user`.
    pub c_max: usize,
}

impl<S: Scalar> EncodedState<S> {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.rows[i * FEATURES..(i + 1) * FEATURES]
    }

    /// Zero-padded `c_max × FEATURES` matrix and its validity mask.
    pub fn padded(&self) -> (Vec<S>, Vec<bool>) {
        let mut rows = vec![S::zero(); self.c_max * FEATURES];
        rows[..self.rows.len()].copy_from_slice(&self.rows);
        let mask = (0..self.c_max).map(|i| i < self.len()).collect();
        (rows, mask)
    }
}

/// Per-episode request recency needed by feature 5.
#[derive(Debug, Clone)]
pub struct FeatureTracker {
    last_request: Vec<Option<u64>>,
    horizon: f64,
}

impl FeatureTracker {
    pub fn new(catalog_size: usize, horizon: usize) -> Self {
        FeatureTracker {
            last_request: vec![None; catalog_size],
            horizon: horizon.max(1) as f64,
        }
    }

    pub fn reset(&mut self) {
        self.last_request.iter_mut().for_each(|v| *v = None);
    }

    /// Encodes the environment's current state, first recording the current
    /// slot's requests.
    pub fn encode<S: Scalar>(&mut self, env: &CacheEnv) -> EncodedState<S> {
        let slot = env.slot();
        let requests = env.requests();
        for c in &requests.distinct {
            self.last_request[c.index()] = Some(slot);
        }
        let cfg = env.config();
        let ledger = env.ledger();
        let candidates = env.candidates();
        let elapsed = slot.max(1) as f64;
        let users = cfg.users as f64;
        let mut rows = Vec::with_capacity(candidates.len() * FEATURES);
        let cache_len = env.cache().len();
        for (i, &c) in candidates.iter().enumerate() {
            let count = requests.count(c);
            let since = match self.last_request[c.index()] {
                Some(t) => ((slot - t) as f64 / self.horizon).min(1.0),
                None => 1.0,
            };
            rows.extend([
                S::of(ledger.q(c) / elapsed),
                S::of(ledger.last_delta(c)),
                if i < cache_len { S::one() } else { S::zero() },
                if count > 0 { S::one() } else { S::zero() },
                S::of(count as f64 / users),
                S::of(since),
            ]);
        }
        let summary = summarize(&rows, cache_len, candidates.len());
        EncodedState {
            candidates,
            rows,
            summary,
            c_max: cfg.cache_capacity + cfg.users * cfg.cache_capacity,
        }
    }
}

fn summarize<S: Scalar>(rows: &[S], cache_len: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); SUMMARY];
    let mut requested = 0usize;
    let mut hit = 0usize;
    for i in 0..n {
        let row = &rows[i * FEATURES..(i + 1) * FEATURES];
        if i < cache_len {
            for k in 0..FEATURES {
                out[k] += row[k];
            }
        }
        if row[3] > S::zero() {
            requested += 1;
            if i < cache_len {
                hit += 1;
            }
            for k in 0..FEATURES {
                out[FEATURES + k] += row[k];
            }
        }
    }
    let cached = S::of(cache_len.max(1) as f64);
    for v in &mut out[..FEATURES] {
        *v /= cached;
    }
    if requested > 0 {
        let r = S::of(requested as f64);
        for v in &mut out[FEATURES..2 * FEATURES] {
            *v /= r;
        }
        out[2 * FEATURES + 1] = S::of(hit as f64) / r;
    }
    out[2 * FEATURES] = S::of(requested as f64 / cache_len.max(1) as f64);
    out
}
