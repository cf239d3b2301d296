//! Classical replacement policies expressed as evict/retain indicators.
//!
//! Each baseline admits every missed content and evicts as many cached
//! contents as there are misses, chosen by its own ranking. Ties always
//! evict the lower content id first. None of them reads `q` or rewards.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;

use crate::env::{threshold_rule, CacheEnv, SlotOutcome};
use crate::error::Result;
use crate::policy::{Policy, StepInfo};
use crate::rng::SimRng;
use crate::workload::ContentId;

/// Per-content bookkeeping of the replacement policies.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyBookkeeping {
    pub last_used: BTreeMap<ContentId, u64>,
    pub inserted_at: BTreeMap<ContentId, u64>,
    pub request_tally: BTreeMap<ContentId, u64>,
}

impl PolicyBookkeeping {
    /// Records the slot's requests (recency and tallies).
    pub fn record_requests(&mut self, env: &CacheEnv) {
        let slot = env.slot();
        for (&c, &n) in &env.requests().counts {
            self.last_used.insert(c, slot);
            *self.request_tally.entry(c).or_insert(0) += n as u64;
        }
    }

    /// Records admissions and forgets contents that left the cache.
    pub fn record_outcome(&mut self, outcome: &SlotOutcome) {
        for &c in &outcome.d_plus {
            self.inserted_at.insert(c, outcome.slot);
        }
        let keep = |c: &ContentId| outcome.cache_after.contains(c);
        self.last_used.retain(|c, _| keep(c));
        self.inserted_at.retain(|c, _| keep(c));
        self.request_tally.retain(|c, _| keep(c));
    }
}

/// Evicts the `n_evict` cached entries (the first `cache_len` candidates)
/// with the smallest `key`, lower id first on ties; all other candidates are
/// retained.
fn evict_smallest<K: Ord>(
    candidates: &[ContentId],
    cache_len: usize,
    n_evict: usize,
    key: impl Fn(ContentId) -> K,
) -> Vec<bool> {
    let mut order: Vec<usize> = (0..cache_len).collect();
    order.sort_by(|&a, &b| {
        key(candidates[a])
            .cmp(&key(candidates[b]))
            .then(candidates[a].cmp(&candidates[b]))
    });
    let mut indicators = vec![true; candidates.len()];
    for &i in order.iter().take(n_evict) {
        indicators[i] = false;
    }
    indicators
}

fn split(candidates: &[ContentId], cache: &[ContentId]) -> (usize, usize) {
    let cache_len = cache.len();
    (cache_len, candidates.len() - cache_len)
}

/// Least recently used. Never-touched contents count as oldest.
pub fn lru_decide(bookkeeping: &PolicyBookkeeping, candidates: &[ContentId], cache: &[ContentId]) -> Vec<bool> {
    let (cache_len, misses) = split(candidates, cache);
    evict_smallest(candidates, cache_len, misses, |c| {
        bookkeeping.last_used.get(&c).map_or(0, |&t| t + 1)
    })
}

/// First in, first out. Contents of the initial cache count as oldest.
pub fn fifo_decide(bookkeeping: &PolicyBookkeeping, candidates: &[ContentId], cache: &[ContentId]) -> Vec<bool> {
    let (cache_len, misses) = split(candidates, cache);
    evict_smallest(candidates, cache_len, misses, |c| {
        bookkeeping.inserted_at.get(&c).map_or(0, |&t| t + 1)
    })
}

/// Evicts the cached contents with the fewest requests since admission.
pub fn least_requested_decide(
    bookkeeping: &PolicyBookkeeping,
    candidates: &[ContentId],
    cache: &[ContentId],
) -> Vec<bool> {
    let (cache_len, misses) = split(candidates, cache);
    evict_smallest(candidates, cache_len, misses, |c| {
        bookkeeping.request_tally.get(&c).copied().unwrap_or(0)
    })
}

/// Evicts uniformly random cached contents, one per miss.
pub fn random_decide<R: Rng + ?Sized>(candidates: &[ContentId], cache: &[ContentId], rng: &mut R) -> Vec<bool> {
    let (cache_len, misses) = split(candidates, cache);
    let mut indicators = vec![true; candidates.len()];
    for i in sample(rng, cache_len, misses.min(cache_len)) {
        indicators[i] = false;
    }
    indicators
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Lru,
    Fifo,
    LeastRequested,
    Random,
    Threshold,
}

/// A baseline bound to its bookkeeping.
#[derive(Debug, Clone)]
pub struct Baseline {
    kind: BaselineKind,
    bookkeeping: PolicyBookkeeping,
    rng: SimRng,
}

impl Baseline {
    pub fn new(kind: BaselineKind, rng: SimRng) -> Self {
        Baseline {
            kind,
            bookkeeping: PolicyBookkeeping::default(),
            rng,
        }
    }

    pub fn bookkeeping(&self) -> &PolicyBookkeeping {
        &self.bookkeeping
    }
}

impl Policy for Baseline {
    fn name(&self) -> &'static str {
        match self.kind {
            BaselineKind::Lru => "lru",
            BaselineKind::Fifo => "fifo",
            BaselineKind::LeastRequested => "least",
            BaselineKind::Random => "random",
            BaselineKind::Threshold => "threshold",
        }
    }

    fn begin_episode(&mut self, _env: &CacheEnv) -> Result<()> {
        self.bookkeeping = PolicyBookkeeping::default();
        Ok(())
    }

    fn decide(&mut self, env: &CacheEnv) -> Result<Vec<bool>> {
        self.bookkeeping.record_requests(env);
        let candidates = env.candidates();
        let cache = env.cache();
        Ok(match self.kind {
            BaselineKind::Lru => lru_decide(&self.bookkeeping, &candidates, cache),
            BaselineKind::Fifo => fifo_decide(&self.bookkeeping, &candidates, cache),
            BaselineKind::LeastRequested => least_requested_decide(&self.bookkeeping, &candidates, cache),
            BaselineKind::Random => random_decide(&candidates, cache, &mut self.rng),
            BaselineKind::Threshold => {
                // Fetched contents are kept when they reach the cache mean q.
                let ledger = env.ledger();
                let cache_q: Vec<f64> = cache.iter().map(|&c| ledger.q(c)).collect();
                let mean = cache_q.iter().sum::<f64>() / cache_q.len() as f64;
                let mut out = threshold_rule(&cache_q);
                out.extend(candidates[cache.len()..].iter().map(|&c| ledger.q(c) >= mean));
                out
            }
        })
    }

    fn observe(&mut self, outcome: &SlotOutcome, _env: &CacheEnv, _terminal: bool) -> Result<StepInfo> {
        self.bookkeeping.record_outcome(outcome);
        Ok(StepInfo::default())
    }
}
