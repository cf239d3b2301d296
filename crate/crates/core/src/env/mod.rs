//! The content-update MDP of a single cache-enabled base station.
//!
//! One slot runs serve → update cache → update ledger → reward, after which
//! the next slot's requests are attached to form the next state.

mod ledger;
mod ops;

use std::collections::BTreeSet;
use std::str::FromStr;

pub use ledger::CumulativeLedger;
pub use ops::{apply_update, candidate_set, compute_reward, serve_requests, threshold_rule, RewardWeights};

use crate::error::{Error, Result};
use crate::workload::{ContentId, RequestBatch};

/// What happens on slots without any request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptySlotMode {
    /// The policy's indicators over the cache are applied as on any slot.
    #[default]
    Agent,
    /// The mean-`q` threshold rule overrides the policy.
    Threshold,
}

impl FromStr for EmptySlotMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agent" => Ok(EmptySlotMode::Agent),
            "threshold" | "threshold-on-empty" => Ok(EmptySlotMode::Threshold),
            other => Err(Error::Config(format!("unknown empty_slot_mode `{other}`"))),
        }
    }
}

impl EmptySlotMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EmptySlotMode::Agent => "agent",
            EmptySlotMode::Threshold => "threshold",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub catalog_size: usize,
    pub cache_capacity: usize,
    pub users: usize,
    pub weights: RewardWeights,
    pub empty_slot_mode: EmptySlotMode,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cache_capacity == 0 {
            return Err(Error::Config("cache_capacity must be at least 1".into()));
        }
        if self.catalog_size < self.cache_capacity {
            return Err(Error::Config(format!(
                "catalog_size {} is smaller than cache_capacity {}",
                self.catalog_size, self.cache_capacity
            )));
        }
        if self.users == 0 {
            return Err(Error::Config("users must be at least 1".into()));
        }
        let RewardWeights { eta, lambda } = self.weights;
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Config(format!("eta must lie in (0, 1), got {eta}")));
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Config(format!("lambda must lie in (0, 1), got {lambda}")));
        }
        Ok(())
    }
}

/// The MDP state `⟨B, L⟩`: cached contents with their `q`, plus the slot's requests.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub cache: Vec<ContentId>,
    pub cache_q: Vec<f64>,
    pub requests: RequestBatch,
}

/// Evict (`false`) / retain (`true`) decision per candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionVector {
    pub candidates: Vec<ContentId>,
    pub indicators: Vec<bool>,
}

impl ActionVector {
    pub fn new(candidates: Vec<ContentId>, indicators: Vec<bool>) -> Result<Self> {
        if candidates.len() != indicators.len() {
            return Err(Error::Contract(format!(
                "{} indicators for {} candidates",
                indicators.len(),
                candidates.len()
            )));
        }
        let distinct: BTreeSet<_> = candidates.iter().collect();
        if distinct.len() != candidates.len() {
            return Err(Error::Contract("duplicate candidate".into()));
        }
        Ok(ActionVector { candidates, indicators })
    }
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub slot: u64,
    pub candidates: Vec<ContentId>,
    /// Indicators actually executed (after any threshold override).
    pub indicators: Vec<bool>,
    pub hits: BTreeSet<ContentId>,
    pub misses: BTreeSet<ContentId>,
    /// Newly cached this slot.
    pub d_plus: BTreeSet<ContentId>,
    /// Cached before and after this slot's update.
    pub d_star: BTreeSet<ContentId>,
    /// Evicted during the previous slot's update.
    pub d_minus: BTreeSet<ContentId>,
    /// Evicted during this slot's update; next slot's `d_minus`.
    pub evicted: BTreeSet<ContentId>,
    pub reward: f64,
    pub hit_requests: u64,
    pub total_requests: u64,
    pub cache_after: Vec<ContentId>,
}

/// Single-station environment. Owns the cache, the ledger and the pending
/// request batch of the current slot.
#[derive(Debug, Clone)]
pub struct CacheEnv {
    config: EnvConfig,
    cache: Vec<ContentId>,
    ledger: CumulativeLedger,
    requests: RequestBatch,
    last_evicted: BTreeSet<ContentId>,
    slot: u64,
    hit_requests: u64,
    total_requests: u64,
}

impl CacheEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let ledger = CumulativeLedger::new(config.catalog_size);
        let requests = RequestBatch::empty(0, config.users);
        Ok(CacheEnv {
            cache: Vec::new(),
            ledger,
            requests,
            last_evicted: BTreeSet::new(),
            slot: 0,
            hit_requests: 0,
            total_requests: 0,
            config,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Starts a fresh episode with a full cache and the first slot's requests.
    pub fn reset(&mut self, initial_cache: Vec<ContentId>, first_batch: RequestBatch) -> Result<()> {
        if initial_cache.len() != self.config.cache_capacity {
            return Err(Error::Contract(format!(
                "initial cache holds {} contents, capacity is {}",
                initial_cache.len(),
                self.config.cache_capacity
            )));
        }
        let distinct: BTreeSet<_> = initial_cache.iter().collect();
        if distinct.len() != initial_cache.len() {
            return Err(Error::Contract("initial cache has duplicates".into()));
        }
        if let Some(c) = initial_cache
            .iter()
            .chain(first_batch.distinct.iter())
            .find(|c| c.0 == 0 || c.index() >= self.config.catalog_size)
        {
            return Err(Error::Contract(format!("{c} is outside the catalog")));
        }
        self.cache = initial_cache;
        self.ledger = CumulativeLedger::new(self.config.catalog_size);
        self.requests = first_batch;
        self.last_evicted.clear();
        self.slot = 0;
        self.hit_requests = 0;
        self.total_requests = 0;
        Ok(())
    }

    pub fn cache(&self) -> &[ContentId] {
        &self.cache
    }

    pub fn ledger(&self) -> &CumulativeLedger {
        &self.ledger
    }

    pub fn requests(&self) -> &RequestBatch {
        &self.requests
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn is_cached(&self, content: ContentId) -> bool {
        self.cache.contains(&content)
    }

    /// Candidates of the current slot, the domain of the next action.
    pub fn candidates(&self) -> Vec<ContentId> {
        candidate_set(&self.cache, &self.requests.distinct)
    }

    pub fn state(&self) -> SystemState {
        SystemState {
            cache: self.cache.clone(),
            cache_q: self.cache.iter().map(|&c| self.ledger.q(c)).collect(),
            requests: self.requests.clone(),
        }
    }

    /// Request-weighted (hits, requests) since the last reset.
    pub fn hit_counters(&self) -> (u64, u64) {
        (self.hit_requests, self.total_requests)
    }

    /// Runs one slot with `indicators` over `self.candidates()` and then
    /// installs `next_batch` as the following slot's requests.
    pub fn step(&mut self, indicators: &[bool], next_batch: RequestBatch) -> Result<SlotOutcome> {
        let candidates = self.candidates();
        if indicators.len() != candidates.len() {
            return Err(Error::Contract(format!(
                "{} indicators for {} candidates",
                indicators.len(),
                candidates.len()
            )));
        }
        let (hits, misses) = serve_requests(&self.cache, &self.requests);

        let executed: Vec<bool> =
            if self.config.empty_slot_mode == EmptySlotMode::Threshold && self.requests.is_empty() {
                let cache_q: Vec<f64> = self.cache.iter().map(|&c| self.ledger.q(c)).collect();
                threshold_rule(&cache_q)
            } else {
                indicators.to_vec()
            };

        let next_cache = apply_update(
            &candidates,
            &executed,
            self.ledger.q_values(),
            self.config.catalog_size,
            self.config.cache_capacity,
        )?;

        let old: BTreeSet<ContentId> = self.cache.iter().copied().collect();
        let new: BTreeSet<ContentId> = next_cache.iter().copied().collect();
        let d_star: BTreeSet<ContentId> = old.intersection(&new).copied().collect();
        let d_plus: BTreeSet<ContentId> = new.difference(&old).copied().collect();
        let evicted: BTreeSet<ContentId> = candidates.iter().filter(|c| !new.contains(c)).copied().collect();
        let d_minus = std::mem::replace(&mut self.last_evicted, evicted.clone());

        self.ledger.update(&self.requests);
        let reward = compute_reward(&d_star, &d_plus, &d_minus, &self.requests, self.config.weights);

        let hit_requests: u64 = hits.iter().map(|&c| self.requests.count(c) as u64).sum();
        let total_requests = self.requests.total_requests();
        self.hit_requests += hit_requests;
        self.total_requests += total_requests;

        let outcome = SlotOutcome {
            slot: self.slot,
            candidates,
            indicators: executed,
            hits,
            misses,
            d_plus,
            d_star,
            d_minus,
            evicted,
            reward,
            hit_requests,
            total_requests,
            cache_after: next_cache.clone(),
        };
        self.cache = next_cache;
        self.requests = next_batch;
        self.slot += 1;
        Ok(outcome)
    }
}
