//! Finite external memory of past (state, action, max Q) records and the
//! similarity-weighted Q correction built on it.
//!
//! A record keeps three content bitsets over the catalog: the cached set,
//! the requested set and the retain indicators of the executed action. The
//! squared distance between two records counts indicator disagreements on
//! contents cached in both plus disagreements on contents requested in both.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::encode::EncodedState;
use crate::error::{Error, Result};
use crate::workload::ContentId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryKey {
    cache: Vec<u64>,
    requests: Vec<u64>,
    retain: Vec<u64>,
}

fn words_for(catalog_size: usize) -> usize {
    catalog_size.div_ceil(64)
}

fn set_bit(bits: &mut [u64], c: ContentId) {
    bits[c.index() / 64] |= 1 << (c.index() % 64);
}

fn get_bit(bits: &[u64], c: ContentId) -> bool {
    bits[c.index() / 64] >> (c.index() % 64) & 1 == 1
}

impl MemoryKey {
    pub fn new(
        catalog_size: usize,
        cache: impl IntoIterator<Item = ContentId>,
        requests: impl IntoIterator<Item = ContentId>,
        candidates: &[ContentId],
        indicators: &[bool],
    ) -> Self {
        let w = words_for(catalog_size);
        let mut key = MemoryKey {
            cache: vec![0; w],
            requests: vec![0; w],
            retain: vec![0; w],
        };
        for c in cache {
            set_bit(&mut key.cache, c);
        }
        for c in requests {
            set_bit(&mut key.requests, c);
        }
        for (&c, &keep) in candidates.iter().zip(indicators) {
            if keep {
                set_bit(&mut key.retain, c);
            }
        }
        key
    }

    /// Key of an encoded state (cache and request flags) under `indicators`.
    pub fn from_encoded<S: crate::Scalar>(catalog_size: usize, state: &EncodedState<S>, indicators: &[bool]) -> Self {
        let flagged = |col: usize| {
            state
                .candidates
                .iter()
                .enumerate()
                .filter(move |(i, _)| state.row(*i)[col] > S::zero())
                .map(|(_, &c)| c)
        };
        Self::new(catalog_size, flagged(2), flagged(3), &state.candidates, indicators)
    }

    fn words(&self) -> usize {
        self.cache.len()
    }
}

/// Squared distance, or `None` when the two records share neither a cached
/// nor a requested content.
pub fn distance_sq(a: &MemoryKey, b: &MemoryKey) -> Option<u32> {
    distance_sq_raw(a, &b.cache, &b.requests, &b.retain)
}

fn distance_sq_raw(a: &MemoryKey, cache: &[u64], requests: &[u64], retain: &[u64]) -> Option<u32> {
    let mut shared = 0u64;
    let mut d2 = 0u32;
    for k in 0..a.words() {
        let mc = a.cache[k] & cache[k];
        let mr = a.requests[k] & requests[k];
        shared |= mc | mr;
        let diff = a.retain[k] ^ retain[k];
        d2 += (mc & diff).count_ones() + (mr & diff).count_ones();
    }
    (shared != 0).then_some(d2)
}

pub fn similarity_from_distance_sq(d2: u32) -> f64 {
    1.0 / (1.0 + (d2 as f64).sqrt())
}

/// `1 / (1 + d)`, or `None` for records with nothing in common.
pub fn similarity(a: &MemoryKey, b: &MemoryKey) -> Option<f64> {
    distance_sq(a, b).map(similarity_from_distance_sq)
}

/// Moves `q` towards the similarity-weighted neighbor values:
/// `q + Σ sim·(q_ex − q) / Σ |sim|`. Without neighbors `q` is returned.
pub fn modify_q(q: f64, neighbors: &[(f64, f64)]) -> f64 {
    let norm: f64 = neighbors.iter().map(|(s, _)| s.abs()).sum();
    if neighbors.is_empty() || norm == 0.0 {
        return q;
    }
    let pull: f64 = neighbors.iter().map(|(s, q_ex)| s * (q_ex - q)).sum();
    q + pull / norm
}

/// A state window shared between replay and memory records.
pub type SharedWindow<S> = Arc<[Arc<EncodedState<S>>]>;

/// Readable view of one stored record.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalMemoryEntry {
    pub cache_indicators: BTreeMap<ContentId, bool>,
    pub request_indicators: BTreeMap<ContentId, bool>,
    pub stored_max_q: f64,
}

/// A nearest record found by [`ExternalMemory::nearest`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub slot: usize,
    pub distance_sq: u32,
    pub stored_max_q: f64,
}

/// Membership of one content in a stored record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContentBits {
    pub cached: bool,
    pub requested: bool,
    pub retained: bool,
}

/// FIFO ring of records with flat bitset storage.
#[derive(Debug, Clone)]
pub struct ExternalMemory<S> {
    catalog_size: usize,
    words: usize,
    capacity: usize,
    bits: Vec<u64>,
    max_q: Vec<f64>,
    windows: Vec<Option<SharedWindow<S>>>,
    head: usize,
    len: usize,
}

impl<S> ExternalMemory<S> {
    pub fn new(catalog_size: usize, capacity: usize) -> Self {
        assert!(capacity > 0, "memory capacity must be positive");
        ExternalMemory {
            catalog_size,
            words: words_for(catalog_size),
            capacity,
            bits: Vec::new(),
            max_q: Vec::new(),
            windows: Vec::new(),
            head: 0,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn catalog_size(&self) -> usize {
        self.catalog_size
    }

    fn stride(&self) -> usize {
        3 * self.words
    }

    /// Storage slot of the `age`-th newest record (0 = newest).
    fn slot_of_age(&self, age: usize) -> usize {
        (self.head + self.capacity - 1 - age) % self.capacity
    }

    /// Appends a record, discarding the oldest one when full.
    pub fn insert(&mut self, key: &MemoryKey, max_q: f64, window: Option<SharedWindow<S>>) {
        assert_eq!(key.words(), self.words, "key built for another catalog");
        let stride = self.stride();
        let slot = self.head;
        if self.bits.len() < (slot + 1) * stride {
            self.bits.resize((slot + 1) * stride, 0);
            self.max_q.resize(slot + 1, 0.0);
            self.windows.resize(slot + 1, None);
        }
        let dst = &mut self.bits[slot * stride..(slot + 1) * stride];
        dst[..self.words].copy_from_slice(&key.cache);
        dst[self.words..2 * self.words].copy_from_slice(&key.requests);
        dst[2 * self.words..].copy_from_slice(&key.retain);
        self.max_q[slot] = max_q;
        self.windows[slot] = window;
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    fn record(&self, slot: usize) -> (&[u64], &[u64], &[u64]) {
        let s = &self.bits[slot * self.stride()..(slot + 1) * self.stride()];
        (&s[..self.words], &s[self.words..2 * self.words], &s[2 * self.words..])
    }

    /// Records oldest first.
    pub fn entries(&self) -> impl Iterator<Item = ExternalMemoryEntry> + '_ {
        (0..self.len).rev().map(|age| self.entry(self.slot_of_age(age)))
    }

    pub fn entry(&self, slot: usize) -> ExternalMemoryEntry {
        let (cache, requests, retain) = self.record(slot);
        let collect = |set: &[u64]| -> BTreeMap<ContentId, bool> {
            (0..self.catalog_size)
                .map(ContentId::from_index)
                .filter(|&c| get_bit(set, c))
                .map(|c| (c, get_bit(retain, c)))
                .collect()
        };
        ExternalMemoryEntry {
            cache_indicators: collect(cache),
            request_indicators: collect(requests),
            stored_max_q: self.max_q[slot],
        }
    }

    pub fn bits(&self, slot: usize, c: ContentId) -> ContentBits {
        let (cache, requests, retain) = self.record(slot);
        ContentBits {
            cached: get_bit(cache, c),
            requested: get_bit(requests, c),
            retained: get_bit(retain, c),
        }
    }

    pub fn window(&self, slot: usize) -> Option<&SharedWindow<S>> {
        self.windows[slot].as_ref()
    }

    /// The `k` closest records (smallest distance, newer first on ties).
    /// Records sharing no content with `query` are skipped. Scanning stops
    /// early once `k` exact matches are found, which cannot change the result.
    pub fn nearest(&self, query: &MemoryKey, k: usize) -> Vec<Neighbor> {
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        if k == 0 {
            return best;
        }
        for age in 0..self.len {
            let slot = self.slot_of_age(age);
            let (cache, requests, retain) = self.record(slot);
            let Some(d2) = distance_sq_raw(query, cache, requests, retain) else {
                continue;
            };
            if best.len() == k && d2 >= best[k - 1].distance_sq {
                continue;
            }
            // Newer records come first, so ties stay behind existing ones.
            let at = best.partition_point(|n| n.distance_sq <= d2);
            best.insert(
                at,
                Neighbor {
                    slot,
                    distance_sq: d2,
                    stored_max_q: self.max_q[slot],
                },
            );
            best.truncate(k);
            if best.len() == k && best[k - 1].distance_sq == 0 {
                break;
            }
        }
        best
    }

    /// Serializes records oldest first (windows are not persisted).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [self.catalog_size as u64, self.capacity as u64, self.len as u64] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for age in (0..self.len).rev() {
            let slot = self.slot_of_age(age);
            let (a, b, c) = self.record(slot);
            for w in a.iter().chain(b).chain(c) {
                out.extend_from_slice(&w.to_le_bytes());
            }
            out.extend_from_slice(&self.max_q[slot].to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::Checkpoint("malformed external memory payload".into());
        let word = |i: usize| -> Result<u64> {
            bytes
                .get(i * 8..i * 8 + 8)
                .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(bad)
        };
        let (catalog_size, capacity, len) = (word(0)? as usize, word(1)? as usize, word(2)? as usize);
        if capacity == 0 || len > capacity {
            return Err(bad());
        }
        let mut mem = ExternalMemory::new(catalog_size, capacity);
        let w = mem.words;
        let per = 3 * w + 1;
        if bytes.len() != (3 + len * per) * 8 {
            return Err(bad());
        }
        for e in 0..len {
            let base = 3 + e * per;
            let take = |off: usize| (0..w).map(|k| word(base + off + k)).collect::<Result<Vec<u64>>>();
            let key = MemoryKey {
                cache: take(0)?,
                requests: take(w)?,
                retain: take(2 * w)?,
            };
            let q = f64::from_bits(word(base + 3 * w)?);
            mem.insert(&key, q, None);
        }
        Ok(mem)
    }
}

/// Convenience for tests and diagnostics: the requested set of an encoded state.
pub fn requested_set<S: crate::Scalar>(state: &EncodedState<S>) -> BTreeSet<ContentId> {
    state
        .candidates
        .iter()
        .enumerate()
        .filter(|(i, _)| state.row(*i)[3] > S::zero())
        .map(|(_, &c)| c)
        .collect()
}
