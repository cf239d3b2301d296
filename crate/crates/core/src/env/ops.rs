//! The serve / update / reward primitives of one slot.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::workload::{ContentId, RequestBatch};

/// Splits the slot's distinct requests into cache hits and misses.
pub fn serve_requests(cache: &[ContentId], batch: &RequestBatch) -> (BTreeSet<ContentId>, BTreeSet<ContentId>) {
    batch.distinct.iter().partition(|c| cache.contains(c))
}

/// Domain of the action indicators for the current slot.
///
/// The cache alone when every request hits (or nobody requests anything),
/// otherwise the cache followed by the missed contents in ascending order.
/// A slot whose requests all miss is treated like a partial miss so that
/// fetched contents can always enter the cache.
pub fn candidate_set(cache: &[ContentId], requests: &BTreeSet<ContentId>) -> Vec<ContentId> {
    let mut out = cache.to_vec();
    out.extend(requests.iter().filter(|c| !cache.contains(c)));
    out
}

/// Ranking used for refill and trimming: higher `q` first, lower id on ties.
fn rank(q: &[f64], a: ContentId, b: ContentId) -> Ordering {
    q[b.index()]
        .partial_cmp(&q[a.index()])
        .unwrap_or(Ordering::Equal)
        .then(a.cmp(&b))
}

/// Applies evict/retain indicators and restores the cache to exactly `capacity`
/// contents.
///
/// Over-retention keeps the `capacity` best-ranked retained contents; a
/// short cache is refilled from the rest of the catalog by rank. Retained
/// contents keep their candidate order and refills follow in rank order.
pub fn apply_update(
    candidates: &[ContentId],
    indicators: &[bool],
    q: &[f64],
    catalog_size: usize,
    capacity: usize,
) -> Result<Vec<ContentId>> {
    if catalog_size < capacity {
        return Err(Error::Config(format!(
            "catalog of {catalog_size} contents cannot fill a cache of {capacity}"
        )));
    }
    if candidates.len() != indicators.len() {
        return Err(Error::Contract(format!(
            "{} indicators for {} candidates",
            indicators.len(),
            candidates.len()
        )));
    }
    if q.len() != catalog_size {
        return Err(Error::Contract(format!(
            "ledger covers {} contents, catalog has {catalog_size}",
            q.len()
        )));
    }
    let mut retained: Vec<ContentId> = candidates
        .iter()
        .zip(indicators)
        .filter(|(_, &keep)| keep)
        .map(|(&c, _)| c)
        .collect();

    if retained.len() > capacity {
        let mut ranked = retained.clone();
        ranked.select_nth_unstable_by(capacity - 1, |&a, &b| rank(q, a, b));
        let keep: BTreeSet<ContentId> = ranked[..capacity].iter().copied().collect();
        retained.retain(|c| keep.contains(c));
        return Ok(retained);
    }

    let missing = capacity - retained.len();
    if missing > 0 {
        let mut taken = vec![false; catalog_size];
        for c in &retained {
            taken[c.index()] = true;
        }
        let mut pool: Vec<ContentId> = (0..catalog_size)
            .filter(|&i| !taken[i])
            .map(ContentId::from_index)
            .collect();
        if missing < pool.len() {
            pool.select_nth_unstable_by(missing - 1, |&a, &b| rank(q, a, b));
            pool.truncate(missing);
        }
        pool.sort_unstable_by(|&a, &b| rank(q, a, b));
        retained.extend(pool);
    }
    Ok(retained)
}

/// Request-free fallback: evict cached contents whose `q` lies strictly below
/// the cache mean. Returns retain (`true`) / evict (`false`) per entry.
pub fn threshold_rule(cache_q: &[f64]) -> Vec<bool> {
    if cache_q.is_empty() {
        return Vec::new();
    }
    let mean = cache_q.iter().sum::<f64>() / cache_q.len() as f64;
    // Summation rounding must not push an all-equal cache below its own mean.
    let slack = mean.abs() * 1e-12;
    cache_q.iter().map(|&q| q >= mean - slack).collect()
}

/// Reward weights: `eta` scales the delivery reward of newly cached
/// contents, `lambda` scales the fetch/eviction cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub eta: f64,
    pub lambda: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { eta: 0.5, lambda: 0.3 }
    }
}

/// Slot reward: delivery credit for retained (`d_star`) and newly cached
/// (`d_plus`, scaled by `eta`) contents, minus `lambda` times the request
/// share of everything fetched or evicted last slot (`d_plus ∪ d_minus`).
pub fn compute_reward(
    d_star: &BTreeSet<ContentId>,
    d_plus: &BTreeSet<ContentId>,
    d_minus: &BTreeSet<ContentId>,
    batch: &RequestBatch,
    weights: RewardWeights,
) -> f64 {
    let total = batch.total_requests();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let share = |c: &ContentId| batch.count(*c) as f64 / total;
    let kept: f64 = d_star.iter().map(share).sum();
    let added: f64 = d_plus.iter().map(share).sum();
    let cost: f64 = d_plus.union(d_minus).map(share).sum();
    kept + weights.eta * added - weights.lambda * cost
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<ContentId> {
        v.iter().copied().map(ContentId).collect()
    }

    fn set(v: &[u32]) -> BTreeSet<ContentId> {
        v.iter().copied().map(ContentId).collect()
    }

    fn one_user(v: &[u32]) -> RequestBatch {
        RequestBatch::from_per_user(0, vec![ids(v)]).unwrap()
    }

    #[test]
    fn serve_toy_slot() {
        let (hits, misses) = serve_requests(&ids(&[1, 2, 3]), &one_user(&[3, 5]));
        assert_eq!(hits, set(&[3]));
        assert_eq!(misses, set(&[5]));
    }

    #[test]
    fn serve_empty_and_all_hit() {
        let (h, m) = serve_requests(&ids(&[1, 2, 3]), &one_user(&[]));
        assert!(h.is_empty() && m.is_empty());
        let (h, m) = serve_requests(&ids(&[1, 2, 3]), &one_user(&[1, 3]));
        assert_eq!(h, set(&[1, 3]));
        assert!(m.is_empty());
    }

    #[test]
    fn candidate_branches() {
        let cache = ids(&[1, 2, 3]);
        assert_eq!(candidate_set(&cache, &set(&[3, 5])), ids(&[1, 2, 3, 5]));
        assert_eq!(candidate_set(&cache, &set(&[])), ids(&[1, 2, 3]));
        assert_eq!(candidate_set(&cache, &set(&[1, 2])), ids(&[1, 2, 3]));
        assert_eq!(candidate_set(&cache, &set(&[4])), ids(&[1, 2, 3, 4]));
        assert_eq!(candidate_set(&ids(&[3, 1, 2]), &set(&[6, 4])), ids(&[3, 1, 2, 4, 6]));
    }

    #[test]
    fn toy_update_refills_by_q() {
        // q(o4) is the largest among o1, o2, o4, o6.
        let q = [0.3, 0.2, 0.9, 0.5, 0.6, 0.1];
        let next = apply_update(&ids(&[1, 2, 3, 5]), &[false, false, true, true], &q, 6, 3).unwrap();
        assert_eq!(set(&next.iter().map(|c| c.0).collect::<Vec<_>>()), set(&[3, 4, 5]));
        assert_eq!(next, ids(&[3, 5, 4]));
    }

    #[test]
    fn retain_everything_is_identity() {
        let q = [0.0; 10];
        let cache = ids(&[4, 9, 2]);
        assert_eq!(apply_update(&cache, &[true; 3], &q, 10, 3).unwrap(), cache);
    }

    #[test]
    fn evict_everything_with_equal_q_takes_lowest_ids() {
        let q = [0.5; 10];
        let next = apply_update(&ids(&[4, 9, 7]), &[false; 3], &q, 10, 3).unwrap();
        assert_eq!(next, ids(&[1, 2, 3]));
    }

    #[test]
    fn over_retention_trims_by_q_then_id() {
        let q = [0.1, 0.4, 0.4, 0.9, 0.0];
        let next = apply_update(&ids(&[5, 3, 2, 4]), &[true; 4], &q, 5, 2).unwrap();
        assert_eq!(next, ids(&[2, 4]));
    }

    #[test]
    fn small_catalog_is_configuration_error() {
        let r = apply_update(&ids(&[1]), &[true], &[0.0], 1, 2);
        assert!(matches!(r, Err(Error::Config(_))));
        let r = apply_update(&ids(&[1, 2]), &[true], &[0.0; 3], 3, 2);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold_rule(&[0.2, 0.4, 0.6]), vec![false, true, true]);
        assert_eq!(threshold_rule(&[0.1, 0.1, 0.1]), vec![true; 3]);
        assert_eq!(threshold_rule(&[0.0, 1.0]), vec![false, true]);
    }

    #[test]
    fn reward_single_retained_request() {
        let r = compute_reward(&set(&[4]), &set(&[]), &set(&[]), &one_user(&[4]), RewardWeights::default());
        assert_eq!(r, 1.0);
    }

    #[test]
    fn reward_single_fetched_request() {
        let w = RewardWeights { eta: 0.5, lambda: 0.3 };
        let r = compute_reward(&set(&[]), &set(&[4]), &set(&[]), &one_user(&[4]), w);
        assert!((r - 0.2).abs() < 1e-15);
    }

    #[test]
    fn reward_single_regretted_eviction() {
        let w = RewardWeights { eta: 0.5, lambda: 0.3 };
        let r = compute_reward(&set(&[]), &set(&[]), &set(&[4]), &one_user(&[4]), w);
        assert!((r + 0.3).abs() < 1e-15);
    }

    #[test]
    fn reward_counts_fetched_and_evicted_once() {
        let w = RewardWeights { eta: 0.5, lambda: 0.3 };
        let r = compute_reward(&set(&[]), &set(&[4]), &set(&[4]), &one_user(&[4]), w);
        assert!((r - 0.2).abs() < 1e-15);
    }

    #[test]
    fn reward_without_requests_is_zero() {
        let r = compute_reward(&set(&[1]), &set(&[2]), &set(&[3]), &one_user(&[]), RewardWeights::default());
        assert_eq!(r, 0.0);
    }
}
