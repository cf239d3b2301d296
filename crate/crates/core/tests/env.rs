mod common;

use std::collections::BTreeSet;

use common::{brute_force_reward, env_config, ids, rollout};
use edgecache::env::{candidate_set, CacheEnv, EmptySlotMode};
use edgecache::workload::{ContentId, RequestBatch};
use proptest::prelude::*;

#[test]
fn reward_matches_brute_force_scorer() {
    let mut scenarios = 0;
    for seed in 0..20 {
        let ro = rollout(seed, 5, env_config(40, 6, 5, EmptySlotMode::Agent), 1.0, 1.5);
        for t in 0..5 {
            let o = &ro.outcomes[t];
            let evicted_last: Vec<ContentId> = if t == 0 {
                vec![]
            } else {
                ro.outcomes[t - 1].evicted.iter().copied().collect()
            };
            let expected = brute_force_reward(&ro.caches_before[t], &o.cache_after, &evicted_last, &ro.batches[t], 0.5, 0.3);
            assert!((o.reward - expected).abs() < 1e-12, "seed {seed} slot {t}: {} vs {expected}", o.reward);
            scenarios += 1;
        }
    }
    assert_eq!(scenarios, 100);
}

#[test]
fn hit_rate_equals_recount_from_trace_and_snapshots() {
    let ro = rollout(3, 1000, env_config(200, 20, 10, EmptySlotMode::Agent), 1.2, 1.0);
    let (mut hits, mut total) = (0u64, 0u64);
    for (t, cache) in ro.caches_before.iter().enumerate() {
        for user in &ro.batches[t].per_user {
            for c in user {
                total += 1;
                hits += cache.contains(c) as u64;
            }
        }
    }
    assert_eq!(ro.env.hit_counters(), (hits, total));
    let per_slot: (u64, u64) = ro
        .outcomes
        .iter()
        .fold((0, 0), |acc, o| (acc.0 + o.hit_requests, acc.1 + o.total_requests));
    assert_eq!(per_slot, (hits, total));
}

#[test]
fn every_fetched_content_is_an_update_candidate() {
    // Brute-force simulator check: a miss outside the candidate set could
    // never enter the cache, so every miss must be offered for update.
    for seed in 0..10 {
        let ro = rollout(seed, 200, env_config(80, 5, 4, EmptySlotMode::Agent), 0.6, 1.0);
        for o in &ro.outcomes {
            for m in &o.misses {
                assert!(o.candidates.contains(m), "seed {seed}: miss {m} not a candidate");
            }
        }
    }
    assert_eq!(
        candidate_set(&ids(&[1, 2, 3]), &ids(&[4]).into_iter().collect()),
        ids(&[1, 2, 3, 4])
    );
}

#[test]
fn normalisation_sums_to_one_on_every_requested_slot() {
    let ro = rollout(8, 10_000, env_config(500, 50, 20, EmptySlotMode::Agent), 1.2, 1.0);
    let mut checked = 0;
    for (t, batch) in ro.batches[..10_000].iter().enumerate() {
        if batch.is_empty() {
            continue;
        }
        let q_after = if t + 1 < ro.q_before.len() {
            &ro.q_before[t + 1]
        } else {
            ro.env.ledger().q_values()
        };
        let sum: f64 = batch.distinct.iter().map(|c| q_after[c.index()] - ro.q_before[t][c.index()]).sum();
        assert!((sum - 1.0).abs() < 1e-9, "slot {t}: Σδ = {sum}");
        checked += 1;
    }
    assert!(checked > 9_000);
}

#[test]
fn retain_all_on_hit_only_slot() {
    let mut env = CacheEnv::new(env_config(10, 3, 2, EmptySlotMode::Agent)).unwrap();
    let batch = RequestBatch::from_per_user(0, vec![ids(&[2]), ids(&[2, 3])]).unwrap();
    env.reset(ids(&[1, 2, 3]), batch).unwrap();
    let o = env.step(&[true, true, true], RequestBatch::empty(1, 2)).unwrap();
    assert!(o.d_plus.is_empty() && o.d_minus.is_empty());
    assert!((o.reward - 1.0).abs() < 1e-15);
    assert_eq!(o.cache_after, ids(&[1, 2, 3]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rollout_invariants(
        seed in any::<u64>(),
        catalog in 8usize..60,
        n in 1usize..8,
        users in 1usize..6,
        threshold in any::<bool>(),
        mean in 0.0f64..3.0,
    ) {
        let mode = if threshold { EmptySlotMode::Threshold } else { EmptySlotMode::Agent };
        let ro = rollout(seed, 40, env_config(catalog, n, users, mode), 0.9, mean);
        let bound = 1.0 + 0.5 + 0.3;
        for (t, o) in ro.outcomes.iter().enumerate() {
            let old: BTreeSet<ContentId> = ro.caches_before[t].iter().copied().collect();
            let new: BTreeSet<ContentId> = o.cache_after.iter().copied().collect();
            prop_assert_eq!(o.cache_after.len(), n);
            prop_assert_eq!(new.len(), n);
            let served: BTreeSet<ContentId> = o.hits.union(&o.misses).copied().collect();
            prop_assert_eq!(&served, &ro.batches[t].distinct);
            prop_assert!(o.hits.is_disjoint(&o.misses));
            prop_assert!(o.d_plus.is_subset(&new));
            prop_assert!(o.d_star.is_subset(&old) && o.d_star.is_subset(&new));
            prop_assert!(o.reward.abs() <= bound + 1e-12);
            let q_next = ro.q_before.get(t + 1).map(Vec::as_slice).unwrap_or(ro.env.ledger().q_values());
            prop_assert!(ro.q_before[t].iter().zip(q_next).all(|(a, b)| b >= a));
        }
    }

    #[test]
    fn step_is_deterministic(seed in any::<u64>()) {
        let a = rollout(seed, 30, env_config(30, 4, 3, EmptySlotMode::Agent), 1.0, 1.0);
        let b = rollout(seed, 30, env_config(30, 4, 3, EmptySlotMode::Agent), 1.0, 1.0);
        prop_assert_eq!(a.outcomes, b.outcomes);
    }
}
