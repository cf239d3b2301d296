use rand::Rng;

use super::network::QOutput;
use crate::scalar::Scalar;

/// Exploration rate: starts at 1 and decays exponentially towards `floor`.
pub fn epsilon_schedule(step: u64, tau: f64, floor: f64) -> f64 {
    (-(step as f64) / tau).exp().max(floor)
}

/// ε-greedy over the factorized head: with probability `1 - epsilon` the
/// per-candidate argmax (ties retain), otherwise independent fair coins.
pub fn select_action<S: Scalar, R: Rng + ?Sized>(q: &QOutput<S>, epsilon: f64, rng: &mut R) -> Vec<bool> {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        random_action(q.len(), rng)
    } else {
        q.greedy()
    }
}

pub fn random_action<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<bool> {
    (0..len).map(|_| rng.gen::<bool>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(epsilon_schedule(0, 2000.0, 0.01), 1.0);
        assert!((epsilon_schedule(2000, 2000.0, 0.01) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(epsilon_schedule(1_000_000, 2000.0, 0.01), 0.01);
    }

    #[test]
    fn greedy_when_epsilon_zero() {
        let q = QOutput {
            pairs: vec![[1.0f32, 0.0], [0.0, 1.0], [0.5, 0.5]],
        };
        let mut rng = SimRng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(select_action(&q, 0.0, &mut rng), vec![false, true, true]);
        }
    }

    #[test]
    fn fully_random_indicators_are_fair() {
        let q = QOutput {
            pairs: vec![[1.0f64, 0.0]; 4],
        };
        let mut rng = SimRng::seed_from_u64(5);
        let draws = 100_000;
        let mut ones = [0usize; 4];
        for _ in 0..draws {
            for (k, b) in select_action(&q, 1.0, &mut rng).into_iter().enumerate() {
                ones[k] += b as usize;
            }
        }
        for n in ones {
            assert!((n as f64 / draws as f64 - 0.5).abs() < 0.02, "{ones:?}");
        }
    }
}
