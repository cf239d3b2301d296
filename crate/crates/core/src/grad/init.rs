use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::ParamTensor;
use crate::scalar::Scalar;

/// Zero-mean normal entries with standard deviation `sqrt(2 / fan_in)`.
pub fn kaiming_normal<S: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> ParamTensor<S> {
    assert!(fan_in >= 1, "fan_in must be positive");
    let std = (2.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let values = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            S::of(z * std)
        })
        .collect();
    ParamTensor::from_values(shape, values)
}
