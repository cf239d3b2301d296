use crate::scalar::Scalar;

/// Huber loss of `prediction - target` and its derivative w.r.t. `prediction`.
pub fn huber_loss<S: Scalar>(prediction: S, target: S, delta: S) -> (S, S) {
    let e = prediction - target;
    if e.abs() <= delta {
        (e * e / S::of(2.0), e)
    } else {
        (delta * (e.abs() - delta / S::of(2.0)), delta * e.signum())
    }
}
