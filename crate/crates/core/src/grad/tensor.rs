use crate::scalar::Scalar;

/// A trainable array with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<S> {
    pub shape: Vec<usize>,
    pub values: Vec<S>,
    pub grad: Vec<S>,
}

impl<S: Scalar> ParamTensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        ParamTensor {
            shape: shape.to_vec(),
            values: vec![S::zero(); n],
            grad: vec![S::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], value: S) -> Self {
        let mut t = Self::zeros(shape);
        t.values.iter_mut().for_each(|v| *v = value);
        t
    }

    pub fn from_values(shape: &[usize], values: Vec<S>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), values.len(), "shape/value length mismatch");
        ParamTensor {
            shape: shape.to_vec(),
            grad: vec![S::zero(); values.len()],
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = S::zero());
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().chain(&self.grad).all(|v| v.is_finite())
    }

    pub fn copy_values_from(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        self.values.copy_from_slice(&other.values);
    }
}

/// Anything holding trainable tensors, listed in a stable order.
pub trait Parameters<S: Scalar> {
    fn params(&self) -> Vec<&ParamTensor<S>>;
    fn params_mut(&mut self) -> Vec<&mut ParamTensor<S>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Copies parameter values (not gradients) from a structurally equal module.
    fn copy_params_from(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            dst.copy_values_from(src);
        }
    }
}
