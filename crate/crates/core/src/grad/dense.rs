use rand::Rng;

use super::init::kaiming_normal;
use super::tensor::{ParamTensor, Parameters};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fully connected layer `y = W x + b`, `W` stored row-major `[outputs, inputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<S> {
    pub weight: ParamTensor<S>,
    pub bias: ParamTensor<S>,
}

impl<S: Scalar> Dense<S> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: ParamTensor::zeros(&[outputs, inputs]),
            bias: ParamTensor::zeros(&[outputs]),
        }
    }

    /// Kaiming-normal weights, zero bias.
    pub fn kaiming<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Dense {
            weight: kaiming_normal(&[outputs, inputs], inputs, rng),
            bias: ParamTensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[0]
    }

    fn check(&self, x: usize, y: usize) -> Result<()> {
        if x != self.inputs() || y != self.outputs() {
            return Err(Error::Contract(format!(
                "dense layer {}→{} applied to {x}→{y}",
                self.inputs(),
                self.outputs()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[S], y: &mut [S]) -> Result<()> {
        self.check(x.len(), y.len())?;
        let n = self.inputs();
        for (o, out) in y.iter_mut().enumerate() {
            let row = &self.weight.values[o * n..(o + 1) * n];
            let mut acc = self.bias.values[o];
            for (w, xi) in row.iter().zip(x) {
                acc += *w * *xi;
            }
            *out = acc;
        }
        Ok(())
    }

    /// Accumulates parameter gradients for upstream gradient `dy` at input
    /// `x`, and writes the input gradient into `dx` when requested.
    pub fn backward(&mut self, x: &[S], dy: &[S], dx: Option<&mut [S]>) -> Result<()> {
        self.check(x.len(), dy.len())?;
        let n = self.inputs();
        for (o, &g) in dy.iter().enumerate() {
            if g == S::zero() {
                continue;
            }
            self.bias.grad[o] += g;
            let row = &mut self.weight.grad[o * n..(o + 1) * n];
            for (wg, xi) in row.iter_mut().zip(x) {
                *wg += g * *xi;
            }
        }
        if let Some(dx) = dx {
            if dx.len() != n {
                return Err(Error::Contract(format!("input gradient of length {} for {n} inputs", dx.len())));
            }
            dx.iter_mut().for_each(|v| *v = S::zero());
            for (o, &g) in dy.iter().enumerate() {
                if g == S::zero() {
                    continue;
                }
                let row = &self.weight.values[o * n..(o + 1) * n];
                for (d, w) in dx.iter_mut().zip(row) {
                    *d += g * *w;
                }
            }
        }
        Ok(())
    }
}

impl<S: Scalar> Parameters<S> for Dense<S> {
    fn params(&self) -> Vec<&ParamTensor<S>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<S>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub fn relu_in_place<S: Scalar>(x: &mut [S]) {
    for v in x {
        if *v < S::zero() {
            *v = S::zero();
        }
    }
}

/// Masks `dy` by the positivity of the post-activation values.
pub fn relu_backward_in_place<S: Scalar>(activated: &[S], dy: &mut [S]) {
    for (g, a) in dy.iter_mut().zip(activated) {
        if *a <= S::zero() {
            *g = S::zero();
        }
    }
}
