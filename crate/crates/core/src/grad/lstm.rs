//! LSTM cell with backpropagation through time.
//!
//! Gate layout inside the stacked `4H` dimension: input, forget, cell, output.

use rand::Rng;

use super::init::kaiming_normal;
use super::tensor::{ParamTensor, Parameters};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell<S> {
    /// `[4H, I]`
    pub w_input: ParamTensor<S>,
    /// `[4H, H]`
    pub w_hidden: ParamTensor<S>,
    /// `[4H]`
    pub bias: ParamTensor<S>,
    input_size: usize,
    hidden_size: usize,
}

/// Everything one forward step needs to be differentiated later.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep<S> {
    pub x: Vec<S>,
    pub h_prev: Vec<S>,
    pub c_prev: Vec<S>,
    /// Activated gates `[i, f, g, o]`, each of length H.
    pub gates: Vec<S>,
    pub c: Vec<S>,
    pub tanh_c: Vec<S>,
    pub h: Vec<S>,
}

/// Gradients flowing out of an unrolled window.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmInputGrads<S> {
    pub dx: Vec<Vec<S>>,
    pub dh0: Vec<S>,
    pub dc0: Vec<S>,
}

fn sigmoid<S: Scalar>(z: S) -> S {
    S::one() / (S::one() + (-z).exp())
}

impl<S: Scalar> LstmCell<S> {
    /// All-zero weights and biases except the forget-gate bias, which is 1.
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let mut bias = ParamTensor::zeros(&[4 * hidden_size]);
        bias.values[hidden_size..2 * hidden_size]
            .iter_mut()
            .for_each(|b| *b = S::one());
        LstmCell {
            w_input: ParamTensor::zeros(&[4 * hidden_size, input_size]),
            w_hidden: ParamTensor::zeros(&[4 * hidden_size, hidden_size]),
            bias,
            input_size,
            hidden_size,
        }
    }

    /// Kaiming-normal weights over the concatenated `[x, h]` fan-in.
    pub fn kaiming<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let mut cell = Self::zeros(input_size, hidden_size);
        let fan_in = input_size + hidden_size;
        cell.w_input = kaiming_normal(&[4 * hidden_size, input_size], fan_in, rng);
        cell.w_hidden = kaiming_normal(&[4 * hidden_size, hidden_size], fan_in, rng);
        cell
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn forward_step(&self, x: &[S], h_prev: &[S], c_prev: &[S]) -> Result<LstmStep<S>> {
        let (n_in, n_h) = (self.input_size, self.hidden_size);
        if x.len() != n_in || h_prev.len() != n_h || c_prev.len() != n_h {
            return Err(Error::Contract(format!(
                "lstm cell ({n_in}→{n_h}) fed x={}, h={}, c={}",
                x.len(),
                h_prev.len(),
                c_prev.len()
            )));
        }
        let mut gates = self.bias.values.clone();
        for (r, z) in gates.iter_mut().enumerate() {
            let wx = &self.w_input.values[r * n_in..(r + 1) * n_in];
            let wh = &self.w_hidden.values[r * n_h..(r + 1) * n_h];
            let mut acc = *z;
            for (w, v) in wx.iter().zip(x) {
                acc += *w * *v;
            }
            for (w, v) in wh.iter().zip(h_prev) {
                acc += *w * *v;
            }
            *z = acc;
        }
        for (k, z) in gates.iter_mut().enumerate() {
            *z = if k / n_h == 2 { z.tanh() } else { sigmoid(*z) };
        }
        let mut c = vec![S::zero(); n_h];
        let mut tanh_c = vec![S::zero(); n_h];
        let mut h = vec![S::zero(); n_h];
        for j in 0..n_h {
            let (i, f, g, o) = (gates[j], gates[n_h + j], gates[2 * n_h + j], gates[3 * n_h + j]);
            c[j] = f * c_prev[j] + i * g;
            tanh_c[j] = c[j].tanh();
            h[j] = o * tanh_c[j];
        }
        Ok(LstmStep {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates,
            c,
            tanh_c,
            h,
        })
    }

    /// Runs the cell over `xs` starting from `(h0, c0)`.
    pub fn forward_sequence(&self, xs: &[Vec<S>], h0: &[S], c0: &[S]) -> Result<Vec<LstmStep<S>>> {
        let mut steps: Vec<LstmStep<S>> = Vec::with_capacity(xs.len());
        for x in xs {
            let step = match steps.last() {
                Some(prev) => self.forward_step(x, &prev.h, &prev.c)?,
                None => self.forward_step(x, h0, c0)?,
            };
            steps.push(step);
        }
        Ok(steps)
    }

    /// Backpropagation through the whole window. `dh[t]` is the external
    /// gradient on the hidden output of step `t`. Parameter gradients are
    /// accumulated; gradients w.r.t. inputs and the initial state are returned.
    pub fn backward_sequence(&mut self, steps: &[LstmStep<S>], dh: &[Vec<S>]) -> Result<LstmInputGrads<S>> {
        let (n_in, n_h) = (self.input_size, self.hidden_size);
        if dh.len() != steps.len() || dh.iter().any(|g| g.len() != n_h) {
            return Err(Error::Contract("hidden gradients do not match the unrolled window".into()));
        }
        let mut dh_next = vec![S::zero(); n_h];
        let mut dc_next = vec![S::zero(); n_h];
        let mut dx_all = vec![vec![S::zero(); n_in]; steps.len()];
        let mut dz = vec![S::zero(); 4 * n_h];
        for t in (0..steps.len()).rev() {
            let s = &steps[t];
            let mut dh_prev = vec![S::zero(); n_h];
            let mut dc_prev = vec![S::zero(); n_h];
            for j in 0..n_h {
                let (i, f, g, o) = (s.gates[j], s.gates[n_h + j], s.gates[2 * n_h + j], s.gates[3 * n_h + j]);
                let dh_t = dh[t][j] + dh_next[j];
                let dc = dc_next[j] + dh_t * o * (S::one() - s.tanh_c[j] * s.tanh_c[j]);
                dz[j] = dc * g * i * (S::one() - i);
                dz[n_h + j] = dc * s.c_prev[j] * f * (S::one() - f);
                dz[2 * n_h + j] = dc * i * (S::one() - g * g);
                dz[3 * n_h + j] = dh_t * s.tanh_c[j] * o * (S::one() - o);
                dc_prev[j] = dc * f;
            }
            let dx = &mut dx_all[t];
            for (r, &g) in dz.iter().enumerate() {
                self.bias.grad[r] += g;
                let wx = r * n_in..(r + 1) * n_in;
                for (k, (wg, w)) in self.w_input.grad[wx.clone()]
                    .iter_mut()
                    .zip(&self.w_input.values[wx])
                    .enumerate()
                {
                    *wg += g * s.x[k];
                    dx[k] += g * *w;
                }
                let wh = r * n_h..(r + 1) * n_h;
                for (k, (wg, w)) in self.w_hidden.grad[wh.clone()]
                    .iter_mut()
                    .zip(&self.w_hidden.values[wh])
                    .enumerate()
                {
                    *wg += g * s.h_prev[k];
                    dh_prev[k] += g * *w;
                }
            }
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        Ok(LstmInputGrads {
            dx: dx_all,
            dh0: dh_next,
            dc0: dc_next,
        })
    }
}

impl<S: Scalar> Parameters<S> for LstmCell<S> {
    fn params(&self) -> Vec<&ParamTensor<S>> {
        vec![&self.w_input, &self.w_hidden, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<S>> {
        vec![&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn degenerate_cell_only_decays_memory() {
        let cell = LstmCell::<f64>::zeros(2, 3);
        let c_prev = [0.4, -1.0, 2.0];
        let s = cell.forward_step(&[0.3, -0.7], &[0.1, 0.2, 0.3], &c_prev).unwrap();
        for (j, &cp) in c_prev.iter().enumerate() {
            let c = sig(1.0) * cp;
            assert!((s.c[j] - c).abs() < 1e-15);
            assert!((s.h[j] - 0.5 * c.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_everything_gives_zero_hidden() {
        let mut cell = LstmCell::<f64>::zeros(2, 4);
        cell.bias.values.iter_mut().for_each(|b| *b = 0.0);
        let steps = cell
            .forward_sequence(&vec![vec![0.0; 2]; 5], &[0.0; 4], &[0.0; 4])
            .unwrap();
        assert!(steps.iter().all(|s| s.h.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn forget_bias_initialised_to_one() {
        let cell = LstmCell::<f32>::zeros(3, 2);
        assert_eq!(cell.bias.values, vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let cell = LstmCell::<f64>::zeros(2, 3);
        assert!(cell.forward_step(&[0.0; 3], &[0.0; 3], &[0.0; 3]).is_err());
    }
}
