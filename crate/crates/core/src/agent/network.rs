//! Q-networks with a factorized per-candidate action head.
//!
//! Every candidate gets an independent `(Q_evict, Q_retain)` pair; the value
//! of a joint action is the mean of the chosen entries.

use std::sync::Arc;

use rand::Rng;

use super::encode::{EncodedState, FEATURES, SUMMARY};
use crate::error::{Error, Result};
use crate::grad::{relu_backward_in_place, relu_in_place, Dense, LstmCell, LstmStep, ParamTensor, Parameters};
use crate::scalar::Scalar;

/// Per-candidate `[Q_evict, Q_retain]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QOutput<S> {
    pub pairs: Vec<[S; 2]>,
}

impl<S: Scalar> QOutput<S> {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Mean of the chosen entries.
    pub fn joint(&self, indicators: &[bool]) -> S {
        if self.pairs.is_empty() {
            return S::zero();
        }
        let sum: S = self
            .pairs
            .iter()
            .zip(indicators)
            .map(|(p, &keep)| p[keep as usize])
            .sum();
        sum / S::of(self.pairs.len() as f64)
    }

    /// Per-candidate argmax; ties retain.
    pub fn greedy(&self) -> Vec<bool> {
        self.pairs.iter().map(|p| p[1] >= p[0]).collect()
    }

    /// Joint value of the greedy action.
    pub fn max_joint(&self) -> S {
        self.joint(&self.greedy())
    }
}

/// Three dense layers applied row-wise: `in → H → H → 2`, ReLU between.
#[derive(Debug, Clone, PartialEq)]
pub struct QHead<S> {
    pub layers: [Dense<S>; 3],
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct HeadTape<S> {
    inputs: Vec<S>,
    hidden1: Vec<S>,
    hidden2: Vec<S>,
    rows: usize,
}

impl<S: Scalar> QHead<S> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        QHead {
            layers: [
                Dense::kaiming(inputs, hidden, rng),
                Dense::kaiming(hidden, hidden, rng),
                Dense::kaiming(hidden, 2, rng),
            ],
        }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].outputs()
    }

    pub fn forward(&self, inputs: Vec<S>, rows: usize) -> Result<(Vec<[S; 2]>, HeadTape<S>)> {
        let (n_in, h) = (self.inputs(), self.hidden());
        if inputs.len() != rows * n_in {
            return Err(Error::Contract(format!(
                "head expects {rows}×{n_in} inputs, got {}",
                inputs.len()
            )));
        }
        let mut hidden1 = vec![S::zero(); rows * h];
        let mut hidden2 = vec![S::zero(); rows * h];
        let mut pairs = vec![[S::zero(); 2]; rows];
        for r in 0..rows {
            let a1 = &mut hidden1[r * h..(r + 1) * h];
            self.layers[0].forward(&inputs[r * n_in..(r + 1) * n_in], a1)?;
            relu_in_place(a1);
            let a2 = &mut hidden2[r * h..(r + 1) * h];
            self.layers[1].forward(&hidden1[r * h..(r + 1) * h], a2)?;
            relu_in_place(a2);
            self.layers[2].forward(a2, &mut pairs[r])?;
        }
        Ok((
            pairs,
            HeadTape {
                inputs,
                hidden1,
                hidden2,
                rows,
            },
        ))
    }

    /// Accumulates gradients for `d_pairs`; returns input gradients when asked.
    pub fn backward(&mut self, tape: &HeadTape<S>, d_pairs: &[[S; 2]], want_inputs: bool) -> Result<Option<Vec<S>>> {
        let (n_in, h) = (self.inputs(), self.hidden());
        if d_pairs.len() != tape.rows {
            return Err(Error::Contract("output gradient rows do not match forward pass".into()));
        }
        let mut d_inputs = want_inputs.then(|| vec![S::zero(); tape.rows * n_in]);
        let mut d2 = vec![S::zero(); h];
        let mut d1 = vec![S::zero(); h];
        for r in 0..tape.rows {
            let dy = &d_pairs[r];
            if dy[0] == S::zero() && dy[1] == S::zero() {
                continue;
            }
            let a1 = &tape.hidden1[r * h..(r + 1) * h];
            let a2 = &tape.hidden2[r * h..(r + 1) * h];
            self.layers[2].backward(a2, dy, Some(&mut d2))?;
            relu_backward_in_place(a2, &mut d2);
            self.layers[1].backward(a1, &d2, Some(&mut d1))?;
            relu_backward_in_place(a1, &mut d1);
            let x = &tape.inputs[r * n_in..(r + 1) * n_in];
            match d_inputs.as_mut() {
                Some(dx) => self.layers[0].backward(x, &d1, Some(&mut dx[r * n_in..(r + 1) * n_in]))?,
                None => self.layers[0].backward(x, &d1, None)?,
            }
        }
        Ok(d_inputs)
    }
}

impl<S: Scalar> Parameters<S> for QHead<S> {
    fn params(&self) -> Vec<&ParamTensor<S>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<S>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

/// Window of recent encoded states, oldest first; the last is the current one.
pub type Window<S> = [Arc<EncodedState<S>>];

/// Common surface of the DQN and EMRQN networks.
pub trait QNetwork<S: Scalar>: Parameters<S> + Clone + Send {
    type Tape;

    /// Architecture tag stored in checkpoints.
    fn describe(&self) -> String;

    fn forward(&self, window: &Window<S>) -> Result<QOutput<S>> {
        self.forward_train(window).map(|(q, _)| q)
    }

    fn forward_train(&self, window: &Window<S>) -> Result<(QOutput<S>, Self::Tape)>;

    fn backward(&mut self, tape: &Self::Tape, d_pairs: &[[S; 2]]) -> Result<()>;
}

/// Feedforward network over the current state's candidate rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpQNetwork<S> {
    pub head: QHead<S>,
}

impl<S: Scalar> MlpQNetwork<S> {
    pub fn new<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        MlpQNetwork {
            head: QHead::new(FEATURES, hidden, rng),
        }
    }
}

impl<S: Scalar> Parameters<S> for MlpQNetwork<S> {
    fn params(&self) -> Vec<&ParamTensor<S>> {
        self.head.params()
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<S>> {
        self.head.params_mut()
    }
}

impl<S: Scalar> QNetwork<S> for MlpQNetwork<S> {
    type Tape = HeadTape<S>;

    fn describe(&self) -> String {
        format!("mlp:features={FEATURES},hidden={}", self.head.hidden())
    }

    fn forward_train(&self, window: &Window<S>) -> Result<(QOutput<S>, HeadTape<S>)> {
        let state = window
            .last()
            .ok_or_else(|| Error::Contract("empty state window".into()))?;
        let (pairs, tape) = self.head.forward(state.rows.clone(), state.len())?;
        Ok((QOutput { pairs }, tape))
    }

    fn backward(&mut self, tape: &HeadTape<S>, d_pairs: &[[S; 2]]) -> Result<()> {
        self.head.backward(tape, d_pairs, false).map(|_| ())
    }
}

/// LSTM trunk over the pooled summaries of the last `window` slots; its
/// final hidden state is appended to every candidate row before the head.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentQNetwork<S> {
    pub lstm: LstmCell<S>,
    pub head: QHead<S>,
    window: usize,
}

#[derive(Debug, Clone)]
pub struct RecurrentTape<S> {
    steps: Vec<LstmStep<S>>,
    head: HeadTape<S>,
}

impl<S: Scalar> RecurrentQNetwork<S> {
    pub fn new<R: Rng + ?Sized>(lstm_hidden: usize, hidden: usize, window: usize, rng: &mut R) -> Self {
        assert!(window >= 1, "window must hold at least the current slot");
        RecurrentQNetwork {
            lstm: LstmCell::kaiming(SUMMARY, lstm_hidden, rng),
            head: QHead::new(FEATURES + lstm_hidden, hidden, rng),
            window,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Summary inputs for exactly `self.window` steps, zero-padded in front.
    fn trunk_inputs(&self, window: &Window<S>) -> Vec<Vec<S>> {
        let have = window.len().min(self.window);
        let mut xs = vec![vec![S::zero(); SUMMARY]; self.window - have];
        xs.extend(window[window.len() - have..].iter().map(|s| s.summary.clone()));
        xs
    }
}

impl<S: Scalar> Parameters<S> for RecurrentQNetwork<S> {
    fn params(&self) -> Vec<&ParamTensor<S>> {
        let mut p = self.lstm.params();
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<S>> {
        let mut p = self.lstm.params_mut();
        p.extend(self.head.params_mut());
        p
    }
}

impl<S: Scalar> QNetwork<S> for RecurrentQNetwork<S> {
    type Tape = RecurrentTape<S>;

    fn describe(&self) -> String {
        format!(
            "lstm:summary={SUMMARY},lstm_hidden={},features={FEATURES},hidden={},window={}",
            self.lstm.hidden_size(),
            self.head.hidden(),
            self.window
        )
    }

    fn forward_train(&self, window: &Window<S>) -> Result<(QOutput<S>, RecurrentTape<S>)> {
        let state = window
            .last()
            .ok_or_else(|| Error::Contract("empty state window".into()))?;
        let n_h = self.lstm.hidden_size();
        let zeros = vec![S::zero(); n_h];
        let steps = self.lstm.forward_sequence(&self.trunk_inputs(window), &zeros, &zeros)?;
        let context = &steps.last().expect("window ≥ 1").h;
        let width = FEATURES + n_h;
        let mut inputs = Vec::with_capacity(state.len() * width);
        for i in 0..state.len() {
            inputs.extend_from_slice(state.row(i));
            inputs.extend_from_slice(context);
        }
        let (pairs, head) = self.head.forward(inputs, state.len())?;
        Ok((QOutput { pairs }, RecurrentTape { steps, head }))
    }

    fn backward(&mut self, tape: &RecurrentTape<S>, d_pairs: &[[S; 2]]) -> Result<()> {
        let n_h = self.lstm.hidden_size();
        let width = FEATURES + n_h;
        let d_inputs = self.head.backward(&tape.head, d_pairs, true)?.expect("requested");
        let mut d_context = vec![S::zero(); n_h];
        for row in d_inputs.chunks_exact(width) {
            for (d, g) in d_context.iter_mut().zip(&row[FEATURES..]) {
                *d += *g;
            }
        }
        let mut dh = vec![vec![S::zero(); n_h]; tape.steps.len()];
        *dh.last_mut().expect("window ≥ 1") = d_context;
        self.lstm.backward_sequence(&tape.steps, &dh)?;
        Ok(())
    }
}
