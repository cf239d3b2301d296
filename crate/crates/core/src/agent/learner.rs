//! State shared by both Q-learning agents: online and target networks,
//! replay, the episode's frame history, exploration and the TD update.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use super::config::AgentConfig;
use super::encode::{EncodedState, FeatureTracker, LAYOUT_VERSION};
use super::network::{QNetwork, QOutput, Window};
use super::replay::ReplayBuffer;
use super::select::epsilon_schedule;
use crate::env::CacheEnv;
use crate::error::{Error, Result};
use crate::grad::checkpoint::{self, Checkpoint};
use crate::grad::{huber_loss, Adam, AdamConfig};
use crate::rng::{stream, stream_rng, SimRng};
use crate::scalar::Scalar;

/// One stored step. `frames` holds the window ending at `s` followed by `s'`.
#[derive(Debug, Clone)]
pub struct Transition<S> {
    pub frames: Vec<Arc<EncodedState<S>>>,
    pub indicators: Vec<bool>,
    pub reward: f64,
    pub terminal: bool,
}

impl<S> Transition<S> {
    pub fn state_window(&self) -> &Window<S> {
        &self.frames[..self.frames.len() - 1]
    }

    /// The window ending at `s'`, at most `window` frames long.
    pub fn next_window(&self, window: usize) -> &Window<S> {
        &self.frames[self.frames.len().saturating_sub(window)..]
    }
}

#[derive(Debug, Clone)]
pub struct Learner<S: Scalar, N: QNetwork<S>> {
    pub config: AgentConfig,
    pub online: N,
    pub target: N,
    optimizer: Adam<S>,
    replay: ReplayBuffer<Transition<S>>,
    tracker: FeatureTracker,
    history: VecDeque<Arc<EncodedState<S>>>,
    explore_rng: SimRng,
    replay_rng: SimRng,
    env_steps: u64,
    train_steps: u64,
    learning: bool,
}

impl<S: Scalar, N: QNetwork<S>> Learner<S, N> {
    /// `build` receives the network-initialisation stream.
    pub fn new(config: AgentConfig, catalog_size: usize, horizon: usize, seed: u64, build: impl FnOnce(&mut SimRng) -> N) -> Self {
        let online = build(&mut stream_rng(seed, stream::NET_INIT, 0));
        Learner {
            target: online.clone(),
            online,
            optimizer: Adam::new(AdamConfig::new(config.learning_rate, config.weight_decay)),
            replay: ReplayBuffer::new(config.replay_capacity),
            tracker: FeatureTracker::new(catalog_size, horizon),
            history: VecDeque::with_capacity(config.window + 1),
            explore_rng: stream_rng(seed, stream::EXPLORE, 0),
            replay_rng: stream_rng(seed, stream::REPLAY, 0),
            env_steps: 0,
            train_steps: 0,
            learning: true,
            config,
        }
    }

    pub fn learning(&self) -> bool {
        self.learning
    }

    pub fn set_learning(&mut self, learning: bool) {
        self.learning = learning;
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn replay(&self) -> &ReplayBuffer<Transition<S>> {
        &self.replay
    }

    pub fn explore_rng(&mut self) -> &mut SimRng {
        &mut self.explore_rng
    }

    /// Current exploration rate; zero when not learning.
    pub fn epsilon(&self) -> f64 {
        if self.learning {
            epsilon_schedule(self.env_steps, self.config.epsilon_tau, self.config.epsilon_floor)
        } else {
            0.0
        }
    }

    pub fn begin_episode(&mut self, env: &CacheEnv) {
        self.tracker.reset();
        self.history.clear();
        let first = Arc::new(self.tracker.encode(env));
        self.history.push_back(first);
    }

    /// Window ending at the current state, oldest first.
    pub fn window(&self) -> Vec<Arc<EncodedState<S>>> {
        self.history.iter().cloned().collect()
    }

    pub fn current(&self) -> Result<&Arc<EncodedState<S>>> {
        self.history
            .back()
            .ok_or_else(|| Error::Contract("agent used before begin_episode".into()))
    }

    /// Records the transition into the post-step state and trains when due.
    /// `bootstrap` maps the target network's output at `s'` to the value used
    /// in the TD target. Returns the training loss if a step was taken.
    pub fn observe(
        &mut self,
        env: &CacheEnv,
        indicators: &[bool],
        reward: f64,
        terminal: bool,
        bootstrap: &dyn Fn(&Window<S>, &QOutput<S>) -> S,
    ) -> Result<Option<f64>> {
        let next = Arc::new(self.tracker.encode(env));
        let mut frames = self.window();
        frames.push(next.clone());
        self.history.push_back(next);
        while self.history.len() > self.config.window {
            self.history.pop_front();
        }
        if !self.learning {
            return Ok(None);
        }
        if !reward.is_finite() {
            return Err(Error::Training(format!("non-finite reward {reward}")));
        }
        self.replay.push(Transition {
            frames,
            indicators: indicators.to_vec(),
            reward,
            terminal,
        });
        self.env_steps += 1;
        let due = self.env_steps.is_multiple_of(self.config.train_every);
        if due && self.replay.len() >= self.config.batch_size {
            self.train_step(bootstrap).map(Some)
        } else {
            Ok(None)
        }
    }

    /// One Adam step on a uniformly sampled mini-batch. Every candidate in a
    /// sample regresses its chosen entry towards `R + γ · bootstrap(s')`.
    pub fn train_step(&mut self, bootstrap: &dyn Fn(&Window<S>, &QOutput<S>) -> S) -> Result<f64> {
        let batch: Vec<Transition<S>> = self
            .replay
            .sample(self.config.batch_size, &mut self.replay_rng)
            .into_iter()
            .cloned()
            .collect();
        self.fit(&batch, bootstrap)
    }

    /// Gradient step on an explicit batch.
    pub fn fit(&mut self, batch: &[Transition<S>], bootstrap: &dyn Fn(&Window<S>, &QOutput<S>) -> S) -> Result<f64> {
        let gamma = S::of(self.config.gamma);
        let delta = S::of(self.config.huber_delta);
        let scale = S::one() / S::of(batch.len() as f64);
        self.online.zero_grad();
        let mut total = S::zero();
        for tr in batch {
            let mut y = S::of(tr.reward);
            if !tr.terminal {
                let next = tr.next_window(self.config.window);
                let q_next = self.target.forward(next)?;
                y += gamma * bootstrap(next, &q_next);
            }
            let (q, tape) = self.online.forward_train(tr.state_window())?;
            if q.len() != tr.indicators.len() {
                return Err(Error::Contract("stored action does not match candidate count".into()));
            }
            if q.is_empty() {
                continue;
            }
            let per_row = scale / S::of(q.len() as f64);
            let mut d_pairs = vec![[S::zero(); 2]; q.len()];
            for (i, &keep) in tr.indicators.iter().enumerate() {
                let (loss, grad) = huber_loss(q.pairs[i][keep as usize], y, delta);
                total += loss * per_row;
                d_pairs[i][keep as usize] = grad * per_row;
            }
            self.online.backward(&tape, &d_pairs)?;
        }
        let loss = total.as_f64();
        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss after {} training steps",
                self.train_steps
            )));
        }
        self.optimizer.step(self.online.params_mut())?;
        self.train_steps += 1;
        if self.train_steps.is_multiple_of(self.config.target_sync) {
            self.target.copy_params_from(&self.online);
        }
        Ok(loss)
    }

    /// Serialises the online network with `meta` and an opaque payload.
    pub fn to_checkpoint(&self, kind: &str, mut meta: BTreeMap<String, String>, payload: &[u8]) -> Vec<u8> {
        meta.insert("agent".into(), kind.into());
        meta.insert("network".into(), self.online.describe());
        meta.insert("layout".into(), LAYOUT_VERSION.to_string());
        checkpoint::encode(&meta, &self.online.params(), payload)
    }

    /// Loads parameters written by [`Self::to_checkpoint`] into both networks.
    pub fn load_checkpoint(&mut self, kind: &str, bytes: &[u8]) -> Result<Checkpoint<S>> {
        let ckpt = checkpoint::decode::<S>(bytes)?;
        let expect = |key: &str, want: String| -> Result<()> {
            match ckpt.meta.get(key) {
                Some(v) if *v == want => Ok(()),
                got => Err(Error::Checkpoint(format!(
                    "checkpoint {key} is {}, expected {want}",
                    got.map(String::as_str).unwrap_or("missing")
                ))),
            }
        };
        expect("agent", kind.to_string())?;
        expect("layout", LAYOUT_VERSION.to_string())?;
        expect("network", self.online.describe())?;
        checkpoint::restore(self.online.params_mut(), &ckpt.tensors)?;
        self.target.copy_params_from(&self.online);
        Ok(ckpt)
    }
}

/// Bootstrap used by plain DQN: the greedy joint value.
pub fn greedy_bootstrap<S: Scalar>(_window: &Window<S>, q: &QOutput<S>) -> S {
    q.max_joint()
}

