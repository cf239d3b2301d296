//! Deep Q-learning agents: the feedforward DQN baseline and the recurrent
//! agent with external memory.

pub mod config;
pub mod dqn;
pub mod emrqn;
pub mod encode;
pub mod learner;
pub mod memory;
pub mod network;
pub mod replay;
pub mod select;

pub use config::{AgentConfig, QexMode};
pub use dqn::DqnAgent;
pub use emrqn::{EmrqnAgent, Hypotheses};
pub use encode::{EncodedState, FeatureTracker};
pub use learner::{Learner, Transition};
pub use memory::{modify_q, similarity, ExternalMemory, ExternalMemoryEntry, MemoryKey};
pub use network::{MlpQNetwork, QNetwork, QOutput, RecurrentQNetwork};
pub use replay::ReplayBuffer;
pub use select::{epsilon_schedule, select_action};
