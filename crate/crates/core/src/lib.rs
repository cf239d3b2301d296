pub mod agent;
pub mod baselines;
pub mod env;
pub mod episode;
pub mod error;
pub mod grad;
pub mod harness;
pub mod policy;
pub mod rng;
pub mod scalar;
pub mod workload;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DqnAgentF32 = agent::DqnAgent<f32>;
pub type DqnAgentF64 = agent::DqnAgent<f64>;
pub type EmrqnAgentF32 = agent::EmrqnAgent<f32>;
pub type EmrqnAgentF64 = agent::EmrqnAgent<f64>;
pub type DenseF32 = grad::Dense<f32>;
pub type DenseF64 = grad::Dense<f64>;
pub type LstmCellF32 = grad::LstmCell<f32>;
pub type LstmCellF64 = grad::LstmCell<f64>;
