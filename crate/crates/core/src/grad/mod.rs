//! Hand-differentiated building blocks for the Q-networks.

mod adam;
pub mod checkpoint;
mod dense;
mod init;
mod loss;
mod lstm;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use dense::{relu_backward_in_place, relu_in_place, Dense};
pub use init::kaiming_normal;
pub use loss::huber_loss;
pub use lstm::{LstmCell, LstmInputGrads, LstmStep};
pub use tensor::{ParamTensor, Parameters};
