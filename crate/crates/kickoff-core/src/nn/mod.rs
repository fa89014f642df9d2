//! Neural-network building blocks: dense tensors, reverse-mode autodiff on a
//! tape, orthogonal initialization, the recurrent policy/value networks, Adam,
//! and binary checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod forward;
pub mod gradcheck;
pub mod init;
pub mod kernels;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use forward::{
    policy_forward, policy_step, value_forward, value_step, PolicyNet, RecurrentNet, TapeNet,
    ValueNet,
};
pub use init::orthogonal;
pub use params::{Param, ParamSet};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
