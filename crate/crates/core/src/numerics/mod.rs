//! Numeric kernels, parameter storage, Adam and gradient checking.

mod adam;
mod gradcheck;
pub mod init;
pub mod kernels;
mod store;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use gradcheck::{
    finite_diff_gradcheck, relative_error, sample_coordinates, GRAD_SIGNAL_FLOOR, Coord, CoordCheck, GradCheckReport,
    DEFAULT_PERTURBATION,
};
pub use kernels::{average_pool, masked_softmax, mlp_forward, sigmoid};
pub use store::{Grads, ParamEntry, ParamStore};
pub use tensor::Tensor;
