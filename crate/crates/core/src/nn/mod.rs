//! Small dense convolutional network engine.

pub mod conv;
pub mod gradcheck;
pub mod io;
pub mod loss;
pub mod network;
pub mod ops;
pub mod optim;
pub mod spec;
pub mod tensor;

pub use conv::conv_forward;
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport};
pub use io::{load_weights, save_weights};
pub use loss::{euclidean_loss, log_loss, Target};
pub use network::{Engine, LayerParams, Network, Parameters, Trace};
pub use optim::{sgd_step, Sgd};
pub use spec::{LayerSpec, LossKind, NetworkSpec, Op};
pub use tensor::Tensor3;
