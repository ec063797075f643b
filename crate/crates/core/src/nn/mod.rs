//! A self-contained convolutional network engine in plain f64.
//!
//! No external math or autodiff libraries: every forward and backward pass
//! is written out and verified against central finite differences (see
//! [`gradcheck`]). The architecture is fixed at three conv blocks
//! (3×3 conv, stride 1, same padding → batchnorm → ReLU → 2×2 max pool),
//! dropout after the final pool, and three fully connected layers ending
//! in a 2-way softmax.

pub mod adam;
pub mod gradcheck;
pub mod network;
pub mod ops;
pub mod tensor;

pub use adam::{AdamHyper, AdamState};
pub use gradcheck::{central_diff, grad_check, max_rel_error, GradCheckReport};
pub use network::{HeadInit, Network, NetworkAdam, NetworkConfig, NetworkGrads};
pub use ops::{
    batchnorm2d_backward, batchnorm2d_infer, batchnorm2d_train, conv2d, conv2d_backward, dense,
    dense_backward, dropout, dropout_backward, maxpool2, maxpool2_backward, relu, relu_backward,
    softmax, softmax_xent, update_running_stats, BnCache, NnError, Padding,
};
pub use tensor::Tensor;
