//! Dense volumetric tensors, convolutions, activations, loss, optimizer and
//! the layer graph used by the compression networks.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod tensor;

pub use activation::{cgdn, gdn, GdnParams};
pub use adam::AdamState;
pub use checkpoint::Checkpoint;
pub use conv::{conv1d_axis, conv2d_plane, conv3d, conv3d_transposed, KernelShape};
pub use gradcheck::finite_difference_check;
pub use layers::{Layer, Sequential};
pub use loss::{focal_loss, FocalLossParams};
pub use tensor::{Axis, Param, Shape, Tensor};
