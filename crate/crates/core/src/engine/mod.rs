//! Dense tensor compute with hand-written backward passes: planar and
//! row-untied convolution, max pooling, ReLU, batch normalization, ADAM and
//! the L2 loss.

mod activation;
mod adam;
mod blob;
mod conv;
pub mod gradcheck;
mod loss;
mod pool;
mod rowconv;
mod tensor;

pub use activation::{relu, relu_backward, relu_inplace, BatchNorm, BatchNormCache, BatchNormGrads, BN_EPS};
pub use adam::AdamState;
pub use blob::{BlobIndexEntry, BlobRecord, WeightBlob};
pub use conv::{Conv2d, Conv2dGrads, Padding};
pub use loss::{l2_loss, l2_loss_slice};
pub use pool::{MaxPool, PoolIndices};
pub use rowconv::{RowConvGrads, RowKernel, RowUntiedConv};
pub use tensor::{Scalar, Tensor};
