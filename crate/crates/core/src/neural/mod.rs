//! Single-threaded training stack for the moment-domain dehazing network.
//!
//! Tensors are `f64` in memory; checkpoints store `f32`.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod discriminator;
pub mod features;
pub mod generator;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod loss;
pub mod params;
pub mod tensor;
pub mod train;

pub use adam::{adam_step, AdamConfig, Moments};
pub use checkpoint::TensorFile;
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, Padding};
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use features::{feature_loss, FeatureBank};
pub use generator::{Generator, GeneratorConfig};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use graph::{Graph, NormMode, Var};
pub use layers::{LayerKind, LayerSpec};
pub use loss::{gan_losses, mse_loss, smooth_l1_loss, total_loss, LossParts, LossWeights};
pub use params::{ParamRole, ParamStore};
pub use tensor::Tensor4;
pub use train::{train, train_step, LossRecord, ModelState, PatchSet, TrainConfig};
