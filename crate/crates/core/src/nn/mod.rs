//! Micro ResNet with bottleneck attention, statistic pooling and a
//! domain-adversarial head, with hand-written backward passes.

pub mod bam;
pub mod gradcheck;
pub mod layers;
pub mod net;
pub mod params;
pub mod tensor;
pub mod train;

pub use bam::{bam_forward, BamModule};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use layers::Mode;
pub use net::{dat_loss, grl_backward, grl_forward, stat_pool, BlockConfig, LossReport, MicroNet, MicroNetConfig};
pub use params::{Grads, Group, ParamStore};
pub use tensor::{FeatureMap3, Tensor4};
pub use train::{extract_embedding, prepare_features, train, Frontend, Stage, TrainConfig, TrainExample, TrainHistory};
