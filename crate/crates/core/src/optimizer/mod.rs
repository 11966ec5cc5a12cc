//! Inverse rendering: loss, metrics, bounded Adam and densification.

mod adam;
mod densify;
mod loss;
mod train;

pub use adam::{bounded_adam_step, flatten, unflatten, Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use densify::{prune, split, split_one, GradStat};
pub use loss::{display_metrics, loss, mse, psnr, srgb_loss, ssim, LossValue, Metrics};
pub use train::{
    scene_gradients, train, IterationRecord, LearningRates, TrainConfig, TrainReport, View,
};
