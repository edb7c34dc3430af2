//! Image-quality metrics and the training loss.

mod loss;
mod psnr;
mod report;
mod ssim;

pub use loss::{combined_loss, combined_loss_grad, LossForm, LossParts};
pub use psnr::{mse, mse_masked, psnr, Psnr, PEAK};
pub use report::{aggregate, evaluate_pair, MetricsReport, MetricsRow, SliceMetrics, Summary};
pub use ssim::{ssim, ssim_grad, ssim_map, SsimConfig, WINDOW_SIGMA, WINDOW_SIZE};
