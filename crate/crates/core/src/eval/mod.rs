//! Image-quality metrics, the quadratic-memory attention reference and the
//! activation-memory scaling benchmark.

mod attention;
mod metrics;
mod scaling;

pub use attention::{NaiveAttention, NAIVE_ATTENTION_MAX_POSITIONS};
pub use metrics::{gaussian_window, psnr, ssim, Psnr, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use scaling::{fgfe_peak_floats, fit_exponent, memory_scaling_report, naive_peak_floats, ScalingReport, ScalingRow};
