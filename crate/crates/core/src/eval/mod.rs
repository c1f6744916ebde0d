//! Evaluation: closed-loop rollouts, generation metrics and the flow
//! ablation.

pub mod ablation;
pub mod fvd;
pub mod metrics;
pub mod report;
pub mod rollout;

pub use ablation::{ablation_table, AblationConfig};
pub use fvd::{fvd_proxy, FeatureExtractor};
pub use metrics::{psnr, psnr_video, ssim, ssim_video};
pub use report::{evaluate, EvalReport, MetricRow};
pub use rollout::{rollout, Controller, RolloutConfig, RolloutTrace};
