//! Diffusion building blocks shared by the flow, video and action models.

pub mod checkpoint;
pub mod denoiser;
pub mod gradcheck;
pub mod nn;
pub mod params;
pub mod schedule;
pub mod text;
pub mod train;
pub mod video;

pub use checkpoint::Checkpoint;
pub use denoiser::{Denoiser, DenoiserConfig, VideoCond};
pub use params::{Init, ParamStore};
pub use schedule::NoiseSchedule;
pub use text::Vocabulary;
pub use train::{tail_mean, train_loop, TrainConfig};
pub use video::{VideoDiffusion, VideoExample};
