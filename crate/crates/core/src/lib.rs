//! Flow-guided video prediction for bimanual manipulation at desk scale.
//!
//! The pipeline has three learned stages grounded in a deterministic 2D
//! dual-arm simulator:
//!
//! * [`text2flow`] generates a color-wheel flow video from the initial
//!   observation and an instruction,
//! * [`flow2video`] predicts the RGB trajectory with the flow video
//!   concatenated along the channel axis,
//! * [`policy`] turns a predicted goal frame into an executable action chunk.
//!
//! [`dataset`] collects expert demonstrations and cuts them into fixed-length
//! training clips, [`eval`] runs the closed loop and the metric suite, and
//! [`teleop`] exposes the live simulator over WebSocket for human
//! demonstrations.

pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod flow2video;
pub mod flowcodec;
pub mod image;
pub mod policy;
pub mod rng;
pub mod sim2d;
pub mod teleop;
pub mod text2flow;

pub use error::{Error, Result};
