//! Live teleoperation over WebSocket with retargeting, an IK execution
//! guard and demonstration recording.

pub mod protocol;
pub mod retarget;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, RecordCmd, ServerMessage};
pub use retarget::{retarget, Hand, HandPose, RetargetConfig, RetargetTarget};
pub use server::{serve, spawn, Mailbox, ServerConfig, ServerHandle};
pub use session::{guard_arm, TeleopSession, TickOutcome};
