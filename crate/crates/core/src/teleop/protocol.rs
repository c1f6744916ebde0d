//! JSON text-frame messages.

use serde::{Deserialize, Serialize};

use super::retarget::{Hand, HandPose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordCmd {
    Start,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Pose { hand: Hand, t: i64, x: f64, y: f64, theta: f64, pinch: f64 },
    Reset { task: String, seed: u64 },
    Record {
        cmd: RecordCmd,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        success: Option<bool>,
    },
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}

pub fn pose_from_message(hand: Hand, t: i64, x: f64, y: f64, theta: f64, pinch: f64) -> HandPose {
    HandPose { t, hand, position: [x, y], orientation: theta, pinch }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Frame {
        t: u64,
        png_b64: String,
        joints: [f64; 4],
        grippers: [f64; 2],
        reward: u8,
        held: Vec<Hand>,
    },
    Ack { msg: String },
    Error { msg: String },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))
    }
}
