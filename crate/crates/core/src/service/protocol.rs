//! Wire messages. Every frame is a JSON object whose `type` field names the
//! message.
//!
//! Client to server:
//!
//! | type              | fields                                   |
//! |-------------------|------------------------------------------|
//! | `SubmitUtterance` | `transcript`: string                     |
//! | `Pose`            | `x`, `y`: room metres; `heading`: radians |
//! | `DiveIn`          | `island_id`: integer                     |
//! | `DiveOut`         |                                          |
//! | `Trigger`         | `orb_id`: id of the orb's target island  |
//! | `EndSession`      |                                          |
//!
//! Server to client:
//!
//! | type            | fields                                                   |
//! |-----------------|----------------------------------------------------------|
//! | `SceneSnapshot` | `state`: full scene state                                |
//! | `SceneDelta`    | `from_seq`, `to_seq`, `events`: contiguous event range   |
//! | `Ack`           | `seq`: last seq committed when the message was accepted  |
//! | `Error`         | `code`: stable identifier; `detail`: human-readable text |
//!
//! Each client message gets exactly one `Ack` or `Error`. Deltas are
//! broadcast to every subscriber of the session in seq order.

use serde::{Deserialize, Serialize};

use crate::model::{SceneState, SessionEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum ClientMessage {
    SubmitUtterance { transcript: String },
    Pose { x: f64, y: f64, heading: f64 },
    DiveIn { island_id: u32 },
    DiveOut,
    Trigger { orb_id: u32 },
    EndSession,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ServerMessage {
    SceneSnapshot {
        state: Box<SceneState>,
    },
    SceneDelta {
        from_seq: u64,
        to_seq: u64,
        events: Vec<SessionEvent>,
    },
    Ack {
        seq: u64,
    },
    Error {
        code: String,
        detail: String,
    },
}

impl ServerMessage {
    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        ServerMessage::Error {
            code: code.to_string(),
            detail: detail.into(),
        }
    }

    /// `None` for an empty batch.
    pub fn delta(events: Vec<SessionEvent>) -> Option<Self> {
        let from_seq = events.first()?.seq;
        let to_seq = events.last()?.seq;
        Some(ServerMessage::SceneDelta {
            from_seq,
            to_seq,
            events,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server message serializes")
    }
}
