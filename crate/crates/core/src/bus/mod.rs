//! In-process message broker: topics with append-only offset-ordered logs,
//! consumer groups, and schema-validated publishing.
//!
//! Three bus classes (data, analytics, knowledge) are recorded as topic
//! metadata for reporting; semantics are identical across classes. Topics
//! have a single partition; within a consumer group, messages are assigned
//! round-robin among members, and every group independently receives all
//! offsets.

mod broker;
mod schema;

pub use broker::{Broker, Subscriber};
pub use schema::{FieldKind, FieldSpec, Schema, SchemaFile};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which of the three buses a topic belongs to. Metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusClass {
    Data,
    Analytics,
    Knowledge,
}

impl std::fmt::Display for BusClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BusClass::Data => write!(f, "data"),
            BusClass::Analytics => write!(f, "analytics"),
            BusClass::Knowledge => write!(f, "knowledge"),
        }
    }
}

/// A field value carried in a message payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
    Timestamp(i64),
    FloatArray(Vec<f64>),
}

impl Value {
    fn matches(&self, kind: FieldKind) -> bool {
        matches!(
            (self, kind),
            (Value::Int(_), FieldKind::Integer)
                | (Value::Float(_), FieldKind::Float)
                | (Value::Text(_), FieldKind::Text)
                | (Value::Timestamp(_), FieldKind::Timestamp)
                | (Value::FloatArray(_), FieldKind::FloatArray)
        )
    }

    /// Convenience accessor for float fields.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    /// Convenience accessor for integer fields.
    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// Convenience accessor for text fields.
    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(v) => Some(v),
            _ => None,
        }
    }
}

/// Message payload: field name to value.
pub type Payload = BTreeMap<String, Value>;

/// A record appended to a topic log. Offsets are assigned by the broker and
/// are strictly increasing and gap-free within a topic.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub topic: String,
    pub key: Option<String>,
    pub payload: Payload,
    pub produced_at_ms: u64,
    pub offset: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BusError {
    #[error("topic already exists: {0}")]
    DuplicateTopic(String),
    #[error("unknown topic: {0}")]
    UnknownTopic(String),
    #[error("malformed schema: {0}")]
    MalformedSchema(String),
    #[error("topic has no registered schema: {0}")]
    NoSchema(String),
    #[error("schema violation on topic {topic}: {reason}")]
    SchemaViolation { topic: String, reason: String },
    #[error("duplicate member {member} in group {group}")]
    DuplicateMember { group: String, member: String },
    #[error("stale subscriber handle: member {member} of group {group} was removed")]
    StaleHandle { group: String, member: String },
    #[error("schema file error: {0}")]
    SchemaFile(String),
}

/// Helper for building payloads.
#[macro_export]
macro_rules! payload {
    ($($name:expr => $value:expr),* $(,)?) => {{
        let mut map = $crate::bus::Payload::new();
        $(map.insert($name.to_string(), $value);)*
        map
    }};
}
