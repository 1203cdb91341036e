//! Schema registry types and the JSON schema-file format.

use serde::{Deserialize, Serialize};

use super::{BusError, Payload};

/// Field kinds supported by the registry. Nested records are out of scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    #[serde(rename = "integer")]
    Integer,
    #[serde(rename = "float")]
    Float,
    #[serde(rename = "text")]
    Text,
    #[serde(rename = "timestamp")]
    Timestamp,
    #[serde(rename = "float-array")]
    FloatArray,
}

/// One field of a schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    pub required: bool,
}

impl FieldSpec {
    pub fn required(name: &str, kind: FieldKind) -> Self {
        FieldSpec {
            name: name.to_string(),
            kind,
            required: true,
        }
    }

    pub fn optional(name: &str, kind: FieldKind) -> Self {
        FieldSpec {
            name: name.to_string(),
            kind,
            required: false,
        }
    }
}

/// A registered, immutable schema version for a topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub topic: String,
    pub version: u32,
    pub fields: Vec<FieldSpec>,
}

impl Schema {
    /// Check field-list well-formedness: non-empty unique names.
    pub(crate) fn check_fields(fields: &[FieldSpec]) -> Result<(), BusError> {
        let mut seen = std::collections::HashSet::new();
        for f in fields {
            if f.name.is_empty() {
                return Err(BusError::MalformedSchema("empty field name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(BusError::MalformedSchema(format!(
                    "duplicate field name: {}",
                    f.name
                )));
            }
        }
        Ok(())
    }

    /// Validate a payload against this schema version.
    pub fn validate(&self, payload: &Payload) -> Result<(), String> {
        for f in &self.fields {
            match payload.get(&f.name) {
                Some(v) => {
                    if !v.matches(f.kind) {
                        return Err(format!("field {} has wrong kind", f.name));
                    }
                }
                None if f.required => {
                    return Err(format!("missing required field {}", f.name));
                }
                None => {}
            }
        }
        for name in payload.keys() {
            if !self.fields.iter().any(|f| &f.name == name) {
                return Err(format!("unknown field {name}"));
            }
        }
        Ok(())
    }
}

/// On-disk schema document: `{"topic": str, "fields": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaFile {
    pub topic: String,
    pub fields: Vec<FieldSpec>,
}
