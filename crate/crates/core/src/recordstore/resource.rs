use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::RecordError;
use crate::canonical;
use crate::digest::Digest;

/// The closed set of resource types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResourceType {
    Patient,
    MedicationRequest,
    Observation,
    Coverage,
}

impl ResourceType {
    pub const ALL: [ResourceType; 4] =
        [ResourceType::Patient, ResourceType::MedicationRequest, ResourceType::Observation, ResourceType::Coverage];

    pub fn as_str(self) -> &'static str {
        match self {
            ResourceType::Patient => "Patient",
            ResourceType::MedicationRequest => "MedicationRequest",
            ResourceType::Observation => "Observation",
            ResourceType::Coverage => "Coverage",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// Required attributes and the value kinds each accepts.
    pub fn schema(self) -> &'static [(&'static str, &'static [AttrKind])] {
        use AttrKind::*;
        match self {
            ResourceType::Patient => &[("name", &[Str]), ("birthDate", &[Str])],
            ResourceType::MedicationRequest => &[("medicationCode", &[Str]), ("status", &[Str])],
            ResourceType::Observation => &[("code", &[Str]), ("value", &[Str, Int])],
            ResourceType::Coverage => &[("payer", &[Str]), ("memberNumber", &[Str])],
        }
    }
}

impl fmt::Display for ResourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrKind {
    Str,
    Int,
    Bool,
}

/// Attribute values are flat: string, integer or boolean.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl AttrValue {
    pub fn kind(&self) -> AttrKind {
        match self {
            AttrValue::Str(_) => AttrKind::Str,
            AttrValue::Int(_) => AttrKind::Int,
            AttrValue::Bool(_) => AttrKind::Bool,
        }
    }
}

impl From<&str> for AttrValue {
    fn from(s: &str) -> Self {
        AttrValue::Str(s.to_owned())
    }
}

impl From<String> for AttrValue {
    fn from(s: String) -> Self {
        AttrValue::Str(s)
    }
}

impl From<i64> for AttrValue {
    fn from(n: i64) -> Self {
        AttrValue::Int(n)
    }
}

impl From<bool> for AttrValue {
    fn from(b: bool) -> Self {
        AttrValue::Bool(b)
    }
}

/// A health record. `resourceType` is kept as text so that unknown types
/// surface as schema violations rather than decode errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Resource {
    pub resource_type: String,
    pub id: String,
    pub subject_patient_id: String,
    pub attributes: BTreeMap<String, AttrValue>,
    pub authored_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub problem: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.problem)
    }
}

impl Resource {
    pub fn new(resource_type: ResourceType, id: impl Into<String>, subject_patient_id: impl Into<String>, authored_at: u64) -> Self {
        Resource {
            resource_type: resource_type.as_str().to_owned(),
            id: id.into(),
            subject_patient_id: subject_patient_id.into(),
            attributes: BTreeMap::new(),
            authored_at,
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<AttrValue>) -> Self {
        self.attributes.insert(key.to_owned(), value.into());
        self
    }

    pub fn kind(&self) -> Option<ResourceType> {
        ResourceType::parse(&self.resource_type)
    }

    /// Checks type-specific required attributes and their value kinds.
    pub fn validate(&self) -> Result<(), RecordError> {
        let mut errors = Vec::new();
        let mut err = |field: &str, problem: String| errors.push(FieldError { field: field.to_owned(), problem });
        if self.id.is_empty() {
            err("id", "must be non-empty".into());
        }
        if self.subject_patient_id.is_empty() {
            err("subjectPatientId", "must be non-empty".into());
        }
        match self.kind() {
            None => err("resourceType", format!("unknown resource type {:?}", self.resource_type)),
            Some(kind) => {
                if kind == ResourceType::Patient && self.subject_patient_id != self.id {
                    err("subjectPatientId", "must equal id for Patient resources".into());
                }
                for (name, kinds) in kind.schema() {
                    match self.attributes.get(*name) {
                        None => err(&format!("attributes.{name}"), "required".into()),
                        Some(v) if !kinds.contains(&v.kind()) => {
                            err(&format!("attributes.{name}"), format!("expected one of {kinds:?}, found {:?}", v.kind()))
                        }
                        Some(_) => {}
                    }
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(RecordError::SchemaViolation(errors))
        }
    }

    /// Canonical bytes: the exact bytes stored and digested.
    pub fn canonical_bytes(&self) -> Result<Vec<u8>, RecordError> {
        canonical::to_vec(self).map_err(|e| RecordError::Decode(e.to_string()))
    }

    pub fn digest(&self) -> Result<Digest, RecordError> {
        Ok(Digest::of(&self.canonical_bytes()?))
    }

    /// Decodes canonical bytes. Schema is not checked here.
    pub fn decode(bytes: &[u8]) -> Result<Self, RecordError> {
        let value = canonical::parse_strict(bytes).map_err(|e| RecordError::Decode(e.to_string()))?;
        serde_json::from_value(value).map_err(|e| RecordError::Decode(e.to_string()))
    }

    /// Every attribute value rendered as text, for leak scans.
    pub fn attribute_strings(&self) -> impl Iterator<Item = String> + '_ {
        self.attributes.values().map(|v| match v {
            AttrValue::Str(s) => s.clone(),
            AttrValue::Int(n) => n.to_string(),
            AttrValue::Bool(b) => b.to_string(),
        })
    }
}
