use std::collections::BTreeMap;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::bktree::EntryId;
use crate::hashing::PerceptualHash;

/// Longest accepted platform identifier, in bytes.
pub const MAX_PLATFORM_ID_LEN: usize = 64;

/// RFC 3339 UTC timestamps with whole seconds, e.g. `2026-01-31T12:00:00Z`.
pub mod timestamp {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn format(t: &DateTime<Utc>) -> String {
        t.to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    pub fn parse(s: &str) -> Result<DateTime<Utc>, chrono::ParseError> {
        Ok(truncate(DateTime::parse_from_rfc3339(s)?.with_timezone(&Utc)))
    }

    pub fn truncate(t: DateTime<Utc>) -> DateTime<Utc> {
        DateTime::from_timestamp(t.timestamp(), 0).unwrap_or(t)
    }

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }
}

/// A registered hash and its provenance metadata.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryEntry {
    pub entry_id: EntryId,
    pub hash: PerceptualHash,
    #[serde(with = "timestamp")]
    pub created_at: DateTime<Utc>,
    pub platform_id: String,
    /// Open-ended metadata (signatures, model names, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl RegistryEntry {
    /// Byte-stable JSON encoding hashed into the bucket digest.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("entry serialization is infallible")
    }
}

/// Caller-supplied metadata for a registration.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryMetadata {
    /// Defaults to the registration time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<DateTime<Utc>>,
    pub platform_id: String,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

impl EntryMetadata {
    pub fn new(platform_id: impl Into<String>) -> Self {
        Self {
            platform_id: platform_id.into(),
            ..Self::default()
        }
    }

    pub fn at(mut self, created_at: DateTime<Utc>) -> Self {
        self.created_at = Some(created_at);
        self
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.extra.insert(key.into(), value.into());
        self
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        let p = &self.platform_id;
        if p.is_empty() || p.len() > MAX_PLATFORM_ID_LEN {
            return Err(format!(
                "platform id must be 1..={MAX_PLATFORM_ID_LEN} bytes"
            ));
        }
        if p.chars().any(|c| c.is_whitespace() || c.is_control()) {
            return Err(format!("platform id {p:?} contains whitespace"));
        }
        if self.extra.keys().any(|k| k.is_empty()) {
            return Err("empty metadata key".into());
        }
        Ok(())
    }
}
