//! Shared pieces of the `phashreg` binary: input resolution, JSON views,
//! exit-code mapping and the HTTP service.

pub mod service;

use std::path::Path;

use anyhow::{anyhow, Context};
use phashreg::harness::HarnessError;
use phashreg::prefix::PrefixError;
use phashreg::{phash_bytes, phash_file, Digest, HashError, PerceptualHash, Registry, RegistryError};
use serde::Serialize;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const INVALID_INPUT: u8 = 3;
    pub const NOT_FOUND: u8 = 4;
    pub const STORAGE: u8 = 5;
}

/// Input that could not be interpreted; maps to [`exit::INVALID_INPUT`].
#[derive(Debug)]
pub struct BadInput(pub String);

impl std::fmt::Display for BadInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BadInput {}

pub fn bad_input(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(BadInput(msg.into()))
}

/// Pick an exit code from the first recognizable error in the chain.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<BadInput>() || cause.is::<HashError>() || cause.is::<PrefixError>() {
            return exit::INVALID_INPUT;
        }
        if let Some(e) = cause.downcast_ref::<RegistryError>() {
            return registry_code(e);
        }
        if let Some(e) = cause.downcast_ref::<HarnessError>() {
            return match e {
                HarnessError::Config(_) => exit::INVALID_INPUT,
                HarnessError::Registry(e) => registry_code(e),
                HarnessError::Csv(_) | HarnessError::Io(_) => exit::STORAGE,
            };
        }
        if cause.is::<std::io::Error>() {
            return exit::STORAGE;
        }
    }
    exit::FAILURE
}

fn registry_code(e: &RegistryError) -> u8 {
    match e {
        RegistryError::InvalidInput(_) | RegistryError::Prefix(_) => exit::INVALID_INPUT,
        RegistryError::NotFound(_) => exit::NOT_FOUND,
        RegistryError::Integrity(_)
        | RegistryError::Io { .. }
        | RegistryError::AlreadyExists(_)
        | RegistryError::Commitment(_) => exit::STORAGE,
    }
}

fn looks_like_hash(s: &str) -> bool {
    s.len() == 16 && s.bytes().all(|b| b.is_ascii_hexdigit())
}

/// An existing file is hashed; otherwise the argument must be 16 hex digits.
pub fn resolve_hash(arg: &str) -> anyhow::Result<PerceptualHash> {
    let path = Path::new(arg);
    if path.is_file() {
        return phash_file(path).with_context(|| format!("hashing {arg}"));
    }
    if looks_like_hash(arg) {
        return Ok(PerceptualHash::from_hex(arg)?);
    }
    Err(bad_input(format!(
        "{arg:?} is neither an image file nor a 16-digit hex hash"
    )))
}

/// Hash from a request body holding either `hash` hex or base64 image bytes.
pub fn hash_from_request(hash: Option<&str>, image_base64: Option<&str>) -> anyhow::Result<PerceptualHash> {
    use base64::Engine as _;
    match (hash, image_base64) {
        (Some(h), None) => Ok(PerceptualHash::from_hex(h)?),
        (None, Some(b)) => {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(b.trim())
                .map_err(|e| bad_input(format!("image_base64: {e}")))?;
            Ok(phash_bytes(&bytes)?)
        }
        _ => Err(bad_input("exactly one of hash or image_base64 is required")),
    }
}

/// Current commitment state, as printed by `phashreg root` and `GET /root`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RootView {
    pub root: Digest,
    pub entries: usize,
    pub buckets: usize,
    /// Sequence number of the latest ledger record.
    pub ledger_seq: Option<u64>,
    /// Chain digest of the latest ledger record.
    pub ledger_head: Option<Digest>,
}

impl RootView {
    pub fn of(reg: &Registry) -> Self {
        let latest = reg.ledger().latest();
        Self {
            root: reg.root(),
            entries: reg.len(),
            buckets: reg.trie().len(),
            ledger_seq: latest.map(|r| r.seq),
            ledger_head: latest.map(|r| r.chain),
        }
    }
}

/// Pretty JSON with a trailing newline. Field order follows the structs, so
/// equal values always print identical bytes.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("views serialize");
    s.push('\n');
    s
}

/// Result of a registration, shared by the CLI and the service.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegisterView {
    pub entry: phashreg::RegistryEntry,
    pub root: Digest,
    /// True when a repeated `request_id` returned the earlier entry.
    pub replayed: bool,
}
