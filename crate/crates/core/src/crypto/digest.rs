//! The single hash function used everywhere, plus salted attribute digests.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::b64;

pub const DIGEST_ALGORITHM: &str = "sha-256";
pub const DIGEST_LEN: usize = 32;
pub const SALT_LEN: usize = 16;

pub type Digest = [u8; DIGEST_LEN];
pub type Salt = [u8; SALT_LEN];

pub fn hash(bytes: &[u8]) -> Digest {
    Sha256::digest(bytes).into()
}

/// Hash of length-prefixed parts, so part boundaries are unambiguous.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u32).to_be_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaltedDigest {
    #[serde(with = "b64::array")]
    pub salt: Salt,
    #[serde(with = "b64::array")]
    pub digest: Digest,
}

/// Digest of one attribute: `H(salt ‖ len ‖ name ‖ len ‖ value)`.
pub fn attribute_digest(salt: &Salt, name: &str, value: &str) -> Digest {
    let mut hasher = Sha256::new();
    hasher.update(salt);
    for part in [name.as_bytes(), value.as_bytes()] {
        hasher.update((part.len() as u32).to_be_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

pub fn salted_digest<R: RngCore + ?Sized>(name: &str, value: &str, rng: &mut R) -> SaltedDigest {
    let mut salt = [0u8; SALT_LEN];
    rng.fill_bytes(&mut salt);
    SaltedDigest { salt, digest: attribute_digest(&salt, name, value) }
}

impl SaltedDigest {
    pub fn matches(&self, name: &str, value: &str) -> bool {
        attribute_digest(&self.salt, name, value) == self.digest
    }
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
