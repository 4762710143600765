//! Small fixed-size identifiers shared across protocol modules.

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::b64;
use crate::crypto::digest::to_hex;
use crate::encoding::{Canonical, DecodeError, Value};

macro_rules! id16 {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(#[serde(with = "b64::array")] pub [u8; 16]);

        impl $name {
            pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
                let mut b = [0u8; 16];
                rng.fill_bytes(&mut b);
                $name(b)
            }

            pub fn as_bytes(&self) -> &[u8; 16] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                to_hex(&self.0)
            }

            pub fn from_hex(text: &str) -> Option<Self> {
                if text.len() != 32 {
                    return None;
                }
                let mut b = [0u8; 16];
                for (i, chunk) in text.as_bytes().chunks(2).enumerate() {
                    let s = std::str::from_utf8(chunk).ok()?;
                    b[i] = u8::from_str_radix(s, 16).ok()?;
                }
                Some($name(b))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl Canonical for $name {
            fn to_value(&self) -> Value {
                Value::Bytes(self.0.to_vec())
            }

            fn from_value(value: &Value) -> Result<Self, DecodeError> {
                let raw = crate::encoding::as_bytes(value, stringify!($name))?;
                raw.try_into().map($name).map_err(|_| DecodeError::Invalid {
                    field: stringify!($name).into(),
                    reason: format!("expected 16 bytes, got {}", raw.len()),
                })
            }
        }
    };
}

id16!(
    /// Issuer-assigned credential identifier; the revocation address.
    CredentialId
);
id16!(
    /// Single-use freshness value.
    Nonce
);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_round_trip() {
        let id = CredentialId([7u8; 16]);
        assert_eq!(CredentialId::from_hex(&id.to_hex()), Some(id));
        assert_eq!(CredentialId::from_hex("zz"), None);
    }

    #[test]
    fn json_is_base64() {
        let n = Nonce([0u8; 16]);
        assert_eq!(serde_json::to_string(&n).unwrap(), "\"AAAAAAAAAAAAAAAAAAAAAA==\"");
    }
}
