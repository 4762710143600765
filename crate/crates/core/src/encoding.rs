//! Canonical binary encoding used for everything that is signed or hashed.
//!
//! Layout, one tag byte per value:
//!
//! ```text
//! 0x01 bytes   u32 BE length ‖ raw bytes
//! 0x02 uint    u64 BE (fixed width)
//! 0x03 list    u32 BE count ‖ values
//! 0x04 map     u32 BE count ‖ (u32 BE key length ‖ key ‖ value)*   keys sorted bytewise, unique
//! ```
//!
//! Decoding is strict: unsorted or duplicate keys, trailing bytes and
//! truncated input are all rejected, so every value has exactly one encoding.

use std::collections::BTreeMap;

use thiserror::Error;

const TAG_BYTES: u8 = 0x01;
const TAG_UINT: u8 = 0x02;
const TAG_LIST: u8 = 0x03;
const TAG_MAP: u8 = 0x04;

const MAX_DEPTH: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("unknown tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("map keys not strictly sorted")]
    UnsortedKeys,
    #[error("nesting too deep")]
    TooDeep,
    #[error("invalid UTF-8 in {0}")]
    InvalidUtf8(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("unexpected field `{0}`")]
    UnexpectedField(String),
    #[error("field `{field}`: expected {expected}")]
    WrongType { field: String, expected: &'static str },
    #[error("field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

/// A canonical value tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Bytes(Vec<u8>),
    Uint(u64),
    List(Vec<Value>),
    Map(BTreeMap<String, Value>),
}

impl Value {
    pub fn text(s: &str) -> Value {
        Value::Bytes(s.as_bytes().to_vec())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Value::Bytes(b) => {
                out.push(TAG_BYTES);
                put_len(out, b.len());
                out.extend_from_slice(b);
            }
            Value::Uint(n) => {
                out.push(TAG_UINT);
                out.extend_from_slice(&n.to_be_bytes());
            }
            Value::List(items) => {
                out.push(TAG_LIST);
                put_len(out, items.len());
                for item in items {
                    item.encode_into(out);
                }
            }
            Value::Map(entries) => {
                out.push(TAG_MAP);
                put_len(out, entries.len());
                for (k, v) in entries {
                    put_len(out, k.len());
                    out.extend_from_slice(k.as_bytes());
                    v.encode_into(out);
                }
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Value, DecodeError> {
        let mut cursor = Cursor { buf: bytes, pos: 0 };
        let v = cursor.value(0)?;
        let rest = bytes.len() - cursor.pos;
        if rest != 0 {
            return Err(DecodeError::TrailingBytes(rest));
        }
        Ok(v)
    }
}

fn put_len(out: &mut Vec<u8>, len: usize) {
    let len = u32::try_from(len).expect("canonical item longer than u32::MAX");
    out.extend_from_slice(&len.to_be_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated)?;
        if end > self.buf.len() {
            return Err(DecodeError::Truncated);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn value(&mut self, depth: usize) -> Result<Value, DecodeError> {
        if depth > MAX_DEPTH {
            return Err(DecodeError::TooDeep);
        }
        let tag = self.take(1)?[0];
        match tag {
            TAG_BYTES => {
                let n = self.u32()?;
                Ok(Value::Bytes(self.take(n)?.to_vec()))
            }
            TAG_UINT => {
                let b = self.take(8)?;
                let mut arr = [0u8; 8];
                arr.copy_from_slice(b);
                Ok(Value::Uint(u64::from_be_bytes(arr)))
            }
            TAG_LIST => {
                let n = self.u32()?;
                // every item is at least 9 bytes or 5 bytes; bound allocation by remaining input
                let mut items = Vec::with_capacity(n.min(self.buf.len() - self.pos));
                for _ in 0..n {
                    items.push(self.value(depth + 1)?);
                }
                Ok(Value::List(items))
            }
            TAG_MAP => {
                let n = self.u32()?;
                let mut entries = BTreeMap::new();
                let mut last: Option<String> = None;
                for _ in 0..n {
                    let klen = self.u32()?;
                    let key = std::str::from_utf8(self.take(klen)?)
                        .map_err(|_| DecodeError::InvalidUtf8("map key".into()))?
                        .to_string();
                    if let Some(prev) = &last {
                        if prev.as_bytes() >= key.as_bytes() {
                            return Err(DecodeError::UnsortedKeys);
                        }
                    }
                    let v = self.value(depth + 1)?;
                    last = Some(key.clone());
                    entries.insert(key, v);
                }
                Ok(Value::Map(entries))
            }
            other => Err(DecodeError::UnknownTag(other)),
        }
    }
}

/// Types with a canonical value representation.
pub trait Canonical: Sized {
    fn to_value(&self) -> Value;
    fn from_value(value: &Value) -> Result<Self, DecodeError>;

    fn canonical_bytes(&self) -> Vec<u8> {
        self.to_value().encode()
    }

    fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        Self::from_value(&Value::decode(bytes)?)
    }
}

/// Builder for struct-shaped maps.
#[derive(Default)]
pub struct MapBuilder(BTreeMap<String, Value>);

impl MapBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(mut self, key: &str, value: Value) -> Self {
        self.0.insert(key.to_string(), value);
        self
    }

    pub fn bytes(self, key: &str, b: &[u8]) -> Self {
        self.field(key, Value::Bytes(b.to_vec()))
    }

    pub fn text(self, key: &str, s: &str) -> Self {
        self.field(key, Value::text(s))
    }

    pub fn uint(self, key: &str, n: u64) -> Self {
        self.field(key, Value::Uint(n))
    }

    pub fn opt_text(self, key: &str, s: Option<&str>) -> Self {
        match s {
            Some(s) => self.text(key, s),
            None => self,
        }
    }

    pub fn build(self) -> Value {
        Value::Map(self.0)
    }
}

/// Strict reader for struct-shaped maps: every key must be consumed.
pub struct MapReader<'a> {
    entries: &'a BTreeMap<String, Value>,
    seen: Vec<&'a str>,
}

impl<'a> MapReader<'a> {
    pub fn new(value: &'a Value) -> Result<Self, DecodeError> {
        match value {
            Value::Map(entries) => Ok(Self { entries, seen: Vec::new() }),
            _ => Err(DecodeError::WrongType { field: "<root>".into(), expected: "map" }),
        }
    }

    pub fn get(&mut self, key: &str) -> Result<&'a Value, DecodeError> {
        let (k, v) = self
            .entries
            .get_key_value(key)
            .ok_or_else(|| DecodeError::MissingField(key.to_string()))?;
        self.seen.push(k.as_str());
        Ok(v)
    }

    pub fn optional(&mut self, key: &str) -> Option<&'a Value> {
        let (k, v) = self.entries.get_key_value(key)?;
        self.seen.push(k.as_str());
        Some(v)
    }

    pub fn bytes(&mut self, key: &str) -> Result<&'a [u8], DecodeError> {
        as_bytes(self.get(key)?, key)
    }

    pub fn fixed<const N: usize>(&mut self, key: &str) -> Result<[u8; N], DecodeError> {
        let b = self.bytes(key)?;
        b.try_into().map_err(|_| DecodeError::Invalid {
            field: key.to_string(),
            reason: format!("expected {N} bytes, got {}", b.len()),
        })
    }

    pub fn text(&mut self, key: &str) -> Result<String, DecodeError> {
        as_text(self.get(key)?, key)
    }

    pub fn opt_text(&mut self, key: &str) -> Result<Option<String>, DecodeError> {
        self.optional(key).map(|v| as_text(v, key)).transpose()
    }

    pub fn uint(&mut self, key: &str) -> Result<u64, DecodeError> {
        match self.get(key)? {
            Value::Uint(n) => Ok(*n),
            _ => Err(DecodeError::WrongType { field: key.to_string(), expected: "uint" }),
        }
    }

    pub fn list(&mut self, key: &str) -> Result<&'a [Value], DecodeError> {
        match self.get(key)? {
            Value::List(items) => Ok(items),
            _ => Err(DecodeError::WrongType { field: key.to_string(), expected: "list" }),
        }
    }

    pub fn decode<T: Canonical>(&mut self, key: &str) -> Result<T, DecodeError> {
        T::from_value(self.get(key)?)
    }

    pub fn decode_list<T: Canonical>(&mut self, key: &str) -> Result<Vec<T>, DecodeError> {
        self.list(key)?.iter().map(T::from_value).collect()
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        for k in self.entries.keys() {
            if !self.seen.contains(&k.as_str()) {
                return Err(DecodeError::UnexpectedField(k.clone()));
            }
        }
        Ok(())
    }
}

pub fn as_bytes<'a>(value: &'a Value, field: &str) -> Result<&'a [u8], DecodeError> {
    match value {
        Value::Bytes(b) => Ok(b),
        _ => Err(DecodeError::WrongType { field: field.to_string(), expected: "bytes" }),
    }
}

pub fn as_text(value: &Value, field: &str) -> Result<String, DecodeError> {
    let b = as_bytes(value, field)?;
    String::from_utf8(b.to_vec()).map_err(|_| DecodeError::InvalidUtf8(field.to_string()))
}

pub fn list_of<T: Canonical>(items: &[T]) -> Value {
    Value::List(items.iter().map(Canonical::to_value).collect())
}

pub fn text_list(items: &[String]) -> Value {
    Value::List(items.iter().map(|s| Value::text(s)).collect())
}

pub fn decode_text_list(items: &[Value], field: &str) -> Result<Vec<String>, DecodeError> {
    items.iter().map(|v| as_text(v, field)).collect()
}

pub fn text_map(map: &BTreeMap<String, String>) -> Value {
    Value::Map(map.iter().map(|(k, v)| (k.clone(), Value::text(v))).collect())
}
