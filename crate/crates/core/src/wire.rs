//! Framing, canonical serialization and the codec registry for bridge traffic.
//!
//! Every frame is a 4-byte big-endian length prefix followed by the canonical
//! JSON encoding of a [`MessageEnvelope`]. See `docs/PROTOCOL.md` for the
//! byte-level rules and worked dumps.

use std::any::{Any, TypeId};
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Largest accepted frame body, in bytes.
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;
/// Longest accepted topic or msg_type, in bytes.
pub const MAX_NAME_LEN: usize = 256;
const PREFIX_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WireError {
    #[error("invalid envelope: {0}")]
    EnvelopeInvalid(String),
    #[error("frame of {len} bytes exceeds the {max} byte limit")]
    FrameTooLarge { len: usize, max: usize },
    #[error("malformed frame body: {0}")]
    MalformedBody(String),
    #[error("msg_type `{0}` is already registered")]
    DuplicateMsgType(String),
    #[error("no codec registered for msg_type `{0}`")]
    UnknownMsgType(String),
    #[error("codec for `{msg_type}` handles `{expected}`, not the requested type")]
    CodecTypeMismatch { msg_type: String, expected: &'static str },
    #[error("codec for `{msg_type}` rejected payload: {reason}")]
    Codec { msg_type: String, reason: String },
}

/// One timestamped, topic-addressed JSON payload.
///
/// Fields are declared in canonical (sorted) key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageEnvelope {
    pub msg_type: String,
    pub payload: Value,
    pub sequence: u64,
    pub sim_time: f64,
    pub topic: String,
}

impl MessageEnvelope {
    pub fn new(
        topic: impl Into<String>,
        msg_type: impl Into<String>,
        sequence: u64,
        sim_time: f64,
        payload: Value,
    ) -> Self {
        Self {
            msg_type: msg_type.into(),
            payload,
            sequence,
            sim_time,
            topic: topic.into(),
        }
    }

    /// Checks the per-envelope invariants (names and timestamp).
    pub fn validate(&self) -> Result<(), WireError> {
        validate_name("topic", &self.topic)?;
        validate_name("msg_type", &self.msg_type)?;
        if !self.sim_time.is_finite() || self.sim_time < 0.0 {
            return Err(WireError::EnvelopeInvalid(format!(
                "sim_time must be finite and non-negative, got {}",
                self.sim_time
            )));
        }
        Ok(())
    }

    /// Canonical JSON body of this envelope (no length prefix).
    pub fn to_canonical_json(&self) -> String {
        let mut out = String::with_capacity(64);
        out.push_str("{\"msg_type\":");
        write_string(&mut out, &self.msg_type);
        out.push_str(",\"payload\":");
        write_canonical(&mut out, &self.payload);
        let _ = write!(out, ",\"sequence\":{}", self.sequence);
        out.push_str(",\"sim_time\":");
        write_f64(&mut out, self.sim_time);
        out.push_str(",\"topic\":");
        write_string(&mut out, &self.topic);
        out.push('}');
        out
    }
}

fn validate_name(field: &str, name: &str) -> Result<(), WireError> {
    if name.is_empty() {
        return Err(WireError::EnvelopeInvalid(format!("{field} is empty")));
    }
    if name.len() > MAX_NAME_LEN {
        return Err(WireError::EnvelopeInvalid(format!(
            "{field} is {} bytes, limit is {MAX_NAME_LEN}",
            name.len()
        )));
    }
    if name.chars().any(char::is_control) {
        return Err(WireError::EnvelopeInvalid(format!(
            "{field} contains a control character"
        )));
    }
    Ok(())
}

/// Renders `value` as canonical JSON: object keys sorted by byte value, no
/// insignificant whitespace, numbers in shortest round-trip form.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(&mut out, value);
    out
}

fn write_canonical(out: &mut String, value: &Value) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            // serde_json prints integers verbatim and floats through ryu.
            let _ = write!(out, "{n}");
        }
        Value::String(s) => write_string(out, s),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_unstable_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push('{');
            for (i, (key, item)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_string(out, key);
                out.push(':');
                write_canonical(out, item);
            }
            out.push('}');
        }
    }
}

fn write_string(out: &mut String, s: &str) {
    // Serializing a &str cannot fail.
    out.push_str(&serde_json::to_string(s).expect("string serialization"));
}

fn write_f64(out: &mut String, v: f64) {
    match serde_json::Number::from_f64(v) {
        Some(n) => {
            let _ = write!(out, "{n}");
        }
        None => out.push_str("null"),
    }
}

/// Encodes one envelope as prefix + canonical body.
pub fn encode_frame(envelope: &MessageEnvelope) -> Result<Vec<u8>, WireError> {
    envelope.validate()?;
    let body = envelope.to_canonical_json();
    if body.len() > MAX_FRAME_LEN {
        return Err(WireError::FrameTooLarge {
            len: body.len(),
            max: MAX_FRAME_LEN,
        });
    }
    let mut frame = Vec::with_capacity(PREFIX_LEN + body.len());
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(body.as_bytes());
    Ok(frame)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    Frame {
        envelope: MessageEnvelope,
        consumed: usize,
    },
    NeedMoreData,
}

/// Decodes the first frame in `buffer` without consuming anything when the
/// frame is incomplete. Trailing bytes after the frame are left untouched.
pub fn decode_frame(buffer: &[u8]) -> Result<Decoded, WireError> {
    let Some(prefix) = buffer.get(..PREFIX_LEN) else {
        return Ok(Decoded::NeedMoreData);
    };
    let len = u32::from_be_bytes([prefix[0], prefix[1], prefix[2], prefix[3]]) as usize;
    if len > MAX_FRAME_LEN {
        return Err(WireError::FrameTooLarge {
            len,
            max: MAX_FRAME_LEN,
        });
    }
    let Some(body) = buffer.get(PREFIX_LEN..PREFIX_LEN + len) else {
        return Ok(Decoded::NeedMoreData);
    };
    let text =
        std::str::from_utf8(body).map_err(|e| WireError::MalformedBody(format!("utf-8: {e}")))?;
    let envelope: MessageEnvelope =
        serde_json::from_str(text).map_err(|e| WireError::MalformedBody(e.to_string()))?;
    envelope
        .validate()
        .map_err(|e| WireError::MalformedBody(e.to_string()))?;
    Ok(Decoded::Frame {
        envelope,
        consumed: PREFIX_LEN + len,
    })
}

/// Accumulates stream chunks and yields whole envelopes.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    start: usize,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, chunk: &[u8]) {
        if self.start > 0 && self.start == self.buf.len() {
            self.buf.clear();
            self.start = 0;
        }
        self.buf.extend_from_slice(chunk);
    }

    /// Next complete envelope, or `None` when more bytes are needed.
    pub fn next_envelope(&mut self) -> Result<Option<MessageEnvelope>, WireError> {
        match decode_frame(&self.buf[self.start..])? {
            Decoded::NeedMoreData => {
                if self.start > 0 {
                    self.buf.drain(..self.start);
                    self.start = 0;
                }
                Ok(None)
            }
            Decoded::Frame { envelope, consumed } => {
                self.start += consumed;
                Ok(Some(envelope))
            }
        }
    }

    /// Bytes received but not yet decoded.
    pub fn buffered(&self) -> usize {
        self.buf.len() - self.start
    }
}

type EncodeFn = Box<dyn Fn(&dyn Any) -> Option<Value> + Send + Sync>;
type DecodeFn = Box<dyn Fn(&Value) -> Result<Box<dyn Any + Send>, String> + Send + Sync>;

struct Codec {
    type_id: TypeId,
    type_name: &'static str,
    encode: EncodeFn,
    decode: DecodeFn,
}

/// A decoded payload: typed when a codec is registered, raw JSON otherwise.
pub enum Payload {
    Typed(Box<dyn Any + Send>),
    Raw(Value),
}

impl Payload {
    pub fn downcast<T: Any>(self) -> Option<T> {
        match self {
            Payload::Typed(b) => b.downcast::<T>().ok().map(|b| *b),
            Payload::Raw(_) => None,
        }
    }
}

/// Maps msg_type names to encode/decode function pairs.
#[derive(Default)]
pub struct CodecRegistry {
    codecs: BTreeMap<String, Codec>,
}

impl std::fmt::Debug for CodecRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_map()
            .entries(self.codecs.iter().map(|(k, c)| (k, c.type_name)))
            .finish()
    }
}

impl CodecRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<T, E, D>(
        &mut self,
        msg_type: impl Into<String>,
        encode: E,
        decode: D,
    ) -> Result<(), WireError>
    where
        T: Any + Send,
        E: Fn(&T) -> Value + Send + Sync + 'static,
        D: Fn(&Value) -> Result<T, String> + Send + Sync + 'static,
    {
        let msg_type = msg_type.into();
        if self.codecs.contains_key(&msg_type) {
            return Err(WireError::DuplicateMsgType(msg_type));
        }
        let codec = Codec {
            type_id: TypeId::of::<T>(),
            type_name: std::any::type_name::<T>(),
            encode: Box::new(move |v| v.downcast_ref::<T>().map(&encode)),
            decode: Box::new(move |p| decode(p).map(|v| Box::new(v) as Box<dyn Any + Send>)),
        };
        self.codecs.insert(msg_type, codec);
        Ok(())
    }

    /// Registers a codec backed by the type's serde implementation.
    pub fn register_serde<T>(&mut self, msg_type: impl Into<String>) -> Result<(), WireError>
    where
        T: Serialize + DeserializeOwned + Any + Send,
    {
        self.register::<T, _, _>(
            msg_type,
            |v| serde_json::to_value(v).expect("serde codec produced non-JSON value"),
            |p| T::deserialize(p).map_err(|e| e.to_string()),
        )
    }

    /// Builder form of [`CodecRegistry::register`].
    pub fn with_codec<T, E, D>(
        mut self,
        msg_type: impl Into<String>,
        encode: E,
        decode: D,
    ) -> Result<Self, WireError>
    where
        T: Any + Send,
        E: Fn(&T) -> Value + Send + Sync + 'static,
        D: Fn(&Value) -> Result<T, String> + Send + Sync + 'static,
    {
        self.register(msg_type, encode, decode)?;
        Ok(self)
    }

    pub fn contains(&self, msg_type: &str) -> bool {
        self.codecs.contains_key(msg_type)
    }

    pub fn msg_types(&self) -> impl Iterator<Item = &str> {
        self.codecs.keys().map(String::as_str)
    }

    pub fn encode<T: Any>(&self, msg_type: &str, value: &T) -> Result<Value, WireError> {
        let codec = self.codec(msg_type)?;
        if codec.type_id != TypeId::of::<T>() {
            return Err(self.mismatch(msg_type, codec));
        }
        (codec.encode)(value).ok_or_else(|| self.mismatch(msg_type, codec))
    }

    pub fn decode<T: Any>(&self, msg_type: &str, payload: &Value) -> Result<T, WireError> {
        let codec = self.codec(msg_type)?;
        if codec.type_id != TypeId::of::<T>() {
            return Err(self.mismatch(msg_type, codec));
        }
        let boxed = (codec.decode)(payload).map_err(|reason| WireError::Codec {
            msg_type: msg_type.to_owned(),
            reason,
        })?;
        boxed
            .downcast::<T>()
            .map(|b| *b)
            .map_err(|_| self.mismatch(msg_type, codec))
    }

    /// Decodes through the registered codec, or passes the payload through
    /// untouched when its msg_type is unknown.
    pub fn decode_envelope(&self, envelope: &MessageEnvelope) -> Result<Payload, WireError> {
        match self.codecs.get(&envelope.msg_type) {
            None => Ok(Payload::Raw(envelope.payload.clone())),
            Some(codec) => (codec.decode)(&envelope.payload)
                .map(Payload::Typed)
                .map_err(|reason| WireError::Codec {
                    msg_type: envelope.msg_type.clone(),
                    reason,
                }),
        }
    }

    fn codec(&self, msg_type: &str) -> Result<&Codec, WireError> {
        self.codecs
            .get(msg_type)
            .ok_or_else(|| WireError::UnknownMsgType(msg_type.to_owned()))
    }

    fn mismatch(&self, msg_type: &str, codec: &Codec) -> WireError {
        WireError::CodecTypeMismatch {
            msg_type: msg_type.to_owned(),
            expected: codec.type_name,
        }
    }
}
