//! One JSON object per line. Field order is fixed by the envelope struct;
//! floats use shortest round-trip formatting so decode(encode(m)) == m.

use super::message::{ModuleId, MsgType, Payload, TypedMessage};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("cannot decode line {line:?}: {reason}")]
    Malformed { line: String, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("message does not serialize: {0}")]
    Serialize(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    t_stamp: f64,
    src: ModuleId,
    dst: ModuleId,
    msg_type: MsgType,
    corr: u64,
    payload: Value,
}

fn body(p: &Payload) -> serde_json::Result<Value> {
    match p {
        Payload::StateData(b) => serde_json::to_value(b),
        Payload::PlanningRequest(b) => serde_json::to_value(b),
        Payload::Strategy(b) => serde_json::to_value(b),
        Payload::VerificationResult(b) => serde_json::to_value(b),
        Payload::ControlCommand(b) => serde_json::to_value(b),
    }
}

/// Encode without the trailing newline.
pub fn encode(msg: &TypedMessage) -> Result<String, EncodeError> {
    let env = Envelope {
        t_stamp: msg.t_stamp,
        src: msg.src,
        dst: msg.dst,
        msg_type: msg.msg_type(),
        corr: msg.corr,
        payload: body(&msg.payload).map_err(|e| EncodeError::Serialize(e.to_string()))?,
    };
    serde_json::to_string(&env).map_err(|e| EncodeError::Serialize(e.to_string()))
}

pub fn decode(line: &str) -> Result<TypedMessage, DecodeError> {
    let fail = |reason: String| DecodeError::Malformed {
        line: line.to_string(),
        reason,
    };
    let env: Envelope = serde_json::from_str(line.trim_end_matches(['\r', '\n'])).map_err(|e| fail(e.to_string()))?;
    let v = env.payload;
    let payload = match env.msg_type {
        MsgType::StateData => serde_json::from_value(v).map(Payload::StateData),
        MsgType::PlanningRequest => serde_json::from_value(v).map(Payload::PlanningRequest),
        MsgType::Strategy => serde_json::from_value(v).map(Payload::Strategy),
        MsgType::VerificationResult => serde_json::from_value(v).map(Payload::VerificationResult),
        MsgType::ControlCommand => serde_json::from_value(v).map(Payload::ControlCommand),
    }
    .map_err(|e| fail(format!("{:?} payload: {e}", env.msg_type)))?;
    Ok(TypedMessage {
        t_stamp: env.t_stamp,
        src: env.src,
        dst: env.dst,
        corr: env.corr,
        payload,
    })
}

/// Splits a byte stream into lines; an unterminated tail stays buffered.
#[derive(Debug, Default)]
pub struct LineFramer {
    buf: Vec<u8>,
}

impl LineFramer {
    pub fn push(&mut self, bytes: &[u8]) -> Vec<String> {
        self.buf.extend_from_slice(bytes);
        let mut out = Vec::new();
        while let Some(i) = self.buf.iter().position(|b| *b == b'\n') {
            let line: Vec<u8> = self.buf.drain(..=i).collect();
            out.push(String::from_utf8_lossy(&line[..i]).into_owned());
        }
        out
    }

    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}
