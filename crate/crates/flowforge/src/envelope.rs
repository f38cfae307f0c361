//! Frame envelopes: the JSON wire format for frames on broker topics and in the table store.
//!
//! A data envelope is `{"schema":[{"name":..,"dtype":..}],"rows":[[..],..]}`.
//! Control envelopes carry a `control` key instead, e.g. `{"control":"end_of_stream"}`.

use flowforge_core::TableFrame;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Frame(TableFrame),
    EndOfStream,
    /// An upstream stage failed; carries the stage name and message.
    Failed { stage: String, message: String },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "control", rename_all = "snake_case")]
enum Control {
    EndOfStream,
    Error { stage: String, message: String },
}

#[derive(Debug, thiserror::Error)]
#[error("malformed envelope: {0}")]
pub struct EnvelopeError(#[from] serde_json::Error);

pub fn encode_frame(frame: &TableFrame) -> Vec<u8> {
    serde_json::to_vec(frame).expect("frames always serialize")
}

pub fn encode(payload: &Payload) -> Vec<u8> {
    match payload {
        Payload::Frame(f) => encode_frame(f),
        Payload::EndOfStream => serde_json::to_vec(&Control::EndOfStream).expect("static"),
        Payload::Failed { stage, message } => {
            serde_json::to_vec(&Control::Error { stage: stage.clone(), message: message.clone() }).expect("static")
        }
    }
}

pub fn decode(bytes: &[u8]) -> Result<Payload, EnvelopeError> {
    let value: serde_json::Value = serde_json::from_slice(bytes)?;
    if value.get("control").is_some() {
        return Ok(match serde_json::from_value(value)? {
            Control::EndOfStream => Payload::EndOfStream,
            Control::Error { stage, message } => Payload::Failed { stage, message },
        });
    }
    Ok(Payload::Frame(serde_json::from_value(value)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use flowforge_core::{Dtype, Field, Value};

    #[test]
    fn frame_wire_shape() {
        let f = TableFrame::new(
            vec![Field::new("a", Dtype::String), Field::new("x", Dtype::Float)],
            vec![vec![Value::from("BA"), Value::Float(1.5)]],
        )
        .unwrap();
        let bytes = encode_frame(&f);
        assert_eq!(
            std::str::from_utf8(&bytes).unwrap(),
            r#"{"schema":[{"name":"a","dtype":"string"},{"name":"x","dtype":"float"}],"rows":[["BA",1.5]]}"#
        );
        assert_eq!(decode(&bytes).unwrap(), Payload::Frame(f));
    }

    #[test]
    fn control_round_trip() {
        assert_eq!(encode(&Payload::EndOfStream), br#"{"control":"end_of_stream"}"#);
        let failed = Payload::Failed { stage: "s".into(), message: "m".into() };
        assert_eq!(decode(&encode(&failed)).unwrap(), failed);
        assert!(decode(b"{\"schema\":[{\"name\":\"a\",\"dtype\":\"int\"}],\"rows\":[[1.5]]}").is_err());
    }
}
