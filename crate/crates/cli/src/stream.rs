//! Framing of `/v1/stream` messages.
//!
//! Every WebSocket binary message, in either direction, is
//!
//! ```text
//! u32 little-endian header length | JSON header | PNG bytes (may be empty)
//! ```
//!
//! Requests carry a [`StreamRequest`] header and the frame PNG. Replies
//! carry a [`ReplyHeader`] and the SR PNG, or an `error` with no image. A
//! failed frame does not close the connection.

use serde::{Deserialize, Serialize};
use tilesr_core::infer::Roi;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamRequest {
    /// Echoed in the reply so clients can match responses.
    pub seq: u64,
    pub model: Option<String>,
    pub roi: Option<Roi>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplyHeader {
    pub seq: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infer_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamReply {
    pub header: ReplyHeader,
    pub png: Vec<u8>,
}

impl StreamReply {
    pub fn ok(seq: u64, model: String, infer_ms: f64, width: usize, height: usize, png: Vec<u8>) -> Self {
        StreamReply {
            header: ReplyHeader {
                seq,
                model: Some(model),
                infer_ms: Some(infer_ms),
                width: Some(width),
                height: Some(height),
                ..Default::default()
            },
            png,
        }
    }

    pub fn error(seq: u64, kind: &str, message: impl ToString) -> Self {
        StreamReply {
            header: ReplyHeader {
                seq,
                error: Some(kind.into()),
                message: Some(message.to_string()),
                ..Default::default()
            },
            png: Vec::new(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        encode(&self.header, &self.png)
    }

    pub fn decode(data: &[u8]) -> Result<Self, String> {
        let (header, png) = split(data)?;
        Ok(StreamReply {
            header,
            png: png.to_vec(),
        })
    }
}

pub fn encode<H: Serialize>(header: &H, png: &[u8]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(4 + json.len() + png.len());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(png);
    out
}

fn split<'a, H: Deserialize<'a>>(data: &'a [u8]) -> Result<(H, &'a [u8]), String> {
    let len_bytes: [u8; 4] = data
        .get(..4)
        .and_then(|b| b.try_into().ok())
        .ok_or("frame shorter than its length prefix")?;
    let len = u32::from_le_bytes(len_bytes) as usize;
    let json = data
        .get(4..4 + len)
        .ok_or_else(|| format!("header length {len} exceeds frame of {} bytes", data.len()))?;
    let header = serde_json::from_slice(json).map_err(|e| format!("header: {e}"))?;
    Ok((header, &data[4 + len..]))
}

pub fn encode_request(req: &StreamRequest, png: &[u8]) -> Vec<u8> {
    encode(req, png)
}

pub fn decode_request(data: &[u8]) -> Result<(StreamRequest, &[u8]), String> {
    split(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_round_trip() {
        let req = StreamRequest {
            seq: 7,
            model: Some("a".into()),
            roi: Some(Roi::new(1, 2, 3, 4)),
        };
        let frame = encode_request(&req, b"png");
        let (back, png) = decode_request(&frame).unwrap();
        assert_eq!(back, req);
        assert_eq!(png, b"png");
    }

    #[test]
    fn reply_round_trip() {
        let r = StreamReply::ok(3, "m".into(), 1.5, 256, 256, vec![1, 2, 3]);
        assert_eq!(StreamReply::decode(&r.encode()).unwrap(), r);
        let e = StreamReply::error(4, "bad_image", "nope");
        assert_eq!(StreamReply::decode(&e.encode()).unwrap(), e);
    }

    #[test]
    fn short_frames_are_rejected() {
        assert!(decode_request(&[1, 0]).is_err());
        assert!(decode_request(&[9, 0, 0, 0, b'{']).is_err());
        assert!(decode_request(&[2, 0, 0, 0, b'{', b'x']).is_err());
    }
}
