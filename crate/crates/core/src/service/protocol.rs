//! Viewer wire format.
//!
//! Control, stats and error messages are JSON text tagged by `"type"`.
//! Frames are binary:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CFRM"
//! 4       4     frame id, u32 LE
//! 8       2     width, u16 LE
//! 10      2     height, u16 LE
//! 12      1     format: 0 = RGBA8, 1 = PNG
//! 13      ..    payload (RGBA8: width * height * 4 bytes, rows top to bottom)
//! ```

use crate::engine::Pipeline;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::render::TransferFunction;
use serde::{Deserialize, Serialize};

pub const FRAME_MAGIC: &[u8; 4] = b"CFRM";
pub const FRAME_HEADER_LEN: usize = 13;

/// Client to server.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlMessage {
    Camera {
        position: Vec3,
        target: Vec3,
        up: Vec3,
        fov: f32,
    },
    Tf {
        points: TransferFunction,
    },
    LodScale {
        value: f32,
    },
    Mode {
        mode: Pipeline,
    },
    ResetCache {},
}

/// Server to client, once per frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsMessage {
    pub frame: u32,
    pub fps: f64,
    pub true_miss_rate: f64,
    pub fallback_rate: f64,
    pub cache_occupancy: f64,
    pub requests_inflight: u32,
    pub bricks_loaded_total: u64,
    /// Frames in the current path-tracing average.
    pub accumulated: u32,
}

/// Server to client text messages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerText {
    Stats(StatsMessage),
    Error { message: String },
}

impl ControlMessage {
    pub fn decode(text: &str) -> Result<Self> {
        let m: ControlMessage = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("control messages serialize")
    }

    /// Range checks beyond the schema.
    pub fn validate(&self) -> Result<()> {
        match self {
            ControlMessage::Camera {
                position,
                target,
                up,
                fov,
            } => crate::render::Camera::new(*position, *target, *up, *fov, 1, 1).map(|_| ()),
            ControlMessage::LodScale { value } if !(*value >= 0.0 && value.is_finite()) => Err(
                Error::Config(format!("lod_scale {value} must be finite and >= 0")),
            ),
            _ => Ok(()),
        }
    }
}

impl ServerText {
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }

    pub fn decode(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameFormat {
    #[default]
    Rgba8,
    Png,
}

impl FrameFormat {
    fn code(self) -> u8 {
        match self {
            FrameFormat::Rgba8 => 0,
            FrameFormat::Png => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(FrameFormat::Rgba8),
            1 => Ok(FrameFormat::Png),
            _ => Err(Error::Protocol(format!("unknown frame format {c}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameMessage {
    pub frame: u32,
    pub width: u16,
    pub height: u16,
    pub format: FrameFormat,
    pub payload: Vec<u8>,
}

impl FrameMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + self.payload.len());
        out.extend_from_slice(FRAME_MAGIC);
        out.extend_from_slice(&self.frame.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.push(self.format.code());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FRAME_HEADER_LEN {
            return Err(Error::Protocol(format!(
                "frame of {} bytes is shorter than its header",
                bytes.len()
            )));
        }
        if &bytes[..4] != FRAME_MAGIC {
            return Err(Error::Protocol("bad frame magic".into()));
        }
        let m = FrameMessage {
            frame: u32::from_le_bytes(bytes[4..8].try_into().unwrap()),
            width: u16::from_le_bytes([bytes[8], bytes[9]]),
            height: u16::from_le_bytes([bytes[10], bytes[11]]),
            format: FrameFormat::from_code(bytes[12])?,
            payload: bytes[FRAME_HEADER_LEN..].to_vec(),
        };
        if m.format == FrameFormat::Rgba8
            && m.payload.len() != m.width as usize * m.height as usize * 4
        {
            return Err(Error::Protocol(format!(
                "RGBA8 payload of {} bytes does not match {}x{}",
                m.payload.len(),
                m.width,
                m.height
            )));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::ControlPoint;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let m = FrameMessage {
            frame: 0x0403_0201,
            width: 0x0605,
            height: 0x0807,
            format: FrameFormat::Png,
            payload: vec![0xAA],
        };
        assert_eq!(
            m.encode(),
            b"CFRM\x01\x02\x03\x04\x05\x06\x07\x08\x01\xAA".to_vec()
        );
    }

    #[test]
    fn control_json_shapes() {
        let m = ControlMessage::decode(r#"{"type":"lod_scale","value":0.25}"#).unwrap();
        assert_eq!(m, ControlMessage::LodScale { value: 0.25 });
        assert_eq!(
            ControlMessage::decode(r#"{"type":"reset_cache"}"#).unwrap(),
            ControlMessage::ResetCache {}
        );
        assert_eq!(
            ControlMessage::decode(r#"{"type":"mode","mode":"pathtrace"}"#).unwrap(),
            ControlMessage::Mode {
                mode: Pipeline::Pathtrace
            }
        );
        let tf = r#"{"type":"tf","points":[{"x":0,"r":0,"g":0,"b":0,"a":0},{"x":1,"r":1,"g":1,"b":1,"a":1}]}"#;
        assert!(matches!(
            ControlMessage::decode(tf).unwrap(),
            ControlMessage::Tf { .. }
        ));
        assert!(ControlMessage::decode(r#"{"type":"lod_scale","value":-1}"#).is_err());
        assert!(ControlMessage::decode(r#"{"type":"zoom"}"#).is_err());
        assert!(ControlMessage::decode(
            r#"{"type":"tf","points":[{"x":0.5,"r":0,"g":0,"b":0,"a":0}]}"#
        )
        .is_err());
        let cam = r#"{"type":"camera","position":{"x":0,"y":0,"z":0},"target":{"x":0,"y":1,"z":0},"up":{"x":0,"y":1,"z":0},"fov":40}"#;
        assert!(ControlMessage::decode(cam).is_err());
    }

    #[test]
    fn truncated_or_mismatched_frames_are_rejected() {
        assert!(FrameMessage::decode(b"CFRM").is_err());
        assert!(FrameMessage::decode(b"XFRM\0\0\0\0\x01\0\x01\0\0abcd").is_err());
        assert!(FrameMessage::decode(b"CFRM\0\0\0\0\x01\0\x01\0\0abc").is_err());
        assert!(FrameMessage::decode(b"CFRM\0\0\0\0\x01\0\x01\0\x07abcd").is_err());
        assert!(FrameMessage::decode(b"CFRM\0\0\0\0\x01\0\x01\0\0abcd").is_ok());
    }

    fn finite() -> impl Strategy<Value = f32> {
        -1e6f32..1e6f32
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        (finite(), finite(), finite()).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn tf() -> impl Strategy<Value = TransferFunction> {
        prop::collection::vec((0.0f32..1.0, prop::array::uniform4(0.0f32..=1.0)), 0..6).prop_map(
            |mut v| {
                v.sort_by(|a, b| a.0.total_cmp(&b.0));
                v.dedup_by(|a, b| a.0 == b.0);
                let mut pts = vec![ControlPoint::new(0.0, [0.0; 3], 0.0)];
                pts.extend(
                    v.into_iter()
                        .filter(|p| p.0 > 0.0)
                        .map(|(x, c)| ControlPoint::new(x, [c[0], c[1], c[2]], c[3])),
                );
                pts.push(ControlPoint::new(1.0, [1.0; 3], 1.0));
                TransferFunction::new(pts).unwrap()
            },
        )
    }

    fn control() -> impl Strategy<Value = ControlMessage> {
        prop_oneof![
            (vec3(), vec3(), vec3(), finite()).prop_map(|(position, target, up, fov)| {
                ControlMessage::Camera {
                    position,
                    target,
                    up,
                    fov,
                }
            }),
            tf().prop_map(|points| ControlMessage::Tf { points }),
            finite().prop_map(|value| ControlMessage::LodScale { value }),
            prop_oneof![Just(Pipeline::Raymarch), Just(Pipeline::Pathtrace)]
                .prop_map(|mode| ControlMessage::Mode { mode }),
            Just(ControlMessage::ResetCache {}),
        ]
    }

    proptest! {
        #[test]
        fn frames_round_trip(frame: u32, width: u16, height in 0u16..4, png: bool, extra in prop::collection::vec(any::<u8>(), 0..64)) {
            let (format, payload) = if png {
                (FrameFormat::Png, extra)
            } else {
                let w = width % 16;
                let n = w as usize * height as usize * 4;
                (FrameFormat::Rgba8, (0..n).map(|i| i as u8).collect())
            };
            let width = if png { width } else { width % 16 };
            let m = FrameMessage { frame, width, height, format, payload };
            prop_assert_eq!(FrameMessage::decode(&m.encode()).unwrap(), m);
        }

        #[test]
        fn control_round_trips(m in control()) {
            let back: ControlMessage = serde_json::from_str(&m.encode()).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn server_text_round_trips(
            frame: u32, fps in 0.0f64..1e4, a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0,
            inflight: u32, loaded: u64, accumulated: u32, message in ".*",
        ) {
            let s = ServerText::Stats(StatsMessage {
                frame, fps, true_miss_rate: a, fallback_rate: b, cache_occupancy: c,
                requests_inflight: inflight, bricks_loaded_total: loaded, accumulated,
            });
            prop_assert_eq!(ServerText::decode(&s.encode()).unwrap(), s);
            let e = ServerText::Error { message };
            prop_assert_eq!(ServerText::decode(&e.encode()).unwrap(), e);
        }
    }
}
