//! JSON control messages from viewers and the server's text replies.

use ngp_core::math::{Aabb, Pose, Quat, Similarity, Vec3};
use serde::{Deserialize, Serialize};

/// Largest accepted deviation of a quaternion's norm from one before it is
/// rejected rather than renormalised.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-3;
pub const MAX_IPD: f64 = 0.5;
pub const MAX_DIMENSION: u32 = 4096;
pub const MAX_SAMPLES_PER_RAY: usize = 1024;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ControlError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("{field} must be finite")]
    NonFinite { field: &'static str },
    #[error("{field} has norm {norm}, not within {UNIT_NORM_TOLERANCE} of 1")]
    NotUnit { field: &'static str, norm: f64 },
    #[error("{0}")]
    OutOfRange(String),
}

/// Wire form of a control message, as sent by viewers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ControlMessage {
    Pose {
        position: [f64; 3],
        orientation: [f64; 4],
    },
    Ipd {
        meters: f64,
    },
    Settings {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        width: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        height: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upscale: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples_per_ray: Option<usize>,
    },
    Aabb {
        min: [f64; 3],
        max: [f64; 3],
    },
    Manip {
        scale: f64,
        rotation: [f64; 4],
        translation: [f64; 3],
    },
    Stats {
        subscribe: bool,
    },
}

/// Partial settings update; absent fields keep their current value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SettingsUpdate {
    pub resolution: Option<(u32, u32)>,
    pub upscale: Option<u32>,
    pub samples_per_ray: Option<usize>,
}

/// A control message that passed validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control {
    Pose(Pose<f32>),
    Ipd(f32),
    Settings(SettingsUpdate),
    Aabb(Aabb<f32>),
    Manip(Similarity<f32>),
    Stats(bool),
}

/// Server to viewer text messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Error {
        detail: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame: Option<u32>,
    },
    Stats {
        frame_ms: f64,
        fps: f64,
        frame_id: u32,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server message serializes")
    }
}

fn finite<const N: usize>(v: [f64; N], field: &'static str) -> Result<[f64; N], ControlError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(ControlError::NonFinite { field })
    }
}

fn vec3(v: [f64; 3], field: &'static str) -> Result<Vec3<f32>, ControlError> {
    let [x, y, z] = finite(v, field)?;
    let out = Vec3::new(x as f32, y as f32, z as f32);
    if !out.is_finite() {
        return Err(ControlError::NonFinite { field });
    }
    Ok(out)
}

/// Renormalises a near-unit `[x, y, z, w]` quaternion.
pub fn unit_quat(q: [f64; 4], field: &'static str) -> Result<Quat<f32>, ControlError> {
    let [x, y, z, w] = finite(q, field)?;
    let norm = (x * x + y * y + z * z + w * w).sqrt();
    if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(ControlError::NotUnit { field, norm });
    }
    Ok(Quat::new(
        (x / norm) as f32,
        (y / norm) as f32,
        (z / norm) as f32,
        (w / norm) as f32,
    ))
}

impl ControlMessage {
    pub fn validate(&self) -> Result<Control, ControlError> {
        let range = |m: String| Err(ControlError::OutOfRange(m));
        match *self {
            ControlMessage::Pose {
                position,
                orientation,
            } => Ok(Control::Pose(Pose::new(
                vec3(position, "position")?,
                unit_quat(orientation, "orientation")?,
            ))),
            ControlMessage::Ipd { meters } => {
                if !meters.is_finite() {
                    return Err(ControlError::NonFinite { field: "meters" });
                }
                if !(0.0..=MAX_IPD).contains(&meters) {
                    return range(format!("ipd {meters} outside [0, {MAX_IPD}]"));
                }
                Ok(Control::Ipd(meters as f32))
            }
            ControlMessage::Settings {
                width,
                height,
                upscale,
                samples_per_ray,
            } => {
                let resolution = match (width, height) {
                    (None, None) => None,
                    (Some(w), Some(h)) => {
                        if !(1..=MAX_DIMENSION).contains(&w) || !(1..=MAX_DIMENSION).contains(&h) {
                            return range(format!("resolution {w}x{h} outside 1..={MAX_DIMENSION}"));
                        }
                        Some((w, h))
                    }
                    _ => return range("width and height must be given together".into()),
                };
                if let Some(s) = upscale {
                    if ![1, 2, 4].contains(&s) {
                        return range(format!("upscale {s} not in {{1, 2, 4}}"));
                    }
                }
                if let Some(n) = samples_per_ray {
                    if !(2..=MAX_SAMPLES_PER_RAY).contains(&n) {
                        return range(format!("samples_per_ray {n} outside 2..={MAX_SAMPLES_PER_RAY}"));
                    }
                }
                Ok(Control::Settings(SettingsUpdate {
                    resolution,
                    upscale,
                    samples_per_ray,
                }))
            }
            ControlMessage::Aabb { min, max } => {
                let (lo, hi) = (vec3(min, "min")?, vec3(max, "max")?);
                Aabb::new(lo, hi)
                    .map(Control::Aabb)
                    .map_err(|e| ControlError::OutOfRange(e.to_string()))
            }
            ControlMessage::Manip {
                scale,
                rotation,
                translation,
            } => {
                if !scale.is_finite() {
                    return Err(ControlError::NonFinite { field: "scale" });
                }
                if scale <= 0.0 {
                    return range(format!("scale {scale} must be > 0"));
                }
                Similarity::new(
                    scale as f32,
                    unit_quat(rotation, "rotation")?,
                    vec3(translation, "translation")?,
                )
                .map(Control::Manip)
                .map_err(|e| ControlError::OutOfRange(e.to_string()))
            }
            ControlMessage::Stats { subscribe } => Ok(Control::Stats(subscribe)),
        }
    }
}

pub fn parse_control(text: &str) -> Result<Control, ControlError> {
    let msg: ControlMessage =
        serde_json::from_str(text).map_err(|e| ControlError::Malformed(e.to_string()))?;
    msg.validate()
}
