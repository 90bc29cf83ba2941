//! Procedural analytic scenes used for datasets, demos and benchmarks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::field::AnalyticField;
use crate::math::{Aabb, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenePreset {
    Empty,
    Constant,
    Sphere,
    /// Compact object scene, AABB side 2.
    Small,
    /// Medium object scene, AABB side 4.
    Medium,
    /// Large outdoor-style scene, AABB side 16.
    Large,
}

pub const ALL_PRESETS: [ScenePreset; 6] = [
    ScenePreset::Empty,
    ScenePreset::Constant,
    ScenePreset::Sphere,
    ScenePreset::Small,
    ScenePreset::Medium,
    ScenePreset::Large,
];

pub const SPHERE_RADIUS: f32 = 0.5;
pub const SPHERE_SIGMA: f32 = 50.0;
pub const SPHERE_RGB: [f32; 3] = [0.9, 0.5, 0.2];

fn v(x: f32, y: f32, z: f32) -> Vec3<f32> {
    Vec3::new(x, y, z)
}

impl ScenePreset {
    pub fn name(self) -> &'static str {
        match self {
            Self::Empty => "empty",
            Self::Constant => "constant",
            Self::Sphere => "sphere",
            Self::Small => "small",
            Self::Medium => "medium",
            Self::Large => "large",
        }
    }

    pub fn aabb_scale(self) -> u32 {
        match self {
            Self::Medium => 4,
            Self::Large => 16,
            _ => 2,
        }
    }

    pub fn aabb(self) -> Aabb<f32> {
        Aabb::centered_cube(self.aabb_scale() as f32)
    }

    /// Camera distance from the origin that keeps the box in view.
    pub fn orbit_radius(self) -> f32 {
        match self {
            Self::Large => 10.0,
            s => 1.25 * s.aabb_scale() as f32,
        }
    }

    pub fn field(self) -> AnalyticField<f32> {
        match self {
            Self::Empty => AnalyticField::empty(),
            Self::Constant => AnalyticField::constant(1.0, v(0.8, 0.6, 0.4)),
            Self::Sphere => AnalyticField::sphere(
                Vec3::zero(),
                SPHERE_RADIUS,
                SPHERE_SIGMA,
                Vec3::from_array(SPHERE_RGB),
            ),
            Self::Small => AnalyticField::Union(vec![
                AnalyticField::colored_box(v(-0.7, -0.7, -0.7), v(0.7, -0.5, 0.7), 40.0, v(0.8, 0.8, 0.75)),
                AnalyticField::colored_box(v(-0.5, -0.5, -0.3), v(0.1, 0.1, 0.3), 60.0, v(0.9, 0.7, 0.1)),
                AnalyticField::sphere(v(0.35, -0.2, 0.1), 0.3, 50.0, v(0.8, 0.15, 0.1)),
                AnalyticField::colored_box(v(-0.2, 0.1, -0.15), v(0.05, 0.5, 0.15), 60.0, v(0.2, 0.3, 0.8)),
            ]),
            Self::Medium => AnalyticField::Union(vec![
                AnalyticField::colored_box(v(-1.8, -1.2, -1.8), v(1.8, -1.0, 1.8), 30.0, v(0.45, 0.4, 0.35)),
                AnalyticField::sphere(v(0.0, -0.3, 0.0), 0.7, 40.0, v(0.85, 0.45, 0.15)),
                AnalyticField::sphere(v(0.55, 0.35, 0.3), 0.3, 40.0, v(0.9, 0.9, 0.85)),
                AnalyticField::colored_box(v(-1.5, -1.0, -1.5), v(-0.9, 0.6, -0.9), 30.0, v(0.3, 0.6, 0.3)),
                AnalyticField::colored_box(v(0.9, -1.0, 0.8), v(1.4, 0.0, 1.3), 30.0, v(0.2, 0.3, 0.7)),
                AnalyticField::constant(0.05, v(0.6, 0.65, 0.7)),
            ]),
            Self::Large => {
                let mut parts = vec![AnalyticField::colored_box(
                    v(-8.0, -2.0, -8.0),
                    v(8.0, -1.6, 8.0),
                    20.0,
                    v(0.35, 0.5, 0.3),
                )];
                for i in 0..4 {
                    for j in 0..4 {
                        let x = -6.0 + 4.0 * i as f32;
                        let z = -6.0 + 4.0 * j as f32;
                        let h = -1.6 + 1.0 + ((i * 3 + j * 5) % 4) as f32;
                        let shade = 0.4 + 0.1 * ((i + j) % 4) as f32;
                        parts.push(AnalyticField::colored_box(
                            v(x - 1.0, -1.6, z - 1.0),
                            v(x + 1.0, h, z + 1.0),
                            15.0,
                            v(shade, shade * 0.9, shade * 0.8),
                        ));
                    }
                }
                parts.push(AnalyticField::sphere(v(0.0, 2.5, 0.0), 1.2, 25.0, v(0.9, 0.8, 0.3)));
                parts.push(AnalyticField::constant(0.01, v(0.7, 0.75, 0.8)));
                AnalyticField::Union(parts)
            }
        }
    }
}

impl fmt::Display for ScenePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown scene preset {0:?} (expected one of empty, constant, sphere, small, medium, large)")]
pub struct UnknownPreset(pub String);

impl FromStr for ScenePreset {
    type Err = UnknownPreset;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_PRESETS
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| UnknownPreset(s.to_string()))
    }
}
