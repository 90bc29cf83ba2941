use serde::{Deserialize, Serialize};

use super::{FieldError, FieldSample, RadianceField};
use crate::math::Vec3;
use crate::scalar::Real;

/// Closed-form density/colour fields. Deterministic and view-independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticField<T> {
    Constant {
        sigma: T,
        rgb: Vec3<T>,
    },
    Sphere {
        center: Vec3<T>,
        radius: T,
        sigma: T,
        rgb: Vec3<T>,
    },
    ColoredBox {
        min: Vec3<T>,
        max: Vec3<T>,
        sigma: T,
        rgb: Vec3<T>,
    },
    /// Densities add; colour is the density-weighted mean of the members.
    Union(Vec<AnalyticField<T>>),
}

impl<T: Real> AnalyticField<T> {
    pub fn empty() -> Self {
        Self::Constant {
            sigma: T::zero(),
            rgb: Vec3::zero(),
        }
    }

    pub fn constant(sigma: T, rgb: Vec3<T>) -> Self {
        Self::Constant { sigma, rgb }
    }

    pub fn sphere(center: Vec3<T>, radius: T, sigma: T, rgb: Vec3<T>) -> Self {
        Self::Sphere {
            center,
            radius,
            sigma,
            rgb,
        }
    }

    pub fn colored_box(min: Vec3<T>, max: Vec3<T>, sigma: T, rgb: Vec3<T>) -> Self {
        Self::ColoredBox {
            min,
            max,
            sigma,
            rgb,
        }
    }

    /// Same field with every member moved by `offset`.
    pub fn translated(&self, offset: Vec3<T>) -> Self {
        match self {
            Self::Constant { .. } => self.clone(),
            Self::Sphere {
                center,
                radius,
                sigma,
                rgb,
            } => Self::sphere(*center + offset, *radius, *sigma, *rgb),
            Self::ColoredBox {
                min,
                max,
                sigma,
                rgb,
            } => Self::colored_box(*min + offset, *max + offset, *sigma, *rgb),
            Self::Union(parts) => Self::Union(parts.iter().map(|p| p.translated(offset)).collect()),
        }
    }

    pub fn sample(&self, x: Vec3<T>) -> FieldSample<T> {
        match self {
            Self::Constant { sigma, rgb } => FieldSample {
                sigma: *sigma,
                rgb: *rgb,
            },
            Self::Sphere {
                center,
                radius,
                sigma,
                rgb,
            } => {
                let d = x - *center;
                if d.dot(d) <= *radius * *radius {
                    FieldSample {
                        sigma: *sigma,
                        rgb: *rgb,
                    }
                } else {
                    FieldSample::empty()
                }
            }
            Self::ColoredBox {
                min,
                max,
                sigma,
                rgb,
            } => {
                let inside = x.x >= min.x
                    && x.x <= max.x
                    && x.y >= min.y
                    && x.y <= max.y
                    && x.z >= min.z
                    && x.z <= max.z;
                if inside {
                    FieldSample {
                        sigma: *sigma,
                        rgb: *rgb,
                    }
                } else {
                    FieldSample::empty()
                }
            }
            Self::Union(parts) => {
                let mut sigma = T::zero();
                let mut weighted = Vec3::zero();
                for p in parts {
                    let s = p.sample(x);
                    sigma += s.sigma;
                    weighted += s.rgb * s.sigma;
                }
                if sigma > T::zero() {
                    FieldSample {
                        sigma,
                        rgb: weighted / sigma,
                    }
                } else {
                    FieldSample::empty()
                }
            }
        }
    }
}

impl<T: Real> RadianceField<T> for AnalyticField<T> {
    #[inline]
    fn eval(&self, x: Vec3<T>, _d: Vec3<T>) -> Result<FieldSample<T>, FieldError> {
        Ok(self.sample(x))
    }
}
