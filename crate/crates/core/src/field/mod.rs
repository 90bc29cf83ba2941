//! Radiance fields: the trainable hash-grid + MLP field and closed-form
//! analytic fields used as oracles and benchmark scenes.

mod analytic;
mod encoding;
mod grad;
mod hash_grid;
mod mlp;
mod neural;

pub use analytic::AnalyticField;
pub use encoding::{direction_encoding, direction_encoding_len};
pub use grad::{field_grad, ray_loss_and_grad, GradOutput, RayWorkspace, TrainRay};
pub use hash_grid::{hash_encode, HashGrid, HashGridConfig, HASH_PRIMES};
pub use mlp::MlpConfig;
pub use neural::{BackwardScratch, NeuralField, ParamBlock, SampleTape, DENSITY_CLAMP};

use crate::math::{Aabb, Vec3};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error("position {0:?} outside the field domain")]
    OutOfDomain([f64; 3]),
    #[error("invalid field configuration: {0}")]
    InvalidConfig(String),
    #[error("parameter vector has {got} entries, layout needs {expected}")]
    ParamLength { expected: usize, got: usize },
}

/// Density (per unit length) and emitted colour at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample<T> {
    pub sigma: T,
    pub rgb: Vec3<T>,
}

impl<T: Real> FieldSample<T> {
    pub fn empty() -> Self {
        Self {
            sigma: T::zero(),
            rgb: Vec3::zero(),
        }
    }
}

/// Anything the renderer can march through.
pub trait RadianceField<T: Real>: Send + Sync {
    fn eval(&self, x: Vec3<T>, d: Vec3<T>) -> Result<FieldSample<T>, FieldError>;

    /// Domain outside which `eval` refuses positions, if any.
    fn bounds(&self) -> Option<Aabb<T>> {
        None
    }

    /// Evaluates many points sharing one direction. Implementations with
    /// per-call setup cost override this.
    fn eval_many(
        &self,
        points: &[Vec3<T>],
        d: Vec3<T>,
        out: &mut Vec<FieldSample<T>>,
    ) -> Result<(), FieldError> {
        out.clear();
        for &p in points {
            out.push(self.eval(p, d)?);
        }
        Ok(())
    }
}

impl<T: Real, F: RadianceField<T> + ?Sized> RadianceField<T> for &F {
    fn eval(&self, x: Vec3<T>, d: Vec3<T>) -> Result<FieldSample<T>, FieldError> {
        (**self).eval(x, d)
    }

    fn bounds(&self) -> Option<Aabb<T>> {
        (**self).bounds()
    }

    fn eval_many(
        &self,
        points: &[Vec3<T>],
        d: Vec3<T>,
        out: &mut Vec<FieldSample<T>>,
    ) -> Result<(), FieldError> {
        (**self).eval_many(points, d, out)
    }
}

impl<T: Real, F: RadianceField<T> + ?Sized> RadianceField<T> for Box<F> {
    fn eval(&self, x: Vec3<T>, d: Vec3<T>) -> Result<FieldSample<T>, FieldError> {
        (**self).eval(x, d)
    }

    fn bounds(&self) -> Option<Aabb<T>> {
        (**self).bounds()
    }

    fn eval_many(
        &self,
        points: &[Vec3<T>],
        d: Vec3<T>,
        out: &mut Vec<FieldSample<T>>,
    ) -> Result<(), FieldError> {
        (**self).eval_many(points, d, out)
    }
}

impl<T: Real, F: RadianceField<T> + ?Sized> RadianceField<T> for std::sync::Arc<F> {
    fn eval(&self, x: Vec3<T>, d: Vec3<T>) -> Result<FieldSample<T>, FieldError> {
        (**self).eval(x, d)
    }

    fn bounds(&self) -> Option<Aabb<T>> {
        (**self).bounds()
    }

    fn eval_many(
        &self,
        points: &[Vec3<T>],
        d: Vec3<T>,
        out: &mut Vec<FieldSample<T>>,
    ) -> Result<(), FieldError> {
        (**self).eval_many(points, d, out)
    }
}
