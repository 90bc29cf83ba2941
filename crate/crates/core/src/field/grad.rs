use rayon::prelude::*;

use super::neural::{BackwardScratch, NeuralField, SampleTape};
use super::FieldError;
use crate::math::{Ray, Vec3};
use crate::scalar::Real;

/// A training ray with its target colour.
///
/// Samples sit at `t_near + (i + jitter) · Δ` inside the field's box, so a
/// jitter of 0.5 reproduces the render path's midpoint placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRay<T> {
    pub ray: Ray<T>,
    pub target: Vec3<T>,
    pub jitter: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradOutput<T> {
    /// Sum over rays and channels of the squared colour error.
    pub loss: T,
    /// Gradient of `loss` with respect to every parameter.
    pub grad: Vec<T>,
}

/// Reusable per-worker buffers for [`ray_loss_and_grad`].
pub struct RayWorkspace<T> {
    tapes: Vec<SampleTape<T>>,
    dir: Vec<T>,
    transmittance: Vec<T>,
    weights: Vec<T>,
    scratch: BackwardScratch<T>,
}

impl<T: Real> RayWorkspace<T> {
    pub fn new(field: &NeuralField<T>, samples: usize) -> Self {
        Self {
            tapes: (0..samples).map(|_| field.new_tape()).collect(),
            dir: vec![T::zero(); field.dir_encoding_len()],
            transmittance: vec![T::zero(); samples + 1],
            weights: vec![T::zero(); samples],
            scratch: field.new_backward_scratch(),
        }
    }
}

/// Squared error of one ray and its gradient, accumulated into `grad`.
/// Returns the squared error and the predicted colour.
pub fn ray_loss_and_grad<T: Real>(
    field: &NeuralField<T>,
    train: &TrainRay<T>,
    background: Vec3<T>,
    ws: &mut RayWorkspace<T>,
    grad: &mut [T],
) -> Result<(T, Vec3<T>), FieldError> {
    let n = ws.tapes.len();
    let Some((t0, t1)) = field.aabb().intersect(&train.ray) else {
        let r = background - train.target;
        return Ok((r.dot(r), background));
    };
    let delta = (t1 - t0) / T::lit(n as f64);
    field.encode_direction(train.ray.direction, &mut ws.dir);

    let mut trans = T::one();
    let mut color = Vec3::zero();
    ws.transmittance[0] = trans;
    for i in 0..n {
        let t = t0 + (T::lit(i as f64) + train.jitter) * delta;
        let xn = field.normalize_position(train.ray.at(t))?;
        let s = field.forward(xn, &ws.dir, &mut ws.tapes[i]);
        let survive = (-s.sigma * delta).exp();
        let w = trans * (T::one() - survive);
        color += s.rgb * w;
        trans *= survive;
        ws.weights[i] = w;
        ws.transmittance[i + 1] = trans;
    }
    let pred = color + background * trans;
    let r = pred - train.target;
    let loss = r.dot(r);
    let d_pred = r * T::lit(2.0);

    // suffix = Σ_{j>i} w_j c_j + T_{n+1} · background
    let mut suffix = background * trans;
    for i in (0..n).rev() {
        let s = ws.tapes[i].sample();
        let d_rgb = d_pred * ws.weights[i];
        let d_sigma = d_pred.dot(s.rgb * ws.transmittance[i + 1] - suffix) * delta;
        suffix += s.rgb * ws.weights[i];
        if d_sigma == T::zero() && d_rgb == Vec3::zero() {
            continue;
        }
        field.backward(&ws.tapes[i], d_sigma, d_rgb, &mut ws.scratch, grad);
    }
    Ok((loss, pred))
}

/// Rays per gradient partition. Partials are summed in partition order so
/// the result does not depend on the thread count.
const PARTITION: usize = 128;

/// Exact reverse-mode gradient of the summed squared error of `batch`.
pub fn field_grad<T: Real>(
    field: &NeuralField<T>,
    batch: &[TrainRay<T>],
    samples: usize,
    background: Vec3<T>,
) -> Result<GradOutput<T>, FieldError> {
    let mut total = GradOutput {
        loss: T::zero(),
        grad: vec![T::zero(); field.param_count()],
    };
    let wave = PARTITION * rayon::current_num_threads().max(1);
    for group in batch.chunks(wave) {
        let partials: Vec<Result<GradOutput<T>, FieldError>> = group
            .par_chunks(PARTITION)
            .map(|chunk| {
                let mut ws = RayWorkspace::new(field, samples);
                let mut grad = vec![T::zero(); field.param_count()];
                let mut loss = T::zero();
                for ray in chunk {
                    loss += ray_loss_and_grad(field, ray, background, &mut ws, &mut grad)?.0;
                }
                Ok(GradOutput { loss, grad })
            })
            .collect();
        for partial in partials {
            let partial = partial?;
            total.loss += partial.loss;
            for (g, p) in total.grad.iter_mut().zip(&partial.grad) {
                *g += *p;
            }
        }
    }
    Ok(total)
}
