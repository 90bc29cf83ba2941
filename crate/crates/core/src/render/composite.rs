use super::RenderError;
use crate::math::Vec3;
use crate::scalar::Real;

/// One quadrature interval along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeSample<T> {
    pub sigma: T,
    pub rgb: Vec3<T>,
    pub delta: T,
}

impl<T: Real> CompositeSample<T> {
    pub fn new(sigma: T, rgb: Vec3<T>, delta: T) -> Self {
        Self { sigma, rgb, delta }
    }
}

/// Front-to-back emission-absorption accumulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compositor<T> {
    pub transmittance: T,
    pub color: Vec3<T>,
}

impl<T: Real> Default for Compositor<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Compositor<T> {
    pub fn new() -> Self {
        Self {
            transmittance: T::one(),
            color: Vec3::zero(),
        }
    }

    /// Adds one interval and returns its weight `T_i · α_i`.
    #[inline(always)]
    pub fn push(&mut self, sigma: T, rgb: Vec3<T>, delta: T) -> T {
        let survive = (-sigma * delta).exp();
        let weight = self.transmittance * (T::one() - survive);
        self.color += rgb * weight;
        self.transmittance *= survive;
        weight
    }

    #[inline(always)]
    pub fn finish(&self, background: Vec3<T>) -> Vec3<T> {
        self.color + background * self.transmittance
    }
}

fn check<T: Real>(s: &CompositeSample<T>, i: usize) -> Result<(), RenderError> {
    if !(s.sigma >= T::zero()) || !(s.delta >= T::zero()) {
        return Err(RenderError::Contract(format!(
            "sample {i}: sigma {} and delta {} must be non-negative",
            s.sigma, s.delta
        )));
    }
    Ok(())
}

/// `Σ T_i α_i c_i + T_{n+1} · background` with `α_i = 1 − exp(−σ_i δ_i)`.
pub fn composite_ray<T: Real>(
    samples: &[CompositeSample<T>],
    background: Vec3<T>,
) -> Result<Vec3<T>, RenderError> {
    let mut acc = Compositor::new();
    for (i, s) in samples.iter().enumerate() {
        check(s, i)?;
        acc.push(s.sigma, s.rgb, s.delta);
    }
    Ok(acc.finish(background))
}

/// Per-sample weights `T_i α_i` and the residual transmittance `T_{n+1}`.
pub fn composite_weights<T: Real>(
    samples: &[CompositeSample<T>],
) -> Result<(Vec<T>, T), RenderError> {
    let mut acc = Compositor::new();
    let mut weights = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        check(s, i)?;
        weights.push(acc.push(s.sigma, s.rgb, s.delta));
    }
    Ok((weights, acc.transmittance))
}
