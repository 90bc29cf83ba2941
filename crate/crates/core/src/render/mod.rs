//! Volumetric ray marching, stereo rendering and the upscaling path.

mod composite;
mod image;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::image::{upscale, upscale_with, Image, UpscaleFilter};
pub(crate) use self::image::{decode_png, encode_png};
pub use composite::{composite_ray, composite_weights, CompositeSample, Compositor};

use crate::field::{FieldError, RadianceField};
use crate::math::{Aabb, Camera, MathError, Pose, Ray, Similarity, Vec3};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid render settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("image format: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl RenderError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Transmittance below which marching stops.
pub const EARLY_STOP_TRANSMITTANCE: f64 = 1e-4;

/// Samples evaluated per field call while marching.
const MARCH_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings<T> {
    pub width: u32,
    pub height: u32,
    pub samples_per_ray: usize,
    pub background: Vec3<T>,
    /// Internal resolution is `width/upscale × height/upscale`.
    pub upscale: u32,
    #[serde(default)]
    pub filter: UpscaleFilter,
    pub scene_transform: Similarity<T>,
    pub aabb: Aabb<T>,
}

impl<T: Real> RenderSettings<T> {
    pub fn new(width: u32, height: u32, aabb: Aabb<T>) -> Self {
        Self {
            width,
            height,
            samples_per_ray: 128,
            background: Vec3::zero(),
            upscale: 1,
            filter: UpscaleFilter::Bilinear,
            scene_transform: Similarity::identity(),
            aabb,
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: String| Err(RenderError::InvalidSettings(m));
        if ![1, 2, 4].contains(&self.upscale) {
            return bad(format!("upscale {} not in {{1, 2, 4}}", self.upscale));
        }
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be >= 1".into());
        }
        if self.width % self.upscale != 0 || self.height % self.upscale != 0 {
            return bad(format!(
                "{}x{} not divisible by upscale {}",
                self.width, self.height, self.upscale
            ));
        }
        if self.samples_per_ray < 2 {
            return bad("samples_per_ray must be >= 2".into());
        }
        Ok(())
    }

    pub fn internal_size(&self) -> (u32, u32) {
        (self.width / self.upscale, self.height / self.upscale)
    }
}

/// Marches one world-space ray through `field`. The ray is mapped into scene
/// space by the inverse scene transform and clipped to `region`; `t_range`
/// bounds the world-space parameter (camera near/far).
pub fn march_ray<T: Real, F: RadianceField<T> + ?Sized>(
    field: &F,
    world_ray: &Ray<T>,
    region: Option<&Aabb<T>>,
    transform: &Similarity<T>,
    t_range: (T, T),
    samples: usize,
    background: Vec3<T>,
    scratch: &mut MarchScratch<T>,
) -> Result<Vec3<T>, FieldError> {
    let Some(region) = region else {
        return Ok(background);
    };
    let ray = if transform.is_identity() {
        *world_ray
    } else {
        transform.inverse_ray(world_ray)
    };
    let Some((t0, t1)) = region.intersect(&ray) else {
        return Ok(background);
    };
    let t0 = t0.max(t_range.0 / transform.scale);
    let t1 = t1.min(t_range.1 / transform.scale);
    if !(t1 > t0) {
        return Ok(background);
    }
    let delta = (t1 - t0) / T::lit(samples as f64);
    let stop = T::lit(EARLY_STOP_TRANSMITTANCE);
    let mut acc = Compositor::new();
    let mut i = 0;
    while i < samples {
        let end = (i + MARCH_CHUNK).min(samples);
        scratch.points.clear();
        for k in i..end {
            scratch
                .points
                .push(ray.at(t0 + (T::lit(k as f64) + T::lit(0.5)) * delta));
        }
        field.eval_many(&scratch.points, ray.direction, &mut scratch.samples)?;
        for s in &scratch.samples {
            acc.push(s.sigma, s.rgb, delta);
            if acc.transmittance < stop {
                return Ok(acc.finish(background));
            }
        }
        i = end;
    }
    Ok(acc.finish(background))
}

pub struct MarchScratch<T> {
    points: Vec<Vec3<T>>,
    samples: Vec<crate::field::FieldSample<T>>,
}

impl<T: Real> Default for MarchScratch<T> {
    fn default() -> Self {
        Self {
            points: Vec::with_capacity(MARCH_CHUNK),
            samples: Vec::with_capacity(MARCH_CHUNK),
        }
    }
}

/// Region actually marched: the settings box, cropped to the field's own
/// domain when it has one.
pub fn render_region<T: Real, F: RadianceField<T> + ?Sized>(
    field: &F,
    settings: &RenderSettings<T>,
) -> Option<Aabb<T>> {
    match field.bounds() {
        Some(b) => settings.aabb.intersection(&b),
        None => Some(settings.aabb),
    }
}

/// Renders one image at `settings.width × settings.height`: rays are traced
/// at the reduced internal resolution and then upscaled.
pub fn render_frame<T: Real, F: RadianceField<T> + ?Sized>(
    field: &F,
    camera: &Camera<T>,
    settings: &RenderSettings<T>,
    eye_offset: Vec3<T>,
) -> Result<Image, RenderError> {
    settings.validate()?;
    camera.validate()?;
    let (w, h) = settings.internal_size();
    let cam = camera.with_resolution(w, h);
    let region = render_region(field, settings);
    let bg = settings.background;
    let mut img = Image::new(w, h);
    img.data
        .par_chunks_mut(w as usize * 3)
        .enumerate()
        .try_for_each(|(y, row)| -> Result<(), RenderError> {
            let mut scratch = MarchScratch::default();
            for x in 0..w {
                let ray = cam.ray_for_pixel(x, y as u32, eye_offset)?;
                let c = march_ray(
                    field,
                    &ray,
                    region.as_ref(),
                    &settings.scene_transform,
                    (cam.near, cam.far),
                    settings.samples_per_ray,
                    bg,
                    &mut scratch,
                )?;
                let i = x as usize * 3;
                row[i] = c.x.as_f32();
                row[i + 1] = c.y.as_f32();
                row[i + 2] = c.z.as_f32();
            }
            Ok(())
        })?;
    upscale_with(&img, settings.upscale, settings.filter)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eye {
    Left,
    Right,
}

/// Head pose plus interpupillary distance; eyes sit at `∓ipd/2` along the
/// head's right axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig<T> {
    pub head_pose: Pose<T>,
    pub ipd: T,
    pub fov_y: T,
}

impl<T: Real> StereoRig<T> {
    pub const DEFAULT_IPD: f64 = 0.063;

    pub fn new(head_pose: Pose<T>, ipd: T, fov_y: T) -> Result<Self, RenderError> {
        if !(ipd >= T::zero()) || !ipd.is_finite() {
            return Err(RenderError::InvalidSettings(format!(
                "ipd {ipd} must be finite and >= 0"
            )));
        }
        Ok(Self {
            head_pose,
            ipd,
            fov_y,
        })
    }

    /// Eye offset in head-local coordinates.
    pub fn eye_offset(&self, eye: Eye) -> Vec3<T> {
        let half = self.ipd * T::lit(0.5);
        match eye {
            Eye::Left => Vec3::new(-half, T::zero(), T::zero()),
            Eye::Right => Vec3::new(half, T::zero(), T::zero()),
        }
    }

    pub fn camera(&self, width: u32, height: u32) -> Result<Camera<T>, RenderError> {
        Ok(Camera::new(self.head_pose, self.fov_y, width, height)?)
    }
}

/// Renders both eyes concurrently.
pub fn render_stereo<T: Real, F: RadianceField<T> + ?Sized>(
    field: &F,
    rig: &StereoRig<T>,
    settings: &RenderSettings<T>,
) -> Result<(Image, Image), RenderError> {
    let cam = rig.camera(settings.width, settings.height)?;
    let (left, right) = rayon::join(
        || render_frame(field, &cam, settings, rig.eye_offset(Eye::Left)),
        || render_frame(field, &cam, settings, rig.eye_offset(Eye::Right)),
    );
    Ok((left?, right?))
}
