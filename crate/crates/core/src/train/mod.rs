//! Posed-image datasets, the optimization loop, PSNR and snapshots.

mod dataset;
mod snapshot;

use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use dataset::{
    fov_x_from_y, fov_y_from_x, load_dataset, orbit_poses, synthesize_dataset, validate_transform,
    Dataset, Frame, Manifest, ManifestFrame, SynthOptions, ROTATION_TOLERANCE,
};
pub use snapshot::{
    load_snapshot, read_snapshot, save_snapshot, write_snapshot, SnapshotError, SnapshotMeta,
    SNAPSHOT_MAGIC, SNAPSHOT_VERSION,
};

use crate::field::{field_grad, FieldError, NeuralField, TrainRay};
use crate::math::{Camera, MathError, Vec3};
use crate::render::{render_frame, Image, RenderError, RenderSettings};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("manifest {path}: {detail}")]
    Manifest { path: String, detail: String },
    #[error("image {path}: {detail}")]
    Image { path: String, detail: String },
    #[error("frame {frame}: transform is not invertible")]
    NonInvertibleTransform { frame: usize },
    #[error("frame {frame}: rotation deviates from orthonormal by {deviation:.2e}")]
    NonRigidTransform { frame: usize, deviation: f64 },
    #[error("frame {frame}: image is {got:?}, expected {expected:?}")]
    DimensionMismatch {
        frame: usize,
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("aabb_scale {0} is not a power of two in [1, 128]")]
    InvalidAabbScale(u32),
    #[error("dataset has no frames")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at step {step} (block {block})")]
    NonFinite { step: usize, block: String },
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    ShapeMismatch((u32, u32), (u32, u32)),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

impl TrainError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "defaults::batch_rays")]
    pub batch_rays: usize,
    #[serde(default = "defaults::steps")]
    pub steps: usize,
    #[serde(default = "defaults::samples_per_ray")]
    pub samples_per_ray: usize,
    #[serde(default = "defaults::lr_hash")]
    pub lr_hash: f64,
    #[serde(default = "defaults::lr_mlp")]
    pub lr_mlp: f64,
    #[serde(default = "defaults::beta1")]
    pub beta1: f64,
    #[serde(default = "defaults::beta2")]
    pub beta2: f64,
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub background: [f64; 3],
    pub seed: u64,
}

mod defaults {
    pub fn batch_rays() -> usize {
        4096
    }
    pub fn steps() -> usize {
        2000
    }
    pub fn samples_per_ray() -> usize {
        64
    }
    pub fn lr_hash() -> f64 {
        1e-2
    }
    pub fn lr_mlp() -> f64 {
        1e-3
    }
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.99
    }
    pub fn epsilon() -> f64 {
        1e-15
    }
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            batch_rays: defaults::batch_rays(),
            steps: defaults::steps(),
            samples_per_ray: defaults::samples_per_ray(),
            lr_hash: defaults::lr_hash(),
            lr_mlp: defaults::lr_mlp(),
            beta1: defaults::beta1(),
            beta2: defaults::beta2(),
            epsilon: defaults::epsilon(),
            background: [0.0; 3],
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.batch_rays == 0 {
            return bad("batch_rays must be positive");
        }
        if self.samples_per_ray < 2 {
            return bad("samples_per_ray must be >= 2");
        }
        if !(self.lr_hash > 0.0 && self.lr_mlp > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must be in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

/// Adaptive-moment optimizer with one learning rate per parameter range.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(len: usize, beta1: T, beta2: T, epsilon: T) -> Self {
        Self {
            beta1,
            beta2,
            epsilon,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], groups: &[(Range<usize>, T)]) {
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for (range, lr) in groups {
            for i in range.clone() {
                let g = grad[i];
                self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
                let m_hat = self.m[i] / c1;
                let v_hat = self.v[i] / c2;
                params[i] -= *lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Stepwise optimizer state over a dataset.
pub struct Trainer<'a, T> {
    field: NeuralField<T>,
    dataset: &'a Dataset,
    config: TrainConfig,
    cameras: Vec<Camera<T>>,
    adam: Adam<T>,
    rng: ChaCha8Rng,
    losses: Vec<f64>,
    batch: Vec<TrainRay<T>>,
}

impl<'a, T: Real> Trainer<'a, T> {
    pub fn new(
        field: NeuralField<T>,
        dataset: &'a Dataset,
        config: TrainConfig,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        if dataset.frames.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let cameras = (0..dataset.frames.len())
            .map(|i| {
                let c = dataset.camera(i)?;
                Ok(Camera::new(
                    crate::math::Pose::new(c.pose.position.cast(), c.pose.orientation.cast()),
                    T::of_f32(c.fov_y),
                    c.width,
                    c.height,
                )?)
            })
            .collect::<Result<Vec<_>, TrainError>>()?;
        let adam = Adam::new(
            field.param_count(),
            T::lit(config.beta1),
            T::lit(config.beta2),
            T::lit(config.epsilon),
        );
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            batch: Vec::with_capacity(config.batch_rays),
            field,
            dataset,
            config,
            cameras,
            adam,
            losses: Vec::new(),
        })
    }

    pub fn field(&self) -> &NeuralField<T> {
        &self.field
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn steps_taken(&self) -> usize {
        self.losses.len()
    }

    fn sample_batch(&mut self) {
        self.batch.clear();
        let (w, h) = (self.dataset.width, self.dataset.height);
        for _ in 0..self.config.batch_rays {
            let frame = self.rng.random_range(0..self.dataset.frames.len());
            let px = self.rng.random_range(0..w);
            let py = self.rng.random_range(0..h);
            let jitter: f64 = self.rng.random();
            let ray = self.cameras[frame]
                .ray_for_pixel(px, py, Vec3::zero())
                .expect("pixel sampled in range");
            let rgb = self.dataset.frames[frame].image.get(px, py);
            self.batch.push(TrainRay {
                ray,
                target: Vec3::new(T::of_f32(rgb[0]), T::of_f32(rgb[1]), T::of_f32(rgb[2])),
                jitter: T::lit(jitter),
            });
        }
    }

    /// Runs one optimizer step and returns its mean squared error.
    pub fn step(&mut self) -> Result<f64, TrainError> {
        let step = self.losses.len();
        self.sample_batch();
        let bg = Vec3::from_array(self.config.background.map(T::lit));
        let out = field_grad(&self.field, &self.batch, self.config.samples_per_ray, bg)?;
        let norm = T::lit(3.0 * self.batch.len() as f64);
        let loss = (out.loss / norm).to_f64_lossless();
        let bad_grad = out.grad.iter().position(|g| !g.is_finite());
        if !loss.is_finite() || bad_grad.is_some() {
            let block = self
                .field
                .params()
                .iter()
                .position(|p| !p.is_finite())
                .or(bad_grad)
                .and_then(|i| self.field.block_of(i))
                .unwrap_or_else(|| "loss".into());
            return Err(TrainError::NonFinite { step, block });
        }
        let grad: Vec<T> = out.grad.iter().map(|g| *g / norm).collect();
        let grid = self.field.grid_param_range();
        let groups = [
            (grid.clone(), T::lit(self.config.lr_hash)),
            (grid.end..self.field.param_count(), T::lit(self.config.lr_mlp)),
        ];
        self.adam.step(self.field.params_mut(), &grad, &groups);
        if let Some(i) = self.field.params().iter().position(|p| !p.is_finite()) {
            return Err(TrainError::NonFinite {
                step,
                block: self.field.block_of(i).unwrap_or_default(),
            });
        }
        self.losses.push(loss);
        Ok(loss)
    }

    pub fn finish(self) -> TrainOutcome<T> {
        TrainOutcome {
            field: self.field,
            losses: self.losses,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub field: NeuralField<T>,
    /// Per-step mean squared error.
    pub losses: Vec<f64>,
}

/// Runs `config.steps` optimizer steps. `progress` sees each step index and loss.
pub fn train<T: Real>(
    field: NeuralField<T>,
    dataset: &Dataset,
    config: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainOutcome<T>, TrainError> {
    let mut trainer = Trainer::new(field, dataset, config.clone())?;
    for i in 0..config.steps {
        let loss = trainer.step()?;
        progress(i, loss);
    }
    Ok(trainer.finish())
}

/// Reported ceiling for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// `10·log10(1/MSE)` over all channels, capped at [`PSNR_CAP`].
pub fn psnr(image: &Image, reference: &Image) -> Result<f64, TrainError> {
    if !image.same_shape(reference) {
        return Err(TrainError::ShapeMismatch(
            (image.width, image.height),
            (reference.width, reference.height),
        ));
    }
    let n = image.data.len().max(1) as f64;
    let mse: f64 = image
        .data
        .iter()
        .zip(&reference.data)
        .map(|(a, b)| {
            let d = *a as f64 - *b as f64;
            d * d
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Mean PSNR of `field` re-rendered from every training camera.
pub fn dataset_psnr<T: Real>(
    field: &NeuralField<T>,
    dataset: &Dataset,
    samples_per_ray: usize,
    background: [f64; 3],
) -> Result<f64, TrainError> {
    let mut settings = RenderSettings::new(dataset.width, dataset.height, field.aabb());
    settings.samples_per_ray = samples_per_ray;
    settings.background = Vec3::from_array(background.map(T::lit));
    let mut total = 0.0;
    for (i, frame) in dataset.frames.iter().enumerate() {
        let c = dataset.camera(i)?;
        let cam = Camera::new(
            crate::math::Pose::new(c.pose.position.cast(), c.pose.orientation.cast()),
            T::of_f32(c.fov_y),
            c.width,
            c.height,
        )?;
        let img = render_frame(field, &cam, &settings, Vec3::zero())?;
        total += psnr(&img, &frame.image)?;
    }
    Ok(total / dataset.frames.len() as f64)
}
