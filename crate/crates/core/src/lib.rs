//! Hash-encoded radiance fields: training from posed images, stereo volume
//! rendering with an upscaling path, volume slice export and direct volume
//! ray casting, and a frame-time benchmark harness.
//!
//! The geometry, fields and renderer are generic over [`Real`] (`f32` or
//! `f64`); the aliases below fix the production precision.

pub mod bench;
pub mod field;
pub mod math;
pub mod render;
pub mod scenes;
pub mod train;
pub mod volume;
pub mod scalar;

pub use scalar::Real;

pub type Vec3f = math::Vec3<f32>;
pub type Quatf = math::Quat<f32>;
pub type Mat4f = math::Mat4<f32>;
pub type Posef = math::Pose<f32>;
pub type Cameraf = math::Camera<f32>;
pub type Rayf = math::Ray<f32>;
pub type Aabbf = math::Aabb<f32>;
pub type Similarityf = math::Similarity<f32>;
pub type NeuralFieldf = field::NeuralField<f32>;
pub type AnalyticFieldf = field::AnalyticField<f32>;
pub type RenderSettingsf = render::RenderSettings<f32>;
pub type StereoRigf = render::StereoRig<f32>;
