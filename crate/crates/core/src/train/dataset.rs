use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::field::RadianceField;
use crate::math::{Aabb, Camera, Mat4, Pose, Quat, Vec3};
use crate::render::{render_frame, Image, RenderSettings};

/// Tolerance on `|RᵀR − I|` below which a rotation block is accepted and
/// re-orthonormalized.
pub const ROTATION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub file_path: String,
    pub transform_matrix: [[f64; 4]; 4],
}

/// `transforms.json` layout. Unknown keys are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub camera_angle_x: f64,
    #[serde(default = "default_aabb_scale")]
    pub aabb_scale: u32,
    pub frames: Vec<ManifestFrame>,
}

fn default_aabb_scale() -> u32 {
    1
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub path: PathBuf,
    pub image: Image,
    /// Camera-to-world, re-orthonormalized.
    pub transform: Mat4<f32>,
    pub pose: Pose<f32>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub frames: Vec<Frame>,
    pub aabb_scale: u32,
    /// Horizontal field of view in radians.
    pub camera_angle_x: f32,
    pub width: u32,
    pub height: u32,
}

impl Dataset {
    /// Cube of side `aabb_scale` centred at the origin.
    pub fn aabb(&self) -> Aabb<f32> {
        Aabb::centered_cube(self.aabb_scale as f32)
    }

    pub fn fov_y(&self) -> f32 {
        fov_y_from_x(self.camera_angle_x, self.width, self.height)
    }

    pub fn camera(&self, frame: usize) -> Result<Camera<f32>, TrainError> {
        Ok(Camera::new(
            self.frames[frame].pose,
            self.fov_y(),
            self.width,
            self.height,
        )?)
    }
}

pub fn fov_y_from_x(angle_x: f32, width: u32, height: u32) -> f32 {
    2.0 * ((angle_x * 0.5).tan() * height as f32 / width as f32).atan()
}

pub fn fov_x_from_y(angle_y: f32, width: u32, height: u32) -> f32 {
    2.0 * ((angle_y * 0.5).tan() * width as f32 / height as f32).atan()
}

fn resolve_image(base: &Path, file_path: &str) -> Option<PathBuf> {
    let p = base.join(file_path);
    if p.is_file() {
        return Some(p);
    }
    // Synthetic NeRF manifests omit the extension.
    if p.extension().is_none() {
        for ext in ["png", "jpg", "jpeg"] {
            let q = p.with_extension(ext);
            if q.is_file() {
                return Some(q);
            }
        }
    }
    None
}

fn load_image(path: &Path) -> Result<Image, TrainError> {
    let img = image::open(path).map_err(|e| TrainError::Image {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let rgba = img.to_rgba8();
    let (w, h) = rgba.dimensions();
    // straight alpha composited over black
    let data = rgba
        .pixels()
        .flat_map(|p| {
            let a = p[3] as f32 / 255.0;
            [
                p[0] as f32 / 255.0 * a,
                p[1] as f32 / 255.0 * a,
                p[2] as f32 / 255.0 * a,
            ]
        })
        .collect();
    Ok(Image::from_data(w, h, data)?)
}

/// Validates a camera-to-world matrix and returns it re-orthonormalized.
pub fn validate_transform(frame: usize, m: &[[f64; 4]; 4]) -> Result<Mat4<f32>, TrainError> {
    let mat = Mat4::from_rows(*m);
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(TrainError::NonInvertibleTransform { frame });
    }
    let det = mat.determinant3();
    if det.abs() < 1e-9 {
        return Err(TrainError::NonInvertibleTransform { frame });
    }
    let err = mat.orthonormality_error();
    let bottom = m[3];
    let bottom_ok = bottom[0].abs() <= ROTATION_TOLERANCE
        && bottom[1].abs() <= ROTATION_TOLERANCE
        && bottom[2].abs() <= ROTATION_TOLERANCE
        && (bottom[3] - 1.0).abs() <= ROTATION_TOLERANCE;
    if err > ROTATION_TOLERANCE || det < 0.0 || !bottom_ok {
        return Err(TrainError::NonRigidTransform {
            frame,
            deviation: err,
        });
    }
    let q = Quat::from_mat3(mat.rotation_block())?;
    Ok(Mat4::from_rotation_translation(q.cast(), mat.translation().cast()))
}

/// Parses a manifest and loads every referenced image.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset, TrainError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| TrainError::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| TrainError::Manifest {
        path: manifest_path.display().to_string(),
        detail: e.to_string(),
    })?;
    if manifest.frames.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if !manifest.aabb_scale.is_power_of_two() || manifest.aabb_scale > 128 {
        return Err(TrainError::InvalidAabbScale(manifest.aabb_scale));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut frames = Vec::with_capacity(manifest.frames.len());
    let mut dims: Option<(u32, u32)> = None;
    for (i, f) in manifest.frames.iter().enumerate() {
        let transform = validate_transform(i, &f.transform_matrix)?;
        let path = resolve_image(base, &f.file_path)
            .ok_or_else(|| TrainError::MissingFile(base.join(&f.file_path).display().to_string()))?;
        let image = load_image(&path)?;
        match dims {
            None => dims = Some((image.width, image.height)),
            Some(d) if d != (image.width, image.height) => {
                return Err(TrainError::DimensionMismatch {
                    frame: i,
                    expected: d,
                    got: (image.width, image.height),
                })
            }
            _ => {}
        }
        frames.push(Frame {
            path,
            image,
            pose: Pose::from_matrix(&transform)?,
            transform,
        });
    }
    let (width, height) = dims.expect("at least one frame");
    Ok(Dataset {
        frames,
        aabb_scale: manifest.aabb_scale,
        camera_angle_x: manifest.camera_angle_x as f32,
        width,
        height,
    })
}

/// Camera positions spread over a sphere of `radius` (Fibonacci lattice),
/// each looking at the origin.
pub fn orbit_poses(views: usize, radius: f32) -> Result<Vec<Pose<f32>>, TrainError> {
    let golden = std::f32::consts::PI * (3.0 - 5.0f32.sqrt());
    (0..views)
        .map(|i| {
            // keep away from the poles, where look-at with +Y up degenerates
            let y = 0.85 * (1.0 - 2.0 * (i as f32 + 0.5) / views as f32);
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f32;
            let eye = Vec3::new(r * phi.cos(), y, r * phi.sin()) * radius;
            Ok(Pose::look_at(eye, Vec3::zero())?)
        })
        .collect()
}

/// Options for [`synthesize_dataset`].
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub views: usize,
    pub resolution: u32,
    pub fov_y: f32,
    pub orbit_radius: f32,
    pub aabb_scale: u32,
    pub samples_per_ray: usize,
}

/// Renders `field` from orbit cameras and writes PNGs plus a
/// `transforms.json` into `dir`. Returns the manifest path.
pub fn synthesize_dataset<F: RadianceField<f32> + ?Sized>(
    field: &F,
    opts: &SynthOptions,
    dir: &Path,
) -> Result<PathBuf, TrainError> {
    fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
    let aabb = Aabb::centered_cube(opts.aabb_scale as f32);
    let mut settings = RenderSettings::new(opts.resolution, opts.resolution, aabb);
    settings.samples_per_ray = opts.samples_per_ray;
    let mut frames = Vec::with_capacity(opts.views);
    for (i, pose) in orbit_poses(opts.views, opts.orbit_radius)?.into_iter().enumerate() {
        let cam = Camera::new(pose, opts.fov_y, opts.resolution, opts.resolution)?;
        let img = render_frame(field, &cam, &settings, Vec3::zero())?;
        let name = format!("r_{i:03}.png");
        img.write_png(&dir.join(&name))?;
        let m = pose.camera_to_world();
        frames.push(ManifestFrame {
            file_path: name,
            transform_matrix: m.m.map(|row| row.map(|v| v as f64)),
        });
    }
    let manifest = Manifest {
        camera_angle_x: fov_x_from_y(opts.fov_y, opts.resolution, opts.resolution) as f64,
        aabb_scale: opts.aabb_scale,
        frames,
    };
    let path = dir.join("transforms.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| TrainError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_png(path: &Path, w: u32, h: u32) {
        Image::filled(w, h, [0.5, 0.25, 1.0]).write_png(path).unwrap();
    }

    fn identity() -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        m
    }

    fn write_manifest(dir: &Path, frames: &[(&str, [[f64; 4]; 4])], aabb_scale: u32) -> PathBuf {
        let manifest = Manifest {
            camera_angle_x: 0.69,
            aabb_scale,
            frames: frames
                .iter()
                .map(|(p, m)| ManifestFrame {
                    file_path: p.to_string(),
                    transform_matrix: *m,
                })
                .collect(),
        };
        let path = dir.join("transforms.json");
        fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
        path
    }

    #[test]
    fn parses_two_frames() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("a.png"), 4, 3);
        write_png(&dir.path().join("b.png"), 4, 3);
        let mut shifted = identity();
        shifted[0][3] = 1.5;
        let path = write_manifest(dir.path(), &[("a.png", identity()), ("./b", shifted)], 2);
        let ds = load_dataset(&path).unwrap();
        assert_eq!(ds.frames.len(), 2);
        assert_eq!((ds.width, ds.height), (4, 3));
        assert_eq!(ds.frames[0].pose, Pose::identity());
        assert_eq!(ds.frames[1].pose.position, Vec3::new(1.5, 0.0, 0.0));
        let px = ds.frames[0].image.get(0, 0);
        assert!((px[1] - 64.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn aabb_scale_sets_centered_box() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("a.png"), 2, 2);
        let path = write_manifest(dir.path(), &[("a.png", identity())], 16);
        let ds = load_dataset(&path).unwrap();
        let b = ds.aabb();
        assert_eq!(b.min, Vec3::splat(-8.0));
        assert_eq!(b.max, Vec3::splat(8.0));
        assert_eq!(b.scale(), 16.0);
    }

    #[test]
    fn missing_image_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), &[("nope.png", identity())], 1);
        match load_dataset(&path) {
            Err(TrainError::MissingFile(p)) => assert!(p.ends_with("nope.png"), "{p}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn degenerate_and_skewed_transforms_are_distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("a.png"), 2, 2);
        let mut zero = identity();
        zero[0][0] = 0.0;
        let path = write_manifest(dir.path(), &[("a.png", zero)], 1);
        assert!(matches!(
            load_dataset(&path),
            Err(TrainError::NonInvertibleTransform { frame: 0 })
        ));
        let mut skew = identity();
        skew[0][1] = 0.2;
        let path = write_manifest(dir.path(), &[("a.png", skew)], 1);
        assert!(matches!(
            load_dataset(&path),
            Err(TrainError::NonRigidTransform { frame: 0, .. })
        ));
    }

    #[test]
    fn slightly_off_rotation_is_renormalized() {
        let m = [
            [1.0, 0.0005, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let out = validate_transform(0, &m).unwrap();
        assert!(out.orthonormality_error() < 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("a.png"), 4, 4);
        write_png(&dir.path().join("b.png"), 4, 2);
        let path = write_manifest(dir.path(), &[("a.png", identity()), ("b.png", identity())], 1);
        assert!(matches!(
            load_dataset(&path),
            Err(TrainError::DimensionMismatch { frame: 1, .. })
        ));
    }

    #[test]
    fn bad_aabb_scale_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("a.png"), 2, 2);
        let path = write_manifest(dir.path(), &[("a.png", identity())], 3);
        assert!(matches!(load_dataset(&path), Err(TrainError::InvalidAabbScale(3))));
    }
}
