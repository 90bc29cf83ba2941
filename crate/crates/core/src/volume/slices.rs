use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{VolumeError, VolumeGrid};
use crate::math::{Aabb, Vec3};
use crate::render::{decode_png, encode_png};

pub const META_FILE: &str = "meta.json";
pub const RAW_FILE: &str = "volume.raw";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceFormat {
    /// One RGBA8 image per z-slice; alpha holds density normalized to
    /// `density_range`.
    Png,
    /// Single little-endian f32 file: density plane, then r, g, b planes.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMeta {
    pub format: SliceFormat,
    pub resolution: [usize; 3],
    pub aabb_min: [f32; 3],
    pub aabb_max: [f32; 3],
    pub density_range: [f32; 2],
    pub color_range: [f32; 2],
    /// Row-major map from voxel index `(i, j, k, 1)` to the world-space
    /// centre of that voxel.
    pub grid_to_world: [[f32; 4]; 4],
    pub slice_axis: String,
}

pub fn slice_name(index: usize) -> String {
    format!("slice_{index:04}.png")
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> VolumeError + '_ {
    move |source| VolumeError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn meta_for(grid: &VolumeGrid, format: SliceFormat) -> SliceMeta {
    let (lo, hi) = grid.density_range();
    let c = grid.cell_size();
    let m = grid.aabb.min;
    SliceMeta {
        format,
        resolution: grid.resolution,
        aabb_min: grid.aabb.min.to_array(),
        aabb_max: grid.aabb.max.to_array(),
        density_range: [lo, hi],
        color_range: [0.0, 1.0],
        grid_to_world: [
            [c.x, 0.0, 0.0, m.x + 0.5 * c.x],
            [0.0, c.y, 0.0, m.y + 0.5 * c.y],
            [0.0, 0.0, c.z, m.z + 0.5 * c.z],
            [0.0, 0.0, 0.0, 1.0],
        ],
        slice_axis: "z".into(),
    }
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `grid` into `dir` as a slice stack plus `meta.json`.
pub fn write_slices(grid: &VolumeGrid, dir: &Path, format: SliceFormat) -> Result<SliceMeta, VolumeError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let meta = meta_for(grid, format);
    let [nx, ny, nz] = grid.resolution;
    let plane = nx * ny;
    match format {
        SliceFormat::Png => {
            let [lo, hi] = meta.density_range;
            let span = hi - lo;
            for k in 0..nz {
                let mut px = Vec::with_capacity(4 * plane);
                for idx in k * plane..(k + 1) * plane {
                    let a = if span > 0.0 {
                        (grid.density[idx] - lo) / span
                    } else {
                        0.0
                    };
                    px.extend_from_slice(&[
                        quantize(grid.rgb[3 * idx]),
                        quantize(grid.rgb[3 * idx + 1]),
                        quantize(grid.rgb[3 * idx + 2]),
                        quantize(a),
                    ]);
                }
                let bytes = encode_png(nx as u32, ny as u32, &px, png::ColorType::Rgba)?;
                let path = dir.join(slice_name(k));
                fs::write(&path, bytes).map_err(io(&path))?;
            }
        }
        SliceFormat::Raw => {
            let n = grid.voxel_count();
            let mut out = Vec::with_capacity(16 * n);
            for d in &grid.density {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for ch in 0..3 {
                for idx in 0..n {
                    out.extend_from_slice(&grid.rgb[3 * idx + ch].to_le_bytes());
                }
            }
            let path = dir.join(RAW_FILE);
            fs::write(&path, out).map_err(io(&path))?;
        }
    }
    let path = dir.join(META_FILE);
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&path, text).map_err(io(&path))?;
    Ok(meta)
}

pub fn read_slices(dir: &Path) -> Result<VolumeGrid, VolumeError> {
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(io(&meta_path))?;
    let meta: SliceMeta =
        serde_json::from_str(&text).map_err(|e| VolumeError::Metadata(e.to_string()))?;
    let [nx, ny, nz] = meta.resolution;
    if meta.resolution.iter().any(|&n| n < 2) {
        return Err(VolumeError::Metadata(format!(
            "resolution {:?} must be >= 2 per axis",
            meta.resolution
        )));
    }
    let aabb = Aabb::new(Vec3::from_array(meta.aabb_min), Vec3::from_array(meta.aabb_max))
        .map_err(|e| VolumeError::Metadata(e.to_string()))?;
    let plane = nx * ny;
    let n = plane * nz;
    let mut density = vec![0.0f32; n];
    let mut rgb = vec![0.0f32; 3 * n];
    match meta.format {
        SliceFormat::Png => {
            let [lo, hi] = meta.density_range;
            for k in 0..nz {
                let path = dir.join(slice_name(k));
                if !path.is_file() {
                    return Err(VolumeError::MissingSlice {
                        index: k,
                        path: path.display().to_string(),
                    });
                }
                let bytes = fs::read(&path).map_err(io(&path))?;
                let (w, h, channels, px) = decode_png(&bytes)?;
                if (w as usize, h as usize, channels) != (nx, ny, 4) {
                    return Err(VolumeError::Metadata(format!(
                        "slice {k} is {w}x{h} with {channels} channels, expected {nx}x{ny} RGBA"
                    )));
                }
                for (p, chunk) in px.chunks_exact(4).enumerate() {
                    let idx = k * plane + p;
                    density[idx] = lo + (hi - lo) * chunk[3] as f32 / 255.0;
                    for ch in 0..3 {
                        rgb[3 * idx + ch] = chunk[ch] as f32 / 255.0;
                    }
                }
            }
        }
        SliceFormat::Raw => {
            let path = dir.join(RAW_FILE);
            let bytes = fs::read(&path).map_err(io(&path))?;
            if bytes.len() != 16 * n {
                return Err(VolumeError::Metadata(format!(
                    "{} holds {} bytes, expected {}",
                    RAW_FILE,
                    bytes.len(),
                    16 * n
                )));
            }
            let values: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            density.copy_from_slice(&values[..n]);
            for ch in 0..3 {
                for idx in 0..n {
                    rgb[3 * idx + ch] = values[(1 + ch) * n + idx];
                }
            }
        }
    }
    VolumeGrid::new(meta.resolution, aabb, density, rgb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::AnalyticField;
    use crate::volume::{export_volume, DEFAULT_VOXEL_BUDGET};

    fn grid() -> VolumeGrid {
        let f = AnalyticField::Union(vec![
            AnalyticField::sphere(Vec3::zero(), 0.6f32, 10.0, Vec3::new(0.9, 0.3, 0.1)),
            AnalyticField::constant(0.0, Vec3::zero()),
        ]);
        let mut g = export_volume(&f, &Aabb::centered_cube(2.0), [16, 12, 64], DEFAULT_VOXEL_BUDGET).unwrap();
        // a few in-between densities
        for (i, d) in g.density.iter_mut().enumerate().step_by(7) {
            *d = (i % 101) as f32 / 10.0;
        }
        g
    }

    #[test]
    fn raw_roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid();
        write_slices(&g, dir.path(), SliceFormat::Raw).unwrap();
        assert_eq!(read_slices(dir.path()).unwrap(), g);
    }

    #[test]
    fn png_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid();
        let meta = write_slices(&g, dir.path(), SliceFormat::Png).unwrap();
        assert_eq!(meta.density_range, [0.0, 10.0]);
        let count = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("slice_"))
            .count();
        assert_eq!(count, 64);
        let back = read_slices(dir.path()).unwrap();
        let err = g
            .density
            .iter()
            .zip(&back.density)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max);
        assert!(err <= 10.0 / 255.0, "{err}");
        let cerr = g.rgb.iter().zip(&back.rgb).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(cerr <= 1.0 / 255.0);
    }

    #[test]
    fn missing_slice_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_slices(&grid(), dir.path(), SliceFormat::Png).unwrap();
        fs::remove_file(dir.path().join("slice_0012.png")).unwrap();
        match read_slices(dir.path()) {
            Err(VolumeError::MissingSlice { index: 12, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn metadata_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid();
        write_slices(&g, dir.path(), SliceFormat::Raw).unwrap();
        let path = dir.path().join(META_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("64", "63");
        fs::write(&path, text).unwrap();
        assert!(matches!(read_slices(dir.path()), Err(VolumeError::Metadata(_))));
    }

    #[test]
    fn grid_to_world_maps_indices_to_centres() {
        let g = grid();
        let m = meta_for(&g, SliceFormat::Raw).grid_to_world;
        let (i, j, k) = (3usize, 5usize, 9usize);
        let p = [0, 1, 2].map(|r| m[r][0] * i as f32 + m[r][1] * j as f32 + m[r][2] * k as f32 + m[r][3]);
        let c = g.voxel_center(i, j, k);
        for a in 0..3 {
            assert!((p[a] - c[a]).abs() < 1e-6);
        }
    }
}
