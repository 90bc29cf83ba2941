use serde::{Deserialize, Serialize};

use super::FieldError;
use crate::math::Vec3;
use crate::scalar::Real;

/// Per-axis multipliers of the spatial hash.
pub const HASH_PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashGridConfig {
    pub levels: usize,
    pub features_per_level: usize,
    /// Entries per level; a power of two.
    pub table_size: usize,
    pub base_resolution: u32,
    pub max_resolution: u32,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            features_per_level: 2,
            table_size: 1 << 14,
            base_resolution: 16,
            max_resolution: 256,
        }
    }
}

impl HashGridConfig {
    pub fn validate(&self) -> Result<(), FieldError> {
        let bad = |m: &str| Err(FieldError::InvalidConfig(m.to_string()));
        if self.levels == 0 || self.features_per_level == 0 {
            return bad("levels and features_per_level must be >= 1");
        }
        if !self.table_size.is_power_of_two() {
            return bad("table_size must be a power of two");
        }
        if self.base_resolution == 0 || self.base_resolution > self.max_resolution {
            return bad("require 1 <= base_resolution <= max_resolution");
        }
        Ok(())
    }

    /// Per-level resolution growth factor.
    pub fn growth(&self) -> f64 {
        if self.levels == 1 {
            return 1.0;
        }
        let (lo, hi) = (self.base_resolution as f64, self.max_resolution as f64);
        ((hi.ln() - lo.ln()) / (self.levels - 1) as f64).exp()
    }

    /// Cells per axis at `level`.
    pub fn level_resolution(&self, level: usize) -> u32 {
        let r = self.base_resolution as f64 * self.growth().powi(level as i32);
        // guard against exp/ln round-off at the top level
        (r + 1e-6).floor() as u32
    }

    pub fn encoded_len(&self) -> usize {
        self.levels * self.features_per_level
    }

    pub fn param_count(&self) -> usize {
        self.levels * self.table_size * self.features_per_level
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelInfo {
    pub resolution: u32,
    pub dense: bool,
}

/// Resolved level layout of a [`HashGridConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct HashGrid {
    pub config: HashGridConfig,
    pub levels: Vec<LevelInfo>,
}

impl HashGrid {
    pub fn new(config: HashGridConfig) -> Result<Self, FieldError> {
        config.validate()?;
        let levels = (0..config.levels)
            .map(|l| {
                let resolution = config.level_resolution(l);
                let verts = resolution as u64 + 1;
                LevelInfo {
                    resolution,
                    dense: verts * verts * verts <= config.table_size as u64,
                }
            })
            .collect();
        Ok(Self { config, levels })
    }

    /// Table slot of lattice vertex `cell` at `level`: row-major for levels
    /// whose full lattice fits, spatial hash otherwise.
    #[inline(always)]
    pub fn hash_index(&self, cell: [u32; 3], level: usize) -> usize {
        let info = self.levels[level];
        if info.dense {
            let n = info.resolution as usize + 1;
            cell[0] as usize + cell[1] as usize * n + cell[2] as usize * n * n
        } else {
            let h = cell[0].wrapping_mul(HASH_PRIMES[0])
                ^ cell[1].wrapping_mul(HASH_PRIMES[1])
                ^ cell[2].wrapping_mul(HASH_PRIMES[2]);
            (h as usize) & (self.config.table_size - 1)
        }
    }

    /// Fills the 8 corner parameter offsets and trilinear weights of every
    /// level for a normalized position `xn ∈ [0,1]³`. Offsets point at the
    /// first feature of the corner inside the concatenated tables.
    #[inline]
    pub fn corners<T: Real>(&self, xn: Vec3<T>, offsets: &mut [u32], weights: &mut [T]) {
        let f = self.config.features_per_level;
        let t = self.config.table_size;
        for (l, info) in self.levels.iter().enumerate() {
            let res = T::lit(info.resolution as f64);
            let mut cell = [0u32; 3];
            let mut frac = [T::zero(); 3];
            for a in 0..3 {
                let p = xn[a] * res;
                let c = p.floor().max(T::zero()).min(res - T::one());
                cell[a] = c.to_f64_lossless() as u32;
                frac[a] = p - c;
            }
            let table_base = l * t;
            for corner in 0..8 {
                let mut idx = cell;
                let mut w = T::one();
                for a in 0..3 {
                    if corner & (1 << a) != 0 {
                        idx[a] += 1;
                        w *= frac[a];
                    } else {
                        w *= T::one() - frac[a];
                    }
                }
                let slot = self.hash_index(idx, l);
                offsets[l * 8 + corner] = ((table_base + slot) * f) as u32;
                weights[l * 8 + corner] = w;
            }
        }
    }
}

/// Multi-resolution encoding of `x ∈ [0,1]³` given the concatenated level
/// tables `tables` (level-major, then slot, then feature).
pub fn hash_encode<T: Real>(
    x: Vec3<T>,
    tables: &[T],
    config: &HashGridConfig,
) -> Result<Vec<T>, FieldError> {
    if !(0..3).all(|a| x[a] >= T::zero() && x[a] <= T::one()) {
        return Err(FieldError::OutOfDomain([
            x.x.to_f64_lossless(),
            x.y.to_f64_lossless(),
            x.z.to_f64_lossless(),
        ]));
    }
    if tables.len() < config.param_count() {
        return Err(FieldError::ParamLength {
            expected: config.param_count(),
            got: tables.len(),
        });
    }
    let grid = HashGrid::new(config.clone())?;
    let f = config.features_per_level;
    let mut offsets = vec![0u32; config.levels * 8];
    let mut weights = vec![T::zero(); config.levels * 8];
    grid.corners(x, &mut offsets, &mut weights);
    let mut out = vec![T::zero(); config.encoded_len()];
    for l in 0..config.levels {
        for c in 0..8 {
            let o = offsets[l * 8 + c] as usize;
            let w = weights[l * 8 + c];
            for k in 0..f {
                out[l * f + k] += w * tables[o + k];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_tables(cfg: &HashGridConfig, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..cfg.param_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect()
    }

    #[test]
    fn default_levels_span_base_to_max() {
        let cfg = HashGridConfig::default();
        assert_eq!(cfg.level_resolution(0), 16);
        assert_eq!(cfg.level_resolution(cfg.levels - 1), 256);
        let grid = HashGrid::new(cfg).unwrap();
        // 17³ = 4913 fits in 2^14, 23³ = 12167 fits, 34³ does not
        assert!(grid.levels[0].dense);
        assert!(!grid.levels[7].dense);
    }

    #[test]
    fn zero_cell_maps_to_zero() {
        let grid = HashGrid::new(HashGridConfig::default()).unwrap();
        for l in 0..grid.levels.len() {
            assert_eq!(grid.hash_index([0, 0, 0], l), 0);
        }
    }

    #[test]
    fn dense_level_is_row_major() {
        let grid = HashGrid::new(HashGridConfig::default()).unwrap();
        assert_eq!(grid.levels[0].resolution, 16);
        assert_eq!(grid.hash_index([1, 2, 3], 0), 1 + 2 * 17 + 3 * 17 * 17);
    }

    #[test]
    fn hashed_level_matches_enumerated_xor() {
        let cfg = HashGridConfig {
            levels: 1,
            table_size: 16,
            base_resolution: 16,
            max_resolution: 16,
            ..HashGridConfig::default()
        };
        let grid = HashGrid::new(cfg).unwrap();
        assert!(!grid.levels[0].dense);
        // Brute force: enumerate all lattice vertices, compute the hash with
        // u64 arithmetic reduced mod 2^32, and bucket them.
        let mut buckets = vec![Vec::new(); 16];
        for z in 0..17u64 {
            for y in 0..17u64 {
                for x in 0..17u64 {
                    let h = ((x * 1) % (1 << 32))
                        ^ ((y * 2_654_435_761) % (1 << 32))
                        ^ ((z * 805_459_861) % (1 << 32));
                    let slot = (h % 16) as usize;
                    assert_eq!(grid.hash_index([x as u32, y as u32, z as u32], 0), slot);
                    buckets[slot].push((x, y, z));
                }
            }
        }
        // every slot is shared (17³ vertices into 16 slots)
        assert!(buckets.iter().all(|b| b.len() > 1));
        // (5,0,0) and (0,5,0): 5 vs 5·2654435761 mod 2^32 = 387276917, both ≡ 5 mod 16
        assert_eq!(grid.hash_index([5, 0, 0], 0), 5);
        assert_eq!((5u64 * 2_654_435_761) % (1 << 32), 387_276_917);
        assert_eq!(grid.hash_index([0, 5, 0], 0), 387_276_917 % 16);
        assert_eq!(grid.hash_index([5, 0, 0], 0), grid.hash_index([0, 5, 0], 0));
    }

    #[test]
    fn encoding_at_lattice_vertex_returns_stored_feature() {
        let cfg = HashGridConfig {
            levels: 3,
            table_size: 1 << 10,
            base_resolution: 4,
            max_resolution: 16,
            ..HashGridConfig::default()
        };
        let tables = random_tables(&cfg, 3);
        let grid = HashGrid::new(cfg.clone()).unwrap();
        // x = 0.5 is a vertex at every level (resolutions 4, 8, 16)
        let x = Vec3::new(0.5, 0.25, 0.75);
        let enc = hash_encode(x, &tables, &cfg).unwrap();
        for l in 0..3 {
            let n = grid.levels[l].resolution as f64;
            let v = [(0.5 * n) as u32, (0.25 * n) as u32, (0.75 * n) as u32];
            let slot = grid.hash_index(v, l);
            for k in 0..2 {
                let stored = tables[(l * cfg.table_size + slot) * 2 + k];
                assert!((enc[l * 2 + k] - stored).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encoding_at_cell_center_is_corner_mean() {
        let cfg = HashGridConfig {
            levels: 1,
            table_size: 1 << 12,
            base_resolution: 8,
            max_resolution: 8,
            ..HashGridConfig::default()
        };
        let tables = random_tables(&cfg, 5);
        let grid = HashGrid::new(cfg.clone()).unwrap();
        let x = Vec3::new(2.5 / 8.0, 4.5 / 8.0, 0.5 / 8.0);
        let enc = hash_encode(x, &tables, &cfg).unwrap();
        for k in 0..2 {
            let mut mean = 0.0;
            for c in 0..8u32 {
                let v = [2 + (c & 1), 4 + ((c >> 1) & 1), (c >> 2) & 1];
                mean += tables[grid.hash_index(v, 0) * 2 + k] / 8.0;
            }
            assert!((enc[k] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn encoding_is_affine_along_segment_within_cell() {
        let cfg = HashGridConfig {
            levels: 1,
            table_size: 1 << 12,
            base_resolution: 8,
            max_resolution: 8,
            ..HashGridConfig::default()
        };
        let tables = random_tables(&cfg, 9);
        // segment along x inside one cell: trilinear is linear in each axis
        let a = Vec3::new(0.26, 0.4, 0.6);
        let b = Vec3::new(0.37, 0.4, 0.6);
        let m = (a + b) * 0.5;
        let ea = hash_encode(a, &tables, &cfg).unwrap();
        let eb = hash_encode(b, &tables, &cfg).unwrap();
        let em = hash_encode(m, &tables, &cfg).unwrap();
        for k in 0..2 {
            assert!((em[k] - 0.5 * (ea[k] + eb[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn encoding_is_continuous_across_faces() {
        let cfg = HashGridConfig {
            levels: 2,
            table_size: 1 << 6,
            base_resolution: 4,
            max_resolution: 8,
            ..HashGridConfig::default()
        };
        let tables = random_tables(&cfg, 1);
        let grid = HashGrid::new(cfg.clone()).unwrap();
        // x = 0.25 is a face shared by cells 1 and 2 at level 0 (res 4);
        // evaluating the interpolant of the left cell at frac = 1 must agree.
        let on_face = Vec3::new(0.25, 0.3, 0.7);
        let e = hash_encode(on_face, &tables, &cfg).unwrap();
        let left_cell = [0u32, 1, 2];
        let fy = 0.3 * 4.0 - 1.0;
        let fz = 0.7 * 4.0 - 2.0;
        let mut left = [0.0; 2];
        for c in 0..8u32 {
            let idx = [
                left_cell[0] + (c & 1),
                left_cell[1] + ((c >> 1) & 1),
                left_cell[2] + ((c >> 2) & 1),
            ];
            let wx = if c & 1 != 0 { 1.0 } else { 0.0 };
            let wy = if c & 2 != 0 { fy } else { 1.0 - fy };
            let wz = if c & 4 != 0 { fz } else { 1.0 - fz };
            let slot = grid.hash_index(idx, 0);
            for k in 0..2 {
                left[k] += wx * wy * wz * tables[slot * 2 + k];
            }
        }
        for k in 0..2 {
            assert!((e[k] - left[k]).abs() < 1e-12);
        }
        // and limits from either side converge
        let eps = 1e-9;
        let l = hash_encode(Vec3::new(0.25 - eps, 0.3, 0.7), &tables, &cfg).unwrap();
        let r = hash_encode(Vec3::new(0.25 + eps, 0.3, 0.7), &tables, &cfg).unwrap();
        for k in 0..4 {
            assert!((l[k] - r[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn encoding_rejects_out_of_domain() {
        let cfg = HashGridConfig::default();
        let tables = vec![0.0f32; cfg.param_count()];
        assert!(matches!(
            hash_encode(Vec3::new(1.01, 0.5, 0.5), &tables, &cfg),
            Err(FieldError::OutOfDomain(_))
        ));
        assert!(hash_encode(Vec3::new(1.0, 0.0, 0.5), &tables, &cfg).is_ok());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = HashGridConfig::default();
        cfg.table_size = 1000;
        assert!(cfg.validate().is_err());
        let mut cfg = HashGridConfig::default();
        cfg.base_resolution = 512;
        assert!(cfg.validate().is_err());
        let mut cfg = HashGridConfig::default();
        cfg.levels = 0;
        assert!(cfg.validate().is_err());
    }
}
