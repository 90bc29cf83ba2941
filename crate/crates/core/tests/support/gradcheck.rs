//! Reverse-mode field gradients against central finite differences.

use ngp_core::field::{field_grad, HashGridConfig, MlpConfig, NeuralField, TrainRay};
use ngp_core::math::{Aabb, Ray, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-3;

fn tiny_field(seed: u64) -> NeuralField<f64> {
    let mut f = NeuralField::new(
        HashGridConfig {
            levels: 2,
            features_per_level: 2,
            table_size: 1 << 4,
            base_resolution: 4,
            max_resolution: 8,
        },
        MlpConfig {
            hidden_width: 8,
            density_hidden_layers: 1,
            color_hidden_layers: 1,
            geo_features: 4,
            dir_octaves: 2,
        },
        Aabb::centered_cube(2.0),
        seed,
    )
    .unwrap();
    // give the tables visible magnitude so every block carries signal
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let range = f.grid_param_range();
    for p in &mut f.params_mut()[range] {
        *p = rng.random_range(-0.5..0.5);
    }
    f
}

fn batch(seed: u64) -> Vec<TrainRay<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..6)
        .map(|_| {
            let o = Vec3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                3.0,
            );
            let aim = Vec3::new(
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
                0.0,
            );
            TrainRay {
                ray: Ray::new(o, (aim - o).normalized()),
                target: Vec3::new(rng.random(), rng.random(), rng.random()),
                jitter: rng.random_range(0.0..1.0),
            }
        })
        .collect()
}

pub struct Report {
    pub checked: usize,
    pub kinked: usize,
    pub worst: f64,
}

/// Central differences are only an oracle where the loss is smooth over
/// `[θ-h, θ+h]`. A ReLU switching inside that interval shows up as the two
/// one-sided slopes disagreeing; such coordinates are counted separately.
pub fn check(seed: u64) -> Result<Report, String> {
    let field = tiny_field(seed);
    let rays = batch(seed + 100);
    let bg = Vec3::new(0.1, 0.2, 0.3);
    let samples = 8;
    let loss = |f: &NeuralField<f64>| field_grad(f, &rays, samples, bg).unwrap().loss;
    let analytic = field_grad(&field, &rays, samples, bg).unwrap();
    let l0 = analytic.loss;
    let mut report = Report {
        checked: 0,
        kinked: 0,
        worst: 0.0,
    };
    for i in 0..field.param_count() {
        let mut plus = field.clone();
        plus.params_mut()[i] += H;
        let mut minus = field.clone();
        minus.params_mut()[i] -= H;
        let (lp, lm) = (loss(&plus), loss(&minus));
        let numeric = (lp - lm) / (2.0 * H);
        let a = analytic.grad[i];
        let scale = a.abs().max(numeric.abs());
        if scale <= 1e-4 {
            continue;
        }
        let forward = (lp - l0) / H;
        let backward = (l0 - lm) / H;
        if (forward - backward).abs() > 0.02 * scale {
            report.kinked += 1;
            continue;
        }
        report.checked += 1;
        let rel = (a - numeric).abs() / scale;
        if rel >= 1e-2 {
            return Err(format!(
                "seed {seed} param {i} ({}): analytic {a} numeric {numeric} rel {rel}",
                field.block_of(i).unwrap_or_default()
            ));
        }
        report.worst = report.worst.max(rel);
    }
    Ok(report)
}

/// Runs [`check`] on seeds `0..5` and enforces the coverage bounds.
pub fn check_five_seeds() -> Result<Vec<Report>, String> {
    (0..5)
        .map(|seed| {
            let r = check(seed)?;
            if r.checked <= 50 {
                return Err(format!("seed {seed}: only {} coordinates above threshold", r.checked));
            }
            if r.kinked * 50 > r.checked {
                return Err(format!("seed {seed}: {} of {} coordinates straddle a kink", r.kinked, r.checked));
            }
            Ok(r)
        })
        .collect()
}
