use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::encoding::{direction_encoding, direction_encoding_len};
use super::hash_grid::{HashGrid, HashGridConfig};
use super::mlp::{Dense, MlpConfig};
use super::{FieldError, FieldSample, RadianceField};
use crate::math::{Aabb, Vec3};
use crate::scalar::Real;

/// Raw density outputs above this are clamped before the exponential.
pub const DENSITY_CLAMP: f64 = 10.0;

/// Normalized positions this far outside `[0,1]` are clamped rather than
/// rejected (round-off at the box faces).
const DOMAIN_SLACK: f64 = 1e-4;

/// Named contiguous slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub range: Range<usize>,
}

/// Hash-grid encoded density network feeding a view-conditioned colour
/// network. All parameters live in one flat vector: the level tables first,
/// then density layers, then colour layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralField<T> {
    grid: HashGrid,
    mlp: MlpConfig,
    aabb: Aabb<T>,
    density_layers: Vec<Dense>,
    color_layers: Vec<Dense>,
    params: Vec<T>,
}

fn build_layers(
    input: usize,
    width: usize,
    hidden: usize,
    output: usize,
    offset: &mut usize,
) -> Vec<Dense> {
    let mut dims = vec![input];
    dims.extend(std::iter::repeat_n(width, hidden));
    dims.push(output);
    dims.windows(2)
        .map(|w| {
            let layer = Dense {
                inputs: w[0],
                outputs: w[1],
                weight_offset: *offset,
                bias_offset: *offset + w[0] * w[1],
            };
            *offset += layer.param_count();
            layer
        })
        .collect()
}

impl<T: Real> NeuralField<T> {
    /// Freshly initialized field: table features uniform in ±1e-4, MLP weights
    /// He-normal, biases zero.
    pub fn new(
        grid: HashGridConfig,
        mlp: MlpConfig,
        aabb: Aabb<T>,
        seed: u64,
    ) -> Result<Self, FieldError> {
        let mut field = Self::zeroed(grid, mlp, aabb)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid_len = field.grid.config.param_count();
        for p in &mut field.params[..grid_len] {
            *p = T::lit(rng.random_range(-1e-4..1e-4));
        }
        let layers: Vec<Dense> = field
            .density_layers
            .iter()
            .chain(&field.color_layers)
            .copied()
            .collect();
        for layer in layers {
            let normal = Normal::new(0.0, (2.0 / layer.inputs as f64).sqrt()).expect("valid std");
            for p in &mut field.params[layer.weight_offset..layer.bias_offset] {
                *p = T::lit(normal.sample(&mut rng));
            }
        }
        Ok(field)
    }

    pub fn zeroed(grid: HashGridConfig, mlp: MlpConfig, aabb: Aabb<T>) -> Result<Self, FieldError> {
        let grid = HashGrid::new(grid)?;
        mlp.validate()?;
        let mut offset = grid.config.param_count();
        let density_layers = build_layers(
            grid.config.encoded_len(),
            mlp.hidden_width,
            mlp.density_hidden_layers,
            1 + mlp.geo_features,
            &mut offset,
        );
        let color_layers = build_layers(
            mlp.geo_features + direction_encoding_len(mlp.dir_octaves),
            mlp.hidden_width,
            mlp.color_hidden_layers,
            3,
            &mut offset,
        );
        Ok(Self {
            grid,
            mlp,
            aabb,
            density_layers,
            color_layers,
            params: vec![T::zero(); offset],
        })
    }

    pub fn from_params(
        grid: HashGridConfig,
        mlp: MlpConfig,
        aabb: Aabb<T>,
        params: Vec<T>,
    ) -> Result<Self, FieldError> {
        let mut field = Self::zeroed(grid, mlp, aabb)?;
        if params.len() != field.params.len() {
            return Err(FieldError::ParamLength {
                expected: field.params.len(),
                got: params.len(),
            });
        }
        field.params = params;
        Ok(field)
    }

    pub fn grid_config(&self) -> &HashGridConfig {
        &self.grid.config
    }

    pub fn grid(&self) -> &HashGrid {
        &self.grid
    }

    pub fn mlp_config(&self) -> &MlpConfig {
        &self.mlp
    }

    pub fn aabb(&self) -> Aabb<T> {
        self.aabb
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn grid_param_range(&self) -> Range<usize> {
        0..self.grid.config.param_count()
    }

    /// Parameter blocks in storage order.
    pub fn blocks(&self) -> Vec<ParamBlock> {
        let mut blocks = vec![ParamBlock {
            name: "hash_tables".into(),
            range: self.grid_param_range(),
        }];
        for (prefix, layers) in [("density", &self.density_layers), ("color", &self.color_layers)] {
            for (i, l) in layers.iter().enumerate() {
                blocks.push(ParamBlock {
                    name: format!("{prefix}.{i}.weight"),
                    range: l.weight_offset..l.bias_offset,
                });
                blocks.push(ParamBlock {
                    name: format!("{prefix}.{i}.bias"),
                    range: l.bias_offset..l.bias_offset + l.outputs,
                });
            }
        }
        blocks
    }

    /// Name of the block holding parameter `index`.
    pub fn block_of(&self, index: usize) -> Option<String> {
        self.blocks()
            .into_iter()
            .find(|b| b.range.contains(&index))
            .map(|b| b.name)
    }

    pub(crate) fn density_output_layer_mut(&mut self) -> (usize, usize) {
        let l = self.density_layers.last().expect("at least one layer");
        (l.weight_offset, l.bias_offset)
    }

    pub(crate) fn color_output_layer(&self) -> Dense {
        *self.color_layers.last().expect("at least one layer")
    }

    pub fn dir_encoding_len(&self) -> usize {
        direction_encoding_len(self.mlp.dir_octaves)
    }

    pub fn encode_direction(&self, d: Vec3<T>, out: &mut [T]) {
        direction_encoding(d, self.mlp.dir_octaves, out);
    }

    /// Normalizes a world position into `[0,1]³`, clamping round-off at the
    /// faces and rejecting anything further out.
    #[inline]
    pub fn normalize_position(&self, x: Vec3<T>) -> Result<Vec3<T>, FieldError> {
        let n = self.aabb.normalize(x);
        let slack = T::lit(DOMAIN_SLACK);
        let ok = (0..3).all(|a| n[a] >= -slack && n[a] <= T::one() + slack);
        if !ok {
            return Err(FieldError::OutOfDomain([
                x.x.to_f64_lossless(),
                x.y.to_f64_lossless(),
                x.z.to_f64_lossless(),
            ]));
        }
        Ok(n.max(Vec3::zero()).min(Vec3::splat(T::one())))
    }

    pub fn new_tape(&self) -> SampleTape<T> {
        let w = self.mlp.hidden_width;
        SampleTape {
            offsets: vec![0; self.grid.config.levels * 8],
            weights: vec![T::zero(); self.grid.config.levels * 8],
            enc: vec![T::zero(); self.grid.config.encoded_len()],
            density_hidden: vec![vec![T::zero(); w]; self.mlp.density_hidden_layers],
            density_out: vec![T::zero(); 1 + self.mlp.geo_features],
            color_in: vec![T::zero(); self.mlp.geo_features + self.dir_encoding_len()],
            color_hidden: vec![vec![T::zero(); w]; self.mlp.color_hidden_layers],
            sample: FieldSample::empty(),
        }
    }

    pub fn new_backward_scratch(&self) -> BackwardScratch<T> {
        let w = self.mlp.hidden_width;
        let widest = w
            .max(self.grid.config.encoded_len())
            .max(self.mlp.geo_features + self.dir_encoding_len())
            .max(1 + self.mlp.geo_features);
        BackwardScratch {
            ping: vec![T::zero(); widest],
            pong: vec![T::zero(); widest],
            d_color_in: vec![T::zero(); self.mlp.geo_features + self.dir_encoding_len()],
            d_density_out: vec![T::zero(); 1 + self.mlp.geo_features],
            d_enc: vec![T::zero(); self.grid.config.encoded_len()],
        }
    }

    /// Forward pass for a normalized position, recording what the backward
    /// pass needs. `dir_enc` is the encoded view direction.
    pub fn forward(&self, xn: Vec3<T>, dir_enc: &[T], tape: &mut SampleTape<T>) -> FieldSample<T> {
        let f = self.grid.config.features_per_level;
        self.grid.corners(xn, &mut tape.offsets, &mut tape.weights);
        for v in tape.enc.iter_mut() {
            *v = T::zero();
        }
        let p = &self.params;
        for l in 0..self.grid.config.levels {
            for c in 0..8 {
                let o = tape.offsets[l * 8 + c] as usize;
                let w = tape.weights[l * 8 + c];
                for k in 0..f {
                    tape.enc[l * f + k] += w * p[o + k];
                }
            }
        }

        run_chain(
            p,
            &self.density_layers,
            &tape.enc,
            &mut tape.density_hidden,
            &mut tape.density_out,
        );
        let raw = tape.density_out[0];
        let sigma = raw.min(T::lit(DENSITY_CLAMP)).exp();

        let geo = self.mlp.geo_features;
        tape.color_in[..geo].copy_from_slice(&tape.density_out[1..1 + geo]);
        tape.color_in[geo..].copy_from_slice(dir_enc);
        let mut logits = [T::zero(); 3];
        run_chain(
            p,
            &self.color_layers,
            &tape.color_in,
            &mut tape.color_hidden,
            &mut logits,
        );
        let rgb = Vec3::new(sigmoid(logits[0]), sigmoid(logits[1]), sigmoid(logits[2]));
        tape.sample = FieldSample { sigma, rgb };
        tape.sample
    }

    /// Accumulates `∂L/∂params` into `grad` given `∂L/∂σ` and `∂L/∂rgb` for
    /// the sample recorded in `tape`.
    pub fn backward(
        &self,
        tape: &SampleTape<T>,
        d_sigma: T,
        d_rgb: Vec3<T>,
        scratch: &mut BackwardScratch<T>,
        grad: &mut [T],
    ) {
        let p = &self.params;
        let rgb = tape.sample.rgb;
        let mut d_logits = [T::zero(); 3];
        for a in 0..3 {
            d_logits[a] = d_rgb[a] * rgb[a] * (T::one() - rgb[a]);
        }
        let BackwardScratch {
            ping,
            pong,
            d_color_in,
            d_density_out,
            d_enc,
        } = scratch;
        backprop_chain(
            p,
            &self.color_layers,
            &tape.color_in,
            &tape.color_hidden,
            &d_logits,
            grad,
            ping,
            pong,
            d_color_in,
        );
        let geo = self.mlp.geo_features;
        // exp'(raw) = σ below the clamp, zero above it
        d_density_out[0] = if tape.density_out[0] < T::lit(DENSITY_CLAMP) {
            d_sigma * tape.sample.sigma
        } else {
            T::zero()
        };
        d_density_out[1..1 + geo].copy_from_slice(&d_color_in[..geo]);
        backprop_chain(
            p,
            &self.density_layers,
            &tape.enc,
            &tape.density_hidden,
            d_density_out,
            grad,
            ping,
            pong,
            d_enc,
        );
        let f = self.grid.config.features_per_level;
        for l in 0..self.grid.config.levels {
            for c in 0..8 {
                let o = tape.offsets[l * 8 + c] as usize;
                let w = tape.weights[l * 8 + c];
                for k in 0..f {
                    grad[o + k] += w * d_enc[l * f + k];
                }
            }
        }
    }

    /// Sets the field to a view-independent constant: density saturated at
    /// the clamp and colour `sigmoid(logit)` per channel.
    pub fn set_constant_output(&mut self, density_raw: T, color_logits: [T; 3]) {
        let (w_off, b_off) = self.density_output_layer_mut();
        for v in &mut self.params[w_off..b_off] {
            *v = T::zero();
        }
        let outputs = 1 + self.mlp.geo_features;
        for v in &mut self.params[b_off..b_off + outputs] {
            *v = T::zero();
        }
        self.params[b_off] = density_raw;
        let c = self.color_output_layer();
        for v in &mut self.params[c.weight_offset..c.bias_offset] {
            *v = T::zero();
        }
        self.params[c.bias_offset..c.bias_offset + 3].copy_from_slice(&color_logits);
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn cast<U: Real>(&self) -> NeuralField<U> {
        NeuralField {
            grid: self.grid.clone(),
            mlp: self.mlp.clone(),
            aabb: Aabb {
                min: self.aabb.min.cast(),
                max: self.aabb.max.cast(),
            },
            density_layers: self.density_layers.clone(),
            color_layers: self.color_layers.clone(),
            params: self.params.iter().map(|p| U::lit(p.to_f64_lossless())).collect(),
        }
    }
}

#[inline(always)]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Hidden layers with ReLU, final layer linear.
#[inline]
fn run_chain<T: Real>(
    params: &[T],
    layers: &[Dense],
    input: &[T],
    hidden: &mut [Vec<T>],
    out: &mut [T],
) {
    let last = layers.len() - 1;
    for (i, layer) in layers.iter().enumerate() {
        if i == last {
            let src: &[T] = if i == 0 { input } else { &hidden[i - 1] };
            layer.forward(params, src, out);
        } else {
            let (before, after) = hidden.split_at_mut(i);
            let src: &[T] = if i == 0 { input } else { &before[i - 1] };
            let dst = &mut after[0];
            layer.forward(params, src, dst);
            for v in dst.iter_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
    }
}

/// Backward through a chain built by [`run_chain`], writing the gradient
/// with respect to `input` into `d_input`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn backprop_chain<T: Real>(
    params: &[T],
    layers: &[Dense],
    input: &[T],
    hidden: &[Vec<T>],
    d_out: &[T],
    grad: &mut [T],
    ping: &mut Vec<T>,
    pong: &mut Vec<T>,
    d_input: &mut [T],
) {
    ping[..d_out.len()].copy_from_slice(d_out);
    let mut cur = d_out.len();
    for i in (0..layers.len()).rev() {
        let layer = &layers[i];
        if i == 0 {
            layer.backward(params, input, &ping[..cur], grad, Some(&mut d_input[..layer.inputs]));
        } else {
            let prev = &hidden[i - 1];
            layer.backward(params, prev, &ping[..cur], grad, Some(&mut pong[..layer.inputs]));
            for (d, h) in pong.iter_mut().zip(prev) {
                if *h <= T::zero() {
                    *d = T::zero();
                }
            }
            std::mem::swap(ping, pong);
            cur = layer.inputs;
        }
    }
}

/// Forward-pass record for one sample.
#[derive(Debug, Clone)]
pub struct SampleTape<T> {
    offsets: Vec<u32>,
    weights: Vec<T>,
    enc: Vec<T>,
    density_hidden: Vec<Vec<T>>,
    density_out: Vec<T>,
    color_in: Vec<T>,
    color_hidden: Vec<Vec<T>>,
    sample: FieldSample<T>,
}

impl<T: Real> SampleTape<T> {
    pub fn sample(&self) -> FieldSample<T> {
        self.sample
    }

    pub fn encoding(&self) -> &[T] {
        &self.enc
    }
}

#[derive(Debug, Clone)]
pub struct BackwardScratch<T> {
    ping: Vec<T>,
    pong: Vec<T>,
    d_color_in: Vec<T>,
    d_density_out: Vec<T>,
    d_enc: Vec<T>,
}

impl<T: Real> RadianceField<T> for NeuralField<T> {
    fn eval(&self, x: Vec3<T>, d: Vec3<T>) -> Result<FieldSample<T>, FieldError> {
        let xn = self.normalize_position(x)?;
        let mut dir = vec![T::zero(); self.dir_encoding_len()];
        self.encode_direction(d, &mut dir);
        let mut tape = self.new_tape();
        Ok(self.forward(xn, &dir, &mut tape))
    }

    fn bounds(&self) -> Option<Aabb<T>> {
        Some(self.aabb)
    }

    fn eval_many(
        &self,
        points: &[Vec3<T>],
        d: Vec3<T>,
        out: &mut Vec<FieldSample<T>>,
    ) -> Result<(), FieldError> {
        out.clear();
        let mut dir = vec![T::zero(); self.dir_encoding_len()];
        self.encode_direction(d, &mut dir);
        let mut tape = self.new_tape();
        for &p in points {
            let xn = self.normalize_position(p)?;
            out.push(self.forward(xn, &dir, &mut tape));
        }
        Ok(())
    }
}
