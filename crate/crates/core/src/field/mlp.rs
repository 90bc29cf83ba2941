use serde::{Deserialize, Serialize};

use super::FieldError;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_width: usize,
    pub density_hidden_layers: usize,
    pub color_hidden_layers: usize,
    /// Latent features passed from the density net to the colour net.
    pub geo_features: usize,
    /// Octaves of the direction frequency encoding.
    pub dir_octaves: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_width: 32,
            density_hidden_layers: 2,
            color_hidden_layers: 2,
            geo_features: 15,
            dir_octaves: 4,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), FieldError> {
        if self.hidden_width == 0 || self.density_hidden_layers == 0 || self.color_hidden_layers == 0 {
            return Err(FieldError::InvalidConfig(
                "MLP widths and layer counts must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Fully connected layer living inside a flat parameter vector. Weights are
/// row-major `outputs × inputs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl Dense {
    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }

    #[inline]
    pub fn forward<T: Real>(&self, params: &[T], input: &[T], out: &mut [T]) {
        let w = &params[self.weight_offset..self.weight_offset + self.inputs * self.outputs];
        let b = &params[self.bias_offset..self.bias_offset + self.outputs];
        for (o, slot) in out.iter_mut().enumerate().take(self.outputs) {
            let row = &w[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = b[o];
            for (wi, xi) in row.iter().zip(input) {
                acc += *wi * *xi;
            }
            *slot = acc;
        }
    }

    /// Accumulates parameter gradients and, when requested, writes the
    /// gradient with respect to the input.
    #[inline]
    pub fn backward<T: Real>(
        &self,
        params: &[T],
        input: &[T],
        d_out: &[T],
        grad: &mut [T],
        d_in: Option<&mut [T]>,
    ) {
        let n_in = self.inputs;
        {
            let gw = &mut grad[self.weight_offset..self.weight_offset + n_in * self.outputs];
            for (o, &g) in d_out.iter().enumerate().take(self.outputs) {
                if g == T::zero() {
                    continue;
                }
                let row = &mut gw[o * n_in..(o + 1) * n_in];
                for (gi, xi) in row.iter_mut().zip(input) {
                    *gi += g * *xi;
                }
            }
        }
        {
            let gb = &mut grad[self.bias_offset..self.bias_offset + self.outputs];
            for (gi, &g) in gb.iter_mut().zip(d_out) {
                *gi += g;
            }
        }
        if let Some(d_in) = d_in {
            let w = &params[self.weight_offset..self.weight_offset + n_in * self.outputs];
            for v in d_in.iter_mut().take(n_in) {
                *v = T::zero();
            }
            for (o, &g) in d_out.iter().enumerate().take(self.outputs) {
                if g == T::zero() {
                    continue;
                }
                let row = &w[o * n_in..(o + 1) * n_in];
                for (di, wi) in d_in.iter_mut().zip(row) {
                    *di += g * *wi;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_forward_backward_small() {
        // y = W x + b with W = [[1,2],[3,4]], b = [0.5,-1]
        let layer = Dense {
            inputs: 2,
            outputs: 2,
            weight_offset: 0,
            bias_offset: 4,
        };
        let params = [1.0, 2.0, 3.0, 4.0, 0.5, -1.0];
        let x = [1.0, -1.0];
        let mut y = [0.0; 2];
        layer.forward(&params, &x, &mut y);
        assert_eq!(y, [-0.5, -2.0]);
        let mut grad = [0.0; 6];
        let mut dx = [0.0; 2];
        layer.backward(&params, &x, &[1.0, 2.0], &mut grad, Some(&mut dx));
        assert_eq!(grad, [1.0, -1.0, 2.0, -2.0, 1.0, 2.0]);
        assert_eq!(dx, [7.0, 10.0]);
    }
}
