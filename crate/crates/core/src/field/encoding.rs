use crate::math::Vec3;
use crate::scalar::Real;

pub fn direction_encoding_len(octaves: usize) -> usize {
    3 + 6 * octaves
}

/// Frequency encoding of a unit direction: the raw components followed by
/// `sin(2^k π d)`, `cos(2^k π d)` for `k < octaves`.
pub fn direction_encoding<T: Real>(d: Vec3<T>, octaves: usize, out: &mut [T]) {
    debug_assert_eq!(out.len(), direction_encoding_len(octaves));
    out[..3].copy_from_slice(&d.to_array());
    let pi = T::lit(std::f64::consts::PI);
    let mut freq = pi;
    for k in 0..octaves {
        for a in 0..3 {
            let (s, c) = (d[a] * freq).sin_cos();
            out[3 + k * 6 + a] = s;
            out[3 + k * 6 + 3 + a] = c;
        }
        freq = freq * T::lit(2.0);
    }
}
