use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::RenderError;

/// Linear RGB image, rows top to bottom, channels interleaved, values in
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: u32, height: u32, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<f32>) -> Result<Self, RenderError> {
        if data.len() != width as usize * height as usize * 3 {
            return Err(RenderError::Contract(format!(
                "{} values do not fill a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [f32; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [f32; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Mean absolute per-channel difference.
    pub fn mean_abs_diff(&self, other: &Image) -> Result<f64, RenderError> {
        if !self.same_shape(other) {
            return Err(RenderError::Contract("image dimensions differ".into()));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_rgb8(width: u32, height: u32, bytes: &[u8]) -> Result<Self, RenderError> {
        Self::from_data(
            width,
            height,
            bytes.iter().map(|b| *b as f32 / 255.0).collect(),
        )
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, RenderError> {
        encode_png_rgb8(self.width, self.height, &self.to_rgb8())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, RenderError> {
        let (w, h, rgb) = decode_png_rgb8(bytes)?;
        Self::from_rgb8(w, h, &rgb)
    }

    pub fn write_png(&self, path: &Path) -> Result<(), RenderError> {
        fs::write(path, self.encode_png()?).map_err(|e| RenderError::io(path, e))
    }

    pub fn read_png(path: &Path) -> Result<Self, RenderError> {
        let bytes = fs::read(path).map_err(|e| RenderError::io(path, e))?;
        Self::decode_png(&bytes)
    }

    /// Raw export: an ASCII `W H` line followed by little-endian `f32` RGB.
    pub fn write_raw(&self, path: &Path) -> Result<(), RenderError> {
        let file = fs::File::create(path).map_err(|e| RenderError::io(path, e))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<fs::File>| -> std::io::Result<()> {
            writeln!(out, "{} {}", self.width, self.height)?;
            for v in &self.data {
                out.write_all(&v.to_le_bytes())?;
            }
            out.flush()
        };
        write(&mut out).map_err(|e| RenderError::io(path, e))
    }

    pub fn read_raw(path: &Path) -> Result<Self, RenderError> {
        let bytes = fs::read(path).map_err(|e| RenderError::io(path, e))?;
        let nl = bytes
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| RenderError::Format("raw image header missing".into()))?;
        let header = std::str::from_utf8(&bytes[..nl])
            .map_err(|_| RenderError::Format("raw image header is not text".into()))?;
        let dims: Vec<u32> = header
            .split_whitespace()
            .map(|t| t.parse::<u32>())
            .collect::<Result<_, _>>()
            .map_err(|_| RenderError::Format(format!("bad raw image header {header:?}")))?;
        let [w, h] = dims[..] else {
            return Err(RenderError::Format(format!("bad raw image header {header:?}")));
        };
        let body = &bytes[nl + 1..];
        if body.len() != w as usize * h as usize * 12 {
            return Err(RenderError::Format("raw image payload length mismatch".into()));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::from_data(w, h, data)
    }

    /// Writes PNG unless the extension is `.raw`.
    pub fn save(&self, path: &Path) -> Result<(), RenderError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("raw") => self.write_raw(path),
            _ => self.write_png(path),
        }
    }
}

pub(crate) fn encode_png_rgb8(width: u32, height: u32, rgb: &[u8]) -> Result<Vec<u8>, RenderError> {
    encode_png(width, height, rgb, png::ColorType::Rgb)
}

pub(crate) fn encode_png(
    width: u32,
    height: u32,
    pixels: &[u8],
    color: png::ColorType,
) -> Result<Vec<u8>, RenderError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Fast);
        let mut writer = enc
            .write_header()
            .map_err(|e| RenderError::Format(e.to_string()))?;
        writer
            .write_image_data(pixels)
            .map_err(|e| RenderError::Format(e.to_string()))?;
    }
    Ok(out)
}

/// Decodes an 8-bit PNG into `(width, height, channels, bytes)`.
pub(crate) fn decode_png(bytes: &[u8]) -> Result<(u32, u32, usize, Vec<u8>), RenderError> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| RenderError::Format(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| RenderError::Format(e.to_string()))?;
    buf.truncate(info.buffer_size());
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(RenderError::Format("unexpanded indexed PNG".into()))
        }
    };
    Ok((info.width, info.height, channels, buf))
}

pub(crate) fn decode_png_rgb8(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>), RenderError> {
    let (w, h, channels, buf) = decode_png(bytes)?;
    let rgb = match channels {
        3 => buf,
        4 => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        1 => buf.iter().flat_map(|v| [*v, *v, *v]).collect(),
        _ => buf.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
    };
    Ok((w, h, rgb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpscaleFilter {
    #[default]
    Bilinear,
    Lanczos3,
}

/// Output-to-source coordinate map with edge alignment: the first and last
/// output samples land exactly on the first and last source samples.
#[inline]
fn source_coord(dst: u32, dst_len: u32, src_len: u32) -> f64 {
    if dst_len <= 1 || src_len <= 1 {
        return 0.0;
    }
    dst as f64 * (src_len - 1) as f64 / (dst_len - 1) as f64
}

pub fn upscale(image: &Image, factor: u32) -> Result<Image, RenderError> {
    upscale_with(image, factor, UpscaleFilter::Bilinear)
}

/// Resamples to `factor×` the size in each dimension. `factor` must be 1, 2
/// or 4; 1 returns an exact copy.
pub fn upscale_with(image: &Image, factor: u32, filter: UpscaleFilter) -> Result<Image, RenderError> {
    if ![1, 2, 4].contains(&factor) {
        return Err(RenderError::InvalidSettings(format!(
            "upscale factor {factor} not in {{1, 2, 4}}"
        )));
    }
    if factor == 1 {
        return Ok(image.clone());
    }
    let (w, h) = (image.width * factor, image.height * factor);
    Ok(match filter {
        UpscaleFilter::Bilinear => bilinear(image, w, h),
        UpscaleFilter::Lanczos3 => lanczos3(image, w, h),
    })
}

fn bilinear(src: &Image, w: u32, h: u32) -> Image {
    let mut out = Image::new(w, h);
    let xs: Vec<(u32, u32, f32)> = (0..w)
        .map(|x| {
            let s = source_coord(x, w, src.width);
            let x0 = (s.floor() as u32).min(src.width - 1);
            let x1 = (x0 + 1).min(src.width - 1);
            (x0, x1, (s - x0 as f64) as f32)
        })
        .collect();
    for y in 0..h {
        let s = source_coord(y, h, src.height);
        let y0 = (s.floor() as u32).min(src.height - 1);
        let y1 = (y0 + 1).min(src.height - 1);
        let fy = (s - y0 as f64) as f32;
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            let a = src.get(x0, y0);
            let b = src.get(x1, y0);
            let c = src.get(x0, y1);
            let d = src.get(x1, y1);
            let mut px = [0.0; 3];
            for k in 0..3 {
                let top = a[k] + (b[k] - a[k]) * fx;
                let bottom = c[k] + (d[k] - c[k]) * fx;
                px[k] = top + (bottom - top) * fy;
            }
            out.set(x as u32, y, px);
        }
    }
    out
}

fn lanczos_kernel(x: f64) -> f64 {
    const A: f64 = 3.0;
    if x == 0.0 {
        1.0
    } else if x.abs() >= A {
        0.0
    } else {
        let px = std::f64::consts::PI * x;
        A * px.sin() * (px / A).sin() / (px * px)
    }
}

/// Normalized tap list `(source index, weight)` for each output position.
fn lanczos_taps(dst_len: u32, src_len: u32) -> Vec<Vec<(u32, f32)>> {
    (0..dst_len)
        .map(|d| {
            let s = source_coord(d, dst_len, src_len);
            let base = s.floor() as i64;
            let mut taps: Vec<(u32, f64)> = Vec::with_capacity(6);
            for i in base - 2..=base + 3 {
                let w = lanczos_kernel(s - i as f64);
                if w != 0.0 {
                    let idx = i.clamp(0, src_len as i64 - 1) as u32;
                    taps.push((idx, w));
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.into_iter()
                .map(|(i, w)| (i, (w / total) as f32))
                .collect()
        })
        .collect()
}

fn lanczos3(src: &Image, w: u32, h: u32) -> Image {
    let xt = lanczos_taps(w, src.width);
    let yt = lanczos_taps(h, src.height);
    // horizontal pass then vertical pass
    let mut tmp = Image::new(w, src.height);
    for y in 0..src.height {
        for (x, taps) in xt.iter().enumerate() {
            let mut px = [0.0f32; 3];
            for &(sx, wt) in taps {
                let p = src.get(sx, y);
                for k in 0..3 {
                    px[k] += p[k] * wt;
                }
            }
            tmp.set(x as u32, y, px);
        }
    }
    let mut out = Image::new(w, h);
    for (y, taps) in yt.iter().enumerate() {
        for x in 0..w {
            let mut px = [0.0f32; 3];
            for &(sy, wt) in taps {
                let p = tmp.get(x, sy);
                for k in 0..3 {
                    px[k] += p[k] * wt;
                }
            }
            out.set(x, y as u32, px.map(|v| v.clamp(0.0, 1.0)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_one_is_identity() {
        let img = Image::from_data(2, 1, vec![0.1, 0.2, 0.3, 0.9, 0.8, 0.7]).unwrap();
        let out = upscale(&img, 1).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Image::filled(5, 3, [0.25, 0.5, 0.75]);
        for filter in [UpscaleFilter::Bilinear, UpscaleFilter::Lanczos3] {
            let out = upscale_with(&img, 4, filter).unwrap();
            assert_eq!((out.width, out.height), (20, 12));
            for px in out.data.chunks_exact(3) {
                assert!((px[0] - 0.25).abs() < 1e-6);
                assert!((px[1] - 0.5).abs() < 1e-6);
                assert!((px[2] - 0.75).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn edge_aligned_bilinear_ramp() {
        let img = Image::from_data(2, 1, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let out = upscale(&img, 2).unwrap();
        let row: Vec<f32> = (0..4).map(|x| out.get(x, 0)[0]).collect();
        let expect = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for (a, b) in row.iter().zip(expect) {
            assert!((a - b).abs() < 1e-6, "{row:?}");
        }
    }

    #[test]
    fn bad_factor_is_rejected() {
        assert!(upscale(&Image::new(2, 2), 3).is_err());
    }

    #[test]
    fn raw_and_png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_data(2, 2, vec![0.0, 0.5, 1.0, 0.2, 0.4, 0.6, 1.0, 1.0, 1.0, 0.0, 0.0, 0.1])
            .unwrap();
        let raw = dir.path().join("a.raw");
        img.save(&raw).unwrap();
        assert_eq!(Image::read_raw(&raw).unwrap(), img);
        let header = std::fs::read(&raw).unwrap();
        assert!(header.starts_with(b"2 2\n"));
        let png = dir.path().join("a.png");
        img.save(&png).unwrap();
        let back = Image::read_png(&png).unwrap();
        assert!(back.mean_abs_diff(&img).unwrap() <= 0.5 / 255.0 + 1e-6);
    }
}
