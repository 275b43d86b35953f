//! Grayscale image storage, subpixel sampling, and pyramid construction.

#[cfg(not(feature = "std"))]
use num_traits::Float;

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::FlowError;

/// Row-major grayscale image with intensities in [0, 1]. Pixel (0, 0) is the
/// center of the top-left pixel; x grows right, y grows down.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, FlowError> {
        if width == 0 || height == 0 {
            return Err(FlowError::InvalidImage("image dimensions must be nonzero"));
        }
        if pixels.len() != width * height {
            return Err(FlowError::InvalidImage(
                "pixel array length does not match dimensions",
            ));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(FlowError::InvalidImage("intensities must lie in [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x as f64, y as f64).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// True when `(x, y)` can be sampled bilinearly.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    /// Bilinear intensity at a subpixel location; the caller must keep the
    /// point inside `[0, width-1] x [0, height-1]`.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        debug_assert!(self.contains(x, y), "sample at ({x}, {y}) out of bounds");
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = x - x0 as f64;
        let ty = y - y0 as f64;
        let p00 = self.pixels[y0 * self.width + x0];
        let p10 = self.pixels[y0 * self.width + x1];
        let p01 = self.pixels[y1 * self.width + x0];
        let p11 = self.pixels[y1 * self.width + x1];
        p00 * (1.0 - tx) * (1.0 - ty)
            + p10 * tx * (1.0 - ty)
            + p01 * (1.0 - tx) * ty
            + p11 * tx * ty
    }

    /// Half-resolution image: 5-tap binomial smoothing ([1 4 6 4 1] / 16,
    /// separable, borders mirrored) followed by factor-2 subsampling.
    pub fn downsample(&self) -> GrayImage {
        const KERNEL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        fn mirror(i: isize, n: usize) -> usize {
            let n = n as isize;
            let mut i = i;
            if i < 0 {
                i = -i;
            }
            if i >= n {
                i = 2 * n - 2 - i;
            }
            i.clamp(0, n - 1) as usize
        }
        let (w, h) = (self.width, self.height);
        let mut rows = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, weight) in KERNEL.iter().enumerate() {
                    let xx = mirror(x as isize + k as isize - 2, w);
                    acc += weight * self.pixels[y * w + xx];
                }
                rows.push(acc);
            }
        }
        let dw = w.div_ceil(2);
        let dh = h.div_ceil(2);
        let mut pixels = Vec::with_capacity(dw * dh);
        for y in 0..dh {
            for x in 0..dw {
                let mut acc = 0.0;
                for (k, weight) in KERNEL.iter().enumerate() {
                    let yy = mirror(2 * y as isize + k as isize - 2, h);
                    acc += weight * rows[yy * w + 2 * x];
                }
                pixels.push(acc.clamp(0.0, 1.0));
            }
        }
        GrayImage {
            width: dw,
            height: dh,
            pixels,
        }
    }

    /// Image translated by `(dx, dy)` pixels, resampled bilinearly with
    /// border clamping. A feature at `p` in the source appears at `p + (dx, dy)`.
    pub fn translate_bilinear(&self, dx: f64, dy: f64) -> GrayImage {
        let (w, h) = (self.width as f64 - 1.0, self.height as f64 - 1.0);
        GrayImage::from_fn(self.width, self.height, |x, y| {
            self.sample((x - dx).clamp(0.0, w), (y - dy).clamp(0.0, h))
        })
    }
}

/// Image pyramid over a borrowed base image; level 0 is the base, each
/// further level a binomial-smoothed 2x downsample of the previous.
pub(super) struct Pyramid<'a> {
    base: &'a GrayImage,
    coarser: Vec<GrayImage>,
}

impl<'a> Pyramid<'a> {
    pub fn build(base: &'a GrayImage, levels: usize) -> Self {
        let mut coarser = Vec::with_capacity(levels.saturating_sub(1));
        for l in 1..levels {
            let prev = if l == 1 { base } else { &coarser[l - 2] };
            coarser.push(prev.downsample());
        }
        Self { base, coarser }
    }

    pub fn level(&self, l: usize) -> &GrayImage {
        if l == 0 {
            self.base
        } else {
            &self.coarser[l - 1]
        }
    }
}

/// Band-limited random texture: a sum of random cosine waves with wavelengths
/// of 8 px and longer, normalized into [0.05, 0.95]. Smooth enough for
/// subpixel tracker evaluation, deterministic per seed.
pub fn synthesize_texture(width: usize, height: usize, seed: u64) -> GrayImage {
    synthesize_texture_band(width, height, seed, 8.0, 64.0)
}

/// [`synthesize_texture`] with an explicit wavelength band.
pub fn synthesize_texture_band(
    width: usize,
    height: usize,
    seed: u64,
    min_wavelength: f64,
    max_wavelength: f64,
) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_waves = 40;
    let mut waves = Vec::with_capacity(n_waves);
    for _ in 0..n_waves {
        let wavelength = rng.random_range(min_wavelength..max_wavelength);
        let angle = rng.random_range(0.0..core::f64::consts::TAU);
        let phase = rng.random_range(0.0..core::f64::consts::TAU);
        let amplitude = rng.random_range(0.3..1.0);
        let k = core::f64::consts::TAU / wavelength;
        waves.push((k * angle.cos(), k * angle.sin(), phase, amplitude));
    }
    let mut raw = Vec::with_capacity(width * height);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for y in 0..height {
        for x in 0..width {
            let mut v = 0.0;
            for &(kx, ky, phase, amplitude) in &waves {
                v += amplitude * (kx * x as f64 + ky * y as f64 + phase).cos();
            }
            lo = lo.min(v);
            hi = hi.max(v);
            raw.push(v);
        }
    }
    let span = (hi - lo).max(1e-12);
    let pixels = raw
        .into_iter()
        .map(|v| 0.05 + 0.9 * (v - lo) / span)
        .collect();
    GrayImage {
        width,
        height,
        pixels,
    }
}
