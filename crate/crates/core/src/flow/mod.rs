//! Feature detection and tracking: Shi-Tomasi corner scoring and pyramidal
//! translational Lucas-Kanade optical flow, producing the per-feature pixel
//! pairs consumed by the estimator.

#[cfg(not(feature = "std"))]
use num_traits::Float;

mod detect;
mod image;
mod track;

pub use detect::{detect_corners, seed_regular_grid, shi_tomasi_score, structure_tensor};
pub use image::{synthesize_texture, synthesize_texture_band, GrayImage};
pub use track::{chain_tracks, lk_step, track_pyramidal, FlowFeature, TrackConfig, TrackStatus};

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("invalid image: {0}")]
    InvalidImage(&'static str),
    #[error("window of radius {radius} does not fit at ({x}, {y})")]
    WindowOutOfBounds { x: f64, y: f64, radius: usize },
    #[error("feature at ({x}, {y}) is untrackable: structure tensor is singular")]
    UntrackableFeature { x: f64, y: f64 },
    #[error("feature left the image near ({x}, {y})")]
    LostFeature { x: f64, y: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(&'static str),
    #[error("images have different dimensions")]
    ImageSizeMismatch,
}

/// Weighting window for gradient sums; weights are normalized to sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWindow {
    radius: usize,
    kind: WindowKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowKind {
    Gaussian { sigma: f64 },
    Binary,
}

impl KernelWindow {
    pub fn gaussian(radius: usize, sigma: f64) -> Result<Self, FlowError> {
        if radius < 1 {
            return Err(FlowError::InvalidConfiguration("window radius must be >= 1"));
        }
        if !(sigma > 0.0) {
            return Err(FlowError::InvalidConfiguration("sigma must be > 0"));
        }
        Ok(Self {
            radius,
            kind: WindowKind::Gaussian { sigma },
        })
    }

    pub fn binary(radius: usize) -> Result<Self, FlowError> {
        if radius < 1 {
            return Err(FlowError::InvalidConfiguration("window radius must be >= 1"));
        }
        Ok(Self {
            radius,
            kind: WindowKind::Binary,
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn kind(&self) -> WindowKind {
        self.kind
    }

    /// Normalized weights in row-major order over the (2r+1)^2 window.
    pub fn weights(&self) -> Vec<f64> {
        let r = self.radius as isize;
        let mut w = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
        for dy in -r..=r {
            for dx in -r..=r {
                let value = match self.kind {
                    WindowKind::Binary => 1.0,
                    WindowKind::Gaussian { sigma } => {
                        let d2 = (dx * dx + dy * dy) as f64;
                        (-d2 / (2.0 * sigma * sigma)).exp()
                    }
                };
                w.push(value);
            }
        }
        let sum: f64 = w.iter().sum();
        for value in &mut w {
            *value /= sum;
        }
        w
    }
}

impl Default for KernelWindow {
    /// 15x15 Gaussian window, sigma 3.5 px, sized for high-resolution imagery.
    fn default() -> Self {
        Self::gaussian(7, 3.5).expect("default window parameters are valid")
    }
}
