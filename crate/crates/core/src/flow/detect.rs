//! Corner scoring and feature seeding.

use alloc::vec::Vec;
use nalgebra::{Matrix2, Vector2};

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::{FlowError, GrayImage, KernelWindow};

/// True when every gradient sample of the window fits inside the image.
/// Gradients are central differences, so one extra pixel is needed beyond
/// the window on each side.
pub(super) fn window_fits(img: &GrayImage, center: Vector2<f64>, radius: usize) -> bool {
    let pad = (radius + 1) as f64;
    center.x - pad >= 0.0
        && center.y - pad >= 0.0
        && center.x + pad <= (img.width() - 1) as f64
        && center.y + pad <= (img.height() - 1) as f64
}

/// Weighted sum of squared-gradient outer products over the window centered
/// at `center`: the autocorrelation matrix whose eigenvalues grade corners.
/// Gradients are central differences of bilinearly sampled intensities.
pub fn structure_tensor(
    img: &GrayImage,
    center: Vector2<f64>,
    window: &KernelWindow,
) -> Result<Matrix2<f64>, FlowError> {
    let r = window.radius();
    if !window_fits(img, center, r) {
        return Err(FlowError::WindowOutOfBounds {
            x: center.x,
            y: center.y,
            radius: r,
        });
    }
    let weights = window.weights();
    let mut m = Matrix2::zeros();
    let mut k = 0;
    for dy in -(r as isize)..=r as isize {
        for dx in -(r as isize)..=r as isize {
            let x = center.x + dx as f64;
            let y = center.y + dy as f64;
            let ix = (img.sample(x + 1.0, y) - img.sample(x - 1.0, y)) / 2.0;
            let iy = (img.sample(x, y + 1.0) - img.sample(x, y - 1.0)) / 2.0;
            let w = weights[k];
            m[(0, 0)] += w * ix * ix;
            m[(0, 1)] += w * ix * iy;
            m[(1, 1)] += w * iy * iy;
            k += 1;
        }
    }
    m[(1, 0)] = m[(0, 1)];
    Ok(m)
}

/// Minimum eigenvalue of a symmetric PSD 2x2 matrix, clamped at zero against
/// rounding: `(a + c) / 2 - sqrt(((a - c) / 2)^2 + b^2)`.
pub fn shi_tomasi_score(m: &Matrix2<f64>) -> f64 {
    let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    let mean = (a + c) / 2.0;
    let spread = ((a - c) / 2.0).hypot(b);
    (mean - spread).max(0.0)
}

/// Corner detection: minimum-eigenvalue scores everywhere the window fits,
/// candidates above `min_score` kept in descending score order with
/// non-maximum suppression at `min_spacing`, truncated to `max_count`.
pub fn detect_corners(
    img: &GrayImage,
    window: &KernelWindow,
    max_count: usize,
    min_score: f64,
    min_spacing: f64,
) -> Vec<Vector2<f64>> {
    let r = window.radius();
    let pad = r + 1;
    if img.width() < 2 * pad + 1 || img.height() < 2 * pad + 1 {
        return Vec::new();
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for y in pad..img.height() - pad {
        for x in pad..img.width() - pad {
            let center = Vector2::new(x as f64, y as f64);
            let m = structure_tensor(img, center, window).expect("window fits by construction");
            let score = shi_tomasi_score(&m);
            if score > min_score {
                candidates.push((score, x, y));
            }
        }
    }
    // Descending by score; ties broken by position for determinism.
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.2.cmp(&b.2))
            .then(a.1.cmp(&b.1))
    });
    let spacing2 = min_spacing * min_spacing;
    let mut kept: Vec<Vector2<f64>> = Vec::new();
    for (_, x, y) in candidates {
        let p = Vector2::new(x as f64, y as f64);
        if kept.iter().all(|q| (p - q).norm_squared() >= spacing2) {
            kept.push(p);
            if kept.len() >= max_count {
                break;
            }
        }
    }
    kept
}

/// N x N uniformly spaced seed points inside `[margin, dim - 1 - margin]` on
/// each axis of a `width x height` pixel grid.
pub fn seed_regular_grid(
    width: usize,
    height: usize,
    n_per_side: usize,
    margin: f64,
) -> Result<Vec<Vector2<f64>>, FlowError> {
    if n_per_side < 2 {
        return Err(FlowError::InvalidConfiguration("grid needs at least 2x2 points"));
    }
    if margin < 0.0 {
        return Err(FlowError::InvalidConfiguration("margin must be >= 0"));
    }
    let span_x = (width - 1) as f64 - 2.0 * margin;
    let span_y = (height - 1) as f64 - 2.0 * margin;
    if span_x <= 0.0 || span_y <= 0.0 {
        return Err(FlowError::InvalidConfiguration(
            "margins leave no room for the seed grid",
        ));
    }
    let n = n_per_side as f64;
    let mut points = Vec::with_capacity(n_per_side * n_per_side);
    for j in 0..n_per_side {
        for i in 0..n_per_side {
            points.push(Vector2::new(
                margin + span_x * i as f64 / (n - 1.0),
                margin + span_y * j as f64 / (n - 1.0),
            ));
        }
    }
    Ok(points)
}
