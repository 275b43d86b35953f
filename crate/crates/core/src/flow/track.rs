//! Pyramidal translational Lucas-Kanade tracking.

use alloc::vec::Vec;
use nalgebra::Vector2;

use super::detect::{shi_tomasi_score, structure_tensor, window_fits};
use super::image::Pyramid;
use super::{FlowError, GrayImage, KernelWindow};

/// Structure tensors whose minimum eigenvalue falls below this fraction of
/// the trace are treated as untrackable.
const MIN_EIG_TRACE_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tracked,
    Lost,
}

/// One feature's pixel locations in the first and last frame of a tracked
/// pair or chain, plus its corner score at the starting location.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowFeature {
    pub u1: Vector2<f64>,
    pub u2: Vector2<f64>,
    pub status: TrackStatus,
    pub score: f64,
}

impl FlowFeature {
    pub fn is_tracked(&self) -> bool {
        self.status == TrackStatus::Tracked
    }

    pub fn flow(&self) -> Vector2<f64> {
        self.u2 - self.u1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackConfig {
    /// Pyramid levels including the base image; 1 disables coarse-to-fine.
    pub levels: usize,
    pub window: KernelWindow,
    /// Iteration cap per pyramid level.
    pub max_iters: usize,
    /// Stop iterating once the increment falls below this many pixels.
    pub eps: f64,
    /// Features whose total flow exceeds this are marked lost.
    pub max_flow_px: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            window: KernelWindow::default(),
            max_iters: 30,
            eps: 0.01,
            max_flow_px: f64::INFINITY,
        }
    }
}

/// One Lucas-Kanade update for the feature at `u1`, with the flow guess
/// applied when sampling the second image:
/// `d = M^-1 (-sum w Ix It, -sum w Iy It)` with `It = I2(x + guess) - I1(x)`.
pub fn lk_step(
    img1: &GrayImage,
    img2: &GrayImage,
    u1: Vector2<f64>,
    guess: Vector2<f64>,
    window: &KernelWindow,
) -> Result<Vector2<f64>, FlowError> {
    let r = window.radius();
    if !window_fits(img1, u1, r) {
        return Err(FlowError::LostFeature { x: u1.x, y: u1.y });
    }
    let shifted = u1 + guess;
    // I2 itself needs no gradient samples, but keeping the same footprint as
    // the tensor window avoids edge effects; require the plain window.
    let pad = r as f64;
    if shifted.x - pad < 0.0
        || shifted.y - pad < 0.0
        || shifted.x + pad > (img2.width() - 1) as f64
        || shifted.y + pad > (img2.height() - 1) as f64
    {
        return Err(FlowError::LostFeature {
            x: shifted.x,
            y: shifted.y,
        });
    }

    let m = structure_tensor(img1, u1, window)?;
    let trace = m[(0, 0)] + m[(1, 1)];
    let min_eig = shi_tomasi_score(&m);
    if trace <= 0.0 || min_eig < MIN_EIG_TRACE_RATIO * trace {
        return Err(FlowError::UntrackableFeature { x: u1.x, y: u1.y });
    }

    let weights = window.weights();
    let mut b = Vector2::<f64>::zeros();
    let mut k = 0;
    for dy in -(r as isize)..=r as isize {
        for dx in -(r as isize)..=r as isize {
            let x = u1.x + dx as f64;
            let y = u1.y + dy as f64;
            let ix = (img1.sample(x + 1.0, y) - img1.sample(x - 1.0, y)) / 2.0;
            let iy = (img1.sample(x, y + 1.0) - img1.sample(x, y - 1.0)) / 2.0;
            let it = img2.sample(x + guess.x, y + guess.y) - img1.sample(x, y);
            b.x -= weights[k] * ix * it;
            b.y -= weights[k] * iy * it;
            k += 1;
        }
    }
    // Direct 2x2 solve; the determinant is safely positive past the
    // eigenvalue check.
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    Ok(Vector2::new(
        (m[(1, 1)] * b.x - m[(0, 1)] * b.y) / det,
        (m[(0, 0)] * b.y - m[(1, 0)] * b.x) / det,
    ))
}

/// Coarse-to-fine translational tracking of `points` from `img1` to `img2`.
/// The flow solved at each pyramid level is doubled and used as the guess at
/// the next finer one; per-feature failures are reported in the status.
pub fn track_pyramidal(
    img1: &GrayImage,
    img2: &GrayImage,
    points: &[Vector2<f64>],
    config: &TrackConfig,
) -> Result<Vec<FlowFeature>, FlowError> {
    if config.levels < 1 {
        return Err(FlowError::InvalidConfiguration("levels must be >= 1"));
    }
    if img1.width() != img2.width() || img1.height() != img2.height() {
        return Err(FlowError::ImageSizeMismatch);
    }
    let pyr1 = Pyramid::build(img1, config.levels);
    let pyr2 = Pyramid::build(img2, config.levels);

    let features = points
        .iter()
        .map(|&u1| {
            let score = structure_tensor(img1, u1, &config.window)
                .map(|m| shi_tomasi_score(&m))
                .unwrap_or(0.0);
            match track_one(&pyr1, &pyr2, u1, config) {
                Some(flow) => {
                    let u2 = u1 + flow;
                    let in_bounds = img2.contains(u2.x, u2.y);
                    let status = if in_bounds && flow.norm() <= config.max_flow_px {
                        TrackStatus::Tracked
                    } else {
                        TrackStatus::Lost
                    };
                    FlowFeature {
                        u1,
                        u2,
                        status,
                        score,
                    }
                }
                None => FlowFeature {
                    u1,
                    u2: u1,
                    status: TrackStatus::Lost,
                    score,
                },
            }
        })
        .collect();
    Ok(features)
}

fn track_one(
    pyr1: &Pyramid<'_>,
    pyr2: &Pyramid<'_>,
    u1: Vector2<f64>,
    config: &TrackConfig,
) -> Option<Vector2<f64>> {
    let mut guess = Vector2::<f64>::zeros();
    for level in (0..config.levels).rev() {
        let scale = (1u64 << level) as f64;
        let u_level = u1 / scale;
        let mut nu = Vector2::<f64>::zeros();
        for _ in 0..config.max_iters {
            match lk_step(
                pyr1.level(level),
                pyr2.level(level),
                u_level,
                guess + nu,
                &config.window,
            ) {
                Ok(d) => {
                    nu += d;
                    if d.norm() < config.eps {
                        break;
                    }
                }
                // Coarse levels too small for the window are skipped; the
                // finer levels still see the feature. Failure at the base
                // resolution loses the feature.
                Err(_) if level > 0 => break,
                Err(_) => return None,
            }
        }
        guess += nu;
        if level > 0 {
            guess *= 2.0;
        }
    }
    Some(guess)
}

/// Tracks `points` from the first to the last frame by composing
/// frame-to-frame flow across the intermediate images. A feature lost at any
/// hop is lost overall.
pub fn chain_tracks(
    frames: &[GrayImage],
    points: &[Vector2<f64>],
    config: &TrackConfig,
) -> Result<Vec<FlowFeature>, FlowError> {
    if frames.len() < 2 {
        return Err(FlowError::InvalidConfiguration("need at least 2 frames"));
    }
    let mut features: Vec<FlowFeature> = points
        .iter()
        .map(|&u1| FlowFeature {
            u1,
            u2: u1,
            status: TrackStatus::Tracked,
            score: 0.0,
        })
        .collect();

    for (hop, pair) in frames.windows(2).enumerate() {
        let live: Vec<usize> = features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_tracked())
            .map(|(i, _)| i)
            .collect();
        if live.is_empty() {
            break;
        }
        let positions: Vec<Vector2<f64>> = live.iter().map(|&i| features[i].u2).collect();
        let hop_results = track_pyramidal(&pair[0], &pair[1], &positions, config)?;
        for (&i, hopped) in live.iter().zip(&hop_results) {
            if hop == 0 {
                features[i].score = hopped.score;
            }
            match hopped.status {
                TrackStatus::Tracked => features[i].u2 = hopped.u2,
                TrackStatus::Lost => features[i].status = TrackStatus::Lost,
            }
        }
    }
    Ok(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::synthesize_texture;

    fn interior_points(width: usize, height: usize, margin: f64, n: usize) -> Vec<Vector2<f64>> {
        super::super::seed_regular_grid(width, height, n, margin).unwrap()
    }

    #[test]
    fn zero_motion_gives_zero_step() {
        let img = synthesize_texture(64, 64, 31);
        let d = lk_step(
            &img,
            &img,
            Vector2::new(30.0, 28.0),
            Vector2::<f64>::zeros(),
            &KernelWindow::default(),
        )
        .unwrap();
        assert!(d.norm() <= 1e-6, "step {d:?} on identical images");
    }

    #[test]
    fn iterated_steps_recover_subpixel_shift() {
        let img1 = synthesize_texture(96, 96, 32);
        let shift = Vector2::new(1.5, 0.5);
        let img2 = img1.translate_bilinear(shift.x, shift.y);
        let window = KernelWindow::default();
        let u1 = Vector2::new(48.0, 48.0);
        let mut flow = Vector2::<f64>::zeros();
        for _ in 0..30 {
            let d = lk_step(&img1, &img2, u1, flow, &window).unwrap();
            flow += d;
            if d.norm() < 1e-4 {
                break;
            }
        }
        assert!(
            (flow - shift).norm() <= 0.25,
            "recovered {flow:?}, expected {shift:?}"
        );
    }

    #[test]
    fn constant_image_is_untrackable() {
        let img = GrayImage::from_fn(48, 48, |_, _| 0.5);
        let err = lk_step(
            &img,
            &img,
            Vector2::new(24.0, 24.0),
            Vector2::<f64>::zeros(),
            &KernelWindow::default(),
        );
        assert!(matches!(err, Err(FlowError::UntrackableFeature { .. })));
    }

    #[test]
    fn lk_rhs_matches_naive_double_loop() {
        let img1 = synthesize_texture(64, 64, 33);
        let img2 = img1.translate_bilinear(0.7, -0.4);
        let window = KernelWindow::gaussian(5, 2.5).unwrap();
        let u1 = Vector2::new(31.2, 29.8);
        let guess = Vector2::new(0.3, -0.2);

        let d = lk_step(&img1, &img2, u1, guess, &window).unwrap();

        // Reference: explicit sums and an explicit 2x2 inverse.
        let weights = window.weights();
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        let (mut bx, mut by) = (0.0, 0.0);
        let mut k = 0;
        for dy in -5i32..=5 {
            for dx in -5i32..=5 {
                let x = u1.x + dx as f64;
                let y = u1.y + dy as f64;
                let ix = (img1.sample(x + 1.0, y) - img1.sample(x - 1.0, y)) / 2.0;
                let iy = (img1.sample(x, y + 1.0) - img1.sample(x, y - 1.0)) / 2.0;
                let it = img2.sample(x + guess.x, y + guess.y) - img1.sample(x, y);
                a += weights[k] * ix * ix;
                b += weights[k] * ix * iy;
                c += weights[k] * iy * iy;
                bx -= weights[k] * ix * it;
                by -= weights[k] * iy * it;
                k += 1;
            }
        }
        let det = a * c - b * b;
        let expected = Vector2::new((c * bx - b * by) / det, (a * by - b * bx) / det);
        assert!((d - expected).norm() <= 1e-12);
    }

    #[test]
    fn identical_images_track_everywhere() {
        let img = synthesize_texture(128, 128, 34);
        let points = interior_points(128, 128, 20.0, 5);
        let features = track_pyramidal(&img, &img, &points, &TrackConfig::default()).unwrap();
        for f in &features {
            assert!(f.is_tracked());
            assert!(f.flow().norm() <= 1e-6);
        }
    }

    #[test]
    fn pyramid_recovers_large_global_shift() {
        // Margins keep the full window usable at every pyramid level.
        let img1 = synthesize_texture(256, 224, 35);
        let shift = Vector2::new(12.0, -7.0);
        let img2 = img1.translate_bilinear(shift.x, shift.y);
        let points = interior_points(256, 224, 70.0, 6);
        let features = track_pyramidal(&img1, &img2, &points, &TrackConfig::default()).unwrap();
        let tracked: Vec<&FlowFeature> = features.iter().filter(|f| f.is_tracked()).collect();
        assert!(tracked.len() >= 30, "only {} tracked", tracked.len());
        let mean_err: f64 = tracked
            .iter()
            .map(|f| (f.flow() - shift).norm())
            .sum::<f64>()
            / tracked.len() as f64;
        assert!(mean_err <= 0.25, "mean flow error {mean_err}");
    }

    #[test]
    fn tracked_features_resolve_in_bounds() {
        let img1 = synthesize_texture(96, 96, 36);
        let img2 = img1.translate_bilinear(20.0, 0.0);
        let points = interior_points(96, 96, 12.0, 6);
        let features = track_pyramidal(&img1, &img2, &points, &TrackConfig::default()).unwrap();
        assert!(features.iter().filter(|f| f.is_tracked()).count() <= points.len());
        for f in features.iter().filter(|f| f.is_tracked()) {
            assert!(img2.contains(f.u2.x, f.u2.y));
        }
    }

    #[test]
    fn tracking_is_deterministic() {
        let img1 = synthesize_texture(128, 96, 37);
        let img2 = img1.translate_bilinear(3.3, 2.1);
        let points = interior_points(128, 96, 18.0, 5);
        let a = track_pyramidal(&img1, &img2, &points, &TrackConfig::default()).unwrap();
        let b = track_pyramidal(&img1, &img2, &points, &TrackConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_frame_chain_equals_pairwise_tracking() {
        let img1 = synthesize_texture(96, 96, 38);
        let img2 = img1.translate_bilinear(2.5, -1.5);
        let points = interior_points(96, 96, 15.0, 4);
        let config = TrackConfig::default();
        let chained = chain_tracks(&[img1.clone(), img2.clone()], &points, &config).unwrap();
        let direct = track_pyramidal(&img1, &img2, &points, &config).unwrap();
        assert_eq!(chained, direct);
    }

    #[test]
    fn chain_accumulates_flow_across_frames() {
        let base = synthesize_texture(256, 128, 39);
        let frames: Vec<GrayImage> = (0..10)
            .map(|k| base.translate_bilinear(2.0 * k as f64, 0.0))
            .collect();
        let points = vec![
            Vector2::new(40.0, 40.0),
            Vector2::new(60.0, 70.0),
            Vector2::new(90.0, 50.0),
        ];
        let features = chain_tracks(&frames, &points, &TrackConfig::default()).unwrap();
        for f in &features {
            assert!(f.is_tracked(), "feature {:?} lost", f.u1);
            let err = (f.flow() - Vector2::new(18.0, 0.0)).norm();
            assert!(err <= 0.5, "chained flow {:?} off by {err}", f.flow());
        }
    }

    #[test]
    fn feature_lost_mid_chain_is_reported_lost() {
        let base = synthesize_texture(128, 128, 40);
        // Second hop replaces the scene with a flat image: everything drops.
        let flat = GrayImage::from_fn(128, 128, |_, _| 0.5);
        let frames = vec![base.clone(), base.translate_bilinear(1.0, 0.0), flat];
        let points = vec![Vector2::new(64.0, 64.0)];
        let features = chain_tracks(&frames, &points, &TrackConfig::default()).unwrap();
        assert_eq!(features[0].status, TrackStatus::Lost);
    }

    #[test]
    fn single_frame_chain_rejected() {
        let img = synthesize_texture(64, 64, 41);
        let err = chain_tracks(
            &[img],
            &[Vector2::new(32.0, 32.0)],
            &TrackConfig::default(),
        );
        assert!(matches!(err, Err(FlowError::InvalidConfiguration(_))));
    }
}
