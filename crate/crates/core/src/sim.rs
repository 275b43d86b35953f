//! Flight-scenario simulator: straight-line trajectory generation, inertial
//! drift modeling, direct synthetic flow rendering over a DTM, and the
//! closed navigation loop that corrects dead reckoning with vision estimates
//! at every measurement pair.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::estimator::{
    solve, EstimationProblem, EstimatorError, ParameterVector, SolverConfig,
};
use crate::flow::{seed_regular_grid, FlowFeature, TrackStatus};
use crate::geometry::{
    camera_ray_to_world, pixel_to_ray, ray_to_pixel, wrap_angle, CameraIntrinsics, EulerAngles,
    ImageRay, Pose, RelativeMotion,
};
use crate::terrain::Dtm;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(&'static str),
    #[error("only {surviving} features survive rendering; at least 6 are required")]
    DegenerateScenario { surviving: usize },
    #[error("estimation setup failed: {0}")]
    Estimator(#[from] EstimatorError),
    #[error("flow seeding failed: {0}")]
    Flow(#[from] crate::flow::FlowError),
}

/// Dead-reckoning error model: independent per-axis Gaussian random walks on
/// velocity and on the Euler attitude, with standard deviations expressed
/// per square-root second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsNoiseModel {
    /// m/s per sqrt(s), per axis.
    pub velocity_rw_std: f64,
    /// rad per sqrt(s), per axis.
    pub attitude_rw_std: f64,
    pub seed: u64,
}

/// How the navigation state is carried between vision corrections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagation {
    /// Integrate drifting inertial velocity and attitude.
    Ins,
    /// Straight line at the last known speed, attitude held (no rotation);
    /// the speed comes from vision fixes once available.
    ConstantVelocity,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub dtm: Dtm,
    /// m/s along the heading.
    pub speed: f64,
    /// Total flight time, seconds.
    pub duration: f64,
    /// Flight altitude above mean sea level, meters.
    pub altitude_msl: f64,
    /// Compass heading, degrees (0 = north/+y, 90 = east/+x).
    pub heading_deg: f64,
    /// Seconds between consecutive frames.
    pub frame_interval: f64,
    /// Seconds between the two index frames of a measurement pair; must be an
    /// integer multiple of `frame_interval`. Consecutive pairs share a frame.
    pub pair_interval: f64,
    pub intrinsics: CameraIntrinsics,
    /// Features are seeded on an N x N grid spanning the full frame.
    pub n_features_side: usize,
    /// Std-dev of the Gaussian pixel noise added to both flow endpoints.
    pub flow_noise_px: f64,
    pub ins_noise: InsNoiseModel,
    pub propagation: Propagation,
    pub seed: u64,
    /// Fraction of rendered features replaced by gross outlier flows.
    pub outlier_fraction: f64,
    pub solver: SolverConfig,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.speed > 0.0 && self.duration > 0.0) {
            return Err(SimError::InvalidScenario("speed and duration must be > 0"));
        }
        if !(self.frame_interval > 0.0 && self.pair_interval > 0.0) {
            return Err(SimError::InvalidScenario("intervals must be > 0"));
        }
        let ratio = self.pair_interval / self.frame_interval;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(SimError::InvalidScenario(
                "pair_interval must be an integer multiple of frame_interval",
            ));
        }
        if self.altitude_msl <= self.dtm.max_elevation() {
            return Err(SimError::InvalidScenario(
                "altitude must be above the terrain maximum",
            ));
        }
        if self.n_features_side < 2 {
            return Err(SimError::InvalidScenario("feature grid needs at least 2x2"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(SimError::InvalidScenario(
                "outlier_fraction must lie in [0, 1)",
            ));
        }
        if self.flow_noise_px < 0.0
            || self.ins_noise.velocity_rw_std < 0.0
            || self.ins_noise.attitude_rw_std < 0.0
        {
            return Err(SimError::InvalidScenario("noise levels must be >= 0"));
        }
        Ok(())
    }

    /// World position of the flight start: the straight segment is centered
    /// over the DTM hull.
    pub fn start_position(&self) -> Vector3<f64> {
        let (x0, x1, y0, y1) = self.dtm.hull();
        let center = Vector3::new(0.5 * (x0 + x1), 0.5 * (y0 + y1), self.altitude_msl);
        center - 0.5 * self.speed * self.duration * self.heading_unit()
    }

    fn heading_unit(&self) -> Vector3<f64> {
        let heading = self.heading_deg.to_radians();
        Vector3::new(heading.sin(), heading.cos(), 0.0)
    }

    /// Nadir camera attitude with the short image side along the track and
    /// the flight direction toward the top of the frame.
    pub fn camera_attitude(&self) -> EulerAngles {
        EulerAngles::new(core::f64::consts::PI, 0.0, -self.heading_deg.to_radians())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub pose: Pose,
    pub velocity: Vector3<f64>,
}

/// One vision-measurement epoch of a closed-loop run, evaluated at the
/// second frame time of the pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub t: f64,
    pub truth: Pose,
    /// Open-loop dead-reckoned pose, never corrected.
    pub propagated: Pose,
    /// Vision-corrected pose (the propagated guess when the solve failed).
    pub estimated: Pose,
    /// estimated - truth position, meters.
    pub position_error: Vector3<f64>,
    /// Wrapped estimated - truth Euler differences, degrees.
    pub attitude_error_deg: Vector3<f64>,
    pub converged: bool,
}

impl EpochRecord {
    pub fn position_error_norm(&self) -> f64 {
        self.position_error.norm()
    }

    pub fn attitude_error_max_deg(&self) -> f64 {
        self.attitude_error_deg.abs().max()
    }
}

/// Max and mean errors of one track over the measurement epochs. Position
/// errors are 3D norms; angle errors are the largest absolute wrapped Euler
/// difference per epoch, in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackErrors {
    pub max_position_error: f64,
    pub mean_position_error: f64,
    pub max_angle_error_deg: f64,
    pub mean_angle_error_deg: f64,
}

impl TrackErrors {
    fn from_pairs(errors: impl Iterator<Item = (f64, f64)> + Clone) -> Self {
        let mut n = 0usize;
        let (mut max_p, mut sum_p, mut max_a, mut sum_a) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for (p, a) in errors {
            n += 1;
            max_p = max_p.max(p);
            sum_p += p;
            max_a = max_a.max(a);
            sum_a += a;
        }
        let n = n.max(1) as f64;
        Self {
            max_position_error: max_p,
            mean_position_error: sum_p / n,
            max_angle_error_deg: max_a,
            mean_angle_error_deg: sum_a / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub epochs: Vec<EpochRecord>,
    /// Full truth track at frame resolution.
    pub truth_track: Vec<TrajectorySample>,
    /// Full open-loop dead-reckoned track at frame resolution.
    pub propagated_track: Vec<TrajectorySample>,
    pub propagated_summary: TrackErrors,
    pub vision_summary: TrackErrors,
    pub failed_epochs: usize,
}

/// Constant-velocity, constant-attitude samples at every frame interval.
pub fn generate_trajectory(config: &ScenarioConfig) -> Vec<TrajectorySample> {
    let n = (config.duration / config.frame_interval).round() as usize + 1;
    let start = config.start_position();
    let velocity = config.speed * config.heading_unit();
    let attitude = config.camera_attitude();
    (0..n)
        .map(|k| {
            let t = k as f64 * config.frame_interval;
            TrajectorySample {
                t,
                pose: Pose::new(start + velocity * t, attitude),
                velocity,
            }
        })
        .collect()
}

/// Dead-reckoned track: velocity and attitude accumulate independent
/// zero-mean Gaussian random-walk errors (std `rw_std * sqrt(dt)` per axis
/// and step), and position integrates the corrupted velocity. Zero noise
/// reproduces the input track exactly; deterministic per seed.
pub fn simulate_ins(truth: &[TrajectorySample], noise: &InsNoiseModel) -> Vec<TrajectorySample> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut out = Vec::with_capacity(truth.len());
    if truth.is_empty() {
        return out;
    }
    out.push(truth[0]);
    let mut position = truth[0].pose.position;
    let mut vel_err = Vector3::zeros();
    let mut att_err = Vector3::zeros();
    for pair in truth.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let dt = next.t - prev.t;
        let sqrt_dt = dt.sqrt();
        let dv = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ) * (noise.velocity_rw_std * sqrt_dt);
        let da = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ) * (noise.attitude_rw_std * sqrt_dt);
        let new_vel_err = vel_err + dv;
        position += (next.pose.position - prev.pose.position) + 0.5 * (vel_err + new_vel_err) * dt;
        vel_err = new_vel_err;
        att_err += da;
        let attitude = EulerAngles::new(
            next.pose.attitude.roll + att_err.x,
            next.pose.attitude.pitch + att_err.y,
            next.pose.attitude.yaw + att_err.z,
        );
        out.push(TrajectorySample {
            t: next.t,
            pose: Pose::new(position, attitude),
            velocity: next.velocity + vel_err,
        });
    }
    out
}

/// Synthetic two-frame flow: each seed pixel's first-frame ray is cast onto
/// the DTM, the hit reprojected through the second pose, and independent
/// Gaussian pixel noise of std `noise_px` added to both endpoints. Features
/// that miss the terrain, project outside the second frame, or are pushed
/// off-frame by noise are dropped.
pub fn render_flow(
    dtm: &Dtm,
    intrinsics: &CameraIntrinsics,
    pose1: &Pose,
    pose2: &Pose,
    seeds: &[Vector2<f64>],
    noise_px: f64,
    rng: &mut impl Rng,
) -> Result<Vec<FlowFeature>, SimError> {
    let r2t = pose2.rotation().transpose();
    let mut features = Vec::with_capacity(seeds.len());
    for &u1 in seeds {
        // Noise is drawn unconditionally so that a fixed seed yields the same
        // draws regardless of which features survive or how large the noise is.
        let n: [f64; 4] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let Ok(q1) = pixel_to_ray(intrinsics, u1) else {
            continue;
        };
        let dir = camera_ray_to_world(pose1, &q1);
        let Ok(anchor) = dtm.ray_intersect(pose1.position, dir) else {
            continue;
        };
        let in_c2 = r2t * (anchor.point - pose2.position);
        if in_c2.z <= 1e-9 {
            continue;
        }
        let q2 = ImageRay::new(in_c2.x / in_c2.z, in_c2.y / in_c2.z);
        let Ok(u2) = ray_to_pixel(intrinsics, &q2) else {
            continue;
        };
        let u1_noisy = u1 + noise_px * Vector2::new(n[0], n[1]);
        let u2_noisy = u2 + noise_px * Vector2::new(n[2], n[3]);
        // Noise can push an endpoint off the sensor; such features are lost
        // to the measurement.
        if pixel_to_ray(intrinsics, u1_noisy).is_err() || pixel_to_ray(intrinsics, u2_noisy).is_err()
        {
            continue;
        }
        features.push(FlowFeature {
            u1: u1_noisy,
            u2: u2_noisy,
            status: TrackStatus::Tracked,
            score: 0.0,
        });
    }
    if features.len() < 6 {
        return Err(SimError::DegenerateScenario {
            surviving: features.len(),
        });
    }
    Ok(features)
}

/// Replaces a deterministic selection of features with uniform-random
/// second-frame positions, simulating gross tracker mismatches.
pub fn inject_outliers(
    features: &mut [FlowFeature],
    fraction: f64,
    intrinsics: &CameraIntrinsics,
    rng: &mut impl Rng,
) {
    if fraction <= 0.0 {
        return;
    }
    let count = ((features.len() as f64) * fraction).round() as usize;
    let n = features.len();
    for k in 0..count.min(n) {
        // Evenly spread deterministic victim indices.
        let idx = (k * n) / count.max(1);
        let w = intrinsics.width_px as f64;
        let h = intrinsics.height_px as f64;
        features[idx].u2 = Vector2::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
    }
}

fn substream(seed: u64, tag: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(seed ^ splitmix(tag))
}

const STREAM_OPEN_LOOP: u64 = 1;
const STREAM_CLOSED_INS: u64 = 2;
const STREAM_FLOW_BASE: u64 = 0x1000;
const STREAM_OUTLIER_BASE: u64 = 0x2000;

struct NavState {
    pose: Pose,
    velocity: Vector3<f64>,
}

/// Full closed-loop navigation run.
///
/// Generates the truth track and an open-loop dead-reckoned track, then at
/// every pair epoch renders flow from the truth poses, solves the estimation
/// problem with the initial guess taken from the (corrected) propagated
/// state, replaces the navigation state with the estimate and continues
/// propagation from it. A non-converged epoch is reported and propagation
/// continues uncorrected. All randomness derives from `config.seed`.
pub fn run_closed_loop(config: &ScenarioConfig) -> Result<RunReport, SimError> {
    config.validate()?;
    let truth = generate_trajectory(config);
    let pair_steps = (config.pair_interval / config.frame_interval).round() as usize;
    let n_epochs = (truth.len() - 1) / pair_steps;
    if n_epochs == 0 {
        return Err(SimError::InvalidScenario(
            "duration too short for a single measurement pair",
        ));
    }

    let open_loop = match config.propagation {
        Propagation::Ins => simulate_ins(
            &truth,
            &InsNoiseModel {
                seed: substream(config.seed, STREAM_OPEN_LOOP),
                ..config.ins_noise
            },
        ),
        // Straight-line propagation from the initial conditions: for this
        // scenario family that is the truth itself.
        Propagation::ConstantVelocity => truth.clone(),
    };

    let seeds = seed_regular_grid(
        config.intrinsics.width_px as usize,
        config.intrinsics.height_px as usize,
        config.n_features_side,
        0.0,
    )?;

    let mut ins_rng = ChaCha8Rng::seed_from_u64(substream(config.seed, STREAM_CLOSED_INS));
    let mut nav = NavState {
        pose: truth[0].pose,
        velocity: truth[0].velocity,
    };
    let mut epochs = Vec::with_capacity(n_epochs);
    let mut failed = 0usize;

    for k in 0..n_epochs {
        let i1 = k * pair_steps;
        let i2 = (k + 1) * pair_steps;
        let (truth1, truth2) = (&truth[i1], &truth[i2]);

        let (guess2, vel2) = propagate_pair(
            config,
            &nav,
            &truth[i1..=i2],
            &mut ins_rng,
        );
        let theta0 = ParameterVector::new(nav.pose, RelativeMotion::between(&nav.pose, &guess2));

        let mut flow_rng =
            ChaCha8Rng::seed_from_u64(substream(config.seed, STREAM_FLOW_BASE + k as u64));
        let mut flow = render_flow(
            &config.dtm,
            &config.intrinsics,
            &truth1.pose,
            &truth2.pose,
            &seeds,
            config.flow_noise_px,
            &mut flow_rng,
        )?;
        let mut outlier_rng =
            ChaCha8Rng::seed_from_u64(substream(config.seed, STREAM_OUTLIER_BASE + k as u64));
        inject_outliers(
            &mut flow,
            config.outlier_fraction,
            &config.intrinsics,
            &mut outlier_rng,
        );

        let problem = EstimationProblem::new(&config.dtm, config.intrinsics, flow, theta0)?;
        let estimate = solve(&problem, &config.solver)
            .ok()
            .filter(|r| r.converged)
            .and_then(|r| {
                let pose2 = r.theta.motion.compose(&r.theta.pose).ok()?;
                Some((r.theta.pose, pose2))
            });

        let (estimated, converged) = match estimate {
            Some((pose1_hat, pose2_hat)) => {
                nav = NavState {
                    pose: pose2_hat,
                    velocity: (pose2_hat.position - pose1_hat.position) / config.pair_interval,
                };
                (pose2_hat, true)
            }
            None => {
                failed += 1;
                nav = NavState {
                    pose: guess2,
                    velocity: vel2,
                };
                (guess2, false)
            }
        };

        let position_error = estimated.position - truth2.pose.position;
        let attitude_error_deg = attitude_error_deg(&estimated.attitude, &truth2.pose.attitude);
        epochs.push(EpochRecord {
            t: truth2.t,
            truth: truth2.pose,
            propagated: open_loop[i2].pose,
            estimated,
            position_error,
            attitude_error_deg,
            converged,
        });
    }

    let vision_summary = TrackErrors::from_pairs(
        epochs
            .iter()
            .map(|e| (e.position_error_norm(), e.attitude_error_max_deg())),
    );
    let propagated_summary = TrackErrors::from_pairs(epochs.iter().map(|e| {
        let dp = (e.propagated.position - e.truth.position).norm();
        let da = attitude_error_deg(&e.propagated.attitude, &e.truth.attitude)
            .abs()
            .max();
        (dp, da)
    }));

    Ok(RunReport {
        epochs,
        truth_track: truth,
        propagated_track: open_loop,
        propagated_summary,
        vision_summary,
        failed_epochs: failed,
    })
}

/// Propagates the navigation state across one measurement pair, returning
/// the predicted end pose and carried velocity.
fn propagate_pair(
    config: &ScenarioConfig,
    nav: &NavState,
    truth_leg: &[TrajectorySample],
    ins_rng: &mut ChaCha8Rng,
) -> (Pose, Vector3<f64>) {
    match config.propagation {
        Propagation::ConstantVelocity => {
            let dt = truth_leg[truth_leg.len() - 1].t - truth_leg[0].t;
            (
                Pose::new(nav.pose.position + nav.velocity * dt, nav.pose.attitude),
                nav.velocity,
            )
        }
        Propagation::Ins => {
            // The inertial sensors measure the true increments; the corrected
            // navigation errors random-walk on top of them.
            let first = &truth_leg[0];
            let mut position = nav.pose.position;
            let mut vel_err = nav.velocity - first.velocity;
            let mut att_err = Vector3::new(
                wrap_angle(nav.pose.attitude.roll, first.pose.attitude.roll),
                wrap_angle(nav.pose.attitude.pitch, first.pose.attitude.pitch),
                wrap_angle(nav.pose.attitude.yaw, first.pose.attitude.yaw),
            );
            for pair in truth_leg.windows(2) {
                let (prev, next) = (&pair[0], &pair[1]);
                let dt = next.t - prev.t;
                let sqrt_dt = dt.sqrt();
                let dv = Vector3::new(
                    ins_rng.sample::<f64, _>(StandardNormal),
                    ins_rng.sample::<f64, _>(StandardNormal),
                    ins_rng.sample::<f64, _>(StandardNormal),
                ) * (config.ins_noise.velocity_rw_std * sqrt_dt);
                let da = Vector3::new(
                    ins_rng.sample::<f64, _>(StandardNormal),
                    ins_rng.sample::<f64, _>(StandardNormal),
                    ins_rng.sample::<f64, _>(StandardNormal),
                ) * (config.ins_noise.attitude_rw_std * sqrt_dt);
                let new_vel_err = vel_err + dv;
                position +=
                    (next.pose.position - prev.pose.position) + 0.5 * (vel_err + new_vel_err) * dt;
                vel_err = new_vel_err;
                att_err += da;
            }
            let last = &truth_leg[truth_leg.len() - 1];
            let attitude = EulerAngles::new(
                last.pose.attitude.roll + att_err.x,
                last.pose.attitude.pitch + att_err.y,
                last.pose.attitude.yaw + att_err.z,
            );
            (
                Pose::new(position, attitude),
                last.velocity + vel_err,
            )
        }
    }
}

/// Wrapped per-angle attitude difference `a - b` in degrees.
pub fn attitude_error_deg(a: &EulerAngles, b: &EulerAngles) -> Vector3<f64> {
    Vector3::new(
        wrap_angle(a.roll, b.roll).to_degrees(),
        wrap_angle(a.pitch, b.pitch).to_degrees(),
        wrap_angle(a.yaw, b.yaw).to_degrees(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{generate_synthetic_dtm, TerrainKind, TerrainSpec};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    pub(crate) fn paper_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(4800, 2923, 59.97, 38.68).unwrap()
    }

    fn small_scenario(kind: TerrainKind, seed: u64) -> ScenarioConfig {
        let dtm = generate_synthetic_dtm(&TerrainSpec {
            kind,
            amplitude: 200.0,
            wavelength: 1500.0,
            seed: seed ^ 0xCAFE,
            width: 129,
            height: 129,
            cell_size: 60.0,
            origin_x: 0.0,
            origin_y: 0.0,
        })
        .unwrap();
        ScenarioConfig {
            dtm,
            speed: 50.0,
            duration: 19.6,
            altitude_msl: 1000.0,
            heading_deg: 0.0,
            frame_interval: 0.4,
            pair_interval: 3.6,
            intrinsics: paper_intrinsics(),
            n_features_side: 9,
            flow_noise_px: 0.0,
            ins_noise: InsNoiseModel {
                velocity_rw_std: 0.0,
                attitude_rw_std: 0.0,
                seed: 0,
            },
            propagation: Propagation::Ins,
            seed,
            outlier_fraction: 0.0,
            solver: SolverConfig::default(),
        }
    }

    #[test]
    fn default_scenario_has_fifty_samples_twenty_meters_apart() {
        let config = small_scenario(TerrainKind::Flat, 1);
        let truth = generate_trajectory(&config);
        assert_eq!(truth.len(), 50);
        for pair in truth.windows(2) {
            let d = (pair[1].pose.position - pair[0].pose.position).norm();
            assert_abs_diff_eq!(d, 20.0, epsilon = 1e-9);
        }
        // Pair spacing: 3.6 s at 50 m/s, close to the flown 175 m figure.
        let d_pair = (truth[9].pose.position - truth[0].pose.position).norm();
        assert_abs_diff_eq!(d_pair, 180.0, epsilon = 1e-9);
        assert!((d_pair - 175.0).abs() <= 10.0);
    }

    #[test]
    fn zero_noise_ins_equals_truth() {
        let config = small_scenario(TerrainKind::Flat, 2);
        let truth = generate_trajectory(&config);
        let ins = simulate_ins(
            &truth,
            &InsNoiseModel {
                velocity_rw_std: 0.0,
                attitude_rw_std: 0.0,
                seed: 3,
            },
        );
        for (a, b) in truth.iter().zip(&ins) {
            assert_abs_diff_eq!(a.pose.position, b.pose.position, epsilon = 1e-9);
            assert_eq!(a.pose.attitude, b.pose.attitude);
        }
    }

    #[test]
    fn ins_velocity_increment_statistics() {
        // One-second steps; the per-axis velocity increment std must match
        // the configured random-walk intensity.
        let truth: Vec<TrajectorySample> = (0..2)
            .map(|k| TrajectorySample {
                t: k as f64,
                pose: Pose::new(Vector3::zeros(), EulerAngles::default()),
                velocity: Vector3::zeros(),
            })
            .collect();
        let mut increments = Vec::new();
        for seed in 0..334 {
            let ins = simulate_ins(
                &truth,
                &InsNoiseModel {
                    velocity_rw_std: 20.0,
                    attitude_rw_std: 0.0,
                    seed,
                },
            );
            let dv = ins[1].velocity - ins[0].velocity;
            increments.extend_from_slice(&[dv.x, dv.y, dv.z]);
        }
        let n = increments.len() as f64;
        let mean = increments.iter().sum::<f64>() / n;
        let var = increments.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        assert!(
            (18.5..=21.5).contains(&std),
            "velocity increment std {std} outside [18.5, 21.5]"
        );
    }

    #[test]
    fn ins_position_error_grows_superlinearly() {
        let config = small_scenario(TerrainKind::Flat, 3);
        let truth = generate_trajectory(&config);
        let mid = truth.len() / 2;
        let (mut var_mid, mut var_end) = (0.0, 0.0);
        let runs = 300;
        for seed in 0..runs {
            let ins = simulate_ins(
                &truth,
                &InsNoiseModel {
                    velocity_rw_std: 5.0,
                    attitude_rw_std: 0.0,
                    seed,
                },
            );
            var_mid += (ins[mid].pose.position - truth[mid].pose.position).norm_squared();
            var_end += (ins[truth.len() - 1].pose.position
                - truth[truth.len() - 1].pose.position)
                .norm_squared();
        }
        var_mid /= runs as f64;
        var_end /= runs as f64;
        // Integrated random walk: variance grows as t^3, far beyond 2x.
        assert!(
            var_end > 2.0 * var_mid,
            "var {var_end} at 2t vs {var_mid} at t"
        );
    }

    #[test]
    fn identical_poses_render_zero_flow() {
        let config = small_scenario(TerrainKind::Fractal, 4);
        let truth = generate_trajectory(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seeds = seed_regular_grid(4800, 2923, 5, 0.0).unwrap();
        let flow = render_flow(
            &config.dtm,
            &config.intrinsics,
            &truth[0].pose,
            &truth[0].pose,
            &seeds,
            0.0,
            &mut rng,
        )
        .unwrap();
        for f in &flow {
            assert!(f.flow().norm() <= 1e-9, "flow {:?} nonzero", f.flow());
        }
    }

    #[test]
    fn center_feature_flow_matches_pinhole_prediction() {
        // Long image side mapped along track: motion along world +x with the
        // nadir attitude whose image x axis is east.
        let dtm = generate_synthetic_dtm(&TerrainSpec {
            kind: TerrainKind::Flat,
            amplitude: 0.0,
            wavelength: 1.0,
            seed: 0,
            width: 129,
            height: 129,
            cell_size: 60.0,
            origin_x: -3840.0,
            origin_y: -3840.0,
        })
        .unwrap();
        let intr = paper_intrinsics();
        let attitude = EulerAngles::new(core::f64::consts::PI, 0.0, 0.0);
        let pose1 = Pose::new(Vector3::new(0.0, 0.0, 1000.0), attitude);
        let pose2 = Pose::new(Vector3::new(180.0, 0.0, 1000.0), attitude);
        let center = Vector2::new(2400.0, 1461.5);
        let mut seeds = seed_regular_grid(4800, 2923, 3, 400.0).unwrap();
        seeds.push(center);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let flow = render_flow(&dtm, &intr, &pose1, &pose2, &seeds, 0.0, &mut rng).unwrap();
        let center_feature = flow
            .iter()
            .find(|f| (f.u1 - center).norm() < 1e-9)
            .expect("center feature rendered");
        let expected = intr.f_long() * 180.0 / 1000.0;
        assert_relative_eq!(center_feature.flow().norm(), expected, epsilon = 1e-6);
    }

    #[test]
    fn closed_loop_zero_noise_tracks_truth() {
        let mut config = small_scenario(TerrainKind::Fractal, 5);
        config.flow_noise_px = 0.0;
        let report = run_closed_loop(&config).unwrap();
        assert_eq!(report.epochs.len(), 5);
        assert_eq!(report.failed_epochs, 0);
        assert!(
            report.vision_summary.max_position_error <= 0.1,
            "max position error {}",
            report.vision_summary.max_position_error
        );
        assert!(
            report.vision_summary.max_angle_error_deg <= 0.01,
            "max angle error {}",
            report.vision_summary.max_angle_error_deg
        );
    }

    #[test]
    fn closed_loop_is_deterministic() {
        let mut config = small_scenario(TerrainKind::Fractal, 6);
        config.flow_noise_px = 0.5;
        config.ins_noise.velocity_rw_std = 20.0;
        config.ins_noise.attitude_rw_std = 0.33f64.to_radians();
        let a = run_closed_loop(&config).unwrap();
        let b = run_closed_loop(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summary_maxima_equal_series_maxima() {
        let mut config = small_scenario(TerrainKind::Fractal, 7);
        config.flow_noise_px = 1.0;
        config.ins_noise.velocity_rw_std = 20.0;
        config.ins_noise.attitude_rw_std = 0.33f64.to_radians();
        let report = run_closed_loop(&config).unwrap();
        let max_p = report
            .epochs
            .iter()
            .map(|e| e.position_error_norm())
            .fold(0.0f64, f64::max);
        let max_a = report
            .epochs
            .iter()
            .map(|e| e.attitude_error_max_deg())
            .fold(0.0f64, f64::max);
        assert_eq!(report.vision_summary.max_position_error, max_p);
        assert_eq!(report.vision_summary.max_angle_error_deg, max_a);
    }
}
