//! Terrain-relative vision navigation core.
//!
//! Recovers the pose of a camera at one instant plus its motion to a second
//! instant (12 parameters) from two-frame optical flow and a digital terrain
//! map. Each tracked feature is anchored to the terrain by casting its
//! first-frame ray onto the DTM; the anchor, its tangent-plane normal and the
//! second-frame observation yield one three-component constraint, and the
//! stacked constraints are minimized by robust Gauss-Newton with a
//! Levenberg-Marquardt fallback.
//!
//! The crate is `no_std`-compatible (`alloc` required); file formats and the
//! command-line front end live in the companion `terranav` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod estimator;
pub mod flow;
pub mod geometry;
pub mod sim;
pub mod terrain;

pub use estimator::{EstimateResult, EstimationProblem, ParameterVector, SolverConfig};
pub use flow::{FlowFeature, GrayImage, KernelWindow, TrackStatus};
pub use geometry::{CameraIntrinsics, EulerAngles, ImageRay, Pose, RelativeMotion};
pub use sim::{InsNoiseModel, Propagation, RunReport, ScenarioConfig, TrajectorySample};
pub use terrain::{Dtm, GroundAnchor, TerrainKind, TerrainSpec};
