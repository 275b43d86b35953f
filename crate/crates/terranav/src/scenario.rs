//! Scenario JSON: the full flight, camera, noise and solver description
//! consumed by `terranav simulate`. Units on disk are meters, seconds,
//! degrees and pixels.

use std::path::Path;

use serde::{Deserialize, Serialize};

use terranav_core::sim::{InsNoiseModel, Propagation, ScenarioConfig};
use terranav_core::terrain::{generate_synthetic_dtm, Dtm, TerrainKind, TerrainSpec};

use crate::problem::{IntrinsicsFile, SolverFile};
use crate::FormatError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TerrainFile {
    /// Load an ESRI ASCII grid; relative paths resolve against the scenario
    /// file's directory.
    File { file: String },
    Synthetic {
        kind: String,
        amplitude_m: f64,
        wavelength_m: f64,
        #[serde(default)]
        seed: u64,
        width: usize,
        height: usize,
        cell_size_m: f64,
        #[serde(default)]
        origin_x_m: f64,
        #[serde(default)]
        origin_y_m: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InsNoiseFile {
    pub velocity_rw_mps_per_sqrt_s: f64,
    pub attitude_rw_deg_per_sqrt_s: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub terrain: TerrainFile,
    pub speed_mps: f64,
    pub duration_s: f64,
    pub altitude_msl_m: f64,
    #[serde(default)]
    pub heading_deg: f64,
    pub frame_interval_s: f64,
    pub pair_interval_s: f64,
    pub intrinsics: IntrinsicsFile,
    pub n_features_side: usize,
    pub flow_noise_px: f64,
    pub ins_noise: InsNoiseFile,
    /// "ins" or "constant-velocity".
    pub propagation: String,
    pub seed: u64,
    #[serde(default)]
    pub outlier_fraction: f64,
    #[serde(default)]
    pub solver: SolverFile,
}

pub fn parse_terrain_kind(kind: &str) -> Result<TerrainKind, FormatError> {
    match kind {
        "flat" => Ok(TerrainKind::Flat),
        "ramp" => Ok(TerrainKind::Ramp),
        "sinusoidal" => Ok(TerrainKind::Sinusoidal),
        "fractal" => Ok(TerrainKind::Fractal),
        other => Err(FormatError::Invalid(format!(
            "unknown terrain kind {other:?} (expected flat|ramp|sinusoidal|fractal)"
        ))),
    }
}

impl TerrainFile {
    pub fn resolve(&self, base_dir: &Path) -> Result<Dtm, FormatError> {
        match self {
            TerrainFile::File { file } => {
                let path = base_dir.join(file);
                crate::asc::read_dtm(&path)
            }
            TerrainFile::Synthetic {
                kind,
                amplitude_m,
                wavelength_m,
                seed,
                width,
                height,
                cell_size_m,
                origin_x_m,
                origin_y_m,
            } => generate_synthetic_dtm(&TerrainSpec {
                kind: parse_terrain_kind(kind)?,
                amplitude: *amplitude_m,
                wavelength: *wavelength_m,
                seed: *seed,
                width: *width,
                height: *height,
                cell_size: *cell_size_m,
                origin_x: *origin_x_m,
                origin_y: *origin_y_m,
            })
            .map_err(|e| FormatError::Invalid(e.to_string())),
        }
    }
}

impl ScenarioFile {
    pub fn to_core(&self, base_dir: &Path) -> Result<ScenarioConfig, FormatError> {
        let propagation = match self.propagation.as_str() {
            "ins" => Propagation::Ins,
            "constant-velocity" => Propagation::ConstantVelocity,
            other => {
                return Err(FormatError::Invalid(format!(
                    "unknown propagation {other:?} (expected ins|constant-velocity)"
                )))
            }
        };
        let config = ScenarioConfig {
            dtm: self.terrain.resolve(base_dir)?,
            speed: self.speed_mps,
            duration: self.duration_s,
            altitude_msl: self.altitude_msl_m,
            heading_deg: self.heading_deg,
            frame_interval: self.frame_interval_s,
            pair_interval: self.pair_interval_s,
            intrinsics: self.intrinsics.to_core()?,
            n_features_side: self.n_features_side,
            flow_noise_px: self.flow_noise_px,
            ins_noise: InsNoiseModel {
                velocity_rw_std: self.ins_noise.velocity_rw_mps_per_sqrt_s,
                attitude_rw_std: self.ins_noise.attitude_rw_deg_per_sqrt_s.to_radians(),
                seed: self.ins_noise.seed,
            },
            propagation,
            seed: self.seed,
            outlier_fraction: self.outlier_fraction,
            solver: self.solver.to_core(),
        };
        config
            .validate()
            .map_err(|e| FormatError::Invalid(e.to_string()))?;
        Ok(config)
    }
}

pub fn read_scenario(path: &Path) -> Result<ScenarioConfig, FormatError> {
    let text = std::fs::read_to_string(path)?;
    let file: ScenarioFile =
        serde_json::from_str(&text).map_err(|e| FormatError::parse(path, e.line(), e.to_string()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    file.to_core(base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario_json() -> String {
        r#"{
            "terrain": {"kind": "fractal", "amplitude_m": 200.0, "wavelength_m": 1500.0,
                        "seed": 7, "width": 129, "height": 129, "cell_size_m": 60.0},
            "speed_mps": 50.0,
            "duration_s": 19.6,
            "altitude_msl_m": 1000.0,
            "heading_deg": 0.0,
            "frame_interval_s": 0.4,
            "pair_interval_s": 3.6,
            "intrinsics": {"width_px": 4800, "height_px": 2923,
                           "fov_long_deg": 59.97, "fov_short_deg": 38.68},
            "n_features_side": 17,
            "flow_noise_px": 1.0,
            "ins_noise": {"velocity_rw_mps_per_sqrt_s": 20.0,
                          "attitude_rw_deg_per_sqrt_s": 0.33},
            "propagation": "ins",
            "seed": 1
        }"#
        .to_string()
    }

    #[test]
    fn scenario_parses_and_validates() {
        let file: ScenarioFile = serde_json::from_str(&scenario_json()).unwrap();
        let config = file.to_core(Path::new(".")).unwrap();
        assert_eq!(config.propagation, Propagation::Ins);
        assert!((config.ins_noise.attitude_rw_std - 0.33f64.to_radians()).abs() <= 1e-15);
        assert_eq!(config.outlier_fraction, 0.0);
        assert_eq!(config.dtm.width(), 129);
    }

    #[test]
    fn bad_propagation_rejected() {
        let json = scenario_json().replace("\"ins\"", "\"teleport\"");
        let file: ScenarioFile = serde_json::from_str(&json).unwrap();
        assert!(file.to_core(Path::new(".")).is_err());
    }

    #[test]
    fn terrain_from_file_is_loaded() {
        let dir = tempfile::tempdir().unwrap();
        let dtm_path = dir.path().join("ground.asc");
        let dtm = generate_synthetic_dtm(&TerrainSpec {
            kind: TerrainKind::Flat,
            amplitude: 120.0,
            wavelength: 1.0,
            seed: 0,
            width: 64,
            height: 64,
            cell_size: 100.0,
            origin_x: 0.0,
            origin_y: 0.0,
        })
        .unwrap();
        crate::asc::write_dtm(&dtm_path, &dtm).unwrap();
        let json = scenario_json().replace(
            r#"{"kind": "fractal", "amplitude_m": 200.0, "wavelength_m": 1500.0,
                        "seed": 7, "width": 129, "height": 129, "cell_size_m": 60.0}"#,
            r#"{"file": "ground.asc"}"#,
        );
        let file: ScenarioFile = serde_json::from_str(&json).unwrap();
        let config = file.to_core(dir.path()).unwrap();
        assert_eq!(config.dtm.width(), 64);
        assert_eq!(config.dtm.max_elevation(), 120.0);
    }
}
