//! Closed-loop run reports: per-epoch CSV, summary JSON, and plot-ready
//! columnar text emission.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use terranav_core::geometry::wrap_angle;
use terranav_core::sim::{RunReport, TrackErrors};

use crate::FormatError;

pub const REPORT_HEADER: &str = "epoch,t_s,\
truth_x_m,truth_y_m,truth_z_m,truth_roll_deg,truth_pitch_deg,truth_yaw_deg,\
prop_x_m,prop_y_m,prop_z_m,prop_roll_deg,prop_pitch_deg,prop_yaw_deg,\
est_x_m,est_y_m,est_z_m,est_roll_deg,est_pitch_deg,est_yaw_deg,\
err_x_m,err_y_m,err_z_m,err_norm_m,err_roll_deg,err_pitch_deg,err_yaw_deg,\
converged";

/// One parsed report row; poses as (x, y, z, roll deg, pitch deg, yaw deg).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub epoch: usize,
    pub t: f64,
    pub truth: [f64; 6],
    pub propagated: [f64; 6],
    pub estimated: [f64; 6],
    pub error: [f64; 7],
    pub converged: bool,
}

pub fn write_report_csv(path: &Path, report: &RunReport) -> Result<(), FormatError> {
    let mut out = Vec::new();
    writeln!(out, "{REPORT_HEADER}")?;
    for (epoch, e) in report.epochs.iter().enumerate() {
        let pose_cols = |p: &terranav_core::Pose| {
            format!(
                "{:.6},{:.6},{:.6},{:.9},{:.9},{:.9}",
                p.position.x,
                p.position.y,
                p.position.z,
                p.attitude.roll.to_degrees(),
                p.attitude.pitch.to_degrees(),
                p.attitude.yaw.to_degrees()
            )
        };
        writeln!(
            out,
            "{epoch},{:.3},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.9},{:.9},{:.9},{}",
            e.t,
            pose_cols(&e.truth),
            pose_cols(&e.propagated),
            pose_cols(&e.estimated),
            e.position_error.x,
            e.position_error.y,
            e.position_error.z,
            e.position_error.norm(),
            e.attitude_error_deg.x,
            e.attitude_error_deg.y,
            e.attitude_error_deg.z,
            e.converged
        )?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>, FormatError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == REPORT_HEADER => {}
        Some((_, header)) => {
            return Err(FormatError::parse(
                path,
                1,
                format!("unexpected header {header:?}"),
            ))
        }
        None => return Err(FormatError::parse(path, 1, "empty file")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 28 {
            return Err(FormatError::parse(
                path,
                line_no,
                format!("expected 28 fields, found {}", fields.len()),
            ));
        }
        let num = |s: &str| -> Result<f64, FormatError> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| FormatError::parse(path, line_no, format!("bad number {s:?}: {e}")))
        };
        let six = |base: usize| -> Result<[f64; 6], FormatError> {
            Ok([
                num(fields[base])?,
                num(fields[base + 1])?,
                num(fields[base + 2])?,
                num(fields[base + 3])?,
                num(fields[base + 4])?,
                num(fields[base + 5])?,
            ])
        };
        rows.push(ReportRow {
            epoch: fields[0].trim().parse().map_err(|e| {
                FormatError::parse(path, line_no, format!("bad epoch: {e}"))
            })?,
            t: num(fields[1])?,
            truth: six(2)?,
            propagated: six(8)?,
            estimated: six(14)?,
            error: [
                num(fields[20])?,
                num(fields[21])?,
                num(fields[22])?,
                num(fields[23])?,
                num(fields[24])?,
                num(fields[25])?,
                num(fields[26])?,
            ],
            converged: fields[27].trim() == "true",
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackErrorsFile {
    pub max_position_error_m: f64,
    pub mean_position_error_m: f64,
    pub max_angle_error_deg: f64,
    pub mean_angle_error_deg: f64,
}

impl TrackErrorsFile {
    fn from_core(e: &TrackErrors) -> Self {
        Self {
            max_position_error_m: e.max_position_error,
            mean_position_error_m: e.mean_position_error,
            max_angle_error_deg: e.max_angle_error_deg,
            mean_angle_error_deg: e.mean_angle_error_deg,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryFile {
    pub epochs: usize,
    pub failed_epochs: usize,
    pub vision: TrackErrorsFile,
    pub propagated: TrackErrorsFile,
}

impl SummaryFile {
    pub fn from_core(report: &RunReport) -> Self {
        Self {
            epochs: report.epochs.len(),
            failed_epochs: report.failed_epochs,
            vision: TrackErrorsFile::from_core(&report.vision_summary),
            propagated: TrackErrorsFile::from_core(&report.propagated_summary),
        }
    }
}

pub fn write_summary_json(path: &Path, report: &RunReport) -> Result<(), FormatError> {
    let text = serde_json::to_string_pretty(&SummaryFile::from_core(report))
        .map_err(|e| FormatError::Invalid(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub const TRACK_HEADER: &str = "t_s,track,x_m,y_m,z_m,roll_deg,pitch_deg,yaw_deg";

/// Long-format track CSV: every truth and dead-reckoned sample at frame
/// resolution plus the vision-corrected pose at each measurement epoch.
pub fn write_track_csv(path: &Path, report: &RunReport) -> Result<(), FormatError> {
    let mut out = Vec::new();
    writeln!(out, "{TRACK_HEADER}")?;
    let mut write_pose =
        |out: &mut Vec<u8>, t: f64, track: &str, p: &terranav_core::Pose| -> std::io::Result<()> {
            writeln!(
                out,
                "{t:.3},{track},{:.6},{:.6},{:.6},{:.9},{:.9},{:.9}",
                p.position.x,
                p.position.y,
                p.position.z,
                p.attitude.roll.to_degrees(),
                p.attitude.pitch.to_degrees(),
                p.attitude.yaw.to_degrees()
            )
        };
    for s in &report.truth_track {
        write_pose(&mut out, s.t, "truth", &s.pose)?;
    }
    for s in &report.propagated_track {
        write_pose(&mut out, s.t, "propagated", &s.pose)?;
    }
    for e in &report.epochs {
        write_pose(&mut out, e.t, "vision", &e.estimated)?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub const TRAJECTORIES_HEADER: &str = "# t_s truth_x_m truth_y_m truth_z_m \
prop_x_m prop_y_m prop_z_m vis_x_m vis_y_m vis_z_m";

pub const ERRORS_HEADER: &str = "# t_s \
prop_err_x_m prop_err_y_m prop_err_z_m prop_err_roll_deg prop_err_pitch_deg prop_err_yaw_deg \
vis_err_x_m vis_err_y_m vis_err_z_m vis_err_roll_deg vis_err_pitch_deg vis_err_yaw_deg";

/// Emits the trajectory triplet and the error series as space-separated
/// columnar text files `<prefix>_trajectories.txt` and `<prefix>_errors.txt`.
pub fn write_plot_data(prefix: &Path, rows: &[ReportRow]) -> Result<(), FormatError> {
    let mut traj = Vec::new();
    writeln!(traj, "{TRAJECTORIES_HEADER}")?;
    for r in rows {
        writeln!(
            traj,
            "{:.3} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
            r.t,
            r.truth[0],
            r.truth[1],
            r.truth[2],
            r.propagated[0],
            r.propagated[1],
            r.propagated[2],
            r.estimated[0],
            r.estimated[1],
            r.estimated[2],
        )?;
    }
    fs::write(plot_path(prefix, "trajectories"), traj)?;

    let mut errs = Vec::new();
    writeln!(errs, "{ERRORS_HEADER}")?;
    for r in rows {
        let wrapped_deg = |a: f64, b: f64| wrap_angle(a.to_radians(), b.to_radians()).to_degrees();
        writeln!(
            errs,
            "{:.3} {:.6} {:.6} {:.6} {:.9} {:.9} {:.9} {:.6} {:.6} {:.6} {:.9} {:.9} {:.9}",
            r.t,
            r.propagated[0] - r.truth[0],
            r.propagated[1] - r.truth[1],
            r.propagated[2] - r.truth[2],
            wrapped_deg(r.propagated[3], r.truth[3]),
            wrapped_deg(r.propagated[4], r.truth[4]),
            wrapped_deg(r.propagated[5], r.truth[5]),
            r.error[0],
            r.error[1],
            r.error[2],
            r.error[4],
            r.error[5],
            r.error[6],
        )?;
    }
    fs::write(plot_path(prefix, "errors"), errs)?;
    Ok(())
}

pub fn plot_path(prefix: &Path, which: &str) -> std::path::PathBuf {
    let mut name = prefix.file_name().unwrap_or_default().to_os_string();
    name.push(format!("_{which}.txt"));
    prefix.with_file_name(name)
}
