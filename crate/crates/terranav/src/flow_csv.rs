//! Flow-set CSV interchange between the tracker and the estimator:
//! `id,u1x,u1y,u2x,u2y,status,score`, pixel columns with 6 decimal places.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector2;
use terranav_core::flow::{FlowFeature, TrackStatus};

use crate::FormatError;

pub const HEADER: &str = "id,u1x,u1y,u2x,u2y,status,score";

pub fn write_features(path: &Path, features: &[FlowFeature]) -> Result<(), FormatError> {
    let mut out = Vec::new();
    writeln!(out, "{HEADER}")?;
    for (id, f) in features.iter().enumerate() {
        let status = match f.status {
            TrackStatus::Tracked => "tracked",
            TrackStatus::Lost => "lost",
        };
        writeln!(
            out,
            "{id},{:.6},{:.6},{:.6},{:.6},{status},{:.6e}",
            f.u1.x, f.u1.y, f.u2.x, f.u2.y, f.score
        )?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Vec<FlowFeature>, FormatError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == HEADER => {}
        Some((_, header)) => {
            return Err(FormatError::parse(
                path,
                1,
                format!("unexpected header {header:?}"),
            ))
        }
        None => return Err(FormatError::parse(path, 1, "empty file")),
    }
    let mut features = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(FormatError::parse(
                path,
                line_no,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let num = |s: &str| -> Result<f64, FormatError> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| FormatError::parse(path, line_no, format!("bad number {s:?}: {e}")))
        };
        let status = match fields[5].trim() {
            "tracked" => TrackStatus::Tracked,
            "lost" => TrackStatus::Lost,
            other => {
                return Err(FormatError::parse(
                    path,
                    line_no,
                    format!("unknown status {other:?}"),
                ))
            }
        };
        features.push(FlowFeature {
            u1: Vector2::new(num(fields[1])?, num(fields[2])?),
            u2: Vector2::new(num(fields[3])?, num(fields[4])?),
            status,
            score: num(fields[6])?,
        });
    }
    Ok(features)
}
