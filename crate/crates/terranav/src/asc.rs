//! ESRI ASCII grid (.asc) terrain input and output.
//!
//! The header carries `ncols`, `nrows`, `xllcorner`/`yllcorner` (or
//! `xllcenter`/`yllcenter`), `cellsize` and optionally `NODATA_value`; data
//! rows follow north to south. Internally cell (0, 0) is the south-west
//! cell center, so rows are flipped on the way in and out. NODATA cells are
//! rejected: the navigation constraint needs a gap-free surface.

use std::fs;
use std::io::Write;
use std::path::Path;

use terranav_core::terrain::Dtm;

use crate::FormatError;

pub fn read_dtm(path: &Path) -> Result<Dtm, FormatError> {
    let text = fs::read_to_string(path)?;
    let mut ncols: Option<usize> = None;
    let mut nrows: Option<usize> = None;
    let mut xll: Option<(f64, bool)> = None; // (value, is_center)
    let mut yll: Option<(f64, bool)> = None;
    let mut cellsize: Option<f64> = None;
    let mut nodata: Option<f64> = None;

    let mut lines = text.lines().enumerate();
    let mut values: Vec<f64> = Vec::new();
    for (idx, line) in &mut lines {
        let line_no = idx + 1;
        let mut tokens = line.split_whitespace();
        let Some(key) = tokens.next() else {
            continue;
        };
        let lower = key.to_ascii_lowercase();
        let header_value = |tokens: &mut dyn Iterator<Item = &str>| -> Result<f64, FormatError> {
            tokens
                .next()
                .ok_or_else(|| FormatError::parse(path, line_no, "missing header value"))?
                .parse::<f64>()
                .map_err(|e| FormatError::parse(path, line_no, format!("bad header value: {e}")))
        };
        match lower.as_str() {
            "ncols" => ncols = Some(header_value(&mut tokens)? as usize),
            "nrows" => nrows = Some(header_value(&mut tokens)? as usize),
            "xllcorner" => xll = Some((header_value(&mut tokens)?, false)),
            "yllcorner" => yll = Some((header_value(&mut tokens)?, false)),
            "xllcenter" => xll = Some((header_value(&mut tokens)?, true)),
            "yllcenter" => yll = Some((header_value(&mut tokens)?, true)),
            "cellsize" => cellsize = Some(header_value(&mut tokens)?),
            "nodata_value" => nodata = Some(header_value(&mut tokens)?),
            _ => {
                // First data row.
                for token in line.split_whitespace() {
                    values.push(token.parse::<f64>().map_err(|e| {
                        FormatError::parse(path, line_no, format!("bad elevation: {e}"))
                    })?);
                }
                break;
            }
        }
    }
    for (idx, line) in lines {
        for token in line.split_whitespace() {
            values.push(token.parse::<f64>().map_err(|e| {
                FormatError::parse(path, idx + 1, format!("bad elevation: {e}"))
            })?);
        }
    }

    let ncols = ncols.ok_or_else(|| FormatError::parse(path, 1, "missing ncols"))?;
    let nrows = nrows.ok_or_else(|| FormatError::parse(path, 1, "missing nrows"))?;
    let cell = cellsize.ok_or_else(|| FormatError::parse(path, 1, "missing cellsize"))?;
    let (x, x_center) = xll.ok_or_else(|| FormatError::parse(path, 1, "missing xllcorner"))?;
    let (y, y_center) = yll.ok_or_else(|| FormatError::parse(path, 1, "missing yllcorner"))?;
    if values.len() != ncols * nrows {
        return Err(FormatError::Invalid(format!(
            "{}: expected {} elevation values, found {}",
            path.display(),
            ncols * nrows,
            values.len()
        )));
    }
    if let Some(nodata) = nodata {
        if let Some(pos) = values.iter().position(|&v| v == nodata) {
            return Err(FormatError::Invalid(format!(
                "{}: NODATA cell at file row {}, column {}",
                path.display(),
                pos / ncols,
                pos % ncols
            )));
        }
    }

    // File rows run north to south; flip into south-west-origin storage.
    let mut elevations = vec![0.0f64; ncols * nrows];
    for file_row in 0..nrows {
        let grid_row = nrows - 1 - file_row;
        let src = &values[file_row * ncols..(file_row + 1) * ncols];
        elevations[grid_row * ncols..(grid_row + 1) * ncols].copy_from_slice(src);
    }
    let origin_x = if x_center { x } else { x + cell / 2.0 };
    let origin_y = if y_center { y } else { y + cell / 2.0 };
    Dtm::new(origin_x, origin_y, cell, ncols, nrows, elevations)
        .map_err(|e| FormatError::Invalid(format!("{}: {e}", path.display())))
}

pub fn write_dtm(path: &Path, dtm: &Dtm) -> Result<(), FormatError> {
    let mut out = Vec::new();
    let (origin_x, origin_y) = dtm.origin();
    let cell = dtm.cell_size();
    writeln!(out, "ncols {}", dtm.width())?;
    writeln!(out, "nrows {}", dtm.height())?;
    writeln!(out, "xllcorner {}", origin_x - cell / 2.0)?;
    writeln!(out, "yllcorner {}", origin_y - cell / 2.0)?;
    writeln!(out, "cellsize {cell}")?;
    writeln!(out, "NODATA_value -9999")?;
    for file_row in 0..dtm.height() {
        let grid_row = dtm.height() - 1 - file_row;
        let mut first = true;
        for i in 0..dtm.width() {
            if !first {
                out.push(b' ');
            }
            write!(out, "{:.6}", dtm.cell(i, grid_row))?;
            first = false;
        }
        out.push(b'\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use terranav_core::terrain::{generate_synthetic_dtm, TerrainKind, TerrainSpec};

    fn sample_dtm() -> Dtm {
        generate_synthetic_dtm(&TerrainSpec {
            kind: TerrainKind::Fractal,
            amplitude: 150.0,
            wavelength: 400.0,
            seed: 11,
            width: 20,
            height: 14,
            cell_size: 25.0,
            origin_x: -40.0,
            origin_y: 60.0,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("terrain.asc");
        let dtm = sample_dtm();
        write_dtm(&path, &dtm).unwrap();
        let back = read_dtm(&path).unwrap();
        assert_eq!(back.width(), dtm.width());
        assert_eq!(back.height(), dtm.height());
        assert_eq!(back.origin(), dtm.origin());
        assert_eq!(back.cell_size(), dtm.cell_size());
        for (a, b) in back.elevations().iter().zip(dtm.elevations()) {
            assert!((a - b).abs() <= 5e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn writes_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.asc"), dir.path().join("b.asc"));
        let dtm = sample_dtm();
        write_dtm(&p1, &dtm).unwrap();
        write_dtm(&p2, &dtm).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn nodata_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.asc");
        fs::write(
            &path,
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n1 2\n3 -9999\n",
        )
        .unwrap();
        let err = read_dtm(&path).unwrap_err();
        assert!(err.to_string().contains("NODATA"), "{err}");
    }

    #[test]
    fn north_to_south_row_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.asc");
        fs::write(
            &path,
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\n9 9\n1 1\n",
        )
        .unwrap();
        let dtm = read_dtm(&path).unwrap();
        // Southern row (y = origin) holds the last file row.
        assert_eq!(dtm.cell(0, 0), 1.0);
        assert_eq!(dtm.cell(0, 1), 9.0);
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.asc");
        fs::write(
            &path,
            "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\n1 2 3\n4 5\n",
        )
        .unwrap();
        assert!(read_dtm(&path).is_err());
    }
}
