//! Binary PGM (P5) image input and output, 8-bit or 16-bit big-endian,
//! normalized to [0, 1] on load.

use std::fs;
use std::io::Write;
use std::path::Path;

use terranav_core::flow::GrayImage;

use crate::FormatError;

pub fn read_image(path: &Path) -> Result<GrayImage, FormatError> {
    let bytes = fs::read(path)?;
    let mut cursor = 0usize;

    let mut next_token = |bytes: &[u8]| -> Result<String, FormatError> {
        loop {
            while cursor < bytes.len() && bytes[cursor].is_ascii_whitespace() {
                cursor += 1;
            }
            if cursor < bytes.len() && bytes[cursor] == b'#' {
                while cursor < bytes.len() && bytes[cursor] != b'\n' {
                    cursor += 1;
                }
                continue;
            }
            break;
        }
        let start = cursor;
        while cursor < bytes.len() && !bytes[cursor].is_ascii_whitespace() {
            cursor += 1;
        }
        if start == cursor {
            return Err(FormatError::parse(path, 1, "unexpected end of header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..cursor]).into_owned())
    };

    let magic = next_token(&bytes)?;
    if magic != "P5" {
        return Err(FormatError::parse(path, 1, format!("not a binary PGM (magic {magic:?})")));
    }
    let parse_dim = |s: String| -> Result<usize, FormatError> {
        s.parse::<usize>()
            .map_err(|e| FormatError::parse(path, 1, format!("bad header field: {e}")))
    };
    let width = parse_dim(next_token(&bytes)?)?;
    let height = parse_dim(next_token(&bytes)?)?;
    let maxval = parse_dim(next_token(&bytes)?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(FormatError::parse(path, 1, format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    cursor += 1;

    let wide = maxval > 255;
    let expected = width * height * if wide { 2 } else { 1 };
    let data = bytes
        .get(cursor..cursor + expected)
        .ok_or_else(|| FormatError::Invalid(format!("{}: truncated raster", path.display())))?;
    let scale = 1.0 / maxval as f64;
    let pixels: Vec<f64> = if wide {
        data.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect()
    } else {
        data.iter().map(|&b| b as f64 * scale).collect()
    };
    if pixels.iter().any(|&p| p > 1.0) {
        return Err(FormatError::Invalid(format!(
            "{}: sample above maxval",
            path.display()
        )));
    }
    GrayImage::new(width, height, pixels)
        .map_err(|e| FormatError::Invalid(format!("{}: {e}", path.display())))
}

pub fn write_image(path: &Path, image: &GrayImage, maxval: u16) -> Result<(), FormatError> {
    let mut out = Vec::with_capacity(image.pixels().len() * 2 + 32);
    write!(out, "P5\n{} {}\n{}\n", image.width(), image.height(), maxval)?;
    let m = maxval as f64;
    if maxval > 255 {
        for &p in image.pixels() {
            let v = (p * m).round() as u16;
            out.extend_from_slice(&v.to_be_bytes());
        }
    } else {
        for &p in image.pixels() {
            out.push((p * m).round() as u8);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use terranav_core::flow::synthesize_texture;

    #[test]
    fn sixteen_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let img = synthesize_texture(64, 48, 3);
        write_image(&path, &img, 65535).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!((back.width(), back.height()), (64, 48));
        for (a, b) in back.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }

    #[test]
    fn eight_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t8.pgm");
        let img = synthesize_texture(32, 32, 4);
        write_image(&path, &img, 255).unwrap();
        let back = read_image(&path).unwrap();
        for (a, b) in back.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn comments_in_header_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        fs::write(&path, b"P5\n# comment line\n2 1\n255\n\x10\xF0").unwrap();
        let img = read_image(&path).unwrap();
        assert_eq!((img.width(), img.height()), (2, 1));
    }

    #[test]
    fn ascii_pgm_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p2.pgm");
        fs::write(&path, b"P2\n2 1\n255\n16 240\n").unwrap();
        assert!(read_image(&path).is_err());
    }
}
