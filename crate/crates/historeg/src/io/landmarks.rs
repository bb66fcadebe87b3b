//! Landmark CSV files: one `id,x,y` row per landmark with coordinates in
//! pixel units of the image the landmarks belong to. An optional `id,x,y`
//! header row is accepted and written. Parse errors carry the line number.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// One named landmark in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

/// Coordinate pairs of a landmark list.
pub fn points(landmarks: &[Landmark]) -> Vec<(f64, f64)> {
    landmarks.iter().map(|l| (l.x, l.y)).collect()
}

pub fn parse_landmarks(text: &str, path: &Path) -> Result<Vec<Landmark>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut landmarks = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if idx == 0 && line.eq_ignore_ascii_case("id,x,y") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(
                line_no,
                format!("expected 3 comma-separated fields, found {}", fields.len()),
            ));
        }
        if fields[0].is_empty() {
            return Err(err(line_no, "empty landmark id".into()));
        }
        let parse = |field: &str, name: &str| -> Result<f64> {
            let v: f64 = field
                .parse()
                .map_err(|_| err(line_no, format!("invalid {name} coordinate {field:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(line_no, format!("non-finite {name} coordinate")))
            }
        };
        landmarks.push(Landmark {
            id: fields[0].to_string(),
            x: parse(fields[1], "x")?,
            y: parse(fields[2], "y")?,
        });
    }
    if landmarks.is_empty() {
        return Err(err(1, "no landmarks in file".into()));
    }
    Ok(landmarks)
}

pub fn read_landmarks(path: &Path) -> Result<Vec<Landmark>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_landmarks(&text, path)
}

pub fn format_landmarks(landmarks: &[Landmark]) -> String {
    let mut out = String::from("id,x,y\n");
    for l in landmarks {
        // `{}` prints the shortest representation that parses back to the
        // same value, so write/read cycles are exact.
        let _ = writeln!(out, "{},{},{}", l.id, l.x, l.y);
    }
    out
}

pub fn write_landmarks(path: &Path, landmarks: &[Landmark]) -> Result<()> {
    std::fs::write(path, format_landmarks(landmarks)).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}
