//! Transform files: a registration result together with the grids it maps
//! between, so saved results can warp images and landmarks later.
//!
//! The file is a text header followed by an optional binary coefficient
//! block:
//!
//! ```text
//! HISTOREG TRANSFORM 1
//! reference <width> <height> <spacing> <origin_x> <origin_y>
//! template <width> <height> <spacing> <origin_x> <origin_y>
//! rigid <angle> <tx> <ty> <cx> <cy>                  (present when step 1 ran)
//! affine <a0> <a1> <a2> <a3> <a4> <a5>
//! field <nx> <ny> <origin_x> <origin_y> <extent_x> <extent_y>   (optional)
//! end
//! <2 * nx * ny little-endian f64 coefficients iff a field line is present>
//! ```
//!
//! Floats in the header are printed in shortest round-trip form and the
//! coefficient block is raw bits, so saving and loading is lossless.

use crate::error::{Error, Result};
use crate::transform::{Affine2D, BSplineField, Rigid2D, Transform};
use std::fmt::Write as _;
use std::path::Path;

const MAGIC_LINE: &str = "HISTOREG TRANSFORM 1";

/// Pixel grid of one of the registered images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridInfo {
    pub width: usize,
    pub height: usize,
    pub spacing: f64,
    pub origin: (f64, f64),
}

impl GridInfo {
    /// Length of the image diagonal in pixel units.
    pub fn diagonal_pixels(&self) -> f64 {
        ((self.width * self.width + self.height * self.height) as f64).sqrt()
    }

    /// Pixel-unit coordinates to physical coordinates.
    pub fn pixel_to_physical(&self, p: (f64, f64)) -> (f64, f64) {
        (
            self.origin.0 + (p.0 + 0.5) * self.spacing,
            self.origin.1 + (p.1 + 0.5) * self.spacing,
        )
    }

    /// Physical coordinates to pixel units.
    pub fn physical_to_pixel(&self, p: (f64, f64)) -> (f64, f64) {
        (
            (p.0 - self.origin.0) / self.spacing - 0.5,
            (p.1 - self.origin.1) / self.spacing - 0.5,
        )
    }
}

/// A saved registration: the map plus both image grids.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformFile {
    pub reference: GridInfo,
    pub template: GridInfo,
    pub rigid: Option<Rigid2D>,
    pub transform: Transform,
}

pub fn write_transform(path: &Path, tf: &TransformFile) -> Result<()> {
    let mut header = String::new();
    let _ = writeln!(header, "{MAGIC_LINE}");
    for (name, grid) in [("reference", &tf.reference), ("template", &tf.template)] {
        let _ = writeln!(
            header,
            "{name} {} {} {} {} {}",
            grid.width, grid.height, grid.spacing, grid.origin.0, grid.origin.1
        );
    }
    if let Some(r) = &tf.rigid {
        let _ = writeln!(
            header,
            "rigid {} {} {} {} {}",
            r.angle, r.translation.0, r.translation.1, r.center.0, r.center.1
        );
    }
    let a = &tf.transform.affine.a;
    let _ = writeln!(
        header,
        "affine {} {} {} {} {} {}",
        a[0], a[1], a[2], a[3], a[4], a[5]
    );
    let mut payload = Vec::new();
    if let Some(field) = &tf.transform.field {
        let (nx, ny) = field.grid_size();
        let (ox, oy) = field.origin();
        let (ex, ey) = field.extent();
        let _ = writeln!(header, "field {nx} {ny} {ox} {oy} {ex} {ey}");
        payload.reserve(8 * field.coeffs().len());
        for c in field.coeffs() {
            payload.extend_from_slice(&c.to_le_bytes());
        }
    }
    header.push_str("end\n");
    let mut bytes = header.into_bytes();
    bytes.extend_from_slice(&payload);
    std::fs::write(path, bytes).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_transform(path: &Path) -> Result<TransformFile> {
    let bytes = std::fs::read(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    // Split at the "end" line: text header before, binary payload after.
    let mut pos = 0;
    let mut line_no = 0;
    let mut header_lines: Vec<(usize, String)> = Vec::new();
    let payload_start = loop {
        let rest = &bytes[pos..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(err(line_no + 1, "missing end line".into()));
        };
        line_no += 1;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| err(line_no, "header is not valid text".into()))?
            .trim_end_matches('\r')
            .to_string();
        pos += nl + 1;
        if line == "end" {
            break pos;
        }
        header_lines.push((line_no, line));
        if line_no > 16 {
            return Err(err(line_no, "header too long".into()));
        }
    };

    let mut lines = header_lines.into_iter();
    let (first_no, first) = lines
        .next()
        .ok_or_else(|| err(1, "empty transform file".into()))?;
    if first != MAGIC_LINE {
        return Err(err(first_no, "not a transform file".into()));
    }

    let mut reference = None;
    let mut template = None;
    let mut rigid = None;
    let mut affine = None;
    let mut field_info: Option<(usize, usize, f64, f64, f64, f64)> = None;
    for (no, line) in lines {
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next().unwrap_or("");
        let rest: Vec<&str> = tokens.collect();
        let floats = |want: usize| -> Result<Vec<f64>> {
            if rest.len() != want {
                return Err(err(
                    no,
                    format!("{keyword} needs {want} values, found {}", rest.len()),
                ));
            }
            rest.iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| err(no, format!("invalid number {t:?}")))
                })
                .collect()
        };
        let grid = |rest: &[&str]| -> Result<GridInfo> {
            if rest.len() != 5 {
                return Err(err(no, format!("{keyword} needs 5 values")));
            }
            let width: usize = rest[0]
                .parse()
                .map_err(|_| err(no, format!("invalid width {:?}", rest[0])))?;
            let height: usize = rest[1]
                .parse()
                .map_err(|_| err(no, format!("invalid height {:?}", rest[1])))?;
            let mut vals = [0.0; 3];
            for (v, t) in vals.iter_mut().zip(&rest[2..]) {
                *v = t
                    .parse()
                    .map_err(|_| err(no, format!("invalid number {t:?}")))?;
            }
            Ok(GridInfo {
                width,
                height,
                spacing: vals[0],
                origin: (vals[1], vals[2]),
            })
        };
        match keyword {
            "reference" => reference = Some(grid(&rest)?),
            "template" => template = Some(grid(&rest)?),
            "rigid" => {
                let v = floats(5)?;
                rigid = Some(Rigid2D::new(v[0], (v[1], v[2]), (v[3], v[4])));
            }
            "affine" => {
                let v = floats(6)?;
                affine = Some(Affine2D {
                    a: [v[0], v[1], v[2], v[3], v[4], v[5]],
                });
            }
            "field" => {
                if rest.len() != 6 {
                    return Err(err(no, "field needs 6 values".into()));
                }
                let nx: usize = rest[0]
                    .parse()
                    .map_err(|_| err(no, format!("invalid grid size {:?}", rest[0])))?;
                let ny: usize = rest[1]
                    .parse()
                    .map_err(|_| err(no, format!("invalid grid size {:?}", rest[1])))?;
                let mut vals = [0.0; 4];
                for (v, t) in vals.iter_mut().zip(&rest[2..]) {
                    *v = t
                        .parse()
                        .map_err(|_| err(no, format!("invalid number {t:?}")))?;
                }
                field_info = Some((nx, ny, vals[0], vals[1], vals[2], vals[3]));
            }
            other => return Err(err(no, format!("unknown header line {other:?}"))),
        }
    }

    let reference = reference.ok_or_else(|| err(line_no, "missing reference line".into()))?;
    let template = template.ok_or_else(|| err(line_no, "missing template line".into()))?;
    let affine = affine.ok_or_else(|| err(line_no, "missing affine line".into()))?;

    let payload = &bytes[payload_start..];
    let field = match field_info {
        None => {
            if !payload.is_empty() {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    msg: "unexpected bytes after end line".into(),
                });
            }
            None
        }
        Some((nx, ny, ox, oy, ex, ey)) => {
            let expect = 2 * nx * ny * 8;
            if payload.len() != expect {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    msg: format!(
                        "coefficient block holds {} bytes, expected {expect}",
                        payload.len()
                    ),
                });
            }
            let coeffs: Vec<f64> = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Some(BSplineField::from_parts(nx, ny, (ox, oy), (ex, ey), coeffs)?)
        }
    };
    Ok(TransformFile {
        reference,
        template,
        rigid,
        transform: Transform { affine, field },
    })
}
