//! 16-bit binary PGM output with a linear intensity window.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::RealGrid;

/// Maps `[lo, hi]` linearly onto `[0, 65535]`, clamping outside values.
/// A degenerate window (`lo == hi`) maps everything at or above `lo` to full scale.
pub fn window(values: &[f64], lo: f64, hi: f64) -> Result<Vec<u16>> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Spec(format!("window {lo}:{hi} must be finite with min <= max")));
    }
    let span = hi - lo;
    Ok(values
        .iter()
        .map(|&v| {
            if span == 0.0 {
                if v >= lo { u16::MAX } else { 0 }
            } else {
                let t = ((v - lo) / span).clamp(0.0, 1.0);
                (t * 65535.0).round() as u16
            }
        })
        .collect())
}

/// P5 raster of one FE slice, `pe1` rows by `pe2` columns, big-endian samples.
pub fn encode(image: &RealGrid, slice: usize, lo: f64, hi: f64) -> Result<Vec<u8>> {
    let dims = image.dims();
    if slice >= dims.fe {
        return Err(Error::Dimension(format!("slice {slice} of {} FE positions", dims.fe)));
    }
    let plane = dims.plane();
    let pixels = window(&image.data()[slice * plane..(slice + 1) * plane], lo, hi)?;
    let mut out = format!("P5\n{} {}\n65535\n", dims.pe2, dims.pe1).into_bytes();
    out.reserve(2 * plane);
    for p in pixels {
        out.extend_from_slice(&p.to_be_bytes());
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, image: &RealGrid, slice: usize, lo: f64, hi: f64) -> Result<()> {
    let bytes = encode(image, slice, lo, hi)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses `"min:max"`.
pub fn parse_window(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::Spec(format!("window must look like MIN:MAX, got {s:?}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    Ok((lo, hi))
}
