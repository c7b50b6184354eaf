//! Raw grid and mask files with JSON sidecars.
//!
//! A grid is a blob of little-endian `f32` (re, im) pairs in channel-major,
//! row-major order next to a sidecar `{shape, channels, domain}`. A mask is an
//! 8-bit 0/1 raster with sidecar `{shape}`. The sidecar of `name.bin` is `name.json`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, Dims, Domain, RealGrid};
use crate::mask::Mask;

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub shape: Vec<usize>,
    pub channels: usize,
    pub domain: Domain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskHeader {
    pub shape: Vec<usize>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn write_grid(path: &Path, g: &ComplexGrid) -> Result<()> {
    let header = GridHeader { shape: g.dims().to_shape(), channels: g.channels(), domain: g.domain() };
    let mut blob = Vec::with_capacity(g.data().len() * 8);
    for z in g.data() {
        blob.extend_from_slice(&(z.re as f32).to_le_bytes());
        blob.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    write_json(&sidecar_path(path), &header)?;
    fs::write(path, blob).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<ComplexGrid> {
    let header: GridHeader = read_json(&sidecar_path(path))?;
    let dims = Dims::from_shape(&header.shape)?;
    let blob = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = header.channels * dims.len() * 8;
    if blob.len() != expected {
        return Err(Error::format(path, format!("expected {expected} bytes from header, found {}", blob.len())));
    }
    let data = blob
        .chunks_exact(8)
        .map(|b| {
            Complex64::new(
                f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
                f32::from_le_bytes([b[4], b[5], b[6], b[7]]) as f64,
            )
        })
        .collect();
    ComplexGrid::from_vec(header.channels, dims, header.domain, data)
}

/// Real images are stored as single-channel image-domain grids with zero imaginary part.
pub fn write_real(path: &Path, g: &RealGrid) -> Result<()> {
    let data = g.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    write_grid(path, &ComplexGrid::from_vec(1, g.dims(), Domain::Image, data)?)
}

pub fn read_real(path: &Path) -> Result<RealGrid> {
    let g = read_grid(path)?;
    if g.channels() != 1 {
        return Err(Error::format(path, format!("expected a single-channel image, found {} channels", g.channels())));
    }
    RealGrid::from_vec(g.dims(), g.data().iter().map(|z| z.re).collect())
}

pub fn write_mask(path: &Path, m: &Mask) -> Result<()> {
    write_json(&sidecar_path(path), &MaskHeader { shape: vec![m.pe1(), m.pe2()] })?;
    let blob: Vec<u8> = m.bits().iter().map(|&b| b as u8).collect();
    fs::write(path, blob).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let header: MaskHeader = read_json(&sidecar_path(path))?;
    let [pe1, pe2] = header.shape[..] else {
        return Err(Error::format(path, "mask shape must have two extents"));
    };
    let blob = fs::read(path).map_err(|e| Error::io(path, e))?;
    if blob.len() != pe1 * pe2 {
        return Err(Error::format(path, format!("expected {} bytes, found {}", pe1 * pe2, blob.len())));
    }
    let bits = blob
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::format(path, format!("mask byte {other} is not 0 or 1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Mask::from_bits(pe1, pe2, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn grid_round_trip_at_f32_precision(values in proptest::collection::vec(-1e3f64..1e3, 2 * 3 * 4 * 5)) {
            let data: Vec<Complex64> = values.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect();
            let g = ComplexGrid::from_vec(3, Dims::new_2d(4, 5), Domain::Kspace, data).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("k.bin");
            write_grid(&path, &g).unwrap();
            let back = read_grid(&path).unwrap();
            prop_assert_eq!(back.dims(), g.dims());
            prop_assert_eq!(back.domain(), Domain::Kspace);
            for (a, b) in back.data().iter().zip(g.data()) {
                prop_assert_eq!(a.re, b.re as f32 as f64);
                prop_assert_eq!(a.im, b.im as f32 as f64);
            }
        }
    }

    #[test]
    fn sidecar_and_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.bin");
        let g = ComplexGrid::zeros(2, Dims::new_3d(3, 4, 5), Domain::Image).unwrap();
        write_grid(&path, &g).unwrap();
        let header: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("img.json")).unwrap()).unwrap();
        assert_eq!(header["shape"], serde_json::json!([3, 4, 5]));
        assert_eq!(header["channels"], 2);
        assert_eq!(header["domain"], "image");
        assert_eq!(fs::metadata(&path).unwrap().len(), 2 * 60 * 8);
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.bin");
        write_grid(&path, &ComplexGrid::zeros(1, Dims::new_2d(4, 4), Domain::Kspace).unwrap()).unwrap();
        fs::write(&path, vec![0u8; 17]).unwrap();
        assert!(matches!(read_grid(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn mask_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = Mask::from_fn(5, 7, |i, j| (i + j) % 3 == 0);
        write_mask(&path, &m).unwrap();
        assert_eq!(read_mask(&path).unwrap(), m);
        fs::write(&path, vec![2u8; 35]).unwrap();
        assert!(read_mask(&path).is_err());
    }

    #[test]
    fn real_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let g = RealGrid::from_vec(Dims::new_2d(2, 3), vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5]).unwrap();
        write_real(&path, &g).unwrap();
        assert_eq!(read_real(&path).unwrap(), g);
    }
}
