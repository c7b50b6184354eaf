//! Dense multi-coil grids and the per-pixel operations on them.
//!
//! Complex data is stored channel-major, then frequency-encode, then the two
//! phase-encode axes (row-major). Two-dimensional data uses `fe == 1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::mask::Mask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Kspace,
    Image,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Kspace => "kspace",
            Domain::Image => "image",
        }
    }
}

/// Spatial extents: frequency-encode and the two phase-encode axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub fe: usize,
    pub pe1: usize,
    pub pe2: usize,
}

impl Dims {
    pub fn new_2d(pe1: usize, pe2: usize) -> Self {
        Dims { fe: 1, pe1, pe2 }
    }

    pub fn new_3d(fe: usize, pe1: usize, pe2: usize) -> Self {
        Dims { fe, pe1, pe2 }
    }

    pub fn len(&self) -> usize {
        self.fe * self.pe1 * self.pe2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.pe1 * self.pe2
    }

    pub fn is_2d(&self) -> bool {
        self.fe == 1
    }

    /// Extents as written to file sidecars: `[pe1, pe2]` for 2D data, `[fe, pe1, pe2]` otherwise.
    pub fn to_shape(&self) -> Vec<usize> {
        if self.is_2d() {
            vec![self.pe1, self.pe2]
        } else {
            vec![self.fe, self.pe1, self.pe2]
        }
    }

    pub fn from_shape(shape: &[usize]) -> Result<Self> {
        let dims = match *shape {
            [pe1, pe2] => Dims::new_2d(pe1, pe2),
            [fe, pe1, pe2] => Dims::new_3d(fe, pe1, pe2),
            _ => return Err(Error::Dimension(format!("expected 2 or 3 spatial extents, got {}", shape.len()))),
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fe == 0 || self.pe1 == 0 || self.pe2 == 0 {
            return Err(Error::Dimension(format!("extents must be positive, got {self:?}")));
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, f: usize, i: usize, j: usize) -> usize {
        (f * self.pe1 + i) * self.pe2 + j
    }
}

/// Multi-coil complex k-space or image.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    channels: usize,
    dims: Dims,
    domain: Domain,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn zeros(channels: usize, dims: Dims, domain: Domain) -> Result<Self> {
        Self::from_vec(channels, dims, domain, vec![Complex64::new(0.0, 0.0); channels * dims.len()])
    }

    pub fn from_vec(channels: usize, dims: Dims, domain: Domain, data: Vec<Complex64>) -> Result<Self> {
        dims.validate()?;
        if channels == 0 {
            return Err(Error::Dimension("channel count must be at least 1".into()));
        }
        if data.len() != channels * dims.len() {
            return Err(Error::Dimension(format!(
                "data length {} does not match {} channels x {} voxels",
                data.len(),
                channels,
                dims.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Degenerate("grid contains non-finite values".into()));
        }
        Ok(ComplexGrid { channels, dims, domain, data })
    }

    pub(crate) fn from_parts_unchecked(channels: usize, dims: Dims, domain: Domain, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), channels * dims.len());
        ComplexGrid { channels, dims, domain, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.dims.len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, f: usize, i: usize, j: usize) -> Complex64 {
        self.data[c * self.dims.len() + self.dims.index(f, i, j)]
    }

    #[inline]
    pub fn offset(&self, c: usize, f: usize, i: usize, j: usize) -> usize {
        c * self.dims.len() + self.dims.index(f, i, j)
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn expect_domain(&self, expected: Domain) -> Result<()> {
        if self.domain != expected {
            return Err(Error::Domain { expected: expected.name(), found: self.domain.name() });
        }
        Ok(())
    }

    /// Centered crop of the phase-encode plane to `pe1 x pe2` (all FE positions kept).
    pub fn crop_center(&self, pe1: usize, pe2: usize) -> Result<ComplexGrid> {
        let (s1, s2) = crop_start(self.dims, pe1, pe2)?;
        let out_dims = Dims::new_3d(self.dims.fe, pe1, pe2);
        let mut data = Vec::with_capacity(self.channels * out_dims.len());
        for c in 0..self.channels {
            for f in 0..self.dims.fe {
                for i in 0..pe1 {
                    let start = self.offset(c, f, s1 + i, s2);
                    data.extend_from_slice(&self.data[start..start + pe2]);
                }
            }
        }
        Ok(ComplexGrid::from_parts_unchecked(self.channels, out_dims, self.domain, data))
    }
}

/// Start indices of a centered `pe1 x pe2` window; the window center sits on the grid center `n / 2`.
pub fn crop_start(dims: Dims, pe1: usize, pe2: usize) -> Result<(usize, usize)> {
    if pe1 == 0 || pe2 == 0 || pe1 > dims.pe1 || pe2 > dims.pe2 {
        return Err(Error::Dimension(format!(
            "crop {}x{} does not fit in {}x{}",
            pe1, pe2, dims.pe1, dims.pe2
        )));
    }
    let start = |n: usize, k: usize| (n / 2).saturating_sub(k / 2).min(n - k);
    Ok((start(dims.pe1, pe1), start(dims.pe2, pe2)))
}

/// Real-valued image (coil-combined magnitude, phantom, noise map).
#[derive(Clone, Debug, PartialEq)]
pub struct RealGrid {
    dims: Dims,
    data: Vec<f64>,
}

impl RealGrid {
    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::from_vec(dims, vec![0.0; dims.len()])
    }

    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.len() {
            return Err(Error::Dimension(format!("data length {} does not match {} voxels", data.len(), dims.len())));
        }
        Ok(RealGrid { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, f: usize, i: usize, j: usize) -> f64 {
        self.data[self.dims.index(f, i, j)]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Mean over the voxels selected by `region` (broadcast along FE), or over the whole grid.
    pub fn mean(&self, region: Option<&Mask>) -> Result<f64> {
        let (sum, count) = self.region_fold(region, |v| v)?;
        Ok(sum / count as f64)
    }

    /// Pointwise absolute difference.
    pub fn abs_diff(&self, other: &RealGrid) -> Result<RealGrid> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).collect();
        Ok(RealGrid { dims: self.dims, data })
    }

    fn region_fold(&self, region: Option<&Mask>, f: impl Fn(f64) -> f64) -> Result<(f64, usize)> {
        match region {
            None => Ok((self.data.iter().map(|&v| f(v)).sum(), self.data.len())),
            Some(m) => {
                check_plane(m, self.dims)?;
                let plane = self.dims.plane();
                let mut sum = 0.0;
                let mut count = 0;
                for fe in 0..self.dims.fe {
                    for (p, &on) in m.bits().iter().enumerate() {
                        if on {
                            sum += f(self.data[fe * plane + p]);
                            count += 1;
                        }
                    }
                }
                if count == 0 {
                    return Err(Error::Degenerate("region selects no voxels".into()));
                }
                Ok((sum, count))
            }
        }
    }
}

fn check_plane(m: &Mask, dims: Dims) -> Result<()> {
    if m.pe1() != dims.pe1 || m.pe2() != dims.pe2 {
        return Err(Error::Dimension(format!(
            "mask {}x{} does not match phase-encode plane {}x{}",
            m.pe1(),
            m.pe2(),
            dims.pe1,
            dims.pe2
        )));
    }
    Ok(())
}

/// Zeroes every element whose phase-encode position is off in `m`.
pub fn apply_mask(g: &ComplexGrid, m: &Mask) -> Result<ComplexGrid> {
    check_plane(m, g.dims)?;
    let plane = g.dims.plane();
    let zero = Complex64::new(0.0, 0.0);
    let data = g
        .data
        .iter()
        .enumerate()
        .map(|(idx, &z)| if m.bits()[idx % plane] { z } else { zero })
        .collect();
    Ok(ComplexGrid::from_parts_unchecked(g.channels, g.dims, g.domain, data))
}

/// Record of the factor the raw data was divided by.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub scale: f64,
}

/// Divides `g` by the largest magnitude found at sampled positions.
pub fn normalize(g: &ComplexGrid, m_sampled: &Mask) -> Result<(ComplexGrid, NormalizationRecord)> {
    check_plane(m_sampled, g.dims)?;
    let plane = g.dims.plane();
    let scale = g
        .data
        .iter()
        .enumerate()
        .filter(|(idx, _)| m_sampled.bits()[idx % plane])
        .map(|(_, z)| z.norm())
        .fold(0.0f64, f64::max);
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::Degenerate("sampled data has no nonzero magnitude".into()));
    }
    let data = g.data.iter().map(|z| z / scale).collect();
    Ok((ComplexGrid::from_parts_unchecked(g.channels, g.dims, g.domain, data), NormalizationRecord { scale }))
}

/// Undoes [`normalize`].
pub fn denormalize(g: &ComplexGrid, record: NormalizationRecord) -> ComplexGrid {
    let data = g.data.iter().map(|z| z * record.scale).collect();
    ComplexGrid::from_parts_unchecked(g.channels, g.dims, g.domain, data)
}

/// Root mean square over channels: `sqrt(sum_c |x_c|^2 / C)`.
pub fn rms_combine(img: &ComplexGrid) -> Result<RealGrid> {
    img.expect_domain(Domain::Image)?;
    let n = img.dims.len();
    let data = if img.channels == 1 {
        img.data.iter().map(|z| z.norm()).collect()
    } else {
        let inv_c = 1.0 / img.channels as f64;
        (0..n)
            .map(|p| {
                let s: f64 = (0..img.channels).map(|c| img.data[c * n + p].norm_sqr()).sum();
                (s * inv_c).sqrt()
            })
            .collect()
    };
    Ok(RealGrid { dims: img.dims, data })
}

/// Inverse transform followed by RMS coil combination.
pub fn reconstruct_image(kspace: &ComplexGrid) -> Result<RealGrid> {
    rms_combine(&fft::dft_inverse(kspace)?)
}

/// Mean squared error over `region` (whole grid when `None`).
pub fn mse(recon: &RealGrid, reference: &RealGrid, region: Option<&Mask>) -> Result<f64> {
    if recon.dims != reference.dims {
        return Err(Error::Dimension(format!("{:?} vs {:?}", recon.dims, reference.dims)));
    }
    let diff = RealGrid {
        dims: recon.dims,
        data: recon.data.iter().zip(&reference.data).map(|(a, b)| a - b).collect(),
    };
    let (sum, count) = diff.region_fold(region, |d| d * d)?;
    Ok(sum / count as f64)
}
