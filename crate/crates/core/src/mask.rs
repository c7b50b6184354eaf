//! Binary phase-encode masks and the sampled / pattern / ACS triple.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary raster over the phase-encode plane. Broadcast along channel and FE axes when applied.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pe1: usize,
    pe2: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn zeros(pe1: usize, pe2: usize) -> Self {
        Mask { pe1, pe2, bits: vec![false; pe1 * pe2] }
    }

    pub fn ones(pe1: usize, pe2: usize) -> Self {
        Mask { pe1, pe2, bits: vec![true; pe1 * pe2] }
    }

    pub fn from_bits(pe1: usize, pe2: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != pe1 * pe2 {
            return Err(Error::Dimension(format!("{} bits for a {}x{} mask", bits.len(), pe1, pe2)));
        }
        Ok(Mask { pe1, pe2, bits })
    }

    pub fn from_fn(pe1: usize, pe2: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..pe1 * pe2).map(|p| f(p / pe2, p % pe2)).collect();
        Mask { pe1, pe2, bits }
    }

    pub fn pe1(&self) -> usize {
        self.pe1
    }

    pub fn pe2(&self) -> usize {
        self.pe2
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.pe2 + j]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.zip(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Mask) -> Result<Mask> {
        self.zip(other, |a, b| a && b)
    }

    pub fn complement(&self) -> Mask {
        Mask { pe1: self.pe1, pe2: self.pe2, bits: self.bits.iter().map(|b| !b).collect() }
    }

    pub fn crop_center(&self, pe1: usize, pe2: usize) -> Result<Mask> {
        let (s1, s2) = crate::grid::crop_start(crate::Dims::new_2d(self.pe1, self.pe2), pe1, pe2)?;
        Ok(Mask::from_fn(pe1, pe2, |i, j| self.get(s1 + i, s2 + j)))
    }

    fn zip(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Result<Mask> {
        if self.pe1 != other.pe1 || self.pe2 != other.pe2 {
            return Err(Error::Dimension(format!(
                "mask {}x{} vs {}x{}",
                self.pe1, self.pe2, other.pe1, other.pe2
            )));
        }
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect();
        Ok(Mask { pe1: self.pe1, pe2: self.pe2, bits })
    }
}

/// Acquisition geometry: regular lattice, centered ACS block and their union.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplingMasks {
    pub m_sampled: Mask,
    pub m_pattern: Mask,
    pub m_acs: Mask,
    pub accel: (usize, usize),
    pub acs_size: (usize, usize),
    pub offsets: (usize, usize),
}

/// Parameters of [`make_masks`], as stored in sidecars and manifests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskParams {
    pub shape: (usize, usize),
    pub accel: (usize, usize),
    pub acs: (usize, usize),
    #[serde(default)]
    pub offsets: (usize, usize),
}

impl SamplingMasks {
    pub fn params(&self) -> MaskParams {
        MaskParams {
            shape: (self.m_sampled.pe1, self.m_sampled.pe2),
            accel: self.accel,
            acs: self.acs_size,
            offsets: self.offsets,
        }
    }

    pub fn pe1(&self) -> usize {
        self.m_sampled.pe1
    }

    pub fn pe2(&self) -> usize {
        self.m_sampled.pe2
    }

    /// Sampled fraction of the phase-encode plane.
    pub fn sampled_fraction(&self) -> f64 {
        self.m_sampled.count() as f64 / (self.pe1() * self.pe2()) as f64
    }

    /// Lattice cell offset of `(i, j)`; `(0, 0)` marks pattern positions.
    #[inline]
    pub fn cell_offset(&self, i: usize, j: usize) -> (usize, usize) {
        cell_offset(i, j, self.accel, self.offsets)
    }

    /// Centered crop of every mask; the lattice phase follows the crop origin.
    pub fn crop_center(&self, pe1: usize, pe2: usize) -> Result<SamplingMasks> {
        let (s1, s2) = crate::grid::crop_start(crate::Dims::new_2d(self.pe1(), self.pe2()), pe1, pe2)?;
        let (r1, r2) = self.accel;
        let offsets = (
            (self.offsets.0 % r1 + r1 - s1 % r1) % r1,
            (self.offsets.1 % r2 + r2 - s2 % r2) % r2,
        );
        Ok(SamplingMasks {
            m_sampled: self.m_sampled.crop_center(pe1, pe2)?,
            m_pattern: self.m_pattern.crop_center(pe1, pe2)?,
            m_acs: self.m_acs.crop_center(pe1, pe2)?,
            accel: self.accel,
            acs_size: (self.acs_size.0.min(pe1), self.acs_size.1.min(pe2)),
            offsets,
        })
    }
}

#[inline]
pub(crate) fn cell_offset(i: usize, j: usize, accel: (usize, usize), offsets: (usize, usize)) -> (usize, usize) {
    let (r1, r2) = accel;
    ((i + r1 - offsets.0 % r1) % r1, (j + r2 - offsets.1 % r2) % r2)
}

/// Builds the regular pattern `{(i, j) : i mod R1 = o1, j mod R2 = o2}`, a centered
/// `a1 x a2` ACS block, and their union. An ACS size of zero means no ACS.
pub fn make_masks(params: MaskParams) -> Result<SamplingMasks> {
    let MaskParams { shape: (n1, n2), accel: (r1, r2), acs: (a1, a2), offsets } = params;
    if n1 == 0 || n2 == 0 {
        return Err(Error::Dimension(format!("mask extents must be positive, got {n1}x{n2}")));
    }
    if r1 == 0 || r2 == 0 {
        return Err(Error::Spec(format!("acceleration factors must be >= 1, got {r1}x{r2}")));
    }
    if a1 > n1 || a2 > n2 {
        return Err(Error::Dimension(format!("ACS block {a1}x{a2} does not fit in {n1}x{n2}")));
    }
    if (a1 == 0) != (a2 == 0) {
        return Err(Error::Spec(format!("ACS block {a1}x{a2} must be empty in both directions or neither")));
    }
    let offsets = (offsets.0 % r1, offsets.1 % r2);
    let m_pattern = Mask::from_fn(n1, n2, |i, j| i % r1 == offsets.0 && j % r2 == offsets.1);
    let m_acs = if a1 == 0 {
        Mask::zeros(n1, n2)
    } else {
        let (s1, s2) = crate::grid::crop_start(crate::Dims::new_2d(n1, n2), a1, a2)?;
        Mask::from_fn(n1, n2, |i, j| (s1..s1 + a1).contains(&i) && (s2..s2 + a2).contains(&j))
    };
    let m_sampled = m_pattern.union(&m_acs)?;
    Ok(SamplingMasks { m_sampled, m_pattern, m_acs, accel: (r1, r2), acs_size: (a1, a2), offsets })
}
