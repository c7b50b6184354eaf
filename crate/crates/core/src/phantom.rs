//! Synthetic ground truth: piecewise-constant phantoms, smooth coil
//! sensitivities, the multi-coil forward model and k-space noise injection.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft::dft_forward;
use crate::grid::{ComplexGrid, Dims, Domain, RealGrid};
use crate::mask::Mask;

/// Circular insert inside a disk phantom. `center` is relative to the grid center, in pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Insert {
    pub center: (f64, f64),
    pub radius: f64,
    pub intensity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PhantomKind {
    /// Uniform disk with optional circular inserts; `edge` is the width of a raised-cosine rim.
    DiskPhantom {
        radius: f64,
        intensity: f64,
        #[serde(default)]
        edge: f64,
        #[serde(default)]
        inserts: Vec<Insert>,
    },
    /// Disk holding groups of three bars; group `k` uses bar width `bar_widths[k]`.
    ResolutionBars {
        radius: f64,
        intensity: f64,
        bar_widths: Vec<f64>,
        bar_intensity: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub shape: (usize, usize),
    #[serde(flatten)]
    pub kind: PhantomKind,
}

impl PhantomSpec {
    pub fn disk(shape: (usize, usize), radius: f64, intensity: f64) -> Self {
        PhantomSpec { shape, kind: PhantomKind::DiskPhantom { radius, intensity, edge: 0.0, inserts: Vec::new() } }
    }

    pub fn validate(&self) -> Result<()> {
        let (n1, n2) = self.shape;
        if n1 == 0 || n2 == 0 {
            return Err(Error::Spec(format!("phantom extents must be positive, got {n1}x{n2}")));
        }
        let max_radius = 0.5 * ((n1 * n1 + n2 * n2) as f64).sqrt() + 1.0;
        let check_radius = |r: f64, what: &str| {
            if !(r.is_finite() && r >= 0.0 && r <= max_radius) {
                return Err(Error::Spec(format!("{what} radius {r} must lie in [0, {max_radius:.1}]")));
            }
            Ok(())
        };
        let check_intensity = |v: f64, what: &str| {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Spec(format!("{what} intensity {v} must be finite and >= 0")));
            }
            Ok(())
        };
        match &self.kind {
            PhantomKind::DiskPhantom { radius, intensity, edge, inserts } => {
                check_radius(*radius, "disk")?;
                check_intensity(*intensity, "disk")?;
                if !(edge.is_finite() && *edge >= 0.0) {
                    return Err(Error::Spec(format!("edge width {edge} must be >= 0")));
                }
                for ins in inserts {
                    check_radius(ins.radius, "insert")?;
                    check_intensity(ins.intensity, "insert")?;
                    let reach = ins.center.0.hypot(ins.center.1) + ins.radius;
                    if reach > *radius {
                        return Err(Error::Spec(format!("insert at {:?} leaves the disk", ins.center)));
                    }
                }
            }
            PhantomKind::ResolutionBars { radius, intensity, bar_widths, bar_intensity } => {
                check_radius(*radius, "disk")?;
                check_intensity(*intensity, "disk")?;
                check_intensity(*bar_intensity, "bar")?;
                if bar_widths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::Spec("bar widths must be positive".into()));
                }
                let span: f64 = bar_widths.iter().map(|w| 6.0 * w).sum();
                if span > *radius {
                    return Err(Error::Spec(format!("bar groups span {span} pixels, more than the radius {radius}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub image: RealGrid,
    pub support: Mask,
}

/// Pixel-center coordinates relative to the grid center `n / 2`.
#[inline]
fn coords(i: usize, j: usize, n1: usize, n2: usize) -> (f64, f64) {
    (i as f64 - (n1 / 2) as f64, j as f64 - (n2 / 2) as f64)
}

/// 1 inside `radius - edge`, 0 beyond `radius`, raised cosine in between.
fn taper(d: f64, radius: f64, edge: f64) -> f64 {
    if d > radius {
        0.0
    } else if edge <= 0.0 || d <= radius - edge {
        1.0
    } else {
        0.5 * (1.0 + (PI * (d - (radius - edge)) / edge).cos())
    }
}

pub fn make_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let (n1, n2) = spec.shape;
    let dims = Dims::new_2d(n1, n2);
    let (radius, intensity) = match &spec.kind {
        PhantomKind::DiskPhantom { radius, intensity, .. } | PhantomKind::ResolutionBars { radius, intensity, .. } => {
            (*radius, *intensity)
        }
    };
    let support = Mask::from_fn(n1, n2, |i, j| {
        let (x, y) = coords(i, j, n1, n2);
        x.hypot(y) <= radius
    });
    let mut data = vec![0.0; dims.len()];
    for i in 0..n1 {
        for j in 0..n2 {
            let (x, y) = coords(i, j, n1, n2);
            let d = x.hypot(y);
            let value = match &spec.kind {
                PhantomKind::DiskPhantom { edge, inserts, .. } => {
                    let mut v = intensity * taper(d, radius, *edge);
                    for ins in inserts {
                        let di = (x - ins.center.0).hypot(y - ins.center.1);
                        v += (ins.intensity - v) * taper(di, ins.radius, *edge);
                    }
                    v
                }
                PhantomKind::ResolutionBars { bar_widths, bar_intensity, .. } => {
                    if d > radius {
                        0.0
                    } else if in_bar(x, y, radius, bar_widths) {
                        *bar_intensity
                    } else {
                        intensity
                    }
                }
            };
            data[i * n2 + j] = value;
        }
    }
    Ok(Phantom { image: RealGrid::from_vec(dims, data)?, support })
}

fn in_bar(x: f64, y: f64, radius: f64, widths: &[f64]) -> bool {
    let half_height = radius / 3.0;
    if x.abs() > half_height {
        return false;
    }
    let total: f64 = widths.iter().map(|w| 6.0 * w).sum();
    let mut start = -total / 2.0;
    for &w in widths {
        let local = y - start;
        if (0.0..6.0 * w).contains(&local) && ((local / w).floor() as i64) % 2 == 0 {
            return true;
        }
        start += 6.0 * w;
    }
    false
}

/// Upper bound on any single-axis forward difference of a generated map, times the
/// smaller grid extent.
pub const COIL_SMOOTHNESS: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoilOptions {
    pub n_coils: usize,
    pub seed: u64,
    /// All sensitivities identically one.
    #[serde(default)]
    pub uniform: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoilProfile {
    pub maps: ComplexGrid,
}

impl CoilProfile {
    pub fn n_coils(&self) -> usize {
        self.maps.channels()
    }

    /// `sqrt(sum_c |s_c|^2 / C)` at every pixel.
    pub fn rms(&self) -> RealGrid {
        crate::grid::rms_combine(&self.maps).expect("coil maps are image-domain")
    }
}

/// Complex Gaussian sensitivities centered on a ring at 1.1x the grid radius,
/// each with a random global phase and linear phase ramp. Maps are constant
/// along FE.
pub fn make_coils(dims: Dims, opts: CoilOptions) -> Result<CoilProfile> {
    dims.validate()?;
    if opts.n_coils == 0 {
        return Err(Error::Spec("at least one coil is required".into()));
    }
    let c_count = opts.n_coils;
    let n = dims.len();
    if opts.uniform {
        let maps = ComplexGrid::from_vec(c_count, dims, Domain::Image, vec![Complex64::new(1.0, 0.0); c_count * n])?;
        return Ok(CoilProfile { maps });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let grid_radius = 0.5 * dims.pe1.max(dims.pe2) as f64;
    let ring = 1.1 * grid_radius;
    let width = 0.8 * grid_radius;
    let max_slope_1 = 2.0 * PI / dims.pe1 as f64;
    let max_slope_2 = 2.0 * PI / dims.pe2 as f64;
    let mut data = Vec::with_capacity(c_count * n);
    for c in 0..c_count {
        let angle = 2.0 * PI * (c as f64 + rng.random_range(-0.1..0.1)) / c_count as f64;
        let (cx, cy) = (ring * angle.cos(), ring * angle.sin());
        let phase0 = rng.random_range(0.0..2.0 * PI);
        let k1 = rng.random_range(-max_slope_1..max_slope_1);
        let k2 = rng.random_range(-max_slope_2..max_slope_2);
        let mut plane = Vec::with_capacity(dims.plane());
        for i in 0..dims.pe1 {
            for j in 0..dims.pe2 {
                let (x, y) = coords(i, j, dims.pe1, dims.pe2);
                let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                let mag = (-r2 / (2.0 * width * width)).exp();
                plane.push(Complex64::from_polar(mag, phase0 + k1 * x + k2 * y));
            }
        }
        for _ in 0..dims.fe {
            data.extend_from_slice(&plane);
        }
    }
    Ok(CoilProfile { maps: ComplexGrid::from_vec(c_count, dims, Domain::Image, data)? })
}

/// Per-coil image `phantom * s_c`, transformed to k-space.
pub fn simulate_kspace(phantom: &RealGrid, coils: &CoilProfile) -> Result<ComplexGrid> {
    let dims = coils.maps.dims();
    if phantom.dims() != dims {
        return Err(Error::Dimension(format!("phantom {:?} vs coil maps {:?}", phantom.dims(), dims)));
    }
    let n = dims.len();
    let data = coils.maps.data().iter().enumerate().map(|(idx, s)| s * phantom.data()[idx % n]).collect();
    let images = ComplexGrid::from_vec(coils.n_coils(), dims, Domain::Image, data)?;
    dft_forward(&images)
}

/// Adds i.i.d. complex Gaussian noise (std `sigma` per component) where `m` is on.
///
/// A full-grid stream of draws is consumed in storage order regardless of the
/// mask, so the same seed yields the same noise at any position for every mask.
pub fn add_noise(kspace: &ComplexGrid, m: &Mask, sigma: f64, seed: u64) -> Result<ComplexGrid> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Spec(format!("noise sigma must be finite and >= 0, got {sigma}")));
    }
    let dims = kspace.dims();
    if m.pe1() != dims.pe1 || m.pe2() != dims.pe2 {
        return Err(Error::Dimension(format!("mask {}x{} vs grid {:?}", m.pe1(), m.pe2(), dims)));
    }
    let mut out = kspace.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let plane = dims.plane();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (idx, z) in out.data_mut().iter_mut().enumerate() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        if m.bits()[idx % plane] {
            *z += Complex64::new(sigma * re, sigma * im);
        }
    }
    Ok(out)
}
