//! Pseudo multiple replica noise maps and the method comparison report.
//!
//! Replica `r` adds a full-grid noise draw with seed `base_seed + r` to the
//! fully sampled base k-space. The method sees that data at the sampled
//! positions; the reference is the fully sampled reconstruction of the same
//! draw. The per-pixel std ratio between the two is the amplification.
//! GRAPPA kernels are calibrated once on the base data, so the GRAPPA map is
//! that of a fixed linear operator. APIR-Net retrains on every replica.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use crate::apirnet::{apirnet_reconstruct, ArchitectureSpec, LevelSchedule, TrainOptions};
use crate::error::{Error, Result};
use crate::grappa::{apply_kernel, calibrate, GrappaKernel, KernelGeometry};
use crate::grid::{apply_mask, reconstruct_image, ComplexGrid, RealGrid};
use crate::mask::{Mask, SamplingMasks};
use crate::par;
use crate::phantom::add_noise;
use crate::pgm;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    ZeroFilled,
    Grappa {
        #[serde(default)]
        geometry: KernelGeometry,
        lambda: f64,
    },
    Apirnet {
        arch: ArchitectureSpec,
        schedule: LevelSchedule,
        options: TrainOptions,
    },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::ZeroFilled => "zero-filled".into(),
            Method::Grappa { lambda, .. } => format!("grappa(lambda={lambda})"),
            Method::Apirnet { .. } => "apirnet".into(),
        }
    }
}

/// A method with everything fixed that does not depend on the replica noise.
enum Prepared<'a> {
    ZeroFilled,
    Grappa(GrappaKernel),
    Apirnet(&'a ArchitectureSpec, &'a LevelSchedule, TrainOptions),
}

impl<'a> Prepared<'a> {
    fn new(method: &'a Method, base: &ComplexGrid, masks: &SamplingMasks) -> Result<Self> {
        Ok(match method {
            Method::ZeroFilled => Prepared::ZeroFilled,
            Method::Grappa { geometry, lambda } => {
                Prepared::Grappa(calibrate(&apply_mask(base, &masks.m_sampled)?, masks, *geometry, *lambda)?)
            }
            Method::Apirnet { arch, schedule, options } => Prepared::Apirnet(arch, schedule, *options),
        })
    }

    fn reconstruct(&self, kspace: &ComplexGrid, masks: &SamplingMasks) -> Result<RealGrid> {
        match self {
            Prepared::ZeroFilled => reconstruct_image(&apply_mask(kspace, &masks.m_sampled)?),
            Prepared::Grappa(kernel) => Ok(apply_kernel(kspace, masks, kernel)?.1),
            Prepared::Apirnet(arch, schedule, options) => {
                Ok(apirnet_reconstruct(kspace, masks, arch, schedule, *options)?.1)
            }
        }
    }
}

/// Reconstructs `kspace` (only its sampled positions are used) with `method`.
pub fn reconstruct(method: &Method, kspace: &ComplexGrid, masks: &SamplingMasks) -> Result<RealGrid> {
    Prepared::new(method, kspace, masks)?.reconstruct(kspace, masks)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaConfig {
    pub n_replicas: usize,
    pub sigma: f64,
    pub base_seed: u64,
    pub method: Method,
}

impl ReplicaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_replicas < 2 {
            return Err(Error::Spec(format!("at least 2 replicas are needed, got {}", self.n_replicas)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Spec(format!("replica sigma must be > 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Welford accumulator of per-element mean and variance.
#[derive(Clone, Debug)]
pub struct RunningStats {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningStats {
    pub fn new(len: usize) -> Self {
        RunningStats { n: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.mean.len(), "sample length");
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Sample standard deviation (divisor `n - 1`); zero below two samples.
    pub fn std(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![0.0; self.mean.len()];
        }
        let d = (self.n - 1) as f64;
        self.m2.iter().map(|s| (s.max(0.0) / d).sqrt()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseMap {
    pub std: RealGrid,
    pub reference_std: RealGrid,
    /// `std / reference_std`, zero where the reference does not vary.
    pub amplification: RealGrid,
    pub mean: RealGrid,
    pub n_replicas: usize,
}

impl NoiseMap {
    pub fn mean_amplification(&self, region: Option<&Mask>) -> Result<f64> {
        self.amplification.mean(region)
    }
}

/// Per-replica `(method image, reference image)` pairs in replica order.
fn replica_images(base: &ComplexGrid, masks: &SamplingMasks, cfg: &ReplicaConfig) -> Result<Vec<(RealGrid, RealGrid)>> {
    cfg.validate()?;
    let prepared = Prepared::new(&cfg.method, base, masks)?;
    let everywhere = Mask::ones(masks.pe1(), masks.pe2());
    par::try_map_range(cfg.n_replicas, |r| {
        let wrap = |source: Error| Error::Replica { index: r, source: Box::new(source) };
        let noisy = add_noise(base, &everywhere, cfg.sigma, cfg.base_seed.wrapping_add(r as u64)).map_err(wrap)?;
        let image = prepared.reconstruct(&noisy, masks).map_err(wrap)?;
        let reference = reconstruct_image(&noisy).map_err(wrap)?;
        Ok((image, reference))
    })
}

/// Accumulates replica images in the given order.
fn accumulate<'a>(images: impl Iterator<Item = &'a (RealGrid, RealGrid)>, n: usize) -> Result<NoiseMap> {
    let mut images = images.peekable();
    let dims = images.peek().ok_or_else(|| Error::Degenerate("no replicas".into()))?.0.dims();
    let mut method = RunningStats::new(dims.len());
    let mut reference = RunningStats::new(dims.len());
    for (img, r) in images {
        method.push(img.data());
        reference.push(r.data());
    }
    let std = method.std();
    let ref_std = reference.std();
    let amp = std.iter().zip(&ref_std).map(|(&s, &r)| if r > 0.0 { s / r } else { 0.0 }).collect();
    Ok(NoiseMap {
        std: RealGrid::from_vec(dims, std)?,
        reference_std: RealGrid::from_vec(dims, ref_std)?,
        amplification: RealGrid::from_vec(dims, amp)?,
        mean: RealGrid::from_vec(dims, method.mean().to_vec())?,
        n_replicas: n,
    })
}

/// Noise map of `cfg.method` around the fully sampled `base` k-space.
pub fn run_replicas(base: &ComplexGrid, masks: &SamplingMasks, cfg: &ReplicaConfig) -> Result<NoiseMap> {
    let images = replica_images(base, masks, cfg)?;
    accumulate(images.iter(), cfg.n_replicas)
}

/// Shared inputs of a comparison: the fully sampled base data, the masks and the
/// image the reconstructions are scored against.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub base: ComplexGrid,
    pub masks: SamplingMasks,
    pub reference: RealGrid,
    pub region: Option<Mask>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedMethod {
    pub name: String,
    #[serde(flatten)]
    pub method: Method,
    /// Replica count for this method; falls back to the report default.
    #[serde(default)]
    pub replicas: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub name: String,
    pub method: Method,
    pub mse: f64,
    pub mean_amplification: Option<f64>,
    pub max_amplification: Option<f64>,
    pub n_replicas: usize,
    /// Windows used for the written images, as `[min, max]`.
    pub image_window: (f64, f64),
    pub error_window: (f64, f64),
    pub noise_window: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub sigma: f64,
    pub base_seed: u64,
    pub error_gain: f64,
    pub rows: Vec<MethodRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodOutput {
    pub image: RealGrid,
    pub error: RealGrid,
    pub noise: Option<NoiseMap>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub sigma: f64,
    pub base_seed: u64,
    /// Default replica count; zero skips the noise maps.
    pub replicas: usize,
    /// Display gain of the error images.
    pub error_gain: f64,
}

/// Reconstructs the base acquisition with every method, scores it against the
/// reference and, when replicas are requested, computes its noise map.
pub fn compare_methods(data: &Dataset, methods: &[NamedMethod], cfg: &CompareConfig) -> Result<(Report, Vec<MethodOutput>)> {
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    let (lo, hi) = data.reference.min_max();
    for m in methods {
        let image = reconstruct(&m.method, &data.base, &data.masks)?;
        let mse = crate::grid::mse(&image, &data.reference, data.region.as_ref())?;
        let error = image.abs_diff(&data.reference)?;
        let n = m.replicas.unwrap_or(cfg.replicas);
        let noise = if n >= 2 {
            let rc = ReplicaConfig { n_replicas: n, sigma: cfg.sigma, base_seed: cfg.base_seed, method: m.method.clone() };
            Some(run_replicas(&data.base, &data.masks, &rc)?)
        } else {
            None
        };
        let (mean_amp, max_amp, noise_window) = match &noise {
            Some(map) => {
                let mean = map.mean_amplification(data.region.as_ref())?;
                let max = masked_max(&map.amplification, data.region.as_ref());
                (Some(mean), Some(max), Some((0.0, max)))
            }
            None => (None, None, None),
        };
        rows.push(MethodRow {
            name: m.name.clone(),
            method: m.method.clone(),
            mse,
            mean_amplification: mean_amp,
            max_amplification: max_amp,
            n_replicas: if noise.is_some() { n } else { 0 },
            image_window: (lo, hi),
            error_window: (0.0, (hi - lo) / cfg.error_gain),
            noise_window,
        });
        outputs.push(MethodOutput { image, error, noise });
    }
    Ok((Report { sigma: cfg.sigma, base_seed: cfg.base_seed, error_gain: cfg.error_gain, rows }, outputs))
}

fn masked_max(g: &RealGrid, region: Option<&Mask>) -> f64 {
    let plane = g.dims().plane();
    g.data()
        .iter()
        .enumerate()
        .filter(|(k, _)| region.is_none_or(|m| m.bits()[k % plane]))
        .map(|(_, &v)| v)
        .fold(0.0, f64::max)
}

/// Writes `report.json` and, per method, `<name>_image.pgm`, `<name>_error.pgm` and
/// `<name>_noise.pgm` into `dir`.
pub fn write_report(dir: &Path, report: &Report, outputs: &[MethodOutput]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (row, out) in report.rows.iter().zip(outputs) {
        let stem: String =
            row.name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
        pgm::write_pgm(&dir.join(format!("{stem}_image.pgm")), &out.image, 0, row.image_window.0, row.image_window.1)?;
        pgm::write_pgm(&dir.join(format!("{stem}_error.pgm")), &out.error, 0, row.error_window.0, row.error_window.1)?;
        if let (Some(map), Some((lo, hi))) = (&out.noise, row.noise_window) {
            pgm::write_pgm(&dir.join(format!("{stem}_noise.pgm")), &map.amplification, 0, lo, hi)?;
        }
    }
    let path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::format(&path, e))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}
