//! The seeded desk-scale benchmark: a 64x64 disk phantom with inserts, 8 coils,
//! `(2, 2)` acceleration and a 24x24 ACS block.
//!
//! Clean k-space is scaled so the largest sampled magnitude is 1, then noise of
//! std `sigma` per component is added at the sampled positions.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{apply_mask, normalize, reconstruct_image, ComplexGrid, Dims, RealGrid};
use crate::mask::{make_masks, Mask, MaskParams, SamplingMasks};
use crate::phantom::{add_noise, make_coils, make_phantom, simulate_kspace, CoilOptions, Insert, PhantomKind, PhantomSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub phantom: PhantomSpec,
    pub coils: CoilOptions,
    pub masks: MaskParams,
    pub sigma: f64,
    pub noise_seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            phantom: benchmark_phantom(64),
            coils: CoilOptions { n_coils: 8, seed: 7, uniform: false },
            masks: MaskParams { shape: (64, 64), accel: (2, 2), acs: (24, 24), offsets: (0, 0) },
            sigma: 0.05,
            noise_seed: 1234,
        }
    }
}

/// Disk of radius `0.35 n` with four circular inserts and a soft rim.
pub fn benchmark_phantom(n: usize) -> PhantomSpec {
    let s = n as f64 / 64.0;
    let ins = |c0: f64, c1: f64, r: f64, v: f64| Insert { center: (c0 * s, c1 * s), radius: r * s, intensity: v };
    PhantomSpec {
        shape: (n, n),
        kind: PhantomKind::DiskPhantom {
            radius: 22.4 * s,
            intensity: 1.0,
            edge: 1.5 * s,
            inserts: vec![
                ins(-8.0, -7.0, 5.0, 0.4),
                ins(-8.0, 8.0, 4.0, 1.6),
                ins(8.0, -6.0, 3.0, 0.0),
                ins(9.0, 7.0, 6.0, 0.7),
            ],
        },
    }
}

#[derive(Clone, Debug)]
pub struct Benchmark {
    pub config: BenchmarkConfig,
    pub masks: SamplingMasks,
    pub support: Mask,
    /// Normalized noiseless k-space on the full grid.
    pub clean: ComplexGrid,
    /// `clean` plus noise at every grid position, from `noise_seed`.
    pub noisy_full: ComplexGrid,
    /// `noisy_full` restricted to the sampled positions.
    pub acquired: ComplexGrid,
    /// Coil-combined image of `clean`.
    pub reference: RealGrid,
}

impl Benchmark {
    pub fn build(config: BenchmarkConfig) -> Result<Benchmark> {
        let phantom = make_phantom(&config.phantom)?;
        let dims = phantom.image.dims();
        let coils = make_coils(dims, config.coils)?;
        let masks = make_masks(config.masks)?;
        let raw = simulate_kspace(&phantom.image, &coils)?;
        let (clean, _) = normalize(&raw, &masks.m_sampled)?;
        let everywhere = Mask::ones(dims.pe1, dims.pe2);
        let noisy_full = add_noise(&clean, &everywhere, config.sigma, config.noise_seed)?;
        let acquired = apply_mask(&noisy_full, &masks.m_sampled)?;
        let reference = reconstruct_image(&clean)?;
        Ok(Benchmark { config, masks, support: phantom.support, clean, noisy_full, acquired, reference })
    }

    /// Noiseless acquisition.
    pub fn acquired_clean(&self) -> Result<ComplexGrid> {
        apply_mask(&self.clean, &self.masks.m_sampled)
    }

    pub fn dims(&self) -> Dims {
        self.clean.dims()
    }

    /// Image MSE against the clean reference over the phantom support.
    pub fn mse(&self, image: &RealGrid) -> Result<f64> {
        crate::grid::mse(image, &self.reference, Some(&self.support))
    }
}
