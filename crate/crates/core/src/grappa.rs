//! GRAPPA: linear k-space interpolation with kernels fitted on the ACS block.
//!
//! Every unsampled lattice cell offset `d = (d1, d2)` gets its own weight set
//! mapping the `C * k_fe * k_pe1 * k_pe2` pattern-lattice neighbours of a
//! target to its `C` coil values. Weights solve the ridge problem
//! `min ||A w - b||^2 + lambda ||w||^2` through `(A^H A + lambda I) w = A^H b`.
//! Calibration never wraps; prediction wraps periodically.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{apply_mask, crop_start, reconstruct_image, ComplexGrid, Domain, RealGrid};
use crate::linalg::{cholesky_solve, normal_equations, CMatrix};
use crate::mask::SamplingMasks;
use crate::par;

/// Kernel extents in lattice points: `fe` along frequency encode (odd, unit
/// spacing), `pe1`/`pe2` along the phase-encode lattice (spacing `R`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelGeometry {
    pub fe: usize,
    pub pe1: usize,
    pub pe2: usize,
}

impl Default for KernelGeometry {
    fn default() -> Self {
        KernelGeometry { fe: 1, pe1: 5, pe2: 5 }
    }
}

impl KernelGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.fe == 0 || self.pe1 == 0 || self.pe2 == 0 {
            return Err(Error::Spec(format!("kernel extents must be positive, got {self:?}")));
        }
        if self.fe % 2 == 0 {
            return Err(Error::Spec(format!("FE kernel extent must be odd, got {}", self.fe)));
        }
        Ok(())
    }

    pub fn points(&self) -> usize {
        self.fe * self.pe1 * self.pe2
    }

    /// Source displacements `(dfe, dpe1, dpe2)` from a target in lattice cell `cell`,
    /// ordered fe-major, then pe1, then pe2.
    pub fn source_offsets(&self, accel: (usize, usize), cell: (usize, usize)) -> Vec<(isize, isize, isize)> {
        let (r1, r2) = (accel.0 as isize, accel.1 as isize);
        let hf = (self.fe / 2) as isize;
        let h1 = ((self.pe1 - 1) / 2) as isize;
        let h2 = ((self.pe2 - 1) / 2) as isize;
        let mut out = Vec::with_capacity(self.points());
        for q in 0..self.fe as isize {
            for p in 0..self.pe1 as isize {
                for s in 0..self.pe2 as isize {
                    out.push((q - hf, -(cell.0 as isize) + r1 * (p - h1), -(cell.1 as isize) + r2 * (s - h2)));
                }
            }
        }
        out
    }
}

/// Weights for one lattice cell offset: `C` rows (target coils) by `C * points` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct OffsetWeights {
    pub cell: (usize, usize),
    pub weights: CMatrix,
    /// `||A w - b||^2 / ||b||^2` on the calibration rows.
    pub fit_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrappaKernel {
    pub accel: (usize, usize),
    pub pattern_offsets: (usize, usize),
    pub geometry: KernelGeometry,
    pub lambda: f64,
    pub channels: usize,
    pub offsets: Vec<OffsetWeights>,
}

impl GrappaKernel {
    pub fn weight_norm(&self) -> f64 {
        self.offsets
            .iter()
            .flat_map(|o| o.weights.data.iter())
            .map(|w| w.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    fn weights_for(&self, cell: (usize, usize)) -> Option<&OffsetWeights> {
        self.offsets.iter().find(|o| o.cell == cell)
    }
}

/// Unsampled cell offsets of an `R1 x R2` lattice, in row-major order.
pub fn target_cells(accel: (usize, usize)) -> Vec<(usize, usize)> {
    (0..accel.0)
        .flat_map(|d1| (0..accel.1).map(move |d2| (d1, d2)))
        .filter(|&c| c != (0, 0))
        .collect()
}

fn check_inputs(kspace: &ComplexGrid, masks: &SamplingMasks) -> Result<()> {
    kspace.expect_domain(Domain::Kspace)?;
    let dims = kspace.dims();
    if masks.pe1() != dims.pe1 || masks.pe2() != dims.pe2 {
        return Err(Error::Dimension(format!(
            "masks {}x{} vs k-space {}x{}",
            masks.pe1(),
            masks.pe2(),
            dims.pe1,
            dims.pe2
        )));
    }
    Ok(())
}

/// Smallest ACS block that yields at least one fitting row for every cell offset.
pub fn min_acs(geometry: &KernelGeometry, accel: (usize, usize)) -> (usize, usize) {
    let mut need = (1usize, 1usize);
    for cell in target_cells(accel) {
        let offs = geometry.source_offsets(accel, cell);
        let lo1 = offs.iter().map(|o| o.1).min().unwrap_or(0).min(0);
        let hi1 = offs.iter().map(|o| o.1).max().unwrap_or(0).max(0);
        let lo2 = offs.iter().map(|o| o.2).min().unwrap_or(0).min(0);
        let hi2 = offs.iter().map(|o| o.2).max().unwrap_or(0).max(0);
        need.0 = need.0.max((hi1 - lo1 + 1) as usize);
        need.1 = need.1.max((hi2 - lo2 + 1) as usize);
    }
    need
}

/// Calibration rows for one cell offset: every ACS target whose sources all lie
/// inside the grid (no wrap) on sampled positions. Pattern-lattice neighbours
/// outside the ACS block count as measured.
pub fn calibration_system(
    kspace: &ComplexGrid,
    masks: &SamplingMasks,
    geometry: &KernelGeometry,
    cell: (usize, usize),
) -> Result<(CMatrix, CMatrix)> {
    check_inputs(kspace, masks)?;
    geometry.validate()?;
    let dims = kspace.dims();
    let channels = kspace.channels();
    let offs = geometry.source_offsets(masks.accel, cell);
    let (a1, a2) = masks.acs_size;
    let (m1, m2) = min_acs(geometry, masks.accel);
    let insufficient = || Error::InsufficientAcs { min_pe1: m1, min_pe2: m2, have_pe1: a1, have_pe2: a2 };
    if a1 < m1 || a2 < m2 {
        return Err(insufficient());
    }
    let (s1, s2) = crop_start(dims, a1, a2)?;
    let inside = |v: isize, len: usize| v >= 0 && v < len as isize;
    let mut targets = Vec::new();
    for f in 0..dims.fe {
        for i in s1..s1 + a1 {
            for j in s2..s2 + a2 {
                let ok = offs.iter().all(|&(df, di, dj)| {
                    let (sf, si, sj) = (f as isize + df, i as isize + di, j as isize + dj);
                    inside(sf, dims.fe)
                        && inside(si, dims.pe1)
                        && inside(sj, dims.pe2)
                        && masks.m_sampled.get(si as usize, sj as usize)
                });
                if ok {
                    targets.push((f, i, j));
                }
            }
        }
    }
    if targets.is_empty() {
        return Err(insufficient());
    }
    let n_src = channels * offs.len();
    let mut a = CMatrix::zeros(targets.len(), n_src);
    let mut b = CMatrix::zeros(targets.len(), channels);
    for (r, &(f, i, j)) in targets.iter().enumerate() {
        for c in 0..channels {
            for (k, &(df, di, dj)) in offs.iter().enumerate() {
                let v = kspace.get(c, (f as isize + df) as usize, (i as isize + di) as usize, (j as isize + dj) as usize);
                *a.at_mut(r, c * offs.len() + k) = v;
            }
            *b.at_mut(r, c) = kspace.get(c, f, i, j);
        }
    }
    Ok((a, b))
}

/// Fits one weight set per unsampled cell offset on the ACS block.
pub fn calibrate(
    kspace: &ComplexGrid,
    masks: &SamplingMasks,
    geometry: KernelGeometry,
    lambda: f64,
) -> Result<GrappaKernel> {
    check_inputs(kspace, masks)?;
    geometry.validate()?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Spec(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let cells = target_cells(masks.accel);
    let channels = kspace.channels();
    let offsets = par::try_map_range(cells.len(), |k| {
        let cell = cells[k];
        let (a, b) = calibration_system(kspace, masks, &geometry, cell)?;
        if lambda == 0.0 && a.rows < a.cols {
            return Err(Error::RankDeficient { column: a.rows, pivot: 0.0 });
        }
        let (gram, rhs) = normal_equations(&a, &b, lambda);
        let x = cholesky_solve(&gram, &rhs)?;
        let fit_residual = relative_residual(&a, &b, &x);
        // solution is (sources x targets); store targets x sources
        let mut weights = CMatrix::zeros(channels, a.cols);
        for t in 0..channels {
            for s in 0..a.cols {
                *weights.at_mut(t, s) = x.at(s, t);
            }
        }
        Ok(OffsetWeights { cell, weights, fit_residual })
    })?;
    Ok(GrappaKernel {
        accel: masks.accel,
        pattern_offsets: masks.offsets,
        geometry,
        lambda,
        channels,
        offsets,
    })
}

fn relative_residual(a: &CMatrix, b: &CMatrix, x: &CMatrix) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for r in 0..a.rows {
        let arow = a.row(r);
        for t in 0..b.cols {
            let mut pred = Complex64::new(0.0, 0.0);
            for (s, av) in arow.iter().enumerate() {
                pred += av * x.at(s, t);
            }
            num += (pred - b.at(r, t)).norm_sqr();
            den += b.at(r, t).norm_sqr();
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Applies the kernel to the pattern-masked data. Every non-pattern position gets its
/// prediction; pattern positions keep the input value. Sources wrap periodically.
pub fn predict(kspace: &ComplexGrid, masks: &SamplingMasks, kernel: &GrappaKernel) -> Result<ComplexGrid> {
    check_inputs(kspace, masks)?;
    if kernel.accel != masks.accel || kernel.pattern_offsets.0 % masks.accel.0 != masks.offsets.0 % masks.accel.0
        || kernel.pattern_offsets.1 % masks.accel.1 != masks.offsets.1 % masks.accel.1
    {
        return Err(Error::Dimension(format!(
            "kernel lattice {:?}+{:?} does not match masks {:?}+{:?}",
            kernel.accel, kernel.pattern_offsets, masks.accel, masks.offsets
        )));
    }
    if kernel.channels != kspace.channels() {
        return Err(Error::Dimension(format!(
            "kernel fitted for {} channels, data has {}",
            kernel.channels,
            kspace.channels()
        )));
    }
    let dims = kspace.dims();
    let channels = kspace.channels();
    let source = apply_mask(kspace, &masks.m_pattern)?;
    let tables: Vec<_> = target_cells(masks.accel)
        .into_iter()
        .map(|cell| {
            let w = kernel
                .weights_for(cell)
                .ok_or_else(|| Error::Dimension(format!("kernel has no weights for cell {cell:?}")))?;
            Ok((cell, kernel.geometry.source_offsets(masks.accel, cell), w))
        })
        .collect::<Result<_>>()?;
    let wrap = |v: isize, n: usize| v.rem_euclid(n as isize) as usize;
    // one (fe, pe1) row per task: C x pe2 values
    let rows = par::map_range(dims.fe * dims.pe1, |row| {
        let (f, i) = (row / dims.pe1, row % dims.pe1);
        let mut out = vec![Complex64::new(0.0, 0.0); channels * dims.pe2];
        let mut src = Vec::new();
        for j in 0..dims.pe2 {
            let cell = masks.cell_offset(i, j);
            if cell == (0, 0) {
                for c in 0..channels {
                    out[c * dims.pe2 + j] = source.get(c, f, i, j);
                }
                continue;
            }
            let (_, offs, w) = tables.iter().find(|t| t.0 == cell).expect("all cells tabulated");
            src.clear();
            for c in 0..channels {
                for &(df, di, dj) in offs.iter() {
                    src.push(source.get(
                        c,
                        wrap(f as isize + df, dims.fe),
                        wrap(i as isize + di, dims.pe1),
                        wrap(j as isize + dj, dims.pe2),
                    ));
                }
            }
            for t in 0..channels {
                let acc = w.weights.row(t).iter().zip(&src).fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a * b);
                out[t * dims.pe2 + j] = acc;
            }
        }
        out
    });
    let mut data = vec![Complex64::new(0.0, 0.0); kspace.data().len()];
    for (row, values) in rows.into_iter().enumerate() {
        let (f, i) = (row / dims.pe1, row % dims.pe1);
        for c in 0..channels {
            let start = c * dims.len() + dims.index(f, i, 0);
            data[start..start + dims.pe2].copy_from_slice(&values[c * dims.pe2..(c + 1) * dims.pe2]);
        }
    }
    Ok(ComplexGrid::from_parts_unchecked(channels, dims, Domain::Kspace, data))
}

/// `S o M_sampled + S_predicted o (1 - M_sampled)`.
pub fn merge(kspace: &ComplexGrid, predicted: &ComplexGrid, masks: &SamplingMasks) -> Result<ComplexGrid> {
    check_inputs(kspace, masks)?;
    if kspace.dims() != predicted.dims() || kspace.channels() != predicted.channels() {
        return Err(Error::Dimension("measured and predicted grids differ in shape".into()));
    }
    let plane = kspace.dims().plane();
    let sampled = masks.m_sampled.bits();
    let data = kspace
        .data()
        .iter()
        .zip(predicted.data())
        .enumerate()
        .map(|(idx, (&s, &p))| if sampled[idx % plane] { s } else { p })
        .collect();
    Ok(ComplexGrid::from_parts_unchecked(kspace.channels(), kspace.dims(), Domain::Kspace, data))
}

/// Calibrate, predict, merge and coil-combine. Only sampled positions of `kspace` are used.
pub fn grappa_reconstruct(
    kspace: &ComplexGrid,
    masks: &SamplingMasks,
    geometry: KernelGeometry,
    lambda: f64,
) -> Result<(ComplexGrid, RealGrid)> {
    let kernel = calibrate(&apply_mask(kspace, &masks.m_sampled)?, masks, geometry, lambda)?;
    apply_kernel(kspace, masks, &kernel)
}

/// Predict, merge and coil-combine with an already calibrated kernel.
pub fn apply_kernel(kspace: &ComplexGrid, masks: &SamplingMasks, kernel: &GrappaKernel) -> Result<(ComplexGrid, RealGrid)> {
    let acquired = apply_mask(kspace, &masks.m_sampled)?;
    let predicted = predict(&acquired, masks, kernel)?;
    let merged = merge(&acquired, &predicted, masks)?;
    let image = reconstruct_image(&merged)?;
    Ok((merged, image))
}

#[derive(Serialize, Deserialize)]
struct KernelHeader {
    geometry: KernelGeometry,
    accel: (usize, usize),
    pattern_offsets: (usize, usize),
    lambda: f64,
    channels: usize,
    sources: usize,
    cells: Vec<(usize, usize)>,
    fit_residuals: Vec<f64>,
}

/// Writes `<path>.json` (header) and `<path>` (little-endian f32 re/im weights,
/// cell by cell, target-coil major).
pub fn save_kernel(kernel: &GrappaKernel, path: &Path) -> Result<()> {
    let sources = kernel.channels * kernel.geometry.points();
    let header = KernelHeader {
        geometry: kernel.geometry,
        accel: kernel.accel,
        pattern_offsets: kernel.pattern_offsets,
        lambda: kernel.lambda,
        channels: kernel.channels,
        sources,
        cells: kernel.offsets.iter().map(|o| o.cell).collect(),
        fit_residuals: kernel.offsets.iter().map(|o| o.fit_residual).collect(),
    };
    let mut blob = Vec::with_capacity(kernel.offsets.len() * kernel.channels * sources * 8);
    for o in &kernel.offsets {
        for w in &o.weights.data {
            blob.extend_from_slice(&(w.re as f32).to_le_bytes());
            blob.extend_from_slice(&(w.im as f32).to_le_bytes());
        }
    }
    let sidecar = crate::io::sidecar_path(path);
    let json = serde_json::to_string_pretty(&header).map_err(|e| Error::format(&sidecar, e))?;
    fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))?;
    fs::write(path, blob).map_err(|e| Error::io(path, e))
}

pub fn load_kernel(path: &Path) -> Result<GrappaKernel> {
    let sidecar = crate::io::sidecar_path(path);
    let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let header: KernelHeader = serde_json::from_str(&text).map_err(|e| Error::format(&sidecar, e))?;
    header.geometry.validate()?;
    let blob = fs::read(path).map_err(|e| Error::io(path, e))?;
    let per_cell = header.channels * header.sources;
    if header.sources != header.channels * header.geometry.points()
        || header.fit_residuals.len() != header.cells.len()
        || blob.len() != header.cells.len() * per_cell * 8
    {
        return Err(Error::format(path, "weight blob does not match header"));
    }
    let values: Vec<Complex64> = blob
        .chunks_exact(8)
        .map(|b| {
            let re = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
            let im = f32::from_le_bytes([b[4], b[5], b[6], b[7]]) as f64;
            Complex64::new(re, im)
        })
        .collect();
    let offsets = header
        .cells
        .iter()
        .zip(&header.fit_residuals)
        .enumerate()
        .map(|(k, (&cell, &fit_residual))| OffsetWeights {
            cell,
            weights: CMatrix {
                rows: header.channels,
                cols: header.sources,
                data: values[k * per_cell..(k + 1) * per_cell].to_vec(),
            },
            fit_residual,
        })
        .collect();
    Ok(GrappaKernel {
        accel: header.accel,
        pattern_offsets: header.pattern_offsets,
        geometry: header.geometry,
        lambda: header.lambda,
        channels: header.channels,
        offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{mse, Dims};
    use crate::mask::{make_masks, MaskParams};
    use crate::phantom::{make_coils, make_phantom, simulate_kspace, CoilOptions, PhantomSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn masks(n: usize, accel: (usize, usize), acs: usize) -> SamplingMasks {
        make_masks(MaskParams { shape: (n, n), accel, acs: (acs, acs), offsets: (0, 0) }).unwrap()
    }

    fn crand(rng: &mut ChaCha8Rng) -> Complex64 {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    #[test]
    fn no_acceleration_means_no_weights() {
        let m = masks(8, (1, 1), 0);
        let g = ComplexGrid::zeros(2, Dims::new_2d(8, 8), Domain::Kspace).unwrap();
        let k = calibrate(&g, &m, KernelGeometry::default(), 0.0).unwrap();
        assert!(k.offsets.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = (0..128).map(|_| crand(&mut rng)).collect();
        let g = ComplexGrid::from_vec(2, Dims::new_2d(8, 8), Domain::Kspace, data).unwrap();
        assert_eq!(predict(&g, &m, &k).unwrap(), g);
    }

    /// Least-squares oracle through nalgebra's SVD pseudo-inverse of the stacked
    /// system `[A; sqrt(lambda) I] w = [b; 0]`.
    fn pinv_solution(a: &CMatrix, b: &CMatrix, lambda: f64) -> nalgebra::DMatrix<Complex64> {
        let n = a.cols;
        let rows = a.rows + if lambda > 0.0 { n } else { 0 };
        let mut am = nalgebra::DMatrix::<Complex64>::zeros(rows, n);
        let mut bm = nalgebra::DMatrix::<Complex64>::zeros(rows, b.cols);
        for r in 0..a.rows {
            for c in 0..n {
                am[(r, c)] = a.at(r, c);
            }
            for c in 0..b.cols {
                bm[(r, c)] = b.at(r, c);
            }
        }
        if lambda > 0.0 {
            for c in 0..n {
                am[(a.rows + c, c)] = Complex64::new(lambda.sqrt(), 0.0);
            }
        }
        am.pseudo_inverse(1e-13).unwrap() * bm
    }

    #[test]
    fn calibration_matches_pseudo_inverse() {
        let geometry = KernelGeometry { fe: 1, pe1: 3, pe2: 3 };
        let m = masks(16, (2, 2), 10);
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..2 * 256).map(|_| crand(&mut rng)).collect();
            let g = ComplexGrid::from_vec(2, Dims::new_2d(16, 16), Domain::Kspace, data).unwrap();
            let lambda = if seed % 2 == 0 { 0.0 } else { 0.1 * seed as f64 };
            let kernel = calibrate(&g, &m, geometry, lambda).unwrap();
            for o in &kernel.offsets {
                let (a, b) = calibration_system(&g, &m, &geometry, o.cell).unwrap();
                let x = pinv_solution(&a, &b, lambda);
                let num: f64 = (0..a.cols)
                    .flat_map(|s| (0..2).map(move |t| (s, t)))
                    .map(|(s, t)| (o.weights.at(t, s) - x[(s, t)]).norm_sqr())
                    .sum();
                let den: f64 = x.iter().map(|v| v.norm_sqr()).sum();
                assert!((num / den).sqrt() < 1e-9, "seed {seed} cell {:?}", o.cell);
            }
        }
    }

    #[test]
    fn benchmark_kernel_fits_acs() {
        // noiseless data is numerically singular at lambda = 0; a faint noise floor is not
        let cfg = crate::benchmark::BenchmarkConfig { sigma: 1e-3, ..Default::default() };
        let bench = crate::benchmark::Benchmark::build(cfg).unwrap();
        let kernel = calibrate(&bench.acquired, &bench.masks, KernelGeometry::default(), 0.0).unwrap();
        for o in &kernel.offsets {
            assert!(o.fit_residual < 1e-2, "cell {:?}: {}", o.cell, o.fit_residual);
        }
        let clean = bench.acquired_clean().unwrap();
        assert!(matches!(
            calibrate(&clean, &bench.masks, KernelGeometry::default(), 0.0),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn single_point_prediction_matches_dot_product() {
        let geometry = KernelGeometry { fe: 1, pe1: 4, pe2: 3 };
        let m = masks(16, (2, 3), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let channels = 3;
        let n_src = channels * geometry.points();
        let offsets = target_cells(m.accel)
            .into_iter()
            .map(|cell| OffsetWeights {
                cell,
                weights: CMatrix { rows: channels, cols: n_src, data: (0..channels * n_src).map(|_| crand(&mut rng)).collect() },
                fit_residual: 0.0,
            })
            .collect();
        let kernel = GrappaKernel { accel: m.accel, pattern_offsets: (0, 0), geometry, lambda: 0.0, channels, offsets };
        let data = (0..channels * 256).map(|_| crand(&mut rng)).collect();
        let g = ComplexGrid::from_vec(channels, Dims::new_2d(16, 16), Domain::Kspace, data).unwrap();
        let out = predict(&g, &m, &kernel).unwrap();
        for &(i, j) in &[(1usize, 0usize), (0, 2), (15, 14), (7, 1)] {
            let cell = (i % 2, j % 3);
            let w = &kernel.weights_for(cell).unwrap().weights;
            // enumerate the lattice neighbours explicitly
            let base = (i as isize - cell.0 as isize, j as isize - cell.1 as isize);
            for t in 0..channels {
                let mut expect = Complex64::new(0.0, 0.0);
                let mut col = 0;
                for c in 0..channels {
                    for p in [-1isize, 0, 1, 2] {
                        for s in [-1isize, 0, 1] {
                            let si = (base.0 + 2 * p).rem_euclid(16) as usize;
                            let sj = (base.1 + 3 * s).rem_euclid(16) as usize;
                            if si % 2 == 0 && sj % 3 == 0 {
                                expect += w.at(t, col) * g.get(c, 0, si, sj);
                            }
                            col += 1;
                        }
                    }
                }
                assert!((out.get(t, 0, i, j) - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn insufficient_acs_names_minimum() {
        let geometry = KernelGeometry { fe: 1, pe1: 5, pe2: 5 };
        let m = masks(32, (2, 2), 8);
        let g = ComplexGrid::zeros(2, Dims::new_2d(32, 32), Domain::Kspace).unwrap();
        match calibrate(&g, &m, geometry, 0.0) {
            Err(Error::InsufficientAcs { min_pe1, min_pe2, .. }) => {
                assert_eq!((min_pe1, min_pe2), (9, 9));
            }
            other => panic!("expected InsufficientAcs, got {other:?}"),
        }
        let m = masks(32, (2, 2), 9);
        assert!(!matches!(calibrate(&g, &m, geometry, 1.0), Err(Error::InsufficientAcs { .. })));
    }

    #[test]
    fn rank_deficient_system_suggests_lambda() {
        let geometry = KernelGeometry { fe: 1, pe1: 3, pe2: 3 };
        let m = masks(16, (2, 2), 8);
        let g = ComplexGrid::zeros(2, Dims::new_2d(16, 16), Domain::Kspace).unwrap();
        let err = calibrate(&g, &m, geometry, 0.0).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
        assert!(err.to_string().contains("lambda > 0"));
    }

    #[test]
    fn merge_selects_by_mask() {
        let m = masks(8, (2, 2), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = ComplexGrid::from_vec(2, Dims::new_2d(8, 8), Domain::Kspace, (0..128).map(|_| crand(&mut rng)).collect()).unwrap();
        let b = ComplexGrid::from_vec(2, Dims::new_2d(8, 8), Domain::Kspace, (0..128).map(|_| crand(&mut rng)).collect()).unwrap();
        let out = merge(&a, &b, &m).unwrap();
        for c in 0..2 {
            for i in 0..8 {
                for j in 0..8 {
                    let expect = if m.m_sampled.get(i, j) { a.get(c, 0, i, j) } else { b.get(c, 0, i, j) };
                    assert_eq!(out.get(c, 0, i, j), expect);
                }
            }
        }
        let full = masks(8, (1, 1), 0);
        assert_eq!(merge(&a, &b, &full).unwrap(), a);
        let mut empty = full.clone();
        empty.m_sampled = crate::mask::Mask::zeros(8, 8);
        assert_eq!(merge(&a, &b, &empty).unwrap(), b);
    }

    #[test]
    fn accel_mismatch_is_rejected() {
        let m = masks(16, (2, 2), 10);
        let kernel = GrappaKernel {
            accel: (3, 1),
            pattern_offsets: (0, 0),
            geometry: KernelGeometry::default(),
            lambda: 0.0,
            channels: 1,
            offsets: vec![],
        };
        let g = ComplexGrid::zeros(1, Dims::new_2d(16, 16), Domain::Kspace).unwrap();
        assert!(matches!(predict(&g, &m, &kernel), Err(Error::Dimension(_))));
    }

    fn phantom_kspace(n: usize) -> ComplexGrid {
        let p = make_phantom(&PhantomSpec::disk((n, n), 0.4 * n as f64, 1.0)).unwrap();
        let coils = make_coils(Dims::new_2d(n, n), CoilOptions { n_coils: 8, seed: 7, uniform: false }).unwrap();
        simulate_kspace(&p.image, &coils).unwrap()
    }

    #[test]
    fn data_consistency_and_tikhonov_shrinkage() {
        let k = phantom_kspace(32);
        let m = masks(32, (2, 2), 16);
        let geometry = KernelGeometry { fe: 1, pe1: 3, pe2: 3 };
        let mut last = f64::INFINITY;
        for lambda in [1e-6, 1e-4, 1e-2, 1.0, 1e2] {
            let kernel = calibrate(&apply_mask(&k, &m.m_sampled).unwrap(), &m, geometry, lambda).unwrap();
            let norm = kernel.weight_norm();
            assert!(norm <= last);
            last = norm;
            let (merged, _) = apply_kernel(&k, &m, &kernel).unwrap();
            for c in 0..8 {
                for i in 0..32 {
                    for j in 0..32 {
                        if m.m_sampled.get(i, j) {
                            assert_eq!(merged.get(c, 0, i, j).re.to_bits(), k.get(c, 0, i, j).re.to_bits());
                            assert_eq!(merged.get(c, 0, i, j).im.to_bits(), k.get(c, 0, i, j).im.to_bits());
                        }
                    }
                }
            }
        }
        let kernel = calibrate(&apply_mask(&k, &m.m_sampled).unwrap(), &m, geometry, 1e12).unwrap();
        assert!(kernel.weight_norm() < 1e-6);
    }

    #[test]
    fn beats_zero_filling_on_smooth_phantom() {
        let k = phantom_kspace(32);
        let m = masks(32, (2, 2), 16);
        let reference = reconstruct_image(&k).unwrap();
        let zero_filled = reconstruct_image(&apply_mask(&k, &m.m_sampled).unwrap()).unwrap();
        let (_, img) = grappa_reconstruct(&k, &m, KernelGeometry { fe: 1, pe1: 3, pe2: 3 }, 1e-6).unwrap();
        assert!(mse(&img, &reference, None).unwrap() < mse(&zero_filled, &reference, None).unwrap());
    }

    #[test]
    fn three_dimensional_kernel_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dims = Dims::new_3d(4, 16, 16);
        let data = (0..2 * dims.len()).map(|_| crand(&mut rng)).collect();
        let g = ComplexGrid::from_vec(2, dims, Domain::Kspace, data).unwrap();
        let m = masks(16, (2, 1), 12);
        let kernel = calibrate(&g, &m, KernelGeometry { fe: 3, pe1: 2, pe2: 3 }, 1e-3).unwrap();
        assert_eq!(kernel.offsets.len(), 1);
        assert_eq!(kernel.offsets[0].weights.data.len(), 2 * 3 * 2 * 3 * 2);
        let out = predict(&g, &m, &kernel).unwrap();
        assert_eq!(out.dims(), dims);
    }

    #[test]
    fn kernel_file_round_trip() {
        let k = phantom_kspace(32);
        let m = masks(32, (2, 2), 16);
        let kernel = calibrate(&k, &m, KernelGeometry { fe: 1, pe1: 3, pe2: 3 }, 1e-3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kernel.bin");
        save_kernel(&kernel, &path).unwrap();
        let loaded = load_kernel(&path).unwrap();
        assert_eq!(loaded.accel, kernel.accel);
        assert_eq!(loaded.geometry, kernel.geometry);
        for (a, b) in loaded.offsets.iter().zip(&kernel.offsets) {
            assert_eq!(a.cell, b.cell);
            for (x, y) in a.weights.data.iter().zip(&b.weights.data) {
                assert!((x - y).norm() <= 1e-6 * y.norm().max(1e-3));
            }
        }
        let bytes = std::fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(bytes, 3 * 8 * 8 * 9 * 8);
    }
}
