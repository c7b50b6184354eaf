#![allow(dead_code)]

use kspace_recon::fft::dft_forward;
use kspace_recon::grappa::KernelGeometry;
use kspace_recon::linalg::CMatrix;
use kspace_recon::nn::{Activation, ConvLayer, Tensor4};
use kspace_recon::{ComplexGrid, Complex64, Dims, Domain, Mask};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn crand(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn random_grid(channels: usize, dims: Dims, domain: Domain, seed: u64) -> ComplexGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..channels * dims.len()).map(|_| crand(&mut rng)).collect();
    ComplexGrid::from_vec(channels, dims, domain, data).unwrap()
}

/// K-space in which every value is the same fixed linear combination of its
/// lattice neighbours, at every position and under periodic wrap.
///
/// Coil images hold `C * points` point sources at distinct pixels with random
/// amplitudes, so each k-space line is a sum of that many periodic exponentials.
/// The source map `M[(c, k), p] = a[c, p] e_p(o_k)` is square, and the unique
/// kernel for target coil `t` is `a[t, :] M^-1`.
pub struct SelfConsistent {
    pub kspace: ComplexGrid,
    /// Per cell, `C x (C * points)` generator weights, rows are target coils.
    pub kernels: Vec<((usize, usize), DMatrix<Complex64>)>,
}

pub fn self_consistent(
    n: usize,
    channels: usize,
    accel: (usize, usize),
    geometry: KernelGeometry,
    seed: u64,
) -> SelfConsistent {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_count = channels * geometry.points();
    let mut pixels = Vec::new();
    while pixels.len() < p_count {
        let px = (rng.random_range(0..n), rng.random_range(0..n));
        if !pixels.contains(&px) {
            pixels.push(px);
        }
    }
    let amps = DMatrix::<Complex64>::from_fn(channels, p_count, |_, _| crand(&mut rng));
    let dims = Dims::new_2d(n, n);
    let mut img = vec![Complex64::new(0.0, 0.0); channels * n * n];
    for c in 0..channels {
        for (p, &(i, j)) in pixels.iter().enumerate() {
            img[c * n * n + i * n + j] = amps[(c, p)];
        }
    }
    let kspace = dft_forward(&ComplexGrid::from_vec(channels, dims, Domain::Image, img).unwrap()).unwrap();
    // centered forward DFT: shifting k by o multiplies source p by exp(-2 pi i o . (x_p - c) / n)
    let centre = (n / 2) as f64;
    let phase = |p: usize, o: (isize, isize)| {
        let (i, j) = pixels[p];
        let arg = -2.0 * PI * (o.0 as f64 * (i as f64 - centre) + o.1 as f64 * (j as f64 - centre)) / n as f64;
        Complex64::new(arg.cos(), arg.sin())
    };
    let cells: Vec<(usize, usize)> =
        (0..accel.0).flat_map(|a| (0..accel.1).map(move |b| (a, b))).filter(|&c| c != (0, 0)).collect();
    let kernels = cells
        .into_iter()
        .map(|cell| {
            let offs = geometry.source_offsets(accel, cell);
            let m = DMatrix::<Complex64>::from_fn(p_count, p_count, |row, p| {
                let (c, k) = (row / offs.len(), row % offs.len());
                amps[(c, p)] * phase(p, (offs[k].1, offs[k].2))
            });
            let inv = m.try_inverse().expect("generic source map is invertible");
            (cell, &amps * inv)
        })
        .collect();
    SelfConsistent { kspace, kernels }
}

/// Wrap-index triple loop convolution.
pub fn naive_conv(x: &Tensor4, layer: &ConvLayer) -> Tensor4 {
    let s = layer.spec;
    let (h, w, k) = (x.height() as isize, x.width() as isize, s.kernel as isize);
    let r = k / 2;
    Tensor4::from_fn([x.batch(), s.out_features, x.height(), x.width()], |b, o, i, j| {
        let mut acc = layer.bias[o];
        for c in 0..s.in_features {
            for a in 0..k {
                for d in 0..k {
                    let si = (i as isize + a - r).rem_euclid(h) as usize;
                    let sj = (j as isize + d - r).rem_euclid(w) as usize;
                    let wi = ((o * s.in_features + c) * s.kernel + a as usize) * s.kernel + d as usize;
                    acc += layer.weights[wi] * x.get(b, c, si, sj);
                }
            }
        }
        match s.activation {
            Activation::Linear => acc,
            Activation::Relu => acc.max(0.0),
        }
    })
}

pub fn naive_masked_mse(pred: &Tensor4, target: &Tensor4, mask: &Mask) -> f64 {
    let [nb, nc, h, w] = pred.shape();
    let (mut sum, mut n) = (0.0, 0usize);
    for b in 0..nb {
        for c in 0..nc {
            for i in 0..h {
                for j in 0..w {
                    if mask.get(i, j) {
                        let d = pred.get(b, c, i, j) - target.get(b, c, i, j);
                        sum += d * d;
                        n += 1;
                    }
                }
            }
        }
    }
    sum / n as f64
}

/// O(N^2) centered unitary forward DFT of channel 0 of a 2D grid.
pub fn naive_dft_2d(x: &ComplexGrid) -> Vec<Complex64> {
    let Dims { pe1, pe2, .. } = x.dims();
    let (c1, c2) = ((pe1 / 2) as f64, (pe2 / 2) as f64);
    let norm = 1.0 / ((pe1 * pe2) as f64).sqrt();
    let mut out = vec![Complex64::new(0.0, 0.0); pe1 * pe2];
    for k1 in 0..pe1 {
        for k2 in 0..pe2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for n1 in 0..pe1 {
                for n2 in 0..pe2 {
                    let phase = -2.0
                        * PI
                        * ((k1 as f64 - c1) * (n1 as f64 - c1) / pe1 as f64
                            + (k2 as f64 - c2) * (n2 as f64 - c2) / pe2 as f64);
                    acc += x.get(0, 0, n1, n2) * Complex64::new(phase.cos(), phase.sin());
                }
            }
            out[k1 * pe2 + k2] = acc * norm;
        }
    }
    out
}

/// Minimum-norm least squares solution of `[A; sqrt(lambda) I] x = [B; 0]` by SVD.
pub fn pinv_solution(a: &CMatrix, b: &CMatrix, lambda: f64) -> DMatrix<Complex64> {
    let n = a.cols;
    let rows = a.rows + if lambda > 0.0 { n } else { 0 };
    let mut am = DMatrix::<Complex64>::zeros(rows, n);
    let mut bm = DMatrix::<Complex64>::zeros(rows, b.cols);
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

pub fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
    let n = shape.iter().product();
    Tensor4::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}
