//! Centered, unitary discrete Fourier transforms over all spatial axes.
//!
//! DC sits at index `n / 2` on every axis and both directions carry a
//! `1 / sqrt(N)` factor, so the transforms preserve energy.

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

use crate::error::Result;
use crate::grid::{ComplexGrid, Dims, Domain};
use crate::par;

/// Image to k-space.
pub fn dft_forward(g: &ComplexGrid) -> Result<ComplexGrid> {
    g.expect_domain(Domain::Image)?;
    Ok(transform(g, FftDirection::Forward, Domain::Kspace))
}

/// K-space to image.
pub fn dft_inverse(g: &ComplexGrid) -> Result<ComplexGrid> {
    g.expect_domain(Domain::Kspace)?;
    Ok(transform(g, FftDirection::Inverse, Domain::Image))
}

struct Plans {
    fe: Arc<dyn Fft<f64>>,
    pe1: Arc<dyn Fft<f64>>,
    pe2: Arc<dyn Fft<f64>>,
}

fn transform(g: &ComplexGrid, direction: FftDirection, out_domain: Domain) -> ComplexGrid {
    let dims = g.dims();
    let mut planner = FftPlanner::new();
    let plans = Plans {
        fe: planner.plan_fft(dims.fe, direction),
        pe1: planner.plan_fft(dims.pe1, direction),
        pe2: planner.plan_fft(dims.pe2, direction),
    };
    let n = dims.len();
    let scale = 1.0 / (n as f64).sqrt();
    let mut data = g.data().to_vec();
    par::for_each_chunk_mut(&mut data, n, |_, channel| {
        transform_volume(channel, dims, &plans);
        for z in channel.iter_mut() {
            *z *= scale;
        }
    });
    ComplexGrid::from_parts_unchecked(g.channels(), dims, out_domain, data)
}

fn transform_volume(vol: &mut [Complex64], dims: Dims, plans: &Plans) {
    let Dims { fe, pe1, pe2 } = dims;
    let longest = fe.max(pe1).max(pe2);
    let mut line = vec![Complex64::new(0.0, 0.0); longest];
    let mut scratch = vec![Complex64::new(0.0, 0.0); longest];
    let mut fft_scratch = Vec::new();
    let mut run = |plan: &Arc<dyn Fft<f64>>, len: usize, start: usize, stride: usize, vol: &mut [Complex64]| {
        if len == 1 {
            return;
        }
        let c = len / 2;
        // ifftshift on the way in, fftshift on the way out
        for m in 0..len {
            line[m] = vol[start + ((m + c) % len) * stride];
        }
        let need = plan.get_inplace_scratch_len();
        if fft_scratch.len() < need {
            fft_scratch.resize(need, Complex64::new(0.0, 0.0));
        }
        plan.process_with_scratch(&mut line[..len], &mut fft_scratch[..need]);
        scratch[..len].copy_from_slice(&line[..len]);
        for m in 0..len {
            vol[start + m * stride] = scratch[(m + len - c) % len];
        }
    };
    for f in 0..fe {
        for i in 0..pe1 {
            run(&plans.pe2, pe2, dims.index(f, i, 0), 1, vol);
        }
        for j in 0..pe2 {
            run(&plans.pe1, pe1, dims.index(f, 0, j), pe2, vol);
        }
    }
    for i in 0..pe1 {
        for j in 0..pe2 {
            run(&plans.fe, fe, dims.index(0, i, j), pe1 * pe2, vol);
        }
    }
}
