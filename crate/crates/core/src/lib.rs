//! Scan-specific parallel MRI reconstruction.
//!
//! Undersampled multi-coil k-space is completed either by linear GRAPPA
//! kernels calibrated on the autocalibration (ACS) block, or by fitting a
//! small constant-resolution convolutional network to the sampled data of the
//! scan itself (APIR-Net). Synthetic phantoms, coil maps and a pseudo
//! multiple replica noise evaluation round out the toolkit.
//!
//! With the default `parallel` feature, per-offset kernel solves, per-channel
//! transforms, convolution feature blocks and noise replicas run on rayon.
//! Without it everything runs sequentially and produces identical results.

pub mod apirnet;
pub mod benchmark;
pub mod error;
pub mod fft;
pub mod grappa;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod mask;
pub mod nn;
pub mod noise;
pub mod par;
pub mod pgm;
pub mod phantom;

pub use error::{Error, Result};
pub use grid::{ComplexGrid, Dims, Domain, RealGrid};
pub use mask::{Mask, SamplingMasks};
pub use num_complex::Complex64;
