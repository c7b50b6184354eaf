use serde::{Deserialize, Serialize};

use super::gemm::dgemm;
use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::par;

/// Spatial positions per work item. Fixed so that results never depend on the thread count.
pub(crate) const POS_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_features: usize,
    pub out_features: usize,
    pub kernel: usize,
    pub activation: Activation,
}

impl ConvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_features == 0 || self.out_features == 0 {
            return Err(Error::Spec(format!("layer feature counts must be positive: {self:?}")));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Spec(format!("kernel size must be odd, got {}", self.kernel)));
        }
        Ok(())
    }

    /// `in_features * kernel^2`, the im2col row length.
    pub fn fan_in(&self) -> usize {
        self.in_features * self.kernel * self.kernel
    }

    pub fn weight_count(&self) -> usize {
        self.out_features * self.fan_in()
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_features
    }
}

/// A layer with its own parameters. Weights are `[out, in, k, k]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn new(spec: ConvSpec, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if weights.len() != spec.weight_count() || bias.len() != spec.out_features {
            return Err(Error::Dimension(format!(
                "{} weights and {} biases for {spec:?}",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("layer parameters must be finite".into()));
        }
        Ok(ConvLayer { spec, weights, bias })
    }
}

/// Periodic-padding, stride-one convolution followed by the layer activation.
pub fn conv2d_periodic(x: &Tensor4, layer: &ConvLayer) -> Result<Tensor4> {
    let spec = layer.spec;
    if x.features() != spec.in_features {
        return Err(Error::Dimension(format!(
            "layer expects {} input features, tensor has {}",
            spec.in_features,
            x.features()
        )));
    }
    let (h, w) = (x.height(), x.width());
    let mut out = Tensor4::zeros([x.batch(), spec.out_features, h, w]);
    for b in 0..x.batch() {
        let (_, mut post) = forward_hwc(&x.to_hwc(b), h, w, &spec, &layer.weights, &layer.bias);
        activate(spec.activation, &mut post);
        out.write_hwc(b, &post);
    }
    Ok(out)
}

#[inline]
fn wrap(v: isize, n: usize) -> usize {
    v.rem_euclid(n as isize) as usize
}

/// `positions x (in * k * k)` patch matrix; column `c*k*k + a*k + b` holds feature `c`
/// at offset `(a - r, b - r)` with wrap.
pub(crate) fn im2col(x: &[f64], h: usize, w: usize, features: usize, k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let row = features * k * k;
    let mut cols = vec![0.0; h * w * row];
    par::for_each_chunk_mut(&mut cols, POS_CHUNK * row, |chunk, block| {
        let p0 = chunk * POS_CHUNK;
        for (local, out) in block.chunks_mut(row).enumerate() {
            let p = p0 + local;
            let (i, j) = ((p / w) as isize, (p % w) as isize);
            for a in 0..k {
                let si = wrap(i + a as isize - r, h);
                for b in 0..k {
                    let sj = wrap(j + b as isize - r, w);
                    let src = &x[(si * w + sj) * features..(si * w + sj + 1) * features];
                    for (c, &v) in src.iter().enumerate() {
                        out[c * k * k + a * k + b] = v;
                    }
                }
            }
        }
    });
    cols
}

/// Returns `(cols, pre)` with `pre = cols W^T + bias`, both channels-last.
pub(crate) fn forward_hwc(
    x: &[f64],
    h: usize,
    w: usize,
    spec: &ConvSpec,
    weights: &[f64],
    bias: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let kk = spec.fan_in();
    let o = spec.out_features;
    let cols = im2col(x, h, w, spec.in_features, spec.kernel);
    let mut pre = vec![0.0; h * w * o];
    par::for_each_chunk_mut(&mut pre, POS_CHUNK * o, |chunk, block| {
        let rows = block.len() / o;
        for r in 0..rows {
            block[r * o..(r + 1) * o].copy_from_slice(bias);
        }
        let a = &cols[chunk * POS_CHUNK * kk..];
        // block (rows x o) += cols_chunk (rows x kk) * W^T (kk x o)
        dgemm(rows, kk, o, a, kk, 1, weights, 1, kk, 1.0, block, o, 1);
    });
    (cols, pre)
}

pub(crate) fn activate(act: Activation, values: &mut [f64]) {
    if act == Activation::Relu {
        for v in values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// Turns the gradient w.r.t. the activated output into the gradient w.r.t. the pre-activation.
/// The ReLU subgradient at exactly zero is zero.
pub(crate) fn activation_backward(act: Activation, pre: &[f64], grad: &mut [f64]) {
    if act == Activation::Relu {
        for (g, &p) in grad.iter_mut().zip(pre) {
            if p <= 0.0 {
                *g = 0.0;
            }
        }
    }
}

pub(crate) struct ConvGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Option<Vec<f64>>,
}

/// Gradients of a layer from `d_pre` (positions x out), its recorded `cols`, and weights.
pub(crate) fn backward_hwc(
    d_pre: &[f64],
    cols: &[f64],
    h: usize,
    w: usize,
    spec: &ConvSpec,
    weights: &[f64],
    want_input: bool,
) -> ConvGrads {
    let kk = spec.fan_in();
    let o = spec.out_features;
    let positions = h * w;

    // dW (o x kk) = d_pre^T (o x P) * cols (P x kk), split over output rows
    const ROW_CHUNK: usize = 4;
    let mut dw = vec![0.0; o * kk];
    par::for_each_chunk_mut(&mut dw, ROW_CHUNK * kk, |chunk, block| {
        let rows = block.len() / kk;
        let o0 = chunk * ROW_CHUNK;
        dgemm(rows, positions, kk, &d_pre[o0..], 1, o, cols, kk, 1, 0.0, block, kk, 1);
    });

    let mut db = vec![0.0; o];
    for row in d_pre.chunks(o) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }

    let input = want_input.then(|| {
        // dcols (P x kk) = d_pre (P x o) * W (o x kk)
        let mut dcols = vec![0.0; positions * kk];
        par::for_each_chunk_mut(&mut dcols, POS_CHUNK * kk, |chunk, block| {
            let rows = block.len() / kk;
            dgemm(rows, o, kk, &d_pre[chunk * POS_CHUNK * o..], o, 1, weights, kk, 1, 0.0, block, kk, 1);
        });
        col2im(&dcols, h, w, spec.in_features, spec.kernel)
    });
    ConvGrads { weights: dw, bias: db, input }
}

/// Adjoint of [`im2col`], written as a gather so each output position is summed in a fixed order.
pub(crate) fn col2im(dcols: &[f64], h: usize, w: usize, features: usize, k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let row = features * k * k;
    let mut dx = vec![0.0; h * w * features];
    par::for_each_chunk_mut(&mut dx, POS_CHUNK * features, |chunk, block| {
        let p0 = chunk * POS_CHUNK;
        for (local, out) in block.chunks_mut(features).enumerate() {
            let p = p0 + local;
            let (i, j) = ((p / w) as isize, (p % w) as isize);
            // position q reads p at tap (a, b) when q + (a - r, b - r) == p
            for a in 0..k {
                let qi = wrap(i - (a as isize - r), h);
                for b in 0..k {
                    let qj = wrap(j - (b as isize - r), w);
                    let src = &dcols[(qi * w + qj) * row..(qi * w + qj + 1) * row];
                    for (c, acc) in out.iter_mut().enumerate() {
                        *acc += src[c * k * k + a * k + b];
                    }
                }
            }
        }
    });
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_layer(spec: ConvSpec, rng: &mut ChaCha8Rng) -> ConvLayer {
        let w = (0..spec.weight_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = (0..spec.out_features).map(|_| rng.random_range(-1.0..1.0)).collect();
        ConvLayer::new(spec, w, b).unwrap()
    }

    fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
        let n = shape.iter().product();
        Tensor4::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct wrap-index sum.
    fn naive(x: &Tensor4, layer: &ConvLayer) -> Tensor4 {
        let s = layer.spec;
        let (h, w, k) = (x.height() as isize, x.width() as isize, s.kernel as isize);
        let r = k / 2;
        Tensor4::from_fn([x.batch(), s.out_features, x.height(), x.width()], |b, o, i, j| {
            let mut acc = layer.bias[o];
            for c in 0..s.in_features {
                for a in 0..k {
                    for bb in 0..k {
                        let si = (i as isize + a - r).rem_euclid(h) as usize;
                        let sj = (j as isize + bb - r).rem_euclid(w) as usize;
                        let wi = ((o * s.in_features + c) * s.kernel + a as usize) * s.kernel + bb as usize;
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

    #[test]
    fn centre_tap_is_identity() {
        let spec = ConvSpec { in_features: 1, out_features: 1, kernel: 3, activation: Activation::Linear };
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let layer = ConvLayer::new(spec, w, vec![0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random_tensor([1, 1, 5, 6], &mut rng);
        assert_eq!(conv2d_periodic(&x, &layer).unwrap(), x);
    }

    #[test]
    fn zero_weights_give_bias() {
        let spec = ConvSpec { in_features: 2, out_features: 3, kernel: 5, activation: Activation::Linear };
        let layer = ConvLayer::new(spec, vec![0.0; spec.weight_count()], vec![0.5, -1.0, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = conv2d_periodic(&random_tensor([1, 2, 4, 4], &mut rng), &layer).unwrap();
        for o in 0..3 {
            for p in 0..16 {
                assert_eq!(y.get(0, o, p / 4, p % 4), layer.bias[o]);
            }
        }
    }

    #[test]
    fn matches_naive_loops() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let activation = if seed % 2 == 0 { Activation::Linear } else { Activation::Relu };
            let kernel = if seed % 3 == 0 { 5 } else { 3 };
            let spec = ConvSpec { in_features: 2, out_features: 3, kernel, activation };
            let layer = random_layer(spec, &mut rng);
            let x = random_tensor([1, 2, 5, 5], &mut rng);
            let got = conv2d_periodic(&x, &layer).unwrap();
            let want = naive(&x, &layer);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn large_grid_spans_several_chunks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = ConvSpec { in_features: 3, out_features: 2, kernel: 3, activation: Activation::Linear };
        let layer = random_layer(spec, &mut rng);
        let x = random_tensor([2, 3, 23, 29], &mut rng);
        let got = conv2d_periodic(&x, &layer).unwrap();
        let want = naive(&x, &layer);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn feature_mismatch_is_rejected() {
        let spec = ConvSpec { in_features: 2, out_features: 1, kernel: 3, activation: Activation::Linear };
        let layer = ConvLayer::new(spec, vec![0.0; 18], vec![0.0]).unwrap();
        let x = Tensor4::zeros([1, 3, 4, 4]);
        assert!(matches!(conv2d_periodic(&x, &layer), Err(Error::Dimension(_))));
        assert!(ConvLayer::new(ConvSpec { kernel: 4, ..spec }, vec![0.0; 32], vec![0.0]).is_err());
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (h, w, c, k) = (7, 5, 2, 3);
        let x: Vec<f64> = (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..h * w * c * k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs: f64 = im2col(&x, h, w, c, k).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&y, h, w, c, k)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    proptest! {
        #[test]
        fn shift_equivariance(seed in 0u64..1000, s1 in -9isize..9, s2 in -9isize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = ConvSpec { in_features: 2, out_features: 2, kernel: 3, activation: Activation::Relu };
            let layer = random_layer(spec, &mut rng);
            let x = random_tensor([1, 2, 6, 7], &mut rng);
            let a = conv2d_periodic(&x.roll(s1, s2), &layer).unwrap();
            let b = conv2d_periodic(&x, &layer).unwrap().roll(s1, s2);
            for (u, v) in a.data().iter().zip(b.data()) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
