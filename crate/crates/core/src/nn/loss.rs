use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::mask::Mask;

fn check(pred: &Tensor4, target: &Tensor4, mask: &Mask) -> Result<usize> {
    if pred.shape() != target.shape() {
        return Err(Error::Dimension(format!("prediction {:?} vs target {:?}", pred.shape(), target.shape())));
    }
    if mask.pe1() != pred.height() || mask.pe2() != pred.width() {
        return Err(Error::Dimension(format!(
            "mask {}x{} vs tensor {}x{}",
            mask.pe1(),
            mask.pe2(),
            pred.height(),
            pred.width()
        )));
    }
    let count = mask.count() * pred.features() * pred.batch();
    if count == 0 {
        return Err(Error::Degenerate("loss mask selects no positions".into()));
    }
    Ok(count)
}

/// Mean of squared differences over masked positions and all features.
pub fn masked_mse_loss(pred: &Tensor4, target: &Tensor4, mask: &Mask) -> Result<f64> {
    let count = check(pred, target, mask)?;
    let plane = mask.bits().len();
    let mut sum = 0.0;
    for (idx, (p, t)) in pred.data().iter().zip(target.data()).enumerate() {
        if mask.bits()[idx % plane] {
            sum += (p - t) * (p - t);
        }
    }
    Ok(sum / count as f64)
}

/// Loss value and its gradient with respect to `pred`.
pub fn masked_mse_grad(pred: &Tensor4, target: &Tensor4, mask: &Mask) -> Result<(f64, Tensor4)> {
    let count = check(pred, target, mask)?;
    let plane = mask.bits().len();
    let scale = 2.0 / count as f64;
    let mut grad = Tensor4::zeros(pred.shape());
    let mut sum = 0.0;
    for (idx, ((p, t), g)) in pred.data().iter().zip(target.data()).zip(grad.data_mut()).enumerate() {
        if mask.bits()[idx % plane] {
            let d = p - t;
            sum += d * d;
            *g = scale * d;
        }
    }
    Ok((sum / count as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_tensors_have_zero_loss() {
        let t = Tensor4::from_fn([1, 2, 3, 3], |_, c, i, j| (c + i * j) as f64);
        assert_eq!(masked_mse_loss(&t, &t, &Mask::ones(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn constant_difference() {
        let a = Tensor4::from_fn([1, 3, 4, 4], |_, _, i, j| (i + j) as f64);
        let b = Tensor4::from_fn([1, 3, 4, 4], |_, _, i, j| (i + j) as f64 - 0.5);
        assert!((masked_mse_loss(&a, &b, &Mask::ones(4, 4)).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn empty_mask_is_degenerate() {
        let t = Tensor4::zeros([1, 1, 2, 2]);
        assert!(matches!(masked_mse_loss(&t, &t, &Mask::zeros(2, 2)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn matches_scalar_loop() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (f, h, w) = (3, 5, 4);
            let n = f * h * w;
            let a = Tensor4::from_vec([1, f, h, w], (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let b = Tensor4::from_vec([1, f, h, w], (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let mut m = Mask::from_bits(h, w, (0..h * w).map(|_| rng.random_bool(0.5)).collect()).unwrap();
            if m.count() == 0 {
                m = Mask::ones(h, w);
            }
            let mut sum = 0.0;
            let mut n = 0usize;
            for c in 0..f {
                for i in 0..h {
                    for j in 0..w {
                        if m.get(i, j) {
                            sum += (a.get(0, c, i, j) - b.get(0, c, i, j)).powi(2);
                            n += 1;
                        }
                    }
                }
            }
            let loss = masked_mse_loss(&a, &b, &m).unwrap();
            assert!((loss - sum / n as f64).abs() < 1e-12);
            let (l2, g) = masked_mse_grad(&a, &b, &m).unwrap();
            assert_eq!(loss, l2);
            for c in 0..f {
                for i in 0..h {
                    for j in 0..w {
                        let expect = if m.get(i, j) { 2.0 * (a.get(0, c, i, j) - b.get(0, c, i, j)) / n as f64 } else { 0.0 };
                        assert!((g.get(0, c, i, j) - expect).abs() < 1e-15);
                    }
                }
            }
        }
    }
}
