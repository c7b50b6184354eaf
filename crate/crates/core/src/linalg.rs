//! Dense complex linear algebra for the kernel fits: Gram matrix assembly and
//! a Cholesky solver for Hermitian positive definite systems.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// `A^H A + lambda I` and `A^H B` for a tall system `A w = B`.
pub fn normal_equations(a: &CMatrix, b: &CMatrix, lambda: f64) -> (CMatrix, CMatrix) {
    debug_assert_eq!(a.rows, b.rows);
    let n = a.cols;
    let mut gram = CMatrix::zeros(n, n);
    let mut rhs = CMatrix::zeros(n, b.cols);
    for r in 0..a.rows {
        let arow = a.row(r);
        let brow = b.row(r);
        for (p, ap) in arow.iter().enumerate() {
            let apc = ap.conj();
            // upper triangle only, mirrored below
            let grow = &mut gram.data[p * n..(p + 1) * n];
            for q in p..n {
                grow[q] += apc * arow[q];
            }
            let rrow = &mut rhs.data[p * b.cols..(p + 1) * b.cols];
            for (k, bk) in brow.iter().enumerate() {
                rrow[k] += apc * bk;
            }
        }
    }
    for p in 0..n {
        for q in 0..p {
            gram.data[p * n + q] = gram.data[q * n + p].conj();
        }
        gram.data[p * n + p] = Complex64::new(gram.data[p * n + p].re + lambda, 0.0);
    }
    (gram, rhs)
}

/// Solves `G X = B` for Hermitian positive definite `G` via `G = L L^H`.
///
/// A pivot at or below `n * eps * max(diag)` is reported as rank deficiency.
pub fn cholesky_solve(g: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let n = g.rows;
    if g.cols != n || b.rows != n {
        return Err(Error::Dimension(format!(
            "system {}x{} with right-hand side {}x{}",
            g.rows, g.cols, b.rows, b.cols
        )));
    }
    let max_diag = (0..n).map(|i| g.at(i, i).re).fold(0.0f64, f64::max);
    let tol = (n.max(1) as f64) * f64::EPSILON * max_diag;
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = g.at(j, j).re;
        for k in 0..j {
            d -= l.at(j, k).norm_sqr();
        }
        if !(d > tol) {
            return Err(Error::RankDeficient { column: j, pivot: d });
        }
        let djj = d.sqrt();
        *l.at_mut(j, j) = Complex64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = g.at(i, j);
            for k in 0..j {
                s -= l.at(i, k) * l.at(j, k).conj();
            }
            *l.at_mut(i, j) = s / djj;
        }
    }
    let mut x = b.clone();
    for col in 0..b.cols {
        // forward: L y = b
        for i in 0..n {
            let mut s = x.at(i, col);
            for k in 0..i {
                s -= l.at(i, k) * x.at(k, col);
            }
            *x.at_mut(i, col) = s / l.at(i, i).re;
        }
        // backward: L^H x = y
        for i in (0..n).rev() {
            let mut s = x.at(i, col);
            for k in i + 1..n {
                s -= l.at(k, i).conj() * x.at(k, col);
            }
            *x.at_mut(i, col) = s / l.at(i, i).re;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let data = (0..rows * cols)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        CMatrix { rows, cols, data }
    }

    #[test]
    fn solves_random_spd_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(30, 10, &mut rng);
        let b = random(30, 2, &mut rng);
        let (g, rhs) = normal_equations(&a, &b, 0.1);
        let x = cholesky_solve(&g, &rhs).unwrap();
        for i in 0..10 {
            for c in 0..2 {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..10 {
                    s += g.at(i, k) * x.at(k, c);
                }
                assert!((s - rhs.at(i, c)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a = random(12, 4, &mut rng);
        for r in 0..12 {
            let v = a.at(r, 0);
            *a.at_mut(r, 3) = v * 2.0;
        }
        let b = random(12, 1, &mut rng);
        let (g, rhs) = normal_equations(&a, &b, 0.0);
        assert!(matches!(cholesky_solve(&g, &rhs), Err(Error::RankDeficient { .. })));
        let (g, rhs) = normal_equations(&a, &b, 1e-3);
        assert!(cholesky_solve(&g, &rhs).is_ok());
    }

    #[test]
    fn gram_is_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random(7, 5, &mut rng);
        let b = random(7, 1, &mut rng);
        let (g, _) = normal_equations(&a, &b, 0.0);
        for p in 0..5 {
            for q in 0..5 {
                assert_eq!(g.at(p, q), g.at(q, p).conj());
            }
        }
    }
}
