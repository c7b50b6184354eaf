use crate::error::{Error, Result};

/// Dense `[batch, feature, height, width]` real tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor4 { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&s| s == 0) {
            return Err(Error::Dimension(format!("tensor extents must be positive, got {shape:?}")));
        }
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::Dimension(format!("{} values for shape {shape:?}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("tensor contains non-finite values".into()));
        }
        Ok(Tensor4 { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], f: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let [b, c, h, w] = shape;
        let mut data = Vec::with_capacity(b * c * h * w);
        for bi in 0..b {
            for ci in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        data.push(f(bi, ci, i, j));
                    }
                }
            }
        }
        Tensor4 { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn features(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, i: usize, j: usize) -> usize {
        let [_, cs, h, w] = self.shape;
        ((b * cs + c) * h + i) * w + j
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.index(b, c, i, j)]
    }

    /// Circular shift of both spatial axes by `(s1, s2)`.
    pub fn roll(&self, s1: isize, s2: isize) -> Tensor4 {
        let [_, _, h, w] = self.shape;
        Tensor4::from_fn(self.shape, |b, c, i, j| {
            let si = (i as isize - s1).rem_euclid(h as isize) as usize;
            let sj = (j as isize - s2).rem_euclid(w as isize) as usize;
            self.get(b, c, si, sj)
        })
    }

    /// Channels-last copy of batch item `b`: `positions x features`.
    pub(crate) fn to_hwc(&self, b: usize) -> Vec<f64> {
        let [_, c, h, w] = self.shape;
        let plane = h * w;
        let src = &self.data[b * c * plane..(b + 1) * c * plane];
        let mut out = vec![0.0; c * plane];
        for ci in 0..c {
            for p in 0..plane {
                out[p * c + ci] = src[ci * plane + p];
            }
        }
        out
    }

    pub(crate) fn write_hwc(&mut self, b: usize, hwc: &[f64]) {
        let [_, c, h, w] = self.shape;
        let plane = h * w;
        let dst = &mut self.data[b * c * plane..(b + 1) * c * plane];
        for ci in 0..c {
            for p in 0..plane {
                dst[ci * plane + p] = hwc[p * c + ci];
            }
        }
    }
}
