use super::conv::{activate, activation_backward, backward_hwc, forward_hwc, ConvSpec};
use super::tensor::Tensor4;
use crate::error::{Error, Result};

/// A chain of periodic convolutions sharing one flat parameter vector.
///
/// Layer `l` owns `params[offsets[l]..offsets[l + 1]]`: its `[out, in, k, k]`
/// weights followed by its biases. With `residual` set the network input is
/// added to the output of the last layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<ConvSpec>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    residual: bool,
}

struct Record {
    cols: Vec<f64>,
    pre: Vec<f64>,
}

/// Intermediate values of one recorded forward pass.
#[derive(Default)]
pub struct Tape {
    records: Vec<Record>,
    height: usize,
    width: usize,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }
}

impl Network {
    pub fn new(layers: Vec<ConvSpec>, params: Vec<f64>, residual: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Spec("a network needs at least one layer".into()));
        }
        for (l, spec) in layers.iter().enumerate() {
            spec.validate()?;
            if l > 0 && layers[l - 1].out_features != spec.in_features {
                return Err(Error::Spec(format!(
                    "layer {l} expects {} features but layer {} produces {}",
                    spec.in_features,
                    l - 1,
                    layers[l - 1].out_features
                )));
            }
        }
        if residual && layers[0].in_features != layers[layers.len() - 1].out_features {
            return Err(Error::Spec("a residual connection needs equal input and output features".into()));
        }
        let mut offsets = vec![0];
        for spec in &layers {
            offsets.push(offsets.last().unwrap() + spec.param_count());
        }
        if params.len() != *offsets.last().unwrap() {
            return Err(Error::Dimension(format!(
                "{} parameters for a network with {}",
                params.len(),
                offsets.last().unwrap()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("network parameters must be finite".into()));
        }
        Ok(Network { layers, offsets, params, residual })
    }

    pub fn layers(&self) -> &[ConvSpec] {
        &self.layers
    }

    pub fn residual(&self) -> bool {
        self.residual
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// `(weights, bias)` of layer `l`.
    pub fn layer_params(&self, l: usize) -> (&[f64], &[f64]) {
        let p = &self.params[self.offsets[l]..self.offsets[l + 1]];
        p.split_at(self.layers[l].weight_count())
    }

    pub fn in_features(&self) -> usize {
        self.layers[0].in_features
    }

    pub fn out_features(&self) -> usize {
        self.layers[self.layers.len() - 1].out_features
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        if x.features() != self.in_features() {
            return Err(Error::Dimension(format!(
                "network expects {} input features, tensor has {}",
                self.in_features(),
                x.features()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        self.check_input(x)?;
        let (h, w) = (x.height(), x.width());
        let mut out = Tensor4::zeros([x.batch(), self.out_features(), h, w]);
        for b in 0..x.batch() {
            let y = self.run(x.to_hwc(b), h, w, None);
            out.write_hwc(b, &y);
        }
        Ok(out)
    }

    /// Forward pass of a single-item batch that records what [`Network::backward`] needs.
    pub fn forward_recorded(&self, x: &Tensor4, tape: &mut Tape) -> Result<Tensor4> {
        self.check_input(x)?;
        if x.batch() != 1 {
            return Err(Error::Dimension(format!("recorded passes take one batch item, got {}", x.batch())));
        }
        tape.clear();
        tape.height = x.height();
        tape.width = x.width();
        let y = self.run(x.to_hwc(0), x.height(), x.width(), Some(tape));
        let mut out = Tensor4::zeros([1, self.out_features(), x.height(), x.width()]);
        out.write_hwc(0, &y);
        Ok(out)
    }

    fn run(&self, input: Vec<f64>, h: usize, w: usize, mut tape: Option<&mut Tape>) -> Vec<f64> {
        let mut act = input.clone();
        for (l, spec) in self.layers.iter().enumerate() {
            let (weights, bias) = self.layer_params(l);
            let (cols, pre) = forward_hwc(&act, h, w, spec, weights, bias);
            let mut post = pre.clone();
            activate(spec.activation, &mut post);
            if let Some(t) = tape.as_deref_mut() {
                t.records.push(Record { cols, pre });
            }
            act = post;
        }
        if self.residual {
            for (y, x) in act.iter_mut().zip(&input) {
                *y += x;
            }
        }
        act
    }

    /// Reverse pass from `d_out`, the loss gradient w.r.t. the output of the recorded
    /// forward pass. Returns the flat parameter gradient and, on request, the input gradient.
    pub fn backward(&self, tape: &Tape, d_out: &Tensor4, want_input: bool) -> Result<(Vec<f64>, Option<Tensor4>)> {
        if tape.records.is_empty() {
            return Err(Error::State("backward called without a recorded forward pass".into()));
        }
        if tape.records.len() != self.layers.len() {
            return Err(Error::State("tape was recorded with a different network".into()));
        }
        let (h, w) = (tape.height, tape.width);
        if d_out.shape() != [1, self.out_features(), h, w] {
            return Err(Error::Dimension(format!("output gradient {:?} does not match the tape", d_out.shape())));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = d_out.to_hwc(0);
        let skip = self.residual.then(|| delta.clone());
        let mut d_input = None;
        for l in (0..self.layers.len()).rev() {
            let spec = &self.layers[l];
            let rec = &tape.records[l];
            activation_backward(spec.activation, &rec.pre, &mut delta);
            let (weights, _) = self.layer_params(l);
            let need_dx = l > 0 || want_input;
            let g = backward_hwc(&delta, &rec.cols, h, w, spec, weights, need_dx);
            let dst = &mut grads[self.offsets[l]..self.offsets[l + 1]];
            let (dw, db) = dst.split_at_mut(spec.weight_count());
            dw.copy_from_slice(&g.weights);
            db.copy_from_slice(&g.bias);
            match g.input {
                Some(dx) if l > 0 => delta = dx,
                Some(dx) => d_input = Some(dx),
                None => {}
            }
        }
        let d_input = d_input.map(|mut dx| {
            if let Some(s) = &skip {
                for (a, b) in dx.iter_mut().zip(s) {
                    *a += b;
                }
            }
            let mut t = Tensor4::zeros([1, self.in_features(), h, w]);
            t.write_hwc(0, &dx);
            t
        });
        Ok((grads, d_input))
    }
}
