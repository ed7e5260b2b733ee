//! Fully connected networks with hand-written backpropagation.
//!
//! Hidden layers use tanh; the output layer is either tanh (bounded actor
//! heads) or identity (critics and value heads). Weights are stored
//! `(out, in)` and every batch is laid out `(batch, features)`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: &mut Array2<f64>) {
        if self == Activation::Tanh {
            x.mapv_inplace(f64::tanh);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("expected input width {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter vector has length {got}, network needs {expected}")]
    ParamCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    output: Activation,
}

/// Per-layer activations kept for the backward pass. `outputs[0]` is the
/// network input; `outputs[k]` is the post-activation of layer `k - 1`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    outputs: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().unwrap()
    }
}

/// Gradients with the same shapes as the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.w *= c;
            l.b *= c;
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend(l.w.iter());
            v.extend(l.b.iter());
        }
        v
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        out
    }
}

impl Mlp {
    /// Layer sizes `[in, hidden..., out]`; weights and biases drawn from
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn new<R: Rng>(sizes: &[usize], output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|s| {
                let bound = 1.0 / (s[0] as f64).sqrt();
                Dense {
                    w: Array2::from_shape_fn((s[1], s[0]), |_| rng.gen_range(-bound..bound)),
                    b: Array1::from_shape_fn(s[1], |_| rng.gen_range(-bound..bound)),
                }
            })
            .collect();
        Self { layers, output }
    }

    pub fn zeros(sizes: &[usize], output: Activation) -> Self {
        let layers = sizes
            .windows(2)
            .map(|s| Dense {
                w: Array2::zeros((s[1], s[0])),
                b: Array1::zeros(s[1]),
            })
            .collect();
        Self { layers, output }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].w.ncols()];
        s.extend(self.layers.iter().map(|l| l.w.nrows()));
        s
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache, NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(x.to_owned());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = outputs[k].dot(&layer.w.t());
            z += &layer.b;
            if k == last {
                self.output.apply(&mut z);
            } else {
                Activation::Tanh.apply(&mut z);
            }
            outputs.push(z);
        }
        Ok(ForwardCache { outputs })
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        Ok(self.forward_cached(x)?.outputs.pop().unwrap())
    }

    /// Single-sample convenience wrapper.
    pub fn apply(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        Ok(self.forward(x)?.into_raw_vec_and_offset().0)
    }

    /// Backpropagates `upstream = dL/d(output)` through the cached pass.
    /// Returns parameter gradients and `dL/d(input)`.
    pub fn backward(&self, cache: &ForwardCache, upstream: ArrayView2<f64>) -> (Gradients, Array2<f64>) {
        let last = self.layers.len() - 1;
        let mut delta = upstream.to_owned();
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let act = if k == last { self.output } else { Activation::Tanh };
            if act == Activation::Tanh {
                let y = &cache.outputs[k + 1];
                ndarray::Zip::from(&mut delta).and(y).for_each(|d, &y| *d *= 1.0 - y * y);
            }
            let input = &cache.outputs[k];
            let dw = delta.t().dot(input);
            let db = delta.sum_axis(Axis(0));
            let next = delta.dot(&self.layers[k].w);
            grads.push(Dense {
                w: dw.as_standard_layout().into_owned(),
                b: db.as_standard_layout().into_owned(),
            });
            delta = next;
        }
        grads.reverse();
        (Gradients { layers: grads }, delta)
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend(l.w.iter());
            v.extend(l.b.iter());
        }
        v
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.param_count() {
            return Err(NnError::ParamCount {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            for x in l.w.iter_mut() {
                *x = params[off];
                off += 1;
            }
            for x in l.b.iter_mut() {
                *x = params[off];
                off += 1;
            }
        }
        Ok(())
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            if tau == 1.0 {
                t.w.assign(&s.w);
                t.b.assign(&s.b);
            } else {
                t.w.zip_mut_with(&s.w, |a, &b| *a = tau * b + (1.0 - tau) * *a);
                t.b.zip_mut_with(&s.b, |a, &b| *a = tau * b + (1.0 - tau) * *a);
            }
        }
    }
}

/// Adam over a fixed list of parameter slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    /// Applies one descent step; `params` and `grads` are matched slice by
    /// slice and must together cover `param_count` values.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut off = 0;
        for (p, g) in params.into_iter().zip(grads) {
            debug_assert_eq!(p.len(), g.len());
            for (k, (pk, &gk)) in p.iter_mut().zip(g).enumerate() {
                let i = off + k;
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * gk;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * gk * gk;
                let mh = self.m[i] / bc1;
                let vh = self.v[i] / bc2;
                *pk -= self.lr * mh / (vh.sqrt() + self.eps);
            }
            off += p.len();
        }
        debug_assert_eq!(off, self.m.len());
    }

    pub fn step_mlp(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.step(net.param_slices_mut(), grads.slices());
    }
}

/// Serializable snapshot of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub sizes: Vec<usize>,
    pub output: Activation,
}

impl MlpSpec {
    pub fn of(net: &Mlp) -> Self {
        Self {
            sizes: net.sizes(),
            output: net.output,
        }
    }

    pub fn build(&self, params: &[f64]) -> Result<Mlp, NnError> {
        let mut net = Mlp::zeros(&self.sizes, self.output);
        net.set_params_flat(params)?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[5, 8, 3], Activation::Identity);
        let out = net.apply(&[0.3, -1.0, 2.0, 0.0, 1.5]).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn wrong_width_is_rejected() {
        let net = Mlp::zeros(&[5, 3], Activation::Identity);
        assert!(matches!(net.apply(&[1.0; 4]), Err(NnError::DimensionMismatch { expected: 5, got: 4 })));
    }

    #[test]
    fn tanh_head_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[4, 16, 2], Activation::Tanh, &mut rng);
        let out = net.apply(&[100.0, -50.0, 30.0, 7.0]).unwrap();
        assert!(out.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn upstream_scaling_scales_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[6, 10, 10, 3], Activation::Tanh, &mut rng);
        let x = Array2::from_shape_fn((4, 6), |(i, j)| ((i * 7 + j) as f64 * 0.37).sin());
        let up = Array2::from_shape_fn((4, 3), |(i, j)| ((i + 3 * j) as f64 * 0.91).cos());
        let cache = net.forward_cached(x.view()).unwrap();
        let (g1, _) = net.backward(&cache, up.view());
        let (g2, _) = net.backward(&cache, (&up * 3.5).view());
        for (a, b) in g1.flat().iter().zip(g2.flat()) {
            assert!((3.5 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn soft_update_with_unit_tau_copies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = Mlp::new(&[3, 4, 2], Activation::Identity, &mut rng);
        let mut dst = Mlp::new(&[3, 4, 2], Activation::Identity, &mut rng);
        dst.soft_update_from(&src, 1.0);
        assert_eq!(dst, src);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.step(vec![p.as_mut_slice()], vec![g.as_slice()]);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2), "{p:?}");
    }
}
