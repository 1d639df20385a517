//! Small fully connected networks with hand-written reverse mode, plus Adam.
//!
//! Batches are stored column-wise: an input batch is a `width × batch`
//! matrix. Hidden layers share one activation; the output layer is linear.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, EimError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut DMatrix<f64>) {
        match self {
            Activation::Relu => z.apply(|v| *v = v.max(0.0)),
            Activation::Tanh => z.apply(|v| *v = v.tanh()),
        }
    }

    /// Multiplies `delta` by the activation derivative, expressed through the
    /// post-activation values.
    fn backprop(self, delta: &mut DMatrix<f64>, post: &DMatrix<f64>) {
        match self {
            Activation::Relu => delta.zip_apply(post, |d, a| {
                if a <= 0.0 {
                    *d = 0.0
                }
            }),
            Activation::Tanh => delta.zip_apply(post, |d, a| *d *= 1.0 - a * a),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// out × in
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: DMatrix::zeros(output, input),
            bias: DVector::zeros(output),
        }
    }

    fn affine(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weight * x;
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    activation: Activation,
}

/// Activations recorded by [`Mlp::forward_cached`]; entry 0 is the input.
pub struct ForwardCache {
    activations: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.activations.last().expect("cache holds at least the input")
    }
}

/// Parameter gradients with the same shapes as the network layers.
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.weight.ncols(), l.weight.nrows()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    /// Adds the gradient of `coef · Σ w²` over all weight matrices.
    pub fn add_l2(&mut self, net: &Mlp, coef: f64) {
        if coef == 0.0 {
            return;
        }
        for (g, l) in self.layers.iter_mut().zip(&net.layers) {
            g.weight += &l.weight * (2.0 * coef);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }
}

impl Mlp {
    /// Random network with layer widths `sizes` (input first, output last).
    /// Weights are uniform with a fan-in scaled range, biases zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output widths");
        let n_layers = sizes.len() - 1;
        let layers = (0..n_layers)
            .map(|l| {
                let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
                let gain = if l + 1 < n_layers && activation == Activation::Relu { 6.0 } else { 3.0 };
                let limit = (gain / fan_in as f64).sqrt();
                let weight = DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..limit));
                Dense {
                    weight,
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Self { layers, activation }
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self { layers, activation }
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(EimError::Input("network without layers".into()));
        }
        for l in &layers {
            check_dim(l.weight.nrows(), l.bias.len())?;
        }
        for w in layers.windows(2) {
            check_dim(w[0].weight.nrows(), w[1].weight.ncols())?;
        }
        Ok(Self { layers, activation })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }
    pub fn activation(&self) -> Activation {
        self.activation
    }
    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }
    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.weight.nrows()));
        s
    }
    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.input_dim(), x.nrows())?;
        let last = self.layers.len() - 1;
        let mut a = self.layers[0].affine(x);
        if last > 0 {
            self.activation.apply(&mut a);
        }
        for (l, layer) in self.layers.iter().enumerate().skip(1) {
            a = layer.affine(&a);
            if l < last {
                self.activation.apply(&mut a);
            }
        }
        Ok(a)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<DVector<f64>> {
        let m = DMatrix::from_column_slice(x.len(), 1, x);
        Ok(self.forward(&m)?.column(0).into_owned())
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<ForwardCache> {
        check_dim(self.input_dim(), x.nrows())?;
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(activations.last().unwrap());
            if l < last {
                self.activation.apply(&mut z);
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    /// Reverse pass for an upstream gradient `grad_out` (out × batch).
    /// Returns parameter gradients summed over the batch and the input gradient.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &DMatrix<f64>) -> (MlpGrads, DMatrix<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.clone();
        for l in (0..self.layers.len()).rev() {
            let input = &cache.activations[l];
            let gw = &delta * input.transpose();
            let gb = delta.column_sum();
            grads.push(Dense { weight: gw, bias: gb });
            let mut prev = self.layers[l].weight.transpose() * &delta;
            if l > 0 {
                self.activation.backprop(&mut prev, input);
            }
            delta = prev;
        }
        grads.reverse();
        (MlpGrads { layers: grads }, delta)
    }

    /// Input gradient only, for an upstream gradient `grad_out`.
    pub fn input_gradient(&self, x: &DMatrix<f64>, grad_out: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_with_input_gradient(x, grad_out)?.1)
    }

    /// Network output together with the input gradient for `grad_out`.
    pub fn forward_with_input_gradient(
        &self,
        x: &DMatrix<f64>,
        grad_out: &DMatrix<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let mut cache = self.forward_cached(x)?;
        let last = self.layers.len() - 1;
        let mut delta = grad_out.clone();
        for l in (0..=last).rev() {
            let mut prev = self.layers[l].weight.transpose() * &delta;
            if l > 0 {
                self.activation.backprop(&mut prev, &cache.activations[l]);
            }
            delta = prev;
        }
        Ok((cache.activations.pop().expect("output layer"), delta))
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        check_dim(self.num_params(), params.len())?;
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weight.len();
            l.weight.as_mut_slice().copy_from_slice(&params[off..off + n]);
            off += n;
            let n = l.bias.len();
            l.bias.as_mut_slice().copy_from_slice(&params[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

/// Adam with bias correction over a fixed flat parameter layout.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn reset(&mut self) {
        self.m.clear();
        self.v.clear();
        self.t = 0;
    }

    fn begin(&mut self, n: usize) -> (f64, f64) {
        if self.m.len() != n {
            self.m = vec![0.0; n];
            self.v = vec![0.0; n];
            self.t = 0;
        }
        self.t += 1;
        (1.0 - self.beta1.powi(self.t), 1.0 - self.beta2.powi(self.t))
    }

    fn update(&mut self, offset: usize, p: &mut [f64], g: &[f64], corr: (f64, f64)) {
        let (b1, b2) = (self.beta1, self.beta2);
        for (k, (pk, gk)) in p.iter_mut().zip(g).enumerate() {
            let m = &mut self.m[offset + k];
            let v = &mut self.v[offset + k];
            *m = b1 * *m + (1.0 - b1) * gk;
            *v = b2 * *v + (1.0 - b2) * gk * gk;
            let mh = *m / corr.0;
            let vh = *v / corr.1;
            *pk -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }

    /// One descent step on a flat parameter vector.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        let corr = self.begin(params.len());
        self.update(0, params, grads, corr);
    }

    /// One descent step on every layer of `net`.
    pub fn step_mlp(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        let corr = self.begin(net.num_params());
        let mut off = 0;
        for (l, g) in net.layers.iter_mut().zip(&grads.layers) {
            let n = l.weight.len();
            self.update(off, l.weight.as_mut_slice(), g.weight.as_slice(), corr);
            off += n;
            let n = l.bias.len();
            self.update(off, l.bias.as_mut_slice(), g.bias.as_slice(), corr);
            off += n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn loss(net: &Mlp, x: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
        net.forward(x).unwrap().component_mul(w).sum()
    }

    /// Central differences on every parameter and input for a random net and
    /// a random linear functional of the outputs.
    fn check_gradients(activation: Activation, seed: u64) {
        let mut rng = rng_from_seed(seed);
        let net = Mlp::new(&[3, 7, 5, 2], activation, &mut rng);
        let x = DMatrix::from_fn(3, 4, |_, _| rng.random_range(-1.5..1.5));
        let w = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
        let cache = net.forward_cached(&x).unwrap();
        let (grads, gx) = net.backward(&cache, &w);
        let analytic = grads.flatten();
        let params = net.params_flat();
        let h = 1e-5;
        for k in 0..params.len() {
            let mut p = params.clone();
            p[k] += h;
            let mut up = net.clone();
            up.set_params_flat(&p).unwrap();
            p[k] -= 2.0 * h;
            let mut down = net.clone();
            down.set_params_flat(&p).unwrap();
            let fd = (loss(&up, &x, &w) - loss(&down, &x, &w)) / (2.0 * h);
            assert!(
                (fd - analytic[k]).abs() <= 1e-4 * fd.abs().max(1e-2),
                "param {k}: fd {fd} vs {}",
                analytic[k]
            );
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (loss(&net, &xp, &w) - loss(&net, &xm, &w)) / (2.0 * h);
            assert!((fd - gx[i]).abs() <= 1e-4 * fd.abs().max(1e-2));
        }
        let gx2 = net.input_gradient(&x, &w).unwrap();
        assert!((gx2 - gx).amax() < 1e-14);
    }

    #[test]
    fn tanh_gradients_match_finite_differences() {
        for seed in 0..5 {
            check_gradients(Activation::Tanh, seed);
        }
    }

    #[test]
    fn relu_gradients_match_finite_differences() {
        for seed in 10..15 {
            check_gradients(Activation::Relu, seed);
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[4, 8, 1], Activation::Relu);
        let out = net.forward_one(&[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn width_mismatch_is_error() {
        let net = Mlp::zeros(&[2, 1], Activation::Relu);
        assert!(net.forward_one(&[1.0]).is_err());
    }

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut adam = Adam::new(0.1, 0.9, 0.999, 1e-8);
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
            adam.step(&mut p, &g);
        }
        assert!(p.iter().all(|v| v.abs() < 1e-2));
    }
}
