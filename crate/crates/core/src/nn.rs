//! Dense feed-forward networks with hand-written reverse-mode gradients and
//! an Adam optimizer.
//!
//! Batches are stored column-wise: an input batch is `in_dim x batch`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HMLP";
const FORMAT_VERSION: u32 = 1;

/// Element-wise activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Linear => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Linear),
            _ => Err(Error::Checkpoint(format!("unknown activation code {c}"))),
        }
    }
}

/// Per-parameter gradients (or any tensor shaped like the parameters).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Gradients {
    fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net
                .weights
                .iter()
                .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
                .collect(),
            biases: net.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }

    /// Flattened in the same order as [`Mlp::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        self.weights.iter_mut().for_each(|w| *w *= s);
        self.biases.iter_mut().for_each(|b| *b *= s);
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|&x| x == 0.0))
            && self.biases.iter().all(|b| b.iter().all(|&x| x == 0.0))
    }
}

/// Intermediate values kept by [`Mlp::forward_batch`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer inputs; `inputs[0]` is the network input.
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
}

/// Multi-layer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    hidden: Activation,
    output: Activation,
}

impl Mlp {
    /// Weights and biases drawn uniformly in `+-1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, hidden, output)?;
        for (w, b) in net.weights.iter_mut().zip(net.biases.iter_mut()) {
            let bound = 1.0 / (w.ncols() as f64).sqrt();
            w.iter_mut()
                .for_each(|x| *x = rng.random_range(-bound..bound));
            b.iter_mut()
                .for_each(|x| *x = rng.random_range(-bound..bound));
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Dimension(format!("invalid layer sizes {sizes:?}")));
        }
        let weights = sizes
            .windows(2)
            .map(|p| DMatrix::zeros(p[1], p[0]))
            .collect();
        let biases = sizes[1..].iter().map(|&n| DVector::zeros(n)).collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            hidden,
            output,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.biases
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.weights.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameters flattened layer by layer, weights (column-major) then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "{} parameters given, {} expected",
                flat.len(),
                self.num_params()
            )));
        }
        let mut it = flat.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|x| *x = it.next().unwrap());
            b.iter_mut().for_each(|x| *x = it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|x| x.is_finite())
    }

    fn check_input(&self, rows: usize) -> Result<()> {
        if rows != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {rows} rows, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Forward pass over a batch (`in_dim x batch`).
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, ForwardCache)> {
        self.check_input(x.nrows())?;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut a = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * &a;
            for mut col in z.column_iter_mut() {
                col += b;
            }
            let act = self.activation(l);
            let out = z.map(|v| act.apply(v));
            inputs.push(a);
            pre.push(z);
            a = out;
        }
        Ok((a, ForwardCache { inputs, pre }))
    }

    /// Output only.
    pub fn predict_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_batch(x)?.0)
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let m = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let out = self.predict_batch(&m)?;
        Ok(DVector::from_column_slice(out.as_slice()))
    }

    /// Reverse pass. `upstream` is `dL/d(output)` with the batch layout of the
    /// forward call; gradients are summed over the batch.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        upstream: &DMatrix<f64>,
    ) -> Result<(Gradients, DMatrix<f64>)> {
        let layers = self.weights.len();
        let batch = cache.inputs[0].ncols();
        if upstream.nrows() != self.output_dim() || upstream.ncols() != batch {
            return Err(Error::Dimension(format!(
                "upstream gradient {:?}, expected ({}, {batch})",
                upstream.shape(),
                self.output_dim()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = upstream.clone();
        for l in (0..layers).rev() {
            let act = self.activation(l);
            let z = &cache.pre[l];
            let y_out = if l + 1 < layers {
                &cache.inputs[l + 1]
            } else {
                z
            };
            // for the last layer recompute the activation output on the fly
            delta.zip_zip_apply(z, y_out, |d, zz, yy| {
                let y = if l + 1 < layers { yy } else { act.apply(zz) };
                *d *= act.derivative(zz, y)
            });
            grads.weights[l] = &delta * cache.inputs[l].transpose();
            grads.biases[l] = delta.column_sum();
            delta = self.weights[l].transpose() * &delta;
        }
        Ok((grads, delta))
    }

    /// Single-sample reverse pass.
    pub fn backward(
        &self,
        x: &DVector<f64>,
        upstream: &DVector<f64>,
    ) -> Result<(Gradients, DVector<f64>)> {
        let xm = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let (_, cache) = self.forward_batch(&xm)?;
        let um = DMatrix::from_column_slice(upstream.len(), 1, upstream.as_slice());
        let (g, dx) = self.backward_batch(&cache, &um)?;
        Ok((g, DVector::from_column_slice(dx.as_slice())))
    }

    fn same_shape(&self, other: &Mlp) -> Result<()> {
        if self.sizes != other.sizes {
            return Err(Error::Dimension(format!(
                "layer sizes {:?} vs {:?}",
                self.sizes, other.sizes
            )));
        }
        Ok(())
    }

    /// `self <- (1 - tau) self + tau online`.
    pub fn soft_update(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        self.same_shape(online)?;
        for (t, o) in self.weights.iter_mut().zip(&online.weights) {
            t.zip_apply(o, |a, b| *a = (1.0 - tau) * *a + tau * b);
        }
        for (t, o) in self.biases.iter_mut().zip(&online.biases) {
            t.zip_apply(o, |a, b| *a = (1.0 - tau) * *a + tau * b);
        }
        Ok(())
    }

    /// Euclidean distance between two parameter sets.
    pub fn distance(&self, other: &Mlp) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .params()
            .iter()
            .zip(other.params())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Little-endian binary checkpoint: magic, version, layer count, sizes,
    /// activation codes, then every parameter as `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * (self.sizes.len() + self.num_params()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sizes.len() as u32).to_le_bytes());
        for &s in &self.sizes {
            out.extend_from_slice(&(s as u64).to_le_bytes());
        }
        out.push(self.hidden.code());
        out.push(self.output.code());
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut take = |n: usize| take_bytes(&mut cur, n);
        if take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let layers = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        if layers > 64 {
            return Err(Error::Checkpoint(format!(
                "implausible layer count {layers}"
            )));
        }
        let mut sizes = Vec::with_capacity(layers);
        for _ in 0..layers {
            sizes.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
        }
        let codes = take(2)?;
        let (hidden, output) = (
            Activation::from_code(codes[0])?,
            Activation::from_code(codes[1])?,
        );
        let mut net =
            Mlp::zeros(&sizes, hidden, output).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let n = net.num_params();
        let raw = take(8 * n)?;
        let params: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if take(1).is_ok() {
            return Err(Error::Checkpoint("trailing bytes after parameters".into()));
        }
        net.set_params(&params)?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn take_bytes<'a>(cur: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if cur.len() < n {
        return Err(Error::Checkpoint("truncated checkpoint".into()));
    }
    let (head, tail) = cur.split_at(n);
    *cur = tail;
    Ok(head)
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected descent step along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.weights.len() != net.weights.len()
            || grads
                .weights
                .iter()
                .zip(&net.weights)
                .any(|(g, w)| g.shape() != w.shape())
        {
            return Err(Error::Dimension(
                "gradient shapes do not match the network".into(),
            ));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for l in 0..net.weights.len() {
            let (w, g, m, v) = (
                &mut net.weights[l],
                &grads.weights[l],
                &mut self.m.weights[l],
                &mut self.v.weights[l],
            );
            for i in 0..w.len() {
                update(&mut w[i], g[i], &mut m[i], &mut v[i]);
            }
            let (b, g, m, v) = (
                &mut net.biases[l],
                &grads.biases[l],
                &mut self.m.biases[l],
                &mut self.v.biases[l],
            );
            for i in 0..b.len() {
                update(&mut b[i], g[i], &mut m[i], &mut v[i]);
            }
        }
        Ok(())
    }
}

/// Largest relative error between [`Mlp::backward_batch`] and central
/// differences of `sum(upstream . output)` over every parameter and input.
pub fn gradient_check(net: &Mlp, x: &DMatrix<f64>, upstream: &DMatrix<f64>, h: f64) -> Result<f64> {
    let (_, cache) = net.forward_batch(x)?;
    let (grads, dx) = net.backward_batch(&cache, upstream)?;
    let objective = |n: &Mlp, input: &DMatrix<f64>| -> Result<f64> {
        Ok(n.predict_batch(input)?.dot(upstream))
    };
    let analytic = grads.flatten();
    let base = net.params();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-7);
    let mut p = base.clone();
    for i in 0..base.len() {
        p[i] = base[i] + h;
        probe.set_params(&p)?;
        let up = objective(&probe, x)?;
        p[i] = base[i] - h;
        probe.set_params(&p)?;
        let down = objective(&probe, x)?;
        p[i] = base[i];
        worst = worst.max(rel(analytic[i], (up - down) / (2.0 * h)));
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += h;
        let up = objective(net, &xp)?;
        xp[i] -= 2.0 * h;
        let down = objective(net, &xp)?;
        worst = worst.max(rel(dx[i], (up - down) / (2.0 * h)));
    }
    Ok(worst)
}
