//! Fully connected regressor with rectified hidden layers, hand-written
//! backpropagation and a little-endian binary file format.

use std::io::{Read, Write};

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed;

pub const MAGIC: &[u8; 4] = b"DGP1";
pub const INPUT_DIM: usize = 128;
pub const OUTPUT_DIM: usize = 3;
pub const DEFAULT_HIDDEN: [usize; 3] = [256, 256, 256];

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepGpModel {
    pub layers: Vec<Layer>,
}

/// Per-layer parameter gradients, same layout as [`Layer`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f32>>,
    pub bias: Vec<Vec<f32>>,
}

/// Activations kept from a forward pass for the backward pass.
pub struct Trace {
    batch: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`
    /// (post-activation for hidden layers).
    acts: Vec<Vec<f32>>,
}

impl Trace {
    pub fn output(&self) -> &[f32] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// `c (m×n) = a (m×k) · bᵀ` where `b` is stored `n×k` row-major.
fn gemm_abt(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32], beta: f32) {
    unsafe {
        matrixmultiply::sgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c (m×n) = aᵀ · b` where `a` is `k×m` and `b` is `k×n`, both row-major.
fn gemm_atb(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    unsafe {
        matrixmultiply::sgemm(
            m, k, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c (m×n) = a (m×k) · b (k×n)`, all row-major.
fn gemm_ab(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    unsafe {
        matrixmultiply::sgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

impl DeepGpModel {
    /// He-initialised network `dims[0] → … → dims[last]`, zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidParams(format!("layer dims {dims:?}")));
        }
        let mut rng = seed::rng(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let mut layer = Layer::zeros(w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive std");
                for v in &mut layer.weights {
                    *v = normal.sample(&mut rng) as f32;
                }
                layer
            })
            .collect();
        Ok(Self { layers })
    }

    /// The default 128 → 256 → 256 → 256 → 3 regressor.
    pub fn default_topology(seed: u64) -> Self {
        let mut dims = vec![INPUT_DIM];
        dims.extend(DEFAULT_HIDDEN);
        dims.push(OUTPUT_DIM);
        Self::new(&dims, seed).expect("valid default topology")
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        if let Some(l) = self.layers.last() {
            d.push(l.outputs);
        }
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Forward pass over `batch` row-major inputs.
    pub fn forward(&self, input: &[f32], batch: usize) -> Trace {
        assert_eq!(input.len(), batch * self.input_dim(), "input size");
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0f32; batch * layer.outputs];
            for row in out.chunks_exact_mut(layer.outputs) {
                row.copy_from_slice(&layer.bias);
            }
            gemm_abt(batch, layer.inputs, layer.outputs, &acts[l], &layer.weights, &mut out, 1.0);
            if l < last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            acts.push(out);
        }
        Trace { batch, acts }
    }

    pub fn predict(&self, input: &[f32]) -> Vec<f32> {
        self.forward(input, 1).acts.pop().unwrap_or_default()
    }

    /// Gradients of a loss whose derivative with respect to the network
    /// output is `grad_out` (`batch × outputs`).
    pub fn backward(&self, trace: &Trace, grad_out: &[f32]) -> Gradients {
        let b = trace.batch;
        let n = self.layers.len();
        let mut gw = vec![Vec::new(); n];
        let mut gb = vec![Vec::new(); n];
        let mut delta = grad_out.to_vec();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let mut w = vec![0.0f32; layer.weights.len()];
            gemm_atb(layer.outputs, b, layer.inputs, &delta, &trace.acts[l], &mut w);
            let mut bias = vec![0.0f32; layer.outputs];
            for row in delta.chunks_exact(layer.outputs) {
                for (s, v) in bias.iter_mut().zip(row) {
                    *s += v;
                }
            }
            gw[l] = w;
            gb[l] = bias;
            if l > 0 {
                let mut prev = vec![0.0f32; b * layer.inputs];
                gemm_ab(b, layer.outputs, layer.inputs, &delta, &layer.weights, &mut prev);
                // rectifier derivative, taken from the stored post-activation
                for (g, &a) in prev.iter_mut().zip(&trace.acts[l]) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Gradients { weights: gw, bias: gb }
    }

    /// Mean squared error over all `batch × outputs` entries and its gradient.
    pub fn mse_and_grad(&self, input: &[f32], target: &[f32], batch: usize) -> (f64, Gradients) {
        let trace = self.forward(input, batch);
        let out = trace.output();
        let count = out.len() as f64;
        let mut loss = 0.0f64;
        let grad: Vec<f32> = out
            .iter()
            .zip(target)
            .map(|(&y, &t)| {
                let e = y as f64 - t as f64;
                loss += e * e;
                (2.0 * e / count) as f32
            })
            .collect();
        (loss / count, self.backward(&trace, &grad))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        let dims = self.dims();
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for d in dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for layer in &self.layers {
            for v in layer.weights.iter().chain(&layer.bias) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.parameter_count());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            if bytes.len() < pos + n {
                return Err(Error::TruncatedPayload {
                    expected: pos + n,
                    found: bytes.len(),
                });
            }
            let s = &bytes[pos..pos + n];
            pos += n;
            Ok(s)
        };
        if take(4).map_err(|_| Error::MalformedHeader("missing magic".into()))? != MAGIC {
            return Err(Error::MalformedHeader("magic is not DGP1".into()));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes([s[0], s[1], s[2], s[3]]) as usize;
        let count = u32_at(take(4)?);
        if count == 0 || count > 64 {
            return Err(Error::MalformedHeader(format!("layer count {count}")));
        }
        let mut dims = Vec::with_capacity(count + 1);
        for _ in 0..=count {
            let d = u32_at(take(4)?);
            if d == 0 || d > 1 << 16 {
                return Err(Error::MalformedHeader(format!("layer width {d}")));
            }
            dims.push(d);
        }
        let mut layers = Vec::with_capacity(count);
        for w in dims.windows(2) {
            let mut layer = Layer::zeros(w[0], w[1]);
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                let s = take(4)?;
                *v = f32::from_le_bytes([s[0], s[1], s[2], s[3]]);
            }
            layers.push(layer);
        }
        if pos != bytes.len() {
            return Err(Error::MalformedHeader(format!(
                "{} trailing bytes after the weights",
                bytes.len() - pos
            )));
        }
        Ok(Self { layers })
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Largest relative difference between the analytic gradient of the batch
/// MSE and central finite differences of a double-precision forward pass.
/// Relative errors use `max(|analytic|, |numeric|, 1e-3)` as denominator.
pub fn gradient_check(model: &DeepGpModel, input: &[f32], target: &[f32], batch: usize, step: f64) -> f64 {
    let (_, grads) = model.mse_and_grad(input, target, batch);
    let x: Vec<f64> = input.iter().map(|&v| v as f64).collect();
    let t: Vec<f64> = target.iter().map(|&v| v as f64).collect();
    let mut m = Model64::from(model);
    let mut worst = 0.0f64;
    for l in 0..m.layers.len() {
        let nw = m.layers[l].weights.len();
        for i in 0..nw + m.layers[l].bias.len() {
            let analytic = if i < nw { grads.weights[l][i] } else { grads.bias[l][i - nw] } as f64;
            let orig = m.get(l, i);
            m.set(l, i, orig + step);
            let plus = m.mse(&x, &t, batch);
            m.set(l, i, orig - step);
            let minus = m.mse(&x, &t, batch);
            m.set(l, i, orig);
            let numeric = (plus - minus) / (2.0 * step);
            let denom = analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}

struct Layer64 {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Double-precision copy of a model.
struct Model64 {
    layers: Vec<Layer64>,
}

impl Model64 {
    fn from(m: &DeepGpModel) -> Self {
        let layers = m
            .layers
            .iter()
            .map(|l| Layer64 {
                inputs: l.inputs,
                outputs: l.outputs,
                weights: l.weights.iter().map(|&v| v as f64).collect(),
                bias: l.bias.iter().map(|&v| v as f64).collect(),
            })
            .collect();
        Self { layers }
    }

    fn get(&self, l: usize, i: usize) -> f64 {
        let layer = &self.layers[l];
        match i.checked_sub(layer.weights.len()) {
            None => layer.weights[i],
            Some(j) => layer.bias[j],
        }
    }

    fn set(&mut self, l: usize, i: usize, v: f64) {
        let layer = &mut self.layers[l];
        match i.checked_sub(layer.weights.len()) {
            None => layer.weights[i] = v,
            Some(j) => layer.bias[j] = v,
        }
    }

    fn forward(&self, input: &[f64], batch: usize) -> Vec<f64> {
        let mut act = input.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0f64; batch * layer.outputs];
            for s in 0..batch {
                let x = &act[s * layer.inputs..(s + 1) * layer.inputs];
                for o in 0..layer.outputs {
                    let w = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    let v = layer.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                    out[s * layer.outputs + o] = if l < last { v.max(0.0) } else { v };
                }
            }
            act = out;
        }
        act
    }

    fn mse(&self, input: &[f64], target: &[f64], batch: usize) -> f64 {
        let out = self.forward(input, batch);
        out.iter().zip(target).map(|(y, t)| (y - t).powi(2)).sum::<f64>() / out.len() as f64
    }
}
