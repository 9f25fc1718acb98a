//! Small feed-forward networks with reverse-mode gradients, forward-mode
//! Jacobian-vector products, Adam, and a flat binary checkpoint format.
//!
//! A network is a shared trunk followed by one or more heads. Hidden layers
//! use `tanh`; every head ends in an identity layer whose outputs are
//! interpreted by the caller (values, categorical logits, Bernoulli logits).

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub hidden: Vec<usize>,
    pub outputs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: usize,
    pub trunk: Vec<usize>,
    pub heads: Vec<HeadSpec>,
}

impl NetworkSpec {
    /// Value network: trunk then a single linear output.
    pub fn value(input: usize, hidden: &[usize]) -> Self {
        Self {
            input,
            trunk: hidden.to_vec(),
            heads: vec![HeadSpec {
                hidden: vec![],
                outputs: 1,
            }],
        }
    }

    /// Actor with a beam head and an RB-group head, each with its own hidden layers.
    pub fn actor(input: usize, trunk: &[usize], head_hidden: &[usize], beam_logits: usize, groups: usize) -> Self {
        Self {
            input,
            trunk: trunk.to_vec(),
            heads: vec![
                HeadSpec {
                    hidden: head_hidden.to_vec(),
                    outputs: beam_logits,
                },
                HeadSpec {
                    hidden: head_hidden.to_vec(),
                    outputs: groups,
                },
            ],
        }
    }

    pub fn outputs(&self) -> usize {
        self.heads.iter().map(|h| h.outputs).sum()
    }

    fn trunk_out(&self) -> usize {
        *self.trunk.last().unwrap_or(&self.input)
    }

    /// Layer shapes in parameter order: trunk layers, then each head's layers.
    fn layers(&self) -> Vec<LayerShape> {
        let mut out = Vec::new();
        let mut offset = 0;
        let mut push = |inp: usize, outp: usize, tanh: bool, out: &mut Vec<LayerShape>| {
            out.push(LayerShape {
                input: inp,
                output: outp,
                offset,
                tanh,
            });
            offset += inp * outp + outp;
        };
        let mut prev = self.input;
        for &h in &self.trunk {
            push(prev, h, true, &mut out);
            prev = h;
        }
        for head in &self.heads {
            let mut p = self.trunk_out();
            for &h in &head.hidden {
                push(p, h, true, &mut out);
                p = h;
            }
            push(p, head.outputs, false, &mut out);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.input * l.output + l.output).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.heads.is_empty() || self.heads.iter().any(|h| h.outputs == 0) {
            return Err(Error::InvalidArgument("network needs inputs and nonempty heads".into()));
        }
        if self.trunk.is_empty() && self.heads.iter().all(|h| h.hidden.is_empty()) {
            return Err(Error::InvalidArgument("network needs at least one hidden layer".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerShape {
    input: usize,
    output: usize,
    offset: usize,
    tanh: bool,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer followed by the final output of each head, in layer order.
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Network weights with Adam moments and step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    pub spec: NetworkSpec,
    pub params: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step: u64,
}

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
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl PolicyParameters {
    /// Glorot-uniform weights, zero biases; the last layer of every head is
    /// scaled by `output_scale`.
    pub fn init(spec: NetworkSpec, seed: u64, output_scale: f64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = spec.num_params();
        let mut params = vec![0.0; n];
        let layers = spec.layers();
        for l in &layers {
            let limit = (6.0 / (l.input + l.output) as f64).sqrt();
            let s = if l.tanh { 1.0 } else { output_scale };
            for w in &mut params[l.offset..l.offset + l.input * l.output] {
                *w = s * limit * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        Ok(Self {
            spec,
            params,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step: 0,
        })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.num_params();
        Ok(Self {
            spec,
            params: vec![0.0; n],
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step: 0,
        })
    }

    /// Forward pass; heads' outputs are concatenated in head order.
    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache> {
        forward_with(&self.spec, &self.params, input)
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.output)
    }

    /// Gradient of `Σ_i loss_i` where `loss_fn(i, output)` returns the loss of
    /// sample `i` and its derivative with respect to the network output.
    pub fn gradient<F>(&self, inputs: &[Vec<f64>], mut loss_fn: F) -> Result<(f64, Vec<f64>)>
    where
        F: FnMut(usize, &[f64]) -> (f64, Vec<f64>),
    {
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        for (i, x) in inputs.iter().enumerate() {
            let cache = self.forward(x)?;
            let (loss, dout) = loss_fn(i, &cache.output);
            if !loss.is_finite() || dout.iter().any(|d| !d.is_finite()) {
                return Err(Error::NonFinite("loss".into()));
            }
            total += loss;
            self.backward_into(&cache, &dout, &mut grad)?;
        }
        Ok((total, grad))
    }

    /// Accumulates `J^T d_output` for one cached sample into `grad`.
    pub fn backward_into(&self, cache: &ForwardCache, d_output: &[f64], grad: &mut [f64]) -> Result<()> {
        if d_output.len() != self.spec.outputs() {
            return Err(Error::ShapeMismatch {
                what: "output gradient",
                expected: self.spec.outputs(),
                got: d_output.len(),
            });
        }
        let layers = self.spec.layers();
        let nt = self.spec.trunk.len();
        let mut d_trunk = vec![0.0; self.spec.trunk_out()];
        let mut li = layers.len();
        let mut out_end = self.spec.outputs();
        for head in self.spec.heads.iter().rev() {
            let out_start = out_end - head.outputs;
            let mut delta = d_output[out_start..out_end].to_vec();
            for _ in 0..head.hidden.len() + 1 {
                li -= 1;
                delta = backprop_layer(&layers[li], &self.params, &cache.inputs[li], &cache.outputs[li], &delta, grad);
            }
            for (a, b) in d_trunk.iter_mut().zip(&delta) {
                *a += b;
            }
            out_end = out_start;
        }
        let mut delta = d_trunk;
        for li in (0..nt).rev() {
            delta = backprop_layer(&layers[li], &self.params, &cache.inputs[li], &cache.outputs[li], &delta, grad);
        }
        Ok(())
    }

    /// Forward-mode derivative of the output along parameter direction `v`.
    pub fn jvp(&self, cache: &ForwardCache, v: &[f64]) -> Vec<f64> {
        let layers = self.spec.layers();
        let nt = self.spec.trunk.len();
        let mut dx = vec![0.0; self.spec.input];
        for li in 0..nt {
            dx = jvp_layer(&layers[li], &self.params, v, &cache.inputs[li], &cache.outputs[li], &dx);
        }
        let d_trunk = dx;
        let mut out = Vec::with_capacity(self.spec.outputs());
        let mut li = nt;
        for head in &self.spec.heads {
            let mut d = d_trunk.clone();
            for _ in 0..head.hidden.len() + 1 {
                d = jvp_layer(&layers[li], &self.params, v, &cache.inputs[li], &cache.outputs[li], &d);
                li += 1;
            }
            out.extend(d);
        }
        out
    }

    /// `(1/B)·Σ_i J_iᵀ M_i J_i v`, where `metric(i, u)` applies the Hessian of
    /// the per-sample KL in the network outputs. At the old parameters this
    /// equals the gradient of `∇KL·v`, i.e. the Fisher-vector product.
    pub fn fisher_vector_product<F>(&self, caches: &[ForwardCache], metric: F, v: &[f64]) -> Vec<f64>
    where
        F: Fn(usize, &[f64]) -> Vec<f64>,
    {
        let mut out = vec![0.0; self.params.len()];
        if caches.is_empty() {
            return out;
        }
        for (i, cache) in caches.iter().enumerate() {
            let jv = self.jvp(cache, v);
            let mjv = metric(i, &jv);
            self.backward_into(cache, &mjv, &mut out)
                .expect("metric output matches network output");
        }
        let inv = 1.0 / caches.len() as f64;
        out.iter_mut().for_each(|x| *x *= inv);
        out
    }

    /// One Adam step; increments the step count.
    pub fn adam_step(&mut self, grad: &[f64], cfg: &AdamConfig) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                what: "gradient",
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..self.params.len() {
            let g = grad[i];
            self.adam_m[i] = cfg.beta1 * self.adam_m[i] + (1.0 - cfg.beta1) * g;
            self.adam_v[i] = cfg.beta2 * self.adam_v[i] + (1.0 - cfg.beta2) * g * g;
            let mh = self.adam_m[i] / c1;
            let vh = self.adam_v[i] / c2;
            self.params[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
        Ok(())
    }

    /// Writes `<path>` (binary) and `<path>.json` (spec sidecar).
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::to_vec(&self.spec).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut buf = Vec::with_capacity(32 + header.len() + 24 * self.params.len());
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        buf.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        buf.extend_from_slice(&self.step.to_le_bytes());
        for arr in [&self.params, &self.adam_m, &self.adam_v] {
            for x in arr.iter() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))?;
        let sidecar = sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.spec).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor { buf: &buf, pos: 0 };
        if cur.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let hlen = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
        let spec: NetworkSpec =
            serde_json::from_slice(cur.take(hlen)?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let n = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
        if n != spec.num_params() {
            return Err(Error::Checkpoint(format!(
                "parameter count {n} does not match spec ({})",
                spec.num_params()
            )));
        }
        let step = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        let read = |cur: &mut Cursor| -> Result<Vec<f64>> {
            (0..n)
                .map(|_| Ok(f64::from_le_bytes(cur.take(8)?.try_into().unwrap())))
                .collect()
        };
        let params = read(&mut cur)?;
        let adam_m = read(&mut cur)?;
        let adam_v = read(&mut cur)?;
        if cur.pos != buf.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self {
            spec,
            params,
            adam_m,
            adam_v,
            step,
        })
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TTDRLNN1";

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

fn forward_with(spec: &NetworkSpec, params: &[f64], input: &[f64]) -> Result<ForwardCache> {
    if input.len() != spec.input {
        return Err(Error::ShapeMismatch {
            what: "network input",
            expected: spec.input,
            got: input.len(),
        });
    }
    let layers = spec.layers();
    let nt = spec.trunk.len();
    let mut inputs = Vec::with_capacity(layers.len());
    let mut outputs = Vec::with_capacity(layers.len());
    let mut x = input.to_vec();
    for l in &layers[..nt] {
        let y = apply_layer(l, params, &x);
        inputs.push(std::mem::replace(&mut x, y.clone()));
        outputs.push(y);
    }
    let trunk = x;
    let mut output = Vec::with_capacity(spec.outputs());
    let mut li = nt;
    for head in &spec.heads {
        let mut h = trunk.clone();
        for _ in 0..head.hidden.len() + 1 {
            let y = apply_layer(&layers[li], params, &h);
            inputs.push(std::mem::replace(&mut h, y.clone()));
            outputs.push(y);
            li += 1;
        }
        output.extend(h);
    }
    Ok(ForwardCache { inputs, outputs, output })
}

fn apply_layer(l: &LayerShape, params: &[f64], x: &[f64]) -> Vec<f64> {
    let w = &params[l.offset..l.offset + l.input * l.output];
    let b = &params[l.offset + l.input * l.output..l.offset + l.input * l.output + l.output];
    (0..l.output)
        .map(|o| {
            let row = &w[o * l.input..(o + 1) * l.input];
            let z = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            if l.tanh {
                z.tanh()
            } else {
                z
            }
        })
        .collect()
}

fn backprop_layer(l: &LayerShape, params: &[f64], x: &[f64], y: &[f64], d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
    let dz: Vec<f64> = if l.tanh {
        d_out.iter().zip(y).map(|(d, y)| d * (1.0 - y * y)).collect()
    } else {
        d_out.to_vec()
    };
    let w = &params[l.offset..l.offset + l.input * l.output];
    let (gw, gb) = grad[l.offset..l.offset + l.input * l.output + l.output].split_at_mut(l.input * l.output);
    let mut dx = vec![0.0; l.input];
    for o in 0..l.output {
        let d = dz[o];
        if d == 0.0 {
            continue;
        }
        gb[o] += d;
        let row = &w[o * l.input..(o + 1) * l.input];
        let grow = &mut gw[o * l.input..(o + 1) * l.input];
        for i in 0..l.input {
            grow[i] += d * x[i];
            dx[i] += d * row[i];
        }
    }
    dx
}

fn jvp_layer(l: &LayerShape, params: &[f64], v: &[f64], x: &[f64], y: &[f64], dx: &[f64]) -> Vec<f64> {
    let w = &params[l.offset..l.offset + l.input * l.output];
    let vw = &v[l.offset..l.offset + l.input * l.output];
    let vb = &v[l.offset + l.input * l.output..l.offset + l.input * l.output + l.output];
    (0..l.output)
        .map(|o| {
            let r = o * l.input..(o + 1) * l.input;
            let dz = vb[o]
                + w[r.clone()].iter().zip(dx).map(|(a, b)| a * b).sum::<f64>()
                + vw[r].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            if l.tanh {
                dz * (1.0 - y[o] * y[o])
            } else {
                dz
            }
        })
        .collect()
}

/// Log-softmax of a logit slice.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// `KL(Cat(old) ‖ Cat(new))` for one categorical head.
pub fn categorical_kl(logits_old: &[f64], logits_new: &[f64]) -> f64 {
    let lp = log_softmax(logits_old);
    let lq = log_softmax(logits_new);
    lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum::<f64>().max(0.0)
}

/// `log σ(z)` computed stably.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    log_sigmoid(z).exp()
}

/// `KL(Bern(σ(old)) ‖ Bern(σ(new)))`.
pub fn bernoulli_kl(old: f64, new: f64) -> f64 {
    let p = sigmoid(old);
    let q1 = 1.0 - p;
    (p * (log_sigmoid(old) - log_sigmoid(new)) + q1 * (log_sigmoid(-old) - log_sigmoid(-new))).max(0.0)
}
