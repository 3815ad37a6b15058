//! Stacked LSTM with a sigmoid output unit: parameter layout, forward pass,
//! backpropagation through time and binary cross-entropy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{matvec_into, matvec_t_acc, outer_acc, Tensor};

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("forward cache does not match the network")]
    CacheMismatch,
    #[error("invalid architecture: {0}")]
    BadArchitecture(String),
}

/// Gate order used for every per-gate array: forget, input, candidate, output.
pub const GATE_NAMES: [&str; 4] = ["f", "i", "j", "o"];
const F: usize = 0;
const I: usize = 1;
const J: usize = 2;
const O: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input_size: usize,
    pub hidden_sizes: Vec<usize>,
    /// Timesteps per record; each record holds `seq_len * input_size` values.
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    pub dropout_rate: f64,
    /// Reuse the candidate weights for the output gate instead of a
    /// separate `W_o`/`b_o`.
    #[serde(default)]
    pub tied_output_gate: bool,
}

fn default_seq_len() -> usize {
    1
}

impl Architecture {
    pub fn new(input_size: usize, hidden_sizes: Vec<usize>) -> Self {
        Self {
            input_size,
            hidden_sizes,
            seq_len: 1,
            dropout_rate: 0.1,
            tied_output_gate: false,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::BadArchitecture(m.to_string()));
        if self.input_size == 0 {
            return bad("input size must be positive");
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return bad("hidden sizes must be non-empty and positive");
        }
        if self.seq_len == 0 {
            return bad("sequence length must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout rate must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn record_len(&self) -> usize {
        self.seq_len * self.input_size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub input_size: usize,
    pub hidden_size: usize,
    /// `[H x (H + D)]` each, acting on `[h_{t-1}, x_t]`.
    pub w: [Tensor; 4],
    pub b: [Tensor; 4],
}

impl LstmLayerParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let w = std::array::from_fn(|_| Tensor::zeros(&[hidden_size, hidden_size + input_size]));
        let b = std::array::from_fn(|_| Tensor::zeros(&[hidden_size]));
        Self {
            input_size,
            hidden_size,
            w,
            b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Weight,
    Bias,
}

/// Name and role of one tensor in the canonical parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub name: String,
    pub kind: SlotKind,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub layers: Vec<LstmLayerParams>,
    pub head_w: Tensor,
    /// Shape `[1]`.
    pub head_b: Tensor,
}

impl NetworkParams {
    pub fn zeros(arch: &Architecture) -> Result<Self, NetError> {
        arch.validate()?;
        let mut input = arch.input_size;
        let layers = arch
            .hidden_sizes
            .iter()
            .map(|&h| {
                let l = LstmLayerParams::zeros(input, h);
                input = h;
                l
            })
            .collect();
        Ok(Self {
            arch: arch.clone(),
            layers,
            head_w: Tensor::zeros(&[input]),
            head_b: Tensor::zeros(&[1]),
        })
    }

    /// Tensor names and roles in canonical order: per layer the four gate
    /// weights then the four gate biases, then the head weight and bias.
    pub fn slots(&self) -> Vec<Slot> {
        let mut out = Vec::with_capacity(self.layers.len() * 8 + 2);
        for (l, layer) in self.layers.iter().enumerate() {
            for (g, t) in GATE_NAMES.iter().zip(&layer.w) {
                out.push(Slot {
                    name: format!("lstm.{l}.w_{g}"),
                    kind: SlotKind::Weight,
                    shape: t.shape().to_vec(),
                });
            }
            for (g, t) in GATE_NAMES.iter().zip(&layer.b) {
                out.push(Slot {
                    name: format!("lstm.{l}.b_{g}"),
                    kind: SlotKind::Bias,
                    shape: t.shape().to_vec(),
                });
            }
        }
        out.push(Slot {
            name: "head.w".into(),
            kind: SlotKind::Weight,
            shape: self.head_w.shape().to_vec(),
        });
        out.push(Slot {
            name: "head.b".into(),
            kind: SlotKind::Bias,
            shape: vec![1],
        });
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(self.layers.len() * 8 + 2);
        for layer in &self.layers {
            out.extend(layer.w.iter());
            out.extend(layer.b.iter());
        }
        out.push(&self.head_w);
        out.push(&self.head_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(self.layers.len() * 8 + 2);
        for layer in &mut self.layers {
            out.extend(layer.w.iter_mut());
            out.extend(layer.b.iter_mut());
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    /// Rebuilds parameters from tensors in canonical order.
    pub fn from_tensors(arch: &Architecture, tensors: Vec<Tensor>) -> Result<Self, NetError> {
        let mut net = Self::zeros(arch)?;
        let expected = net.tensors().len();
        if tensors.len() != expected {
            return Err(NetError::DimensionMismatch {
                expected,
                got: tensors.len(),
            });
        }
        for (dst, src) in net.tensors_mut().into_iter().zip(tensors) {
            if !dst.same_shape(&src) {
                return Err(NetError::DimensionMismatch {
                    expected: dst.len(),
                    got: src.len(),
                });
            }
            *dst = src;
        }
        Ok(net)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn weight_count(&self) -> usize {
        self.slots()
            .iter()
            .zip(self.tensors())
            .filter(|(s, _)| s.kind == SlotKind::Weight)
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn to_f32_precision(&self) -> NetworkParams {
        let tensors = self.tensors().into_iter().map(Tensor::to_f32_precision).collect();
        Self::from_tensors(&self.arch, tensors).expect("same layout")
    }
}

/// Gradient tree congruent with [`NetworkParams::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(net: &NetworkParams) -> Self {
        Self {
            tensors: net.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.axpy(1.0, b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(factor));
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::sum_squares).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Rescales so the global L2 norm is at most `max_norm`. Returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitMode {
    /// Zero-mean normal with std `sqrt(2 / (fan_in + fan_out))`.
    GlorotNormal,
    /// Zero-mean normal with a fixed std for every weight tensor.
    Normal(f64),
}

/// Random weights, zero biases. Tensors are drawn in canonical order from a
/// ChaCha stream seeded with `seed`.
pub fn init_params(arch: &Architecture, seed: u64, mode: InitMode) -> Result<NetworkParams, NetError> {
    let mut net = NetworkParams::zeros(arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = net.slots();
    for (slot, t) in slots.iter().zip(net.tensors_mut()) {
        if slot.kind != SlotKind::Weight {
            continue;
        }
        let (fan_out, fan_in) = match slot.shape.as_slice() {
            [h, k] => (*h, *k),
            [k] => (1, *k),
            _ => (1, t.len()),
        };
        let std = match mode {
            InitMode::GlorotNormal => (2.0 / (fan_in + fan_out) as f64).sqrt(),
            InitMode::Normal(s) => s,
        };
        let dist = Normal::new(0.0, std).expect("finite std");
        for v in t.data_mut() {
            *v = dist.sample(&mut rng);
        }
    }
    Ok(net)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Values kept from one cell step for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCache {
    /// `[h_{t-1}, x_t]`.
    pub xh: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub j: Vec<f64>,
    pub z: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One LSTM step: gates, new cell state and hidden state.
pub fn lstm_cell_forward(
    layer: &LstmLayerParams,
    x_t: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    tied_output_gate: bool,
) -> Result<(Vec<f64>, Vec<f64>, CellCache), NetError> {
    let (d, h) = (layer.input_size, layer.hidden_size);
    for (want, got) in [(d, x_t.len()), (h, h_prev.len()), (h, c_prev.len())] {
        if want != got {
            return Err(NetError::DimensionMismatch { expected: want, got });
        }
    }
    let mut xh = Vec::with_capacity(h + d);
    xh.extend_from_slice(h_prev);
    xh.extend_from_slice(x_t);

    let mut pre: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h]);
    for g in [F, I, J, O] {
        if g == O && tied_output_gate {
            continue;
        }
        matvec_into(&layer.w[g], &xh, &mut pre[g]);
        for (p, b) in pre[g].iter_mut().zip(layer.b[g].data()) {
            *p += b;
        }
    }
    if tied_output_gate {
        pre[O] = pre[J].clone();
    }

    let f: Vec<f64> = pre[F].iter().map(|&a| sigmoid(a)).collect();
    let i: Vec<f64> = pre[I].iter().map(|&a| sigmoid(a)).collect();
    let j: Vec<f64> = pre[J].iter().map(|&a| a.tanh()).collect();
    let z: Vec<f64> = pre[O].iter().map(|&a| sigmoid(a)).collect();
    let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * j[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h_t: Vec<f64> = z.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();

    let cache = CellCache {
        xh,
        c_prev: c_prev.to_vec(),
        f,
        i,
        j,
        z,
        c: c.clone(),
        tanh_c,
        h: h_t.clone(),
    };
    Ok((h_t, c, cache))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    /// `[layer][t]`.
    pub steps: Vec<Vec<CellCache>>,
    /// Inverted-dropout multipliers (`0` or `1/(1-rate)`) on each layer's
    /// output, `[layer][t]`; `None` when dropout is inactive.
    pub masks: Vec<Vec<Option<Vec<f64>>>>,
    /// Input to the output unit (last layer's output at the final step, after dropout).
    pub head_input: Vec<f64>,
    pub p: f64,
}

/// Runs the stacked network over one record. `sequence` holds
/// `seq_len * input_size` values, timestep-major. `h_0 = c_0 = 0`.
pub fn forward<R: Rng + ?Sized>(
    net: &NetworkParams,
    sequence: &[f64],
    mode: Mode,
    rng: &mut R,
) -> Result<(f64, ForwardCache), NetError> {
    let d0 = net.arch.input_size;
    if d0 == 0 || sequence.is_empty() || !sequence.len().is_multiple_of(d0) {
        return Err(NetError::DimensionMismatch {
            expected: net.arch.record_len(),
            got: sequence.len(),
        });
    }
    let steps_t = sequence.len() / d0;
    let rate = net.arch.dropout_rate;
    let drop = mode == Mode::Train && rate > 0.0;
    let keep_scale = 1.0 / (1.0 - rate);

    let mut inputs: Vec<Vec<f64>> = sequence.chunks(d0).map(<[f64]>::to_vec).collect();
    let mut steps = Vec::with_capacity(net.layers.len());
    let mut masks = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let h = layer.hidden_size;
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut layer_steps = Vec::with_capacity(steps_t);
        let mut layer_masks = Vec::with_capacity(steps_t);
        let mut outputs = Vec::with_capacity(steps_t);
        for x in &inputs {
            let (h_t, c_t, cache) =
                lstm_cell_forward(layer, x, &h_prev, &c_prev, net.arch.tied_output_gate)?;
            let out = if drop {
                let m: Vec<f64> = (0..h)
                    .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep_scale })
                    .collect();
                let o = h_t.iter().zip(&m).map(|(a, b)| a * b).collect();
                layer_masks.push(Some(m));
                o
            } else {
                layer_masks.push(None);
                h_t.clone()
            };
            outputs.push(out);
            layer_steps.push(cache);
            h_prev = h_t;
            c_prev = c_t;
        }
        steps.push(layer_steps);
        masks.push(layer_masks);
        inputs = outputs;
    }
    let head_input = inputs.pop().expect("at least one timestep");
    let logit: f64 = head_input
        .iter()
        .zip(net.head_w.data())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        + net.head_b.data()[0];
    let p = sigmoid(logit);
    Ok((
        p,
        ForwardCache {
            steps,
            masks,
            head_input,
            p,
        },
    ))
}

/// Eval-mode probability; deterministic and RNG-free.
pub fn predict_proba(net: &NetworkParams, sequence: &[f64]) -> Result<f64, NetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    forward(net, sequence, Mode::Eval, &mut rng).map(|(p, _)| p)
}

/// `1` iff the probability reaches `threshold` (ties go to the positive class).
pub fn predict(net: &NetworkParams, sequence: &[f64], threshold: f64) -> Result<u8, NetError> {
    Ok(classify(predict_proba(net, sequence)?, threshold))
}

pub fn classify(p: f64, threshold: f64) -> u8 {
    u8::from(p >= threshold)
}

pub const PROB_EPS: f64 = 1e-7;

/// Binary cross-entropy with the probability clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(p: f64, y: u8) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Exact gradient of `bce_loss(forward(..))` with respect to every
/// parameter, reusing the dropout masks recorded in `cache`.
pub fn backward(net: &NetworkParams, cache: &ForwardCache, y: u8) -> Result<Gradients, NetError> {
    if cache.steps.len() != net.layers.len()
        || cache.masks.len() != net.layers.len()
        || cache.head_input.len() != net.head_w.len()
    {
        return Err(NetError::CacheMismatch);
    }
    let steps_t = cache.steps[0].len();
    for (layer, steps) in net.layers.iter().zip(&cache.steps) {
        if steps.len() != steps_t
            || steps.iter().any(|s| s.xh.len() != layer.input_size + layer.hidden_size)
        {
            return Err(NetError::CacheMismatch);
        }
    }

    let mut grads = Gradients::zeros_like(net);
    let n_layers = net.layers.len();
    let head_w_idx = n_layers * 8;

    let dlogit = cache.p - f64::from(y);
    for (g, a) in grads.tensors[head_w_idx].data_mut().iter_mut().zip(&cache.head_input) {
        *g = dlogit * a;
    }
    grads.tensors[head_w_idx + 1].data_mut()[0] = dlogit;

    let top_h = net.layers[n_layers - 1].hidden_size;
    let mut upstream = vec![vec![0.0; top_h]; steps_t];
    upstream[steps_t - 1] = net.head_w.data().iter().map(|w| dlogit * w).collect();

    let tied = net.arch.tied_output_gate;
    for l in (0..n_layers).rev() {
        let layer = &net.layers[l];
        let (h, d) = (layer.hidden_size, layer.input_size);
        let base = l * 8;
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut down = vec![vec![0.0; d]; steps_t];
        let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h]);
        let mut dxh = vec![0.0; h + d];
        for t in (0..steps_t).rev() {
            let s = &cache.steps[l][t];
            let mask = cache.masks[l][t].as_deref();
            for k in 0..h {
                let up = match mask {
                    Some(m) => upstream[t][k] * m[k],
                    None => upstream[t][k],
                };
                let dh = up + dh_next[k];
                let dc = dc_next[k] + dh * s.z[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                let dz = dh * s.tanh_c[k];
                let df = dc * s.c_prev[k];
                let di = dc * s.j[k];
                let dj = dc * s.i[k];
                dc_next[k] = dc * s.f[k];
                da[F][k] = df * s.f[k] * (1.0 - s.f[k]);
                da[I][k] = di * s.i[k] * (1.0 - s.i[k]);
                da[J][k] = dj * (1.0 - s.j[k] * s.j[k]);
                da[O][k] = dz * s.z[k] * (1.0 - s.z[k]);
                if tied {
                    da[J][k] += da[O][k];
                    da[O][k] = 0.0;
                }
            }
            dxh.iter_mut().for_each(|v| *v = 0.0);
            for g in [F, I, J, O] {
                if g == O && tied {
                    continue;
                }
                outer_acc(&mut grads.tensors[base + g], &da[g], &s.xh);
                grads.tensors[base + 4 + g].axpy(1.0, &Tensor::vector(da[g].clone()));
                matvec_t_acc(&layer.w[g], &da[g], &mut dxh);
            }
            dh_next.copy_from_slice(&dxh[..h]);
            down[t].copy_from_slice(&dxh[h..]);
        }
        upstream = down;
    }
    Ok(grads)
}
