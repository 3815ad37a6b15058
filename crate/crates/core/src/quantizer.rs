//! Post-training dynamic-range quantization of weights to 8-bit integers.
//!
//! Each weight tensor gets its own affine map `r = S * (q - Z)`. The
//! calibrated range always contains 0, so real zero (and every pruned
//! weight) maps to the integer `Z` and back to exactly `0.0`. Biases and all
//! activations, including the cell state, stay in floating point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lstm::{self, NetError, NetworkParams, SlotKind};
use crate::pruning::SparsityMask;
use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum QuantError {
    #[error("cannot calibrate an empty tensor")]
    EmptyTensor,
    #[error("quantization range [{0}, {1}] does not fit in int8")]
    BadRange(i32, i32),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantConfig {
    pub q_min: i32,
    pub q_max: i32,
    /// Use `[-1, 1]` for every weight tensor instead of its calibrated range.
    pub fixed_range: bool,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            q_min: -128,
            q_max: 127,
            fixed_range: false,
        }
    }
}

impl QuantConfig {
    pub fn validate(&self) -> Result<(), QuantError> {
        if self.q_min < i8::MIN as i32 || self.q_max > i8::MAX as i32 || self.q_min >= self.q_max {
            return Err(QuantError::BadRange(self.q_min, self.q_max));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    /// Stored at `f32` precision, as serialized.
    pub scale: f32,
    pub zero_point: i32,
    pub q_min: i32,
    pub q_max: i32,
    pub f_min: f64,
    pub f_max: f64,
}

impl QuantParams {
    pub fn scale(&self) -> f64 {
        self.scale as f64
    }

    /// Rebuilds parameters from the serialized `(scale, zero_point)`; the
    /// float range is the one the integer grid spans.
    pub fn from_stored(scale: f32, zero_point: i32, q_min: i32, q_max: i32) -> Self {
        let s = scale as f64;
        Self {
            scale,
            zero_point,
            q_min,
            q_max,
            f_min: s * (q_min - zero_point) as f64,
            f_max: s * (q_max - zero_point) as f64,
        }
    }
}

/// Min and max of the tensor, widened to include 0.
pub fn calibrate(values: &[f64]) -> Result<(f64, f64), QuantError> {
    if values.is_empty() {
        return Err(QuantError::EmptyTensor);
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok((lo.min(0.0), hi.max(0.0)))
}

/// Scale and zero point for mapping `[f_min, f_max]` onto `[q_min, q_max]`.
/// A degenerate range gives `S = 1, Z = 0`.
pub fn make_quant_params(f_min: f64, f_max: f64, q_min: i32, q_max: i32) -> QuantParams {
    let q_span = (q_max - q_min) as f64;
    let span = f_max - f_min;
    let scale = (span / q_span) as f32;
    if !(span > 0.0) || !(scale > 0.0) || !scale.is_finite() {
        return QuantParams {
            scale: 1.0,
            zero_point: 0,
            q_min,
            q_max,
            f_min,
            f_max,
        };
    }
    // q_min - f_min / S, written with the exact range ratio so that ranges
    // like (-1, 1) land on the half-integer they should.
    let z_real = q_min as f64 - f_min * q_span / span;
    let zero_point = (z_real.round_ties_even() as i32).clamp(q_min, q_max);
    QuantParams {
        scale,
        zero_point,
        q_min,
        q_max,
        f_min,
        f_max,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub values: Vec<i8>,
    pub shape: Vec<usize>,
    pub params: QuantParams,
}

pub fn quantize_value(r: f64, p: &QuantParams) -> i8 {
    let q = (r / p.scale() + p.zero_point as f64).round_ties_even();
    q.clamp(p.q_min as f64, p.q_max as f64) as i8
}

pub fn dequantize_value(q: i8, p: &QuantParams) -> f64 {
    p.scale() * (q as i32 - p.zero_point) as f64
}

pub fn quantize(tensor: &Tensor, params: &QuantParams) -> QuantizedTensor {
    QuantizedTensor {
        values: tensor.data().iter().map(|&r| quantize_value(r, params)).collect(),
        shape: tensor.shape().to_vec(),
        params: *params,
    }
}

pub fn dequantize(qt: &QuantizedTensor) -> Tensor {
    let data = qt.values.iter().map(|&q| dequantize_value(q, &qt.params)).collect();
    Tensor::from_vec(&qt.shape, data).expect("shape matches values")
}

/// Calibrates and quantizes one tensor.
pub fn quantize_tensor(tensor: &Tensor, cfg: &QuantConfig) -> Result<QuantizedTensor, QuantError> {
    let (lo, hi) = if cfg.fixed_range {
        (-1.0, 1.0)
    } else {
        calibrate(tensor.data())?
    };
    Ok(quantize(tensor, &make_quant_params(lo, hi, cfg.q_min, cfg.q_max)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantSlot {
    Int8(QuantizedTensor),
    /// Kept in floating point (values already rounded to `f32`).
    Float(Tensor),
}

/// Network with int8 weight tensors and `f32` biases, in canonical slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub arch: lstm::Architecture,
    pub config: QuantConfig,
    pub slots: Vec<QuantSlot>,
    /// Present when the source network was pruned; masked weights are stored
    /// as the zero point.
    pub mask: Option<SparsityMask>,
}

pub fn quantize_model(
    net: &NetworkParams,
    cfg: &QuantConfig,
    mask: Option<&SparsityMask>,
) -> Result<QuantizedModel, QuantError> {
    cfg.validate()?;
    let mut slots = Vec::new();
    for (slot, t) in net.slots().iter().zip(net.tensors()) {
        slots.push(match slot.kind {
            SlotKind::Weight => QuantSlot::Int8(quantize_tensor(t, cfg)?),
            SlotKind::Bias => QuantSlot::Float(t.to_f32_precision()),
        });
    }
    if let Some(m) = mask {
        for (s, m) in slots.iter_mut().zip(&m.masks) {
            if let (QuantSlot::Int8(qt), Some(m)) = (s, m) {
                for (q, &keep) in qt.values.iter_mut().zip(m) {
                    if !keep {
                        *q = qt.params.zero_point as i8;
                    }
                }
            }
        }
    }
    Ok(QuantizedModel {
        arch: net.arch.clone(),
        config: *cfg,
        slots,
        mask: mask.cloned(),
    })
}

impl QuantizedModel {
    /// Float network with every weight replaced by its dequantized value.
    pub fn dequantize(&self) -> Result<NetworkParams, QuantError> {
        let tensors = self
            .slots
            .iter()
            .map(|s| match s {
                QuantSlot::Int8(qt) => dequantize(qt),
                QuantSlot::Float(t) => t.clone(),
            })
            .collect();
        Ok(NetworkParams::from_tensors(&self.arch, tensors)?)
    }

    pub fn weight_payload_bytes(&self) -> usize {
        self.slots
            .iter()
            .map(|s| match s {
                QuantSlot::Int8(qt) => qt.values.len(),
                QuantSlot::Float(_) => 0,
            })
            .sum()
    }
}

/// Eval-mode probability with weights dequantized on use; activations and
/// cell state are computed in floating point exactly as in the float path.
pub fn quantized_forward(qm: &QuantizedModel, sequence: &[f64]) -> Result<f64, QuantError> {
    let net = qm.dequantize()?;
    Ok(lstm::predict_proba(&net, sequence)?)
}
