//! Magnitude pruning masks and selective weight decay.
//!
//! Every weight tensor (LSTM gate matrices and the output weights) is pruned
//! independently to the same sparsity. Biases are never pruned.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lstm::{Gradients, NetworkParams, SlotKind};
use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum PruneError {
    #[error("cannot prune an empty tensor")]
    EmptyTensor,
    #[error("mask and tensor shapes differ")]
    DimensionMismatch,
    #[error("sparsity {0} outside [0, 1)")]
    BadSparsity(f64),
    #[error("epoch {epoch} outside a {epochs}-epoch schedule")]
    EpochOutOfRange { epoch: usize, epochs: usize },
}

/// Number of weights kept at `sparsity`: `ceil(n * (1 - sparsity))`, at least 1.
pub fn survivor_count(n: usize, sparsity: f64) -> usize {
    // The tolerance absorbs representation error such as 1000 * (1 - 0.8).
    let exact = n as f64 * (1.0 - sparsity);
    ((exact - 1e-9).ceil().max(1.0) as usize).min(n)
}

fn check_sparsity(sparsity: f64) -> Result<(), PruneError> {
    if (0.0..1.0).contains(&sparsity) {
        Ok(())
    } else {
        Err(PruneError::BadSparsity(sparsity))
    }
}

/// Indices ordered by descending magnitude; equal magnitudes keep index order.
fn magnitude_order(w: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()).then(a.cmp(&b)));
    idx
}

/// The k-th largest magnitude, `k = survivor_count(n, sparsity)`.
pub fn magnitude_threshold(w: &[f64], sparsity: f64) -> Result<f64, PruneError> {
    if w.is_empty() {
        return Err(PruneError::EmptyTensor);
    }
    check_sparsity(sparsity)?;
    let k = survivor_count(w.len(), sparsity);
    let order = magnitude_order(w);
    Ok(w[order[k - 1]].abs())
}

/// Keep-mask with exactly `survivor_count` ones: weights above the threshold
/// survive; among weights tied at the threshold the lower indices survive.
pub fn compute_mask(w: &[f64], sparsity: f64) -> Result<Vec<bool>, PruneError> {
    if w.is_empty() {
        return Err(PruneError::EmptyTensor);
    }
    check_sparsity(sparsity)?;
    let k = survivor_count(w.len(), sparsity);
    let mut mask = vec![false; w.len()];
    for &i in magnitude_order(w).iter().take(k) {
        mask[i] = true;
    }
    Ok(mask)
}

/// Zeroes masked-out entries. Pruned values are written as `+0.0`.
pub fn apply_mask(w: &mut [f64], mask: &[bool]) -> Result<(), PruneError> {
    if w.len() != mask.len() {
        return Err(PruneError::DimensionMismatch);
    }
    for (v, &keep) in w.iter_mut().zip(mask) {
        if !keep {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Indices of the selective-weight-decay subset: surviving weights with
/// `|w| > a`, restricted to the `ceil(t * m)` smallest of those `m`
/// magnitudes (ties broken by index).
pub fn select_swd_subset(w: &[f64], mask: &[bool], a: f64, t: f64) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..w.len())
        .filter(|&i| mask.get(i).copied().unwrap_or(false) && w[i].abs() > a)
        .collect();
    if candidates.is_empty() {
        return candidates;
    }
    candidates.sort_by(|&x, &y| w[x].abs().total_cmp(&w[y].abs()).then(x.cmp(&y)));
    let take = ((t * candidates.len() as f64 - 1e-9).ceil().max(0.0) as usize).min(candidates.len());
    candidates.truncate(take);
    candidates.sort_unstable();
    candidates
}

/// `(mu * sum_{i in subset} w_i^2, gradient)` where the gradient is `2 mu w_i`
/// on subset entries and zero elsewhere.
pub fn total_weight_decay(w: &[f64], subset: &[usize], mu: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; w.len()];
    let mut twd = 0.0;
    for &i in subset {
        twd += w[i] * w[i];
        grad[i] = 2.0 * mu * w[i];
    }
    (mu * twd, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsitySchedule {
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_sparsity: f64,
    pub epochs: usize,
}

impl SparsitySchedule {
    pub fn validate(&self) -> Result<(), PruneError> {
        check_sparsity(self.initial)?;
        check_sparsity(self.final_sparsity)?;
        if self.initial > self.final_sparsity {
            return Err(PruneError::BadSparsity(self.initial));
        }
        Ok(())
    }
}

/// Linear ramp from `initial` (first epoch) to `final` (last epoch).
pub fn schedule_sparsity(epoch: usize, sched: &SparsitySchedule) -> Result<f64, PruneError> {
    if epoch >= sched.epochs {
        return Err(PruneError::EpochOutOfRange {
            epoch,
            epochs: sched.epochs,
        });
    }
    if sched.epochs == 1 {
        return Ok(sched.final_sparsity);
    }
    let frac = epoch as f64 / (sched.epochs - 1) as f64;
    Ok(sched.initial + (sched.final_sparsity - sched.initial) * frac)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwdConfig {
    pub a0: f64,
    pub a_growth: f64,
    /// Fraction of eligible survivors (smallest first) that receive the
    /// extra decay; also the cap on `a`.
    #[serde(rename = "t")]
    pub target: f64,
    pub mu: f64,
}

impl Default for SwdConfig {
    fn default() -> Self {
        Self {
            a0: 0.001,
            a_growth: 1.2,
            target: 0.5,
            mu: 1e-4,
        }
    }
}

/// `min(a0 * growth^epoch, T)`.
pub fn schedule_a(epoch: usize, cfg: &SwdConfig) -> f64 {
    let a = cfg.a0 * cfg.a_growth.powf(epoch as f64);
    if a.is_finite() {
        a.min(cfg.target)
    } else {
        cfg.target
    }
}

/// Keep-masks for every weight tensor of a network, in canonical slot order
/// (`None` for biases).
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityMask {
    pub masks: Vec<Option<Vec<bool>>>,
    pub sparsity: f64,
}

impl SparsityMask {
    /// All-ones mask: every weight survives.
    pub fn dense(net: &NetworkParams) -> Self {
        let masks = net
            .slots()
            .iter()
            .map(|s| (s.kind == SlotKind::Weight).then(|| vec![true; s.shape.iter().product()]))
            .collect();
        Self { masks, sparsity: 0.0 }
    }

    pub fn compute(net: &NetworkParams, sparsity: f64) -> Result<Self, PruneError> {
        let mut masks = Vec::new();
        for (slot, t) in net.slots().iter().zip(net.tensors()) {
            masks.push(match slot.kind {
                SlotKind::Weight => Some(compute_mask(t.data(), sparsity)?),
                SlotKind::Bias => None,
            });
        }
        Ok(Self { masks, sparsity })
    }

    pub fn apply(&self, net: &mut NetworkParams) -> Result<(), PruneError> {
        for (t, m) in net.tensors_mut().into_iter().zip(&self.masks) {
            if let Some(m) = m {
                apply_mask(t.data_mut(), m)?;
            }
        }
        Ok(())
    }

    pub fn apply_to_tensors(&self, tensors: &mut [Tensor]) -> Result<(), PruneError> {
        for (t, m) in tensors.iter_mut().zip(&self.masks) {
            if let Some(m) = m {
                apply_mask(t.data_mut(), m)?;
            }
        }
        Ok(())
    }

    /// True when every masked-out weight is exactly `+0.0`.
    pub fn is_satisfied_by(&self, net: &NetworkParams) -> bool {
        net.tensors().iter().zip(&self.masks).all(|(t, m)| match m {
            Some(m) => t
                .data()
                .iter()
                .zip(m)
                .all(|(v, &keep)| keep || v.to_bits() == 0),
            None => true,
        })
    }

    /// `(survivors, total)` per masked tensor, in slot order.
    pub fn survivor_counts(&self) -> Vec<(usize, usize)> {
        self.masks
            .iter()
            .flatten()
            .map(|m| (m.iter().filter(|&&k| k).count(), m.len()))
            .collect()
    }

    /// Fraction of masked-out weights over all prunable tensors.
    pub fn achieved_sparsity(&self) -> f64 {
        let (kept, total) = self
            .survivor_counts()
            .iter()
            .fold((0, 0), |(k, t), (a, b)| (k + a, t + b));
        if total == 0 {
            0.0
        } else {
            1.0 - kept as f64 / total as f64
        }
    }
}

/// Selective weight decay over the whole network: returns the TWD value and
/// its gradient (unscaled by `a`).
pub fn network_twd(net: &NetworkParams, mask: &SparsityMask, a: f64, cfg: &SwdConfig) -> (f64, Gradients) {
    let mut grads = Gradients::zeros_like(net);
    let mut total = 0.0;
    if cfg.mu == 0.0 {
        return (total, grads);
    }
    for ((t, m), g) in net.tensors().into_iter().zip(&mask.masks).zip(&mut grads.tensors) {
        let Some(m) = m else { continue };
        let subset = select_swd_subset(t.data(), m, a, cfg.target);
        let (twd, grad) = total_weight_decay(t.data(), &subset, cfg.mu);
        total += twd;
        g.data_mut().copy_from_slice(&grad);
    }
    (total, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const W: [f64; 5] = [0.5, -0.1, 0.3, -0.7, 0.05];

    /// Plain sort of the magnitudes, k-th largest.
    fn threshold_oracle(w: &[f64], k: usize) -> f64 {
        let mut mags: Vec<f64> = w.iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
        mags[k - 1]
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold_oracle(&W, 3), 0.3);
        assert_eq!(magnitude_threshold(&W, 0.4).unwrap(), 0.3);
        assert_eq!(magnitude_threshold(&W, 0.0).unwrap(), 0.05);
        assert_eq!(magnitude_threshold(&[1.0; 4], 0.5).unwrap(), 1.0);
        assert_eq!(magnitude_threshold(&[], 0.5), Err(PruneError::EmptyTensor));
        assert_eq!(magnitude_threshold(&W, 1.0), Err(PruneError::BadSparsity(1.0)));
    }

    #[test]
    fn mask_examples() {
        assert_eq!(compute_mask(&W, 0.4).unwrap(), vec![true, false, true, true, false]);
        assert_eq!(compute_mask(&W, 0.0).unwrap(), vec![true; 5]);
        assert_eq!(compute_mask(&[1.0; 4], 0.5).unwrap(), vec![true, true, false, false]);
    }

    #[test]
    fn survivor_count_rounding() {
        assert_eq!(survivor_count(1000, 0.8), 200);
        assert_eq!(survivor_count(32, 0.8), 7);
        assert_eq!(survivor_count(5, 0.4), 3);
        assert_eq!(survivor_count(3, 0.99), 1);
    }

    #[test]
    fn apply_mask_examples() {
        let mut w = vec![0.5, 0.2];
        apply_mask(&mut w, &[true, false]).unwrap();
        assert_eq!(w, vec![0.5, 0.0]);
        let mut w = vec![0.5, -0.2];
        apply_mask(&mut w, &[true, true]).unwrap();
        assert_eq!(w, vec![0.5, -0.2]);
        let mut w = vec![-0.5, -0.2, 0.1];
        let m = [false, true, false];
        apply_mask(&mut w, &m).unwrap();
        let once = w.clone();
        apply_mask(&mut w, &m).unwrap();
        assert_eq!(w, once);
        assert_eq!(w[0].to_bits(), 0, "pruned entry must be +0.0");
        assert_eq!(apply_mask(&mut w, &[true]), Err(PruneError::DimensionMismatch));
    }

    #[test]
    fn swd_subset_examples() {
        let w = [0.9, 0.6, 0.3, 0.2];
        let m = [true; 4];
        let sub = select_swd_subset(&w, &m, 0.1, 0.5);
        let vals: Vec<f64> = sub.iter().map(|&i| w[i]).collect();
        assert_eq!(vals, vec![0.3, 0.2]);
        assert!(select_swd_subset(&w, &m, 1.0, 0.5).is_empty());
        assert_eq!(select_swd_subset(&w, &m, 0.0, 1.0), vec![0, 1, 2, 3]);
        // Pruned entries are never selected.
        assert_eq!(select_swd_subset(&w, &[true, true, false, false], 0.0, 1.0), vec![0, 1]);
    }

    #[test]
    fn twd_examples() {
        let (twd, g) = total_weight_decay(&[0.2, -0.1], &[0, 1], 0.01);
        assert_abs_diff_eq!(twd, 5e-4, epsilon = 1e-15);
        assert_abs_diff_eq!(g[0], 0.004, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -0.002, epsilon = 1e-15);
        assert_eq!(total_weight_decay(&[0.2], &[], 0.01).0, 0.0);
        let (twd, g) = total_weight_decay(&[0.2, 0.3], &[0, 1], 0.0);
        assert_eq!(twd, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn sparsity_schedule() {
        let s = SparsitySchedule { initial: 0.25, final_sparsity: 0.8, epochs: 10 };
        assert_eq!(schedule_sparsity(0, &s).unwrap(), 0.25);
        assert_abs_diff_eq!(schedule_sparsity(9, &s).unwrap(), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(schedule_sparsity(4, &s).unwrap(), 0.494_444_444_444, epsilon = 1e-9);
        assert!(matches!(schedule_sparsity(10, &s), Err(PruneError::EpochOutOfRange { .. })));
        let one = SparsitySchedule { epochs: 1, ..s };
        assert_eq!(schedule_sparsity(0, &one).unwrap(), 0.8);
    }

    #[test]
    fn a_schedule() {
        let c = SwdConfig::default();
        assert_eq!(schedule_a(0, &c), 0.001);
        assert_abs_diff_eq!(schedule_a(1, &c), 0.0012, epsilon = 1e-15);
        assert_eq!(schedule_a(500, &c), 0.5);
        assert_eq!(schedule_a(100_000, &c), 0.5);
    }

    proptest! {
        #[test]
        fn mask_keeps_exact_count_and_largest(
            w in prop::collection::vec(-1.0f64..1.0, 1..64),
            s in 0.0f64..0.99,
        ) {
            let m = compute_mask(&w, s).unwrap();
            let k = survivor_count(w.len(), s);
            prop_assert_eq!(m.iter().filter(|&&b| b).count(), k);
            let min_kept = w.iter().zip(&m).filter(|(_, &b)| b).map(|(v, _)| v.abs()).fold(f64::INFINITY, f64::min);
            let max_cut = w.iter().zip(&m).filter(|(_, &b)| !b).map(|(v, _)| v.abs()).fold(0.0, f64::max);
            prop_assert!(max_cut <= min_kept);
            prop_assert_eq!(magnitude_threshold(&w, s).unwrap(), threshold_oracle(&w, k));
        }

        #[test]
        fn swd_subset_bounds(
            w in prop::collection::vec(-1.0f64..1.0, 1..64),
            a in 0.0f64..0.5,
            t in 0.01f64..1.0,
        ) {
            let m = compute_mask(&w, 0.5).unwrap();
            let sub = select_swd_subset(&w, &m, a, t);
            let eligible = (0..w.len()).filter(|&i| m[i] && w[i].abs() > a).count();
            prop_assert!(sub.len() <= (t * eligible as f64).ceil() as usize);
            for &i in &sub {
                prop_assert!(m[i] && w[i].abs() > a);
            }
        }

        #[test]
        fn scaled_twd_gradient_matches_finite_difference(
            w in prop::collection::vec(-1.0f64..1.0, 2..16),
            mu in 0.0f64..0.1,
            a in 0.0f64..0.5,
        ) {
            let sub: Vec<usize> = (0..w.len()).step_by(2).collect();
            let (_, g) = total_weight_decay(&w, &sub, mu);
            let eps = 1e-6;
            for i in 0..w.len() {
                let mut up = w.clone();
                up[i] += eps;
                let mut dn = w.clone();
                dn[i] -= eps;
                let fd = a * (total_weight_decay(&up, &sub, mu).0 - total_weight_decay(&dn, &sub, mu).0) / (2.0 * eps);
                prop_assert!((fd - a * g[i]).abs() < 1e-8);
            }
        }
    }
}
