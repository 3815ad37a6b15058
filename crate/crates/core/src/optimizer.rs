//! SGD, SGD with momentum and L2 weight decay.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lstm::{Gradients, NetworkParams, SlotKind};
use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum OptError {
    #[error("dimension mismatch between parameters and gradient")]
    DimensionMismatch,
}

fn check(a: &Tensor, b: &Tensor) -> Result<(), OptError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(OptError::DimensionMismatch)
    }
}

/// `theta - eta * grad`.
pub fn sgd_step(theta: &Tensor, grad: &Tensor, eta: f64) -> Result<Tensor, OptError> {
    check(theta, grad)?;
    let mut out = theta.clone();
    out.axpy(-eta, grad);
    Ok(out)
}

/// One momentum step. The update is `u = -eta * grad + alpha * delta_prev`;
/// returns `(theta + u, u)`, where `u` is the new parameter difference.
pub fn sgdm_step(
    theta: &Tensor,
    grad: &Tensor,
    delta_prev: &Tensor,
    eta: f64,
    alpha: f64,
) -> Result<(Tensor, Tensor), OptError> {
    let mut theta = theta.clone();
    let mut delta = delta_prev.clone();
    sgdm_update(&mut theta, grad, &mut delta, eta, alpha)?;
    Ok((theta, delta))
}

pub fn sgdm_update(
    theta: &mut Tensor,
    grad: &Tensor,
    delta: &mut Tensor,
    eta: f64,
    alpha: f64,
) -> Result<(), OptError> {
    check(theta, grad)?;
    check(theta, delta)?;
    for ((t, g), d) in theta
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(delta.data_mut())
    {
        let u = -eta * g + alpha * *d;
        *t += u;
        *d = u;
    }
    Ok(())
}

/// Momentum state for a whole network: the previous parameter difference of
/// every tensor, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdmState {
    pub delta_prev: Vec<Tensor>,
    pub alpha: f64,
    pub eta: f64,
}

impl SgdmState {
    pub fn new(net: &NetworkParams, alpha: f64, eta: f64) -> Self {
        Self {
            delta_prev: net.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
            alpha,
            eta,
        }
    }

    pub fn step(&mut self, net: &mut NetworkParams, grads: &Gradients) -> Result<(), OptError> {
        let params = net.tensors_mut();
        if params.len() != grads.tensors.len() || params.len() != self.delta_prev.len() {
            return Err(OptError::DimensionMismatch);
        }
        for ((theta, g), d) in params.into_iter().zip(&grads.tensors).zip(&mut self.delta_prev) {
            sgdm_update(theta, g, d, self.eta, self.alpha)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegConfig {
    /// Weight-decay coefficient.
    pub mu: f64,
}

impl Default for RegConfig {
    fn default() -> Self {
        Self { mu: 1e-4 }
    }
}

/// `(mu * sum(w^2), 2 * mu * w)`.
pub fn l2_term(weights: &Tensor, mu: f64) -> (f64, Tensor) {
    let penalty = mu * weights.sum_squares();
    let mut grad = weights.clone();
    grad.scale(2.0 * mu);
    (penalty, grad)
}

/// L2 penalty over every weight tensor of the network; biases are excluded
/// and get a zero gradient.
pub fn network_l2(net: &NetworkParams, mu: f64) -> (f64, Gradients) {
    let mut grads = Gradients::zeros_like(net);
    let mut total = 0.0;
    for ((slot, t), g) in net.slots().iter().zip(net.tensors()).zip(&mut grads.tensors) {
        if slot.kind != SlotKind::Weight || mu == 0.0 {
            continue;
        }
        let (p, dg) = l2_term(t, mu);
        total += p;
        *g = dg;
    }
    (total, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn s(v: f64) -> Tensor {
        Tensor::vector(vec![v])
    }

    #[test]
    fn sgd_examples() {
        assert_abs_diff_eq!(sgd_step(&s(1.0), &s(0.5), 0.1).unwrap().data()[0], 0.95, epsilon = 1e-15);
        assert_eq!(sgd_step(&s(1.3), &s(0.0), 0.1).unwrap(), s(1.3));
        let out = sgd_step(
            &Tensor::vector(vec![1.0, -1.0]),
            &Tensor::vector(vec![2.0, -2.0]),
            0.5,
        )
        .unwrap();
        assert_eq!(out.data(), &[0.0, 0.0]);
        assert_eq!(
            sgd_step(&s(1.0), &Tensor::vector(vec![1.0, 2.0]), 0.1),
            Err(OptError::DimensionMismatch)
        );
    }

    #[test]
    fn sgdm_hand_iteration() {
        let (t1, d1) = sgdm_step(&s(1.0), &s(0.5), &s(0.0), 0.1, 0.9).unwrap();
        assert_abs_diff_eq!(t1.data()[0], 0.95, epsilon = 1e-15);
        assert_abs_diff_eq!(d1.data()[0], -0.05, epsilon = 1e-15);
        let (t2, d2) = sgdm_step(&t1, &s(0.5), &d1, 0.1, 0.9).unwrap();
        assert_abs_diff_eq!(t2.data()[0], 0.855, epsilon = 1e-12);
        assert_abs_diff_eq!(d2.data()[0], -0.095, epsilon = 1e-12);
        // Coasting with zero gradient after a -0.05 step.
        let (_, d) = sgdm_step(&s(0.95), &s(0.0), &s(-0.05), 0.1, 0.9).unwrap();
        assert_abs_diff_eq!(d.data()[0], -0.045, epsilon = 1e-15);
    }

    #[test]
    fn momentum_decays_geometrically() {
        let mut theta = s(0.0);
        let mut delta = s(1.0);
        for _ in 0..5 {
            let before = delta.data()[0];
            sgdm_update(&mut theta, &s(0.0), &mut delta, 0.1, 0.9).unwrap();
            assert_abs_diff_eq!(delta.data()[0], 0.9 * before, epsilon = 1e-15);
        }
    }

    #[test]
    fn l2_examples() {
        let (p, g) = l2_term(&Tensor::vector(vec![3.0, 4.0]), 1.0);
        assert_eq!(p, 25.0);
        assert_eq!(g.data(), &[6.0, 8.0]);
        let (p, g) = l2_term(&Tensor::vector(vec![3.0, 4.0]), 0.0);
        assert_eq!(p, 0.0);
        assert_eq!(g.data(), &[0.0, 0.0]);
        let (p, g) = l2_term(&s(0.5), 0.01);
        assert_abs_diff_eq!(p, 0.0025, epsilon = 1e-15);
        assert_abs_diff_eq!(g.data()[0], 0.01, epsilon = 1e-15);
    }

    #[test]
    fn network_l2_skips_biases() {
        use crate::lstm::{Architecture, NetworkParams};
        let mut net = NetworkParams::zeros(&Architecture::new(2, vec![3])).unwrap();
        for t in net.tensors_mut() {
            t.fill(1.0);
        }
        let (p, g) = network_l2(&net, 0.5);
        assert_abs_diff_eq!(p, 0.5 * net.weight_count() as f64, epsilon = 1e-12);
        for (slot, t) in net.slots().iter().zip(&g.tensors) {
            let expect = if slot.kind == SlotKind::Weight { 1.0 } else { 0.0 };
            assert!(t.data().iter().all(|&v| v == expect), "{}", slot.name);
        }
    }

    proptest! {
        #[test]
        fn zero_momentum_equals_sgd(
            theta in prop::collection::vec(-10.0f64..10.0, 1..16),
            seed_g in -5.0f64..5.0,
            eta in 1e-4f64..1.0,
        ) {
            let g: Vec<f64> = theta.iter().enumerate().map(|(i, v)| seed_g * v + i as f64).collect();
            let t = Tensor::vector(theta.clone());
            let gt = Tensor::vector(g);
            let plain = sgd_step(&t, &gt, eta).unwrap();
            let (mom, _) = sgdm_step(&t, &gt, &Tensor::zeros(&[theta.len()]), eta, 0.0).unwrap();
            prop_assert_eq!(plain, mom);
        }

        #[test]
        fn l2_gradient_matches_finite_difference(
            w in prop::collection::vec(-2.0f64..2.0, 1..8),
            mu in 0.0f64..1.0,
        ) {
            let t = Tensor::vector(w.clone());
            let (_, g) = l2_term(&t, mu);
            let eps = 1e-6;
            for i in 0..w.len() {
                let mut up = w.clone();
                up[i] += eps;
                let mut dn = w.clone();
                dn[i] -= eps;
                let fd = (l2_term(&Tensor::vector(up), mu).0 - l2_term(&Tensor::vector(dn), mu).0) / (2.0 * eps);
                prop_assert!((fd - g.data()[i]).abs() < 1e-8);
            }
        }

        #[test]
        fn updates_are_elementwise(
            theta in prop::collection::vec(-3.0f64..3.0, 2..12),
            rot in 1usize..11,
        ) {
            let n = theta.len();
            let g: Vec<f64> = theta.iter().map(|v| v.sin()).collect();
            let d: Vec<f64> = theta.iter().map(|v| 0.1 * v).collect();
            let (out, _) = sgdm_step(&Tensor::vector(theta.clone()), &Tensor::vector(g.clone()), &Tensor::vector(d.clone()), 0.05, 0.9).unwrap();
            let r = rot % n;
            let perm = |v: &[f64]| { let mut v = v.to_vec(); v.rotate_left(r); v };
            let (pout, _) = sgdm_step(&Tensor::vector(perm(&theta)), &Tensor::vector(perm(&g)), &Tensor::vector(perm(&d)), 0.05, 0.9).unwrap();
            let mut back = pout.into_data();
            back.rotate_right(r);
            prop_assert_eq!(back, out.into_data());
        }
    }
}
