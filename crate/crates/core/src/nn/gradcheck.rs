//! Finite-difference verification of the analytic gradients.
//!
//! The checker perturbs every parameter by ±h, recomputes the loss, and
//! compares the central difference against the backward pass. Two things
//! keep it honest and fast:
//!
//! * the loss is evaluated in the deterministic diagnostic mode (batch
//!   statistics, no dropout, no running-stat updates), the exact function
//!   the backward pass differentiates;
//! * a parameter in stage k cannot influence anything before stage k, so
//!   each probe restarts the forward pass at the perturbed parameter's
//!   stage, reusing the unperturbed prefix from the cached pass. This cuts
//!   the cost enough to check every parameter of the full default
//!   architecture in seconds.

use super::network::{ForwardCache, Network, CONV_BLOCKS, FC_LAYERS};
use super::ops::NnError;
use super::tensor::Tensor;

/// Relative-error floor: differences below this absolute scale are treated
/// as zero-gradient noise rather than divided into huge ratios.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Central finite difference of a scalar function at every coordinate.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(mut f: F, theta: &[f64], h: f64) -> Vec<f64> {
    let mut probe = theta.to_vec();
    (0..probe.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// max over elements of |a−n| / max(|a|, |n|, floor).
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_ERROR_FLOOR))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub params_checked: usize,
}

/// Which stage a parameter tensor belongs to, so the probe can restart the
/// forward pass there.
#[derive(Clone, Copy)]
enum Slot {
    BlockW(usize),
    BlockB(usize),
    BlockGamma(usize),
    BlockBeta(usize),
    FcW(usize),
    FcB(usize),
}

fn slot_param(net: &mut Network, slot: Slot) -> &mut Tensor {
    match slot {
        Slot::BlockW(i) => &mut net.blocks[i].w,
        Slot::BlockB(i) => &mut net.blocks[i].b,
        Slot::BlockGamma(i) => &mut net.blocks[i].gamma,
        Slot::BlockBeta(i) => &mut net.blocks[i].beta,
        Slot::FcW(j) => &mut net.fcs[j].w,
        Slot::FcB(j) => &mut net.fcs[j].b,
    }
}

fn slot_loss(
    net: &Network,
    slot: Slot,
    cache: &ForwardCache,
    labels: &Tensor,
) -> Result<f64, NnError> {
    match slot {
        Slot::BlockW(i) | Slot::BlockB(i) | Slot::BlockGamma(i) | Slot::BlockBeta(i) => {
            net.loss_from_block(i, &cache.blocks[i].conv_in, labels)
        }
        Slot::FcW(j) | Slot::FcB(j) => net.loss_from_fc(j, &cache.fc_inputs[j], labels),
    }
}

/// Compare every analytic parameter gradient against central finite
/// differences with step `h`; returns the worst relative error found.
///
/// The network is restored to its original parameters before returning.
/// Run this on a network with a randomized head — the standard zeroed head
/// makes every upstream gradient exactly zero, which checks nothing.
pub fn grad_check(
    net: &mut Network,
    input: &Tensor,
    labels: &Tensor,
    h: f64,
) -> Result<GradCheckReport, NnError> {
    let (_, cache) = net.forward_stats(input, labels)?;
    let grads = net.backward(&cache)?;

    let mut slots: Vec<(Slot, Tensor)> = Vec::new();
    for i in 0..CONV_BLOCKS {
        slots.push((Slot::BlockW(i), grads.blocks[i].w.clone()));
        slots.push((Slot::BlockB(i), grads.blocks[i].b.clone()));
        slots.push((Slot::BlockGamma(i), grads.blocks[i].gamma.clone()));
        slots.push((Slot::BlockBeta(i), grads.blocks[i].beta.clone()));
    }
    for j in 0..FC_LAYERS {
        slots.push((Slot::FcW(j), grads.fcs[j].w.clone()));
        slots.push((Slot::FcB(j), grads.fcs[j].b.clone()));
    }

    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for (slot, analytic) in slots {
        for e in 0..analytic.len() {
            let orig = slot_param(net, slot).data()[e];
            slot_param(net, slot).data_mut()[e] = orig + h;
            let plus = slot_loss(net, slot, &cache, labels)?;
            slot_param(net, slot).data_mut()[e] = orig - h;
            let minus = slot_loss(net, slot, &cache, labels)?;
            slot_param(net, slot).data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            if rel > worst {
                worst = rel;
            }
            checked += 1;
        }
    }
    Ok(GradCheckReport { max_rel_error: worst, params_checked: checked })
}
