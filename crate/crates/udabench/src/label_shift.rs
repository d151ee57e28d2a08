//! Label-inconsistent methods: class-weighted partial adversarial adaptation
//! (PADA), the open-set boundary game (OSBP), and the universal adaptation
//! transferability criterion (UAN), including their prediction rules.

use crate::adversarial::weighted_dann_loss;
use crate::metrics::Prediction;
use crate::models::DomainDiscriminator;
use crate::nn::Mode;
use crate::tensor::{Element, Tape, Var};
use crate::{Error, Result};
use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::Rng;

// ── PADA ────────────────────────────────────────────────────────────────────

/// Class-level weights from target predictions: `gamma` is the column mean
/// of the probability rows, normalized by its maximum.
///
/// Recomputed once per epoch over the full target training partition.
pub fn pada_class_weights<F: Element>(target_probs: &ArrayView2<'_, F>) -> Array1<F> {
    assert!(target_probs.nrows() > 0, "class weights need at least one target prediction");
    let n = F::f(target_probs.nrows() as f64);
    let mut gamma = target_probs.sum_axis(ndarray::Axis(0));
    gamma.mapv_inplace(|g| g / n);
    let max = gamma.iter().cloned().fold(F::neg_infinity(), F::max);
    gamma.mapv_inplace(|g| g / max);
    gamma
}

/// Source classification loss with per-sample class weights
/// `gamma_hat[y_i]` under mean reduction.
pub fn pada_classification_loss<F: Element>(
    tape: &mut Tape<F>,
    source_logits: Var,
    labels: &[usize],
    gamma_hat: &Array1<F>,
) -> Result<Var> {
    let weights = label_weights(labels, gamma_hat)?;
    let logp = tape.log_softmax(source_logits);
    Ok(tape.nll(logp, labels, &weights, F::f(labels.len() as f64)))
}

/// Domain-adversarial loss with source terms weighted by `gamma_hat[y_i]`
/// and unweighted target terms, coupled through GRL(lambda).
#[allow(clippy::too_many_arguments)]
pub fn pada_adversarial_loss<F: Element>(
    tape: &mut Tape<F>,
    source_features: Var,
    target_features: Var,
    labels: &[usize],
    gamma_hat: &Array1<F>,
    disc: &mut DomainDiscriminator<F>,
    lambda: F,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Var> {
    let ws = label_weights(labels, gamma_hat)?;
    let m = tape.val(target_features).shape()[0];
    Ok(weighted_dann_loss(tape, source_features, target_features, disc, lambda, &ws, &vec![F::one(); m], mode, rng))
}

fn label_weights<F: Element>(labels: &[usize], gamma_hat: &Array1<F>) -> Result<Vec<F>> {
    labels
        .iter()
        .map(|&y| {
            gamma_hat
                .get(y)
                .copied()
                .ok_or_else(|| Error::Data(format!("label {y} outside the {}-class weight vector", gamma_hat.len())))
        })
        .collect()
}

// ── OSBP ────────────────────────────────────────────────────────────────────

/// Boundary loss on the (C+1)-way target logits:
/// `-tau ln p_unk - (1 - tau) ln(1 - p_unk)`, averaged over the batch.
///
/// The caller couples the feature path through a sign-flipping GRL so the
/// classifier moves `p_unk` toward `tau` while the feature extractor pushes
/// it away. `p_unk` is clamped to `[1e-7, 1 - 1e-7]`.
pub fn osbp_loss<F: Element>(tape: &mut Tape<F>, target_logits: Var, tau: F) -> Var {
    let classes = tape.val(target_logits).shape()[1];
    assert!(classes >= 2, "OSBP logits must cover C known classes plus unknown");
    let n = tape.val(target_logits).shape()[0];
    let eps = F::f(1e-7);
    let p = tape.softmax(target_logits);
    let p_unk = tape.column(p, classes - 1);
    let p_unk = tape.clamp(p_unk, eps, F::one() - eps);
    let ln_p = tape.ln(p_unk);
    let q = tape.one_minus(p_unk);
    let ln_q = tape.ln(q);
    let mean_p = tape.dot_const(ln_p, vec![F::one() / F::f(n as f64); n]);
    let mean_q = tape.dot_const(ln_q, vec![F::one() / F::f(n as f64); n]);
    let a = tape.scale(mean_p, -tau);
    let b = tape.scale(mean_q, -(F::one() - tau));
    tape.add(a, b)
}

/// Argmax over the C+1 entries; index C maps to unknown. A tie between the
/// unknown entry and a known class resolves to the known class.
pub fn osbp_predict<F: Element>(probs: &ArrayView1<'_, F>) -> Prediction {
    let c = probs.len() - 1;
    let mut best = 0usize;
    for j in 1..probs.len() {
        // strict inequality: earlier (known) indices win ties
        if probs[j] > probs[best] {
            best = j;
        }
    }
    if best == c {
        Prediction::Unknown
    } else {
        Prediction::Known(best as u32)
    }
}

// ── UAN ─────────────────────────────────────────────────────────────────────

/// Which side of the transfer a batch belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainSide {
    Source,
    Target,
}

/// Raw instance-level transferability:
/// `w_s = H(p)/ln|C_s| - d'` and `w_t = d' - H(p)/ln|C_s|`.
pub fn uan_transferability<F: Element>(
    probs: &ArrayView2<'_, F>,
    d_prime: &ArrayView1<'_, F>,
    side: DomainSide,
) -> Array1<F> {
    let classes = probs.ncols();
    assert!(classes >= 2, "transferability needs at least two source classes");
    assert_eq!(probs.nrows(), d_prime.len());
    let ln_c = F::f((classes as f64).ln());
    Array1::from_iter(probs.outer_iter().zip(d_prime.iter()).map(|(row, &d)| {
        let h = row.iter().fold(F::zero(), |acc, &p| if p > F::zero() { acc - p * p.ln() } else { acc });
        let norm = h / ln_c;
        match side {
            DomainSide::Source => norm - d,
            DomainSide::Target => d - norm,
        }
    }))
}

/// Training weights from raw transferability: negatives clamp to zero, then
/// the positive entries are rescaled so their mean is 1. Weights never carry
/// gradients.
pub fn uan_training_weights<F: Element>(raw: &ArrayView1<'_, F>) -> Array1<F> {
    let mut w: Array1<F> = raw.mapv(|v| if v > F::zero() { v } else { F::zero() });
    let nonzero: Vec<F> = w.iter().cloned().filter(|&v| v > F::zero()).collect();
    if !nonzero.is_empty() {
        let mean = nonzero.iter().fold(F::zero(), |a, &b| a + b) / F::f(nonzero.len() as f64);
        if mean > F::zero() {
            w.mapv_inplace(|v| v / mean);
        }
    }
    w
}

/// The three UAN loss terms.
pub struct UanLosses {
    /// Transferability-weighted adversarial domain loss (GRL-coupled).
    pub adversarial: Var,
    /// Unweighted domain loss of the non-adversarial discriminator; its
    /// gradient stops at the feature boundary.
    pub non_adversarial: Var,
    /// Domain-similarity scores `d'` for the source batch.
    pub d_prime_source: Array1<f64>,
    /// Domain-similarity scores `d'` for the target batch.
    pub d_prime_target: Array1<f64>,
}

/// Adversarial and non-adversarial UAN domain losses.
///
/// `G_d` (adversarial, sigmoid) sees GRL(lambda)-coupled features with
/// per-sample transferability weights; `G_d'` (non-adversarial, sigmoid)
/// sees detached features, so no backbone parameter receives gradient from
/// it. Source carries domain target 1, target domain target 0.
#[allow(clippy::too_many_arguments)]
pub fn uan_losses<F: Element>(
    tape: &mut Tape<F>,
    source_features: Var,
    target_features: Var,
    source_probs: &ArrayView2<'_, F>,
    target_probs: &ArrayView2<'_, F>,
    disc: &mut DomainDiscriminator<F>,
    disc_non_adv: &mut DomainDiscriminator<F>,
    lambda: F,
    mode: Mode,
    rng: &mut impl Rng,
) -> UanLosses {
    assert_eq!(disc.out, 1, "UAN uses single-logit sigmoid discriminators");
    assert_eq!(disc_non_adv.out, 1, "UAN uses single-logit sigmoid discriminators");
    let n = tape.val(source_features).shape()[0];
    let m = tape.val(target_features).shape()[0];
    assert!(n > 0 && m > 0, "UAN needs nonempty batches");

    // non-adversarial discriminator on detached features
    let fs_value = tape.val(source_features).clone();
    let ft_value = tape.val(target_features).clone();
    let fs_detached = tape.leaf(fs_value);
    let ft_detached = tape.leaf(ft_value);
    let detached = tape.concat0(&[fs_detached, ft_detached]);
    let z_prime = disc_non_adv.forward(tape, detached, mode, rng);
    let z_prime_flat = tape.reshape(z_prime, vec![n + m]);
    let mut targets = vec![F::one(); n];
    targets.extend(std::iter::repeat_n(F::zero(), m));
    let non_adversarial =
        tape.bce_with_logits(z_prime_flat, targets.clone(), vec![F::one(); n + m], F::f((n + m) as f64));

    // d' values feed the transferability criterion as constants
    let d_prime_all: Vec<f64> = tape
        .val(z_prime_flat)
        .iter()
        .map(|&z| 1.0 / (1.0 + (-z.to_f64().unwrap()).exp()))
        .collect();
    let d_prime_source = Array1::from_iter(d_prime_all[..n].iter().cloned());
    let d_prime_target = Array1::from_iter(d_prime_all[n..].iter().cloned());
    let dps = Array1::from_iter(d_prime_source.iter().map(|&d| F::f(d)));
    let dpt = Array1::from_iter(d_prime_target.iter().map(|&d| F::f(d)));

    let omega_s = uan_transferability(source_probs, &dps.view(), DomainSide::Source);
    let omega_t = uan_transferability(target_probs, &dpt.view(), DomainSide::Target);
    let mut weights = uan_training_weights(&omega_s.view()).to_vec();
    weights.extend(uan_training_weights(&omega_t.view()).to_vec());

    // adversarial discriminator through gradient reversal
    let feats = tape.concat0(&[source_features, target_features]);
    let feats = tape.grl(feats, lambda);
    let z = disc.forward(tape, feats, mode, rng);
    let z_flat = tape.reshape(z, vec![n + m]);
    let adversarial = tape.bce_with_logits(z_flat, targets, weights, F::f((n + m) as f64));

    UanLosses { adversarial, non_adversarial, d_prime_source, d_prime_target }
}

/// UAN test rule: compute `w_t = d' - H(p)/ln|C_s|`; samples on the
/// configured side of the threshold are declared unknown, the rest take the
/// argmax over known classes. The boundary value itself maps to unknown.
///
/// The default reads low transferability as unknown; `unknown_above`
/// inverts the comparison.
pub fn uan_predict<F: Element>(
    probs: &ArrayView1<'_, F>,
    d_prime: F,
    omega0: F,
    unknown_above: bool,
) -> Prediction {
    let probs2 = probs.view().insert_axis(ndarray::Axis(0));
    let omega = uan_transferability(&probs2, &ndarray::arr1(&[d_prime]).view(), DomainSide::Target)[0];
    let unknown = if unknown_above { omega >= omega0 } else { omega <= omega0 };
    if unknown {
        Prediction::Unknown
    } else {
        let mut best = 0usize;
        for j in 1..probs.len() {
            if probs[j] > probs[best] {
                best = j;
            }
        }
        Prediction::Known(best as u32)
    }
}
