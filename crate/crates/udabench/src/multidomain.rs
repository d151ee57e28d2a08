//! Multi-source methods: adversarial multi-domain adaptation over
//! `n_sd + 1` domain classes (sources plus target) and its
//! domain-generalization variant that never sees target data.

use crate::models::DomainDiscriminator;
use crate::nn::Mode;
use crate::tensor::{Element, Tape, Var};
use crate::{Error, Result};
use rand::Rng;

/// Multi-source adversarial adaptation loss.
///
/// The discriminator classifies `n_sd + 1` domains: source domain `n` keeps
/// label `n`, the target batch carries label `n_sd`. Multi-class
/// cross-entropy over the concatenated batch, GRL(lambda)-coupled so the
/// feature extractor maximizes the confusion.
pub fn msuada_loss<F: Element>(
    tape: &mut Tape<F>,
    source_features: &[Var],
    target_features: Var,
    disc: &mut DomainDiscriminator<F>,
    lambda: F,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Var> {
    let n_sd = source_features.len();
    if n_sd < 2 {
        return Err(Error::Task(
            "multi-source adaptation needs at least two source domains (one source degenerates to DANN)".into(),
        ));
    }
    if disc.out != n_sd + 1 {
        return Err(Error::Shape(format!(
            "discriminator has {} outputs, expected n_sd + 1 = {}",
            disc.out,
            n_sd + 1
        )));
    }
    let mut labels = Vec::new();
    let mut parts = Vec::with_capacity(n_sd + 1);
    for (d, &f) in source_features.iter().enumerate() {
        labels.extend(std::iter::repeat_n(d, tape.val(f).shape()[0]));
        parts.push(f);
    }
    labels.extend(std::iter::repeat_n(n_sd, tape.val(target_features).shape()[0]));
    parts.push(target_features);
    domain_cross_entropy(tape, &parts, &labels, disc, lambda, mode, rng)
}

/// Domain-generalization adversarial loss over the source domains only.
///
/// No target data may appear; the caller guards leakage by construction and
/// the discriminator width (`n_sd`) rules out a target class.
pub fn ian_loss<F: Element>(
    tape: &mut Tape<F>,
    source_features: &[Var],
    disc: &mut DomainDiscriminator<F>,
    lambda: F,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Var> {
    let n_sd = source_features.len();
    if n_sd < 2 {
        return Err(Error::Task("domain generalization needs at least two source domains".into()));
    }
    if disc.out != n_sd {
        return Err(Error::Shape(format!("discriminator has {} outputs, expected n_sd = {}", disc.out, n_sd)));
    }
    let mut labels = Vec::new();
    for (d, &f) in source_features.iter().enumerate() {
        labels.extend(std::iter::repeat_n(d, tape.val(f).shape()[0]));
    }
    domain_cross_entropy(tape, source_features, &labels, disc, lambda, mode, rng)
}

fn domain_cross_entropy<F: Element>(
    tape: &mut Tape<F>,
    parts: &[Var],
    labels: &[usize],
    disc: &mut DomainDiscriminator<F>,
    lambda: F,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Var> {
    let feats = tape.concat0(parts);
    let feats = tape.grl(feats, lambda);
    let logits = disc.forward(tape, feats, mode, rng);
    let logp = tape.log_softmax(logits);
    let n = labels.len();
    Ok(tape.nll(logp, labels, &vec![F::one(); n], F::f(n as f64)))
}
