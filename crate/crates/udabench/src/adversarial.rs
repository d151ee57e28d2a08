//! Label-consistent adversarial losses: domain-adversarial training (DANN)
//! and conditional adversarial training with entropy re-weighting (CDAN).
//!
//! Domain labels are source = class 0, target = class 1, scored with a
//! two-logit softmax cross-entropy averaged over the combined batch.
//! Gradient reversal couples the discriminator objective to the feature
//! extractor, so one optimizer step realizes the minimax update.

use crate::models::DomainDiscriminator;
use crate::nn::Mode;
use crate::tensor::{Element, Tape, Var};
use crate::{Error, Result};
use ndarray::{Array1, ArrayView2};
use rand::Rng;

/// DANN adversarial loss on bottleneck features.
pub fn dann_loss<F: Element>(
    tape: &mut Tape<F>,
    source_features: Var,
    target_features: Var,
    disc: &mut DomainDiscriminator<F>,
    lambda: F,
    mode: Mode,
    rng: &mut impl Rng,
) -> Var {
    let n = tape.val(source_features).shape()[0];
    let m = tape.val(target_features).shape()[0];
    weighted_dann_loss(
        tape,
        source_features,
        target_features,
        disc,
        lambda,
        &vec![F::one(); n],
        &vec![F::one(); m],
        mode,
        rng,
    )
}

/// DANN loss with per-sample weights (used by the partial and conditional
/// variants). Weights multiply each sample's cross-entropy term under mean
/// reduction over the combined batch; they are constants, not gradient paths.
#[allow(clippy::too_many_arguments)]
pub fn weighted_dann_loss<F: Element>(
    tape: &mut Tape<F>,
    source_features: Var,
    target_features: Var,
    disc: &mut DomainDiscriminator<F>,
    lambda: F,
    source_weights: &[F],
    target_weights: &[F],
    mode: Mode,
    rng: &mut impl Rng,
) -> Var {
    let n = tape.val(source_features).shape()[0];
    let m = tape.val(target_features).shape()[0];
    assert!(n > 0 && m > 0, "adversarial loss needs nonempty batches");
    assert_eq!(disc.out, 2, "DANN expects the two-logit discriminator");
    let feats = tape.concat0(&[source_features, target_features]);
    let feats = tape.grl(feats, lambda);
    let logits = disc.forward(tape, feats, mode, rng);
    let logp = tape.log_softmax(logits);
    let mut labels = vec![0usize; n];
    labels.extend(std::iter::repeat_n(1usize, m));
    let mut weights = source_weights.to_vec();
    weights.extend_from_slice(target_weights);
    tape.nll(logp, &labels, &weights, F::f((n + m) as f64))
}

/// Per-sample entropy weight `w = 1 + e^(-H)` with `H = -sum p ln p`
/// (`0 ln 0 = 0`). For a C-class simplex row, `H` lies in `[0, ln C]` and
/// `w` in `[1 + 1/C, 2]`.
pub fn entropy_weight<F: Element>(probs: &ArrayView2<'_, F>) -> Array1<F> {
    Array1::from_iter(probs.outer_iter().map(|row| {
        let h = row.iter().fold(F::zero(), |acc, &p| {
            if p > F::zero() {
                acc - p * p.ln()
            } else {
                acc
            }
        });
        F::one() + (-h).exp()
    }))
}

/// Multilinear conditioning map: row-wise flattened outer product of
/// features and class probabilities, `[b, d] x [b, C] -> [b, d*C]`.
///
/// The probabilities enter as constants (no gradient back into the
/// classifier). Errors when `d * C` exceeds `max_dim`; no randomized
/// projection fallback exists.
pub fn cdan_multilinear<F: Element>(
    tape: &mut Tape<F>,
    features: Var,
    probs: &ArrayView2<'_, F>,
    max_dim: usize,
) -> Result<Var> {
    let d = tape.val(features).shape()[1];
    let c = probs.ncols();
    if d * c > max_dim {
        return Err(Error::Config(format!(
            "multilinear embedding dimension {}x{} = {} exceeds the configured maximum {max_dim}",
            d,
            c,
            d * c
        )));
    }
    let p = tape.leaf(probs.to_owned().into_dyn());
    Ok(tape.outer_rows(features, p))
}

/// CDAN adversarial loss: domain cross-entropy on multilinear embeddings,
/// optionally entropy-weighted, coupled through GRL(lambda).
#[allow(clippy::too_many_arguments)]
pub fn cdan_loss<F: Element>(
    tape: &mut Tape<F>,
    source: (Var, &ArrayView2<'_, F>),
    target: (Var, &ArrayView2<'_, F>),
    disc: &mut DomainDiscriminator<F>,
    lambda: F,
    use_entropy: bool,
    max_dim: usize,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Var> {
    let (fs, ps) = source;
    let (ft, pt) = target;
    let es = cdan_multilinear(tape, fs, ps, max_dim)?;
    let et = cdan_multilinear(tape, ft, pt, max_dim)?;
    let (ws, wt) = if use_entropy {
        (entropy_weight(ps).to_vec(), entropy_weight(pt).to_vec())
    } else {
        (vec![F::one(); ps.nrows()], vec![F::one(); pt.nrows()])
    };
    Ok(weighted_dann_loss(tape, es, et, disc, lambda, &ws, &wt, mode, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Adam;
    use ndarray::{arr2, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Discriminator that outputs exactly uniform logits.
    fn uniform_disc(inputs: usize, rng: &mut ChaCha8Rng) -> DomainDiscriminator<f64> {
        let mut d = DomainDiscriminator::new("d", inputs, 2, rng);
        for p in d.params() {
            if p.name.contains("fc3") {
                p.value.fill(0.0);
            }
        }
        d
    }

    #[test]
    fn uniform_discriminator_gives_ln2_regardless_of_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut disc = uniform_disc(3, &mut rng);
        for (n, m) in [(2, 2), (5, 3), (1, 7)] {
            let mut tape = Tape::<f64>::new();
            let fs = tape.leaf(Array2::from_shape_simple_fn((n, 3), || rng.random_range(-2.0..2.0)).into_dyn());
            let ft = tape.leaf(Array2::from_shape_simple_fn((m, 3), || rng.random_range(-2.0..2.0)).into_dyn());
            let loss = dann_loss(&mut tape, fs, ft, &mut disc, 1.0, Mode::Eval, &mut rng);
            assert!((tape.scalar(loss) - 2f64.ln()).abs() < 1e-9, "n={n} m={m}");
        }
    }

    #[test]
    fn grl_gives_minus_lambda_times_plain_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut disc = DomainDiscriminator::<f64>::new("d", 3, 2, &mut rng);
        let fs0 = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-1.0..1.0)).into_dyn();
        let ft0 = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-1.0..1.0)).into_dyn();
        let lambda = 0.7;
        let grad = |lam: f64, disc: &mut DomainDiscriminator<f64>| {
            let mut tape = Tape::<f64>::new();
            let fs = tape.param(fs0.clone());
            let ft = tape.leaf(ft0.clone());
            let mut r = ChaCha8Rng::seed_from_u64(9);
            let loss = dann_loss(&mut tape, fs, ft, disc, lam, Mode::Eval, &mut r);
            tape.backward(loss);
            tape.grad(fs).unwrap().clone()
        };
        let g_rev = grad(lambda, &mut disc);
        // "reversal removed": the same loss read through an identity coupling
        let g_plain = {
            let mut tape = Tape::<f64>::new();
            let fs = tape.param(fs0.clone());
            let ft = tape.leaf(ft0.clone());
            let feats = tape.concat0(&[fs, ft]);
            let mut r = ChaCha8Rng::seed_from_u64(9);
            let logits = disc.forward(&mut tape, feats, Mode::Eval, &mut r);
            let logp = tape.log_softmax(logits);
            let labels = [vec![0usize; 4], vec![1usize; 4]].concat();
            let loss = tape.nll(logp, &labels, &[1.0; 8], 8.0);
            tape.backward(loss);
            tape.grad(fs).unwrap().clone()
        };
        for (r, p) in g_rev.iter().zip(g_plain.iter()) {
            assert!((r - (-lambda) * p).abs() < 1e-10);
        }
    }

    #[test]
    fn entropy_weight_spot_values_and_bounds() {
        // one-hot row: H = 0, w = 2
        let one_hot = arr2(&[[1.0, 0.0, 0.0, 0.0]]);
        let w = entropy_weight::<f64>(&one_hot.view());
        assert!((w[0] - 2.0).abs() < 1e-12);
        // uniform over 10 classes: w = 1 + e^(-ln 10) = 1.1
        let uniform = Array2::from_elem((1, 10), 0.1);
        let w = entropy_weight::<f64>(&uniform.view());
        assert!((w[0] - 1.1).abs() < 1e-12);
        // bounds on random simplex rows
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let c = rng.random_range(2..=13);
            let mut row: Vec<f64> = (0..c).map(|_| rng.random_range(0.0..1.0f64)).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= s);
            let probs = Array2::from_shape_vec((1, c), row).unwrap();
            let w = entropy_weight::<f64>(&probs.view())[0];
            let lo = 1.0 + 1.0 / c as f64;
            assert!(w >= lo - 1e-9 && w <= 2.0 + 1e-9, "w={w} outside [{lo}, 2]");
        }
    }

    #[test]
    fn multilinear_hand_example_and_block_structure() {
        let mut tape = Tape::<f64>::new();
        let f = tape.leaf(arr2(&[[1.0, 2.0]]).into_dyn());
        let probs = arr2(&[[0.5, 0.5]]);
        let e = cdan_multilinear(&mut tape, f, &probs.view(), 8192).unwrap();
        assert_eq!(tape.val(e).as_slice().unwrap(), &[0.5, 0.5, 1.0, 1.0]);

        // one-hot probs place the features in block c, zeros elsewhere
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let d = rng.random_range(1..=5);
            let c_total = rng.random_range(2..=6);
            let hot = rng.random_range(0..c_total);
            let feats = Array2::from_shape_simple_fn((1, d), || rng.random_range(-1.0..1.0));
            let mut probs = Array2::zeros((1, c_total));
            probs[[0, hot]] = 1.0;
            let mut tape = Tape::<f64>::new();
            let fv = tape.leaf(feats.clone().into_dyn());
            let e = cdan_multilinear(&mut tape, fv, &probs.view(), 8192).unwrap();
            let ev = tape.val(e);
            for u in 0..d {
                for t in 0..c_total {
                    let want = if t == hot { feats[[0, u]] } else { 0.0 };
                    assert_eq!(ev[[0, u * c_total + t]], want);
                }
            }
        }
    }

    #[test]
    fn multilinear_dimension_guard() {
        let mut tape = Tape::<f64>::new();
        let f = tape.leaf(Array2::<f64>::ones((2, 100)).into_dyn());
        let probs = Array2::from_elem((2, 100), 0.01);
        let err = cdan_multilinear(&mut tape, f, &probs.view(), 8192);
        assert!(err.is_err());
    }

    #[test]
    fn cdan_degenerates_to_dann_for_single_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut disc = DomainDiscriminator::<f64>::new("d", 3, 2, &mut rng);
        let fs0 = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-1.0..1.0)).into_dyn();
        let ft0 = Array2::from_shape_simple_fn((3, 3), || rng.random_range(-1.0..1.0)).into_dyn();
        let ones_s = Array2::<f64>::ones((4, 1));
        let ones_t = Array2::<f64>::ones((3, 1));
        let mut tape = Tape::<f64>::new();
        let fs = tape.leaf(fs0.clone());
        let ft = tape.leaf(ft0.clone());
        let c = cdan_loss(
            &mut tape,
            (fs, &ones_s.view()),
            (ft, &ones_t.view()),
            &mut disc,
            1.0,
            false,
            8192,
            Mode::Eval,
            &mut rng,
        )
        .unwrap();
        let d = dann_loss(&mut tape, fs, ft, &mut disc, 1.0, Mode::Eval, &mut rng);
        assert!((tape.scalar(c) - tape.scalar(d)).abs() < 1e-12);
    }

    #[test]
    fn entropy_weights_factor_out_for_constant_confidence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut disc = DomainDiscriminator::<f64>::new("d", 8, 2, &mut rng);
        let fs0 = Array2::from_shape_simple_fn((3, 4), || rng.random_range(-1.0..1.0)).into_dyn();
        let ft0 = Array2::from_shape_simple_fn((3, 4), || rng.random_range(-1.0..1.0)).into_dyn();
        let eval = |probs_s: Array2<f64>, probs_t: Array2<f64>, use_entropy: bool, disc: &mut DomainDiscriminator<f64>| {
            let mut tape = Tape::<f64>::new();
            let fs = tape.leaf(fs0.clone());
            let ft = tape.leaf(ft0.clone());
            let mut r = ChaCha8Rng::seed_from_u64(11);
            let loss = cdan_loss(
                &mut tape,
                (fs, &probs_s.view()),
                (ft, &probs_t.view()),
                disc,
                1.0,
                use_entropy,
                8192,
                Mode::Eval,
                &mut r,
            )
            .unwrap();
            tape.scalar(loss)
        };
        // all one-hot: every weight is 2 -> loss doubles
        let mut hot_s = Array2::zeros((3, 2));
        let mut hot_t = Array2::zeros((3, 2));
        for i in 0..3 {
            hot_s[[i, i % 2]] = 1.0;
            hot_t[[i, (i + 1) % 2]] = 1.0;
        }
        let unweighted = eval(hot_s.clone(), hot_t.clone(), false, &mut disc);
        let weighted = eval(hot_s, hot_t, true, &mut disc);
        assert!((weighted - 2.0 * unweighted).abs() < 1e-9);
        // uniform over 10 classes: every weight is 1.1
        let uni_s = Array2::from_elem((3, 10), 0.1);
        let uni_t = Array2::from_elem((3, 10), 0.1);
        let unweighted = eval(uni_s.clone(), uni_t.clone(), false, &mut disc);
        let weighted = eval(uni_s, uni_t, true, &mut disc);
        assert!((weighted - 1.1 * unweighted).abs() < 1e-9);
    }

    #[test]
    fn minimax_directional_toy() {
        // two separated Gaussian domains through a linear feature extractor;
        // with lambda = 0 the discriminator drives its loss down, with
        // lambda = 1 the reversed gradient keeps it from separating as well
        let run = |lambda: f64| -> (f64, f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let mut feat = crate::nn::Linear::<f64>::new("f", 2, 2, &mut rng);
            let mut disc = DomainDiscriminator::<f64>::new("d", 2, 2, &mut rng);
            let mut adam = Adam::default();
            let xs0 = Array2::from_shape_simple_fn((16, 2), || rng.random_range(-0.5..0.5) + 1.5).into_dyn();
            let xt0 = Array2::from_shape_simple_fn((16, 2), || rng.random_range(-0.5..0.5) - 1.5).into_dyn();
            let mut first = 0.0;
            let mut last = 0.0;
            for step in 0..50 {
                let mut tape = Tape::<f64>::new();
                let xs = tape.leaf(xs0.clone());
                let xt = tape.leaf(xt0.clone());
                let fs = feat.forward(&mut tape, xs);
                let ft = feat.forward(&mut tape, xt);
                let loss = dann_loss(&mut tape, fs, ft, &mut disc, lambda, Mode::Eval, &mut rng);
                let v = tape.scalar(loss);
                if step == 0 {
                    first = v;
                }
                last = v;
                tape.backward(loss);
                let mut params = feat.params();
                params.extend(disc.params());
                for p in params.iter_mut() {
                    p.pull_grad(&tape);
                }
                adam.step(params, 0.001);
            }
            (first, last)
        };
        let (first0, last0) = run(0.0);
        assert!(last0 < first0, "discriminator alone must reduce its loss: {first0} -> {last0}");
        let (_, last1) = run(1.0);
        assert!(last1 > last0, "adversarial features must keep the discriminator loss higher: {last1} vs {last0}");
    }
}
