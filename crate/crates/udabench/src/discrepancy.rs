//! Mapping-based transfer losses: Gaussian kernel ladders, MK-MMD, JMMD, and
//! CORAL.
//!
//! Kernel convention: `k(x, y) = exp(-||x - y||^2 / sigma^2)` with the base
//! `sigma^2` set to the median of the pairwise squared distances over the
//! concatenated batch and one multiplier per ladder rung. The ladder is
//! recomputed from each batch but enters the loss as a constant, so
//! gradients do not flow through the median.

use crate::tensor::{Element, Tape, Var};
use ndarray::ArrayView2;

/// A convex combination of Gaussian kernels.
///
/// With `m` kernels the multipliers are `2^(i - m/2)` for `i in 0..m`
/// (e.g. 1/4, 1/2, 1, 2, 4 for the default `m = 5`) and all combination
/// weights equal `1/m`.
#[derive(Debug, Clone)]
pub struct KernelLadder<F: Element> {
    /// Per-kernel bandwidth `sigma_u^2`.
    pub bandwidths: Vec<F>,
    /// Per-kernel combination weight `alpha_u`; sums to 1.
    pub weights: Vec<F>,
    /// Set when the median distance degenerated to zero and the base
    /// bandwidth fell back to 1.
    pub degenerate: bool,
}

impl<F: Element> KernelLadder<F> {
    /// Ladder around an explicit base bandwidth.
    pub fn with_base(base: F, m: usize) -> Self {
        assert!(m >= 1);
        let half = (m / 2) as i32;
        let bandwidths = (0..m as i32).map(|i| base * F::f(2f64.powi(i - half))).collect();
        KernelLadder { bandwidths, weights: vec![F::one() / F::f(m as f64); m], degenerate: false }
    }

    /// Median-heuristic ladder from a matrix of pairwise squared distances
    /// (self-pairs on the diagonal are excluded).
    pub fn from_sqdists(d: &ArrayView2<'_, F>, m: usize) -> Self {
        let n = d.nrows();
        let mut offdiag: Vec<F> = Vec::with_capacity(n * n - n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    offdiag.push(d[[i, j]]);
                }
            }
        }
        let base = if offdiag.is_empty() {
            F::zero()
        } else {
            offdiag.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mid = offdiag.len() / 2;
            if offdiag.len() % 2 == 0 {
                (offdiag[mid - 1] + offdiag[mid]) / F::f(2.0)
            } else {
                offdiag[mid]
            }
        };
        if base <= F::zero() {
            log::warn!("degenerate kernel batch: median pairwise distance is 0, falling back to bandwidth 1");
            let mut ladder = Self::with_base(F::one(), m);
            ladder.degenerate = true;
            ladder
        } else {
            Self::with_base(base, m)
        }
    }
}

/// Joint Gram matrix of the concatenated batch `[x; y]` under the ladder:
/// `[(n+m) x (n+m)]`, entries `sum_u alpha_u exp(-D_ij / sigma_u^2)`.
pub fn gaussian_gram<F: Element>(tape: &mut Tape<F>, x: Var, y: Var, ladder: &KernelLadder<F>) -> Var {
    let z = tape.concat0(&[x, y]);
    gram_of(tape, z, ladder)
}

fn gram_of<F: Element>(tape: &mut Tape<F>, z: Var, ladder: &KernelLadder<F>) -> Var {
    let d = tape.pairwise_sqdist(z, z);
    let mut acc: Option<Var> = None;
    for (&bw, &w) in ladder.bandwidths.iter().zip(&ladder.weights) {
        let scaled = tape.scale(d, -F::one() / bw);
        let k = tape.exp(scaled);
        let k = tape.scale(k, w);
        acc = Some(match acc {
            Some(a) => tape.add(a, k),
            None => k,
        });
    }
    acc.unwrap()
}

/// Biased (V-statistic) MMD estimate from a joint Gram matrix whose first
/// `n` rows belong to the source batch.
fn vstat<F: Element>(tape: &mut Tape<F>, gram: Var, n: usize, m: usize) -> Var {
    let kss = tape.block(gram, 0, n, 0, n);
    let ktt = tape.block(gram, n, n + m, n, n + m);
    let kst = tape.block(gram, 0, n, n, n + m);
    let mss = tape.mean_all(kss);
    let mtt = tape.mean_all(ktt);
    let mst = tape.mean_all(kst);
    let sum = tape.add(mss, mtt);
    let cross = tape.scale(mst, F::f(2.0));
    tape.sub(sum, cross)
}

/// Multi-kernel MMD with a median-heuristic ladder recomputed from the batch.
///
/// Returns the scalar loss and the ladder that was used.
pub fn mk_mmd<F: Element>(tape: &mut Tape<F>, xs: Var, xt: Var, kernels: usize) -> (Var, KernelLadder<F>) {
    let z = tape.concat0(&[xs, xt]);
    let d = tape.pairwise_sqdist(z, z);
    let ladder = KernelLadder::from_sqdists(&tape.val(d).view().into_dimensionality().unwrap(), kernels);
    (mk_mmd_with(tape, xs, xt, &ladder), ladder)
}

/// Multi-kernel MMD under an explicit ladder.
pub fn mk_mmd_with<F: Element>(tape: &mut Tape<F>, xs: Var, xt: Var, ladder: &KernelLadder<F>) -> Var {
    let n = tape.val(xs).shape()[0];
    let m = tape.val(xt).shape()[0];
    assert!(n >= 2 && m >= 2, "mk_mmd needs at least two samples per domain");
    let gram = gaussian_gram(tape, xs, xt, ladder);
    vstat(tape, gram, n, m)
}

/// Joint MMD over a set of layer activations.
///
/// The joint kernel is the elementwise product of the per-layer Gram
/// matrices (tensor-product Hilbert space); each layer gets its own
/// median-heuristic ladder. Layers are `(source, target)` activation pairs.
pub fn jmmd<F: Element>(tape: &mut Tape<F>, layers: &[(Var, Var)], kernels: usize) -> Var {
    let ladders: Vec<KernelLadder<F>> = layers
        .iter()
        .map(|&(zs, zt)| {
            let z = tape.concat0(&[zs, zt]);
            let d = tape.pairwise_sqdist(z, z);
            KernelLadder::from_sqdists(&tape.val(d).view().into_dimensionality().unwrap(), kernels)
        })
        .collect();
    jmmd_with(tape, layers, &ladders)
}

/// Joint MMD under explicit per-layer ladders.
pub fn jmmd_with<F: Element>(tape: &mut Tape<F>, layers: &[(Var, Var)], ladders: &[KernelLadder<F>]) -> Var {
    assert!(!layers.is_empty(), "jmmd needs at least one layer");
    assert_eq!(layers.len(), ladders.len());
    let n = tape.val(layers[0].0).shape()[0];
    let m = tape.val(layers[0].1).shape()[0];
    assert!(n >= 2 && m >= 2, "jmmd needs at least two samples per domain");
    let mut joint: Option<Var> = None;
    for (&(zs, zt), ladder) in layers.iter().zip(ladders) {
        assert_eq!(tape.val(zs).shape()[0], n, "mismatched source batch across layers");
        assert_eq!(tape.val(zt).shape()[0], m, "mismatched target batch across layers");
        let z = tape.concat0(&[zs, zt]);
        let gram = gram_of(tape, z, ladder);
        joint = Some(match joint {
            Some(j) => tape.mul(j, gram),
            None => gram,
        });
    }
    vstat(tape, joint.unwrap(), n, m)
}

/// CORAL loss: `||C_s - C_t||_F^2 / (4 d^2)` with covariances
/// `C = (X^T X - (1^T X)^T (1^T X) / n) / (n - 1)`.
pub fn coral<F: Element>(tape: &mut Tape<F>, zs: Var, zt: Var) -> Var {
    let d = tape.val(zs).shape()[1];
    assert_eq!(d, tape.val(zt).shape()[1], "coral: feature dimension mismatch");
    let cs = covariance(tape, zs);
    let ct = covariance(tape, zt);
    let diff = tape.sub(cs, ct);
    let sq = tape.mul(diff, diff);
    let fro2 = tape.sum_all(sq);
    tape.scale(fro2, F::one() / F::f(4.0 * (d * d) as f64))
}

fn covariance<F: Element>(tape: &mut Tape<F>, z: Var) -> Var {
    let n = tape.val(z).shape()[0];
    let d = tape.val(z).shape()[1];
    assert!(n >= 2, "covariance needs at least two samples");
    let zt = tape.transpose(z);
    let gram = tape.matmul(zt, z); // X^T X, [d, d]
    let sums = tape.sum_axis0(z); // 1^T X, [d]
    let col = tape.reshape(sums, vec![d, 1]);
    let row = tape.transpose(col); // [1, d]
    let outer = tape.matmul(col, row); // (1^T X)^T (1^T X), [d, d]
    let outer = tape.scale(outer, F::one() / F::f(n as f64));
    let centered = tape.sub(gram, outer);
    tape.scale(centered, F::one() / F::f((n - 1) as f64))
}

/// Plain-value MK-MMD for analysis code that does not need gradients.
pub fn mmd_value<F: Element>(xs: &ArrayView2<'_, F>, xt: &ArrayView2<'_, F>, kernels: usize) -> F {
    let mut tape = Tape::inference();
    let a = tape.leaf(xs.to_owned().into_dyn());
    let b = tape.leaf(xt.to_owned().into_dyn());
    let (loss, _) = mk_mmd(&mut tape, a, b, kernels);
    tape.scalar(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2, ArrayD, IxDyn};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_batch(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0))
    }

    /// Explicit double-loop MMD oracle, independent of the tape path.
    fn brute_mmd(xs: &Array2<f64>, xt: &Array2<f64>, ladder: &KernelLadder<f64>) -> f64 {
        let k = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| -> f64 {
            let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            ladder.bandwidths.iter().zip(&ladder.weights).map(|(&bw, &w)| w * (-d2 / bw).exp()).sum()
        };
        let (n, m) = (xs.nrows(), xt.nrows());
        let mut ss = 0.0;
        let mut tt = 0.0;
        let mut st = 0.0;
        for i in 0..n {
            for j in 0..n {
                ss += k(xs.row(i), xs.row(j));
            }
        }
        for i in 0..m {
            for j in 0..m {
                tt += k(xt.row(i), xt.row(j));
            }
        }
        for i in 0..n {
            for j in 0..m {
                st += k(xs.row(i), xt.row(j));
            }
        }
        ss / (n * n) as f64 + tt / (m * m) as f64 - 2.0 * st / (n * m) as f64
    }

    /// Product-kernel JMMD oracle.
    fn brute_jmmd(layers: &[(Array2<f64>, Array2<f64>)], ladders: &[KernelLadder<f64>]) -> f64 {
        let (n, m) = (layers[0].0.nrows(), layers[0].1.nrows());
        let joint = |i: usize, j: usize| -> f64 {
            let mut prod = 1.0;
            for (l, (zs, zt)) in layers.iter().enumerate() {
                let a = if i < n { zs.row(i) } else { zt.row(i - n) };
                let b = if j < n { zs.row(j) } else { zt.row(j - n) };
                let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                let k: f64 = ladders[l]
                    .bandwidths
                    .iter()
                    .zip(&ladders[l].weights)
                    .map(|(&bw, &w)| w * (-d2 / bw).exp())
                    .sum();
                prod *= k;
            }
            prod
        };
        let mut ss = 0.0;
        let mut tt = 0.0;
        let mut st = 0.0;
        for i in 0..n {
            for j in 0..n {
                ss += joint(i, j);
            }
        }
        for i in 0..m {
            for j in 0..m {
                tt += joint(n + i, n + j);
            }
        }
        for i in 0..n {
            for j in 0..m {
                st += joint(i, n + j);
            }
        }
        ss / (n * n) as f64 + tt / (m * m) as f64 - 2.0 * st / (n * m) as f64
    }

    /// Direct covariance-formula CORAL oracle.
    fn brute_coral(zs: &Array2<f64>, zt: &Array2<f64>) -> f64 {
        let cov = |x: &Array2<f64>| -> Array2<f64> {
            let n = x.nrows() as f64;
            let ones = x.sum_axis(ndarray::Axis(0));
            let mut c = x.t().dot(x);
            for i in 0..x.ncols() {
                for j in 0..x.ncols() {
                    c[[i, j]] = (c[[i, j]] - ones[i] * ones[j] / n) / (n - 1.0);
                }
            }
            c
        };
        let d = zs.ncols() as f64;
        let diff = cov(zs) - cov(zt);
        diff.iter().map(|v| v * v).sum::<f64>() / (4.0 * d * d)
    }

    #[test]
    fn gram_diagonal_is_one_for_identical_points() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(arr2(&[[1.0, 2.0], [3.0, 4.0]]).into_dyn());
        let y = tape.leaf(arr2(&[[0.0, 0.0], [5.0, 5.0]]).into_dyn());
        let ladder = KernelLadder::with_base(2.0, 1);
        let g = gaussian_gram(&mut tape, x, y, &ladder);
        let gv = tape.val(g);
        for i in 0..4 {
            assert!((gv[[i, i]] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_points_at_median_distance_give_exp_minus_one() {
        // two points with squared distance 2 -> median 2 -> k = e^-1 at multiplier 1
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(arr2(&[[0.0]]).into_dyn());
        let y = tape.leaf(arr2(&[[2.0f64.sqrt()]]).into_dyn());
        let z = tape.concat0(&[x, y]);
        let d = tape.pairwise_sqdist(z, z);
        let ladder = KernelLadder::<f64>::from_sqdists(&tape.val(d).view().into_dimensionality().unwrap(), 1);
        assert!((ladder.bandwidths[0] - 2.0).abs() < 1e-12);
        let g = gaussian_gram(&mut tape, x, y, &ladder);
        assert!((tape.val(g)[[0, 1]] - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn ladder_weights_average_the_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xs = rand_batch(4, 3, &mut rng);
        let ys = rand_batch(3, 3, &mut rng);
        let ladder = KernelLadder::with_base(1.5, 5);
        assert_eq!(ladder.weights, vec![0.2; 5]);
        assert!((ladder.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(xs.clone().into_dyn());
        let y = tape.leaf(ys.clone().into_dyn());
        let g = gaussian_gram(&mut tape, x, y, &ladder);
        // gram equals (1/5) * sum of single-kernel grams
        let mut want = ArrayD::<f64>::zeros(IxDyn(&[7, 7]));
        for &bw in &ladder.bandwidths {
            let single = KernelLadder::with_base(bw, 1);
            let mut t2 = Tape::<f64>::new();
            let x2 = t2.leaf(xs.clone().into_dyn());
            let y2 = t2.leaf(ys.clone().into_dyn());
            let g2 = gaussian_gram(&mut t2, x2, y2, &single);
            want += &(t2.val(g2) * 0.2);
        }
        let got = tape.val(g);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mmd_of_identical_batches_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = rand_batch(6, 4, &mut rng);
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(xs.clone().into_dyn());
        let b = tape.leaf(xs.into_dyn());
        let (loss, _) = mk_mmd(&mut tape, a, b, 5);
        assert!(tape.scalar(loss).abs() < 1e-7);
    }

    #[test]
    fn mmd_matches_brute_force_on_random_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..50 {
            let n = rng.random_range(2..=8);
            let m = rng.random_range(2..=8);
            let d = rng.random_range(1..=6);
            let xs = rand_batch(n, d, &mut rng);
            let xt = rand_batch(m, d, &mut rng);
            let mut tape = Tape::<f64>::new();
            let a = tape.leaf(xs.clone().into_dyn());
            let b = tape.leaf(xt.clone().into_dyn());
            let (loss, ladder) = mk_mmd(&mut tape, a, b, 5);
            let got = tape.scalar(loss);
            let want = brute_mmd(&xs, &xt, &ladder);
            assert!((got - want).abs() < 1e-6, "trial {trial}: {got} vs {want}");
            assert!(got >= -1e-7, "V-statistic must be nonnegative, got {got}");
        }
    }

    #[test]
    fn mmd_is_symmetric_and_increases_under_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs = rand_batch(8, 4, &mut rng);
        let xt = rand_batch(8, 4, &mut rng);
        let ladder = KernelLadder::with_base(4.0, 5);
        let eval = |a: &Array2<f64>, b: &Array2<f64>| {
            let mut tape = Tape::<f64>::new();
            let av = tape.leaf(a.clone().into_dyn());
            let bv = tape.leaf(b.clone().into_dyn());
            let l = mk_mmd_with(&mut tape, av, bv, &ladder);
            tape.scalar(l)
        };
        let ab = eval(&xs, &xt);
        let ba = eval(&xt, &xs);
        assert!((ab - ba).abs() < 1e-12);
        let shifted = &xs + 10.0;
        assert!(eval(&xs, &shifted) > eval(&xs, &xs) + 0.1);
    }

    #[test]
    fn jmmd_reduces_to_mmd_for_single_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = rand_batch(5, 3, &mut rng);
        let xt = rand_batch(6, 3, &mut rng);
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(xs.clone().into_dyn());
        let b = tape.leaf(xt.clone().into_dyn());
        let j = jmmd(&mut tape, &[(a, b)], 5);
        let (m, _) = mk_mmd(&mut tape, a, b, 5);
        assert!((tape.scalar(j) - tape.scalar(m)).abs() < 1e-12);
    }

    #[test]
    fn jmmd_identical_layers_zero_and_brute_force_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs = rand_batch(5, 3, &mut rng);
        let ps = rand_batch(5, 2, &mut rng);
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(xs.clone().into_dyn());
        let b = tape.leaf(xs.clone().into_dyn());
        let pa = tape.leaf(ps.clone().into_dyn());
        let pb = tape.leaf(ps.clone().into_dyn());
        let j = jmmd(&mut tape, &[(a, b), (pa, pb)], 5);
        assert!(tape.scalar(j).abs() < 1e-7);

        for trial in 0..50 {
            let n = rng.random_range(2..=8);
            let m = rng.random_range(2..=8);
            let zs = rand_batch(n, 4, &mut rng);
            let zt = rand_batch(m, 4, &mut rng);
            let ps = rand_batch(n, 3, &mut rng);
            let pt = rand_batch(m, 3, &mut rng);
            let mut tape = Tape::<f64>::new();
            let a = tape.leaf(zs.clone().into_dyn());
            let b = tape.leaf(zt.clone().into_dyn());
            let pa = tape.leaf(ps.clone().into_dyn());
            let pb = tape.leaf(pt.clone().into_dyn());
            let j = jmmd(&mut tape, &[(a, b), (pa, pb)], 5);
            // recover the ladders the implementation used
            let ladders: Vec<KernelLadder<f64>> = [(zs.clone(), zt.clone()), (ps.clone(), pt.clone())]
                .iter()
                .map(|(s, t)| {
                    let mut t2 = Tape::<f64>::new();
                    let sv = t2.leaf(s.clone().into_dyn());
                    let tv = t2.leaf(t.clone().into_dyn());
                    let z = t2.concat0(&[sv, tv]);
                    let dd = t2.pairwise_sqdist(z, z);
                    KernelLadder::from_sqdists(&t2.val(dd).view().into_dimensionality().unwrap(), 5)
                })
                .collect();
            let want = brute_jmmd(&[(zs, zt), (ps, pt)], &ladders);
            let got = tape.scalar(j);
            assert!((got - want).abs() < 1e-6, "trial {trial}: {got} vs {want}");
        }
    }

    #[test]
    fn coral_identical_is_zero_and_hand_case() {
        let mut tape = Tape::<f64>::new();
        let z = tape.leaf(arr2(&[[1.0, 2.0], [3.0, 1.0], [0.0, 0.5]]).into_dyn());
        let l = coral(&mut tape, z, z);
        assert_eq!(tape.scalar(l), 0.0);

        // d=1: Zs=[0,2] has variance 2, Zt=[0,0] has variance 0 -> (2-0)^2/4 = 1
        let mut tape = Tape::<f64>::new();
        let zs = tape.leaf(arr2(&[[0.0], [2.0]]).into_dyn());
        let zt = tape.leaf(arr2(&[[0.0], [0.0]]).into_dyn());
        let l = coral(&mut tape, zs, zt);
        assert!((tape.scalar(l) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coral_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for trial in 0..50 {
            let n = rng.random_range(2..=8);
            let m = rng.random_range(2..=8);
            let d = rng.random_range(1..=6);
            let zs = rand_batch(n, d, &mut rng);
            let zt = rand_batch(m, d, &mut rng);
            let mut tape = Tape::<f64>::new();
            let a = tape.leaf(zs.clone().into_dyn());
            let b = tape.leaf(zt.clone().into_dyn());
            let l = coral(&mut tape, a, b);
            let got = tape.scalar(l);
            let want = brute_coral(&zs, &zt);
            assert!((got - want).abs() < 1e-8, "trial {trial}: {got} vs {want}");
        }
    }

    #[test]
    fn coral_invariant_to_row_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let zs = rand_batch(6, 3, &mut rng);
        let zt = rand_batch(5, 3, &mut rng);
        let eval = |a: &Array2<f64>, b: &Array2<f64>| {
            let mut tape = Tape::<f64>::new();
            let av = tape.leaf(a.clone().into_dyn());
            let bv = tape.leaf(b.clone().into_dyn());
            let l = coral(&mut tape, av, bv);
            tape.scalar(l)
        };
        let base = eval(&zs, &zt);
        let mut perm: Vec<usize> = (0..6).collect();
        perm.shuffle(&mut rng);
        let zs_p = ndarray::stack(ndarray::Axis(0), &perm.iter().map(|&i| zs.row(i)).collect::<Vec<_>>()).unwrap();
        assert!((eval(&zs_p, &zt) - base).abs() < 1e-12);
    }

    #[test]
    fn losses_are_differentiable_fd_check() {
        use crate::tensor::fd_check;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs = rand_batch(4, 3, &mut rng).into_dyn();
        let xt = rand_batch(4, 3, &mut rng).into_dyn();
        let ladder = KernelLadder::with_base(3.0, 5);
        // mmd wrt source batch, ladder held fixed
        {
            let xt = xt.clone();
            let ladder = ladder.clone();
            fd_check(
                &xs,
                move |t, xv| {
                    let tv = t.leaf(xt.clone());
                    mk_mmd_with(t, xv, tv, &ladder)
                },
                1e-4,
            );
        }
        // coral wrt both batches
        {
            let xt = xt.clone();
            fd_check(
                &xs,
                move |t, xv| {
                    let tv = t.leaf(xt.clone());
                    coral(t, xv, tv)
                },
                1e-4,
            );
        }
        let xs2 = xs.clone();
        fd_check(
            &xt,
            move |t, tv| {
                let xv = t.leaf(xs2.clone());
                coral(t, xv, tv)
            },
            1e-4,
        );
    }

    #[test]
    fn degenerate_batch_falls_back_to_unit_bandwidth() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Array2::<f64>::ones((3, 2)).into_dyn());
        let y = tape.leaf(Array2::<f64>::ones((3, 2)).into_dyn());
        let (loss, ladder) = mk_mmd(&mut tape, x, y, 5);
        assert!(ladder.degenerate);
        assert!(ladder.bandwidths.iter().all(|&b| b > 0.0));
        assert!(tape.scalar(loss).abs() < 1e-9);
    }
}
