//! Dual-quaternion attention: scores in dual-quaternion space, mapping
//! to scalars, lifting back, and application to values.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Var};
use crate::dqnn::DQLinearLayer;
use crate::dualquat::DualQuaternion;
use crate::error::{degenerate, shape, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum AttentionScores {
    /// One score per input.
    Vector(Vec<DualQuaternion>),
    /// `R x R` scores, row `i` pairing key `i` with every query.
    Matrix(Vec<Vec<DualQuaternion>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreForm {
    Vector,
    Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSide {
    /// `W^K K (W^Q Q)*`.
    Left,
    /// `K W^K (Q W^Q)*`.
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueryWeights<'a> {
    /// The key weights are reused for the queries.
    Shared,
    Separate(&'a [DualQuaternion]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyMode {
    Vector,
    Matrix,
    Transformer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MseSquash {
    /// `tanh(1/(2d))`, equal to `2 (sigmoid(1/d) - 1/2)` with value 1 at `d = 0`.
    #[default]
    Monotone,
    /// The expression `2 (1/(1 + exp(1/(-d))) - 0.5)` evaluated literally.
    Printed,
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return shape(format!("{what}: {a} vs {b}"));
    }
    Ok(())
}

fn check_bias_free(l: &DQLinearLayer) -> Result<()> {
    if l.bias.is_some() {
        return Err(Error::Config("additive attention layers carry no bias".into()));
    }
    Ok(())
}

/// `W2 (W1 X)` with `X = K` when queries are absent or equal to the keys,
/// otherwise `X = [K, Q]`.
pub fn additive_scores(
    store: &ParamStore,
    keys: &[DualQuaternion],
    queries: Option<&[DualQuaternion]>,
    w1: &DQLinearLayer,
    w2: &DQLinearLayer,
) -> Result<AttentionScores> {
    check_bias_free(w1)?;
    check_bias_free(w2)?;
    let x: Vec<DualQuaternion> = match queries {
        Some(q) if q != keys => keys.iter().chain(q).copied().collect(),
        _ => keys.to_vec(),
    };
    let h = w1.forward_dq(store, &x)?;
    Ok(AttentionScores::Vector(w2.forward_dq(store, &h)?))
}

/// Differentiable form of [`additive_scores`] on stacked inputs.
pub fn additive_scores_tape(
    tape: &mut Tape,
    store: &ParamStore,
    x: Var,
    w1: &DQLinearLayer,
    w2: &DQLinearLayer,
) -> Result<Var> {
    check_bias_free(w1)?;
    check_bias_free(w2)?;
    let h = w1.forward(tape, store, x)?;
    w2.forward(tape, store, h)
}

/// `K o Q*` (vector) or `K_i Q_j*` for all pairs (matrix).
pub fn mult_scores(k: &[DualQuaternion], q: &[DualQuaternion], form: ScoreForm) -> Result<AttentionScores> {
    check_len(k.len(), q.len(), "keys and queries")?;
    Ok(match form {
        ScoreForm::Vector => AttentionScores::Vector(k.iter().zip(q).map(|(a, b)| *a * b.conj()).collect()),
        ScoreForm::Matrix => {
            AttentionScores::Matrix(k.iter().map(|a| q.iter().map(|b| *a * b.conj()).collect()).collect())
        }
    })
}

/// Weighted multiplicative scores. With `fused`, the weight pair of every
/// entry is combined into one 8x8 matrix first and reused.
pub fn mult_scores_weighted(
    k: &[DualQuaternion],
    q: &[DualQuaternion],
    wk: &[DualQuaternion],
    wq: QueryWeights<'_>,
    side: WeightSide,
    form: ScoreForm,
    fused: bool,
) -> Result<AttentionScores> {
    check_len(k.len(), q.len(), "keys and queries")?;
    check_len(wk.len(), k.len(), "key weights")?;
    let wq = match wq {
        QueryWeights::Shared if fused => {
            return Err(Error::Config("fused weights cannot be shared between keys and queries".into()))
        }
        QueryWeights::Shared => wk,
        QueryWeights::Separate(w) => {
            check_len(w.len(), q.len(), "query weights")?;
            w
        }
    };
    let entry = |i: usize, j: usize| -> DualQuaternion {
        match (side, fused) {
            (WeightSide::Left, false) => wk[i] * k[i] * q[j].conj() * wq[j].conj(),
            (WeightSide::Right, false) => k[i] * wk[i] * wq[j].conj() * q[j].conj(),
            (WeightSide::Right, true) => {
                let m = wk[i] * wq[j].conj();
                k[i] * m * q[j].conj()
            }
            (WeightSide::Left, true) => {
                // Wk (K Q*) Wq* = [[Wq*]]_R [[Wk]]_L vec(K Q*)
                let r = wq[j].right_conj_matrix();
                let l = wk[i].left_matrix();
                let mut m = [[0.0; 8]; 8];
                for a in 0..8 {
                    for b in 0..8 {
                        m[a][b] = (0..8).map(|c| r[a][c] * l[c][b]).sum();
                    }
                }
                let v = (k[i] * q[j].conj()).to_array();
                DualQuaternion::from_array(std::array::from_fn(|a| (0..8).map(|b| m[a][b] * v[b]).sum()))
            }
        }
    };
    let n = k.len();
    Ok(match form {
        ScoreForm::Vector => AttentionScores::Vector((0..n).map(|i| entry(i, i)).collect()),
        ScoreForm::Matrix => AttentionScores::Matrix((0..n).map(|i| (0..n).map(|j| entry(i, j)).collect()).collect()),
    })
}

/// Cosine of the angle between `a` and `target` as 8-vectors.
pub fn map_cosine(a: &DualQuaternion, target: &DualQuaternion) -> Result<f64> {
    let (x, t) = (a.to_array(), target.to_array());
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nt = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || nt == 0.0 {
        return degenerate("cosine similarity of a zero vector");
    }
    Ok(x.iter().zip(&t).map(|(p, q)| p * q).sum::<f64>() / (nx * nt))
}

/// Squared distance between `a` and `target`, squashed into `[0, 1]`.
pub fn map_mse(a: &DualQuaternion, target: &DualQuaternion, squash: MseSquash) -> f64 {
    let d: f64 = a.to_array().iter().zip(target.to_array()).map(|(p, q)| (q - p) * (q - p)).sum();
    squash_distance(d, squash)
}

pub fn squash_distance(d: f64, squash: MseSquash) -> f64 {
    match squash {
        MseSquash::Monotone => {
            if d == 0.0 {
                1.0
            } else {
                (0.5 / d).tanh()
            }
        }
        MseSquash::Printed => 2.0 * (1.0 / (1.0 + (1.0 / -d).exp()) - 0.5),
    }
}

/// `alpha e0 - |vec(2 E* E_eps)|` with `E = T* A`.
pub fn map_error_dq(a: &DualQuaternion, target: &DualQuaternion, alpha: f64) -> Result<f64> {
    let e = DualQuaternion::error(target, a)?;
    Ok(crate::autodiff::error_score(&e, alpha))
}

/// `a_i (1 + eps 0)`.
pub fn scalar_to_dq(a: &[f64]) -> Vec<DualQuaternion> {
    a.iter().map(|&s| DualQuaternion::IDENTITY * s).collect()
}

pub fn scalar_to_dq_matrix(a: &[Vec<f64>]) -> Vec<Vec<DualQuaternion>> {
    a.iter().map(|row| scalar_to_dq(row)).collect()
}

/// Combines lifted scores with values.
pub fn apply_attention(
    lambda: &AttentionScores,
    v: &[DualQuaternion],
    wv: Option<&[DualQuaternion]>,
    mode: ApplyMode,
) -> Result<Vec<DualQuaternion>> {
    match (mode, lambda) {
        (ApplyMode::Vector, AttentionScores::Vector(l)) => {
            check_len(l.len(), v.len(), "scores and values")?;
            Ok(l.iter().zip(v).map(|(a, b)| *a * *b).collect())
        }
        (ApplyMode::Matrix | ApplyMode::Transformer, AttentionScores::Matrix(l)) => {
            let values: Vec<DualQuaternion> = if mode == ApplyMode::Transformer {
                let w = wv.ok_or_else(|| Error::Config("transformer mode needs value weights".into()))?;
                check_len(w.len(), v.len(), "value weights")?;
                w.iter().zip(v).map(|(a, b)| *a * *b).collect()
            } else {
                v.to_vec()
            };
            l.iter()
                .map(|row| {
                    check_len(row.len(), values.len(), "score row and values")?;
                    Ok(row.iter().zip(&values).fold(DualQuaternion::ZERO, |acc, (a, b)| acc + *a * *b))
                })
                .collect()
        }
        _ => shape(format!("{mode:?} mode does not accept these scores")),
    }
}

/// Inverse of a unit dual quaternion, its conjugate.
pub fn unit_inverse(x: &DualQuaternion) -> Result<DualQuaternion> {
    if !x.is_unit(1e-9) {
        return degenerate("inverse requested for a non-unit dual quaternion");
    }
    Ok(x.conj())
}

/// `Lambda_i (W_i V_i)` with `Lambda_i = 1` if `a_i > 0.5`, else `(W_i V_i)^-1`.
pub fn unit_preserving_attention(
    a: &[f64],
    v: &[DualQuaternion],
    wv: &[DualQuaternion],
) -> Result<Vec<DualQuaternion>> {
    check_len(a.len(), v.len(), "scores and values")?;
    check_len(wv.len(), v.len(), "value weights")?;
    a.iter()
        .zip(v)
        .zip(wv)
        .map(|((&s, x), w)| {
            if !s.is_finite() {
                return degenerate("non-finite attention score");
            }
            if !x.is_unit(1e-9) || !w.is_unit(1e-9) {
                return degenerate("unit-preserving attention needs unit values and weights");
            }
            let wx = *w * *x;
            let lambda = if s > 0.5 { DualQuaternion::IDENTITY } else { unit_inverse(&wx)? };
            Ok(lambda * wx)
        })
        .collect()
}

/// Error-DQ scores of every pairwise multiplicative score against the
/// identity, for display.
pub fn pairwise_error_scores(x: &[DualQuaternion], alpha: f64) -> Result<Vec<Vec<f64>>> {
    let AttentionScores::Matrix(m) = mult_scores(x, x, ScoreForm::Matrix)? else { unreachable!() };
    m.iter()
        .map(|row| row.iter().map(|s| map_error_dq(&s.normalize()?, &DualQuaternion::IDENTITY, alpha)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{check_gradients, softmax, Matrix, DEFAULT_STEP};
    use crate::dqnn::unit_weight_init;
    use crate::quat::Quaternion;
    use crate::vec3::Vec3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn units(rng: &mut ChaCha8Rng, n: usize) -> Vec<DualQuaternion> {
        (0..n).map(|_| unit_weight_init(rng).assemble()).collect()
    }

    fn randoms(rng: &mut ChaCha8Rng, n: usize) -> Vec<DualQuaternion> {
        (0..n).map(|_| DualQuaternion::from_array(std::array::from_fn(|_| rng.random_range(-1.0..1.0)))).collect()
    }

    fn vector(s: AttentionScores) -> Vec<DualQuaternion> {
        match s {
            AttentionScores::Vector(v) => v,
            _ => panic!("expected vector scores"),
        }
    }

    fn matrix(s: AttentionScores) -> Vec<Vec<DualQuaternion>> {
        match s {
            AttentionScores::Matrix(m) => m,
            _ => panic!("expected matrix scores"),
        }
    }

    fn identity_layer(store: &mut ParamStore, n: usize) -> DQLinearLayer {
        let w: Vec<Vec<_>> = (0..n)
            .map(|s| (0..n).map(|i| if s == i { DualQuaternion::IDENTITY } else { DualQuaternion::ZERO }).collect())
            .collect();
        DQLinearLayer::from_dq_weights(store, "id", &w, None).unwrap()
    }

    #[test]
    fn additive_identity_and_key_only_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let k = randoms(&mut rng, 3);
        let l1 = identity_layer(&mut store, 3);
        let l2 = identity_layer(&mut store, 3);
        assert_eq!(vector(additive_scores(&store, &k, None, &l1, &l2).unwrap()), k);
        // equal queries do not double the input
        assert_eq!(vector(additive_scores(&store, &k, Some(&k), &l1, &l2).unwrap()), k);
        let q = randoms(&mut rng, 3);
        assert!(additive_scores(&store, &k, Some(&q), &l1, &l2).is_err());
        let l6 = identity_layer(&mut store, 6);
        assert_eq!(vector(additive_scores(&store, &k, Some(&q), &l6, &l6).unwrap()).len(), 6);
    }

    #[test]
    fn additive_matches_per_dq_oracle_and_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let mk = |store: &mut ParamStore, rng: &mut ChaCha8Rng, r: usize, s: usize, name: &str| {
            let w: Vec<Vec<_>> = (0..s).map(|_| randoms(rng, r)).collect();
            DQLinearLayer::from_dq_weights(store, name, &w, None).unwrap()
        };
        let l1 = mk(&mut store, &mut rng, 4, 3, "a");
        let l2 = mk(&mut store, &mut rng, 3, 2, "b");
        let k = randoms(&mut rng, 4);
        let got = vector(additive_scores(&store, &k, None, &l1, &l2).unwrap());
        let h: Vec<_> = (0..3).map(|s| (0..4).fold(DualQuaternion::ZERO, |a, i| a + l1.weight_dq(&store, s, i) * k[i])).collect();
        for s in 0..2 {
            let o = (0..3).fold(DualQuaternion::ZERO, |a, i| a + l2.weight_dq(&store, s, i) * h[i]);
            assert!(got[s].max_abs_diff(&o) < 1e-12);
        }
        let x = Matrix::column(&k.iter().flat_map(|q| q.to_array()).collect::<Vec<_>>());
        let y = Matrix::from_fn(16, 1, |i, _| i as f64 * 0.05);
        let r = check_gradients(&mut store, DEFAULT_STEP, |t, s| {
            let xv = t.leaf(x.clone());
            let a = additive_scores_tape(t, s, xv, &l1, &l2)?;
            t.mse(a, &y)
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-4);
    }

    #[test]
    fn mult_scores_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = units(&mut rng, 4);
        let m = matrix(mult_scores(&k, &k, ScoreForm::Matrix).unwrap());
        for i in 0..4 {
            assert!(m[i][i].max_abs_diff(&DualQuaternion::IDENTITY) < 1e-12);
        }
        let q = units(&mut rng, 1);
        let v = vector(mult_scores(&k[..1], &q, ScoreForm::Vector).unwrap());
        assert_eq!(v[0], k[0] * q[0].conj());
        assert!(mult_scores(&k, &q, ScoreForm::Vector).is_err());
    }

    #[test]
    fn weighted_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = randoms(&mut rng, 3);
        let q = randoms(&mut rng, 3);
        let ones = vec![DualQuaternion::IDENTITY; 3];
        for side in [WeightSide::Left, WeightSide::Right] {
            for form in [ScoreForm::Vector, ScoreForm::Matrix] {
                let a = mult_scores_weighted(&k, &q, &ones, QueryWeights::Separate(&ones), side, form, false).unwrap();
                assert_eq!(a, mult_scores(&k, &q, form).unwrap());
            }
        }
        let wk = randoms(&mut rng, 3);
        let wq = randoms(&mut rng, 3);
        for side in [WeightSide::Left, WeightSide::Right] {
            let a = matrix(mult_scores_weighted(&k, &q, &wk, QueryWeights::Separate(&wq), side, ScoreForm::Matrix, false).unwrap());
            let b = matrix(mult_scores_weighted(&k, &q, &wk, QueryWeights::Separate(&wq), side, ScoreForm::Matrix, true).unwrap());
            for i in 0..3 {
                for j in 0..3 {
                    assert!(a[i][j].max_abs_diff(&b[i][j]) < 1e-10);
                }
            }
        }
        // left form on a single entry by hand
        let a = vector(
            mult_scores_weighted(&k[..1], &q[..1], &wk[..1], QueryWeights::Separate(&wq[..1]), WeightSide::Left, ScoreForm::Vector, false)
                .unwrap(),
        );
        let by_hand = wk[0] * k[0] * (wq[0] * q[0]).conj();
        assert!(a[0].max_abs_diff(&by_hand) < 1e-12);
        let shared = mult_scores_weighted(&k, &q, &wk, QueryWeights::Shared, WeightSide::Right, ScoreForm::Vector, true);
        assert!(matches!(shared, Err(Error::Config(_))));
        assert!(mult_scores_weighted(&k, &q, &wk, QueryWeights::Shared, WeightSide::Right, ScoreForm::Vector, false).is_ok());
    }

    #[test]
    fn mappings() {
        let t = DualQuaternion::from_array([0.3, 0.1, -0.2, 0.5, 0.0, 0.4, 0.2, -0.1]);
        assert!((map_cosine(&t, &t).unwrap() - 1.0).abs() < 1e-15);
        assert!((map_cosine(&(t * 3.5), &t).unwrap() - 1.0).abs() < 1e-15);
        assert!(map_cosine(&DualQuaternion::ZERO, &t).is_err());
        assert_eq!(map_mse(&t, &t, MseSquash::Monotone), 1.0);
        // the literal expression at d = 0: 1/(-0) = -inf, exp(-inf) = 0
        assert_eq!(map_mse(&t, &t, MseSquash::Printed), 1.0);
        assert_eq!(map_error_dq(&DualQuaternion::IDENTITY, &DualQuaternion::IDENTITY, 100.0).unwrap(), 100.0);
        assert!(map_error_dq(&t, &DualQuaternion::IDENTITY, 100.0).is_err());
        // a pure translation by (0.3, 0.4, 0) scores alpha - 0.5
        let p = DualQuaternion::from_rot_trans(Quaternion::IDENTITY, Vec3::new(0.3, 0.4, 0.0)).unwrap();
        assert!((map_error_dq(&p, &DualQuaternion::IDENTITY, 2.0).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn mse_squash_is_monotone_and_bounded() {
        let mut prev = 1.0;
        for k in 1..200 {
            let d = k as f64 * 0.05;
            let m = squash_distance(d, MseSquash::Monotone);
            let p = squash_distance(d, MseSquash::Printed);
            assert!(m < prev && (0.0..=1.0).contains(&m));
            assert!((m - p).abs() < 1e-12);
            prev = m;
        }
    }

    #[test]
    fn lifting_and_application() {
        assert_eq!(scalar_to_dq(&[1.0])[0], DualQuaternion::IDENTITY);
        assert_eq!(scalar_to_dq(&[0.0])[0], DualQuaternion::ZERO);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = randoms(&mut rng, 3);
        let lifted = scalar_to_dq(&[2.5]);
        assert!((lifted[0] * v[0]).max_abs_diff(&(v[0] * 2.5)) < 1e-15);
        let ones = AttentionScores::Vector(scalar_to_dq(&[1.0, 1.0, 1.0]));
        assert_eq!(apply_attention(&ones, &v, None, ApplyMode::Vector).unwrap(), v);
        let hot = AttentionScores::Vector(scalar_to_dq(&[0.0, 1.0, 0.0]));
        let c = apply_attention(&hot, &v, None, ApplyMode::Vector).unwrap();
        assert_eq!(c[1], v[1]);
        assert_eq!(c[0].max_abs_diff(&DualQuaternion::ZERO), 0.0);
        // transformer mode against the per-dual-quaternion sum
        let l = matrix(mult_scores(&randoms(&mut rng, 3), &randoms(&mut rng, 3), ScoreForm::Matrix).unwrap());
        let w = randoms(&mut rng, 3);
        let c = apply_attention(&AttentionScores::Matrix(l.clone()), &v, Some(&w), ApplyMode::Transformer).unwrap();
        for i in 0..3 {
            let o = (0..3).fold(DualQuaternion::ZERO, |a, j| a + l[i][j] * (w[j] * v[j]));
            assert!(c[i].max_abs_diff(&o) < 1e-12);
        }
        let id = AttentionScores::Matrix(scalar_to_dq_matrix(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]));
        assert_eq!(apply_attention(&id, &v, None, ApplyMode::Matrix).unwrap(), v);
        assert!(apply_attention(&id, &v, None, ApplyMode::Transformer).is_err());
        assert!(apply_attention(&ones, &v, None, ApplyMode::Matrix).is_err());
    }

    #[test]
    fn unit_preserving_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v = units(&mut rng, 2);
        let w = units(&mut rng, 2);
        let out = unit_preserving_attention(&[1.0, 0.0], &v, &w).unwrap();
        assert!(out[0].max_abs_diff(&(w[0] * v[0])) < 1e-15);
        assert!(out[1].max_abs_diff(&DualQuaternion::IDENTITY) < 1e-12);
        assert!(unit_preserving_attention(&[1.0, 0.0], &[v[0] * 2.0, v[1]], &w).is_err());
        assert!(unit_preserving_attention(&[f64::NAN, 0.0], &v, &w).is_err());
    }

    #[test]
    fn pairwise_heatmap_has_alpha_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = units(&mut rng, 4);
        let h = pairwise_error_scores(&x, 10.0).unwrap();
        for i in 0..4 {
            assert!((h[i][i] - 10.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn mult_scores_conjugate_symmetry(seed in any::<u64>(), n in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = units(&mut rng, n);
            let m = matrix(mult_scores(&k, &k, ScoreForm::Matrix).unwrap());
            for i in 0..n {
                prop_assert!(m[i][i].max_abs_diff(&DualQuaternion::IDENTITY) < 1e-10);
                for j in 0..n {
                    prop_assert!(m[i][j].max_abs_diff(&m[j][i].conj()) < 1e-10);
                }
            }
        }

        #[test]
        fn unit_preserving_outputs_are_unit(seed in any::<u64>(), n in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = units(&mut rng, n);
            let w = units(&mut rng, n);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            for c in unit_preserving_attention(&a, &v, &w).unwrap() {
                prop_assert!(c.is_unit(1e-8));
            }
        }

        #[test]
        fn unit_inverse_is_inverse(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = units(&mut rng, 1)[0];
            prop_assert!((x * unit_inverse(&x).unwrap()).max_abs_diff(&DualQuaternion::IDENTITY) < 1e-9);
        }

        #[test]
        fn softmax_of_mappings_sums_to_one(seed in any::<u64>(), n in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = units(&mut rng, n);
            let scores: Vec<f64> = x.iter().map(|a| map_error_dq(a, &DualQuaternion::IDENTITY, 100.0).unwrap()).collect();
            let p = softmax(&Matrix::column(&scores));
            prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn cosine_is_scale_invariant(a in prop::array::uniform8(-1.0..1.0f64), s in 0.01..100.0f64) {
            let q = DualQuaternion::from_array(a);
            prop_assume!(q.to_array().iter().any(|v| v.abs() > 1e-3));
            let t = DualQuaternion::from_array([0.2, 0.5, -0.1, 0.3, 0.7, 0.0, 0.1, -0.4]);
            prop_assert!((map_cosine(&(q * s), &t).unwrap() - map_cosine(&q, &t).unwrap()).abs() < 1e-12);
        }
    }
}
