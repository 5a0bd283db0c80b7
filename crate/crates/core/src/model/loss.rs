//! One-vs-all losses over `B x L` score matrices. Both losses average over
//! the batch and sum over labels.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::sparse::SparseDelta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    SquaredHinge,
    Bce,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_hinge" => Ok(LossKind::SquaredHinge),
            "bce" => Ok(LossKind::Bce),
            _ => Err(Error::config(format!("unknown loss {s:?}, expected squared_hinge or bce"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::SquaredHinge => "squared_hinge",
            LossKind::Bce => "bce",
        })
    }
}

/// BCE gradient entries at or below this magnitude are dropped.
pub const BCE_DELTA_EPS: f64 = 1e-12;

fn check_targets(scores: &ArrayView2<impl Real>, targets: &[Vec<u32>]) -> Result<()> {
    if scores.nrows() != targets.len() {
        return Err(Error::shape(format!("{} score rows but {} target sets", scores.nrows(), targets.len())));
    }
    let l = scores.ncols();
    if let Some(bad) = targets.iter().flatten().find(|&&t| t as usize >= l) {
        return Err(Error::shape(format!("target label {bad} out of range {l}")));
    }
    Ok(())
}

/// `(1/B) sum max(0, 1 - y s)^2` with `y = +1` on relevant labels and `-1`
/// elsewhere. The delta holds exactly the margin-violating entries.
pub fn squared_hinge_loss<T: Real>(scores: ArrayView2<T>, targets: &[Vec<u32>]) -> Result<(T, SparseDelta<T>)> {
    check_targets(&scores, targets)?;
    let b = scores.nrows();
    let inv_b = T::one() / T::of(b.max(1) as f64);
    let two = T::of(2.0);
    let mut loss = T::zero();
    let mut delta = SparseDelta::new(scores.ncols());
    let mut entries = Vec::new();
    for (row, pos) in scores.rows().into_iter().zip(targets) {
        entries.clear();
        let mut p = pos.iter().peekable();
        for (l, &s) in row.iter().enumerate() {
            let y = if p.peek() == Some(&&(l as u32)) {
                p.next();
                T::one()
            } else {
                -T::one()
            };
            let margin = T::one() - y * s;
            if margin > T::zero() {
                loss += margin * margin;
                entries.push((l as u32, -two * y * margin * inv_b));
            }
        }
        delta.push_sample(entries.iter().copied())?;
    }
    Ok((loss * inv_b, delta))
}

fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Sigmoid cross-entropy averaged over the batch, positives weighted by
/// `pos_weight`. Returns the dense derivative.
pub fn bce_loss<T: Real>(scores: ArrayView2<T>, targets: &[Vec<u32>], pos_weight: f64) -> Result<(T, Array2<T>)> {
    check_targets(&scores, targets)?;
    let b = scores.nrows();
    let inv_b = T::one() / T::of(b.max(1) as f64);
    let pw = T::of(pos_weight);
    let mut loss = T::zero();
    let mut grad = Array2::zeros(scores.raw_dim());
    for ((row, mut g), pos) in scores.rows().into_iter().zip(grad.rows_mut()).zip(targets) {
        let mut p = pos.iter().peekable();
        for ((l, &s), gl) in row.iter().enumerate().zip(g.iter_mut()) {
            if p.peek() == Some(&&(l as u32)) {
                p.next();
                loss += pw * softplus(-s);
                *gl = pw * (sigmoid(s) - T::one()) * inv_b;
            } else {
                loss += softplus(s);
                *gl = sigmoid(s) * inv_b;
            }
        }
    }
    Ok((loss * inv_b, grad))
}

/// Loss value and sparse delta for either loss kind.
pub fn loss_and_delta<T: Real>(
    kind: LossKind,
    scores: ArrayView2<T>,
    targets: &[Vec<u32>],
    pos_weight: f64,
) -> Result<(T, SparseDelta<T>)> {
    match kind {
        LossKind::SquaredHinge => squared_hinge_loss(scores, targets),
        LossKind::Bce => {
            let (loss, g) = bce_loss(scores, targets, pos_weight)?;
            Ok((loss, SparseDelta::from_dense(&g, T::of(BCE_DELTA_EPS))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn satisfied_margins_give_zero() {
        let s = array![[2.0f64, -1.0, -3.0], [-1.5, 1.0, -1.0]];
        let (loss, delta) = squared_hinge_loss(s.view(), &[vec![0], vec![1]]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(delta.is_empty());
    }

    #[test]
    fn single_positive_at_zero() {
        let s = array![[0.0f64]];
        let (loss, delta) = squared_hinge_loss(s.view(), &[vec![0]]).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(delta.sample(0).1, &[-2.0]);
        let s2 = array![[0.0f64], [5.0]];
        let (_, d2) = squared_hinge_loss(s2.view(), &[vec![0], vec![0]]).unwrap();
        assert_eq!(d2.sample(0).1, &[-1.0]);
        assert_eq!(d2.nnz(), 1);
    }

    fn fd_check(kind: LossKind) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Array2::from_shape_simple_fn((4, 10), || rng.random_range(-2.0f64..2.0));
        let t = vec![vec![0, 3], vec![], vec![9], vec![1, 2, 5]];
        let (_, delta) = loss_and_delta(kind, s.view(), &t, 1.0).unwrap();
        let analytic = delta.to_dense();
        let h = 1e-5;
        for i in 0..4 {
            for j in 0..10 {
                let mut p = s.clone();
                p[[i, j]] += h;
                let mut m = s.clone();
                m[[i, j]] -= h;
                let lp = loss_and_delta(kind, p.view(), &t, 1.0).unwrap().0;
                let lm = loss_and_delta(kind, m.view(), &t, 1.0).unwrap().0;
                let fd = (lp - lm) / (2.0 * h);
                let a = analytic[[i, j]];
                let err = (fd - a).abs() / a.abs().max(fd.abs()).max(1e-8);
                assert!(err <= 1e-6 || (fd - a).abs() < 1e-9, "{kind} [{i},{j}] fd {fd} analytic {a}");
            }
        }
    }

    #[test]
    fn squared_hinge_matches_finite_differences() {
        fd_check(LossKind::SquaredHinge);
    }

    #[test]
    fn bce_matches_finite_differences() {
        fd_check(LossKind::Bce);
    }

    #[test]
    fn bce_values() {
        let (loss, _) = bce_loss(array![[0.0f64]].view(), &[vec![]], 1.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        let (loss, _) = bce_loss(array![[0.0f64]].view(), &[vec![0]], 1.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        let (loss, g) = bce_loss(array![[60.0f64]].view(), &[vec![0]], 1.0).unwrap();
        assert!(loss < 1e-20);
        assert!(g[[0, 0]].abs() < 1e-20);
        let (_, delta) = loss_and_delta(LossKind::Bce, array![[60.0f64]].view(), &[vec![0]], 1.0).unwrap();
        assert!(delta.is_empty());
    }

    #[test]
    fn delta_sparsity_counts_violations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = Array2::from_shape_simple_fn((6, 30), || rng.random_range(-3.0f32..3.0));
        let t: Vec<Vec<u32>> = (0..6).map(|i| vec![i as u32, 20 + i as u32]).collect();
        let (_, delta) = squared_hinge_loss(s.view(), &t).unwrap();
        let mut violating = 0;
        for (i, row) in s.rows().into_iter().enumerate() {
            for (l, &v) in row.iter().enumerate() {
                let y = if t[i].contains(&(l as u32)) { 1.0 } else { -1.0 };
                if y * v < 1.0 {
                    violating += 1;
                }
            }
        }
        assert_eq!(delta.nnz(), violating);
    }

    #[test]
    fn loss_kind_parse() {
        assert_eq!("bce".parse::<LossKind>().unwrap(), LossKind::Bce);
        assert!("hinge".parse::<LossKind>().is_err());
    }
}
