//! Brute-force reference implementations used by the test suites.
//!
//! Everything here recomputes quantities through deliberately different code
//! paths (dense materialization, naive loops) so that shared bugs with the
//! optimized implementations are unlikely. No production path calls into
//! this module.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::solvers::{FactorPair, SpParams};
use crate::system::RolloutBatch;

/// Nuclear norm by full SVD.
pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.iter().sum()
}

/// Nuclear norm through the Gram route: sum of square roots of the
/// eigenvalues of `mᵀm`. Second decomposition path for cross-checks.
pub fn nuclear_norm_gram(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    gram.symmetric_eigen().eigenvalues.iter().map(|&e| e.max(0.0).sqrt()).sum()
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_diff_grad(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    if !(h > 0.0) {
        return Err(Error::invalid("step h must be positive"));
    }
    let mut grad = DVector::zeros(x.len());
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let (fp, fm) = (f(&xp), f(&xm));
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite("objective at perturbed point".into()));
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

/// Parameters for [`dense_reference_objective`].
pub enum DenseParams<'a> {
    Nuc(&'a crate::linops::MarkovSequence),
    Bm(&'a FactorPair),
    Sp(&'a SpParams),
}

const SIZE_GUARD: usize = 1_000_000;

/// Objectives evaluated with fully materialized operators and naive loops.
///
/// Guarded to tiny instances; use only to validate the optimized paths.
pub fn dense_reference_objective(params: &DenseParams, batch: &RolloutBatch, lambda: f64) -> Result<f64> {
    match params {
        DenseParams::Nuc(k) => {
            let flat = dense_markov_of(params, batch)?;
            debug_assert_eq!(flat.shape(), k.flat().shape());
            let data = dense_last_output_loss(&flat, batch)?;
            let hank = dense_hankel(&flat, batch.l(), batch.n_y(), batch.n_u());
            Ok(data + lambda * nuclear_norm(&hank))
        }
        DenseParams::Bm(f) => {
            let flat = dense_markov_of(params, batch)?;
            let data = dense_last_output_loss(&flat, batch)?;
            let mut reg = 0.0;
            for v in f.v().iter() {
                reg += v * v;
            }
            for z in f.z().iter() {
                reg += z * z;
            }
            Ok(data + 0.5 * lambda * reg)
        }
        DenseParams::Sp(p) => dense_sp_objective(p, batch, lambda),
    }
}

/// Markov-shaped parameter matrix of the estimator, via naive anti-diagonal
/// averaging for the factored form.
fn dense_markov_of(params: &DenseParams, batch: &RolloutBatch) -> Result<DMatrix<f64>> {
    let (l, n_y, n_u) = (batch.l(), batch.n_y(), batch.n_u());
    match params {
        DenseParams::Nuc(k) => Ok(k.flat().clone()),
        DenseParams::Bm(f) => {
            let w = f.v() * f.z().transpose();
            guard(w.nrows() * w.ncols())?;
            let mut flat = DMatrix::<f64>::zeros(n_y, (2 * l + 1) * n_u);
            for t in 0..(2 * l + 1) {
                let mut acc = DMatrix::<f64>::zeros(n_y, n_u);
                let mut count = 0.0;
                for i in 0..=l.min(t) {
                    let j = t - i;
                    if j > l {
                        continue;
                    }
                    for r in 0..n_y {
                        for c in 0..n_u {
                            acc[(r, c)] += w[(i * n_y + r, j * n_u + c)];
                        }
                    }
                    count += 1.0;
                }
                for r in 0..n_y {
                    for c in 0..n_u {
                        flat[(r, t * n_u + c)] = acc[(r, c)] / count;
                    }
                }
            }
            Ok(flat)
        }
        DenseParams::Sp(_) => Err(Error::invalid("no Markov-shaped form used here")),
    }
}

/// Final-output data term with explicit block/time loops pairing block `t`
/// with input `u_{T-t}`.
fn dense_last_output_loss(flat: &DMatrix<f64>, batch: &RolloutBatch) -> Result<f64> {
    let (l, n_y, n_u) = (batch.l(), batch.n_y(), batch.n_u());
    let t_len = batch.t_len();
    guard(flat.nrows() * flat.ncols())?;
    let mut total = 0.0f64;
    for i in 0..batch.n_rollouts() {
        let mut pred = DVector::<f64>::zeros(n_y);
        for t in 1..=(2 * l + 1) {
            let u = batch.input(i).column(t_len - t - 1); // u_{T-t}, 0-based column
            for r in 0..n_y {
                for c in 0..n_u {
                    pred[r] += flat[(r, (t - 1) * n_u + c)] * u[c];
                }
            }
        }
        let y = batch.output(i).column(t_len - 1);
        for r in 0..n_y {
            let diff = y[r] - pred[r];
            total += diff * diff;
        }
    }
    Ok(total / (2.0 * batch.n_rollouts() as f64))
}

fn dense_hankel(flat: &DMatrix<f64>, l: usize, n_y: usize, n_u: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros((l + 1) * n_y, (l + 1) * n_u);
    for i in 0..=l {
        for j in 0..=l {
            for r in 0..n_y {
                for c in 0..n_u {
                    h[(i * n_y + r, j * n_u + c)] = flat[(r, (i + j) * n_u + c)];
                }
            }
        }
    }
    h
}

/// Full-trajectory objective with the Kronecker operator
/// `Σ_j P(a_j) ⊗ c_j b_jᵀ` materialized and applied to column-stacked inputs.
fn dense_sp_objective(p: &SpParams, batch: &RolloutBatch, lambda: f64) -> Result<f64> {
    let (l, n_y, n_u) = (batch.l(), batch.n_y(), batch.n_u());
    let t_len = batch.t_len();
    let rows = t_len * n_y;
    let cols = t_len * n_u;
    guard(rows * cols)?;

    let mut op = DMatrix::<f64>::zeros(rows, cols);
    for j in 0..p.r() {
        let pj = crate::linops::pole_impulse_matrix(p.poles()[j], l);
        let outer = p.c_cols().column(j) * p.b_rows().row(j);
        // Kronecker product P(a_j) ⊗ outer.
        for bi in 0..t_len {
            for bj in 0..t_len {
                let w = pj[(bi, bj)];
                if w == 0.0 {
                    continue;
                }
                for r in 0..n_y {
                    for c in 0..n_u {
                        op[(bi * n_y + r, bj * n_u + c)] += w * outer[(r, c)];
                    }
                }
            }
        }
    }

    let mut total = 0.0;
    for i in 0..batch.n_rollouts() {
        let mut u_vec = DVector::zeros(cols);
        let mut y_vec = DVector::zeros(rows);
        for t in 0..t_len {
            u_vec.rows_mut(t * n_u, n_u).copy_from(&batch.input(i).column(t));
            y_vec.rows_mut(t * n_y, n_y).copy_from(&batch.output(i).column(t));
        }
        let resid: DVector<f64> = y_vec - &op * u_vec;
        total += resid.norm_squared();
    }
    let data = total / (4.0 * batch.n_rollouts() as f64 * (l as f64 + 1.0));

    let mut reg = 0.0;
    for j in 0..p.r() {
        reg += crate::linops::pole_energy(p.poles()[j], l)
            * p.b_rows().row(j).norm()
            * p.c_cols().column(j).norm();
    }
    Ok(data + lambda * reg)
}

fn guard(entries: usize) -> Result<()> {
    if entries > SIZE_GUARD {
        return Err(Error::invalid(format!(
            "dense reference limited to {SIZE_GUARD} entries, asked for {entries}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nuclear_norm_trivia() {
        assert!((nuclear_norm(&DMatrix::identity(4, 4)) - 4.0).abs() < 1e-12);
        let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let v = DVector::from_vec(vec![3.0, 1.0]);
        let rank1 = &u * v.transpose();
        assert!((nuclear_norm(&rank1) - u.norm() * v.norm()).abs() < 1e-12);
    }

    #[test]
    fn two_svd_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DMatrix::from_fn(4, 3, |_, _| rng.gen_range(-2.0..2.0));
        let a = nuclear_norm(&m);
        let b = nuclear_norm_gram(&m);
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn finite_diff_on_known_functions() {
        let x = DVector::from_vec(vec![0.4, -1.2, 2.0]);
        let quad = |v: &DVector<f64>| 0.5 * v.norm_squared();
        let g = finite_diff_grad(&quad, &x, 1e-6).unwrap();
        assert!((g - &x).norm() < 1e-8);

        let lin = |v: &DVector<f64>| 3.0 * v[0] - 2.0 * v[1] + 0.5 * v[2];
        let g = finite_diff_grad(&lin, &x, 1e-4).unwrap();
        let expect = DVector::from_vec(vec![3.0, -2.0, 0.5]);
        assert!((g - expect).norm() < 1e-9);
    }

    #[test]
    fn size_guard_trips() {
        assert!(guard(SIZE_GUARD + 1).is_err());
    }
}
