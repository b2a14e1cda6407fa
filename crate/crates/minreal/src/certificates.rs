//! Global-optimality polar certificates for the factored and
//! system-parameter programs, plus the 1-D search they rely on.
//!
//! Both certificates measure the same thing: the dual norm of the scaled
//! residual correlation with respect to the model's atomic set. A stationary
//! point with polar value at most one is globally optimal; a value above one
//! hands back the atom (rank-one factor pair, or mode triple) that provably
//! decreases the objective when appended.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linops::{hankel_extract_adjoint, pole_energy, MarkovSequence};
use crate::numeric::top_singular_triplet;
use crate::solvers::{FactorPair, SpParams};
use crate::system::{stack_targets, RolloutBatch};

/// A polar value together with the atom that attains it.
#[derive(Clone, Debug)]
pub struct PolarResult {
    /// The dual-norm value; certification compares it against 1.
    pub value: f64,
    pub witness: PolarWitness,
    /// Number of matrix/SVD evaluations spent.
    pub evaluations: usize,
}

/// The supremizing atom behind a polar value.
#[derive(Clone, Debug)]
pub enum PolarWitness {
    /// Top singular pair of the factored certificate matrix.
    Factor { v: DVector<f64>, z: DVector<f64> },
    /// Supremizing pole with the top singular pair of `M(a)`.
    Mode { a: f64, c: DVector<f64>, b: DVector<f64> },
}

/// Polar certificate of the factored program at `(V, Z)`.
///
/// Builds the residual correlation `M = (1/Nλ) Σ_i r_i x_iᵀ` in Markov shape
/// and returns the spectral norm of its multiplicity-normalized Hankel
/// embedding — the adjoint of the averaging extraction used inside the loss,
/// so `value ≤ 1` is exactly first-order global optimality of the matrix
/// program, and the returned top singular pair is the descent atom otherwise.
pub fn polar_bm(factors: &FactorPair, batch: &RolloutBatch, lambda: f64) -> Result<PolarResult> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("polar is undefined at lambda = 0"));
    }
    if factors.l() != batch.l() || factors.n_y() != batch.n_y() || factors.n_u() != batch.n_u() {
        return Err(Error::dim("factor geometry does not match the batch"));
    }
    let stacked = stack_targets(batch);
    let resid = &stacked.last_outputs - factors.markov().flat() * &stacked.rev_inputs;
    if !resid.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("residual".into()));
    }
    let scale = 1.0 / (batch.n_rollouts() as f64 * lambda);
    let m = (resid * stacked.rev_inputs.transpose()) * scale;
    let m_seq = MarkovSequence::from_flat(m, batch.l(), batch.n_y(), batch.n_u())?;
    let embedded = hankel_extract_adjoint(&m_seq);
    let (value, v, z) = top_singular_triplet(&embedded);
    Ok(PolarResult { value, witness: PolarWitness::Factor { v, z }, evaluations: 1 })
}

/// Polar certificate of the system-parameter program at `(a, B, C)`:
/// `sup_a ‖M(a)‖₂` over the pole box, where
/// `M(a) = (1/(2N(L+1)λ)) Σ_i R_i (P(a)/γ(a)) U_iᵀ`.
///
/// `‖M(a)‖₂` need not be unimodal, so the supremum is located by a uniform
/// grid of `grid` points followed by golden-section refinement inside the
/// bracket around the best grid point. Ties break toward the smaller pole.
pub fn polar_sp(
    params: &SpParams,
    batch: &RolloutBatch,
    lambda: f64,
    a_bound: f64,
    grid: usize,
) -> Result<PolarResult> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("polar is undefined at lambda = 0"));
    }
    if grid < 3 {
        return Err(Error::invalid("grid must have at least 3 points"));
    }
    if !(a_bound > 0.0 && a_bound.is_finite()) {
        return Err(Error::invalid("a_bound must be positive and finite"));
    }
    let l = batch.l();
    let t_len = batch.t_len();
    let resid = crate::solvers::sp_residuals(params, batch)?;
    if !resid.iter().all(|r| r.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("residual".into()));
    }

    // Lag-indexed correlations D_d = Σ_i Σ_{t-s=d} R_i[:,t] U_i[:,s]ᵀ make
    // every pole evaluation O(T) outer-product sums instead of a fresh pass
    // over the batch.
    let (n_y, n_u) = (batch.n_y(), batch.n_u());
    let mut lag_corr: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n_y, n_u); t_len - 1];
    for i in 0..batch.n_rollouts() {
        let r_i = &resid[i];
        let u_i = batch.input(i);
        for d in 1..t_len {
            let acc = &mut lag_corr[d - 1];
            for t in d..t_len {
                acc.ger(1.0, &r_i.column(t), &u_i.column(t - d), 1.0);
            }
        }
    }
    let scale = 1.0 / (2.0 * batch.n_rollouts() as f64 * (l as f64 + 1.0) * lambda);
    let assemble = |a: f64| -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n_y, n_u);
        let mut pow = 1.0;
        for d in 1..t_len {
            m.zip_apply(&lag_corr[d - 1], |dst, src| *dst += pow * src);
            pow *= a;
        }
        m * (scale / pole_energy(a, l))
    };

    let evaluations = std::cell::Cell::new(0usize);
    let eval = |a: f64| -> f64 {
        evaluations.set(evaluations.get() + 1);
        top_singular_triplet(&assemble(a)).0
    };

    let (lo, hi) = (-a_bound, a_bound);
    let mut best_idx = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    let mut grid_points = Vec::with_capacity(grid);
    for g in 0..grid {
        let a = lo + (hi - lo) * g as f64 / (grid - 1) as f64;
        grid_points.push(a);
        let val = eval(a);
        if val > best_val {
            best_val = val;
            best_idx = g;
        }
    }
    let bracket_lo = grid_points[best_idx.saturating_sub(1)];
    let bracket_hi = grid_points[(best_idx + 1).min(grid - 1)];
    let (mut a_star, mut value) = (grid_points[best_idx], best_val);
    if bracket_hi > bracket_lo {
        let neg = |a: f64| -eval(a);
        let (a_ref, neg_val) = golden_section(&neg, bracket_lo, bracket_hi, 1e-10 * (hi - lo), 200);
        if -neg_val > value {
            a_star = a_ref;
            value = -neg_val;
        }
    }

    if value <= 0.0 {
        // Zero residual: the polar vanishes identically.
        return Ok(PolarResult {
            value: 0.0,
            witness: PolarWitness::Mode { a: 0.0, c: DVector::zeros(n_y), b: DVector::zeros(n_u) },
            evaluations: evaluations.get(),
        });
    }
    let (sigma, c, b) = top_singular_triplet(&assemble(a_star));
    Ok(PolarResult { value: sigma, witness: PolarWitness::Mode { a: a_star, c, b }, evaluations: evaluations.get() })
}

/// Golden-section minimization on `[lo, hi]`.
///
/// Returns the best point seen (endpoints included), after shrinking the
/// bracket to `tol` or spending `max_eval` evaluations. Deterministic. On a
/// monotone function the bracket collapses onto the better endpoint; on a
/// multimodal function this is a local search — pair it with a coarse grid
/// when the global optimum matters.
pub fn golden_section(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64, max_eval: usize) -> (f64, f64) {
    assert!(lo < hi, "golden_section needs lo < hi");
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut best = (lo, f(lo));
    let f_hi = f(hi);
    if f_hi < best.1 {
        best = (hi, f_hi);
    }
    let mut evals = 2usize;

    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    evals += 2;
    if fc < best.1 {
        best = (c, fc);
    }
    if fd < best.1 {
        best = (d, fd);
    }

    while (b - a) > tol && evals < max_eval {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
            evals += 1;
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
            evals += 1;
            if fd < best.1 {
                best = (d, fd);
            }
        }
    }
    best
}
