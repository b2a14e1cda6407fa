//! Burer–Monteiro factorization of the Hankel matrix.
//!
//! The decision variables are factors `V ∈ R^{(L+1)n_y × r}`,
//! `Z ∈ R^{(L+1)n_u × r}`; the predictor reads the Markov blocks out of
//! `V Zᵀ` by anti-diagonal averaging, and the Frobenius penalty
//! `(λ/2)(‖V‖² + ‖Z‖²)` plays the role of the nuclear norm of `V Zᵀ`.
//! An inner Polyak-momentum loop runs to stationarity; the polar certificate
//! then either declares the point globally optimal or hands back a rank-one
//! descent direction that is appended after a 1-D line search.

use nalgebra::DMatrix;

use crate::certificates;
use crate::error::{Error, Result};
use crate::linops::{hankel_extract, hankel_extract_adjoint, MarkovSequence};
use crate::realization::extract_from_factors;
use crate::system::{stack_targets, RolloutBatch, StackedTargets};

use super::{AugmentationEvent, Certificate, EvalHooks, Method, RunState, SolveReport, SolverConfig};

/// Pseudo-inverse truncation used when reading the system out of the factors.
const EXTRACT_PINV_TOL: f64 = 1e-10;

/// Minimum strict objective decrease an augmentation must achieve.
const MIN_DESCENT: f64 = 1e-12;

/// Inner rounds also end when the best loss improves by less than this
/// (relative) over a window of iterations: descent along the weakest
/// directions is then cheaper to buy through augmentation than to grind out.
const PLATEAU_WINDOW: usize = 500;
const PLATEAU_REL: f64 = 5e-8;

/// Hankel factor pair with its block geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPair {
    v: DMatrix<f64>,
    z: DMatrix<f64>,
    l: usize,
    n_y: usize,
    n_u: usize,
}

impl FactorPair {
    pub fn new(v: DMatrix<f64>, z: DMatrix<f64>, l: usize, n_y: usize, n_u: usize) -> Result<Self> {
        if v.ncols() != z.ncols() || v.ncols() == 0 {
            return Err(Error::dim("factors need a shared, positive column count"));
        }
        if v.nrows() != (l + 1) * n_y || z.nrows() != (l + 1) * n_u {
            return Err(Error::dim(format!(
                "factors must be {} x r and {} x r",
                (l + 1) * n_y,
                (l + 1) * n_u
            )));
        }
        if !v.iter().chain(z.iter()).all(|x| x.is_finite()) {
            return Err(Error::NonFinite("factor entries".into()));
        }
        Ok(FactorPair { v, z, l, n_y, n_u })
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn rank(&self) -> usize {
        self.v.ncols()
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    /// Markov blocks read out of `V Zᵀ` by anti-diagonal averaging.
    pub fn markov(&self) -> MarkovSequence {
        let w = &self.v * self.z.transpose();
        hankel_extract(&w, self.l, self.n_y, self.n_u).expect("shape enforced at construction")
    }

    /// Flatten `(V, Z)` column-major into one vector (for optimization
    /// interop and finite-difference checks).
    pub fn to_vec(&self) -> Vec<f64> {
        self.v.iter().chain(self.z.iter()).copied().collect()
    }

    pub fn from_vec(data: &[f64], rank: usize, l: usize, n_y: usize, n_u: usize) -> Result<Self> {
        let v_len = (l + 1) * n_y * rank;
        let z_len = (l + 1) * n_u * rank;
        if data.len() != v_len + z_len {
            return Err(Error::dim("flattened factor length mismatch"));
        }
        let v = DMatrix::from_column_slice((l + 1) * n_y, rank, &data[..v_len]);
        let z = DMatrix::from_column_slice((l + 1) * n_u, rank, &data[v_len..]);
        FactorPair::new(v, z, l, n_y, n_u)
    }
}

fn check_shapes(f: &FactorPair, batch: &RolloutBatch) -> Result<()> {
    if f.l != batch.l() || f.n_y != batch.n_y() || f.n_u != batch.n_u() {
        return Err(Error::dim("factor geometry does not match the batch"));
    }
    Ok(())
}

/// Final-output residual `y_T - H†(VZᵀ) x` for every rollout, as an
/// `n_y × N` matrix.
pub(crate) fn residual(f: &FactorPair, stacked: &StackedTargets) -> DMatrix<f64> {
    let markov = f.markov();
    &stacked.last_outputs - markov.flat() * &stacked.rev_inputs
}

/// `(1/2N) Σ_i ‖y_T - H†(VZᵀ) x_i‖² + (λ/2)(‖V‖² + ‖Z‖²)`.
pub fn bm_objective(f: &FactorPair, batch: &RolloutBatch, lambda: f64) -> Result<f64> {
    check_shapes(f, batch)?;
    let stacked = stack_targets(batch);
    Ok(objective_with(f, &stacked, lambda))
}

fn objective_with(f: &FactorPair, stacked: &StackedTargets, lambda: f64) -> f64 {
    let resid = residual(f, stacked);
    resid.norm_squared() / (2.0 * stacked.n_rollouts() as f64)
        + 0.5 * lambda * (f.v.norm_squared() + f.z.norm_squared())
}

/// Exact gradient of [`bm_objective`] in `(V, Z)`.
///
/// The chain rule through the averaging extraction produces the
/// multiplicity-normalized Hankel embedding of the residual correlation
/// ([`hankel_extract_adjoint`]); the same matrix drives the polar
/// certificate.
pub fn bm_gradient(f: &FactorPair, batch: &RolloutBatch, lambda: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_shapes(f, batch)?;
    let stacked = stack_targets(batch);
    Ok(gradient_with(f, &stacked, lambda).1)
}

fn gradient_with(f: &FactorPair, stacked: &StackedTargets, lambda: f64) -> (f64, (DMatrix<f64>, DMatrix<f64>)) {
    let n = stacked.n_rollouts() as f64;
    let resid = residual(f, stacked);
    let loss = resid.norm_squared() / (2.0 * n) + 0.5 * lambda * (f.v.norm_squared() + f.z.norm_squared());
    let cross = (&resid * stacked.rev_inputs.transpose()) / n;
    let cross_seq = MarkovSequence::from_flat(cross, f.l, f.n_y, f.n_u).expect("markov-shaped");
    let embed = hankel_extract_adjoint(&cross_seq);
    let dv = -(&embed * &f.z) + &f.v * lambda;
    let dz = -(embed.transpose() * &f.v) + &f.z * lambda;
    (loss, (dv, dz))
}

/// Polyak-momentum descent on `(V, Z)` with polar-certified rank augmentation.
///
/// Each round runs the inner loop to stationarity (or its caps), then checks
/// the polar. At `polar ≤ 1 + polar_tol` the run certifies; otherwise the
/// top singular pair of the certificate matrix is appended, scaled by a
/// golden-section line search, and the inner loop resumes at rank `r + 1`.
/// The final system is read out of the factors directly.
pub fn bm_solve(
    batch: &RolloutBatch,
    cfg: &SolverConfig,
    init: &FactorPair,
    hooks: &EvalHooks<'_>,
) -> Result<SolveReport> {
    cfg.validate()?;
    check_shapes(init, batch)?;
    if init.rank() != cfg.r_init {
        return Err(Error::invalid(format!(
            "init rank {} must equal r_init {}",
            init.rank(),
            cfg.r_init
        )));
    }
    let stacked = stack_targets(batch);
    let n = batch.n_rollouts() as f64;
    let mut state = RunState::new(*hooks);
    let mut factors = init.clone();
    let mut v_prev = factors.v.clone();
    let mut z_prev = factors.z.clone();
    let mut rank = cfg.r_init;
    let mut iter: u64 = 0;
    let mut augmentations = Vec::new();
    let certificate;

    'outer: loop {
        // Inner loop at the current rank.
        let mut inner = 0usize;
        let mut last_loss;
        let mut best_loss = f64::INFINITY;
        let mut best_factors = factors.clone();
        let mut window_best = f64::INFINITY;
        let mut window_left = PLATEAU_WINDOW;
        let mut step_scale = 1.0f64;
        let mut clean_streak = 0usize;
        loop {
            state.work_start();
            let (loss, (dv, dz)) = gradient_with(&factors, &stacked, cfg.lambda);

            // Heavy-ball excursion guard: when the velocity has carried the
            // iterate far above the best point (or off to non-finite loss),
            // restore that point with zero velocity and a reduced step.
            if !loss.is_finite() || loss > 4.0 * best_loss + 1e-12 {
                if !best_loss.is_finite() {
                    return Err(Error::Diverged(format!("bm: non-finite loss at iteration {iter}")));
                }
                factors = best_factors.clone();
                v_prev = factors.v.clone();
                z_prev = factors.z.clone();
                step_scale = (step_scale * 0.25).max(1.0 / 1_048_576.0);
                clean_streak = 0;
                state.work_stop();
                iter += 1;
                inner += 1;
                if inner >= cfg.max_iter {
                    last_loss = best_loss;
                    break;
                }
                continue;
            }
            last_loss = loss;
            if loss < best_loss {
                best_loss = loss;
                best_factors = factors.clone();
            }
            // A sustained clean stretch earns the step back.
            clean_streak += 1;
            if clean_streak >= 200 && step_scale < 1.0 {
                step_scale = (step_scale * 2.0).min(1.0);
                clean_streak = 0;
            }
            let grad_norm = (dv.norm_squared() + dz.norm_squared()).sqrt();
            let stationary = grad_norm <= cfg.stat_tol * (1.0 + loss.abs());
            if !stationary {
                let lr = cfg.lr * step_scale;
                let v_next = &factors.v - &dv * lr + (&factors.v - &v_prev) * cfg.momentum;
                let z_next = &factors.z - &dz * lr + (&factors.z - &z_prev) * cfg.momentum;
                v_prev = std::mem::replace(&mut factors.v, v_next);
                z_prev = std::mem::replace(&mut factors.z, z_next);
            }
            state.work_stop();

            if state.should_record(iter) {
                state.record(iter, loss, None, rank, &factors.markov());
            }
            if stationary {
                break;
            }
            window_left -= 1;
            if window_left == 0 {
                if window_best - best_loss <= PLATEAU_REL * best_loss.abs() {
                    break;
                }
                window_best = best_loss;
                window_left = PLATEAU_WINDOW;
            }
            iter += 1;
            inner += 1;
            if inner >= cfg.max_iter {
                break;
            }
            if state.budget_exceeded(cfg) {
                certificate = Certificate::BudgetExhausted;
                break 'outer;
            }
        }
        // Continue the round from its best point, not from wherever the last
        // momentum step happened to land.
        if best_loss < last_loss {
            factors = best_factors;
            last_loss = best_loss;
        }

        if cfg.lambda <= 0.0 {
            // No regularizer, no certificate: a single stationary round.
            certificate = Certificate::BudgetExhausted;
            break;
        }

        state.work_start();
        let polar = certificates::polar_bm(&factors, batch, cfg.lambda)?;
        state.work_stop();
        state.record(iter, last_loss, Some(polar.value), rank, &factors.markov());

        if polar.value <= 1.0 + cfg.polar_tol {
            certificate = Certificate::CertifiedGlobal;
            break;
        }
        if rank >= cfg.r_max {
            certificate = Certificate::RankCapReached;
            break;
        }
        if state.budget_exceeded(cfg) {
            certificate = Certificate::BudgetExhausted;
            break;
        }

        // Rank-one augmentation: objective restricted to the appended pair
        // scaled by tau is quadratic in tau^2, so the line search works on
        // three cached scalars.
        state.work_start();
        let (dir_v, dir_z) = match &polar.witness {
            certificates::PolarWitness::Factor { v, z } => (v.clone(), z.clone()),
            _ => unreachable!("polar_bm returns factor witnesses"),
        };
        let extra_markov = hankel_extract(&(&dir_v * dir_z.transpose()), factors.l, factors.n_y, factors.n_u)?;
        let extra_pred = extra_markov.flat() * &stacked.rev_inputs;
        let resid = residual(&factors, &stacked);
        let lin = crate::numeric::frob_inner(&resid, &extra_pred) / n;
        let quad = extra_pred.norm_squared() / n;
        let phi = |tau: f64| {
            let s = tau * tau;
            last_loss - s * lin + 0.5 * s * s * quad + cfg.lambda * s
        };
        let mut tau_hi = 1.0f64;
        let mut grow = 0;
        while phi(2.0 * tau_hi) < phi(tau_hi) && grow < 60 {
            tau_hi *= 2.0;
            grow += 1;
        }
        let (tau_star, obj_after) = certificates::golden_section(&phi, 0.0, 2.0 * tau_hi, 1e-9 * tau_hi, 300);
        state.work_stop();

        if obj_after < last_loss - MIN_DESCENT {
            let mut v_new = DMatrix::zeros(factors.v.nrows(), rank + 1);
            let mut z_new = DMatrix::zeros(factors.z.nrows(), rank + 1);
            v_new.columns_mut(0, rank).copy_from(&factors.v);
            z_new.columns_mut(0, rank).copy_from(&factors.z);
            v_new.set_column(rank, &(dir_v * tau_star));
            z_new.set_column(rank, &(dir_z * tau_star));
            factors = FactorPair::new(v_new, z_new, factors.l, factors.n_y, factors.n_u)?;
            v_prev = factors.v.clone();
            z_prev = factors.z.clone();
            rank += 1;
            augmentations.push(AugmentationEvent {
                iter,
                polar: polar.value,
                objective_before: last_loss,
                objective_after: obj_after,
                rank_after: rank,
            });
        } else {
            // Polar is barely above threshold but no usable descent exists in
            // floating point; report the budget as exhausted rather than
            // claiming a certificate.
            certificate = Certificate::BudgetExhausted;
            break;
        }
    }

    let final_markov = factors.markov();
    let final_loss = objective_with(&factors, &stacked, cfg.lambda);
    state.record(iter, final_loss, None, rank, &final_markov);
    let final_sys = if factors.l >= 1 {
        extract_from_factors(&factors.v, &factors.z, factors.n_y, factors.n_u, EXTRACT_PINV_TOL)?
    } else {
        crate::system::LinearSystem::zero(0, factors.n_u, factors.n_y)
    };

    Ok(SolveReport {
        method: Method::Bm,
        trace: state.trace,
        final_markov,
        final_sys,
        certificate,
        final_rank: rank,
        effective_rank: rank,
        augmentations,
        checkpoints: state.checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{hankel_map, markov_parameters};
    use crate::numeric::svd_desc;
    use crate::solvers::{auto_lr_bm, shared_init};
    use crate::system::{generate, GenConfig, SystemKind};

    fn noiseless_cfg(seed: u64) -> GenConfig {
        GenConfig {
            n_x_star: 2,
            n_u: 2,
            n_y: 2,
            n_rollouts: 150,
            l: 8,
            noise_var: 0.0,
            system_kind: SystemKind::DiagonalizableSymmetric,
            spectral_radius_cap: 1.0,
            seed,
        }
    }

    fn balanced_factors_of_truth(batch: &RolloutBatch, sys: &crate::system::LinearSystem, r: usize) -> FactorPair {
        let k = markov_parameters(sys, batch.l());
        let h = hankel_map(&k);
        let (u, s, w) = svd_desc(h.as_matrix());
        let mut v = DMatrix::zeros(u.nrows(), r);
        let mut z = DMatrix::zeros(w.nrows(), r);
        for j in 0..r {
            v.set_column(j, &(u.column(j) * s[j].sqrt()));
            z.set_column(j, &(w.column(j) * s[j].sqrt()));
        }
        FactorPair::new(v, z, batch.l(), batch.n_y(), batch.n_u()).unwrap()
    }

    #[test]
    fn regularizer_equals_nuclear_norm_at_balanced_factors() {
        let (sys, batch) = generate(&noiseless_cfg(2)).unwrap();
        let f = balanced_factors_of_truth(&batch, &sys, 2);
        let k = markov_parameters(&sys, batch.l());
        let nn = crate::oracle::nuclear_norm(hankel_map(&k).as_matrix());
        let lambda = 0.37;
        let obj = bm_objective(&f, &batch, lambda).unwrap();
        // Noiseless data at the truth: the data term vanishes.
        assert!((obj - lambda * nn).abs() < 1e-10 * nn.max(1.0), "obj {obj} vs {}", lambda * nn);
    }

    #[test]
    fn zero_factors_leave_the_pure_data_term() {
        let (_, batch) = generate(&noiseless_cfg(3)).unwrap();
        let f = FactorPair::new(
            DMatrix::zeros((batch.l() + 1) * 2, 1),
            DMatrix::zeros((batch.l() + 1) * 2, 1),
            batch.l(),
            2,
            2,
        )
        .unwrap();
        let expect: f64 = (0..batch.n_rollouts())
            .map(|i| batch.output(i).column(batch.t_len() - 1).norm_squared())
            .sum::<f64>()
            / (2.0 * batch.n_rollouts() as f64);
        let got = bm_objective(&f, &batch, 0.9).unwrap();
        assert!((got - expect).abs() < 1e-12 * expect.max(1.0));
    }

    #[test]
    fn rescaling_factors_moves_only_the_regularizer() {
        let (_, batch) = generate(&noiseless_cfg(4)).unwrap();
        let (_, f, _) = shared_init(&batch, 5, 2).unwrap();
        let doubled = FactorPair::new(f.v() * 2.0, f.z() * 0.5, f.l(), f.n_y(), f.n_u()).unwrap();
        let data0 = bm_objective(&f, &batch, 0.0).unwrap();
        let data1 = bm_objective(&doubled, &batch, 0.0).unwrap();
        assert!((data0 - data1).abs() < 1e-12 * data0.max(1.0));
        let lambda = 0.2;
        let reg0 = bm_objective(&f, &batch, lambda).unwrap() - data0;
        let reg1 = bm_objective(&doubled, &batch, lambda).unwrap() - data1;
        let expect1 = 0.5 * lambda * (4.0 * f.v().norm_squared() + 0.25 * f.z().norm_squared());
        assert!((reg1 - expect1).abs() < 1e-12 * expect1.max(1.0));
        assert!(reg1 > reg0);
    }

    #[test]
    fn objective_matches_dense_reference() {
        let (_, batch) = generate(&GenConfig { l: 3, n_rollouts: 6, ..noiseless_cfg(8) }).unwrap();
        let (_, f, _) = shared_init(&batch, 2, 2).unwrap();
        let fast = bm_objective(&f, &batch, 0.11).unwrap();
        let dense = crate::oracle::dense_reference_objective(
            &crate::oracle::DenseParams::Bm(&f),
            &batch,
            0.11,
        )
        .unwrap();
        assert!((fast - dense).abs() <= 1e-12 * fast.abs().max(1.0));
    }

    #[test]
    fn solves_noiseless_rank_two_instance_with_certificate() {
        let (sys, batch) = generate(&noiseless_cfg(11)).unwrap();
        let (_, init, _) = shared_init(&batch, 1, 2).unwrap();
        let cfg = SolverConfig {
            lambda: 1e-4,
            lr: auto_lr_bm(&batch, &init),
            momentum: crate::solvers::auto_momentum_bm(&batch, &init, 1e-4),
            max_iter: 40_000,
            r_init: 2,
            r_max: 6,
            stat_tol: 1e-9,
            ..SolverConfig::default()
        };
        let gstar = markov_parameters(&sys, batch.l());
        let hooks = EvalHooks::with_gstar(&gstar, 500);
        let report = bm_solve(&batch, &cfg, &init, &hooks).unwrap();
        assert_eq!(report.certificate, Certificate::CertifiedGlobal);
        let polar = report.trace.iter().rev().find_map(|r| r.polar).unwrap();
        assert!(polar <= 1.01, "polar {polar}");
        let rec = report.trace.last().unwrap().recovery_error.unwrap();
        assert!(rec < 1e-3, "recovery error {rec}");
    }

    #[test]
    fn zero_data_prefers_zero_factors() {
        let inputs: Vec<DMatrix<f64>> = (0..4)
            .map(|i| DMatrix::from_fn(2, 6, |r, c| ((i + r * 3 + c) as f64 * 0.713).sin()))
            .collect();
        let sys = crate::system::LinearSystem::zero(1, 2, 2);
        let batch = crate::system::simulate(&sys, &inputs, 0.0, 0).unwrap();
        let (_, init, _) = shared_init(&batch, 9, 1).unwrap();
        let cfg = SolverConfig {
            lambda: 1e-3,
            lr: 0.05,
            momentum: 0.99,
            max_iter: 20_000,
            r_init: 1,
            stat_tol: 1e-10,
            ..SolverConfig::default()
        };
        let report = bm_solve(&batch, &cfg, &init, &EvalHooks::default()).unwrap();
        assert_eq!(report.certificate, Certificate::CertifiedGlobal);
        assert!(report.trace.last().unwrap().loss < 1e-8, "loss {}", report.trace.last().unwrap().loss);
        let polar = certificates_polar(&report, &batch, &cfg);
        assert!(polar < 1.0 + cfg.polar_tol);
    }

    fn certificates_polar(report: &SolveReport, batch: &RolloutBatch, cfg: &SolverConfig) -> f64 {
        let f = FactorPair::new(
            DMatrix::zeros((batch.l() + 1) * batch.n_y(), report.final_rank),
            DMatrix::zeros((batch.l() + 1) * batch.n_u(), report.final_rank),
            batch.l(),
            batch.n_y(),
            batch.n_u(),
        )
        .unwrap();
        crate::certificates::polar_bm(&f, batch, cfg.lambda).unwrap().value
    }
}
