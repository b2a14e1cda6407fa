//! Direct optimization over diagonal system parameters.
//!
//! A model is a bank of scalar modes `(a_j, b_j, c_j)`: pole, input vector,
//! output vector. The predictor for a rollout is
//! `Σ_j c_j b_jᵀ U P(a_j)ᵀ` — every mode filters the projected input through
//! a one-pole filter — and the fit is scored on the full trajectory. The
//! regularizer `λ Σ_j γ(a_j) ‖b_j‖ ‖c_j‖` is the tight per-mode surrogate
//! for the Hankel nuclear norm of a single pole.
//!
//! All pole-filter applications run as `O(T)` recursions; the dense
//! `P(a)` matrices never materialize outside the reference oracle.

use nalgebra::{DMatrix, DVector};

use crate::certificates;
use crate::error::{Error, Result};
use crate::linops::{modal_markov, pole_energy, pole_energy_deriv, MarkovSequence};
use crate::system::{LinearSystem, RolloutBatch};

use super::{AugmentationEvent, Certificate, EvalHooks, Method, RunState, SolveReport, SolverConfig};

/// Grid density for the polar sweep over the pole interval.
pub(crate) const POLAR_GRID: usize = 101;

/// Mode whose vectors stay below this norm is considered dead.
const PRUNE_NORM: f64 = 1e-12;
/// Consecutive dead iterations before a mode is removed.
const PRUNE_PATIENCE: usize = 50;

const MIN_DESCENT: f64 = 1e-12;

/// Plateau stop for an inner round: relative best-loss improvement per
/// window below this ends the round.
const PLATEAU_WINDOW: usize = 500;
const PLATEAU_REL: f64 = 5e-8;

/// Diagonal-system parameters: poles `a`, input rows `b_jᵀ`, output columns
/// `c_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpParams {
    poles: DVector<f64>,
    b_rows: DMatrix<f64>,
    c_cols: DMatrix<f64>,
}

impl SpParams {
    pub fn new(poles: DVector<f64>, b_rows: DMatrix<f64>, c_cols: DMatrix<f64>) -> Result<Self> {
        let r = poles.len();
        if r == 0 {
            return Err(Error::invalid("need at least one mode"));
        }
        if b_rows.nrows() != r || c_cols.ncols() != r {
            return Err(Error::dim("mode count must match rows of B and columns of C"));
        }
        let finite = poles.iter().chain(b_rows.iter()).chain(c_cols.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("mode parameters".into()));
        }
        Ok(SpParams { poles, b_rows, c_cols })
    }

    pub fn r(&self) -> usize {
        self.poles.len()
    }

    pub fn n_u(&self) -> usize {
        self.b_rows.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c_cols.nrows()
    }

    pub fn poles(&self) -> &DVector<f64> {
        &self.poles
    }

    pub fn b_rows(&self) -> &DMatrix<f64> {
        &self.b_rows
    }

    pub fn c_cols(&self) -> &DMatrix<f64> {
        &self.c_cols
    }

    pub fn markov(&self, l: usize) -> MarkovSequence {
        modal_markov(&self.poles, &self.b_rows, &self.c_cols, l)
    }

    /// The state-space system `(diag(a), B, C, 0)`.
    pub fn system(&self) -> LinearSystem {
        let r = self.r();
        let a = DMatrix::from_fn(r, r, |i, j| if i == j { self.poles[i] } else { 0.0 });
        LinearSystem::new(a, self.b_rows.clone(), self.c_cols.clone(), DMatrix::zeros(self.n_y(), self.n_u()))
            .expect("shapes enforced at construction")
    }

    /// Flatten `(a, B, C)` into one vector: poles, then `B` column-major,
    /// then `C` column-major.
    pub fn to_vec(&self) -> Vec<f64> {
        self.poles.iter().chain(self.b_rows.iter()).chain(self.c_cols.iter()).copied().collect()
    }

    pub fn from_vec(data: &[f64], r: usize, n_u: usize, n_y: usize) -> Result<Self> {
        if data.len() != r + r * n_u + r * n_y {
            return Err(Error::dim("flattened parameter length mismatch"));
        }
        let poles = DVector::from_column_slice(&data[..r]);
        let b_rows = DMatrix::from_column_slice(r, n_u, &data[r..r + r * n_u]);
        let c_cols = DMatrix::from_column_slice(n_y, r, &data[r + r * n_u..]);
        SpParams::new(poles, b_rows, c_cols)
    }
}

/// Gradient of [`sp_objective`] in all three parameter groups.
#[derive(Clone, Debug)]
pub struct SpGradient {
    pub poles: DVector<f64>,
    pub b_rows: DMatrix<f64>,
    pub c_cols: DMatrix<f64>,
}

impl SpGradient {
    pub fn norm(&self) -> f64 {
        (self.poles.norm_squared() + self.b_rows.norm_squared() + self.c_cols.norm_squared()).sqrt()
    }
}

fn check_shapes(p: &SpParams, batch: &RolloutBatch) -> Result<()> {
    if p.n_u() != batch.n_u() || p.n_y() != batch.n_y() {
        return Err(Error::dim("mode vectors do not match the batch dimensions"));
    }
    Ok(())
}

/// `out[t] = Σ_{s<t} a^{t-s-1} x[s]`, by the recursion
/// `out[t] = a·out[t-1] + x[t-1]`.
fn causal_filter(a: f64, x: &DVector<f64>) -> DVector<f64> {
    let t_len = x.len();
    let mut out = DVector::zeros(t_len);
    for t in 1..t_len {
        out[t] = a * out[t - 1] + x[t - 1];
    }
    out
}

/// `out[s] = Σ_{t>s} a^{t-s-1} x[t]`, by the reverse recursion.
#[cfg(test)]
fn anticausal_filter(a: f64, x: &DVector<f64>) -> DVector<f64> {
    let t_len = x.len();
    let mut out = DVector::zeros(t_len);
    for s in (0..t_len.saturating_sub(1)).rev() {
        out[s] = a * out[s + 1] + x[s + 1];
    }
    out
}

/// Derivative in `a` of the causal filter output, given that output.
#[cfg(test)]
fn causal_filter_deriv(a: f64, phi: &DVector<f64>) -> DVector<f64> {
    let t_len = phi.len();
    let mut out = DVector::zeros(t_len);
    for t in 1..t_len {
        out[t] = a * out[t - 1] + phi[t - 1];
    }
    out
}

/// Reusable buffers for the inner-loop computations; everything sized once
/// and refreshed in place so iterations stay allocation-free.
struct SpWorkspace {
    /// Per-mode causal responses, `T × N` each.
    responses: Vec<DMatrix<f64>>,
    /// Per-rollout residuals, `n_y × T` each.
    resid: Vec<DMatrix<f64>>,
    w: DVector<f64>,
    r_row: DVector<f64>,
    rho: DVector<f64>,
    psi: DVector<f64>,
}

impl SpWorkspace {
    fn new(batch: &RolloutBatch, rank: usize) -> Self {
        let t_len = batch.t_len();
        let n = batch.n_rollouts();
        SpWorkspace {
            responses: (0..rank).map(|_| DMatrix::zeros(t_len, n)).collect(),
            resid: (0..n).map(|_| DMatrix::zeros(batch.n_y(), t_len)).collect(),
            w: DVector::zeros(t_len),
            r_row: DVector::zeros(t_len),
            rho: DVector::zeros(t_len),
            psi: DVector::zeros(t_len),
        }
    }

    fn set_rank(&mut self, batch: &RolloutBatch, rank: usize) {
        let t_len = batch.t_len();
        let n = batch.n_rollouts();
        self.responses.resize_with(rank, || DMatrix::zeros(t_len, n));
    }

    /// Refresh responses and residuals at the current parameters.
    fn refresh(&mut self, p: &SpParams, batch: &RolloutBatch) {
        let t_len = batch.t_len();
        let n = batch.n_rollouts();
        for j in 0..p.r() {
            let a_j = p.poles[j];
            let b_j = p.b_rows.row(j).transpose();
            let phi = &mut self.responses[j];
            for i in 0..n {
                self.w.gemv_tr(1.0, batch.input(i), &b_j, 0.0);
                phi[(0, i)] = 0.0;
                for t in 1..t_len {
                    phi[(t, i)] = a_j * phi[(t - 1, i)] + self.w[t - 1];
                }
            }
        }
        for i in 0..n {
            let resid = &mut self.resid[i];
            resid.copy_from(batch.output(i));
            for j in 0..p.r() {
                resid.ger(-1.0, &p.c_cols.column(j), &self.responses[j].column(i), 1.0);
            }
        }
    }
}

/// Full-trajectory residuals `Y_i - Σ_j c_j phi_{j,i}ᵀ`.
pub(crate) fn residuals(p: &SpParams, batch: &RolloutBatch) -> Result<Vec<DMatrix<f64>>> {
    check_shapes(p, batch)?;
    let mut ws = SpWorkspace::new(batch, p.r());
    ws.refresh(p, batch);
    Ok(ws.resid)
}

fn data_scale(batch: &RolloutBatch) -> f64 {
    1.0 / (2.0 * batch.n_rollouts() as f64 * (batch.l() as f64 + 1.0))
}

/// `(1/4N(L+1)) Σ_i ‖Y_i - Σ_j c_j b_jᵀ U_i P(a_j)ᵀ‖² + λ Σ_j γ(a_j)‖b_j‖‖c_j‖`.
pub fn sp_objective(p: &SpParams, batch: &RolloutBatch, lambda: f64) -> Result<f64> {
    check_shapes(p, batch)?;
    let mut ws = SpWorkspace::new(batch, p.r());
    ws.refresh(p, batch);
    Ok(objective_ws(p, batch, lambda, &ws))
}

fn objective_ws(p: &SpParams, batch: &RolloutBatch, lambda: f64, ws: &SpWorkspace) -> f64 {
    let data: f64 =
        ws.resid.iter().map(|r| r.norm_squared()).sum::<f64>() * 0.5 * data_scale(batch);
    data + lambda * regularizer(p, batch.l())
}

fn regularizer(p: &SpParams, l: usize) -> f64 {
    (0..p.r())
        .map(|j| pole_energy(p.poles[j], l) * p.b_rows.row(j).norm() * p.c_cols.column(j).norm())
        .sum()
}

/// Analytic gradient of the full objective; the norm terms use subgradient
/// zero at a zero vector.
pub fn sp_gradient(p: &SpParams, batch: &RolloutBatch, lambda: f64) -> Result<SpGradient> {
    check_shapes(p, batch)?;
    let mut ws = SpWorkspace::new(batch, p.r());
    ws.refresh(p, batch);
    Ok(gradient_ws(p, batch, lambda, &mut ws).1)
}

fn gradient_ws(p: &SpParams, batch: &RolloutBatch, lambda: f64, ws: &mut SpWorkspace) -> (f64, SpGradient) {
    let l = batch.l();
    let n = batch.n_rollouts();
    let t_len = batch.t_len();
    let scale = data_scale(batch);
    let loss = objective_ws(p, batch, lambda, ws);

    let mut d_poles = DVector::zeros(p.r());
    let mut d_b = DMatrix::zeros(p.r(), p.n_u());
    let mut d_c = DMatrix::zeros(p.n_y(), p.r());
    let mut dc_acc = DVector::zeros(p.n_y());
    let mut db_acc = DVector::zeros(p.n_u());

    for j in 0..p.r() {
        let a_j = p.poles[j];
        let b_j = p.b_rows.row(j).transpose();
        let c_j = p.c_cols.column(j).into_owned();
        dc_acc.fill(0.0);
        db_acc.fill(0.0);
        let mut da_acc = 0.0;
        for i in 0..n {
            let resid = &ws.resid[i];
            let phi = ws.responses[j].column(i);
            // dc_acc += R_i * phi
            dc_acc.gemv(1.0, resid, &phi, 1.0);
            // r_row = R_iᵀ c_j, then the anticausal and derivative filters.
            ws.r_row.gemv_tr(1.0, resid, &c_j, 0.0);
            ws.rho[t_len - 1] = 0.0;
            for s in (0..t_len - 1).rev() {
                ws.rho[s] = a_j * ws.rho[s + 1] + ws.r_row[s + 1];
            }
            db_acc.gemv(1.0, batch.input(i), &ws.rho, 1.0);
            ws.psi[0] = 0.0;
            for t in 1..t_len {
                ws.psi[t] = a_j * ws.psi[t - 1] + phi[t - 1];
            }
            da_acc += ws.r_row.dot(&ws.psi);
        }
        let b_norm = b_j.norm();
        let c_norm = c_j.norm();
        let gamma = pole_energy(a_j, l);

        let mut dc = &dc_acc * (-scale);
        if c_norm > 0.0 {
            dc += &c_j * (lambda * gamma * b_norm / c_norm);
        }
        let mut db = &db_acc * (-scale);
        if b_norm > 0.0 {
            db += &b_j * (lambda * gamma * c_norm / b_norm);
        }
        let da = -scale * da_acc + lambda * pole_energy_deriv(a_j, l) * b_norm * c_norm;

        d_poles[j] = da;
        d_b.set_row(j, &db.transpose());
        d_c.set_column(j, &dc);
    }
    (loss, SpGradient { poles: d_poles, b_rows: d_b, c_cols: d_c })
}

struct PruneState {
    counters: Vec<usize>,
}

impl PruneState {
    fn new(r: usize) -> Self {
        PruneState { counters: vec![0; r] }
    }

    /// Returns indices of modes to remove, oldest-dead first.
    fn update(&mut self, p: &SpParams) -> Vec<usize> {
        let mut doomed = Vec::new();
        for j in 0..p.r() {
            let dead = p.b_rows.row(j).norm() < PRUNE_NORM && p.c_cols.column(j).norm() < PRUNE_NORM;
            if dead {
                self.counters[j] += 1;
                if self.counters[j] >= PRUNE_PATIENCE {
                    doomed.push(j);
                }
            } else {
                self.counters[j] = 0;
            }
        }
        doomed
    }

    fn remove(&mut self, idx: usize) {
        self.counters.remove(idx);
    }
}

fn remove_mode(p: &SpParams, idx: usize) -> SpParams {
    let keep: Vec<usize> = (0..p.r()).filter(|&j| j != idx).collect();
    let poles = DVector::from_iterator(keep.len(), keep.iter().map(|&j| p.poles[j]));
    let mut b_rows = DMatrix::zeros(keep.len(), p.n_u());
    let mut c_cols = DMatrix::zeros(p.n_y(), keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        b_rows.set_row(dst, &p.b_rows.row(src));
        c_cols.set_column(dst, &p.c_cols.column(src));
    }
    SpParams { poles, b_rows, c_cols }
}

/// Polyak-momentum descent on `(a, B, C)` with pole clipping, dead-mode
/// pruning, a golden-section polar certificate, and mode augmentation.
///
/// The pole coordinate is far stiffer than the mode vectors (its curvature
/// carries the squared filter-derivative energy), so pole steps use the
/// configured `lr` scaled down by a fixed, data-derived stiffness ratio
/// computed once at the start of the run.
pub fn sp_solve(
    batch: &RolloutBatch,
    cfg: &SolverConfig,
    init: &SpParams,
    hooks: &EvalHooks<'_>,
) -> Result<SolveReport> {
    cfg.validate()?;
    check_shapes(init, batch)?;
    if init.r() != cfg.r_init {
        return Err(Error::invalid(format!("init has {} modes, r_init is {}", init.r(), cfg.r_init)));
    }
    let (curv_bc, curv_a) = super::sp_curvatures(batch, cfg.a_bound);
    let pole_ratio = (curv_bc / curv_a).min(1.0);
    let l = batch.l();
    let mut state = RunState::new(*hooks);
    let mut params = init.clone();
    for j in 0..params.r() {
        params.poles[j] = params.poles[j].clamp(-cfg.a_bound, cfg.a_bound);
    }
    let mut prev = params.clone();
    let mut prune = PruneState::new(params.r());
    let mut nominal_rank = cfg.r_init;
    let mut iter: u64 = 0;
    let mut augmentations = Vec::new();
    let mut ws = SpWorkspace::new(batch, params.r());
    let certificate;

    'outer: loop {
        let mut inner = 0usize;
        let mut last_loss;
        let mut best_loss = f64::INFINITY;
        let mut best_params = params.clone();
        let mut window_best = f64::INFINITY;
        let mut window_left = PLATEAU_WINDOW;
        let mut step_scale = 1.0f64;
        let mut clean_streak = 0usize;
        loop {
            state.work_start();
            ws.set_rank(batch, params.r());
            ws.refresh(&params, batch);
            let (loss, grad) = gradient_ws(&params, batch, cfg.lambda, &mut ws);

            // Heavy-ball excursion guard: restore the best iterate with zero
            // velocity and a reduced step when momentum has overshot (or the
            // loss left the finite range altogether).
            if !loss.is_finite() || loss > 4.0 * best_loss + 1e-12 {
                if !best_loss.is_finite() {
                    return Err(Error::Diverged(format!("sp: non-finite loss at iteration {iter}")));
                }
                params = best_params.clone();
                prev = params.clone();
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
                best_params = params.clone();
            }
            clean_streak += 1;
            if clean_streak >= 200 && step_scale < 1.0 {
                step_scale = (step_scale * 2.0).min(1.0);
                clean_streak = 0;
            }
            let stationary = grad.norm() <= cfg.stat_tol * (1.0 + loss.abs());
            if !stationary {
                let lr = cfg.lr * step_scale;
                let mut next = params.clone();
                next.poles = &params.poles - &grad.poles * (lr * pole_ratio) + (&params.poles - &prev.poles) * cfg.momentum;
                next.b_rows = &params.b_rows - &grad.b_rows * lr + (&params.b_rows - &prev.b_rows) * cfg.momentum;
                next.c_cols = &params.c_cols - &grad.c_cols * lr + (&params.c_cols - &prev.c_cols) * cfg.momentum;
                for j in 0..next.r() {
                    next.poles[j] = next.poles[j].clamp(-cfg.a_bound, cfg.a_bound);
                }
                prev = std::mem::replace(&mut params, next);
            }
            state.work_stop();

            if state.should_record(iter) {
                state.record(iter, loss, None, nominal_rank, &params.markov(l));
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

            // Drop modes that have been numerically zero for a while; the
            // nominal rank reported in the trace is unaffected.
            for idx in prune.update(&params).into_iter().rev() {
                params = remove_mode(&params, idx);
                prev = remove_mode(&prev, idx);
                prune.remove(idx);
            }
            if params.r() == 0 {
                return Err(Error::Diverged("sp: every mode was pruned".into()));
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
        // Continue the round from its best point.
        if best_loss < last_loss && best_params.r() == params.r() {
            params = best_params;
            prev = params.clone();
            last_loss = best_loss;
        }

        if cfg.lambda <= 0.0 {
            certificate = Certificate::BudgetExhausted;
            break;
        }

        state.work_start();
        let polar = certificates::polar_sp(&params, batch, cfg.lambda, cfg.a_bound, POLAR_GRID)?;
        state.work_stop();
        state.record(iter, last_loss, Some(polar.value), nominal_rank, &params.markov(l));

        if polar.value <= 1.0 + cfg.polar_tol {
            certificate = Certificate::CertifiedGlobal;
            break;
        }
        if nominal_rank >= cfg.r_max {
            certificate = Certificate::RankCapReached;
            break;
        }
        if state.budget_exceeded(cfg) {
            certificate = Certificate::BudgetExhausted;
            break;
        }

        // Append the polar witness mode (a*, c*, b*), amplitude set by a 1-D
        // search: with unit witness vectors scaled by sqrt(s) each, the
        // objective is quadratic in s.
        state.work_start();
        let (a_star, c_star, b_star) = match &polar.witness {
            certificates::PolarWitness::Mode { a, c, b } => (*a, c.clone(), b.clone()),
            _ => unreachable!("polar_sp returns mode witnesses"),
        };
        let resid = residuals(&params, batch)?;
        let scale = data_scale(batch);
        let mut lin = 0.0;
        let mut quad = 0.0;
        for i in 0..batch.n_rollouts() {
            let w = batch.input(i).transpose() * &b_star;
            let phi = causal_filter(a_star, &w);
            let r_row = resid[i].transpose() * &c_star;
            lin += r_row.dot(&phi);
            quad += phi.norm_squared();
        }
        lin *= scale;
        quad *= scale;
        let gamma_star = pole_energy(a_star, l);
        let phi_obj = |s: f64| last_loss - s * lin + 0.5 * s * s * quad + cfg.lambda * gamma_star * s;
        let mut s_hi = 1.0f64;
        let mut grow = 0;
        while phi_obj(2.0 * s_hi) < phi_obj(s_hi) && grow < 60 {
            s_hi *= 2.0;
            grow += 1;
        }
        let (s_star, obj_after) = certificates::golden_section(&phi_obj, 0.0, 2.0 * s_hi, 1e-12 * s_hi, 300);
        state.work_stop();

        if obj_after < last_loss - MIN_DESCENT && s_star > 0.0 {
            let amp = s_star.sqrt();
            let r_new = params.r() + 1;
            let mut poles = DVector::zeros(r_new);
            let mut b_rows = DMatrix::zeros(r_new, params.n_u());
            let mut c_cols = DMatrix::zeros(params.n_y(), r_new);
            poles.rows_mut(0, params.r()).copy_from(&params.poles);
            b_rows.rows_mut(0, params.r()).copy_from(&params.b_rows);
            c_cols.columns_mut(0, params.r()).copy_from(&params.c_cols);
            poles[r_new - 1] = a_star.clamp(-cfg.a_bound, cfg.a_bound);
            b_rows.set_row(r_new - 1, &(b_star.transpose() * amp));
            c_cols.set_column(r_new - 1, &(c_star * amp));
            params = SpParams { poles, b_rows, c_cols };
            prev = params.clone();
            prune = PruneState::new(params.r());
            nominal_rank += 1;
            augmentations.push(AugmentationEvent {
                iter,
                polar: polar.value,
                objective_before: last_loss,
                objective_after: obj_after,
                rank_after: nominal_rank,
            });
        } else {
            certificate = Certificate::BudgetExhausted;
            break;
        }
    }

    let final_markov = params.markov(l);
    let final_loss = sp_objective(&params, batch, cfg.lambda)?;
    state.record(iter, final_loss, None, nominal_rank, &final_markov);
    let effective_rank = (0..params.r())
        .filter(|&j| params.b_rows.row(j).norm() > PRUNE_NORM || params.c_cols.column(j).norm() > PRUNE_NORM)
        .count();

    Ok(SolveReport {
        method: Method::Sp,
        trace: state.trace,
        final_markov,
        final_sys: params.system(),
        certificate,
        final_rank: nominal_rank,
        effective_rank,
        augmentations,
        checkpoints: state.checkpoints,
    })
}
