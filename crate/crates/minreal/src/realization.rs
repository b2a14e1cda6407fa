//! State-space realization: Ho-Kalman from Markov parameters, and direct
//! extraction from Hankel factors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linops::{hankel_map, MarkovSequence};
use crate::numeric::{pinv_truncated, svd_desc};
use crate::system::LinearSystem;

/// Relative tolerance used by the pseudo-inverses inside realization.
const PINV_REL_TOL: f64 = 1e-12;

/// Outcome of a realization: the recovered system, the detected order, and
/// the full Hankel spectrum that order was read from.
#[derive(Clone, Debug)]
pub struct RealizationResult {
    pub sys: LinearSystem,
    pub order: usize,
    pub singular_values: DVector<f64>,
}

/// Ho-Kalman realization of `(A, B, C)` from Markov parameters.
///
/// The Hankel matrix of `k` is factored through its SVD; singular values
/// above `rank_tol · σ_1` set the order. Balanced factors
/// `O = U √Σ` and `Ctr = √Σ Wᵀ` give `C` (first block row of `O`), `B`
/// (first block column of `Ctr`), and `A` as the least-squares solution to
/// the shifted observability equation over all `L` block rows — the
/// noise-robust full-shift variant.
///
/// Needs `L ≥ 1` (one shifted block row). A spectrum that is entirely zero
/// realizes the zero system of order 0.
pub fn ho_kalman(k: &MarkovSequence, rank_tol: f64) -> Result<RealizationResult> {
    if k.l() < 1 {
        return Err(Error::invalid("ho_kalman needs L >= 1"));
    }
    if !(rank_tol > 0.0) {
        return Err(Error::invalid("rank_tol must be positive"));
    }
    let (n_y, n_u, l) = (k.n_y(), k.n_u(), k.l());
    let h = hankel_map(k);
    let (u, sigma, w) = svd_desc(h.as_matrix());

    let sigma_max = if sigma.is_empty() { 0.0 } else { sigma[0] };
    if sigma_max <= 0.0 {
        return Ok(RealizationResult {
            sys: LinearSystem::zero(0, n_u, n_y),
            order: 0,
            singular_values: sigma,
        });
    }
    let order = sigma.iter().filter(|&&s| s > rank_tol * sigma_max).count();
    if order == 0 {
        return Ok(RealizationResult {
            sys: LinearSystem::zero(0, n_u, n_y),
            order: 0,
            singular_values: sigma,
        });
    }

    let mut obs = DMatrix::zeros(u.nrows(), order); // O = U sqrt(Sigma)
    let mut ctr = DMatrix::zeros(order, w.nrows()); // Ctr = sqrt(Sigma) W^T
    for r in 0..order {
        let s_sqrt = sigma[r].sqrt();
        obs.set_column(r, &(u.column(r) * s_sqrt));
        ctr.set_row(r, &(w.column(r).transpose() * s_sqrt));
    }

    let c = obs.rows(0, n_y).into_owned();
    let b = ctr.columns(0, n_u).into_owned();
    let obs_up = obs.rows(0, l * n_y);
    let obs_down = obs.rows(n_y, l * n_y);
    let a = pinv_truncated(&obs_up.into_owned(), PINV_REL_TOL) * obs_down;

    let sys = LinearSystem::new(a, b, c, DMatrix::zeros(n_y, n_u))?;
    Ok(RealizationResult { sys, order, singular_values: sigma })
}

/// Recover `(A, B, C)` from Hankel factors `V ∈ R^{(L+1)n_y × r}`,
/// `Z ∈ R^{(L+1)n_u × r}` treated as observability/controllability factors:
/// `C` is the first block row of `V`, `B` the first block column of `Zᵀ`,
/// and `A = (first block row of V)† (second block row of V)` — a single
/// block shift, with the pseudo-inverse truncated at `pinv_tol · σ_1`.
///
/// Recovery is faithful when the first block row of `V` has full column
/// rank, which needs `n_y ≥ r`; a rank-deficient block degrades gracefully
/// through the truncated pseudo-inverse.
pub fn extract_from_factors(
    v: &DMatrix<f64>,
    z: &DMatrix<f64>,
    n_y: usize,
    n_u: usize,
    pinv_tol: f64,
) -> Result<LinearSystem> {
    if v.ncols() != z.ncols() {
        return Err(Error::dim("factors must share a column count"));
    }
    if v.ncols() == 0 {
        return Err(Error::invalid("factors need at least one column"));
    }
    if n_y == 0 || n_u == 0 || v.nrows() % n_y != 0 || z.nrows() % n_u != 0 {
        return Err(Error::dim("factor rows must split into whole blocks"));
    }
    if v.nrows() / n_y != z.nrows() / n_u {
        return Err(Error::dim("factors disagree on the horizon"));
    }
    if v.nrows() < 2 * n_y {
        return Err(Error::invalid("extraction needs L >= 1 (two block rows in V)"));
    }
    let c = v.rows(0, n_y).into_owned();
    let v_shift = v.rows(n_y, n_y).into_owned();
    let a = pinv_truncated(&c, pinv_tol) * v_shift;
    let b = z.rows(0, n_u).transpose();
    LinearSystem::new(a, b, c, DMatrix::zeros(n_y, n_u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{impulse_from_markov, markov_parameters};
    use crate::numeric;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stable_system(rng: &mut ChaCha8Rng, n_x: usize, n_u: usize, n_y: usize) -> LinearSystem {
        let raw = DMatrix::from_fn(n_x, n_x, |_, _| rng.gen_range(-1.0..1.0));
        let radius = numeric::spectral_radius(&raw).max(1e-6);
        let a = raw * (0.85 / radius);
        let b = DMatrix::from_fn(n_x, n_u, |_, _| rng.gen_range(-1.0..1.0));
        let c = DMatrix::from_fn(n_y, n_x, |_, _| rng.gen_range(-1.0..1.0));
        LinearSystem::new(a, b, c, DMatrix::zeros(n_y, n_u)).unwrap()
    }

    #[test]
    fn roundtrip_on_random_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sys = random_stable_system(&mut rng, 3, 2, 2);
        let k = markov_parameters(&sys, 10);
        let res = ho_kalman(&k, 1e-8).unwrap();
        assert_eq!(res.order, 3);
        let k_hat = markov_parameters(&res.sys, 10);
        let err = (impulse_from_markov(&k_hat).as_matrix() - impulse_from_markov(&k).as_matrix()).norm();
        assert!(err < 1e-8, "roundtrip error {err}");
    }

    #[test]
    fn zero_sequence_realizes_zero_system() {
        let k = MarkovSequence::zeros(3, 2, 2);
        let res = ho_kalman(&k, 1e-8).unwrap();
        assert_eq!(res.order, 0);
        assert_eq!(res.sys.n_x(), 0);
        let g = crate::linops::impulse_response(&res.sys, 3);
        assert!(g.as_matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_mode_recovers_pole_and_gain() {
        let (a0, b0, c0) = (0.6, 1.7, -0.4);
        let sys = LinearSystem::new(dmatrix![a0], dmatrix![b0], dmatrix![c0], dmatrix![0.0]).unwrap();
        let k = markov_parameters(&sys, 6);
        let res = ho_kalman(&k, 1e-8).unwrap();
        assert_eq!(res.order, 1);
        let a_hat = res.sys.a()[(0, 0)];
        let gain = res.sys.b()[(0, 0)] * res.sys.c()[(0, 0)];
        assert!((a_hat - a0).abs() < 1e-10 * a0.abs());
        assert!((gain - b0 * c0).abs() < 1e-10 * (b0 * c0).abs());
    }

    #[test]
    fn order_detection_is_exact_and_monotone_in_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let sys = random_stable_system(&mut rng, 4, 2, 3);
        let k = markov_parameters(&sys, 8);
        let res = ho_kalman(&k, 1e-8).unwrap();
        assert_eq!(res.order, 4);
        let mut last = usize::MAX;
        for tol in [1e-10, 1e-6, 1e-2, 0.5, 0.99] {
            let order = ho_kalman(&k, tol).unwrap().order;
            assert!(order <= last);
            last = order;
        }
    }

    #[test]
    fn realization_is_basis_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let sys = random_stable_system(&mut rng, 3, 2, 2);
        let s = DMatrix::identity(3, 3) + DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-0.2..0.2));
        let s_inv = s.clone().try_inverse().unwrap();
        let sys_t = LinearSystem::new(
            &s * sys.a() * &s_inv,
            &s * sys.b(),
            sys.c() * &s_inv,
            sys.d().clone(),
        )
        .unwrap();
        let r1 = ho_kalman(&markov_parameters(&sys, 9), 1e-8).unwrap();
        let r2 = ho_kalman(&markov_parameters(&sys_t, 9), 1e-8).unwrap();
        let g1 = impulse_from_markov(&markov_parameters(&r1.sys, 9));
        let g2 = impulse_from_markov(&markov_parameters(&r2.sys, 9));
        assert!((g1.as_matrix() - g2.as_matrix()).norm() < 1e-8);
    }

    #[test]
    fn extraction_from_balanced_factors_roundtrips() {
        // The single-block shift reads A out of the first block row of V, so
        // faithful recovery needs n_y >= order.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sys = random_stable_system(&mut rng, 3, 2, 3);
        let l = 8;
        let k = markov_parameters(&sys, l);
        let h = crate::linops::hankel_map(&k);
        let (u, s, w) = numeric::svd_desc(h.as_matrix());
        let r = 3;
        let mut v = DMatrix::zeros(u.nrows(), r);
        let mut z = DMatrix::zeros(w.nrows(), r);
        for j in 0..r {
            v.set_column(j, &(u.column(j) * s[j].sqrt()));
            z.set_column(j, &(w.column(j) * s[j].sqrt()));
        }
        let rec = extract_from_factors(&v, &z, 3, 2, 1e-10).unwrap();
        let k_hat = markov_parameters(&rec, l);
        let err = (k_hat.flat() - k.flat()).norm();
        assert!(err < 1e-8, "markov roundtrip error {err}");
    }

    #[test]
    fn extraction_scalar_shift_and_edge_cases() {
        // n_y = 1, rank 1: A-hat = V_2 / V_1.
        let v = DMatrix::from_column_slice(3, 1, &[2.0, 1.0, 0.5]);
        let z = DMatrix::from_column_slice(3, 1, &[1.0, 0.3, 0.1]);
        let sys = extract_from_factors(&v, &z, 1, 1, 1e-10).unwrap();
        assert!((sys.a()[(0, 0)] - 0.5).abs() < 1e-14);
        assert_eq!(sys.b()[(0, 0)], 1.0);
        assert_eq!(sys.c()[(0, 0)], 2.0);

        // Zero factors extract the zero system (truncated pseudo-inverse).
        let sys0 = extract_from_factors(&DMatrix::zeros(4, 2), &DMatrix::zeros(4, 2), 2, 2, 1e-10).unwrap();
        assert!(sys0.a().iter().all(|&x| x == 0.0));

        // L = 0 forbids the shift.
        assert!(extract_from_factors(&DMatrix::zeros(2, 1), &DMatrix::zeros(2, 1), 2, 2, 1e-10).is_err());
    }
}
