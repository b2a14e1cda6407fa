//! Evaluation quantities: normalized recovery error, covariance-weighted
//! recovery, Hankel spectra, and a Monte-Carlo condition-number estimate.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linops::{hankel_map, impulse_from_markov, pole_impulse_matrix, ImpulseResponse, MarkovSequence};
use crate::numeric;
use crate::solvers::{FactorPair, SpParams};
use crate::system::derive_stream;

/// Frobenius distance between impulse responses, normalized by
/// `sqrt(2 n_y n_u (L+1))`.
pub fn recovery_error(g_hat: &ImpulseResponse, g_star: &ImpulseResponse) -> Result<f64> {
    if g_hat.as_matrix().shape() != g_star.as_matrix().shape() {
        return Err(Error::dim("impulse responses differ in shape"));
    }
    let norm = (2.0 * g_hat.n_y() as f64 * g_hat.n_u() as f64 * (g_hat.l() as f64 + 1.0)).sqrt();
    Ok((g_hat.as_matrix() - g_star.as_matrix()).norm() / norm)
}

/// [`recovery_error`] on the zero-feedthrough impulse responses of two
/// Markov sequences.
pub fn recovery_error_markov(k_hat: &MarkovSequence, k_star: &MarkovSequence) -> Result<f64> {
    if !k_hat.same_shape(k_star) {
        return Err(Error::dim("Markov sequences differ in shape"));
    }
    recovery_error(&impulse_from_markov(k_hat), &impulse_from_markov(k_star))
}

/// `‖(Ĝ - G*)(I ⊗ Σ_U^{1/2})‖_F`, the input-covariance-weighted recovery
/// norm. The Kronecker factor is applied block-column-wise and never
/// materialized.
pub fn weighted_recovery(g_hat: &ImpulseResponse, g_star: &ImpulseResponse, sigma_u: &DMatrix<f64>) -> Result<f64> {
    if g_hat.as_matrix().shape() != g_star.as_matrix().shape() {
        return Err(Error::dim("impulse responses differ in shape"));
    }
    let n_u = g_hat.n_u();
    if sigma_u.nrows() != n_u || sigma_u.ncols() != n_u {
        return Err(Error::dim("sigma_u must be n_u x n_u"));
    }
    let root = numeric::sym_sqrt_psd(sigma_u)?;
    let diff = g_hat.as_matrix() - g_star.as_matrix();
    let t_len = 2 * (g_hat.l() + 1);
    let mut total = 0.0;
    for jb in 0..t_len {
        let block_cols = diff.columns(jb * n_u, n_u);
        total += (block_cols * &root).norm_squared();
    }
    Ok(total.sqrt())
}

/// All singular values of the Hankel embedding, descending.
pub fn hankel_spectrum(k: &MarkovSequence) -> DVector<f64> {
    numeric::singular_values_desc(hankel_map(k).as_matrix())
}

/// A predictor whose output blocks the condition number is taken over.
pub enum CondModel<'a> {
    /// Modal predictor: blocks are the per-time-step outputs over the full
    /// trajectory.
    Modes { params: &'a SpParams, l: usize },
    /// Factored Hankel predictor: a single block, the final output.
    Factors(&'a FactorPair),
}

/// Sampler interface for [`cond_estimate`]: maps a sample index to an input
/// trajectory, so the estimate is independent of evaluation order.
pub type InputSampler<'a> = dyn Fn(u64) -> DMatrix<f64> + 'a;

/// Gaussian sampler with per-entry variance `scale²`, counter-based on the
/// sample index.
pub fn gaussian_input_sampler(n_u: usize, t_len: usize, scale: f64, seed: u64) -> impl Fn(u64) -> DMatrix<f64> {
    move |idx: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_stream(seed, 0x4d43, idx));
        DMatrix::from_fn(n_u, t_len, |_, _| rng.sample::<f64, _>(StandardNormal) * scale)
    }
}

/// Monte-Carlo condition number of the prediction blocks: the worst, over
/// output blocks and over the supplied parameter points, of the
/// fourth-to-second moment ratio `E[‖·‖⁴] / E[‖·‖²]²`.
///
/// For a Gaussian input and an effectively rank-one block the population
/// value is 3; a point-mass input gives exactly 1. Blocks with identically
/// zero prediction are skipped; if every block is zero the ratio is
/// undefined and an error is returned.
pub fn cond_estimate(models: &[CondModel<'_>], sampler: &InputSampler<'_>, n_samples: usize) -> Result<f64> {
    if n_samples < 100 {
        return Err(Error::invalid("need at least 100 samples"));
    }
    if models.is_empty() {
        return Err(Error::invalid("need at least one parameter point"));
    }
    let mut worst: Option<f64> = None;
    for model in models {
        let ratio = match model {
            CondModel::Modes { params, l } => cond_modes(params, *l, sampler, n_samples)?,
            CondModel::Factors(factors) => cond_factors(factors, sampler, n_samples)?,
        };
        if let Some(r) = ratio {
            worst = Some(worst.map_or(r, |w: f64| w.max(r)));
        }
    }
    worst.ok_or_else(|| Error::invalid("prediction is identically zero: condition number undefined"))
}

fn moments_to_ratio(m2: &[f64], m4: &[f64], n: f64) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for (s2, s4) in m2.iter().zip(m4) {
        if *s2 > 0.0 {
            let ratio = (s4 / n) / ((s2 / n) * (s2 / n));
            worst = Some(worst.map_or(ratio, |w: f64| w.max(ratio)));
        }
    }
    worst
}

fn cond_modes(params: &SpParams, l: usize, sampler: &InputSampler<'_>, n_samples: usize) -> Result<Option<f64>> {
    let t_len = 2 * (l + 1);
    let mats: Vec<DMatrix<f64>> =
        (0..params.r()).map(|j| pole_impulse_matrix(params.poles()[j], l).transpose()).collect();
    let mut m2 = vec![0.0; t_len];
    let mut m4 = vec![0.0; t_len];
    for idx in 0..n_samples {
        let u = sampler(idx as u64);
        if u.nrows() != params.n_u() || u.ncols() != t_len {
            return Err(Error::dim("sampler output does not match the model"));
        }
        let mut pred = DMatrix::zeros(params.n_y(), t_len);
        for j in 0..params.r() {
            let w = params.b_rows().row(j) * &u; // 1 x T
            let filtered = &w * &mats[j];
            pred.ger(1.0, &params.c_cols().column(j), &filtered.transpose(), 1.0);
        }
        for t in 0..t_len {
            let sq = pred.column(t).norm_squared();
            m2[t] += sq;
            m4[t] += sq * sq;
        }
    }
    Ok(moments_to_ratio(&m2, &m4, n_samples as f64))
}

fn cond_factors(factors: &FactorPair, sampler: &InputSampler<'_>, n_samples: usize) -> Result<Option<f64>> {
    let (l, n_u) = (factors.l(), factors.n_u());
    let t_len = 2 * (l + 1);
    let markov = factors.markov();
    let mut m2 = [0.0];
    let mut m4 = [0.0];
    for idx in 0..n_samples {
        let u = sampler(idx as u64);
        if u.nrows() != n_u || u.ncols() != t_len {
            return Err(Error::dim("sampler output does not match the model"));
        }
        let mut x = DVector::zeros((2 * l + 1) * n_u);
        for t in 0..(2 * l + 1) {
            x.rows_mut(t * n_u, n_u).copy_from(&u.column(t_len - t - 2));
        }
        let pred = markov.flat() * x;
        let sq = pred.norm_squared();
        m2[0] += sq;
        m4[0] += sq * sq;
    }
    Ok(moments_to_ratio(&m2, &m4, n_samples as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::markov_parameters;
    use crate::system::{generate, GenConfig, LinearSystem, SystemKind};
    use rand::{Rng, SeedableRng};

    fn random_impulse(seed: u64, l: usize) -> ImpulseResponse {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat = DMatrix::from_fn(2, (2 * l + 1) * 2, |_, _| rng.gen_range(-1.0..1.0));
        impulse_from_markov(&MarkovSequence::from_flat(flat, l, 2, 2).unwrap())
    }

    #[test]
    fn recovery_error_basics() {
        let g = random_impulse(1, 3);
        assert_eq!(recovery_error(&g, &g).unwrap(), 0.0);

        // A single unit entry perturbation scores 1/sqrt(2 n_y n_u (L+1)).
        let k0 = MarkovSequence::zeros(3, 2, 2);
        let mut k1_flat = k0.flat().clone();
        k1_flat[(0, 0)] = 1.0;
        let k1 = MarkovSequence::from_flat(k1_flat, 3, 2, 2).unwrap();
        // K_1 appears once per diagonal offset 1: 2(L+1)-1 = 7 copies.
        let expect = 7.0f64.sqrt() / (2.0 * 2.0 * 2.0 * 4.0f64).sqrt();
        let got = recovery_error_markov(&k1, &k0).unwrap();
        assert!((got - expect).abs() < 1e-14);
    }

    #[test]
    fn recovery_error_matches_double_loop() {
        let g1 = random_impulse(5, 2);
        let g2 = random_impulse(6, 2);
        let mut acc = 0.0;
        for i in 0..g1.as_matrix().nrows() {
            for j in 0..g1.as_matrix().ncols() {
                let d = g1.as_matrix()[(i, j)] - g2.as_matrix()[(i, j)];
                acc += d * d;
            }
        }
        let expect = acc.sqrt() / (2.0f64 * 2.0 * 2.0 * 3.0).sqrt();
        assert!((recovery_error(&g1, &g2).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn recovery_error_is_a_metric_on_samples() {
        let (a, b, c) = (random_impulse(7, 2), random_impulse(8, 2), random_impulse(9, 2));
        let (ab, ba) = (recovery_error(&a, &b).unwrap(), recovery_error(&b, &a).unwrap());
        assert_eq!(ab, ba);
        assert!(ab > 0.0);
        let (bc, ac) = (recovery_error(&b, &c).unwrap(), recovery_error(&a, &c).unwrap());
        assert!(ac <= ab + bc + 1e-15);
    }

    #[test]
    fn weighted_recovery_identity_and_scaling() {
        let g1 = random_impulse(10, 2);
        let g2 = random_impulse(11, 2);
        let eye = DMatrix::identity(2, 2);
        let plain = (g1.as_matrix() - g2.as_matrix()).norm();
        assert!((weighted_recovery(&g1, &g2, &eye).unwrap() - plain).abs() < 1e-12);
        let scaled = weighted_recovery(&g1, &g2, &(eye.clone() * 4.0)).unwrap();
        assert!((scaled - 2.0 * plain).abs() < 1e-12);
        let neg = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!(weighted_recovery(&g1, &g2, &neg).is_err());

        // Sigma_U = I/n_u ties the two metrics together.
        let iso = eye / 2.0;
        let w = weighted_recovery(&g1, &g2, &iso).unwrap();
        let r = recovery_error(&g1, &g2).unwrap();
        let expect = r * (2.0f64 * 2.0 * 2.0 * 3.0).sqrt() / (2.0f64).sqrt();
        assert!((w - expect).abs() < 1e-12);
    }

    #[test]
    fn weighted_recovery_matches_dense_kronecker() {
        let g1 = random_impulse(12, 1);
        let g2 = random_impulse(13, 1);
        let sigma = {
            let b = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.7]);
            &b * b.transpose()
        };
        let got = weighted_recovery(&g1, &g2, &sigma).unwrap();

        let root = numeric::sym_sqrt_psd(&sigma).unwrap();
        let t_len = 4;
        let mut kron = DMatrix::zeros(t_len * 2, t_len * 2);
        for b in 0..t_len {
            kron.view_mut((b * 2, b * 2), (2, 2)).copy_from(&root);
        }
        let dense = ((g1.as_matrix() - g2.as_matrix()) * kron).norm();
        assert!((got - dense).abs() < 1e-12 * dense.max(1.0));
    }

    #[test]
    fn spectrum_of_low_order_system_truncates() {
        let cfg = GenConfig {
            n_x_star: 5,
            n_u: 3,
            n_y: 3,
            n_rollouts: 1,
            l: 8,
            noise_var: 0.0,
            system_kind: SystemKind::DiagonalizableSymmetric,
            spectral_radius_cap: 1.0,
            seed: 17,
        };
        let (sys, _) = generate(&cfg).unwrap();
        let sv = hankel_spectrum(&markov_parameters(&sys, 8));
        assert!(sv[5] / sv[0] < 1e-10);
        assert!(sv[4] / sv[0] > 1e-10);

        let zeros = hankel_spectrum(&MarkovSequence::zeros(3, 2, 2));
        assert!(zeros.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spectrum_invariant_under_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-0.4..0.4));
        let b = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
        let c = DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-1.0..1.0));
        let sys = LinearSystem::new(a.clone(), b.clone(), c.clone(), DMatrix::zeros(2, 2)).unwrap();
        let s = DMatrix::identity(3, 3) + DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-0.25..0.25));
        let si = s.clone().try_inverse().unwrap();
        let sys_t = LinearSystem::new(&s * a * &si, &s * b, c * &si, DMatrix::zeros(2, 2)).unwrap();
        let s1 = hankel_spectrum(&markov_parameters(&sys, 7));
        let s2 = hankel_spectrum(&markov_parameters(&sys_t, 7));
        assert!((s1 - s2).amax() < 1e-8);
    }

    #[test]
    fn cond_estimate_gaussian_near_three_and_point_mass_one() {
        let params = SpParams::new(
            DVector::from_vec(vec![0.6]),
            DMatrix::from_row_slice(1, 2, &[1.0, -0.5]),
            DMatrix::from_column_slice(2, 1, &[0.8, 0.3]),
        )
        .unwrap();
        let l = 2;
        let sampler = gaussian_input_sampler(2, 2 * (l + 1), 1.0, 7);
        let model = [CondModel::Modes { params: &params, l }];
        let est = cond_estimate(&model, &sampler, 20_000).unwrap();
        assert!((2.5..3.5).contains(&est), "estimate {est}");

        let fixed = DMatrix::from_fn(2, 2 * (l + 1), |r, c| (r + c) as f64 * 0.3 + 0.1);
        let point: Box<InputSampler<'_>> = Box::new(move |_| fixed.clone());
        let est1 = cond_estimate(&model, &point, 500).unwrap();
        assert!((est1 - 1.0).abs() < 1e-12);

        // Scale invariance of the ratio.
        let doubled = SpParams::new(
            params.poles().clone(),
            params.b_rows() * 2.0,
            params.c_cols().clone(),
        )
        .unwrap();
        let model2 = [CondModel::Modes { params: &doubled, l }];
        let est2 = cond_estimate(&model2, &sampler, 20_000).unwrap();
        assert!((est - est2).abs() < 1e-9);
    }

    #[test]
    fn cond_estimate_zero_prediction_errors() {
        let params = SpParams::new(
            DVector::from_vec(vec![0.5]),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        let sampler = gaussian_input_sampler(2, 6, 1.0, 3);
        let model = [CondModel::Modes { params: &params, l: 2 }];
        assert!(cond_estimate(&model, &sampler, 200).is_err());
    }
}
