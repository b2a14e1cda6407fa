//! Polar certificates as functions of model quality, plus the 1-D
//! golden-section search they use.

use minreal::certificates::{golden_section, polar_bm, polar_sp, PolarWitness};
use minreal::solvers::{shared_init, FactorPair};
use minreal::system::{generate, GenConfig, SystemKind};
use nalgebra::DMatrix;

fn main() {
    let cfg = GenConfig {
        n_x_star: 2,
        n_u: 2,
        n_y: 2,
        n_rollouts: 120,
        l: 8,
        noise_var: 0.0,
        system_kind: SystemKind::DiagonalizableSymmetric,
        spectral_radius_cap: 1.0,
        seed: 2,
    };
    let (_, batch) = generate(&cfg).unwrap();
    let lambda = 1e-3;

    // A zero model leaves the full signal in the residual: a large polar
    // value, whose witness is the best rank-one descent direction.
    let zero = FactorPair::new(
        DMatrix::zeros((cfg.l + 1) * cfg.n_y, 1),
        DMatrix::zeros((cfg.l + 1) * cfg.n_u, 1),
        cfg.l,
        cfg.n_y,
        cfg.n_u,
    )
    .unwrap();
    let at_zero = polar_bm(&zero, &batch, lambda).unwrap();
    println!("factored polar at the zero model: {:.3}", at_zero.value);

    // A random small model: still far above the certification threshold.
    let (_, factors, params) = shared_init(&batch, 3, 2).unwrap();
    let at_init = polar_bm(&factors, &batch, lambda).unwrap();
    println!("factored polar at a random initialization: {:.3}", at_init.value);

    // Scaling lambda rescales the certificate exactly.
    let rescaled = polar_bm(&factors, &batch, lambda / 10.0).unwrap();
    println!("lambda/10 multiplies it by {:.6}", rescaled.value / at_init.value);

    // The system-parameter polar searches the pole interval by grid plus
    // golden-section refinement.
    let sp = polar_sp(&params, &batch, lambda, 0.999, 101).unwrap();
    if let PolarWitness::Mode { a, .. } = &sp.witness {
        println!(
            "mode polar {:.3} attained at pole {a:.4} ({} profile evaluations)",
            sp.value, sp.evaluations
        );
    }

    // The underlying 1-D minimizer on a quadratic.
    let (x, fx) = golden_section(&|x| (x - 0.3) * (x - 0.3), -1.0, 1.0, 1e-9, 200);
    println!("golden section on (x - 0.3)^2: x* = {x:.9}, f* = {fx:.2e}");
}
