//! Track the Hankel spectrum of a solver's iterates: the tail collapses as
//! the estimate settles on the true order.

use minreal::linops::markov_parameters;
use minreal::metrics::hankel_spectrum;
use minreal::solvers::{auto_lr_nuc, auto_momentum_nuc, nuc_solve, shared_init, EvalHooks, SolverConfig};
use minreal::system::{generate, GenConfig, SystemKind};

fn main() {
    let cfg_gen = GenConfig {
        n_x_star: 3,
        n_u: 3,
        n_y: 3,
        n_rollouts: 250,
        l: 10,
        noise_var: 0.01,
        system_kind: SystemKind::DiagonalizableSymmetric,
        spectral_radius_cap: 1.0,
        seed: 9,
    };
    let (sys, batch) = generate(&cfg_gen).unwrap();
    let gstar = markov_parameters(&sys, batch.l());

    let lambda = 1e-3;
    let cfg = SolverConfig {
        lambda,
        lr: auto_lr_nuc(&batch),
        momentum: auto_momentum_nuc(&batch, lambda),
        max_iter: 6000,
        ..SolverConfig::default()
    };
    let (init, _, _) = shared_init(&batch, 4, 2).unwrap();
    let hooks = EvalHooks { gstar: Some(&gstar), eval_every: 100, record_checkpoints: true };
    let report = nuc_solve(&batch, &cfg, &init, &hooks).unwrap();

    let true_spectrum = hankel_spectrum(&gstar);
    println!("true spectrum head: {:?}", true_spectrum.iter().take(5).map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>());

    println!("iter      sigma_1    sigma_2    sigma_3    sigma_4");
    for (iter, k) in &report.checkpoints {
        let sv = hankel_spectrum(k);
        println!(
            "{:>6}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}",
            iter, sv[0], sv[1], sv[2], sv[3]
        );
    }
    println!(
        "the dashed reference would sit at index {} — the true order",
        sys.n_x()
    );
}
