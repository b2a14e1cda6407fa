//! Recovery error against sample size: run the sweep harness over rollout
//! prefixes of one dataset and fit a log-log slope per method.

use minreal::harness::{run_sweep, Dataset, ExperimentConfig, SweepAxis};
use minreal::linops::markov_parameters;
use minreal::solvers::Method;
use minreal::system::generate;

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.gen.n_x_star = 2;
    cfg.gen.n_u = 2;
    cfg.gen.n_y = 2;
    cfg.gen.l = 10;
    cfg.gen.n_rollouts = 400;
    cfg.gen.noise_var = 0.01;
    cfg.gen.seed = 3;
    cfg.methods = vec![Method::Sp, Method::Bm];
    cfg.sweep = SweepAxis::Samples(vec![50, 100, 200, 400]);
    cfg.base_solver.lambda = 1e-3;
    cfg.base_solver.max_iter = 30_000;
    cfg.base_solver.time_budget_s = Some(20.0);

    let (sys, batch) = generate(&cfg.gen).unwrap();
    let dataset = Dataset { gen: cfg.gen.clone(), gstar: markov_parameters(&sys, cfg.gen.l), batch };

    let table = run_sweep(&cfg, Some(&dataset)).unwrap();
    println!("method  N     recovery error   time(s)  certificate");
    for p in &table.points {
        println!(
            "{:>6}  {:>4}  {:>14.6e}  {:>7.2}  {}",
            p.method.to_string(),
            p.axis_value,
            p.final_error,
            p.time_s,
            p.certificate
        );
    }
    for (method, slope) in &table.slopes {
        println!("log-log slope of error vs N for {method}: {slope:.3}");
    }
}
