//! Generate synthetic rollouts from a random low-order system and check the
//! simulation against the impulse-response convolution identity.

use minreal::linops::impulse_response;
use minreal::system::{generate, stack_targets, GenConfig, SystemKind};
use nalgebra::DVector;

fn main() {
    // Benchmark shape at a reduced rollout count.
    let cfg = GenConfig {
        n_x_star: 5,
        n_u: 8,
        n_y: 8,
        n_rollouts: 50,
        l: 50,
        noise_var: 0.01,
        system_kind: SystemKind::DiagonalizableSymmetric,
        spectral_radius_cap: 1.0,
        seed: 7,
    };
    let (sys, batch) = generate(&cfg).unwrap();
    println!(
        "system order {}, rollouts {} of length {} ({} inputs, {} outputs)",
        sys.n_x(),
        batch.n_rollouts(),
        batch.t_len(),
        batch.n_u(),
        batch.n_y()
    );

    // Noiseless check on a fresh batch: stacked outputs equal G * stacked
    // inputs for every rollout.
    let noiseless = generate(&GenConfig { noise_var: 0.0, n_rollouts: 4, l: 10, ..cfg.clone() }).unwrap().1;
    let g = impulse_response(&sys, noiseless.l());
    let mut worst: f64 = 0.0;
    for i in 0..noiseless.n_rollouts() {
        let t_len = noiseless.t_len();
        let mut u = DVector::zeros(t_len * sys.n_u());
        let mut y = DVector::zeros(t_len * sys.n_y());
        for t in 0..t_len {
            u.rows_mut(t * sys.n_u(), sys.n_u()).copy_from(&noiseless.input(i).column(t));
            y.rows_mut(t * sys.n_y(), sys.n_y()).copy_from(&noiseless.output(i).column(t));
        }
        let rel = (g.as_matrix() * u - &y).norm() / y.norm();
        worst = worst.max(rel);
    }
    println!("convolution identity, worst relative error: {worst:e}");

    // Final-output regression views used by the solvers.
    let stacked = stack_targets(&batch);
    println!(
        "stacked targets: {} final outputs, reversed input stacks of dimension {}",
        stacked.last_outputs.ncols(),
        stacked.rev_inputs.nrows()
    );

    // The container and CSV export round-trip through disk.
    let dir = std::env::temp_dir().join("minreal_example_rollouts");
    std::fs::create_dir_all(&dir).unwrap();
    batch.write_file(&dir.join("batch.bin")).unwrap();
    batch.export_csv(&dir.join("batch.csv")).unwrap();
    let reread = minreal::system::RolloutBatch::read_file(&dir.join("batch.bin")).unwrap();
    println!("container roundtrip identical: {}", reread == batch);
    println!("files written under {}", dir.display());
}
