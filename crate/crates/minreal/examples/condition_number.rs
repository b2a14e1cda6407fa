//! Monte-Carlo condition number of the prediction blocks: the fourth-to-
//! second moment ratio that controls how many rollouts concentration needs.

use minreal::metrics::{cond_estimate, gaussian_input_sampler, CondModel, InputSampler};
use minreal::solvers::SpParams;
use nalgebra::{DMatrix, DVector};

fn main() {
    let params = SpParams::new(
        DVector::from_vec(vec![0.6]),
        DMatrix::from_row_slice(1, 3, &[1.0, -0.5, 0.25]),
        DMatrix::from_column_slice(2, 1, &[0.8, 0.3]),
    )
    .unwrap();
    let l = 3;
    let t_len = 2 * (l + 1);
    let models = [CondModel::Modes { params: &params, l }];

    // Gaussian inputs and a rank-one block: the population ratio is 3.
    let sampler = gaussian_input_sampler(3, t_len, 1.0, 17);
    for n in [1_000usize, 10_000, 100_000] {
        let est = cond_estimate(&models, &sampler, n).unwrap();
        println!("gaussian inputs, {n:>6} samples: {est:.4}");
    }

    // A point-mass input collapses the ratio to exactly 1.
    let fixed = DMatrix::from_fn(3, t_len, |r, c| 0.2 * (r as f64 + 1.0) - 0.1 * c as f64);
    let point: Box<InputSampler<'_>> = Box::new(move |_| fixed.clone());
    println!("point-mass inputs: {}", cond_estimate(&models, &point, 1000).unwrap());

    // Scale invariance: doubling the map leaves the ratio unchanged.
    let doubled = SpParams::new(
        params.poles().clone(),
        params.b_rows() * 2.0,
        params.c_cols().clone(),
    )
    .unwrap();
    let models2 = [CondModel::Modes { params: &doubled, l }];
    println!(
        "doubled map, 100k samples: {:.4}",
        cond_estimate(&models2, &sampler, 100_000).unwrap()
    );
}
