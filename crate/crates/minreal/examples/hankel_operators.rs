//! Hankel operator algebra on Markov parameter sequences: the map, the two
//! extraction conventions, and the identities connecting them.

use minreal::linops::{
    hankel_adjoint_sum, hankel_extract, hankel_extract_adjoint, hankel_map, markov_parameters,
    pole_energy, MarkovSequence,
};
use minreal::numeric::frob_inner;
use minreal::oracle::nuclear_norm;
use minreal::system::{generate, GenConfig, SystemKind};
use nalgebra::DMatrix;

fn main() {
    let cfg = GenConfig {
        n_x_star: 3,
        n_u: 2,
        n_y: 2,
        n_rollouts: 1,
        l: 4,
        noise_var: 0.0,
        system_kind: SystemKind::DiagonalizableSymmetric,
        spectral_radius_cap: 1.0,
        seed: 1,
    };
    let (sys, _) = generate(&cfg).unwrap();
    let k = markov_parameters(&sys, cfg.l);
    let h = hankel_map(&k);
    println!(
        "Markov sequence: {} blocks of {}x{}; Hankel matrix {}x{}",
        k.n_blocks(),
        k.n_y(),
        k.n_u(),
        h.as_matrix().nrows(),
        h.as_matrix().ncols()
    );

    // Averaging extraction inverts the map exactly.
    let back = hankel_extract(h.as_matrix(), cfg.l, 2, 2).unwrap();
    println!("extract(map(K)) == K exactly: {}", back.flat() == k.flat());

    // The summing extraction is the Frobenius adjoint of the map.
    let m = DMatrix::from_fn(h.as_matrix().nrows(), h.as_matrix().ncols(), |i, j| {
        ((i * 31 + j * 7) as f64 * 0.13).sin()
    });
    let lhs = frob_inner(h.as_matrix(), &m);
    let rhs = frob_inner(k.flat(), hankel_adjoint_sum(&m, cfg.l, 2, 2).unwrap().flat());
    println!("adjoint identity <H(K), M> - <K, H_sum(M)> = {:e}", lhs - rhs);

    // map ∘ extract is the orthogonal projection onto Hankel structure.
    let projected = hankel_map(&hankel_extract(&m, cfg.l, 2, 2).unwrap());
    let twice = hankel_map(&hankel_extract(projected.as_matrix(), cfg.l, 2, 2).unwrap());
    println!(
        "projection idempotency residual: {:e}",
        (twice.as_matrix() - projected.as_matrix()).norm()
    );

    // The adjoint of the averaging extraction weights anti-diagonals by
    // their multiplicity; it drives factored gradients and certificates.
    let weighted = hankel_extract_adjoint(&k);
    println!("multiplicity-normalized embedding norm: {:.6}", weighted.norm());

    // For a single scalar mode, the Hankel nuclear norm collapses to
    // gamma(a) * |b| * |c| — the atomic-norm identity.
    let (a, b, c): (f64, f64, f64) = (0.8, 1.5, -0.7);
    let mode = MarkovSequence::from_blocks(
        &(0..(2 * cfg.l + 1))
            .map(|t| DMatrix::from_element(1, 1, c * a.powi(t as i32) * b))
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let nn = nuclear_norm(hankel_map(&mode).as_matrix());
    println!(
        "atomic-norm identity: ||H||_* = {:.12}, gamma|b||c| = {:.12}",
        nn,
        pole_energy(a, cfg.l) * b.abs() * c.abs()
    );
}
