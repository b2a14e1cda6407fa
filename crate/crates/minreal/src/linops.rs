//! Hankel operator algebra, impulse-response assembly, and the scalar pole
//! kernels consumed by every solver.
//!
//! A horizon `L` fixes all shapes. A [`MarkovSequence`] holds the `2L+1`
//! parameter blocks `K_1 .. K_{2L+1}` (each `n_y × n_u`); the Hankel map
//! places `K_{i+j-1}` at block `(i, j)` of an `(L+1) × (L+1)` block matrix.
//! Two inverse-direction maps are provided:
//!
//! * [`hankel_extract`] averages each block anti-diagonal. It is a left
//!   inverse of [`hankel_map`], acts as plain block selection on
//!   Hankel-structured input, and composes with [`hankel_map`] into the
//!   Frobenius-orthogonal projection onto Hankel structure.
//! * [`hankel_adjoint_sum`] sums each block anti-diagonal. It is the exact
//!   Frobenius adjoint of [`hankel_map`], which is what chain rules need.
//!
//! Block indices are 1-based in the documentation and 0-based in code; the
//! translation lives entirely in this module.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{Error, Result};
use crate::system::LinearSystem;

/// The `2L+1` Markov parameter blocks of a linear system over horizon `L`.
///
/// Stored flat as an `n_y × (2L+1)·n_u` matrix whose `t`-th column block is
/// `K_{t+1}`; this is also the exact parameter layout the nuclear-norm solver
/// iterates on.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovSequence {
    data: DMatrix<f64>,
    l: usize,
    n_y: usize,
    n_u: usize,
}

impl MarkovSequence {
    /// Build from an ordered list of `2L+1` blocks of identical shape.
    pub fn from_blocks(blocks: &[DMatrix<f64>]) -> Result<Self> {
        if blocks.is_empty() || blocks.len() % 2 == 0 {
            return Err(Error::invalid(format!(
                "a Markov sequence needs 2L+1 blocks, got {}",
                blocks.len()
            )));
        }
        let l = (blocks.len() - 1) / 2;
        let (n_y, n_u) = (blocks[0].nrows(), blocks[0].ncols());
        let mut data = DMatrix::zeros(n_y, (2 * l + 1) * n_u);
        for (t, b) in blocks.iter().enumerate() {
            if b.nrows() != n_y || b.ncols() != n_u {
                return Err(Error::dim(format!(
                    "block {t} has shape {}x{}, expected {n_y}x{n_u}",
                    b.nrows(),
                    b.ncols()
                )));
            }
            data.view_mut((0, t * n_u), (n_y, n_u)).copy_from(b);
        }
        let seq = MarkovSequence { data, l, n_y, n_u };
        seq.check_finite()?;
        Ok(seq)
    }

    /// Build from the flat `n_y × (2L+1)·n_u` layout.
    pub fn from_flat(data: DMatrix<f64>, l: usize, n_y: usize, n_u: usize) -> Result<Self> {
        if data.nrows() != n_y || data.ncols() != (2 * l + 1) * n_u {
            return Err(Error::dim(format!(
                "flat Markov matrix must be {n_y} x {}, got {} x {}",
                (2 * l + 1) * n_u,
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(MarkovSequence { data, l, n_y, n_u })
    }

    pub fn zeros(l: usize, n_y: usize, n_u: usize) -> Self {
        MarkovSequence { data: DMatrix::zeros(n_y, (2 * l + 1) * n_u), l, n_y, n_u }
    }

    fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("Markov sequence entries".into()))
        }
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

    pub fn n_blocks(&self) -> usize {
        2 * self.l + 1
    }

    /// Block `K_{t+1}` (0-based `t`).
    pub fn block(&self, t: usize) -> DMatrixView<'_, f64> {
        self.data.view((0, t * self.n_u), (self.n_y, self.n_u))
    }

    /// Flat `n_y × (2L+1)·n_u` view of the whole sequence.
    pub fn flat(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_flat(self) -> DMatrix<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &MarkovSequence) -> bool {
        self.l == other.l && self.n_y == other.n_y && self.n_u == other.n_u
    }
}

/// Block Hankel matrix `(L+1)·n_y × (L+1)·n_u` with constant block
/// anti-diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct HankelMatrix {
    data: DMatrix<f64>,
    l: usize,
    n_y: usize,
    n_u: usize,
}

impl HankelMatrix {
    /// Validate and wrap a raw matrix. Block `(i, j)` must equal block
    /// `(i', j')` whenever `i + j = i' + j'`, to within `1e-12` relative to
    /// the largest entry magnitude.
    pub fn try_from_matrix(data: DMatrix<f64>, l: usize, n_y: usize, n_u: usize) -> Result<Self> {
        if data.nrows() != (l + 1) * n_y || data.ncols() != (l + 1) * n_u {
            return Err(Error::dim(format!(
                "Hankel matrix must be {} x {}, got {} x {}",
                (l + 1) * n_y,
                (l + 1) * n_u,
                data.nrows(),
                data.ncols()
            )));
        }
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for t in 0..=(2 * l) {
            let (i0, j0) = if t <= l { (t, 0) } else { (l, t - l) };
            let reference = data.view((i0 * n_y, j0 * n_u), (n_y, n_u)).into_owned();
            for i in 0..=l.min(t) {
                let j = t - i;
                if j > l {
                    continue;
                }
                let blk = data.view((i * n_y, j * n_u), (n_y, n_u));
                if (blk - &reference).amax() > 1e-12 * scale {
                    return Err(Error::invalid(format!(
                        "anti-diagonal {t} is not constant: block ({i},{j}) differs"
                    )));
                }
            }
        }
        Ok(HankelMatrix { data, l, n_y, n_u })
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
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

    pub fn block(&self, i: usize, j: usize) -> DMatrixView<'_, f64> {
        self.data.view((i * self.n_y, j * self.n_u), (self.n_y, self.n_u))
    }
}

/// Block lower-triangular Toeplitz impulse-response matrix over a doubled
/// horizon: `2(L+1)·n_y × 2(L+1)·n_u`, block `(i, j)` zero above the
/// diagonal, `D` on it, and `C A^{i-j-1} B` below.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpulseResponse {
    data: DMatrix<f64>,
    l: usize,
    n_y: usize,
    n_u: usize,
}

impl ImpulseResponse {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
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

    pub fn block(&self, i: usize, j: usize) -> DMatrixView<'_, f64> {
        self.data.view((i * self.n_y, j * self.n_u), (self.n_y, self.n_u))
    }
}

/// Number of blocks on anti-diagonal `t` (0-based, `t ∈ 0..2L+1`) of an
/// `(L+1) × (L+1)` block Hankel matrix.
pub fn antidiagonal_multiplicity(l: usize, t: usize) -> usize {
    debug_assert!(t <= 2 * l);
    (t + 1).min(2 * l + 1 - t).min(l + 1)
}

/// Energy of a scalar pole over the horizon: `Σ_{t=0}^{L} a^{2t}`.
///
/// Computed by direct summation so `|a| = 1` is handled without a
/// singular closed form.
pub fn pole_energy(a: f64, l: usize) -> f64 {
    let a2 = a * a;
    let mut term = 1.0;
    let mut sum = 1.0;
    for _ in 1..=l {
        term *= a2;
        sum += term;
    }
    sum
}

/// Derivative of [`pole_energy`] in `a`: `Σ_{t=1}^{L} 2t·a^{2t-1}`.
pub fn pole_energy_deriv(a: f64, l: usize) -> f64 {
    let a2 = a * a;
    let mut pow = a; // a^{2t-1}
    let mut sum = 0.0;
    for t in 1..=l {
        sum += 2.0 * t as f64 * pow;
        pow *= a2;
    }
    sum
}

/// Causal impulse matrix of a scalar pole over the doubled horizon:
/// `2(L+1) × 2(L+1)` with entry `(i, j) = a^{i-j-1}` for `i > j` (1-based)
/// and zero elsewhere. Row `t` of `P(a)·x` is the response at time `t` of
/// the one-pole filter driven by `x`.
pub fn pole_impulse_matrix(a: f64, l: usize) -> DMatrix<f64> {
    let t_len = 2 * (l + 1);
    let mut powers = vec![0.0; t_len];
    if t_len > 1 {
        powers[0] = 1.0;
        for d in 1..t_len - 1 {
            powers[d] = powers[d - 1] * a;
        }
    }
    DMatrix::from_fn(t_len, t_len, |i, j| if i > j { powers[i - j - 1] } else { 0.0 })
}

/// Entrywise derivative of [`pole_impulse_matrix`] in `a`.
pub fn pole_impulse_matrix_deriv(a: f64, l: usize) -> DMatrix<f64> {
    let t_len = 2 * (l + 1);
    let mut dpow = vec![0.0; t_len]; // d/da a^d
    if t_len > 2 {
        dpow[1] = 1.0;
        let mut pow = 1.0; // a^{d-1}
        for d in 2..t_len - 1 {
            pow *= a;
            dpow[d] = d as f64 * pow;
        }
    }
    DMatrix::from_fn(t_len, t_len, |i, j| if i > j { dpow[i - j - 1] } else { 0.0 })
}

/// Hankel map: block `(i, j)` of the result is `K_{i+j-1}` (1-based).
pub fn hankel_map(k: &MarkovSequence) -> HankelMatrix {
    let (l, n_y, n_u) = (k.l, k.n_y, k.n_u);
    let mut data = DMatrix::zeros((l + 1) * n_y, (l + 1) * n_u);
    for i in 0..=l {
        for j in 0..=l {
            data.view_mut((i * n_y, j * n_u), (n_y, n_u)).copy_from(&k.block(i + j));
        }
    }
    HankelMatrix { data, l, n_y, n_u }
}

/// Averaging extraction: block `t` of the result is the mean of the blocks on
/// anti-diagonal `t` of `m`.
///
/// On Hankel-structured input this is plain block selection, so
/// `hankel_extract(hankel_map(k)) == k` exactly. On arbitrary input,
/// `hankel_map ∘ hankel_extract` is the orthogonal projection onto the
/// Hankel subspace.
pub fn hankel_extract(m: &DMatrix<f64>, l: usize, n_y: usize, n_u: usize) -> Result<MarkovSequence> {
    check_hankel_shape(m, l, n_y, n_u)?;
    let mut out = MarkovSequence::zeros(l, n_y, n_u);
    // Mean as reference-plus-mean-of-differences: on Hankel-structured input
    // every difference is exactly zero, so selection is bit-exact.
    for t in 0..=(2 * l) {
        let i_lo = t.saturating_sub(l);
        let i_hi = t.min(l);
        let reference = m.view((i_lo * n_y, (t - i_lo) * n_u), (n_y, n_u));
        let mut dst = out.data.view_mut((0, t * n_u), (n_y, n_u));
        dst.copy_from(&reference);
        if i_hi > i_lo {
            let mut acc = DMatrix::zeros(n_y, n_u);
            for i in (i_lo + 1)..=i_hi {
                acc += m.view((i * n_y, (t - i) * n_u), (n_y, n_u)) - reference;
            }
            let inv = 1.0 / (i_hi - i_lo + 1) as f64;
            dst.zip_apply(&acc, |d, a| *d += a * inv);
        }
    }
    Ok(out)
}

/// Summing extraction: block `t` of the result is the sum of the blocks on
/// anti-diagonal `t` of `m`. This is the exact Frobenius adjoint of
/// [`hankel_map`]: `⟨hankel_map(k), m⟩ = ⟨k, hankel_adjoint_sum(m)⟩`.
pub fn hankel_adjoint_sum(m: &DMatrix<f64>, l: usize, n_y: usize, n_u: usize) -> Result<MarkovSequence> {
    check_hankel_shape(m, l, n_y, n_u)?;
    let mut out = MarkovSequence::zeros(l, n_y, n_u);
    antidiagonal_accumulate(m, l, n_y, n_u, &mut out);
    Ok(out)
}

/// Frobenius adjoint of [`hankel_extract`]: embeds a sequence as a Hankel
/// matrix with anti-diagonal `t` scaled by `1 / multiplicity(t)`, so that
/// `⟨hankel_extract(m), k⟩ = ⟨m, hankel_extract_adjoint(k)⟩`.
///
/// This is the matrix the chain rule produces when a loss is composed with
/// [`hankel_extract`], and hence also the matrix whose spectral norm the
/// factorization certificate measures.
pub fn hankel_extract_adjoint(k: &MarkovSequence) -> DMatrix<f64> {
    let (l, n_y, n_u) = (k.l, k.n_y, k.n_u);
    let mut data = DMatrix::zeros((l + 1) * n_y, (l + 1) * n_u);
    let weights: Vec<f64> =
        (0..k.n_blocks()).map(|t| 1.0 / antidiagonal_multiplicity(l, t) as f64).collect();
    for i in 0..=l {
        for j in 0..=l {
            let t = i + j;
            let w = weights[t];
            let mut dst = data.view_mut((i * n_y, j * n_u), (n_y, n_u));
            dst.copy_from(&k.block(t));
            dst.apply(|v| *v *= w);
        }
    }
    data
}

fn check_hankel_shape(m: &DMatrix<f64>, l: usize, n_y: usize, n_u: usize) -> Result<()> {
    if m.nrows() != (l + 1) * n_y || m.ncols() != (l + 1) * n_u {
        return Err(Error::dim(format!(
            "expected {} x {} Hankel-shaped matrix, got {} x {}",
            (l + 1) * n_y,
            (l + 1) * n_u,
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn antidiagonal_accumulate(m: &DMatrix<f64>, l: usize, n_y: usize, n_u: usize, out: &mut MarkovSequence) {
    for i in 0..=l {
        for j in 0..=l {
            let t = i + j;
            let src = m.view((i * n_y, j * n_u), (n_y, n_u));
            let mut dst = out.data.view_mut((0, t * n_u), (n_y, n_u));
            dst += src;
        }
    }
}

/// Markov parameters `K_t = C A^{t-1} B` for `t = 1 .. 2L+1`, computed by
/// iterated multiplication `A^k B = A · (A^{k-1} B)` so non-diagonalizable
/// `A` is handled exactly.
pub fn markov_parameters(sys: &LinearSystem, l: usize) -> MarkovSequence {
    let n_y = sys.n_y();
    let n_u = sys.n_u();
    let mut data = DMatrix::zeros(n_y, (2 * l + 1) * n_u);
    let mut akb = sys.b().clone(); // A^0 B
    for t in 0..(2 * l + 1) {
        let block = sys.c() * &akb;
        data.view_mut((0, t * n_u), (n_y, n_u)).copy_from(&block);
        if t + 1 < 2 * l + 1 {
            akb = sys.a() * &akb;
        }
    }
    MarkovSequence { data, l, n_y, n_u }
}

/// Impulse response of `(A, B, C, D)` over the doubled horizon.
pub fn impulse_response(sys: &LinearSystem, l: usize) -> ImpulseResponse {
    let t_len = 2 * (l + 1);
    let n_y = sys.n_y();
    let n_u = sys.n_u();
    let mut data = DMatrix::zeros(t_len * n_y, t_len * n_u);

    // Memoize C A^k B for k = 0 .. t_len-2.
    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(t_len.saturating_sub(1));
    let mut akb = sys.b().clone();
    for k in 0..t_len.saturating_sub(1) {
        blocks.push(sys.c() * &akb);
        if k + 1 < t_len - 1 {
            akb = sys.a() * &akb;
        }
    }

    for i in 0..t_len {
        data.view_mut((i * n_y, i * n_u), (n_y, n_u)).copy_from(sys.d());
        for j in 0..i {
            data.view_mut((i * n_y, j * n_u), (n_y, n_u)).copy_from(&blocks[i - j - 1]);
        }
    }
    ImpulseResponse { data, l, n_y, n_u }
}

/// Strictly lower block-triangular impulse response assembled from Markov
/// parameters alone (zero feed-through): block `(i, j) = K_{i-j}` for `i > j`.
pub fn impulse_from_markov(k: &MarkovSequence) -> ImpulseResponse {
    let (l, n_y, n_u) = (k.l, k.n_y, k.n_u);
    let t_len = 2 * (l + 1);
    let mut data = DMatrix::zeros(t_len * n_y, t_len * n_u);
    for i in 0..t_len {
        for j in 0..i {
            data.view_mut((i * n_y, j * n_u), (n_y, n_u)).copy_from(&k.block(i - j - 1));
        }
    }
    ImpulseResponse { data, l, n_y, n_u }
}

/// Markov sequence of a bank of scalar modes: `K_t = Σ_j a_j^{t-1} c_j b_jᵀ`.
pub fn modal_markov(poles: &DVector<f64>, b_rows: &DMatrix<f64>, c_cols: &DMatrix<f64>, l: usize) -> MarkovSequence {
    let n_y = c_cols.nrows();
    let n_u = b_rows.ncols();
    let r = poles.len();
    let mut data = DMatrix::zeros(n_y, (2 * l + 1) * n_u);
    for j in 0..r {
        let outer = c_cols.column(j) * b_rows.row(j);
        let mut pow = 1.0;
        for t in 0..(2 * l + 1) {
            let mut dst = data.view_mut((0, t * n_u), (n_y, n_u));
            dst.zip_apply(&outer, |d, o| *d += pow * o);
            pow *= poles[j];
        }
    }
    MarkovSequence { data, l, n_y, n_u }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sequence(rng: &mut ChaCha8Rng, l: usize, n_y: usize, n_u: usize) -> MarkovSequence {
        let data = DMatrix::from_fn(n_y, (2 * l + 1) * n_u, |_, _| rng.gen_range(-1.0..1.0));
        MarkovSequence::from_flat(data, l, n_y, n_u).unwrap()
    }

    #[test]
    fn pole_energy_values() {
        assert_eq!(pole_energy(0.0, 10), 1.0);
        assert_eq!(pole_energy(1.0, 4), 5.0);
        assert_eq!(pole_energy(0.5, 2), 1.3125);
        assert_eq!(pole_energy(-1.0, 3), 4.0);
    }

    #[test]
    fn pole_energy_deriv_matches_finite_difference() {
        let h = 1e-6;
        for &a in &[0.3, -0.8, 1.0] {
            let fd = (pole_energy(a + h, 6) - pole_energy(a - h, 6)) / (2.0 * h);
            assert!((pole_energy_deriv(a, 6) - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn pole_impulse_matrix_small_cases() {
        let p = pole_impulse_matrix(0.5, 0);
        assert_eq!(p, dmatrix![0.0, 0.0; 1.0, 0.0]);

        let p0 = pole_impulse_matrix(0.0, 1);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j + 1 { 1.0 } else { 0.0 };
                assert_eq!(p0[(i, j)], expect);
            }
        }

        let p2 = pole_impulse_matrix(2.0, 1);
        assert_eq!(p2[(1, 0)], 1.0);
        assert_eq!(p2[(2, 0)], 2.0);
        assert_eq!(p2[(3, 0)], 4.0);
    }

    #[test]
    fn pole_impulse_deriv_matches_finite_difference() {
        let a = 0.7;
        let h = 1e-6;
        let fd = (pole_impulse_matrix(a + h, 2) - pole_impulse_matrix(a - h, 2)) / (2.0 * h);
        let an = pole_impulse_matrix_deriv(a, 2);
        assert!((an - fd).amax() < 1e-7);
    }

    #[test]
    fn hankel_map_scalar_example() {
        let k = MarkovSequence::from_blocks(&[
            dmatrix![1.0],
            dmatrix![2.0],
            dmatrix![3.0],
        ])
        .unwrap();
        let h = hankel_map(&k);
        assert_eq!(h.as_matrix(), &dmatrix![1.0, 2.0; 2.0, 3.0]);
    }

    #[test]
    fn hankel_map_antidiagonals_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_sequence(&mut rng, 2, 2, 3);
        let h = hankel_map(&k);
        for i in 0..=2 {
            for j in 0..=2 {
                assert_eq!(h.block(i, j).into_owned(), k.block(i + j).into_owned());
            }
        }
        // Validation accepts the structured matrix and rejects a perturbed one.
        let m = h.as_matrix().clone();
        assert!(HankelMatrix::try_from_matrix(m.clone(), 2, 2, 3).is_ok());
        let mut bad = m;
        bad[(0, 3)] += 1.0;
        assert!(HankelMatrix::try_from_matrix(bad, 2, 2, 3).is_err());
    }

    #[test]
    fn extract_after_map_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for l in 0..=5 {
            let k = random_sequence(&mut rng, l, 2, 2);
            let back = hankel_extract(hankel_map(&k).as_matrix(), l, 2, 2).unwrap();
            assert_eq!(back.flat(), k.flat());
        }
    }

    #[test]
    fn extract_averages_non_hankel_input() {
        let m = dmatrix![1.0, 2.0; 4.0, 3.0];
        let k = hankel_extract(&m, 1, 1, 1).unwrap();
        assert_eq!(k.block(0)[(0, 0)], 1.0);
        assert_eq!(k.block(1)[(0, 0)], 3.0);
        assert_eq!(k.block(2)[(0, 0)], 3.0);

        let zero = hankel_extract(&DMatrix::zeros(2, 2), 1, 1, 1).unwrap();
        assert!(zero.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_sum_examples() {
        let m = dmatrix![1.0, 2.0; 4.0, 3.0];
        let k = hankel_adjoint_sum(&m, 1, 1, 1).unwrap();
        assert_eq!(k.block(0)[(0, 0)], 1.0);
        assert_eq!(k.block(1)[(0, 0)], 6.0);
        assert_eq!(k.block(2)[(0, 0)], 3.0);

        let id = hankel_adjoint_sum(&DMatrix::identity(2, 2), 1, 1, 1).unwrap();
        assert_eq!((id.block(0)[(0, 0)], id.block(1)[(0, 0)], id.block(2)[(0, 0)]), (1.0, 0.0, 1.0));
    }

    #[test]
    fn adjoint_identities_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let (l, n_y, n_u) = (rng.gen_range(0..4), rng.gen_range(1..4), rng.gen_range(1..4));
            let k = random_sequence(&mut rng, l, n_y, n_u);
            let m = DMatrix::from_fn((l + 1) * n_y, (l + 1) * n_u, |_, _| rng.gen_range(-1.0..1.0));

            let lhs = crate::numeric::frob_inner(hankel_map(&k).as_matrix(), &m);
            let rhs = crate::numeric::frob_inner(
                k.flat(),
                hankel_adjoint_sum(&m, l, n_y, n_u).unwrap().flat(),
            );
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));

            // Adjoint of the averaging extraction.
            let lhs2 = crate::numeric::frob_inner(
                hankel_extract(&m, l, n_y, n_u).unwrap().flat(),
                k.flat(),
            );
            let rhs2 = crate::numeric::frob_inner(&m, &hankel_extract_adjoint(&k));
            assert!((lhs2 - rhs2).abs() <= 1e-12 * lhs2.abs().max(1.0));
        }
    }

    #[test]
    fn roundtrip_is_orthogonal_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (l, n_y, n_u) = (3, 2, 2);
        let dims = ((l + 1) * n_y, (l + 1) * n_u);
        let project = |m: &DMatrix<f64>| {
            hankel_map(&hankel_extract(m, l, n_y, n_u).unwrap()).into_matrix()
        };
        let a = DMatrix::from_fn(dims.0, dims.1, |_, _| rng.gen_range(-1.0..1.0));
        let b = DMatrix::from_fn(dims.0, dims.1, |_, _| rng.gen_range(-1.0..1.0));

        let pa = project(&a);
        assert!((project(&pa) - &pa).amax() < 1e-13); // idempotent
        let lhs = crate::numeric::frob_inner(&pa, &b);
        let rhs = crate::numeric::frob_inner(&a, &project(&b));
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0)); // self-adjoint

        // Fixed points are exactly the Hankel-structured matrices.
        let k = random_sequence(&mut rng, l, n_y, n_u);
        let h = hankel_map(&k).into_matrix();
        assert!((project(&h) - &h).amax() < 1e-14);
        assert!((project(&a) - &a).amax() > 1e-3);
    }

    #[test]
    fn impulse_response_scalar_and_nilpotent() {
        let sys = LinearSystem::new(
            dmatrix![0.5],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![0.0],
        )
        .unwrap();
        let g = impulse_response(&sys, 0);
        assert_eq!(g.as_matrix(), &dmatrix![0.0, 0.0; 1.0, 0.0]);

        // A = 0 with identity feed-through: D on the diagonal, C B on the first
        // sub-diagonal, zero beyond.
        let sys2 = LinearSystem::new(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let g2 = impulse_response(&sys2, 1);
        for i in 0..4 {
            for j in 0..4 {
                let blk = g2.block(i, j).into_owned();
                let expect = if i == j || i == j + 1 {
                    DMatrix::identity(2, 2)
                } else {
                    DMatrix::zeros(2, 2)
                };
                assert_eq!(blk, expect, "block ({i},{j})");
            }
        }
    }

    #[test]
    fn impulse_response_similarity_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-0.4..0.4));
        let b = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
        let c = DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-1.0..1.0));
        let d = DMatrix::zeros(2, 2);
        let sys = LinearSystem::new(a.clone(), b.clone(), c.clone(), d.clone()).unwrap();

        let s = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 })
            + DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-0.3..0.3));
        let s_inv = s.clone().try_inverse().unwrap();
        let sys_t = LinearSystem::new(&s * &a * &s_inv, &s * &b, &c * &s_inv, d).unwrap();

        let g = impulse_response(&sys, 6);
        let g_t = impulse_response(&sys_t, 6);
        let rel = (g.as_matrix() - g_t.as_matrix()).norm() / g.as_matrix().norm();
        assert!(rel < 1e-10, "rel err {rel}");
    }

    #[test]
    fn impulse_from_markov_matches_zero_feedthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-0.5..0.5));
        let b = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let c = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let sys = LinearSystem::new(a, b, c, DMatrix::zeros(2, 2)).unwrap();
        let k = markov_parameters(&sys, 3);
        let g1 = impulse_from_markov(&k);
        let g2 = impulse_response(&sys, 3);
        assert!((g1.as_matrix() - g2.as_matrix()).amax() < 1e-14);

        let zeros = impulse_from_markov(&MarkovSequence::zeros(2, 1, 1));
        assert!(zeros.as_matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_from_markov_scalar_toeplitz() {
        let k = MarkovSequence::from_blocks(&[dmatrix![1.5], dmatrix![-2.0], dmatrix![0.25]]).unwrap();
        let g = impulse_from_markov(&k);
        let expect = dmatrix![
            0.0, 0.0, 0.0, 0.0;
            1.5, 0.0, 0.0, 0.0;
            -2.0, 1.5, 0.0, 0.0;
            0.25, -2.0, 1.5, 0.0
        ];
        assert_eq!(g.as_matrix(), &expect);
    }

    #[test]
    fn single_mode_hankel_nuclear_norm_is_pole_energy() {
        // Rank-one geometric outer product: ||H||_* = gamma(a) ||b|| ||c||.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..10 {
            let l = rng.gen_range(1..6);
            let a = rng.gen_range(-0.95..0.95);
            let b_rows = DMatrix::from_fn(1, 3, |_, _| rng.gen_range(-1.0..1.0));
            let c_cols = DMatrix::from_fn(2, 1, |_, _| rng.gen_range(-1.0..1.0));
            let k = modal_markov(&DVector::from_vec(vec![a]), &b_rows, &c_cols, l);
            let nn = crate::oracle::nuclear_norm(hankel_map(&k).as_matrix());
            let expect = pole_energy(a, l) * b_rows.row(0).norm() * c_cols.column(0).norm();
            assert!((nn - expect).abs() <= 1e-10 * expect.max(1.0), "nn={nn} expect={expect}");
        }
    }

    #[test]
    fn multiplicity_counts_blocks() {
        // L = 2: anti-diagonals hold 1, 2, 3, 2, 1 blocks.
        let counts: Vec<usize> = (0..5).map(|t| antidiagonal_multiplicity(2, t)).collect();
        assert_eq!(counts, vec![1, 2, 3, 2, 1]);
    }
}
