//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values of `m` in descending order.
pub fn singular_values_desc(m: &DMatrix<f64>) -> DVector<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    DVector::from_vec(sv)
}

/// Thin SVD with factors ordered by descending singular value:
/// `m ≈ u * diag(sigma) * vᵀ` with `min(nrows, ncols)` columns.
///
/// Computed by cyclic one-sided Jacobi rotations, which keep full relative
/// accuracy on rank-deficient input (block Hankel matrices of low-order
/// systems are exactly that). Columns belonging to zero singular values are
/// left as zero vectors.
pub fn svd_desc(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    if m.nrows() >= m.ncols() {
        jacobi_svd_tall(m)
    } else {
        let (u, s, v) = jacobi_svd_tall(&m.transpose());
        (v, s, u)
    }
}

fn jacobi_svd_tall(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (rows, n) = (m.nrows(), m.ncols());
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    const MAX_SWEEPS: usize = 40;
    const ORTH_TOL: f64 = 1e-15;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut apq = 0.0;
                let mut app = 0.0;
                let mut aqq = 0.0;
                for i in 0..rows {
                    let (x, y) = (a[(i, p)], a[(i, q)]);
                    apq += x * y;
                    app += x * x;
                    aqq += y * y;
                }
                if apq.abs() <= ORTH_TOL * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let (x, y) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = c * x - s * y;
                    a[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap());

    let mut u_s = DMatrix::zeros(rows, n);
    let mut v_s = DMatrix::zeros(n, n);
    let mut sigma = DVector::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        sigma[dst] = norms[src];
        v_s.set_column(dst, &v.column(src));
        if norms[src] > 0.0 {
            u_s.set_column(dst, &(a.column(src) / norms[src]));
        }
    }
    (u_s, sigma, v_s)
}

/// Top singular triplet `(sigma_1, u_1, v_1)` computed by full SVD.
pub fn top_singular_triplet(m: &DMatrix<f64>) -> (f64, DVector<f64>, DVector<f64>) {
    let (u, s, v) = svd_desc(m);
    if s.is_empty() {
        return (0.0, DVector::zeros(m.nrows()), DVector::zeros(m.ncols()));
    }
    (s[0], u.column(0).into_owned(), v.column(0).into_owned())
}

/// Top singular triplet by power iteration on `mᵀm`; fast path for large
/// matrices. Deterministic start vector; falls back to a shifted start when
/// the iterate degenerates.
pub fn top_singular_power(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> (f64, DVector<f64>, DVector<f64>) {
    let n = m.ncols();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64) * 1e-3);
    let nv = v.norm();
    if nv == 0.0 {
        return (0.0, DVector::zeros(m.nrows()), DVector::zeros(n));
    }
    v /= nv;
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let w = m * &v;
        let mut next = m.transpose() * &w;
        let norm = next.norm();
        if norm == 0.0 {
            return (0.0, DVector::zeros(m.nrows()), v);
        }
        next /= norm;
        let new_sigma = (m * &next).norm();
        let done = (new_sigma - sigma).abs() <= tol * new_sigma.max(1.0);
        sigma = new_sigma;
        v = next;
        if done {
            break;
        }
    }
    let mut u = m * &v;
    let un = u.norm();
    if un > 0.0 {
        u /= un;
    }
    (sigma, u, v)
}

/// Moore–Penrose pseudo-inverse with singular values below
/// `rel_tol * sigma_max` truncated to zero.
pub fn pinv_truncated(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (u, s, v) = svd_desc(m);
    let smax = if s.is_empty() { 0.0 } else { s[0] };
    let cutoff = rel_tol * smax;
    let mut inv = DMatrix::zeros(m.ncols(), m.nrows());
    for k in 0..s.len() {
        if s[k] > cutoff && s[k] > 0.0 {
            let col_v = v.column(k);
            let col_u = u.column(k);
            for i in 0..m.ncols() {
                for j in 0..m.nrows() {
                    inv[(i, j)] += col_v[i] * col_u[j] / s[k];
                }
            }
        }
    }
    inv
}

/// Symmetric PSD square root. Errors when `m` has an eigenvalue below
/// `-1e-10 * max(|eig|)`; tiny negative eigenvalues are clamped to zero.
pub fn sym_sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim("sym_sqrt_psd: matrix must be square"));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |acc, &e| acc.max(e.abs()));
    let floor = -1e-10 * max_abs.max(1.0);
    let mut d = DVector::zeros(eig.eigenvalues.len());
    for i in 0..d.len() {
        let e = eig.eigenvalues[i];
        if e < floor {
            return Err(Error::invalid(format!("matrix is not PSD: eigenvalue {e}")));
        }
        d[i] = e.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&d) * q.transpose())
}

/// Spectral radius (largest eigenvalue magnitude) of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().fold(0.0f64, |acc, e| acc.max(e.norm()))
}

/// Frobenius inner product.
pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Slope of the least-squares line through `(x_i, y_i)`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}
