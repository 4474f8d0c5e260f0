//! Conversions between `C^N` and `R^{2N}` plus the handful of dense
//! linear-algebra helpers shared by every module.
//!
//! Real vectors use the interleaved layout `(x_1, y_1, ..., x_N, y_N)` with
//! `z_j = x_j + i y_j`, so multiplication by `i` (the complex structure `J`)
//! acts blockwise as `(x, y) -> (-y, x)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type RVec = DVector<f64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn to_complex(x: &RVec) -> CVec {
    debug_assert!(x.len() % 2 == 0);
    CVec::from_fn(x.len() / 2, |k, _| Complex64::new(x[2 * k], x[2 * k + 1]))
}

pub fn to_real(z: &CVec) -> RVec {
    RVec::from_fn(2 * z.len(), |k, _| {
        let c = z[k / 2];
        if k % 2 == 0 {
            c.re
        } else {
            c.im
        }
    })
}

/// Complex structure on `R^{2N}`.
pub fn j_apply(x: &RVec) -> RVec {
    RVec::from_fn(
        x.len(),
        |k, _| if k % 2 == 0 { -x[k + 1] } else { x[k - 1] },
    )
}

/// Hermitian product, linear in the first slot.
pub fn hdot(a: &CVec, b: &CVec) -> Complex64 {
    a.iter().zip(b.iter()).map(|(p, q)| p * q.conj()).sum()
}

/// Bilinear pairing of a covector with a vector, `sum c_k v_k`.
pub fn pair(c: &CVec, v: &CVec) -> Complex64 {
    c.iter().zip(v.iter()).map(|(p, q)| p * q).sum()
}

pub fn cnorm(a: &CVec) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Complex gradient `(d rho / d z_k) = (rho_{x_k} - i rho_{y_k}) / 2` from the real gradient.
pub fn complex_gradient(g: &RVec) -> CVec {
    CVec::from_fn(g.len() / 2, |k, _| {
        Complex64::new(g[2 * k], -g[2 * k + 1]) * 0.5
    })
}

/// Singular values in descending order.
pub fn singular_values(m: &RMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Smallest of the first `k` singular values of `m`, i.e. the `k`-th largest;
/// zero when `m` has fewer than `k` singular values.
pub fn kth_singular_value(m: &RMat, k: usize) -> f64 {
    let s = singular_values(m);
    if k == 0 || s.len() < k {
        0.0
    } else {
        s[k - 1]
    }
}

/// Symmetric eigen-decomposition with eigenvalues sorted ascending and
/// eigenvectors permuted to match.
pub fn sym_eigen(m: &RMat) -> (Vec<f64>, RMat) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = RMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Minimum-norm least-squares solution of `a x = b` through the SVD.
pub fn lstsq(a: &RMat, b: &RVec) -> RVec {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = smax * 1e-13 * (a.nrows().max(a.ncols()) as f64);
    match svd.solve(b, eps) {
        Ok(x) => x,
        Err(_) => RVec::zeros(a.ncols()),
    }
}

/// Unit right singular vector belonging to the smallest singular value.
pub fn null_direction(a: &RMat) -> RVec {
    let n = a.ncols();
    // Pad to a square system so the thin SVD exposes all right singular vectors.
    let padded = if a.nrows() < n {
        let mut p = RMat::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let v: RVec = vt.row(k).transpose();
    let nv = v.norm();
    v / nv
}

/// Gram-Schmidt on the columns of `m`, dropping columns whose residual falls
/// below `tol`. Returns an orthonormal basis of the column span.
pub fn orthonormal_columns(m: &RMat, tol: f64) -> RMat {
    let mut basis: Vec<RVec> = Vec::new();
    for c in 0..m.ncols() {
        let mut v: RVec = m.column(c).into_owned();
        for _ in 0..2 {
            for b in &basis {
                let p = b.dot(&v);
                v -= b * p;
            }
        }
        let nv = v.norm();
        if nv > tol {
            basis.push(v / nv);
        }
    }
    if basis.is_empty() {
        RMat::zeros(m.nrows(), 0)
    } else {
        RMat::from_columns(&basis)
    }
}

/// Operator 2-norm.
pub fn op_norm(m: &RMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j_squares_to_minus_identity() {
        let x = RVec::from_vec(vec![1.0, 2.0, -3.0, 0.5]);
        let jj = j_apply(&j_apply(&x));
        assert!((jj + &x).norm() < 1e-15);
        let z = to_complex(&x);
        assert!((to_real(&z.map(|c| c * I)) - j_apply(&x)).norm() < 1e-15);
    }

    #[test]
    fn complex_gradient_of_norm_squared_is_conjugate() {
        // rho = |z|^2 has real gradient 2x and d rho/dz = conj(z).
        let x = RVec::from_vec(vec![0.3, -0.4, 0.1, 0.7]);
        let c = complex_gradient(&(&x * 2.0));
        let z = to_complex(&x);
        for k in 0..2 {
            assert!((c[k] - z[k].conj()).norm() < 1e-15);
        }
    }

    #[test]
    fn null_direction_of_rank_deficient_system() {
        let a = RMat::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let v = null_direction(&a);
        assert!((v[2].abs() - 1.0).abs() < 1e-12);
    }
}
