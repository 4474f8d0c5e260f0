use num_complex::Complex64;

use super::function::DefiningFunction;
use crate::error::{Error, Result};
use crate::linalg::{self, cnorm, hdot, to_complex, to_real, CVec, RMat, RVec};

/// Relative band `|lambda| <= DEGENERACY_REL * ||S||` counted as a zero eigenvalue.
pub const DEGENERACY_REL: f64 = 1e-8;

/// Gradients smaller than this (times `scale`) count as vanishing.
pub const ZERO_GRADIENT: f64 = 1e-12;

/// Residual accepted by the Newton retraction, relative to `scale(rho)`.
pub const PROJECTION_TOL: f64 = 1e-10;

const PROJECTION_MAX_ITER: usize = 100;

fn gradient_checked(f: &dyn DefiningFunction, x: &RVec) -> Result<RVec> {
    let g = f.gradient(x);
    let gn = g.norm();
    if !(gn > ZERO_GRADIENT * f.scale().max(1.0)) {
        return Err(Error::ZeroGradient {
            norm: gn,
            point: x.iter().copied().collect(),
        });
    }
    Ok(g)
}

/// Newton retraction onto `M = {rho = 0}` along the gradient.
pub fn project_to_hypersurface(f: &dyn DefiningFunction, z: &RVec) -> Result<RVec> {
    let scale = f.scale();
    let mut x = z.clone();
    let mut r = f.value(&x);
    for _ in 0..PROJECTION_MAX_ITER {
        if r.abs() <= 1e-15 * scale {
            return Ok(x);
        }
        let g = gradient_checked(f, &x)?;
        let step = &g * (r / g.norm_squared());
        x -= &step;
        let r_new = f.value(&x);
        // Converged once the step no longer improves the residual.
        if r_new.abs() <= PROJECTION_TOL * scale
            && (r_new.abs() >= 0.5 * r.abs() || step.norm() < 1e-15)
        {
            return Ok(x);
        }
        r = r_new;
    }
    if r.abs() <= PROJECTION_TOL * scale {
        Ok(x)
    } else {
        Err(Error::NoConvergence {
            what: "projection onto hypersurface",
            iterations: PROJECTION_MAX_ITER,
            residual: r.abs(),
        })
    }
}

/// Pointwise CR data at a point of `M`.
#[derive(Debug, Clone)]
pub struct CrFrame {
    pub point: RVec,
    /// `(d rho / d z_k)`.
    pub complex_gradient: CVec,
    pub gradient_norm: f64,
    /// Unit outward real normal.
    pub normal: RVec,
    /// `J` applied to the normal; spans `T_xM / D_x`.
    pub reeb: RVec,
    /// Complex-orthonormal basis `e_1, ..., e_{N-1}` of `D_x`.
    pub basis: Vec<CVec>,
}

impl CrFrame {
    pub fn complex_dim(&self) -> usize {
        self.complex_gradient.len()
    }

    /// Unit complex normal, `normal` read as a vector of `C^N`.
    pub fn complex_normal(&self) -> CVec {
        to_complex(&self.normal)
    }

    /// Real basis `e_1, i e_1, ..., e_{N-1}, i e_{N-1}` of `D_x`.
    pub fn real_basis(&self) -> RMat {
        let n = self.complex_dim();
        let mut m = RMat::zeros(2 * n, 2 * (n - 1));
        for (k, e) in self.basis.iter().enumerate() {
            let ie = e.map(|c| c * linalg::I);
            m.column_mut(2 * k).copy_from(&to_real(e));
            m.column_mut(2 * k + 1).copy_from(&to_real(&ie));
        }
        m
    }

    /// Orthonormal basis of `T_xM`: the `D` basis followed by the Reeb direction.
    pub fn tangent_basis(&self) -> RMat {
        let d = self.real_basis();
        let mut m = RMat::zeros(d.nrows(), d.ncols() + 1);
        m.view_mut((0, 0), (d.nrows(), d.ncols())).copy_from(&d);
        m.column_mut(d.ncols()).copy_from(&self.reeb);
        m
    }
}

/// CR frame with the canonical Gram-Schmidt seed order `e_1, ..., e_N`.
pub fn cr_frame(f: &dyn DefiningFunction, x: &RVec) -> Result<CrFrame> {
    let order: Vec<usize> = (0..f.complex_dim()).collect();
    cr_frame_with_order(f, x, &order)
}

/// CR frame whose `D` basis is built by Gram-Schmidt over the canonical basis
/// vectors taken in `order`.
pub fn cr_frame_with_order(f: &dyn DefiningFunction, x: &RVec, order: &[usize]) -> Result<CrFrame> {
    let n = f.complex_dim();
    let g = gradient_checked(f, x)?;
    let gn = g.norm();
    let normal = &g / gn;
    let reeb = linalg::j_apply(&normal);
    let nc = to_complex(&normal);

    let residual = |k: usize, accepted: &[CVec]| {
        let mut v = CVec::zeros(n);
        v[k] = Complex64::new(1.0, 0.0);
        for _ in 0..2 {
            for q in std::iter::once(&nc).chain(accepted.iter()) {
                let p = hdot(&v, q);
                v -= q * p;
            }
        }
        v
    };

    // First pass in seed order; a candidate is kept when it retains a fair
    // share of its length. A greedy pass fills whatever is still missing.
    let threshold = 0.5 / (n as f64).sqrt();
    let mut basis: Vec<CVec> = Vec::with_capacity(n - 1);
    let mut used = vec![false; n];
    for &k in order {
        if basis.len() == n - 1 {
            break;
        }
        let v = residual(k, &basis);
        let nv = cnorm(&v);
        if nv >= threshold {
            basis.push(v / Complex64::new(nv, 0.0));
            used[k] = true;
        }
    }
    while basis.len() < n - 1 {
        let (k, v, nv) = order
            .iter()
            .filter(|&&k| !used[k])
            .map(|&k| {
                let v = residual(k, &basis);
                let nv = cnorm(&v);
                (k, v, nv)
            })
            .fold(None::<(usize, CVec, f64)>, |best, cand| match best {
                Some(b) if b.2 >= cand.2 => Some(b),
                _ => Some(cand),
            })
            .expect("an unused seed vector remains");
        used[k] = true;
        basis.push(v / Complex64::new(nv, 0.0));
    }

    Ok(CrFrame {
        point: x.clone(),
        complex_gradient: linalg::complex_gradient(&g),
        gradient_norm: gn,
        normal,
        reeb,
        basis,
    })
}

/// Second fundamental form of `M` restricted to `D_x`.
#[derive(Debug, Clone)]
pub struct ShapeOperatorData {
    pub point: RVec,
    /// Symmetric matrix in the basis `e_1, i e_1, ..., e_{N-1}, i e_{N-1}`.
    pub matrix: RMat,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub index: usize,
    pub positive: usize,
    pub zero: usize,
    pub degeneracy_tol: f64,
}

impl ShapeOperatorData {
    fn from_matrix(point: RVec, matrix: RMat) -> Self {
        let (eigenvalues, _) = linalg::sym_eigen(&matrix);
        let norm = eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol = DEGENERACY_REL * norm;
        let index = eigenvalues.iter().filter(|&&l| l < -tol).count();
        let positive = eigenvalues.iter().filter(|&&l| l > tol).count();
        let zero = eigenvalues.len() - index - positive;
        ShapeOperatorData {
            point,
            matrix,
            eigenvalues,
            index,
            positive,
            zero,
            degeneracy_tol: tol,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::INFINITY)
    }

    pub fn is_degenerate(&self) -> bool {
        self.zero > 0
    }
}

/// Shape operator with respect to the inward normal, so that the unit sphere
/// gives the identity.
pub fn shape_operator(f: &dyn DefiningFunction, x: &RVec) -> Result<ShapeOperatorData> {
    let frame = cr_frame(f, x)?;
    Ok(shape_operator_in_frame(f, &frame))
}

pub fn shape_operator_in_frame(f: &dyn DefiningFunction, frame: &CrFrame) -> ShapeOperatorData {
    let r = frame.real_basis();
    let h = f.hessian(&frame.point);
    let s = r.transpose() * h * &r / frame.gradient_norm;
    let s = (&s + s.transpose()) * 0.5;
    ShapeOperatorData::from_matrix(frame.point.clone(), s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::function::Builtin;

    fn rv(v: &[f64]) -> RVec {
        RVec::from_vec(v.to_vec())
    }

    #[test]
    fn sphere_projection_is_radial() {
        let s = Builtin::sphere(2);
        let x = project_to_hypersurface(&s, &rv(&[2.0, 0.0, 0.0, 0.0])).unwrap();
        assert!((x - rv(&[1.0, 0.0, 0.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn sphere_projection_from_centre_fails() {
        let s = Builtin::sphere(2);
        let e = project_to_hypersurface(&s, &rv(&[0.0; 4])).unwrap_err();
        assert!(matches!(e, Error::ZeroGradient { .. }));
    }

    #[test]
    fn ellipsoid_axis_projection() {
        let e = Builtin::ellipsoid(&[1.0, 1.5]);
        let x = project_to_hypersurface(&e, &rv(&[0.0, 0.0, 3.0, 0.0])).unwrap();
        assert!((x - rv(&[0.0, 0.0, 1.5, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn projection_moves_along_gradient_line() {
        // On the sphere every Newton step is radial, so the start and the
        // result are positively collinear.
        let s = Builtin::sphere(3);
        let z = rv(&[0.3, -1.2, 0.8, 0.1, 0.4, -0.7]);
        let x = project_to_hypersurface(&s, &z).unwrap();
        assert!(s.value(&x).abs() <= 1e-10);
        assert!((&x - &z / z.norm()).norm() < 1e-12);
    }

    #[test]
    fn sphere_frames_at_poles() {
        let s = Builtin::sphere(2);
        let f = cr_frame(&s, &rv(&[0.0, 0.0, 1.0, 0.0])).unwrap();
        let e = &f.basis[0];
        assert!((e[0].norm() - 1.0).abs() < 1e-14 && e[1].norm() < 1e-14);
        let f = cr_frame(&s, &rv(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        let e = &f.basis[0];
        assert!((e[1].norm() - 1.0).abs() < 1e-14 && e[0].norm() < 1e-14);
    }

    #[test]
    fn ellipsoid_axis_frame() {
        let el = Builtin::ellipsoid(&[1.0, 1.5]);
        let f = cr_frame(&el, &rv(&[0.0, 0.0, 1.5, 0.0])).unwrap();
        assert!((f.basis[0][0].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tangent_basis_is_orthonormal_and_tangent() {
        let el = Builtin::ellipsoid(&[1.0, 1.5, 0.8]);
        let x = project_to_hypersurface(&el, &rv(&[0.4, 0.1, -0.6, 0.3, 0.2, 0.5])).unwrap();
        let f = cr_frame(&el, &x).unwrap();
        let t = f.tangent_basis();
        assert_eq!(t.ncols(), 5);
        assert!((t.transpose() * &t - RMat::identity(5, 5)).amax() < 1e-13);
        assert!((t.transpose() * &f.normal).amax() < 1e-13);
    }

    #[test]
    fn unit_sphere_shape_operator_is_identity() {
        let s = Builtin::sphere(2);
        let x = project_to_hypersurface(&s, &rv(&[0.3, 0.5, -0.2, 0.7])).unwrap();
        let so = shape_operator(&s, &x).unwrap();
        assert!((so.matrix.clone() - RMat::identity(2, 2)).amax() < 1e-14);
        assert_eq!(so.index, 0);
        assert_eq!(so.positive, 2);
    }

    #[test]
    fn saddle_model_has_positive_index() {
        let m = Builtin::SaddleModel { n: 2 };
        let so = shape_operator(&m, &rv(&[0.0; 4])).unwrap();
        assert_eq!(so.index, 1);
        assert!(so.min_eigenvalue() < 0.0);
        assert!((so.eigenvalues[0] + 2.0).abs() < 1e-14 && (so.eigenvalues[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn quartic_model_is_degenerate_at_origin() {
        let m = Builtin::QuarticModel { n: 2 };
        let so = shape_operator(&m, &rv(&[0.0; 4])).unwrap();
        assert_eq!(so.zero, 2);
        assert!(so.is_degenerate());
    }
}
