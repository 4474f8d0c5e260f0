//! Defining functions `rho: R^{2N} -> R` whose regular zero level is the
//! hypersurface `M`, with `Omega = {rho < 0}`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CVec, RMat, RVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
}

pub trait DefiningFunction: Send + Sync {
    /// Complex dimension `N` of the ambient space.
    fn complex_dim(&self) -> usize;

    fn value(&self, x: &RVec) -> f64;

    fn gradient(&self, x: &RVec) -> RVec;

    fn hessian(&self, x: &RVec) -> RMat;

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }

    /// Centre of the box samplers draw seeds from.
    fn sample_center(&self) -> RVec {
        RVec::zeros(2 * self.complex_dim())
    }

    /// Half-width of the sampling box.
    fn sample_radius(&self) -> f64;

    /// Typical magnitude of `rho` near `M`; residual tolerances are relative to it.
    fn scale(&self) -> f64 {
        1.0
    }

    fn real_dim(&self) -> usize {
        2 * self.complex_dim()
    }
}

/// Builtin hypersurfaces, tagged by `kind` in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Builtin {
    /// `|z|^2 - r^2`.
    Sphere {
        n: usize,
        #[serde(default = "unit")]
        radius: f64,
    },
    /// `sum |z_j|^2 / a_j^2 - 1`, one semi-axis per complex coordinate.
    Ellipsoid { axes: Vec<f64> },
    /// `|z|^2 - 1 - eps Re(z_1^m conj(z_2))`.
    PerturbedSphere { n: usize, epsilon: f64, m: u32 },
    /// Local saddle `y_N - (y_1^2 - x_1^2)`: the shape operator on `D` is
    /// indefinite everywhere.
    SaddleModel { n: usize },
    /// Local model `y_N - |z_1|^4`, whose shape operator vanishes at the origin.
    QuarticModel { n: usize },
}

fn unit() -> f64 {
    1.0
}

/// Radius of the ball containing the perturbed sphere for admissible `eps`.
const PERTURBED_RADIUS: f64 = 1.25;

/// Largest perturbation for which `|z|^2 - 1 - eps Re(z_1^m conj z_2)` keeps a
/// positive-definite real Hessian on the ball of radius 1.25 that contains it.
///
/// The first bound keeps the zero set inside that ball; the second bounds the
/// Hessian of the perturbation term by half the Hessian of `|z|^2`.
pub fn perturbation_bound(m: u32) -> f64 {
    let r = PERTURBED_RADIUS;
    let m = f64::from(m);
    let containment = (r * r - 1.0) / r.powf(m + 1.0);
    let hessian = 1.0 / (2.0 * (m * (m - 1.0) + std::f64::consts::SQRT_2 * m) * r.powf(m - 1.0));
    containment.min(hessian)
}

impl Builtin {
    pub fn sphere(n: usize) -> Self {
        Builtin::Sphere { n, radius: 1.0 }
    }

    pub fn ellipsoid(axes: &[f64]) -> Self {
        Builtin::Ellipsoid {
            axes: axes.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        match self {
            Builtin::Sphere { n, radius } => {
                if *n < 2 {
                    return bad(format!("sphere needs n >= 2, got {n}"));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad(format!("sphere radius must be positive, got {radius}"));
                }
            }
            Builtin::Ellipsoid { axes } => {
                if axes.len() < 2 {
                    return bad(format!(
                        "ellipsoid needs at least 2 axes, got {}",
                        axes.len()
                    ));
                }
                if axes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                    return bad(format!("ellipsoid axes must be positive, got {axes:?}"));
                }
            }
            Builtin::PerturbedSphere { n, epsilon, m } => {
                if *n < 2 {
                    return bad(format!("perturbed sphere needs n >= 2, got {n}"));
                }
                if *m < 1 {
                    return bad("perturbation degree m must be >= 1".into());
                }
                let bound = perturbation_bound(*m);
                if !(epsilon.is_finite() && epsilon.abs() < bound) {
                    return bad(format!(
                        "perturbation |eps| = {epsilon} must stay below {bound:.4} for m = {m}"
                    ));
                }
            }
            Builtin::SaddleModel { n } | Builtin::QuarticModel { n } => {
                if *n < 2 {
                    return bad(format!("model needs n >= 2, got {n}"));
                }
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            Builtin::Sphere { n, radius } => format!("sphere(N={n}, r={radius})"),
            Builtin::Ellipsoid { axes } => format!("ellipsoid(axes={axes:?})"),
            Builtin::PerturbedSphere { n, epsilon, m } => {
                format!("perturbed_sphere(N={n}, eps={epsilon}, m={m})")
            }
            Builtin::SaddleModel { n } => format!("saddle_model(N={n})"),
            Builtin::QuarticModel { n } => format!("quartic_model(N={n})"),
        }
    }

    /// Bounded builtins are the ones the convexity theorem is about; the local
    /// models are unbounded graphs sampled near the origin.
    pub fn is_bounded(&self) -> bool {
        !matches!(
            self,
            Builtin::SaddleModel { .. } | Builtin::QuarticModel { .. }
        )
    }
}

/// Real and imaginary partial-derivative factors of a function holomorphic in
/// `z_1` and antiholomorphic in `z_2`: `d/dx -> 1`, `d/dy -> +i` or `-i`.
fn direction_factor(k: usize) -> (usize, Complex64) {
    let coord = k / 2;
    let f = match (coord, k % 2) {
        (_, 0) => Complex64::new(1.0, 0.0),
        (0, _) => Complex64::new(0.0, 1.0),
        _ => Complex64::new(0.0, -1.0),
    };
    (coord, f)
}

impl DefiningFunction for Builtin {
    fn complex_dim(&self) -> usize {
        match self {
            Builtin::Sphere { n, .. }
            | Builtin::PerturbedSphere { n, .. }
            | Builtin::SaddleModel { n }
            | Builtin::QuarticModel { n } => *n,
            Builtin::Ellipsoid { axes } => axes.len(),
        }
    }

    fn value(&self, x: &RVec) -> f64 {
        match self {
            Builtin::Sphere { radius, .. } => x.norm_squared() - radius * radius,
            Builtin::Ellipsoid { axes } => {
                axes.iter()
                    .enumerate()
                    .map(|(j, a)| (x[2 * j].powi(2) + x[2 * j + 1].powi(2)) / (a * a))
                    .sum::<f64>()
                    - 1.0
            }
            Builtin::PerturbedSphere { epsilon, m, .. } => {
                let z1 = Complex64::new(x[0], x[1]);
                let z2 = Complex64::new(x[2], x[3]);
                x.norm_squared() - 1.0 - epsilon * (z1.powu(*m) * z2.conj()).re
            }
            Builtin::SaddleModel { .. } => {
                let yn = x[x.len() - 1];
                yn - (x[1] * x[1] - x[0] * x[0])
            }
            Builtin::QuarticModel { .. } => {
                let yn = x[x.len() - 1];
                let r2 = x[0] * x[0] + x[1] * x[1];
                yn - r2 * r2
            }
        }
    }

    fn gradient(&self, x: &RVec) -> RVec {
        let d = x.len();
        match self {
            Builtin::Sphere { .. } => x * 2.0,
            Builtin::Ellipsoid { axes } => {
                RVec::from_fn(d, |k, _| 2.0 * x[k] / axes[k / 2].powi(2))
            }
            Builtin::PerturbedSphere { epsilon, m, .. } => {
                let (f1, f2) = perturbation_first(x, *m);
                let mut g = x * 2.0;
                for k in 0..4 {
                    let (coord, c) = direction_factor(k);
                    let fk = if coord == 0 { f1 } else { f2 };
                    g[k] -= epsilon * (c * fk).re;
                }
                g
            }
            Builtin::SaddleModel { .. } => {
                let mut g = RVec::zeros(d);
                g[0] = 2.0 * x[0];
                g[1] = -2.0 * x[1];
                g[d - 1] += 1.0;
                g
            }
            Builtin::QuarticModel { .. } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let mut g = RVec::zeros(d);
                g[0] = -4.0 * r2 * x[0];
                g[1] = -4.0 * r2 * x[1];
                g[d - 1] += 1.0;
                g
            }
        }
    }

    fn hessian(&self, x: &RVec) -> RMat {
        let d = x.len();
        match self {
            Builtin::Sphere { .. } => RMat::identity(d, d) * 2.0,
            Builtin::Ellipsoid { axes } => {
                RMat::from_diagonal(&DVector::from_fn(d, |k, _| 2.0 / axes[k / 2].powi(2)))
            }
            Builtin::PerturbedSphere { epsilon, m, .. } => {
                let (f11, f12) = perturbation_second(x, *m);
                let mut h = RMat::identity(d, d) * 2.0;
                for a in 0..4 {
                    for b in 0..4 {
                        let (ca, fa) = direction_factor(a);
                        let (cb, fb) = direction_factor(b);
                        let fab = match (ca, cb) {
                            (0, 0) => f11,
                            (1, 1) => Complex64::new(0.0, 0.0),
                            _ => f12,
                        };
                        h[(a, b)] -= epsilon * (fa * fb * fab).re;
                    }
                }
                h
            }
            Builtin::SaddleModel { .. } => {
                let mut h = RMat::zeros(d, d);
                h[(0, 0)] = 2.0;
                h[(1, 1)] = -2.0;
                h
            }
            Builtin::QuarticModel { .. } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let mut h = RMat::zeros(d, d);
                h[(0, 0)] = -(4.0 * r2 + 8.0 * x[0] * x[0]);
                h[(1, 1)] = -(4.0 * r2 + 8.0 * x[1] * x[1]);
                h[(0, 1)] = -8.0 * x[0] * x[1];
                h[(1, 0)] = h[(0, 1)];
                h
            }
        }
    }

    fn sample_radius(&self) -> f64 {
        match self {
            Builtin::Sphere { radius, .. } => *radius,
            Builtin::Ellipsoid { axes } => axes.iter().copied().fold(0.0, f64::max),
            Builtin::PerturbedSphere { .. } => PERTURBED_RADIUS,
            Builtin::SaddleModel { .. } | Builtin::QuarticModel { .. } => 0.5,
        }
    }

    fn scale(&self) -> f64 {
        match self {
            Builtin::Sphere { radius, .. } => radius * radius,
            _ => 1.0,
        }
    }
}

/// First holomorphic-direction derivatives of `z_1^m conj(z_2)`:
/// `(d/dz_1, d/d conj z_2)`.
fn perturbation_first(x: &RVec, m: u32) -> (Complex64, Complex64) {
    let z1 = Complex64::new(x[0], x[1]);
    let z2 = Complex64::new(x[2], x[3]);
    let mf = f64::from(m);
    (z1.powu(m - 1) * z2.conj() * mf, z1.powu(m))
}

fn perturbation_second(x: &RVec, m: u32) -> (Complex64, Complex64) {
    let z1 = Complex64::new(x[0], x[1]);
    let z2 = Complex64::new(x[2], x[3]);
    let mf = f64::from(m);
    let f11 = if m >= 2 {
        z1.powu(m - 2) * z2.conj() * (mf * (mf - 1.0))
    } else {
        Complex64::new(0.0, 0.0)
    };
    (f11, z1.powu(m - 1) * mf)
}

/// Central finite differences of `value` standing in for analytic derivatives.
#[derive(Debug, Clone)]
pub struct FiniteDifference<F> {
    pub inner: F,
}

impl<F> FiniteDifference<F> {
    pub fn new(inner: F) -> Self {
        FiniteDifference { inner }
    }
}

impl<F: DefiningFunction> FiniteDifference<F> {
    fn coordinate_scale(&self, x: &RVec) -> f64 {
        x.amax().max(self.inner.sample_radius()).max(1e-3)
    }
}

impl<F: DefiningFunction> DefiningFunction for FiniteDifference<F> {
    fn complex_dim(&self) -> usize {
        self.inner.complex_dim()
    }

    fn value(&self, x: &RVec) -> f64 {
        self.inner.value(x)
    }

    fn gradient(&self, x: &RVec) -> RVec {
        let h = f64::EPSILON.cbrt() * self.coordinate_scale(x);
        RVec::from_fn(x.len(), |k, _| {
            let mut p = x.clone();
            let mut q = x.clone();
            p[k] += h;
            q[k] -= h;
            (self.inner.value(&p) - self.inner.value(&q)) / (2.0 * h)
        })
    }

    fn hessian(&self, x: &RVec) -> RMat {
        let h = f64::EPSILON.powf(0.25) * self.coordinate_scale(x);
        let d = x.len();
        let f = |dx: &[(usize, f64)]| {
            let mut p = x.clone();
            for &(k, s) in dx {
                p[k] += s;
            }
            self.inner.value(&p)
        };
        let mut hm = RMat::zeros(d, d);
        let f0 = self.inner.value(x);
        for a in 0..d {
            hm[(a, a)] = (f(&[(a, h)]) - 2.0 * f0 + f(&[(a, -h)])) / (h * h);
            for b in (a + 1)..d {
                let v = (f(&[(a, h), (b, h)]) - f(&[(a, h), (b, -h)]) - f(&[(a, -h), (b, h)])
                    + f(&[(a, -h), (b, -h)]))
                    / (4.0 * h * h);
                hm[(a, b)] = v;
                hm[(b, a)] = v;
            }
        }
        hm
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::FiniteDifference
    }

    fn sample_center(&self) -> RVec {
        self.inner.sample_center()
    }

    fn sample_radius(&self) -> f64 {
        self.inner.sample_radius()
    }

    fn scale(&self) -> f64 {
        self.inner.scale()
    }
}

/// Restriction of a defining function to a complex affine hyperplane,
/// parametrized isometrically by `C^{N-1}`.
pub struct HyperplaneSlice<'a> {
    parent: &'a dyn DefiningFunction,
    origin: RVec,
    /// Real `2N x 2(N-1)` matrix with columns `v_k, i v_k`; complex-linear.
    embedding: RMat,
}

impl<'a> HyperplaneSlice<'a> {
    /// The hyperplane `{z : sum_k c_k z_k + c_0 = 0}` given by its affine
    /// covector `(c_0, c_1, ..., c_N)`.
    pub fn new(parent: &'a dyn DefiningFunction, covector: &CVec) -> Result<Self> {
        let n = parent.complex_dim();
        if covector.len() != n + 1 {
            return Err(Error::Precondition(format!(
                "hyperplane covector has {} entries, expected {}",
                covector.len(),
                n + 1
            )));
        }
        let c0 = covector[0];
        let c: CVec = covector.rows(1, n).into_owned();
        let cn2: f64 = c.iter().map(|v| v.norm_sqr()).sum();
        if cn2 < 1e-24 {
            return Err(Error::Precondition("hyperplane lies at infinity".into()));
        }
        // The point of the hyperplane nearest the origin is -c0 conj(c) / |c|^2.
        let origin_c = c.map(|v| -c0 * v.conj() / cn2);
        // Orthonormal basis of ker(c) = orthogonal complement of conj(c).
        let normal = c.map(|v| v.conj() / cn2.sqrt());
        let mut basis: Vec<CVec> = Vec::new();
        let mut candidates: Vec<usize> = (0..n).collect();
        while basis.len() < n - 1 {
            let mut best: Option<(usize, CVec, f64)> = None;
            for &k in &candidates {
                let mut v = CVec::zeros(n);
                v[k] = Complex64::new(1.0, 0.0);
                for q in std::iter::once(&normal).chain(basis.iter()) {
                    let p = crate::linalg::hdot(&v, q);
                    v -= q * p;
                }
                let nv = crate::linalg::cnorm(&v);
                if best.as_ref().is_none_or(|b| nv > b.2 + 1e-12) {
                    best = Some((k, v, nv));
                }
            }
            let (k, v, nv) = best.expect("candidates remain");
            candidates.retain(|&c| c != k);
            basis.push(v / Complex64::new(nv, 0.0));
        }
        let mut embedding = RMat::zeros(2 * n, 2 * (n - 1));
        for (k, v) in basis.iter().enumerate() {
            let iv = v.map(|c| c * crate::linalg::I);
            embedding
                .column_mut(2 * k)
                .copy_from(&crate::linalg::to_real(v));
            embedding
                .column_mut(2 * k + 1)
                .copy_from(&crate::linalg::to_real(&iv));
        }
        Ok(HyperplaneSlice {
            parent,
            origin: crate::linalg::to_real(&origin_c),
            embedding,
        })
    }

    pub fn to_ambient(&self, s: &RVec) -> RVec {
        &self.origin + &self.embedding * s
    }

    pub fn from_ambient(&self, x: &RVec) -> RVec {
        self.embedding.transpose() * (x - &self.origin)
    }

    pub fn embedding(&self) -> &RMat {
        &self.embedding
    }
}

impl DefiningFunction for HyperplaneSlice<'_> {
    fn complex_dim(&self) -> usize {
        self.parent.complex_dim() - 1
    }

    fn value(&self, s: &RVec) -> f64 {
        self.parent.value(&self.to_ambient(s))
    }

    fn gradient(&self, s: &RVec) -> RVec {
        self.embedding.transpose() * self.parent.gradient(&self.to_ambient(s))
    }

    fn hessian(&self, s: &RVec) -> RMat {
        let h = self.parent.hessian(&self.to_ambient(s));
        self.embedding.transpose() * h * &self.embedding
    }

    fn derivative_mode(&self) -> DerivativeMode {
        self.parent.derivative_mode()
    }

    fn sample_center(&self) -> RVec {
        self.from_ambient(&self.parent.sample_center())
    }

    fn sample_radius(&self) -> f64 {
        self.parent.sample_radius()
    }

    fn scale(&self) -> f64 {
        self.parent.scale()
    }
}

#[allow(dead_code)]
fn _assert_object_safe(_: &dyn DefiningFunction) {}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_gradient(f: &dyn DefiningFunction, x: &RVec, h: f64) -> RVec {
        RVec::from_fn(x.len(), |k, _| {
            let mut p = x.clone();
            let mut q = x.clone();
            p[k] += h;
            q[k] -= h;
            (f.value(&p) - f.value(&q)) / (2.0 * h)
        })
    }

    fn fd_hessian(f: &dyn DefiningFunction, x: &RVec, h: f64) -> RMat {
        let d = x.len();
        let mut m = nalgebra::DMatrix::zeros(d, d);
        for k in 0..d {
            let mut p = x.clone();
            let mut q = x.clone();
            p[k] += h;
            q[k] -= h;
            let col = (f.gradient(&p) - f.gradient(&q)) / (2.0 * h);
            m.column_mut(k).copy_from(&col);
        }
        m
    }

    fn builtins() -> Vec<Builtin> {
        vec![
            Builtin::sphere(2),
            Builtin::ellipsoid(&[1.0, 1.5]),
            Builtin::PerturbedSphere {
                n: 2,
                epsilon: 0.05,
                m: 2,
            },
            Builtin::PerturbedSphere {
                n: 3,
                epsilon: 0.1,
                m: 1,
            },
            Builtin::SaddleModel { n: 2 },
            Builtin::QuarticModel { n: 3 },
        ]
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let x0 = [0.31, -0.42, 0.55, 0.12, -0.27, 0.66];
        for b in builtins() {
            let x = RVec::from_fn(b.real_dim(), |k, _| x0[k]);
            let g = b.gradient(&x);
            let gfd = fd_gradient(&b, &x, 1e-5);
            assert!((&g - &gfd).amax() < 1e-8, "{}: gradient", b.label());
            let h = b.hessian(&x);
            let hfd = fd_hessian(&b, &x, 1e-5);
            assert!((&h - &hfd).amax() < 1e-7, "{}: hessian", b.label());
        }
    }

    #[test]
    fn finite_difference_mode_tracks_analytic() {
        let b = Builtin::PerturbedSphere {
            n: 2,
            epsilon: 0.05,
            m: 3,
        };
        let fd = FiniteDifference::new(b.clone());
        let x = RVec::from_vec(vec![0.5, 0.3, -0.4, 0.6]);
        assert_eq!(fd.derivative_mode(), DerivativeMode::FiniteDifference);
        assert!((fd.gradient(&x) - b.gradient(&x)).amax() < 1e-9);
        assert!((fd.hessian(&x) - b.hessian(&x)).amax() < 1e-6);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(Builtin::sphere(1).validate().is_err());
        assert!(Builtin::ellipsoid(&[1.0, -2.0]).validate().is_err());
        let bound = perturbation_bound(2);
        assert!(Builtin::PerturbedSphere {
            n: 2,
            epsilon: 1.1 * bound,
            m: 2
        }
        .validate()
        .is_err());
        assert!(Builtin::PerturbedSphere {
            n: 2,
            epsilon: 0.9 * bound,
            m: 2
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn slice_is_complex_linear_restriction() {
        let b = Builtin::sphere(3);
        // Hyperplane z_1 = 0.5 z_2.
        let cov = CVec::from_vec(vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(-0.5, 0.0),
            Complex64::new(0.0, 0.0),
        ]);
        let s = HyperplaneSlice::new(&b, &cov).unwrap();
        assert_eq!(s.complex_dim(), 2);
        let e = s.embedding();
        assert!((e.transpose() * e - RMat::identity(4, 4)).amax() < 1e-14);
        // Complex linearity: J commutes with the embedding.
        let v = RVec::from_vec(vec![0.2, -0.1, 0.4, 0.3]);
        let jv = crate::linalg::j_apply(&v);
        assert!((crate::linalg::j_apply(&(e * &v)) - e * jv).norm() < 1e-14);
        // Points of the slice satisfy the hyperplane equation.
        let z = crate::linalg::to_complex(&s.to_ambient(&v));
        assert!((z[0] - z[1] * 0.5).norm() < 1e-14);
    }
}
