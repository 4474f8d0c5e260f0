//! Complex Gauss map `M -> CP^{N-1*}` and dual map `M -> CP^{N*}`.
//!
//! A point `x` of `M` is sent to its tangent complex hyperplane
//! `{zeta : sum_k d_k rho(x) (zeta_k - x_k) = 0}`, written in homogeneous dual
//! coordinates `[-sum_k d_k rho(x) x_k : d_1 rho(x) : ... : d_N rho(x)]`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    cr_frame, sample_points, shape_operator_in_frame, CrFrame, DefiningFunction, GraphChart,
};
use crate::linalg::{self, cnorm, hdot, CVec, RMat, RVec};

/// Immersion threshold relative to the local scale `||H rho|| / |grad rho|`.
pub const IMMERSION_REL: f64 = 1e-6;

/// Point of a complex projective space, stored as a unit representative whose
/// first nonzero entry is real and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectivePoint {
    coords: CVec,
}

impl ProjectivePoint {
    pub fn new(v: CVec) -> Option<Self> {
        let n = cnorm(&v);
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        let mut u = v / Complex64::new(n, 0.0);
        let pivot = u.iter().copied().find(|c| c.norm() > 1e-14)?;
        let phase = pivot.conj() / pivot.norm();
        u *= phase;
        Some(ProjectivePoint { coords: u })
    }

    pub fn coords(&self) -> &CVec {
        &self.coords
    }

    /// Projective dimension `k` of `CP^k`.
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    /// Chordal (sine of the Fubini-Study angle) distance.
    pub fn distance(&self, other: &ProjectivePoint) -> f64 {
        let p = hdot(&other.coords, &self.coords);
        (&other.coords - &self.coords * p).norm().min(1.0)
    }

    /// Affine coordinates in chart `k` (dividing by the `k`-th entry), or
    /// `None` at infinity of that chart.
    pub fn affine(&self, k: usize) -> Option<CVec> {
        let d = self.coords[k];
        if d.norm() < 1e-12 {
            return None;
        }
        Some(CVec::from_iterator(
            self.coords.len() - 1,
            self.coords
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, c)| c / d),
        ))
    }

    /// Chart index maximizing the modulus of the divisor, first one on ties.
    pub fn best_chart(&self) -> usize {
        let mut best = 0;
        for (k, c) in self.coords.iter().enumerate() {
            if c.norm() > self.coords[best].norm() * (1.0 + 1e-12) {
                best = k;
            }
        }
        best
    }
}

impl Serialize for ProjectivePoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.coords.iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(s)
    }
}

/// `[d rho(x)]` in `CP^{N-1*}`.
pub fn gauss_map(f: &dyn DefiningFunction, x: &RVec) -> Result<ProjectivePoint> {
    let frame = cr_frame(f, x)?;
    Ok(ProjectivePoint::new(frame.complex_gradient).expect("nonzero gradient"))
}

/// Homogeneous dual coordinates `(c_0, c)` of the tangent complex hyperplane.
pub(crate) fn homogeneous(frame: &CrFrame) -> CVec {
    let c = &frame.complex_gradient;
    let z = linalg::to_complex(&frame.point);
    let n = c.len();
    let mut h = CVec::zeros(n + 1);
    h[0] = -linalg::pair(c, &z);
    h.rows_mut(1, n).copy_from(c);
    h
}

pub fn dual_map(f: &dyn DefiningFunction, x: &RVec) -> Result<ProjectivePoint> {
    let frame = cr_frame(f, x)?;
    Ok(ProjectivePoint::new(homogeneous(&frame)).expect("nonzero gradient"))
}

/// Gauss-map components in the adapted coordinates of a graph chart,
/// `G_j = (2 phi_t - 2i) / (1 + phi_t^2) * d phi / d w_j`, with last entry 1.
pub fn chart_gauss_components(chart: &GraphChart<'_>, q: &RVec) -> Result<CVec> {
    let g = chart.evaluate(q)?;
    let pt = g.dt();
    let factor = Complex64::new(2.0 * pt, -2.0) / (1.0 + pt * pt);
    let dw = g.dw();
    let n = dw.len() + 1;
    let mut c = CVec::zeros(n);
    for j in 0..n - 1 {
        c[j] = factor * dw[j];
    }
    c[n - 1] = Complex64::new(1.0, 0.0);
    Ok(c)
}

/// Last affine component of the dual map in a graph chart,
/// `nu_N = sum_j (-2 phi_t + 2i) / (1 + phi_t^2) phi_{w_j} w_j - (t + i phi)`.
pub fn chart_dual_last_component(chart: &GraphChart<'_>, q: &RVec) -> Result<Complex64> {
    let g = chart.evaluate(q)?;
    let pt = g.dt();
    let factor = Complex64::new(-2.0 * pt, 2.0) / (1.0 + pt * pt);
    let dw = g.dw();
    let mut s = Complex64::new(0.0, 0.0);
    for j in 0..dw.len() {
        s += factor * dw[j] * Complex64::new(q[2 * j], q[2 * j + 1]);
    }
    Ok(s - Complex64::new(q[q.len() - 1], g.value))
}

/// Chart-coordinate covector pulled back to ambient coordinates: the linear
/// form `c' . U^H (z - x)` has ambient coefficients `conj(U) c'`.
fn chart_covector_to_ambient(chart: &GraphChart<'_>, c: &CVec) -> CVec {
    let n = c.len();
    CVec::from_fn(n, |k, _| {
        (0..n).map(|j| chart.unitary[j][k].conj() * c[j]).sum()
    })
}

/// Gauss map at `psi(q)` computed from the chart formula.
pub fn gauss_map_from_chart(chart: &GraphChart<'_>, q: &RVec) -> Result<ProjectivePoint> {
    let c = chart_gauss_components(chart, q)?;
    Ok(ProjectivePoint::new(chart_covector_to_ambient(chart, &c)).expect("last entry is 1"))
}

/// Dual map at `psi(q)` computed from the chart formula `[nu_N : G : 1]`.
pub fn dual_map_from_chart(chart: &GraphChart<'_>, q: &RVec) -> Result<ProjectivePoint> {
    let c_chart = chart_gauss_components(chart, q)?;
    let nu_n = chart_dual_last_component(chart, q)?;
    let c = chart_covector_to_ambient(chart, &c_chart);
    let x = linalg::to_complex(chart.origin());
    let n = c.len();
    let mut h = CVec::zeros(n + 1);
    h[0] = nu_n - linalg::pair(&c, &x);
    h.rows_mut(1, n).copy_from(&c);
    Ok(ProjectivePoint::new(h).expect("nonzero"))
}

/// Derivative of the homogeneous dual vector along a real ambient direction.
pub(crate) fn homogeneous_derivative(frame: &CrFrame, hess: &RMat, v: &RVec) -> CVec {
    let n = frame.complex_dim();
    let hv = hess * v;
    let dc = CVec::from_fn(n, |k, _| Complex64::new(hv[2 * k], -hv[2 * k + 1]) * 0.5);
    let dz = linalg::to_complex(v);
    let z = linalg::to_complex(&frame.point);
    let c = &frame.complex_gradient;
    let mut dh = CVec::zeros(n + 1);
    dh[0] = -(linalg::pair(&dc, &z) + linalg::pair(c, &dz));
    dh.rows_mut(1, n).copy_from(&dc);
    dh
}

/// Projection of `dh` to the tangent space of projective space at `[h]`,
/// scaled so its length is the Fubini-Study length.
pub(crate) fn fs_tangent(h: &CVec, dh: &CVec) -> CVec {
    let nh = cnorm(h);
    let u = h / Complex64::new(nh, 0.0);
    let p = hdot(dh, &u);
    (dh - &u * p) / Complex64::new(nh, 0.0)
}

pub(crate) fn stack_real(cols: &[CVec]) -> RMat {
    let rows = cols.first().map(|c| 2 * c.len()).unwrap_or(0);
    let mut m = RMat::zeros(rows, cols.len());
    for (k, c) in cols.iter().enumerate() {
        m.column_mut(k).copy_from(&linalg::to_real(c));
    }
    m
}

#[derive(Debug, Clone, Serialize)]
pub struct DualDifferentialData {
    pub point: Vec<f64>,
    /// Affine chart of `CP^{N*}` used for `jacobian` (index of the divisor).
    pub chart: usize,
    /// Real `2N x (2N-1)` Jacobian in the affine chart, columns along the
    /// frame basis of `T_xM` (the `D` basis, then the Reeb direction).
    #[serde(skip)]
    pub jacobian: RMat,
    /// Singular values of the differential measured in the Fubini-Study
    /// metric, descending.
    pub singular_values: Vec<f64>,
    pub margin: f64,
    /// Fubini-Study singular values of the differential restricted to `D`.
    pub d_block_singular_values: Vec<f64>,
    pub d_block_zero_count: usize,
    pub threshold: f64,
    pub immersed: bool,
}

/// Differential of the dual map, choosing the affine chart with the largest
/// divisor.
pub fn dual_differential(f: &dyn DefiningFunction, x: &RVec) -> Result<DualDifferentialData> {
    let frame = cr_frame(f, x)?;
    let h = homogeneous(&frame);
    let p = ProjectivePoint::new(h.clone()).expect("nonzero");
    let mut charts: Vec<usize> = (0..h.len()).collect();
    charts.sort_by(|&a, &b| h[b].norm().total_cmp(&h[a].norm()));
    let mut last = Error::ChartInvalid {
        chart: p.best_chart(),
    };
    for k in charts {
        match differential_in_chart(f, &frame, k) {
            Ok(d) => return Ok(d),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Differential of the dual map in a prescribed affine chart of `CP^{N*}`.
pub fn dual_differential_in_chart(
    f: &dyn DefiningFunction,
    x: &RVec,
    chart: usize,
) -> Result<DualDifferentialData> {
    let frame = cr_frame(f, x)?;
    differential_in_chart(f, &frame, chart)
}

/// Homogeneous dual vector together with its derivatives along the frame
/// basis of `T_xM`.
pub(crate) fn dual_tangent_columns(f: &dyn DefiningFunction, frame: &CrFrame) -> (CVec, Vec<CVec>) {
    let h = homogeneous(frame);
    let hess = f.hessian(&frame.point);
    let t = frame.tangent_basis();
    let dh = (0..t.ncols())
        .map(|a| homogeneous_derivative(frame, &hess, &t.column(a).into_owned()))
        .collect();
    (h, dh)
}

fn differential_in_chart(
    f: &dyn DefiningFunction,
    frame: &CrFrame,
    chart: usize,
) -> Result<DualDifferentialData> {
    let (h, dh) = dual_tangent_columns(f, frame);
    if chart >= h.len() || h[chart].norm() < 1e-12 * cnorm(&h) {
        return Err(Error::ChartInvalid { chart });
    }
    let n = frame.complex_dim();
    let hm = h[chart];
    let mut jacobian = RMat::zeros(2 * n, dh.len());
    for (a, d) in dh.iter().enumerate() {
        let mut row = 0;
        for i in 0..h.len() {
            if i == chart {
                continue;
            }
            let da = (d[i] * hm - h[i] * d[chart]) / (hm * hm);
            jacobian[(row, a)] = da.re;
            jacobian[(row + 1, a)] = da.im;
            row += 2;
        }
    }
    let fs_cols: Vec<CVec> = dh.iter().map(|d| fs_tangent(&h, d)).collect();
    let full = stack_real(&fs_cols);
    let singular_values = linalg::singular_values(&full);
    let margin = singular_values.get(2 * n - 2).copied().unwrap_or(0.0);
    let d_block = stack_real(&fs_cols[..2 * n - 2]);
    let d_block_singular_values = linalg::singular_values(&d_block);

    let kappa = linalg::op_norm(&f.hessian(&frame.point)) / frame.gradient_norm;
    let threshold = IMMERSION_REL * kappa;
    let d_block_zero_count = d_block_singular_values
        .iter()
        .filter(|&&s| s <= threshold)
        .count();
    Ok(DualDifferentialData {
        point: frame.point.iter().copied().collect(),
        chart,
        jacobian,
        singular_values,
        margin,
        d_block_singular_values,
        d_block_zero_count,
        threshold,
        immersed: margin > threshold,
    })
}

/// Verdict pair used to check that dual immersion and nondegeneracy of the
/// shape operator agree.
pub fn immersion_and_nondegeneracy(f: &dyn DefiningFunction, x: &RVec) -> Result<(bool, bool)> {
    let frame = cr_frame(f, x)?;
    let d = dual_differential(f, x)?;
    let s = shape_operator_in_frame(f, &frame);
    Ok((d.immersed, !s.is_degenerate()))
}

#[derive(Debug, Clone)]
pub struct DualSample {
    pub preimage: RVec,
    pub point: ProjectivePoint,
    pub margin: f64,
    pub immersed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct DualCloud {
    pub samples: Vec<DualSample>,
}

impl DualCloud {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn min_margin(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.margin)
            .fold(f64::INFINITY, f64::min)
    }

    /// Mean chordal distance from each dual point to its nearest neighbour.
    pub fn mean_nearest_neighbor(&self) -> f64 {
        let n = self.samples.len();
        if n < 2 {
            return 0.0;
        }
        let nearest: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| self.samples[i].point.distance(&self.samples[j].point))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        // Summed in index order so the mean does not depend on the worker count.
        let total: f64 = nearest.iter().sum();
        total / n as f64
    }
}

/// Dual images of `n` sampled points of `M` with their immersion margins.
pub fn sample_dual_set(f: &dyn DefiningFunction, n: usize, rng_seed: u64) -> Result<DualCloud> {
    let pts = sample_points(f, n, rng_seed, "dual-cloud")?;
    let samples: Result<Vec<DualSample>> = pts
        .into_par_iter()
        .map(|x| {
            let d = dual_differential(f, &x)?;
            let point = dual_map(f, &x)?;
            Ok(DualSample {
                preimage: x,
                point,
                margin: d.margin,
                immersed: d.immersed,
            })
        })
        .collect();
    Ok(DualCloud { samples: samples? })
}

/// Restricted differential of the Gauss map on `D`, in the Fubini-Study metric.
#[derive(Debug, Clone, Serialize)]
pub struct GaussDifferential {
    pub singular_values: Vec<f64>,
    pub margin: f64,
}

pub fn gauss_differential_on_d(f: &dyn DefiningFunction, x: &RVec) -> Result<GaussDifferential> {
    let frame = cr_frame(f, x)?;
    let hess = f.hessian(x);
    let r = frame.real_basis();
    let g = &frame.complex_gradient;
    let cols: Vec<CVec> = (0..r.ncols())
        .map(|a| {
            let hv = &hess * r.column(a);
            let dg = CVec::from_fn(g.len(), |k, _| {
                Complex64::new(hv[2 * k], -hv[2 * k + 1]) * 0.5
            });
            fs_tangent(g, &dg)
        })
        .collect();
    let singular_values = linalg::singular_values(&stack_real(&cols));
    let margin = singular_values.last().copied().unwrap_or(0.0);
    Ok(GaussDifferential {
        singular_values,
        margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{adapted_frame_and_graph, project_to_hypersurface, Builtin};

    fn rv(v: &[f64]) -> RVec {
        RVec::from_vec(v.to_vec())
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sphere_gauss_map_is_conjugate_point() {
        let s = Builtin::sphere(2);
        let x = project_to_hypersurface(&s, &rv(&[0.3, 0.4, -0.5, 0.2])).unwrap();
        let z = linalg::to_complex(&x);
        let expected = ProjectivePoint::new(z.map(|v| v.conj())).unwrap();
        assert!(gauss_map(&s, &x).unwrap().distance(&expected) < 1e-14);
    }

    #[test]
    fn ellipsoid_axis_gauss_map() {
        let el = Builtin::ellipsoid(&[1.0, 1.5]);
        let g = gauss_map(&el, &rv(&[0.0, 0.0, 1.5, 0.0])).unwrap();
        let expected =
            ProjectivePoint::new(CVec::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)])).unwrap();
        assert!(g.distance(&expected) < 1e-15);
    }

    #[test]
    fn sphere_dual_point() {
        let s = Builtin::sphere(2);
        let x = project_to_hypersurface(&s, &rv(&[0.1, -0.7, 0.5, 0.3])).unwrap();
        let z = linalg::to_complex(&x);
        let expected =
            ProjectivePoint::new(CVec::from_vec(vec![c(-1.0, 0.0), z[0].conj(), z[1].conj()]))
                .unwrap();
        assert!(dual_map(&s, &x).unwrap().distance(&expected) < 1e-14);
    }

    #[test]
    fn ellipsoid_axis_dual_point() {
        // Tangent hyperplane at (a_1, 0) is {zeta_1 = a_1}: [-a_1 : 1 : 0].
        for a1 in [1.0, 0.7] {
            let el = Builtin::ellipsoid(&[a1, 1.5]);
            let d = dual_map(&el, &rv(&[a1, 0.0, 0.0, 0.0])).unwrap();
            let expected =
                ProjectivePoint::new(CVec::from_vec(vec![c(-a1, 0.0), c(1.0, 0.0), c(0.0, 0.0)]))
                    .unwrap();
            assert!(d.distance(&expected) < 1e-15);
        }
    }

    #[test]
    fn dual_last_component_has_unit_t_derivative() {
        let p = Builtin::PerturbedSphere {
            n: 2,
            epsilon: 0.05,
            m: 2,
        };
        let x = project_to_hypersurface(&p, &rv(&[0.2, 0.6, -0.5, 0.4])).unwrap();
        let chart = adapted_frame_and_graph(&p, &x).unwrap();
        let h = 1e-5;
        let plus = chart_dual_last_component(&chart, &rv(&[0.0, 0.0, h])).unwrap();
        let minus = chart_dual_last_component(&chart, &rv(&[0.0, 0.0, -h])).unwrap();
        let d = (plus - minus) / (2.0 * h);
        assert!((d - c(-1.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn normalization_is_representative_independent() {
        let v = CVec::from_vec(vec![c(0.0, 0.0), c(0.3, -0.4), c(1.0, 2.0)]);
        let a = ProjectivePoint::new(v.clone()).unwrap();
        let b = ProjectivePoint::new(v * c(-2.0, 0.7)).unwrap();
        assert!((a.coords() - b.coords()).norm() < 1e-15);
        let again = ProjectivePoint::new(a.coords().clone()).unwrap();
        assert!((again.coords() - a.coords()).norm() < 1e-15);
        assert!(a.coords()[1].im.abs() < 1e-16 && a.coords()[1].re > 0.0);
    }

    #[test]
    fn quartic_model_dual_fails_at_flat_point() {
        let q = Builtin::QuarticModel { n: 2 };
        let d0 = dual_differential(&q, &rv(&[0.0; 4])).unwrap();
        assert!(!d0.immersed);
        assert_eq!(d0.d_block_zero_count, 2);
        let mut last = f64::INFINITY;
        for r in [0.3, 0.1, 0.03, 0.01] {
            let x = project_to_hypersurface(&q, &rv(&[r, 0.0, 0.0, 0.0])).unwrap();
            let d = dual_differential(&q, &x).unwrap();
            let block_min = *d.d_block_singular_values.last().unwrap();
            assert!(block_min < last);
            last = block_min;
        }
    }

    #[test]
    fn fixed_chart_at_infinity_is_invalid() {
        let s = Builtin::sphere(2);
        // At (1, 0) the dual point [-1 : 1 : 0] is at infinity of chart 2.
        let e = dual_differential_in_chart(&s, &rv(&[1.0, 0.0, 0.0, 0.0]), 2).unwrap_err();
        assert!(matches!(e, Error::ChartInvalid { chart: 2 }));
    }
}
