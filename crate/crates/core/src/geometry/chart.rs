//! Graph charts: after a unitary change of coordinates sending `x` to the
//! origin, `D_x` to `{z_N = 0}` and `T_xM` to `{y_N = 0}`, the hypersurface is
//! locally the graph `(w, t) -> (w, t + i phi(w, t))`.

use num_complex::Complex64;

use super::frame::{cr_frame, CrFrame};
use super::function::DefiningFunction;
use crate::error::{Error, Result};
use crate::linalg::{self, to_real, CVec, RMat, RVec};

const GRAPH_MAX_ITER: usize = 20;
const GRAPH_TOL: f64 = 1e-12;
const MAX_HALVINGS: usize = 40;

/// `phi` and its first two derivatives at a chart point. Derivatives are taken
/// with respect to `(u_1, v_1, ..., u_{N-1}, v_{N-1}, t)`, `w_j = u_j + i v_j`.
#[derive(Debug, Clone)]
pub struct GraphValue {
    pub value: f64,
    pub gradient: RVec,
    pub hessian: RMat,
    pub iterations: usize,
}

impl GraphValue {
    /// Complex derivatives `d phi / d w_j = (phi_{u_j} - i phi_{v_j}) / 2`.
    pub fn dw(&self) -> CVec {
        let m = (self.gradient.len() - 1) / 2;
        CVec::from_fn(m, |j, _| {
            Complex64::new(self.gradient[2 * j], -self.gradient[2 * j + 1]) * 0.5
        })
    }

    pub fn dt(&self) -> f64 {
        self.gradient[self.gradient.len() - 1]
    }

    /// Hessian of `w -> phi(w, t)`, the `(2N-2)`-square leading block.
    pub fn hessian_w(&self) -> RMat {
        let m = self.hessian.nrows() - 1;
        self.hessian.view((0, 0), (m, m)).into_owned()
    }
}

pub struct GraphChart<'a> {
    f: &'a dyn DefiningFunction,
    pub frame: CrFrame,
    /// Unitary columns `e_1, ..., e_{N-1}, e_N = -i * normal`.
    pub unitary: Vec<CVec>,
    /// Real directions of `u_1, v_1, ..., t` in ambient coordinates.
    directions: RMat,
    pub radius: f64,
}

impl<'a> GraphChart<'a> {
    pub fn origin(&self) -> &RVec {
        &self.frame.point
    }

    pub fn chart_dim(&self) -> usize {
        self.directions.ncols()
    }

    /// Ambient point `x + sum_j w_j e_j + (t + i s) e_N` for chart coordinates
    /// `q = (u, v, t)` and height `s`.
    pub fn ambient(&self, q: &RVec, height: f64) -> RVec {
        &self.frame.point + &self.directions * q + &self.frame.normal * height
    }

    /// Inverse of [`ambient`](Self::ambient): `(q, height)`.
    pub fn coordinates(&self, x: &RVec) -> (RVec, f64) {
        let d = x - &self.frame.point;
        (self.directions.transpose() * &d, self.frame.normal.dot(&d))
    }

    /// Chart coordinates `z' = U^H (z - x)` of an ambient point, as a complex vector.
    pub fn complex_coordinates(&self, x: &RVec) -> CVec {
        let d = linalg::to_complex(&(x - &self.frame.point));
        CVec::from_fn(self.unitary.len(), |k, _| {
            linalg::hdot(&d, &self.unitary[k])
        })
    }

    /// Point `psi(w, t)` of `M`.
    pub fn psi(&self, q: &RVec) -> Result<RVec> {
        let g = self.evaluate(q)?;
        Ok(self.ambient(q, g.value))
    }

    pub fn evaluate(&self, q: &RVec) -> Result<GraphValue> {
        let r = q.norm();
        if r > self.radius * (1.0 + 1e-12) {
            return Err(Error::ChartRadiusExceeded {
                radius: self.radius,
                requested: r,
            });
        }
        self.solve(q)
    }

    fn solve(&self, q: &RVec) -> Result<GraphValue> {
        let scale = self.f.scale();
        let base = &self.frame.point + &self.directions * q;
        let nrm = &self.frame.normal;
        let mut s = 0.0;
        let mut residual = f64::INFINITY;
        for it in 0..GRAPH_MAX_ITER {
            let p = &base + nrm * s;
            let rho = self.f.value(&p);
            let g = self.f.gradient(&p);
            let slope = g.dot(nrm);
            residual = rho.abs();
            let converged = residual <= GRAPH_TOL * scale;
            if !(slope > 0.1 * g.norm()) || s.abs() > r_bound(q) {
                break;
            }
            if converged {
                // One polishing step brings the height to rounding level.
                let s = s - rho / slope;
                let p = &base + nrm * s;
                let g = self.f.gradient(&p);
                let slope = g.dot(nrm);
                return Ok(self.derivatives(q, s, &p, &g, slope, it + 1));
            }
            s -= rho / slope;
        }
        Err(Error::NoConvergence {
            what: "graph chart",
            iterations: GRAPH_MAX_ITER,
            residual,
        })
    }

    fn derivatives(
        &self,
        q: &RVec,
        s: f64,
        p: &RVec,
        g: &RVec,
        slope: f64,
        iterations: usize,
    ) -> GraphValue {
        let m = q.len();
        let nrm = &self.frame.normal;
        let gradient = RVec::from_fn(m, |a, _| -g.dot(&self.directions.column(a)) / slope);
        // Total derivatives of the surface point along each chart coordinate.
        let mut v = RMat::zeros(p.len(), m);
        for a in 0..m {
            let col = self.directions.column(a) + nrm * gradient[a];
            v.column_mut(a).copy_from(&col);
        }
        let h = self.f.hessian(p);
        let hessian = -(v.transpose() * h * &v) / slope;
        GraphValue {
            value: s,
            gradient,
            hessian: (&hessian + hessian.transpose()) * 0.5,
            iterations,
        }
    }
}

/// The graph over a tangent ball of radius `r` stays within height `r` on the
/// branch through the origin.
fn r_bound(q: &RVec) -> f64 {
    q.norm() + 1e-12
}

/// Adapted unitary frame at `x` and the graph chart of `M` over `T_xM`.
pub fn adapted_frame_and_graph<'a>(
    f: &'a dyn DefiningFunction,
    x: &RVec,
) -> Result<GraphChart<'a>> {
    let frame = cr_frame(f, x)?;
    chart_from_frame(f, frame)
}

pub fn chart_from_frame(f: &dyn DefiningFunction, frame: CrFrame) -> Result<GraphChart<'_>> {
    let n = frame.complex_dim();
    let nc = frame.complex_normal();
    let en = nc.map(|c| c * Complex64::new(0.0, -1.0));
    let mut unitary = frame.basis.clone();
    unitary.push(en.clone());

    let mut directions = RMat::zeros(2 * n, 2 * n - 1);
    for (k, e) in frame.basis.iter().enumerate() {
        directions.column_mut(2 * k).copy_from(&to_real(e));
        directions
            .column_mut(2 * k + 1)
            .copy_from(&to_real(&e.map(|c| c * linalg::I)));
    }
    directions.column_mut(2 * n - 2).copy_from(&to_real(&en));

    let curvature = linalg::op_norm(&f.hessian(&frame.point)) / frame.gradient_norm;
    let mut radius = f.sample_radius();
    if curvature > 0.0 {
        radius = radius.min(0.5 / curvature);
    }
    let mut chart = GraphChart {
        f,
        frame,
        unitary,
        directions,
        radius,
    };
    let m = 2 * n - 1;
    let mut probes: Vec<RVec> = Vec::with_capacity(2 * m + 2);
    for a in 0..m {
        for sign in [1.0, -1.0] {
            let mut p = RVec::zeros(m);
            p[a] = sign;
            probes.push(p);
        }
    }
    let diag = RVec::from_element(m, 1.0 / (m as f64).sqrt());
    probes.push(diag.clone());
    probes.push(-diag);

    for _ in 0..MAX_HALVINGS {
        let ok = probes
            .iter()
            .all(|p| chart.solve(&(p * chart.radius)).is_ok());
        if ok {
            return Ok(chart);
        }
        chart.radius *= 0.5;
    }
    Err(Error::NoConvergence {
        what: "graph chart radius",
        iterations: MAX_HALVINGS,
        residual: chart.radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::frame::{project_to_hypersurface, shape_operator};
    use crate::geometry::function::Builtin;

    #[test]
    fn chart_is_centred_and_tangent() {
        let el = Builtin::ellipsoid(&[1.0, 1.5]);
        let x = project_to_hypersurface(&el, &RVec::from_vec(vec![0.5, 0.2, 0.7, -0.4])).unwrap();
        let c = adapted_frame_and_graph(&el, &x).unwrap();
        let g = c.evaluate(&RVec::zeros(3)).unwrap();
        assert!(g.value.abs() < 1e-15);
        assert!(g.gradient.amax() < 1e-12);
    }

    #[test]
    fn sphere_graph_matches_closed_form() {
        let s = Builtin::sphere(2);
        let x = RVec::from_vec(vec![0.6, 0.0, 0.0, 0.8]);
        let c = adapted_frame_and_graph(&s, &x).unwrap();
        let q = RVec::from_vec(vec![0.1, -0.2, 0.15]);
        let g = c.evaluate(&q).unwrap();
        let expected = -1.0 + (1.0 - q.norm_squared()).sqrt();
        assert!(
            (g.value - expected).abs() < 1e-14,
            "{} vs {}",
            g.value,
            expected
        );
        let h0 = c.evaluate(&RVec::zeros(3)).unwrap();
        assert!((h0.hessian_w() + RMat::identity(2, 2)).amax() < 1e-13);
    }

    #[test]
    fn shape_operator_is_minus_graph_hessian() {
        let p = Builtin::PerturbedSphere {
            n: 2,
            epsilon: 0.05,
            m: 2,
        };
        let x = project_to_hypersurface(&p, &RVec::from_vec(vec![0.5, 0.4, -0.3, 0.6])).unwrap();
        let c = adapted_frame_and_graph(&p, &x).unwrap();
        let hw = c.evaluate(&RVec::zeros(3)).unwrap().hessian_w();
        let so = shape_operator(&p, &x).unwrap();
        assert!((hw + so.matrix).amax() < 1e-12);
    }

    #[test]
    fn query_outside_radius_is_rejected() {
        let s = Builtin::sphere(2);
        let x = RVec::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let c = adapted_frame_and_graph(&s, &x).unwrap();
        let q = RVec::from_vec(vec![c.radius * 1.5, 0.0, 0.0]);
        assert!(matches!(
            c.evaluate(&q),
            Err(Error::ChartRadiusExceeded { .. })
        ));
    }

    #[test]
    fn complex_coordinates_recover_chart_point() {
        let el = Builtin::ellipsoid(&[1.0, 1.5, 0.7]);
        let x = project_to_hypersurface(&el, &RVec::from_vec(vec![0.3, 0.1, 0.5, 0.2, -0.2, 0.4]))
            .unwrap();
        let c = adapted_frame_and_graph(&el, &x).unwrap();
        let q = RVec::from_vec(vec![0.02, -0.03, 0.01, 0.04, -0.02]);
        let p = c.psi(&q).unwrap();
        let z = c.complex_coordinates(&p);
        let g = c.evaluate(&q).unwrap();
        assert!((z[0] - Complex64::new(q[0], q[1])).norm() < 1e-13);
        assert!((z[1] - Complex64::new(q[2], q[3])).norm() < 1e-13);
        assert!((z[2] - Complex64::new(q[4], g.value)).norm() < 1e-13);
    }
}
