//! Pencils of hyperplanes `L = {lambda H_0 + mu H_1}` in `CP^N` and their
//! induced maps `phi_L = [H_0 : H_1]` on `M`.
//!
//! Covectors are affine: `H(z) = h_0 + sum_j h_j z_j`, i.e. `H` evaluated on
//! the homogeneous lift `(1, z)`. This is the same convention as the dual map,
//! so a dual point lies on `L` exactly when the tangent complex hyperplane is a
//! member of the pencil.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::critical::CriticalCurve;
use crate::dual::{self, dual_tangent_columns, fs_tangent, stack_real, DualCloud, ProjectivePoint};
use crate::error::{Error, Result};
use crate::geometry::{cr_frame, CrFrame, DefiningFunction};
use crate::linalg::{self, cnorm, hdot, pair, to_complex, to_real, CVec, RMat, RVec};

/// Default threshold for every transversality margin.
pub const TRANSVERSALITY_THRESHOLD: f64 = 1e-6;
/// Distance from the base locus below which `phi_L` is undefined.
pub const BASE_LOCUS_TOL: f64 = 1e-10;
const MIN_SINE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Pencil {
    h0: CVec,
    h1: CVec,
    /// Orthonormal basis of the orthogonal complement of the base locus in
    /// `C^{N+1}` (the span of the conjugated covectors).
    complement: [CVec; 2],
    sine: f64,
}

fn unit(v: &CVec) -> CVec {
    v / Complex64::new(cnorm(v), 0.0)
}

/// Sine of the hermitian angle between two nonzero vectors.
fn complex_sine(a: &CVec, b: &CVec) -> f64 {
    let ua = unit(a);
    let ub = unit(b);
    let p = hdot(&ub, &ua);
    cnorm(&(&ub - &ua * p)).min(1.0)
}

impl Pencil {
    /// Pencil spanned by two homogeneous covectors of length `N + 1`. Each
    /// covector is scaled to unit norm; the pair itself is kept as given so
    /// that `phi_L` is exactly `[H_0 : H_1]`.
    pub fn new(h0: CVec, h1: CVec) -> Result<Self> {
        if h0.len() != h1.len() || h0.len() < 3 {
            return Err(Error::Precondition(format!(
                "pencil covectors must have equal length N + 1 >= 3, got {} and {}",
                h0.len(),
                h1.len()
            )));
        }
        if !(cnorm(&h0) > 0.0) || !(cnorm(&h1) > 0.0) {
            return Err(Error::DependentPencil { sine: 0.0 });
        }
        let h0 = unit(&h0);
        let h1 = unit(&h1);
        let sine = complex_sine(&h0, &h1);
        if sine < MIN_SINE {
            return Err(Error::DependentPencil { sine });
        }
        let c0 = h0.map(|c| c.conj());
        let c1 = h1.map(|c| c.conj());
        let p = hdot(&c1, &c0);
        let c1 = unit(&(&c1 - &c0 * p));
        Ok(Pencil {
            h0,
            h1,
            complement: [c0, c1],
            sine,
        })
    }

    /// Pencil from affine forms `H_k(z) = a_k . z + b_k`.
    pub fn from_affine(a0: &CVec, b0: Complex64, a1: &CVec, b1: Complex64) -> Result<Self> {
        let lift = |a: &CVec, b: Complex64| {
            let mut h = CVec::zeros(a.len() + 1);
            h[0] = b;
            h.rows_mut(1, a.len()).copy_from(a);
            h
        };
        Pencil::new(lift(a0, b0), lift(a1, b1))
    }

    /// `H_0 = Z_N`, `H_1 = Z_0`: the induced map is the last coordinate.
    pub fn axis(n: usize) -> Self {
        let mut h0 = CVec::zeros(n + 1);
        let mut h1 = CVec::zeros(n + 1);
        h0[n] = Complex64::new(1.0, 0.0);
        h1[0] = Complex64::new(1.0, 0.0);
        Pencil::new(h0, h1).expect("independent")
    }

    /// `H_0 = Z_1`, `H_1 = Z_2`: base locus `{z_1 = z_2 = 0}` through the origin.
    pub fn origin_base(n: usize) -> Self {
        let mut h0 = CVec::zeros(n + 1);
        let mut h1 = CVec::zeros(n + 1);
        h0[1] = Complex64::new(1.0, 0.0);
        h1[2] = Complex64::new(1.0, 0.0);
        Pencil::new(h0, h1).expect("independent")
    }

    pub fn h0(&self) -> &CVec {
        &self.h0
    }

    pub fn h1(&self) -> &CVec {
        &self.h1
    }

    pub fn complex_dim(&self) -> usize {
        self.h0.len() - 1
    }

    /// Sine of the angle between `H_0` and `H_1`.
    pub fn sine(&self) -> f64 {
        self.sine
    }

    /// Linear parts `(a_0, a_1)`.
    pub fn linear_parts(&self) -> (CVec, CVec) {
        let n = self.complex_dim();
        (
            self.h0.rows(1, n).into_owned(),
            self.h1.rows(1, n).into_owned(),
        )
    }

    /// `(H_0(x), H_1(x))` on the homogeneous lift `(1, x)`.
    pub fn evaluate(&self, x: &RVec) -> (Complex64, Complex64) {
        let z = to_complex(x);
        let n = z.len();
        let e = |h: &CVec| h[0] + pair(&h.rows(1, n).into_owned(), &z);
        (e(&self.h0), e(&self.h1))
    }

    /// Fubini-Study distance from `[1 : x]` to the base locus.
    pub fn base_distance(&self, x: &RVec) -> f64 {
        let z = to_complex(x);
        let mut lift = CVec::zeros(z.len() + 1);
        lift[0] = Complex64::new(1.0, 0.0);
        lift.rows_mut(1, z.len()).copy_from(&z);
        let lift = unit(&lift);
        self.complement
            .iter()
            .map(|c| hdot(&lift, c).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    fn check_off_base(&self, x: &RVec) -> Result<()> {
        let d = self.base_distance(x);
        if d <= BASE_LOCUS_TOL {
            Err(Error::OnBaseLocus { distance: d })
        } else {
            Ok(())
        }
    }

    /// Pencil member `beta H_0 - alpha H_1` whose zero set is the closure of
    /// the fiber over `a = [alpha : beta]`.
    pub fn member(&self, a: &ProjectivePoint) -> CVec {
        let c = a.coords();
        &self.h0 * c[1] - &self.h1 * c[0]
    }

    /// Same pencil with both covectors multiplied by `c`.
    pub fn scaled(&self, c: Complex64) -> Result<Self> {
        Pencil::new(&self.h0 * c, &self.h1 * c)
    }

    /// Orthonormal basis of the line `L` in `C^{N+1}` (as covectors).
    pub fn line_basis(&self) -> [CVec; 2] {
        let p = hdot(&self.h1, &self.h0);
        [self.h0.clone(), unit(&(&self.h1 - &self.h0 * p))]
    }
}

/// `phi_L(x) = [H_0(x) : H_1(x)]`.
pub fn induced_map(p: &Pencil, x: &RVec) -> Result<ProjectivePoint> {
    p.check_off_base(x)?;
    let (a, b) = p.evaluate(x);
    Ok(ProjectivePoint::new(CVec::from_vec(vec![a, b])).expect("off the base locus"))
}

/// Active affine chart of `CP^1` and the value of `phi_L` in it. Chart `1`
/// is `Phi = H_0 / H_1` (used when `|H_1| >= |H_0|`), chart `0` is `H_1 / H_0`.
pub fn affine_value(p: &Pencil, x: &RVec) -> Result<(usize, Complex64)> {
    p.check_off_base(x)?;
    let (a, b) = p.evaluate(x);
    if b.norm() >= a.norm() {
        Ok((1, a / b))
    } else {
        Ok((0, b / a))
    }
}

/// Chart-free criticality covector `W = H_1(x) a_0 - H_0(x) a_1`. The
/// holomorphic differential of `H_0 / H_1` is `W / H_1^2`.
pub fn criticality_covector(p: &Pencil, x: &RVec) -> CVec {
    let (a0, a1) = p.linear_parts();
    let (v0, v1) = p.evaluate(x);
    &a0 * v1 - &a1 * v0
}

/// `d Phi / d z` in the active chart.
pub fn holomorphic_differential(p: &Pencil, x: &RVec) -> Result<CVec> {
    let (chart, _) = affine_value(p, x)?;
    let (v0, v1) = p.evaluate(x);
    let w = criticality_covector(p, x);
    Ok(if chart == 1 {
        w / (v1 * v1)
    } else {
        -w / (v0 * v0)
    })
}

/// Components `d Phi(e_j)` of the derivative of `phi_L` along `D` in the CR
/// frame basis.
pub fn derivative_along_d(f: &dyn DefiningFunction, p: &Pencil, x: &RVec) -> Result<CVec> {
    let d = holomorphic_differential(p, x)?;
    let frame = cr_frame(f, x)?;
    Ok(CVec::from_iterator(
        frame.basis.len(),
        frame.basis.iter().map(|e| pair(&d, e)),
    ))
}

/// Part of `conj(W) / |W|` hermitian-orthogonal to the unit complex normal.
/// Vanishes exactly on the critical set.
pub(crate) fn normalized_criticality(p: &Pencil, frame: &CrFrame) -> CVec {
    let u = criticality_covector(p, &frame.point).map(|c| c.conj());
    let nu = cnorm(&u);
    let nc = frame.complex_normal();
    let q = &u - &nc * hdot(&u, &nc);
    if nu > 0.0 {
        q / Complex64::new(nu, 0.0)
    } else {
        q
    }
}

/// Real `2 x (2N-1)` matrix of `d phi_L` on the frame basis of `T_xM`, in
/// the Fubini-Study metric of `CP^1`.
fn induced_differential(p: &Pencil, frame: &CrFrame) -> RMat {
    let w = criticality_covector(p, &frame.point);
    let (v0, v1) = p.evaluate(&frame.point);
    let denom = v0.norm_sqr() + v1.norm_sqr();
    let t = frame.tangent_basis();
    let mut m = RMat::zeros(2, t.ncols());
    for a in 0..t.ncols() {
        let d = pair(&w, &to_complex(&t.column(a).into_owned())) / denom;
        m[(0, a)] = d.re;
        m[(1, a)] = d.im;
    }
    m
}

/// Norm of `d phi_L` on `T_xM`.
pub fn full_gradient_margin(p: &Pencil, frame: &CrFrame) -> f64 {
    linalg::op_norm(&induced_differential(p, frame))
}

/// Smallest singular value of `d phi_L` on `T_xM`; positive iff `phi_L` is a
/// submersion at `x`.
pub fn submersion_margin(p: &Pencil, frame: &CrFrame) -> f64 {
    linalg::kth_singular_value(&induced_differential(p, frame), 2)
}

#[derive(Debug, Clone, Serialize)]
pub struct BaseTransversality {
    /// `B = B~ ∩ M` is empty (including a base locus at infinity).
    pub empty: bool,
    pub base_points: usize,
    /// Minimum over `B` of the smallest singular value of the stacked unit
    /// normal of `M` and the four real base equations; `None` when `B` is empty.
    pub margin: Option<f64>,
    /// Smallest `|rho|` found on the affine base locus, when it is finite.
    pub min_residual: Option<f64>,
    pub worst_point: Option<Vec<f64>>,
    pub threshold: f64,
    pub pass: bool,
}

/// Affine base locus `z_p + V s` with `V` complex-orthonormal.
struct AffineBase {
    point: CVec,
    directions: Vec<CVec>,
    /// Orthonormal covectors spanning the base equations, conjugated.
    normals: [CVec; 2],
}

fn affine_base(p: &Pencil) -> Option<AffineBase> {
    let (a0, a1) = p.linear_parts();
    if cnorm(&a0) < 1e-12 || cnorm(&a1) < 1e-12 || complex_sine(&a0, &a1) < MIN_SINE {
        return None;
    }
    let n = p.complex_dim();
    // Orthonormal basis of span{conj a_0, conj a_1} and the equations in it.
    let c0 = a0.map(|c| c.conj());
    let c1 = a1.map(|c| c.conj());
    let u0 = unit(&c0);
    let u1 = unit(&(&c1 - &u0 * hdot(&c1, &u0)));
    // Minimum-norm solution of a_k . z = -b_k lies in span{u0, u1}.
    let g = nalgebra::Matrix2::new(
        pair(&a0, &u0),
        pair(&a0, &u1),
        pair(&a1, &u0),
        pair(&a1, &u1),
    );
    let rhs = nalgebra::Vector2::new(-p.h0()[0], -p.h1()[0]);
    let coef = g.try_inverse()? * rhs;
    let point = &u0 * coef[0] + &u1 * coef[1];
    let mut directions: Vec<CVec> = Vec::new();
    for k in 0..n {
        if directions.len() == n - 2 {
            break;
        }
        let mut v = CVec::zeros(n);
        v[k] = Complex64::new(1.0, 0.0);
        for q in [&u0, &u1].into_iter().chain(directions.iter()) {
            let c = hdot(&v, q);
            v -= q * c;
        }
        let nv = cnorm(&v);
        if nv > 1e-6 {
            directions.push(v / Complex64::new(nv, 0.0));
        }
    }
    Some(AffineBase {
        point,
        directions,
        normals: [u0, u1],
    })
}

impl AffineBase {
    fn real_dim(&self) -> usize {
        2 * self.directions.len()
    }

    fn embedding(&self) -> RMat {
        let n = self.point.len();
        let mut m = RMat::zeros(2 * n, self.real_dim());
        for (k, v) in self.directions.iter().enumerate() {
            m.column_mut(2 * k).copy_from(&to_real(v));
            m.column_mut(2 * k + 1)
                .copy_from(&to_real(&v.map(|c| c * linalg::I)));
        }
        m
    }

    fn ambient(&self, emb: &RMat, s: &RVec) -> RVec {
        to_real(&self.point) + emb * s
    }

    /// Smallest singular value of `[grad rho / |grad rho|; base rows]`.
    fn margin_at(&self, f: &dyn DefiningFunction, x: &RVec) -> f64 {
        let g = f.gradient(x);
        let n2 = x.len();
        let mut m = RMat::zeros(5, n2);
        m.row_mut(0).copy_from(&(&g / g.norm()).transpose());
        for (k, u) in self.normals.iter().enumerate() {
            m.row_mut(1 + 2 * k).copy_from(&to_real(u).transpose());
            m.row_mut(2 + 2 * k)
                .copy_from(&to_real(&u.map(|c| c * linalg::I)).transpose());
        }
        linalg::kth_singular_value(&m, 5)
    }
}

/// Locates `B = B~ ∩ M` and measures the transversality of the base locus
/// to `M`.
pub fn base_transversality(
    f: &dyn DefiningFunction,
    p: &Pencil,
    sample_count: usize,
    rng_seed: u64,
    threshold: f64,
) -> BaseTransversality {
    let scale = f.scale();
    let tol = 1e-9 * scale;
    let empty = |min_residual: Option<f64>| BaseTransversality {
        empty: true,
        base_points: 0,
        margin: None,
        min_residual,
        worst_point: None,
        threshold,
        pass: true,
    };
    let Some(base) = affine_base(p) else {
        return empty(None);
    };
    let emb = base.embedding();
    let mut points: Vec<RVec> = Vec::new();
    let min_value;
    if base.real_dim() == 0 {
        let x = to_real(&base.point);
        min_value = f.value(&x);
        if min_value.abs() <= tol {
            points.push(x);
        }
    } else {
        let center = emb.transpose() * (f.sample_center() - to_real(&base.point));
        let half = 1.2 * f.sample_radius();
        let seeds: Vec<RVec> = (0..sample_count)
            .map(|k| {
                use rand::Rng;
                let mut rng = crate::rng::substream(rng_seed, "base-locus", k as u64);
                RVec::from_fn(center.len(), |i, _| {
                    center[i] + half * (2.0 * rng.random::<f64>() - 1.0)
                })
            })
            .collect();
        // Lowest value of rho on the base locus, from a few descents.
        let minima: Vec<(f64, RVec)> = seeds
            .par_iter()
            .take(8)
            .map(|s| restricted_minimum(f, &base, &emb, s))
            .collect();
        let (mv, arg) = minima
            .into_iter()
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((f64::INFINITY, RVec::zeros(0)));
        min_value = mv;
        if mv.abs() <= tol {
            points.push(base.ambient(&emb, &arg));
        } else if mv < 0.0 {
            let zeros: Vec<Option<RVec>> = seeds
                .par_iter()
                .map(|s| restricted_zero(f, &base, &emb, s, scale))
                .collect();
            for z in zeros.into_iter().flatten() {
                if points.iter().all(|q| (q - &z).norm() > 1e-6 * scale) {
                    points.push(z);
                }
            }
        }
    }
    if points.is_empty() {
        return empty(Some(min_value.abs()));
    }
    let mut margin = f64::INFINITY;
    let mut worst = points[0].clone();
    for x in &points {
        let m = base.margin_at(f, x);
        if m < margin {
            margin = m;
            worst = x.clone();
        }
    }
    BaseTransversality {
        empty: false,
        base_points: points.len(),
        margin: Some(margin),
        min_residual: Some(min_value.abs().min(tol)),
        worst_point: Some(worst.iter().copied().collect()),
        threshold,
        pass: margin > threshold,
    }
}

/// Damped Newton descent of `rho` restricted to the base locus.
fn restricted_minimum(
    f: &dyn DefiningFunction,
    base: &AffineBase,
    emb: &RMat,
    s0: &RVec,
) -> (f64, RVec) {
    let mut s = s0.clone();
    let mut val = f.value(&base.ambient(emb, &s));
    for _ in 0..200 {
        let x = base.ambient(emb, &s);
        let g = emb.transpose() * f.gradient(&x);
        if g.norm() < 1e-15 * f.scale().max(1.0) {
            break;
        }
        let h = emb.transpose() * f.hessian(&x) * emb;
        let (ev, _) = linalg::sym_eigen(&h);
        let mut step = if ev[0] > 1e-12 {
            -h.clone().lu().solve(&g).unwrap_or_else(|| -&g)
        } else {
            -&g
        };
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &s + &step;
            let v = f.value(&base.ambient(emb, &cand));
            if v < val || (v - val).abs() <= 1e-15 * val.abs().max(1.0) {
                accepted = v <= val;
                if accepted {
                    s = cand;
                    val = v;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || step.norm() < 1e-14 {
            break;
        }
    }
    (val, s)
}

/// Newton iteration for a zero of `rho` on the base locus (minimum-norm steps).
fn restricted_zero(
    f: &dyn DefiningFunction,
    base: &AffineBase,
    emb: &RMat,
    s0: &RVec,
    scale: f64,
) -> Option<RVec> {
    let mut s = s0.clone();
    for _ in 0..60 {
        let x = base.ambient(emb, &s);
        let v = f.value(&x);
        if v.abs() <= 1e-13 * scale {
            return Some(x);
        }
        let g = emb.transpose() * f.gradient(&x);
        let gg = g.norm_squared();
        if gg < 1e-24 {
            return None;
        }
        let step = &g * (-v / gg);
        let cap = 0.25 * f.sample_radius();
        let sn = step.norm();
        s += if sn > cap { step * (cap / sn) } else { step };
    }
    None
}

/// Transversality of `L` to the dual hypersurface, measured on dual-cloud data.
#[derive(Debug, Clone, Serialize)]
pub struct DualTransversality {
    pub candidates: usize,
    /// Distinct points of `M` whose dual point was driven onto `L`.
    pub intersections: usize,
    /// Minimum over intersections of the component of `TL` normal to the
    /// branch `d nu(T_xM)`; `None` when `L` misses the sampled dual set.
    pub margin: Option<f64>,
    /// Smallest distance from `L` over the cloud before refinement.
    pub min_cloud_distance: f64,
    pub worst_point: Option<Vec<f64>>,
    pub threshold: f64,
    pub pass: bool,
}

fn distance_to_line(line: &[CVec; 2], u: &CVec) -> CVec {
    let mut r = u.clone();
    for l in line {
        let c = hdot(u, l);
        r -= l * c;
    }
    r
}

/// Candidates are cloud points within five mean nearest-neighbour distances
/// of `L`, together with the closest few; each is refined on `M` until its
/// dual point lies on `L`, and the branch through it is compared with `L`.
pub fn dual_transversality(
    f: &dyn DefiningFunction,
    p: &Pencil,
    cloud: &DualCloud,
    threshold: f64,
) -> Result<DualTransversality> {
    let line = p.line_basis();
    let dists: Vec<f64> = cloud
        .samples
        .iter()
        .map(|s| cnorm(&distance_to_line(&line, s.point.coords())))
        .collect();
    let radius = 5.0 * cloud.mean_nearest_neighbor();
    let mut order: Vec<usize> = (0..dists.len()).collect();
    order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
    let candidates: Vec<usize> = order
        .iter()
        .copied()
        .enumerate()
        .filter(|&(rank, k)| rank < 8 || dists[k] <= radius)
        .map(|(_, k)| k)
        .take(64)
        .collect();
    let refined: Vec<Option<RVec>> = candidates
        .par_iter()
        .map(|&k| refine_onto_line(f, &line, &cloud.samples[k].preimage))
        .collect();
    let scale = f.scale();
    let mut hits: Vec<RVec> = Vec::new();
    for x in refined.into_iter().flatten() {
        if hits.iter().all(|q| (q - &x).norm() > 1e-6 * scale) {
            hits.push(x);
        }
    }
    let mut margin: Option<f64> = None;
    let mut worst = None;
    for x in &hits {
        let m = branch_margin(f, &line, x)?;
        if margin.is_none_or(|b| m < b) {
            margin = Some(m);
            worst = Some(x.iter().copied().collect());
        }
    }
    Ok(DualTransversality {
        candidates: candidates.len(),
        intersections: hits.len(),
        margin,
        min_cloud_distance: dists.iter().copied().fold(f64::INFINITY, f64::min),
        worst_point: worst,
        threshold,
        pass: margin.is_none_or(|m| m > threshold),
    })
}

fn line_residual(f: &dyn DefiningFunction, line: &[CVec; 2], x: &RVec) -> Result<(RVec, RMat)> {
    let frame = cr_frame(f, x)?;
    let hess = f.hessian(x);
    let h = dual::homogeneous(&frame);
    let nh = cnorm(&h);
    let u = &h / Complex64::new(nh, 0.0);
    let r = distance_to_line(line, &u);
    let m = r.len();
    let mut res = RVec::zeros(1 + 2 * m);
    res[0] = f.value(x) / f.scale();
    res.rows_mut(1, 2 * m).copy_from(&to_real(&r));
    let mut jac = RMat::zeros(1 + 2 * m, x.len());
    let g = f.gradient(x);
    for k in 0..x.len() {
        let mut v = RVec::zeros(x.len());
        v[k] = 1.0;
        let dh = dual::homogeneous_derivative(&frame, &hess, &v);
        let du = fs_tangent(&h, &dh);
        let dr = distance_to_line(line, &du);
        jac[(0, k)] = g[k] / f.scale();
        jac.view_mut((1, k), (2 * m, 1)).copy_from(&to_real(&dr));
    }
    Ok((res, jac))
}

fn refine_onto_line(f: &dyn DefiningFunction, line: &[CVec; 2], x0: &RVec) -> Option<RVec> {
    let mut x = x0.clone();
    let cap = 0.1 * f.sample_radius();
    for _ in 0..100 {
        let (r, j) = line_residual(f, line, &x).ok()?;
        if r.norm() <= 1e-13 {
            return Some(x);
        }
        let step = linalg::lstsq(&j, &(-&r));
        let sn = step.norm();
        if !sn.is_finite() {
            return None;
        }
        x += if sn > cap { step * (cap / sn) } else { step };
        if sn < 1e-16 * f.scale() {
            break;
        }
    }
    let (r, _) = line_residual(f, line, &x).ok()?;
    (r.norm() <= 1e-10).then_some(x)
}

/// Size of the component of `TL` normal to the branch of the dual
/// hypersurface through `nu(x)`, Fubini-Study metric.
fn branch_margin(f: &dyn DefiningFunction, line: &[CVec; 2], x: &RVec) -> Result<f64> {
    let frame = cr_frame(f, x)?;
    let (h, dh) = dual_tangent_columns(f, &frame);
    let u = unit(&h);
    let cols: Vec<CVec> = dh.iter().map(|d| fs_tangent(&h, d)).collect();
    let t = stack_real(&cols);
    let mut rows = RMat::zeros(t.ncols() + 2, t.nrows());
    rows.view_mut((0, 0), (t.ncols(), t.nrows()))
        .copy_from(&t.transpose());
    rows.row_mut(t.ncols()).copy_from(&to_real(&u).transpose());
    rows.row_mut(t.ncols() + 1)
        .copy_from(&to_real(&u.map(|c| c * linalg::I)).transpose());
    let normal = linalg::null_direction(&rows);
    let mut best: Option<CVec> = None;
    for l in line {
        let v = l - &u * hdot(l, &u);
        if best.as_ref().is_none_or(|b| cnorm(&v) > cnorm(b)) {
            best = Some(v);
        }
    }
    let l = unit(&best.expect("two basis vectors"));
    let a = to_real(&l).dot(&normal);
    let b = to_real(&l.map(|c| c * linalg::I)).dot(&normal);
    Ok((a * a + b * b).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct PencilVerdict {
    pub base: BaseTransversality,
    /// Dual-map immersion margins at the critical samples.
    pub immersion_margins: Vec<f64>,
    pub min_immersion_margin: Option<f64>,
    pub worst_immersion_point: Option<Vec<f64>>,
    pub immersion_pass: bool,
    /// Norms of `d phi_L` on `T_xM` at the critical samples.
    pub gradient_margins: Vec<f64>,
    pub min_gradient_margin: Option<f64>,
    pub worst_gradient_point: Option<Vec<f64>>,
    pub gradient_threshold: f64,
    pub gradient_pass: bool,
    pub pass: bool,
}

/// Base transversality, nondegeneracy on the critical set, and nonvanishing
/// of the full differential on the critical set.
pub fn lefschetz_verify(
    f: &dyn DefiningFunction,
    p: &Pencil,
    delta: &CriticalCurve,
    base_samples: usize,
    rng_seed: u64,
    threshold: f64,
) -> Result<PencilVerdict> {
    let base = base_transversality(f, p, base_samples, rng_seed, threshold);
    let per_sample: Result<Vec<(f64, bool, f64)>> = delta
        .points
        .par_iter()
        .map(|x| {
            let d = dual::dual_differential(f, x)?;
            let frame = cr_frame(f, x)?;
            Ok((d.margin, d.immersed, full_gradient_margin(p, &frame)))
        })
        .collect();
    let per_sample = per_sample?;
    let argmin = |key: &dyn Fn(&(f64, bool, f64)) -> f64| {
        per_sample
            .iter()
            .enumerate()
            .min_by(|a, b| key(a.1).total_cmp(&key(b.1)))
            .map(|(k, v)| {
                (
                    key(v),
                    delta.points[k].iter().copied().collect::<Vec<f64>>(),
                )
            })
    };
    let imm = argmin(&|v| v.0);
    let grad = argmin(&|v| v.2);
    let immersion_pass = per_sample.iter().all(|v| v.1);
    let gradient_pass = per_sample.iter().all(|v| v.2 > threshold);
    Ok(PencilVerdict {
        pass: base.pass && immersion_pass && gradient_pass,
        base,
        immersion_margins: per_sample.iter().map(|v| v.0).collect(),
        min_immersion_margin: imm.as_ref().map(|v| v.0),
        worst_immersion_point: imm.map(|v| v.1),
        immersion_pass,
        gradient_margins: per_sample.iter().map(|v| v.2).collect(),
        min_gradient_margin: grad.as_ref().map(|v| v.0),
        worst_gradient_point: grad.map(|v| v.1),
        gradient_threshold: threshold,
        gradient_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project_to_hypersurface, Builtin};

    fn rv(v: &[f64]) -> RVec {
        RVec::from_vec(v.to_vec())
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn axis_pencil_value_is_last_coordinate() {
        let p = Pencil::axis(2);
        let (chart, v) = affine_value(&p, &rv(&[0.6, 0.0, 0.8, 0.0])).unwrap();
        assert_eq!(chart, 1);
        assert!((v - c(0.8, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn base_locus_is_rejected() {
        let p = Pencil::origin_base(3);
        let e = induced_map(&p, &rv(&[0.0, 0.0, 0.0, 0.0, 0.7, 0.1])).unwrap_err();
        assert!(matches!(e, Error::OnBaseLocus { .. }));
    }

    #[test]
    fn value_is_chart_independent() {
        let el = Builtin::ellipsoid(&[1.0, 1.5]);
        let p = Pencil::new(
            CVec::from_vec(vec![c(0.3, -0.2), c(1.0, 0.5), c(-0.4, 0.9)]),
            CVec::from_vec(vec![c(-1.1, 0.1), c(0.2, 0.2), c(0.7, -0.3)]),
        )
        .unwrap();
        let x = project_to_hypersurface(&el, &rv(&[0.4, -0.3, 0.6, 0.9])).unwrap();
        let (a, b) = p.evaluate(&x);
        let q = induced_map(&p, &x).unwrap();
        let r1 = q.coords()[0] / q.coords()[1];
        let r0 = q.coords()[1] / q.coords()[0];
        assert!((r1 - a / b).norm() < 1e-12 * (a / b).norm().max(1.0));
        assert!((r0 * r1 - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn derivative_along_d_on_sphere() {
        let s = Builtin::sphere(2);
        let p = Pencil::axis(2);
        for th in [0.0, 1.0, 2.5] {
            let x = rv(&[0.0, 0.0, f64::cos(th), f64::sin(th)]);
            assert!(cnorm(&derivative_along_d(&s, &p, &x).unwrap()) < 1e-15);
        }
        let d = derivative_along_d(&s, &p, &rv(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!((cnorm(&d) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn base_at_infinity_is_empty() {
        let s = Builtin::sphere(2);
        let b = base_transversality(&s, &Pencil::axis(2), 20, 1, TRANSVERSALITY_THRESHOLD);
        assert!(b.empty && b.pass && b.margin.is_none());
    }

    #[test]
    fn origin_base_on_five_sphere() {
        let s = Builtin::sphere(3);
        let b = base_transversality(&s, &Pencil::origin_base(3), 20, 1, TRANSVERSALITY_THRESHOLD);
        assert!(!b.empty && b.pass);
        assert!((b.margin.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tangent_base_fails() {
        // Complex line through an ellipsoid point inside its complex tangent hyperplane.
        let el = Builtin::ellipsoid(&[1.0, 1.5, 1.2]);
        let x = project_to_hypersurface(&el, &rv(&[0.3, 0.2, 0.5, -0.4, 0.6, 0.1])).unwrap();
        let frame = cr_frame(&el, &x).unwrap();
        let z = to_complex(&x);
        let a0 = frame.complex_gradient.clone();
        let v = &frame.basis[0];
        let mut a1 = CVec::from_vec(vec![c(0.3, 0.1), c(-0.5, 0.2), c(0.4, 0.9)]);
        // Make a_1 annihilate v.
        let corr = pair(&a1, v);
        a1 -= v.map(|c| c.conj()) * corr;
        let p = Pencil::from_affine(&a0, -pair(&a0, &z), &a1, -pair(&a1, &z)).unwrap();
        let b = base_transversality(&el, &p, 30, 3, TRANSVERSALITY_THRESHOLD);
        assert!(!b.empty);
        assert!(!b.pass, "{b:?}");
    }

    #[test]
    fn criticality_matches_wedge_characterization() {
        let el = Builtin::ellipsoid(&[1.0, 1.5]);
        let p = Pencil::new(
            CVec::from_vec(vec![c(0.3, -0.2), c(1.0, 0.5), c(-0.4, 0.9)]),
            CVec::from_vec(vec![c(-1.1, 0.1), c(0.2, 0.2), c(0.7, -0.3)]),
        )
        .unwrap();
        let x = project_to_hypersurface(&el, &rv(&[0.4, -0.3, 0.6, 0.9])).unwrap();
        let d = derivative_along_d(&el, &p, &x).unwrap();
        let full = holomorphic_differential(&p, &x).unwrap();
        let g = cr_frame(&el, &x).unwrap().complex_gradient;
        // |dPhi ∧ d rho| / (|dPhi| |d rho|) is the sine of their angle.
        let wedge = (full[0] * g[1] - full[1] * g[0]).norm() / (cnorm(&full) * cnorm(&g));
        assert!((cnorm(&d) / cnorm(&full) - wedge).abs() < 1e-12);
    }

    #[test]
    fn scaling_the_pencil_keeps_values() {
        let p = Pencil::new(
            CVec::from_vec(vec![c(0.3, -0.2), c(1.0, 0.5), c(-0.4, 0.9)]),
            CVec::from_vec(vec![c(-1.1, 0.1), c(0.2, 0.2), c(0.7, -0.3)]),
        )
        .unwrap();
        let q = p.scaled(c(-3.0, 2.0)).unwrap();
        let x = rv(&[0.1, 0.2, -0.3, 0.4]);
        assert!(
            induced_map(&p, &x)
                .unwrap()
                .distance(&induced_map(&q, &x).unwrap())
                < 1e-15
        );
    }
}
