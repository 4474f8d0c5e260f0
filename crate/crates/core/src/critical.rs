//! The critical set `Delta = {x in M : d phi_L vanishes on D_x}` of a pencil,
//! traced as a closed curve, and its image `K = phi_L(Delta)` in `CP^1`.
//!
//! `x` is critical iff `conj(W(x))` is complex-parallel to the unit normal,
//! where `W = H_1(x) a_0 - H_0(x) a_1` (see [`crate::pencil::criticality_covector`]).
//! The frame-free system `F = (rho, Re q, Im q)` with `q` the normalized
//! normal-orthogonal part of `conj(W)` has `2N + 1` rows and rank `2N - 1` on
//! a nondegenerate `Delta`.

use std::collections::VecDeque;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::ProjectivePoint;
use crate::error::{Error, Result};
use crate::fiber::solve_fiber_point;
use crate::geometry::frame::ZERO_GRADIENT;
use crate::geometry::{cr_frame, sample_point, DefiningFunction};
use crate::linalg::{self, cnorm, hdot, pair, to_complex, to_real, CVec, RMat, RVec};
use crate::pencil::{induced_map, normalized_criticality, Pencil};
use crate::rng::substream;

/// Residual accepted for a seed of the critical set.
pub const SEED_TOL: f64 = 1e-10;
/// Residual below which a region witness counts as a fiber point.
const SOLVE_TOL: f64 = 1e-12;
/// Fiber solves over values of `K` converge only linearly (the fiber is
/// singular there), so they are pushed to rounding level.
const PREIMAGE_SOLVE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationConfig {
    pub h_min: f64,
    pub h_max: f64,
    pub h_init: f64,
    pub max_steps: usize,
    /// Relative threshold on the `(2N-1)`-th singular value of the Jacobian.
    pub rank_threshold: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            h_min: 1e-4,
            h_max: 0.05,
            h_init: 0.02,
            max_steps: 20_000,
            rank_threshold: 1e-6,
        }
    }
}

/// `F(x)` and its `(2N+1) x 2N` Jacobian.
pub(crate) fn delta_system(f: &dyn DefiningFunction, p: &Pencil, x: &RVec) -> Result<(RVec, RMat)> {
    let d = p.base_distance(x);
    if d <= crate::pencil::BASE_LOCUS_TOL {
        return Err(Error::OnBaseLocus { distance: d });
    }
    let g = f.gradient(x);
    let gn = g.norm();
    if gn < ZERO_GRADIENT * f.scale() {
        return Err(Error::ZeroGradient {
            norm: gn,
            point: x.iter().copied().collect(),
        });
    }
    let hess = f.hessian(x);
    let n = x.len() / 2;
    let nc = to_complex(&g) / Complex64::new(gn, 0.0);
    let (a0, a1) = p.linear_parts();
    let (v0, v1) = p.evaluate(x);
    let u = (&a0 * v1 - &a1 * v0).map(|c| c.conj());
    let nu = cnorm(&u).max(1e-300);
    let un = hdot(&u, &nc);
    let qt = &u - &nc * un;
    let q = &qt / Complex64::new(nu, 0.0);

    let mut res = RVec::zeros(2 * n + 1);
    res[0] = f.value(x);
    res.rows_mut(1, 2 * n).copy_from(&to_real(&q));
    let mut jac = RMat::zeros(2 * n + 1, 2 * n);
    for k in 0..2 * n {
        let dg = to_complex(&hess.column(k).into_owned());
        let dnc = (&dg - &nc * Complex64::new(hdot(&dg, &nc).re, 0.0)) / Complex64::new(gn, 0.0);
        let mut dz = CVec::zeros(n);
        dz[k / 2] = if k % 2 == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            linalg::I
        };
        let dv0 = pair(&a0, &dz);
        let dv1 = pair(&a1, &dz);
        let du = (&a0 * dv1 - &a1 * dv0).map(|c| c.conj());
        let dqt = &du - &nc * (hdot(&du, &nc) + hdot(&u, &dnc)) - &dnc * un;
        let dnu = hdot(&du, &u).re / nu;
        let dq = &dqt / Complex64::new(nu, 0.0) - &qt * Complex64::new(dnu / (nu * nu), 0.0);
        jac[(0, k)] = g[k];
        jac.view_mut((1, k), (2 * n, 1)).copy_from(&to_real(&dq));
    }
    Ok((res, jac))
}

/// `(rho(x), q)` with `q` expressed in the CR frame basis: `2N - 1` reals,
/// zero exactly on the critical set.
pub fn delta_residual(f: &dyn DefiningFunction, p: &Pencil, x: &RVec) -> Result<RVec> {
    let d = p.base_distance(x);
    if d <= crate::pencil::BASE_LOCUS_TOL {
        return Err(Error::OnBaseLocus { distance: d });
    }
    let frame = cr_frame(f, x)?;
    let q = normalized_criticality(p, &frame);
    let n = frame.complex_dim();
    let mut r = RVec::zeros(2 * n - 1);
    r[0] = f.value(x);
    for (j, e) in frame.basis.iter().enumerate() {
        let c = hdot(&q, e);
        r[1 + 2 * j] = c.re;
        r[2 + 2 * j] = c.im;
    }
    Ok(r)
}

/// Relative rank margin `sigma_{2N-1} / sigma_1` of the Jacobian of `F`.
fn rank_margin(jac: &RMat) -> f64 {
    let s = linalg::singular_values(jac);
    let k = jac.ncols() - 1;
    if s.is_empty() || s[0] == 0.0 {
        0.0
    } else {
        s[k - 1] / s[0]
    }
}

/// Gauss-Newton on `F` from `x0`; returns the final point and `|F|`.
fn newton_to_delta(
    f: &dyn DefiningFunction,
    p: &Pencil,
    x0: &RVec,
    max_iter: usize,
) -> Result<(RVec, f64)> {
    let mut x = x0.clone();
    let cap = 0.2 * f.sample_radius();
    let mut last = f64::INFINITY;
    for _ in 0..max_iter {
        let (r, j) = delta_system(f, p, &x)?;
        last = r.norm();
        if last <= 1e-14 {
            return Ok((x, last));
        }
        let step = linalg::lstsq(&j, &(-&r));
        let sn = step.norm();
        if !sn.is_finite() {
            break;
        }
        x += if sn > cap { step * (cap / sn) } else { step };
        if sn < 1e-16 * f.scale() {
            break;
        }
    }
    let (r, _) = delta_system(f, p, &x)?;
    last = last.min(r.norm());
    Ok((x, r.norm().min(last)))
}

/// Gauss-Newton seeds on `Delta` from `tries` sampled points of `M`,
/// deduplicated at a twentieth of the sampling radius.
pub fn find_delta_seeds(
    f: &dyn DefiningFunction,
    p: &Pencil,
    tries: usize,
    rng_seed: u64,
) -> Result<Vec<RVec>> {
    let results: Vec<(Option<RVec>, f64)> = (0..tries)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(rng_seed, "delta-seeds", k as u64);
            let Some(x0) = sample_point(f, &mut rng) else {
                return (None, f64::INFINITY);
            };
            match newton_to_delta(f, p, &x0, 60) {
                Ok((x, r)) if r <= SEED_TOL => (Some(x), r),
                Ok((_, r)) => (None, r),
                Err(_) => (None, f64::INFINITY),
            }
        })
        .collect();
    let best_residual = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let radius = 0.05 * f.sample_radius();
    let mut seeds: Vec<RVec> = Vec::new();
    for x in results.into_iter().filter_map(|r| r.0) {
        if seeds.iter().all(|s| (s - &x).norm() >= radius) {
            seeds.push(x);
        }
    }
    if seeds.is_empty() {
        return Err(Error::NoneFound { best_residual });
    }
    Ok(seeds)
}

#[derive(Debug, Clone)]
pub struct CriticalCurve {
    pub points: Vec<RVec>,
    /// Unit tangents, oriented along the direction of tracing.
    pub tangents: Vec<RVec>,
    /// `|F|` at each sample.
    pub residuals: Vec<f64>,
    pub arclength: Vec<f64>,
    pub closed: bool,
    /// Chord from the last sample back to the first when closed.
    pub closure_gap: f64,
    /// Total arclength, including the closing arc.
    pub length: f64,
    pub min_rank_margin: f64,
}

impl CriticalCurve {
    pub fn empty() -> Self {
        CriticalCurve {
            points: Vec::new(),
            tangents: Vec::new(),
            residuals: Vec::new(),
            arclength: Vec::new(),
            closed: false,
            closure_gap: 0.0,
            length: 0.0,
            min_rank_margin: f64::INFINITY,
        }
    }

    /// Open curve through given points, with tangents taken from the local
    /// null direction of `F` where it is defined.
    pub fn from_points(f: &dyn DefiningFunction, p: &Pencil, points: Vec<RVec>) -> Result<Self> {
        let mut c = CriticalCurve::empty();
        let mut s = 0.0;
        for (k, x) in points.iter().enumerate() {
            let (r, j) = delta_system(f, p, x)?;
            let mut t = linalg::null_direction(&j);
            if k > 0 {
                let chord = x - &points[k - 1];
                s += chord.norm();
                if t.dot(&chord) < 0.0 {
                    t = -t;
                }
            }
            c.min_rank_margin = c.min_rank_margin.min(rank_margin(&j));
            c.tangents.push(t);
            c.residuals.push(r.norm());
            c.arclength.push(s);
        }
        c.points = points;
        c.length = s;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance from `x` to the polyline (closed when the curve is).
    pub fn distance_to(&self, x: &RVec) -> f64 {
        let m = self.points.len();
        if m == 0 {
            return f64::INFINITY;
        }
        if m == 1 {
            return (x - &self.points[0]).norm();
        }
        let segs = if self.closed { m } else { m - 1 };
        (0..segs)
            .map(|k| segment_distance(x, &self.points[k], &self.points[(k + 1) % m]))
            .fold(f64::INFINITY, f64::min)
    }

    /// One-sided Hausdorff distance from this curve's samples to `other`.
    pub fn directed_hausdorff(&self, other: &CriticalCurve) -> f64 {
        self.points
            .iter()
            .map(|x| other.distance_to(x))
            .fold(0.0, f64::max)
    }

    pub fn summary(&self) -> CurveSummary {
        CurveSummary {
            samples: self.len(),
            closed: self.closed,
            closure_gap: self.closure_gap,
            length: self.length,
            max_residual: self.residuals.iter().copied().fold(0.0, f64::max),
            min_rank_margin: self.min_rank_margin,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveSummary {
    pub samples: usize,
    pub closed: bool,
    pub closure_gap: f64,
    pub length: f64,
    pub max_residual: f64,
    pub min_rank_margin: f64,
}

fn segment_distance(x: &RVec, a: &RVec, b: &RVec) -> f64 {
    let d = b - a;
    let dd = d.norm_squared();
    let t = if dd > 0.0 {
        ((x - a).dot(&d) / dd).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (x - a - d * t).norm()
}

/// Arc length of a circular arc with chord `c` and turning angle between
/// end tangents `cos_theta`.
fn arc_from_chord(c: f64, cos_theta: f64) -> f64 {
    let half = 0.5 * cos_theta.clamp(-1.0, 1.0).acos();
    if half < 1e-8 {
        c
    } else {
        c * half / half.sin()
    }
}

/// Tangent with a deterministic sign: the entry of largest modulus is positive.
fn canonical_sign(t: RVec) -> RVec {
    let k = t.iamax();
    if t[k] < 0.0 {
        -t
    } else {
        t
    }
}

/// Pseudo-arclength continuation of `Delta` from a seed until the curve
/// closes up or the step budget is spent.
pub fn trace_delta(
    f: &dyn DefiningFunction,
    p: &Pencil,
    seed: &RVec,
    cfg: &ContinuationConfig,
) -> Result<CriticalCurve> {
    let (r0, j0) = delta_system(f, p, seed)?;
    if r0.norm() > SEED_TOL {
        return Err(Error::Precondition(format!(
            "seed residual {:.3e} exceeds {:.0e}",
            r0.norm(),
            SEED_TOL
        )));
    }
    let m0 = rank_margin(&j0);
    if m0 <= cfg.rank_threshold {
        return Err(Error::RankDrop {
            point: seed.iter().copied().collect(),
            margin: m0,
            arclength: 0.0,
        });
    }
    let h_cap = 0.9 * cfg.h_max;
    let x0 = seed.clone();
    let t0 = canonical_sign(linalg::null_direction(&j0));
    let mut curve = CriticalCurve::empty();
    curve.points.push(x0.clone());
    curve.tangents.push(t0.clone());
    curve.residuals.push(r0.norm());
    curve.arclength.push(0.0);
    curve.min_rank_margin = m0;

    let mut x = x0.clone();
    let mut t = t0.clone();
    let mut s = 0.0;
    let mut h = cfg.h_init.min(h_cap);
    for _ in 0..cfg.max_steps {
        // Closure test against the starting sample.
        if s > 3.0 * cfg.h_max {
            let back = &x0 - &x;
            let d0 = back.norm();
            let ahead = back.dot(&t) > 0.0;
            if ahead && t.dot(&t0) > 0.9 {
                if d0 <= 1.5 * h {
                    if d0 < cfg.h_min && curve.points.len() > 3 {
                        curve.points.pop();
                        curve.tangents.pop();
                        curve.residuals.pop();
                        curve.arclength.pop();
                        x = curve.points.last().unwrap().clone();
                        t = curve.tangents.last().unwrap().clone();
                        s = *curve.arclength.last().unwrap();
                    }
                    let gap = (&x0 - &x).norm();
                    curve.closed = true;
                    curve.closure_gap = gap;
                    curve.length = s + arc_from_chord(gap, t.dot(&t0));
                    return Ok(curve);
                } else if d0 <= 3.0 * h {
                    h = (0.5 * d0).max(cfg.h_min);
                }
            }
        }

        let target = &x + &t * h;
        let mut y = target.clone();
        let mut ok = false;
        let mut jy = RMat::zeros(0, 0);
        let mut ry = RVec::zeros(0);
        for _ in 0..10 {
            let (r, j) = delta_system(f, p, &y)?;
            let mut g = RVec::zeros(r.len() + 1);
            g.rows_mut(0, r.len()).copy_from(&r);
            g[r.len()] = t.dot(&(&y - &target));
            let mut jg = RMat::zeros(j.nrows() + 1, j.ncols());
            jg.view_mut((0, 0), (j.nrows(), j.ncols())).copy_from(&j);
            jg.row_mut(j.nrows()).copy_from(&t.transpose());
            ry = r;
            jy = j;
            if g.norm() <= 1e-14 {
                ok = true;
                break;
            }
            let dy = linalg::lstsq(&jg, &(-&g));
            y += &dy;
            if dy.norm() <= 1e-15 * f.scale() {
                let (r, j) = delta_system(f, p, &y)?;
                ry = r;
                jy = j;
                ok = true;
                break;
            }
        }
        if !ok {
            let (r, j) = delta_system(f, p, &y)?;
            ry = r;
            jy = j;
        }
        let chord = (&y - &x).norm();
        let mut ty = linalg::null_direction(&jy);
        if ty.dot(&t) < 0.0 {
            ty = -ty;
        }
        let cos = ty.dot(&t);
        let accepted = ry.norm() <= 1e-12 && chord <= cfg.h_max && chord >= 0.5 * h && cos >= 0.95;
        if !accepted {
            h *= 0.5;
            if h < cfg.h_min {
                let (_, jx) = delta_system(f, p, &x)?;
                let m = rank_margin(&jx);
                if m <= cfg.rank_threshold * 10.0 || rank_margin(&jy) <= cfg.rank_threshold {
                    return Err(Error::RankDrop {
                        point: x.iter().copied().collect(),
                        margin: m.min(rank_margin(&jy)),
                        arclength: s,
                    });
                }
                return Err(Error::NoConvergence {
                    what: "critical set continuation",
                    iterations: curve.points.len(),
                    residual: ry.norm(),
                });
            }
            continue;
        }
        let margin = rank_margin(&jy);
        if margin <= cfg.rank_threshold {
            return Err(Error::RankDrop {
                point: y.iter().copied().collect(),
                margin,
                arclength: s + chord,
            });
        }
        curve.min_rank_margin = curve.min_rank_margin.min(margin);
        s += arc_from_chord(chord, cos);
        curve.points.push(y.clone());
        curve.tangents.push(ty.clone());
        curve.residuals.push(ry.norm());
        curve.arclength.push(s);
        x = y;
        t = ty;
        if cos > 0.995 {
            h = (1.5 * h).min(h_cap);
        }
    }
    Err(Error::BudgetExhausted {
        steps: cfg.max_steps,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DTransversality {
    /// Minimum over samples of `|<tangent, J normal>|`, the sine of the angle
    /// between the curve and `D`; `None` for an empty curve.
    pub margin: Option<f64>,
    pub worst_point: Option<Vec<f64>>,
    pub threshold: f64,
    pub pass: bool,
}

pub fn check_delta_transversal_to_d(
    f: &dyn DefiningFunction,
    curve: &CriticalCurve,
    threshold: f64,
) -> Result<DTransversality> {
    let mut margin: Option<f64> = None;
    let mut worst = None;
    for (x, t) in curve.points.iter().zip(&curve.tangents) {
        let frame = cr_frame(f, x)?;
        let m = t.dot(&frame.reeb).abs() / t.norm();
        if margin.is_none_or(|b| m < b) {
            margin = Some(m);
            worst = Some(x.iter().copied().collect());
        }
    }
    Ok(DTransversality {
        margin,
        worst_point: worst,
        threshold,
        pass: margin.is_none_or(|m| m > threshold),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageCurveConfig {
    /// Fiber solves per region witness.
    pub probe_budget: usize,
    pub grid_lat: usize,
    pub grid_lon: usize,
    /// Number of values of `K` whose preimages are checked.
    pub preimage_values: usize,
    pub preimage_starts: usize,
    /// Pairs of samples closer than this in arclength are treated as adjacent
    /// when measuring the embedding margin.
    pub adjacency: f64,
    pub preimage_tol: f64,
}

impl Default for ImageCurveConfig {
    fn default() -> Self {
        ImageCurveConfig {
            probe_budget: 200,
            grid_lat: 90,
            grid_lon: 180,
            preimage_values: 8,
            preimage_starts: 48,
            adjacency: 10.0 * ContinuationConfig::default().h_max,
            preimage_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLabel {
    Regular,
    Missed,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionReport {
    pub label: RegionLabel,
    pub cells: usize,
    pub witness: ProjectivePoint,
    pub solves: usize,
    pub solutions: usize,
    pub min_residual: f64,
    /// Smallest criticality measure over the solutions found.
    pub min_derivative: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PreimageCheck {
    pub values: usize,
    pub preimages: usize,
    pub max_distance: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageCurveAnalysis {
    #[serde(skip)]
    pub values: Vec<ProjectivePoint>,
    pub samples: usize,
    /// Minimum chordal distance between non-adjacent samples of `K`.
    pub embedding_margin: Option<f64>,
    pub regions: Vec<RegionReport>,
    /// Grid regions too small to classify.
    pub ignored_cells: usize,
    pub preimages: PreimageCheck,
    pub pass: bool,
}

/// Point of the Riemann sphere in `R^3` (unit sphere) for `[u : v]`.
fn sphere_point(a: &ProjectivePoint) -> [f64; 3] {
    let u = a.coords()[0];
    let v = a.coords()[1];
    let w = u * v.conj();
    [2.0 * w.re, 2.0 * w.im, u.norm_sqr() - v.norm_sqr()]
}

fn from_sphere_point(x: [f64; 3]) -> ProjectivePoint {
    let w = Complex64::new(x[0], x[1]) * 0.5;
    let (u, v) = if x[2] >= 0.0 {
        let u = (0.5 * (1.0 + x[2])).sqrt();
        (Complex64::new(u, 0.0), (w / u).conj())
    } else {
        let v = (0.5 * (1.0 - x[2])).sqrt();
        (w / v, Complex64::new(v, 0.0))
    };
    ProjectivePoint::new(CVec::from_vec(vec![u, v])).expect("unit")
}

fn seg3(x: &[f64; 3], a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let r = [x[0] - a[0], x[1] - a[1], x[2] - a[2]];
    let dd = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let t = if dd > 0.0 {
        ((r[0] * d[0] + r[1] * d[1] + r[2] * d[2]) / dd).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let e = [r[0] - t * d[0], r[1] - t * d[1], r[2] - t * d[2]];
    (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt()
}

struct Grid {
    lat: usize,
    lon: usize,
}

impl Grid {
    fn center(&self, i: usize, j: usize) -> [f64; 3] {
        let th = std::f64::consts::PI * (i as f64 + 0.5) / self.lat as f64;
        let ph = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / self.lon as f64;
        [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]
    }

    fn neighbors(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let mut v = vec![(i, (j + 1) % self.lon), (i, (j + self.lon - 1) % self.lon)];
        if i > 0 {
            v.push((i - 1, j));
        } else {
            v.push((0, (j + self.lon / 2) % self.lon));
        }
        if i + 1 < self.lat {
            v.push((i + 1, j));
        } else {
            v.push((i, (j + self.lon / 2) % self.lon));
        }
        v
    }
}

/// Embedding margin of `K`, region decomposition of its complement and
/// classification of each region by fiber solves at a witness value.
pub fn analyze_image_curve(
    f: &dyn DefiningFunction,
    p: &Pencil,
    curve: &CriticalCurve,
    cfg: &ImageCurveConfig,
    rng_seed: u64,
) -> Result<ImageCurveAnalysis> {
    if !curve.closed {
        return Err(Error::Precondition(
            "image-curve analysis needs a closed curve".into(),
        ));
    }
    let values: Vec<ProjectivePoint> = curve
        .points
        .iter()
        .map(|x| induced_map(p, x))
        .collect::<Result<_>>()?;
    let m = values.len();

    // Embedding margin over pairs far apart along the curve.
    let total = curve.length;
    let embedding_margin = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            for j in i + 1..m {
                let ds = (curve.arclength[j] - curve.arclength[i]).abs();
                if ds.min(total - ds) >= cfg.adjacency {
                    best = best.min(values[i].distance(&values[j]));
                }
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min);
    let embedding_margin = embedding_margin.is_finite().then_some(embedding_margin);

    // Grid regions of the complement of K on the Riemann sphere.
    let grid = Grid {
        lat: cfg.grid_lat,
        lon: cfg.grid_lon,
    };
    let kp: Vec<[f64; 3]> = values.iter().map(sphere_point).collect();
    let cell = std::f64::consts::PI / cfg.grid_lat as f64;
    let block = 1.0 * cell.max(2.0 * std::f64::consts::PI / cfg.grid_lon as f64);
    let dist: Vec<f64> = (0..grid.lat * grid.lon)
        .into_par_iter()
        .map(|c| {
            let x = grid.center(c / grid.lon, c % grid.lon);
            (0..m)
                .map(|k| seg3(&x, &kp[k], &kp[(k + 1) % m]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut label = vec![usize::MAX; dist.len()];
    let mut regions: Vec<Vec<usize>> = Vec::new();
    for start in 0..dist.len() {
        if dist[start] < block || label[start] != usize::MAX {
            continue;
        }
        let id = regions.len();
        let mut cells = Vec::new();
        let mut queue = VecDeque::from([start]);
        label[start] = id;
        while let Some(c) = queue.pop_front() {
            cells.push(c);
            for (i, j) in grid.neighbors(c / grid.lon, c % grid.lon) {
                let d = i * grid.lon + j;
                if dist[d] >= block && label[d] == usize::MAX {
                    label[d] = id;
                    queue.push_back(d);
                }
            }
        }
        regions.push(cells);
    }
    let min_cells = (grid.lat * grid.lon) / 500;
    let (large, small): (Vec<Vec<usize>>, Vec<Vec<usize>>) =
        regions.into_iter().partition(|r| r.len() >= min_cells);
    let ignored_cells = small.iter().map(Vec::len).sum();
    if large.len() != 2 {
        return Err(Error::AmbiguousRegion {
            region: "complement of K".into(),
            reason: format!("expected 2 complementary regions, found {}", large.len()),
        });
    }

    let mut reports = Vec::new();
    for (r, cells) in large.iter().enumerate() {
        let &best = cells
            .iter()
            .max_by(|&&a, &&b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .expect("nonempty region");
        let witness = from_sphere_point(grid.center(best / grid.lon, best % grid.lon));
        reports.push(classify_region(
            f,
            p,
            &witness,
            cells.len(),
            cfg,
            rng_seed,
            r,
        )?);
    }
    let regular = reports
        .iter()
        .filter(|r| r.label == RegionLabel::Regular)
        .count();
    if regular != 1 {
        return Err(Error::AmbiguousRegion {
            region: "complement of K".into(),
            reason: format!("{regular} regions classified regular, expected exactly one"),
        });
    }

    let preimages = preimage_check(f, p, curve, &values, cfg, rng_seed)?;
    let pass = preimages.pass && embedding_margin.is_some_and(|e| e > 0.0);
    Ok(ImageCurveAnalysis {
        values,
        samples: m,
        embedding_margin,
        regions: reports,
        ignored_cells,
        preimages,
        pass,
    })
}

fn classify_region(
    f: &dyn DefiningFunction,
    p: &Pencil,
    witness: &ProjectivePoint,
    cells: usize,
    cfg: &ImageCurveConfig,
    rng_seed: u64,
    region: usize,
) -> Result<RegionReport> {
    let stage = format!("region-{region}");
    let runs: Vec<Option<(RVec, f64)>> = (0..cfg.probe_budget)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(rng_seed, &stage, k as u64);
            let x0 = sample_point(f, &mut rng)?;
            solve_fiber_point(f, p, witness, &x0, 60).ok()
        })
        .collect();
    let mut min_residual = f64::INFINITY;
    let mut solutions: Vec<RVec> = Vec::new();
    for (x, r) in runs.into_iter().flatten() {
        min_residual = min_residual.min(r);
        if r <= SOLVE_TOL && solutions.iter().all(|s| (s - &x).norm() > 1e-6) {
            solutions.push(x);
        }
    }
    let mut min_derivative: Option<f64> = None;
    for x in &solutions {
        let frame = cr_frame(f, x)?;
        let d = cnorm(&normalized_criticality(p, &frame));
        min_derivative = Some(min_derivative.map_or(d, |m| m.min(d)));
    }
    let regular = !solutions.is_empty() && min_derivative.is_some_and(|d| d > 1e-6);
    let missed = solutions.is_empty() && cfg.probe_budget >= 200 && min_residual >= 1e-3;
    let label = match (regular, missed) {
        (true, false) => RegionLabel::Regular,
        (false, true) => RegionLabel::Missed,
        _ => {
            return Err(Error::AmbiguousRegion {
                region: format!("region {region}"),
                reason: format!(
                    "{} solutions, minimum residual {:.3e}, minimum derivative {:?}",
                    solutions.len(),
                    min_residual,
                    min_derivative
                ),
            })
        }
    };
    Ok(RegionReport {
        label,
        cells,
        witness: witness.clone(),
        solves: cfg.probe_budget,
        solutions: solutions.len(),
        min_residual,
        min_derivative,
    })
}

/// Preimages of values on `K` must lie on `Delta`: each fiber point found
/// is projected onto `Delta` and the displacement recorded.
fn preimage_check(
    f: &dyn DefiningFunction,
    p: &Pencil,
    curve: &CriticalCurve,
    values: &[ProjectivePoint],
    cfg: &ImageCurveConfig,
    rng_seed: u64,
) -> Result<PreimageCheck> {
    let m = values.len();
    let count = cfg.preimage_values.min(m);
    let picks: Vec<usize> = (0..count).map(|k| k * m / count.max(1)).collect();
    let mut found = 0;
    let mut max_distance: f64 = 0.0;
    for (v, &i) in picks.iter().enumerate() {
        let stage = format!("preimage-{v}");
        let runs: Vec<Option<(RVec, f64)>> = (0..cfg.preimage_starts)
            .into_par_iter()
            .map(|k| {
                let mut rng = substream(rng_seed, &stage, k as u64);
                let x0 = sample_point(f, &mut rng)?;
                solve_fiber_point(f, p, &values[i], &x0, 300).ok()
            })
            .collect();
        for (x, r) in runs.into_iter().flatten() {
            if r > PREIMAGE_SOLVE_TOL {
                continue;
            }
            found += 1;
            let d = match newton_to_delta(f, p, &x, 60) {
                Ok((y, ry)) if ry <= SEED_TOL => (&x - &y).norm(),
                _ => curve.distance_to(&x),
            };
            max_distance = max_distance.max(d);
        }
    }
    Ok(PreimageCheck {
        values: count,
        preimages: found,
        max_distance,
        tolerance: cfg.preimage_tol,
        pass: max_distance <= cfg.preimage_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Builtin;

    fn rv(v: &[f64]) -> RVec {
        RVec::from_vec(v.to_vec())
    }

    #[test]
    fn residual_vanishes_on_sphere_critical_circle() {
        let s = Builtin::sphere(2);
        let p = Pencil::axis(2);
        let r = delta_residual(&s, &p, &rv(&[0.0, 0.0, 0.0, 1.0])).unwrap();
        assert!(r.norm() < 1e-15);
        let r = delta_residual(&s, &p, &rv(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!((r.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn residual_passes_rho_through() {
        let s = Builtin::sphere(2);
        let p = Pencil::axis(2);
        let x = rv(&[0.0, 0.0, 1.3f64.sqrt(), 0.0]);
        let r = delta_residual(&s, &p, &x).unwrap();
        assert!((r[0] - 0.3).abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let e = Builtin::PerturbedSphere {
            n: 2,
            epsilon: 0.05,
            m: 3,
        };
        let p = Pencil::new(
            CVec::from_vec(vec![
                Complex64::new(0.3, -0.2),
                Complex64::new(1.0, 0.5),
                Complex64::new(-0.4, 0.9),
            ]),
            CVec::from_vec(vec![
                Complex64::new(-1.1, 0.1),
                Complex64::new(0.2, 0.2),
                Complex64::new(0.7, -0.3),
            ]),
        )
        .unwrap();
        let x = rv(&[0.3, -0.5, 0.6, 0.2]);
        let (_, j) = delta_system(&e, &p, &x).unwrap();
        let h = 1e-6;
        for k in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (delta_system(&e, &p, &xp).unwrap().0 - delta_system(&e, &p, &xm).unwrap().0)
                / (2.0 * h);
            assert!((fd - j.column(k)).amax() < 1e-7, "column {k}");
        }
    }

    #[test]
    fn no_tries_finds_nothing() {
        let s = Builtin::sphere(2);
        assert!(matches!(
            find_delta_seeds(&s, &Pencil::axis(2), 0, 1),
            Err(Error::NoneFound { .. })
        ));
    }

    #[test]
    fn sphere_seeds_lie_on_the_axis_circle() {
        let s = Builtin::sphere(2);
        let seeds = find_delta_seeds(&s, &Pencil::axis(2), 200, 4).unwrap();
        assert!(!seeds.is_empty());
        for x in &seeds {
            assert!(x[0].hypot(x[1]) < 1e-8);
            assert!((x[2].hypot(x[3]) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn sphere_trace_is_the_unit_circle() {
        let s = Builtin::sphere(2);
        let p = Pencil::axis(2);
        let c = trace_delta(
            &s,
            &p,
            &rv(&[0.0, 0.0, 0.0, 1.0]),
            &ContinuationConfig::default(),
        )
        .unwrap();
        assert!(c.closed);
        assert!(
            (c.length - 2.0 * std::f64::consts::PI).abs() < 1e-4,
            "{}",
            c.length
        );
        assert!(c.points.iter().all(|x| x[0].hypot(x[1]) < 1e-8));
        let t = check_delta_transversal_to_d(&s, &c, 1e-6).unwrap();
        assert!((t.margin.unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn poor_seed_is_rejected() {
        let s = Builtin::sphere(2);
        let e = trace_delta(
            &s,
            &Pencil::axis(2),
            &rv(&[0.6, 0.0, 0.8, 0.0]),
            &ContinuationConfig::default(),
        );
        assert!(matches!(e, Err(Error::Precondition(_))));
    }

    #[test]
    fn quartic_model_drops_rank() {
        let q = Builtin::QuarticModel { n: 2 };
        let e = trace_delta(
            &q,
            &Pencil::axis(2),
            &rv(&[0.0, 0.0, 0.3, 0.0]),
            &ContinuationConfig::default(),
        );
        assert!(matches!(e, Err(Error::RankDrop { .. })), "{e:?}");
    }

    #[test]
    fn empty_curve_is_vacuously_transversal() {
        let s = Builtin::sphere(2);
        let t = check_delta_transversal_to_d(&s, &CriticalCurve::empty(), 1e-6).unwrap();
        assert!(t.pass && t.margin.is_none());
    }

    #[test]
    fn riemann_sphere_round_trip() {
        for v in [
            [0.3, -0.2, 0.1, 0.9],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.2, 0.5],
        ] {
            let a = ProjectivePoint::new(CVec::from_vec(vec![
                Complex64::new(v[0], v[1]),
                Complex64::new(v[2], v[3]),
            ]))
            .unwrap();
            assert!(from_sphere_point(sphere_point(&a)).distance(&a) < 1e-14);
        }
    }
}
