//! Fibers of the induced map and of the complex Gauss map, sampled as point
//! clouds, plus the local Morse data of `phi_L` at critical points.

use num_complex::Complex64;
use petgraph::unionfind::UnionFind;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::critical::{delta_system, CriticalCurve};
use crate::dual::{gauss_differential_on_d, ProjectivePoint};
use crate::error::{Error, Result};
use crate::geometry::frame::DEGENERACY_REL;
use crate::geometry::{
    adapted_frame_and_graph, certify_strict_c_convexity, cr_frame, sample_point, sample_points,
    DefiningFunction, HyperplaneSlice,
};
use crate::linalg::{self, cnorm, complex_gradient, hdot, to_complex, to_real, CVec, RMat, RVec};
use crate::pencil::{
    affine_value, base_transversality, holomorphic_differential, submersion_margin,
    BaseTransversality, Pencil,
};
use crate::rng::substream;

/// Joint residual accepted for a fiber point.
pub const FIBER_TOL: f64 = 1e-12;
/// Minimum cloud size for a component count.
pub const MIN_CLOUD: usize = 50;
/// Multistart solves per requested fiber point; the pool is thinned by
/// farthest-point selection so the cloud is close to evenly spaced.
const POOL_FACTOR: usize = 8;
const DEDUP_RADIUS: f64 = 1e-6;
const EPSILON_FACTOR: f64 = 3.0;
const GAP_ROUNDS: usize = 6;
const GAP_NEIGHBOURS: usize = 8;
const GAP_MIN: f64 = 2.0;
const GAP_MAX: f64 = 16.0;

#[derive(Debug, Clone)]
pub struct FiberCloud {
    /// Target value, in `CP^1` for `phi_L` or `CP^{N-1}` for the Gauss map.
    pub target: ProjectivePoint,
    pub points: Vec<RVec>,
    pub residuals: Vec<f64>,
    pub connectivity_radius: Option<f64>,
    pub labels: Vec<usize>,
}

impl FiberCloud {
    fn new(target: ProjectivePoint, found: Vec<(RVec, f64)>) -> Self {
        let (points, residuals) = found.into_iter().unzip();
        FiberCloud {
            target,
            points,
            residuals,
            connectivity_radius: None,
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest distance between two points of the cloud.
    pub fn diameter(&self) -> f64 {
        let p = &self.points;
        (0..p.len())
            .flat_map(|i| (i + 1..p.len()).map(move |j| (i, j)))
            .map(|(i, j)| (&p[i] - &p[j]).norm())
            .fold(0.0, f64::max)
    }
}

/// Gauss-Newton on `(rho, e)` with `e = (beta H_0 - alpha H_1) / |(H_0, H_1)|`,
/// the chordal distance from `phi_L(x)` to `a = [alpha : beta]`. Returns the
/// final point and joint residual.
pub fn solve_fiber_point(
    f: &dyn DefiningFunction,
    p: &Pencil,
    a: &ProjectivePoint,
    x0: &RVec,
    max_iter: usize,
) -> Result<(RVec, f64)> {
    let e = p.member(a);
    let n = p.complex_dim();
    let lin: CVec = e.rows(1, n).into_owned();
    let (a0, a1) = p.linear_parts();
    let scale = f.scale();
    let system = |x: &RVec| -> (RVec, RMat) {
        let z = to_complex(x);
        let ev = e[0] + linalg::pair(&lin, &z);
        let (v0, v1) = p.evaluate(x);
        let s = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
        let r = ev / s;
        let g = f.gradient(x);
        let mut res = RVec::zeros(3);
        res[0] = f.value(x) / scale;
        res[1] = r.re;
        res[2] = r.im;
        let mut jac = RMat::zeros(3, 2 * n);
        for k in 0..2 * n {
            let unit = if k % 2 == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                linalg::I
            };
            let de = lin[k / 2] * unit;
            let ds = (v0.conj() * a0[k / 2] * unit + v1.conj() * a1[k / 2] * unit).re / s;
            let dr = de / s - ev * ds / (s * s);
            jac[(0, k)] = g[k] / scale;
            jac[(1, k)] = dr.re;
            jac[(2, k)] = dr.im;
        }
        (res, jac)
    };
    let cap = 0.2 * f.sample_radius();
    let mut x = x0.clone();
    let mut best = (x.clone(), f64::INFINITY);
    for _ in 0..max_iter {
        if p.base_distance(&x) <= crate::pencil::BASE_LOCUS_TOL {
            return Err(Error::OnBaseLocus {
                distance: p.base_distance(&x),
            });
        }
        let (r, j) = system(&x);
        let rn = r.norm();
        if rn < best.1 {
            best = (x.clone(), rn);
        }
        if rn <= 1e-16 {
            break;
        }
        let step = linalg::lstsq(&j, &(-&r));
        let sn = step.norm();
        if !sn.is_finite() || sn < 1e-17 * scale {
            break;
        }
        x += if sn > cap { step * (cap / sn) } else { step };
    }
    let (r, _) = system(&x);
    if r.norm() < best.1 {
        best = (x, r.norm());
    }
    Ok(best)
}

/// Keeps `n` points by farthest-point selection, starting from the first.
fn thin_farthest(pool: Vec<(RVec, f64)>, n: usize) -> Vec<(RVec, f64)> {
    if pool.len() <= n {
        return pool;
    }
    let mut chosen = vec![0usize];
    let mut dist: Vec<f64> = pool.iter().map(|p| (&p.0 - &pool[0].0).norm()).collect();
    while chosen.len() < n {
        let (k, _) = dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("nonempty");
        chosen.push(k);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min((&pool[i].0 - &pool[k].0).norm());
        }
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|k| pool[k].clone()).collect()
}

fn dedup(found: impl IntoIterator<Item = (RVec, f64)>, radius: f64) -> Vec<(RVec, f64)> {
    let mut out: Vec<(RVec, f64)> = Vec::new();
    for (x, r) in found {
        if out.iter().all(|q| (&q.0 - &x).norm() > radius) {
            out.push((x, r));
        }
    }
    out
}

/// Multistart fiber cloud over `a`: `8 n` solves from sampled points of `M`,
/// deduplicated and thinned to `n` evenly spread points.
pub fn sample_fiber(
    f: &dyn DefiningFunction,
    p: &Pencil,
    a: &ProjectivePoint,
    n: usize,
    rng_seed: u64,
) -> Result<FiberCloud> {
    if n == 0 {
        return Ok(FiberCloud::new(a.clone(), Vec::new()));
    }
    let runs: Vec<Option<(RVec, f64)>> = (0..POOL_FACTOR * n)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(rng_seed, "fiber", k as u64);
            let x0 = sample_point(f, &mut rng)?;
            solve_fiber_point(f, p, a, &x0, 60).ok()
        })
        .collect();
    let best_residual = runs
        .iter()
        .flatten()
        .map(|r| r.1)
        .fold(f64::INFINITY, f64::min);
    let radius = DEDUP_RADIUS * f.scale();
    let mut found = dedup(
        runs.into_iter().flatten().filter(|r| r.1 <= FIBER_TOL),
        radius,
    );
    if found.is_empty() {
        return Err(Error::EmptyFiber { best_residual });
    }
    for _ in 0..GAP_ROUNDS {
        let starts = gap_midpoints(&thin_farthest(found.clone(), n));
        if starts.is_empty() {
            break;
        }
        let extra: Vec<Option<(RVec, f64)>> = starts
            .par_iter()
            .map(|x0| solve_fiber_point(f, p, a, x0, 60).ok())
            .collect();
        let before = found.len();
        found = dedup(
            found
                .into_iter()
                .chain(extra.into_iter().flatten().filter(|r| r.1 <= FIBER_TOL)),
            radius,
        );
        if found.len() == before {
            break;
        }
    }
    Ok(FiberCloud::new(a.clone(), thin_farthest(found, n)))
}

/// Midpoints of neighbouring pairs of the thinned cloud that are much
/// farther apart than its median spacing and have no other point between
/// them. Solving from them fills holes left by the multistart
/// basins; pairs farther than `GAP_MAX` spacings are left alone so separate
/// components are never bridged by construction.
fn gap_midpoints(found: &[(RVec, f64)]) -> Vec<RVec> {
    let n = found.len();
    if n < 3 {
        return Vec::new();
    }
    let neighbours: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| ((&found[i].0 - &found[j].0).norm(), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(GAP_NEIGHBOURS);
            d
        })
        .collect();
    let mut nn: Vec<f64> = neighbours.iter().map(|v| v[0].0).collect();
    nn.sort_by(f64::total_cmp);
    let median = nn[n / 2];
    let pairs: Vec<(usize, usize, f64)> = neighbours
        .iter()
        .enumerate()
        .flat_map(|(i, list)| list.iter().map(move |&(d, j)| (i, j, d)))
        .filter(|&(i, j, d)| i < j && d > GAP_MIN * median && d < GAP_MAX * median)
        .collect();
    // Only pairs with an empty diametral ball are holes.
    pairs
        .par_iter()
        .filter_map(|&(i, j, d)| {
            let mid = (&found[i].0 + &found[j].0) * 0.5;
            let open = (0..n)
                .filter(|&k| k != i && k != j)
                .all(|k| (&found[k].0 - &mid).norm() >= 0.5 * d);
            open.then_some(mid)
        })
        .collect()
}

/// Mean distance from each point to its nearest neighbour.
pub fn mean_nearest_neighbor(points: &[RVec]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let nearest: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (&points[i] - &points[j]).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    // Summed in index order so the mean does not depend on the worker count.
    let total: f64 = nearest.iter().sum();
    total / n as f64
}

/// Connected components of the `eps`-neighbour graph, labelled by first
/// appearance.
pub fn components(points: &[RVec], eps: f64) -> (usize, Vec<usize>) {
    let n = points.len();
    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if (&points[i] - &points[j]).norm() <= eps {
                uf.union(i, j);
            }
        }
    }
    let mut ids = std::collections::HashMap::new();
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            let next = ids.len();
            *ids.entry(uf.find(i)).or_insert(next)
        })
        .collect();
    (ids.len(), labels)
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentCount {
    pub count: usize,
    pub epsilon: f64,
    /// Counts at `epsilon`, `2 epsilon`, `4 epsilon`.
    pub counts: [usize; 3],
}

/// Components of the `eps`-graph with `eps` three times the mean
/// nearest-neighbour distance; the count must agree at `2 eps` and `4 eps`.
pub fn component_count(cloud: &mut FiberCloud) -> Result<ComponentCount> {
    if cloud.len() < MIN_CLOUD {
        return Err(Error::TooFewPoints {
            got: cloud.len(),
            needed: MIN_CLOUD,
        });
    }
    let eps = EPSILON_FACTOR * mean_nearest_neighbor(&cloud.points);
    let (count, labels) = components(&cloud.points, eps);
    let c2 = components(&cloud.points, 2.0 * eps).0;
    let c4 = components(&cloud.points, 4.0 * eps).0;
    cloud.connectivity_radius = Some(eps);
    cloud.labels = labels;
    let counts = [count, c2, c4];
    if c2 != count || c4 != count {
        return Err(Error::UnstableCount {
            counts: counts.to_vec(),
        });
    }
    Ok(ComponentCount {
        count,
        epsilon: eps,
        counts,
    })
}

/// Average local dimension from PCA on each point's nearest neighbours: the
/// number of principal directions needed to explain 95% of the variance.
pub fn pca_dimension(points: &[RVec], neighbors: usize) -> f64 {
    let n = points.len();
    if n <= neighbors {
        return f64::NAN;
    }
    let dims: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .map(|j| ((&points[i] - &points[j]).norm(), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let nb: Vec<&RVec> = d
                .iter()
                .take(neighbors + 1)
                .map(|&(_, j)| &points[j])
                .collect();
            let dim = points[i].len();
            let mean = nb.iter().fold(RVec::zeros(dim), |acc, x| acc + *x) / nb.len() as f64;
            let mut cov = RMat::zeros(dim, dim);
            for x in &nb {
                let c = *x - &mean;
                cov += &c * c.transpose();
            }
            let (ev, _) = linalg::sym_eigen(&cov);
            let total: f64 = ev.iter().map(|v| v.max(0.0)).sum();
            let mut acc = 0.0;
            let mut k = 0;
            for v in ev.iter().rev() {
                acc += v.max(0.0);
                k += 1;
                if acc >= 0.95 * total {
                    break;
                }
            }
            k
        })
        .collect();
    dims.iter().sum::<usize>() as f64 / n as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct MorseData {
    pub point: Vec<f64>,
    /// Hessian in `w` of the slice function at the critical point.
    #[serde(skip)]
    pub hessian: RMat,
    pub eigenvalues: Vec<f64>,
    /// Number of negative eigenvalues.
    pub index: usize,
    /// Relative Frobenius error of a finite-difference Hessian of the slice
    /// function against `hessian`.
    pub finite_difference_error: f64,
}

/// Local Morse data of `phi_L` at a critical point.
///
/// In the graph chart at `x` the level hyperplane through `x` is
/// `{z_N = 0}`, so `g = (Phi - Phi(x)) / c` equals `(t + i phi) (1 + O(w, z_N))`.
/// On the slice `Re g = 0` the imaginary part is `phi(w, 0)` up to third
/// order, whose `w`-Hessian is returned together with a finite-difference
/// check of the actual slice function.
pub fn morse_index(f: &dyn DefiningFunction, p: &Pencil, x: &RVec) -> Result<MorseData> {
    let (r, _) = delta_system(f, p, x)?;
    if r.norm() > 1e-8 {
        return Err(Error::Precondition(format!(
            "point is not critical: residual {:.3e}",
            r.norm()
        )));
    }
    let chart = adapted_frame_and_graph(f, x)?;
    let m = chart.chart_dim() - 1;
    let hessian = chart.evaluate(&RVec::zeros(m + 1))?.hessian_w();
    let (eigenvalues, _) = linalg::sym_eigen(&hessian);
    let norm = linalg::op_norm(&hessian);
    let tol = DEGENERACY_REL * norm;
    let scale_floor = 1e-12 / f.sample_radius();
    if norm <= scale_floor || eigenvalues.iter().any(|l| l.abs() <= tol) {
        return Err(Error::DegenerateHessian { eigenvalues });
    }
    let index = eigenvalues.iter().filter(|&&l| l < 0.0).count();

    let (chart_index, phi0) = affine_value(p, x)?;
    let phi = |y: &RVec| -> Complex64 {
        let (v0, v1) = p.evaluate(y);
        if chart_index == 1 {
            v0 / v1
        } else {
            v1 / v0
        }
    };
    let e_n = &chart.unitary[chart.unitary.len() - 1];
    let c = linalg::pair(&holomorphic_differential(p, x)?, e_n);
    let g = |w: &RVec, t: f64| -> Result<Complex64> {
        let mut q = RVec::zeros(m + 1);
        q.rows_mut(0, m).copy_from(w);
        q[m] = t;
        Ok((phi(&chart.psi(&q)?) - phi0) / c)
    };
    let slice = |w: &RVec| -> Result<f64> {
        let mut t = 0.0;
        for _ in 0..50 {
            let v = g(w, t)?;
            if v.re.abs() <= 1e-16 {
                break;
            }
            // d Re g / dt is 1 at the origin.
            t -= v.re;
        }
        Ok(g(w, t)?.im)
    };
    let h = 5e-4 * chart.radius.min(1.0);
    let mut fd = RMat::zeros(m, m);
    let e = |k: usize| {
        let mut v = RVec::zeros(m);
        v[k] = h;
        v
    };
    let center = slice(&RVec::zeros(m))?;
    for a in 0..m {
        let (p1, m1) = (slice(&e(a))?, slice(&(-e(a)))?);
        fd[(a, a)] = (p1 - 2.0 * center + m1) / (h * h);
        for b in a + 1..m {
            let pp = slice(&(e(a) + e(b)))?;
            let pm = slice(&(e(a) - e(b)))?;
            let mp = slice(&(-e(a) + e(b)))?;
            let mm = slice(&(-e(a) - e(b)))?;
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            fd[(a, b)] = v;
            fd[(b, a)] = v;
        }
    }
    let finite_difference_error = (&fd - &hessian).norm() / hessian.norm();
    Ok(MorseData {
        point: x.iter().copied().collect(),
        hessian,
        eigenvalues,
        index,
        finite_difference_error,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ShrinkingProbe {
    pub point: Vec<f64>,
    /// Distances of the probed values from `K` along its normal.
    pub offsets: Vec<f64>,
    pub diameters: Vec<f64>,
    pub monotone: bool,
}

fn chart_value(p: &Pencil, x: &RVec, chart: usize) -> Complex64 {
    let (a, b) = p.evaluate(x);
    if chart == 1 {
        a / b
    } else {
        b / a
    }
}

fn chart_target(chart: usize, v: Complex64) -> ProjectivePoint {
    let one = Complex64::new(1.0, 0.0);
    let c = if chart == 1 {
        vec![v, one]
    } else {
        vec![one, v]
    };
    ProjectivePoint::new(CVec::from_vec(c)).expect("finite value")
}

/// Fibers over values approaching `K` along its normal at `phi_L(x)`, for
/// `x = curve.points[index]`, from the side where fibers are nonempty. The
/// offsets halve `steps - 1` times starting from `offset`.
pub fn fiber_shrinking(
    f: &dyn DefiningFunction,
    p: &Pencil,
    curve: &CriticalCurve,
    index: usize,
    offset: f64,
    steps: usize,
    points: usize,
    rng_seed: u64,
) -> Result<ShrinkingProbe> {
    if curve.len() < 2 {
        return Err(Error::Precondition(
            "fiber shrinking needs a traced curve".into(),
        ));
    }
    let x = &curve.points[index % curve.len()];
    let next = &curve.points[(index + 1) % curve.len()];
    let (chart, v) = affine_value(p, x)?;
    let t = chart_value(p, next, chart) - v;
    if t.norm() == 0.0 {
        return Err(Error::Precondition("image curve is stationary".into()));
    }
    let normal = linalg::I * t / t.norm();
    let side = [1.0, -1.0]
        .into_iter()
        .find(|s| {
            sample_fiber(
                f,
                p,
                &chart_target(chart, v + normal * (s * offset)),
                points,
                rng_seed,
            )
            .is_ok()
        })
        .ok_or_else(|| Error::Precondition("no regular side next to the image curve".into()))?;
    let offsets: Vec<f64> = (0..steps).map(|k| offset * 0.5f64.powi(k as i32)).collect();
    let diameters = offsets
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let a = chart_target(chart, v + normal * (side * s));
            sample_fiber(
                f,
                p,
                &a,
                points,
                crate::rng::derive_seed(rng_seed, "shrink", k as u64),
            )
            .map(|c| c.diameter())
        })
        .collect::<Result<Vec<f64>>>()?;
    let monotone = diameters.windows(2).all(|w| w[1] < w[0]);
    Ok(ShrinkingProbe {
        point: x.iter().copied().collect(),
        offsets,
        diameters,
        monotone,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussFibrationConfig {
    pub samples: usize,
    pub fibers: usize,
    pub points_per_fiber: usize,
    pub threshold: f64,
    /// Compare fibers with orbits of the scalar circle action (round sphere
    /// centred at the origin).
    pub compare_hopf: bool,
    /// Allowed deviation of the local PCA dimension of a fiber from 1.
    pub pca_tolerance: f64,
}

impl Default for GaussFibrationConfig {
    fn default() -> Self {
        GaussFibrationConfig {
            samples: 1000,
            fibers: 20,
            points_per_fiber: 120,
            threshold: 1e-6,
            compare_hopf: false,
            pca_tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussFiberProbe {
    pub target: ProjectivePoint,
    pub points: usize,
    pub components: Option<ComponentCount>,
    pub component_error: Option<String>,
    pub pca_dimension: f64,
    pub hopf_deviation: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussFibrationReport {
    pub samples: usize,
    /// Minimum over samples of the smallest singular value of `dG` on `D`.
    pub submersion_margin: f64,
    pub worst_point: Vec<f64>,
    pub fibers: Vec<GaussFiberProbe>,
    pub max_hopf_deviation: Option<f64>,
    pub pass: bool,
}

/// Gauss-Newton on `(rho, P_xi^perp (d rho / |d rho|))`: points of `M` whose
/// complex tangent hyperplane has direction `xi`.
fn solve_gauss_fiber_point(
    f: &dyn DefiningFunction,
    xi: &CVec,
    x0: &RVec,
    max_iter: usize,
) -> Option<(RVec, f64)> {
    let scale = f.scale();
    let system = |x: &RVec| -> (RVec, RMat) {
        let g = f.gradient(x);
        let h = f.hessian(x);
        let c = complex_gradient(&g);
        let cn = cnorm(&c);
        let u = &c / Complex64::new(cn, 0.0);
        let r = &u - xi * hdot(&u, xi);
        let n = c.len();
        let mut res = RVec::zeros(1 + 2 * n);
        res[0] = f.value(x) / scale;
        res.rows_mut(1, 2 * n).copy_from(&to_real(&r));
        let mut jac = RMat::zeros(1 + 2 * n, 2 * n);
        for k in 0..2 * n {
            let dc = complex_gradient(&h.column(k).into_owned());
            let du = (&dc - &u * Complex64::new(hdot(&dc, &u).re, 0.0)) / Complex64::new(cn, 0.0);
            let dr = &du - xi * hdot(&du, xi);
            jac[(0, k)] = g[k] / scale;
            jac.view_mut((1, k), (2 * n, 1)).copy_from(&to_real(&dr));
        }
        (res, jac)
    };
    let cap = 0.2 * f.sample_radius();
    let mut x = x0.clone();
    for _ in 0..max_iter {
        let (r, j) = system(&x);
        if r.norm() <= 1e-15 {
            break;
        }
        let step = linalg::lstsq(&j, &(-&r));
        let sn = step.norm();
        if !sn.is_finite() || sn < 1e-17 * scale {
            break;
        }
        x += if sn > cap { step * (cap / sn) } else { step };
    }
    let (r, _) = system(&x);
    Some((x, r.norm()))
}

/// Random point of `CP^k` from a Gaussian vector.
fn random_projective(k: usize, rng_seed: u64, stage: &str, index: u64) -> ProjectivePoint {
    let mut rng = substream(rng_seed, stage, index);
    let v = CVec::from_fn(k + 1, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im)
    });
    ProjectivePoint::new(v).expect("nonzero Gaussian vector")
}

/// Largest distance from a cloud point to the scalar circle orbit of the
/// first point.
fn hopf_deviation(points: &[RVec]) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let z0 = to_complex(first);
    points
        .iter()
        .map(|x| {
            let z = to_complex(x);
            let c = hdot(&z, &z0);
            let phase = if c.norm() > 0.0 {
                c / c.norm()
            } else {
                Complex64::new(1.0, 0.0)
            };
            cnorm(&(&z - &z0 * phase))
        })
        .fold(0.0, f64::max)
}

/// Submersion of `G` along `D`, and connectedness and dimension of sampled
/// `G`-fibers.
pub fn gauss_fibration_check(
    f: &dyn DefiningFunction,
    cfg: &GaussFibrationConfig,
    rng_seed: u64,
) -> Result<GaussFibrationReport> {
    let pts = sample_points(f, cfg.samples, rng_seed, "gauss-submersion")?;
    let margins: Vec<f64> = pts
        .par_iter()
        .map(|x| gauss_differential_on_d(f, x).map(|g| g.margin))
        .collect::<Result<_>>()?;
    let (wk, submersion_margin) = margins
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, f64::INFINITY));
    let n = f.complex_dim();
    let mut fibers = Vec::new();
    for k in 0..cfg.fibers {
        let target = random_projective(n - 1, rng_seed, "gauss-target", k as u64);
        let xi = target.coords().clone();
        let stage = format!("gauss-fiber-{k}");
        let runs: Vec<Option<(RVec, f64)>> = (0..POOL_FACTOR * cfg.points_per_fiber)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(rng_seed, &stage, i as u64);
                let x0 = sample_point(f, &mut rng)?;
                solve_gauss_fiber_point(f, &xi, &x0, 60)
            })
            .collect();
        let found = dedup(
            runs.into_iter().flatten().filter(|r| r.1 <= FIBER_TOL),
            DEDUP_RADIUS * f.scale(),
        );
        let mut cloud = FiberCloud::new(target.clone(), thin_farthest(found, cfg.points_per_fiber));
        let (components, component_error) = match component_count(&mut cloud) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        };
        fibers.push(GaussFiberProbe {
            target,
            points: cloud.len(),
            components,
            component_error,
            pca_dimension: pca_dimension(&cloud.points, 6),
            hopf_deviation: cfg.compare_hopf.then(|| hopf_deviation(&cloud.points)),
        });
    }
    let max_hopf_deviation = cfg.compare_hopf.then(|| {
        fibers
            .iter()
            .filter_map(|p| p.hopf_deviation)
            .fold(0.0, f64::max)
    });
    let pass = submersion_margin > cfg.threshold
        && fibers.iter().all(|p| {
            p.components.as_ref().is_some_and(|c| c.count == 1)
                && (p.pca_dimension - 1.0).abs() <= cfg.pca_tolerance
        })
        && max_hopf_deviation.is_none_or(|d| d <= 1e-8);
    Ok(GaussFibrationReport {
        samples: pts.len(),
        submersion_margin,
        worst_point: pts
            .get(wk)
            .map(|x| x.iter().copied().collect())
            .unwrap_or_default(),
        fibers,
        max_hopf_deviation,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseIIConfig {
    pub submersion_samples: usize,
    pub fibers: usize,
    pub points_per_fiber: usize,
    pub certification_samples: usize,
    pub base_samples: usize,
    pub threshold: f64,
    /// Minimum shape-operator eigenvalue required of each fiber slice.
    pub slice_threshold: f64,
}

impl Default for CaseIIConfig {
    fn default() -> Self {
        CaseIIConfig {
            submersion_samples: 1000,
            fibers: 10,
            points_per_fiber: 200,
            certification_samples: 200,
            base_samples: 64,
            threshold: 1e-6,
            slice_threshold: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseIIFiber {
    pub target: ProjectivePoint,
    pub points: usize,
    pub components: Option<ComponentCount>,
    pub component_error: Option<String>,
    pub slice_min_eigenvalue: f64,
    pub slice_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseIIReport {
    pub base: BaseTransversality,
    pub submersion_samples: usize,
    pub submersion_margin: f64,
    pub worst_point: Vec<f64>,
    pub fibers: Vec<CaseIIFiber>,
    pub pass: bool,
}

/// Nonempty-base case: `phi_L` is a submersion off the base, its fibers are
/// connected, and each compactified fiber is a strictly C-convex
/// hypersurface of its hyperplane.
pub fn case_ii_check(
    f: &dyn DefiningFunction,
    p: &Pencil,
    cfg: &CaseIIConfig,
    rng_seed: u64,
) -> Result<CaseIIReport> {
    if f.complex_dim() < 3 {
        return Err(Error::PreconditionN2);
    }
    let base = base_transversality(f, p, cfg.base_samples, rng_seed, cfg.threshold);
    let pts = sample_points(f, cfg.submersion_samples, rng_seed, "case-ii-submersion")?;
    let margins: Vec<Option<f64>> = pts
        .par_iter()
        .map(|x| {
            if p.base_distance(x) <= 1e-6 {
                return Ok(None);
            }
            Ok(Some(submersion_margin(p, &cr_frame(f, x)?)))
        })
        .collect::<Result<_>>()?;
    let (wk, submersion_margin) = margins
        .iter()
        .enumerate()
        .filter_map(|(k, m)| m.map(|m| (k, m)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, f64::INFINITY));
    let mut fibers = Vec::new();
    for k in 0..cfg.fibers {
        let target = random_projective(1, rng_seed, "case-ii-target", k as u64);
        let seed = crate::rng::derive_seed(rng_seed, "case-ii-fiber", k as u64);
        let mut cloud = sample_fiber(f, p, &target, cfg.points_per_fiber, seed)?;
        let (components, component_error) = match component_count(&mut cloud) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let slice = HyperplaneSlice::new(f, &p.member(&target))?;
        let cert = certify_strict_c_convexity(
            &slice,
            cfg.certification_samples,
            seed,
            cfg.slice_threshold,
        )?;
        fibers.push(CaseIIFiber {
            target,
            points: cloud.len(),
            components,
            component_error,
            slice_min_eigenvalue: cert.min_eigenvalue,
            slice_pass: cert.pass,
        });
    }
    let pass = base.pass
        && submersion_margin > cfg.threshold
        && fibers
            .iter()
            .all(|fb| fb.components.as_ref().is_some_and(|c| c.count == 1) && fb.slice_pass);
    Ok(CaseIIReport {
        base,
        submersion_samples: pts.len(),
        submersion_margin,
        worst_point: pts
            .get(wk)
            .map(|x| x.iter().copied().collect())
            .unwrap_or_default(),
        fibers,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Builtin;

    fn rv(v: &[f64]) -> RVec {
        RVec::from_vec(v.to_vec())
    }

    fn value(re: f64, im: f64) -> ProjectivePoint {
        ProjectivePoint::new(CVec::from_vec(vec![
            Complex64::new(re, im),
            Complex64::new(1.0, 0.0),
        ]))
        .unwrap()
    }

    #[test]
    fn sphere_fiber_over_zero_is_the_z1_circle() {
        let s = Builtin::sphere(2);
        let mut cloud = sample_fiber(&s, &Pencil::axis(2), &value(0.0, 0.0), 500, 2).unwrap();
        assert_eq!(cloud.len(), 500);
        for x in &cloud.points {
            assert!(x[2].hypot(x[3]) < 1e-10);
            assert!((x[0].hypot(x[1]) - 1.0).abs() < 1e-10);
        }
        let c = component_count(&mut cloud).unwrap();
        assert_eq!(c.count, 1);
    }

    #[test]
    fn missed_value_has_empty_fiber() {
        let s = Builtin::sphere(2);
        let e = sample_fiber(&s, &Pencil::axis(2), &value(2.0, 0.0), 20, 2).unwrap_err();
        assert!(matches!(e, Error::EmptyFiber { .. }));
    }

    #[test]
    fn zero_points_is_an_empty_cloud() {
        let s = Builtin::sphere(2);
        assert!(sample_fiber(&s, &Pencil::axis(2), &value(0.0, 0.0), 0, 2)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn small_cloud_is_rejected() {
        let s = Builtin::sphere(2);
        let mut cloud = sample_fiber(&s, &Pencil::axis(2), &value(0.1, 0.0), 10, 2).unwrap();
        assert!(matches!(
            component_count(&mut cloud),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn sphere_morse_index_is_two() {
        let s = Builtin::sphere(2);
        let m = morse_index(&s, &Pencil::axis(2), &rv(&[0.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(m.index, 2);
        assert!(
            m.finite_difference_error < 1e-6,
            "{}",
            m.finite_difference_error
        );
    }

    #[test]
    fn quartic_morse_data_is_degenerate() {
        let q = Builtin::QuarticModel { n: 2 };
        let e = morse_index(&q, &Pencil::axis(2), &rv(&[0.0, 0.0, 0.0, 0.0])).unwrap_err();
        assert!(matches!(e, Error::DegenerateHessian { .. }));
    }

    #[test]
    fn case_ii_rejects_two_dimensions() {
        let s = Builtin::sphere(2);
        let e = case_ii_check(&s, &Pencil::axis(2), &CaseIIConfig::default(), 1).unwrap_err();
        assert!(matches!(e, Error::PreconditionN2));
    }

    #[test]
    fn hopf_deviation_of_a_scalar_orbit_vanishes() {
        let z = CVec::from_vec(vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]);
        let pts: Vec<RVec> = (0..10)
            .map(|k| to_real(&(&z * Complex64::from_polar(1.0, k as f64))))
            .collect();
        assert!(hopf_deviation(&pts) < 1e-15);
    }

    #[test]
    fn fibers_shrink_towards_the_critical_circle() {
        let s = Builtin::sphere(2);
        let p = Pencil::axis(2);
        let pts: Vec<RVec> = (0..64)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 64.0;
                rv(&[0.0, 0.0, t.cos(), t.sin()])
            })
            .collect();
        let curve = CriticalCurve::from_points(&s, &p, pts).unwrap();
        let probe = fiber_shrinking(&s, &p, &curve, 5, 0.05, 5, 100, 3).unwrap();
        assert!(probe.monotone, "{:?}", probe.diameters);
        // The fiber over r e^{i theta} is a circle of radius sqrt(1 - r^2).
        for (d, o) in probe.diameters.iter().zip(&probe.offsets) {
            let expected = 2.0 * (1.0 - (1.0 - o).powi(2)).sqrt();
            assert!((d - expected).abs() < 0.05 * expected, "{d} vs {expected}");
        }
    }

    /// Two unit spheres centred at `z_1 = -3` and `z_1 = 3`.
    struct TwoSpheres;

    impl DefiningFunction for TwoSpheres {
        fn complex_dim(&self) -> usize {
            2
        }
        fn value(&self, x: &RVec) -> f64 {
            let (a, b) = self.factors(x);
            a * b
        }
        fn gradient(&self, x: &RVec) -> RVec {
            let (a, b) = self.factors(x);
            let (ga, gb) = self.factor_gradients(x);
            ga * b + gb * a
        }
        fn hessian(&self, x: &RVec) -> RMat {
            let (a, b) = self.factors(x);
            let (ga, gb) = self.factor_gradients(x);
            &ga * gb.transpose() + &gb * ga.transpose() + RMat::identity(4, 4) * (2.0 * (a + b))
        }
        fn sample_radius(&self) -> f64 {
            6.0
        }
    }

    impl TwoSpheres {
        fn centres() -> [RVec; 2] {
            [rv(&[-3.0, 0.0, 0.0, 0.0]), rv(&[3.0, 0.0, 0.0, 0.0])]
        }
        fn factors(&self, x: &RVec) -> (f64, f64) {
            let [c0, c1] = Self::centres();
            ((x - c0).norm_squared() - 1.0, (x - c1).norm_squared() - 1.0)
        }
        fn factor_gradients(&self, x: &RVec) -> (RVec, RVec) {
            let [c0, c1] = Self::centres();
            ((x - c0) * 2.0, (x - c1) * 2.0)
        }
    }

    #[test]
    fn two_sphere_fiber_has_two_components() {
        let mut cloud =
            sample_fiber(&TwoSpheres, &Pencil::axis(2), &value(0.3, 0.1), 300, 4).unwrap();
        let c = component_count(&mut cloud).unwrap();
        assert_eq!(c.count, 2);
        assert_eq!(c.counts, [2, 2, 2]);
    }

    #[test]
    fn axis_morse_index_on_five_sphere_is_four() {
        let s = Builtin::sphere(3);
        let m = morse_index(&s, &Pencil::axis(3), &rv(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(m.index, 4);
        assert_eq!(m.eigenvalues.len(), 4);
    }

    #[test]
    fn gauss_map_is_not_submersive_at_a_flat_point() {
        let q = Builtin::QuarticModel { n: 2 };
        let g = gauss_differential_on_d(&q, &rv(&[0.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(g.margin < 1e-12, "{}", g.margin);
        let s = gauss_differential_on_d(&Builtin::sphere(2), &rv(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(s.margin > 0.5);
    }

    #[test]
    fn ellipsoid_gauss_fibration_passes() {
        let e = Builtin::ellipsoid(&[1.0, 1.5]);
        let cfg = GaussFibrationConfig {
            samples: 200,
            fibers: 4,
            ..Default::default()
        };
        let r = gauss_fibration_check(&e, &cfg, 9).unwrap();
        assert!(r.pass);
        assert!(r.submersion_margin > 1e-3);
        for probe in &r.fibers {
            assert_eq!(probe.components.as_ref().unwrap().count, 1);
            assert!((probe.pca_dimension - 1.0).abs() <= 0.1);
        }
    }
}
