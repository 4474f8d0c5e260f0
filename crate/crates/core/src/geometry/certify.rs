use serde::Serialize;

use super::chart::adapted_frame_and_graph;
use super::frame::shape_operator;
use super::function::DefiningFunction;
use super::sampler::sample_points;
use crate::error::Result;
use crate::linalg::RVec;
use rayon::prelude::*;

/// Default positivity threshold for the minimum shape-operator eigenvalue.
pub const POSITIVITY_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityCertificate {
    pub samples: usize,
    pub min_eigenvalue: f64,
    pub worst_point: Vec<f64>,
    /// Minimum over the raw samples, before local refinement.
    pub sampled_min_eigenvalue: f64,
    pub max_index: usize,
    pub threshold: f64,
    pub pass: bool,
}

fn min_eigenvalue_at(f: &dyn DefiningFunction, x: &RVec) -> f64 {
    shape_operator(f, x)
        .map(|s| s.min_eigenvalue())
        .unwrap_or(f64::NEG_INFINITY)
}

/// Sampled lower bound for the shape operator on `D`, refined around the worst
/// samples by a compass search in graph charts.
pub fn certify_strict_c_convexity(
    f: &dyn DefiningFunction,
    sample_count: usize,
    rng_seed: u64,
    threshold: f64,
) -> Result<ConvexityCertificate> {
    let pts = sample_points(f, sample_count, rng_seed, "certify")?;
    let data: Vec<(f64, usize)> = pts
        .par_iter()
        .map(|x| match shape_operator(f, x) {
            Ok(s) => (s.min_eigenvalue(), s.index),
            Err(_) => (f64::NEG_INFINITY, usize::MAX),
        })
        .collect();
    let max_index = data
        .iter()
        .map(|d| d.1)
        .filter(|&i| i != usize::MAX)
        .max()
        .unwrap_or(0);
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| data[a].0.total_cmp(&data[b].0));

    let sampled_min = order.first().map(|&k| data[k].0).unwrap_or(f64::INFINITY);
    let mut best = (sampled_min, order.first().map(|&k| pts[k].clone()));
    let refined: Vec<(f64, RVec)> = order
        .iter()
        .take(3)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&k| refine_minimum(f, &pts[k], data[k].0))
        .collect();
    for (v, x) in refined {
        if v < best.0 {
            best = (v, Some(x));
        }
    }

    Ok(ConvexityCertificate {
        samples: pts.len(),
        min_eigenvalue: best.0,
        worst_point: best
            .1
            .map(|x| x.iter().copied().collect())
            .unwrap_or_default(),
        sampled_min_eigenvalue: sampled_min,
        max_index,
        threshold,
        pass: pts.is_empty() || best.0 > threshold,
    })
}

fn refine_minimum(f: &dyn DefiningFunction, start: &RVec, start_value: f64) -> (f64, RVec) {
    let mut x = start.clone();
    let mut value = start_value;
    if !value.is_finite() {
        return (value, x);
    }
    let mut chart = match adapted_frame_and_graph(f, &x) {
        Ok(c) => c,
        Err(_) => return (value, x),
    };
    let m = chart.chart_dim();
    let mut step = 0.25 * chart.radius;
    let floor = 1e-10 * chart.radius.max(1e-3);
    let mut evals = 0;
    while step > floor && evals < 4000 {
        let (q0, _) = chart.coordinates(&x);
        let mut improved = false;
        'dirs: for a in 0..m {
            for sign in [1.0, -1.0] {
                let mut q = q0.clone();
                q[a] += sign * step;
                evals += 1;
                let Ok(p) = chart.psi(&q) else { continue };
                let v = min_eigenvalue_at(f, &p);
                if v < value {
                    value = v;
                    x = p;
                    improved = true;
                    break 'dirs;
                }
            }
        }
        if !improved {
            step *= 0.5;
        } else if chart.coordinates(&x).0.norm() > 0.5 * chart.radius {
            match adapted_frame_and_graph(f, &x) {
                Ok(c) => chart = c,
                Err(_) => break,
            }
        }
    }
    (value, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::function::Builtin;

    #[test]
    fn unit_sphere_certifies_with_unit_minimum() {
        let s = Builtin::sphere(2);
        let c = certify_strict_c_convexity(&s, 200, 3, POSITIVITY_THRESHOLD).unwrap();
        assert!(c.pass);
        assert!((c.min_eigenvalue - 1.0).abs() < 1e-8);
    }

    #[test]
    fn saddle_model_fails() {
        let m = Builtin::SaddleModel { n: 2 };
        let c = certify_strict_c_convexity(&m, 100, 3, POSITIVITY_THRESHOLD).unwrap();
        assert!(!c.pass);
        assert!(c.min_eigenvalue < 0.0);
        assert_eq!(c.max_index, 1);
    }
}
