//! Seeded point sampling on `M`: uniform seeds in a box, Newton-projected.

use rand::Rng;
use rayon::prelude::*;

use super::frame::project_to_hypersurface;
use super::function::DefiningFunction;
use crate::error::{Error, Result};
use crate::linalg::RVec;
use crate::rng::{substream, StreamRng};

const ATTEMPTS_PER_POINT: usize = 64;
const BOX_INFLATION: f64 = 1.2;

/// One point of `M` drawn from `rng`, or `None` after the attempt budget.
pub fn sample_point(f: &dyn DefiningFunction, rng: &mut StreamRng) -> Option<RVec> {
    let center = f.sample_center();
    let half = BOX_INFLATION * f.sample_radius();
    for _ in 0..ATTEMPTS_PER_POINT {
        let z = RVec::from_fn(center.len(), |k, _| {
            center[k] + half * (2.0 * rng.random::<f64>() - 1.0)
        });
        if let Ok(x) = project_to_hypersurface(f, &z) {
            if (&x - &center).amax() <= half {
                return Some(x);
            }
        }
    }
    None
}

/// `count` points on `M`; point `k` comes from substream `(seed, stage, k)`.
pub fn sample_points(
    f: &dyn DefiningFunction,
    count: usize,
    seed: u64,
    stage: &str,
) -> Result<Vec<RVec>> {
    let pts: Vec<Option<RVec>> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, stage, k as u64);
            sample_point(f, &mut rng)
        })
        .collect();
    let obtained = pts.iter().filter(|p| p.is_some()).count();
    if obtained < count {
        return Err(Error::SamplerStarved {
            requested: count,
            obtained,
            attempts: count * ATTEMPTS_PER_POINT,
        });
    }
    Ok(pts.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::function::Builtin;

    #[test]
    fn samples_lie_on_the_hypersurface_and_are_reproducible() {
        let el = Builtin::ellipsoid(&[1.0, 1.5]);
        let a = sample_points(&el, 50, 9, "t").unwrap();
        let b = sample_points(&el, 50, 9, "t").unwrap();
        assert_eq!(a, b);
        for x in &a {
            assert!(el.value(x).abs() <= 1e-10);
        }
    }

    #[test]
    fn zero_count_is_empty() {
        let s = Builtin::sphere(2);
        assert!(sample_points(&s, 0, 1, "t").unwrap().is_empty());
    }
}
