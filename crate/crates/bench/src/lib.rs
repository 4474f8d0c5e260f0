//! Shared fixtures for the benchmarks in `benches/`.

use cconvex::geometry::project_to_hypersurface;
use cconvex::linalg::RVec;
use cconvex::Builtin;

/// A fixed point of `M` away from any coordinate axis.
pub fn generic_point(f: &Builtin) -> RVec {
    use cconvex::DefiningFunction;
    let n = f.real_dim();
    let z = RVec::from_fn(n, |k, _| {
        0.3 + 0.1 * k as f64 * if k % 2 == 0 { 1.0 } else { -1.0 }
    });
    project_to_hypersurface(f, &z).expect("projection converges")
}
