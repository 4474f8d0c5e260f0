//! Closed-form reference values for round spheres and for linear pencils on
//! ellipsoids.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::TAU;

#[derive(Debug, Clone, Serialize)]
pub struct SphereOracle {
    pub n: usize,
    pub radius: f64,
    /// Every eigenvalue of the shape operator on `D`.
    pub shape_operator_eigenvalue: f64,
    /// The complex Gauss map is `[conj z_1 : ... : conj z_N]`.
    pub gauss_map: &'static str,
    /// Derivative of the last dual-map component along the normal direction
    /// of a graph chart, at the chart origin.
    pub dual_last_derivative: f64,
    /// Axis pencil `[z_N : 1]`: the critical set is `{z' = 0, |z_N| = r}`.
    pub critical_set: &'static str,
    pub critical_length: f64,
    /// The image curve is the circle `|a| = r`.
    pub image_radius: f64,
    pub regular_region: &'static str,
    pub missed_region: &'static str,
    pub morse_index: usize,
    /// Gauss fibers are orbits `e^{i theta} x`.
    pub hopf_deviation: f64,
}

pub fn round_sphere(n: usize, radius: f64) -> SphereOracle {
    SphereOracle {
        n,
        radius,
        shape_operator_eigenvalue: 1.0 / radius,
        gauss_map: "[conj z_1 : ... : conj z_N]",
        dual_last_derivative: -1.0,
        critical_set: "z_1 = ... = z_{N-1} = 0, |z_N| = r",
        critical_length: TAU * radius,
        image_radius: radius,
        regular_region: "|a| < r",
        missed_region: "|a| > r",
        morse_index: 2 * n - 2,
        hopf_deviation: 0.0,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearPencilOracle {
    /// Radius of the critical circle `{mu (a_j^2 conj c_j)_j : |mu| = const}`.
    pub critical_radius: f64,
    pub critical_length: f64,
    /// `K` is the circle of this radius about `0` in the chart `a = sum c_j z_j`.
    pub image_radius: f64,
}

/// Pencil `[sum_j c_j z_j : 1]` on `sum |z_j|^2 / a_j^2 = 1`. The critical
/// set is where `conj z_j / a_j^2` is proportional to `c_j`.
pub fn ellipsoid_linear_pencil(axes: &[f64], c: &[Complex64]) -> LinearPencilOracle {
    let s2: f64 = axes.iter().zip(c).map(|(a, c)| a * a * c.norm_sqr()).sum();
    let s4: f64 = axes
        .iter()
        .zip(c)
        .map(|(a, c)| a.powi(4) * c.norm_sqr())
        .sum();
    let critical_radius = (s4 / s2).sqrt();
    LinearPencilOracle {
        critical_radius,
        critical_length: TAU * critical_radius,
        image_radius: s2.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipsoid_formula_reduces_to_the_sphere() {
        let c = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let o = ellipsoid_linear_pencil(&[2.0, 2.0], &c);
        let s = round_sphere(2, 2.0);
        assert!((o.critical_length - s.critical_length).abs() < 1e-14);
        assert!((o.image_radius - s.image_radius).abs() < 1e-14);
    }
}
