use cconvex::critical::delta_residual;
use cconvex::dual::ProjectivePoint;
use cconvex::fiber::{morse_index, sample_fiber};
use cconvex::geometry::{project_to_hypersurface, shape_operator};
use cconvex::linalg::{CVec, RVec};
use cconvex::pencil::{induced_map, Pencil};
use cconvex::scenario::config::PencilSpec;
use cconvex::{Builtin, DefiningFunction, ScenarioConfig};
use num_complex::Complex64;
use proptest::prelude::*;

fn complex() -> impl Strategy<Value = Complex64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn nonzero_complex() -> impl Strategy<Value = Complex64> {
    complex().prop_filter("away from zero", |c| c.norm() > 0.1)
}

fn ellipsoid() -> impl Strategy<Value = Builtin> {
    prop::collection::vec(0.6..1.8f64, 2..=3).prop_map(|axes| Builtin::ellipsoid(&axes))
}

/// Point of `M` reached by projecting a direction from the origin.
fn on_hypersurface(f: &Builtin, dir: &[f64]) -> Option<RVec> {
    let v = RVec::from_iterator(f.real_dim(), dir.iter().copied().cycle().take(f.real_dim()));
    if v.norm() < 0.2 {
        return None;
    }
    project_to_hypersurface(f, &(&v / v.norm())).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projective_points_are_unit_and_scale_invariant(
        v in prop::collection::vec(complex(), 3),
        s in nonzero_complex(),
    ) {
        let v = CVec::from_vec(v);
        prop_assume!(v.norm() > 0.1);
        let p = ProjectivePoint::new(v.clone()).unwrap();
        let q = ProjectivePoint::new(&v * s).unwrap();
        prop_assert!((p.coords().norm() - 1.0).abs() < 1e-14);
        prop_assert!(p.distance(&q) < 1e-12);
        prop_assert!((p.coords() - q.coords()).norm() < 1e-12);
    }

    #[test]
    fn shape_operator_is_symmetric_and_positive_on_ellipsoids(
        f in ellipsoid(),
        dir in prop::collection::vec(-1.0..1.0f64, 6),
    ) {
        let Some(x) = on_hypersurface(&f, &dir) else { return Ok(()) };
        let s = shape_operator(&f, &x).unwrap();
        let asym = (&s.matrix - s.matrix.transpose()).amax();
        prop_assert!(asym <= 1e-12 * s.matrix.amax().max(1.0));
        prop_assert_eq!(s.index, 0);
        prop_assert!(s.min_eigenvalue() > 0.0);
    }

    #[test]
    fn morse_index_on_the_critical_circle_is_maximal(
        f in ellipsoid(),
        angle in 0.0..std::f64::consts::TAU,
    ) {
        let Builtin::Ellipsoid { axes } = &f else { unreachable!() };
        let n = axes.len();
        let mut x = RVec::zeros(2 * n);
        x[2 * n - 2] = axes[n - 1] * angle.cos();
        x[2 * n - 1] = axes[n - 1] * angle.sin();
        let m = morse_index(&f, &Pencil::axis(n), &x).unwrap();
        prop_assert!(m.index <= 2 * n - 2);
        prop_assert_eq!(m.index, 2 * n - 2);
    }

    #[test]
    fn criticality_ignores_the_scale_of_the_covectors(
        angle in 0.0..std::f64::consts::TAU,
        s0 in nonzero_complex(),
        s1 in nonzero_complex(),
    ) {
        let f = Builtin::sphere(2);
        let x = RVec::from_vec(vec![0.0, 0.0, angle.cos(), angle.sin()]);
        let p = Pencil::axis(2);
        let scaled = Pencil::new(p.h0() * s0, p.h1() * s1).unwrap();
        prop_assert!(delta_residual(&f, &scaled, &x).unwrap().amax() < 1e-12);
        // The induced map changes by the Mobius map a -> (s0 / s1) a only.
        let a = induced_map(&p, &x).unwrap();
        let b = induced_map(&scaled, &x).unwrap();
        let ratio = (s0 / s0.norm()) / (s1 / s1.norm());
        let expected = ProjectivePoint::new(CVec::from_vec(vec![a.coords()[0] * ratio, a.coords()[1]])).unwrap();
        prop_assert!(b.distance(&expected) < 1e-12);
    }

    #[test]
    fn configurations_round_trip(
        seed in any::<u64>(),
        pencil_seed in any::<u64>(),
        samples in 1usize..5000,
        scale in 0.1..10.0f64,
    ) {
        let mut cfg = ScenarioConfig {
            seed,
            pencil: PencilSpec::Random { seed: pencil_seed },
            ..Default::default()
        };
        cfg.budgets.dual_samples = samples;
        cfg.tolerances = cfg.tolerances.scaled(scale);
        let text = serde_json::to_string(&cfg).unwrap();
        prop_assert_eq!(ScenarioConfig::from_str(&text).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn fiber_points_solve_the_fiber_equations(a in complex().prop_filter("inside", |a| a.norm() < 0.9)) {
        let f = Builtin::sphere(2);
        let p = Pencil::axis(2);
        let target = ProjectivePoint::new(CVec::from_vec(vec![a, Complex64::new(1.0, 0.0)])).unwrap();
        let cloud = sample_fiber(&f, &p, &target, 30, 3).unwrap();
        prop_assert!(!cloud.is_empty());
        prop_assert!(cloud.residuals.iter().all(|r| *r <= 1e-10));
        for x in &cloud.points {
            prop_assert!(f.value(x).abs() <= 1e-10);
            prop_assert!(induced_map(&p, x).unwrap().distance(&target) <= 1e-10);
        }
    }
}
