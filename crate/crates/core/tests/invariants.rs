//! Property checks on geometry, closures, metrics and the stepper.

use ghostcell::closure::{build_all_closures, build_closure, ClosureGeometry};
use ghostcell::geometry::{classify_nodes, project, NodeClassification};
use ghostcell::metrics::{cerror, cerror_comp};
use ghostcell::solver::{init_delta, run, BoundaryModel, SimConfig};
use ghostcell::{
    Algorithm, AlgorithmSpec, BasisFamily, BoundaryConditionSpec, CircleBoundary, GridSpec, NodeClass, NodeIndex,
    Point2, WeightSpec,
};
use proptest::prelude::*;

fn lattice(radius: f64) -> (GridSpec, CircleBoundary, NodeClassification) {
    let n = 2 * radius.ceil() as usize + 2;
    let grid = GridSpec::centered(Point2::default(), n, 2, 1.0, 1.0).unwrap();
    let circle = CircleBoundary::new(Point2::default(), radius).unwrap();
    let cls = classify_nodes(&grid, &circle).unwrap();
    (grid, circle, cls)
}

fn spline(alg: Algorithm, basis: BasisFamily, beta: f64, kappa: f64) -> AlgorithmSpec {
    AlgorithmSpec::new(alg, basis, WeightSpec::CubicSpline { beta }, kappa)
}

fn basis_strategy() -> impl Strategy<Value = BasisFamily> {
    prop::sample::select(BasisFamily::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compensated_error_is_bounded_by_its_parts(
        fd_bc in 0.1f64..10.0, ana_bc in 0.1f64..10.0, fd_free in 0.0f64..10.0, ana_free in 0.0f64..10.0,
    ) {
        let comp = cerror_comp(fd_bc, ana_bc, fd_free, ana_free).unwrap();
        let raw = cerror(fd_bc, ana_bc).unwrap();
        let lattice_part = ((fd_free - ana_free) / ana_bc).abs();
        prop_assert!(comp <= raw + lattice_part + 1e-12 * (raw + lattice_part));
        prop_assert!(raw <= comp + lattice_part + 1e-12 * (comp + lattice_part));
    }

    #[test]
    fn classification_has_the_lattice_symmetries(radius in 2.0f64..12.0) {
        let (grid, _, cls) = lattice(radius);
        let n = grid.n_cells_x;
        for j in 0..=n {
            for k in 0..=n {
                let c = cls.class(NodeIndex::new(j, k));
                prop_assert_eq!(c, cls.class(NodeIndex::new(n - j, k)));
                prop_assert_eq!(c, cls.class(NodeIndex::new(j, n - k)));
                prop_assert_eq!(c, cls.class(NodeIndex::new(k, n - j)));
            }
        }
        prop_assert!(cls.count(NodeClass::Gp) % 4 == 0);
    }

    #[test]
    fn projection_lands_on_the_circle(
        cx in -5.0f64..5.0, cy in -5.0f64..5.0, radius in 0.5f64..4.0,
        angle in 0.0f64..std::f64::consts::TAU, scale in 0.05f64..3.0,
    ) {
        let center = Point2::new(cx, cy);
        let circle = CircleBoundary::new(center, radius).unwrap();
        let p = center + (scale * radius) * Point2::new(angle.cos(), angle.sin());
        let proj = project(p, &circle).unwrap();
        let tol = 1e-12 * (radius + cx.abs() + cy.abs());
        prop_assert!((proj.bi.distance(center) - radius).abs() <= tol);
        prop_assert!((proj.ip.distance(proj.bi) - proj.delta).abs() <= tol);
        prop_assert!((p.distance(proj.bi) - proj.delta).abs() <= tol);
        // Source, intercept and image lie on one radial line.
        let u = p - center;
        let v = proj.ip - center;
        prop_assert!((u.x * v.y - u.y * v.x).abs() <= tol * (u.norm() + v.norm()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_closure_reproduces_a_constant(
        basis in basis_strategy(),
        alg in prop::sample::select(vec![Algorithm::Mls, Algorithm::Cmls, Algorithm::Ecmls]),
        beta in 3.0f64..4.0,
        kappa in prop::sample::select(vec![0.0, 1.0, 100.0]),
    ) {
        let (_, circle, cls) = lattice(8.3);
        let bc = BoundaryConditionSpec::zero_flux(1.0);
        let set = build_all_closures(&cls, &circle, &spline(alg, basis, beta, kappa), &bc).unwrap();
        prop_assert!(!set.closures.is_empty());
        for c in set.closures.values() {
            let v = c.apply(|_| 2.5);
            prop_assert!((v - 2.5).abs() <= 1e-9, "{} at {}: {}", alg.name(), c.gp, v);
        }
    }

    #[test]
    fn tangential_linear_fields_are_reproduced_at_the_image(
        gp_pick in 0usize..1000,
        slope in -2.0f64..2.0,
        offset in -1.0f64..1.0,
        alg in prop::sample::select(vec![Algorithm::Mls, Algorithm::Cmls]),
        basis in prop::sample::select(vec![BasisFamily::Quadratic, BasisFamily::IncompleteQuartic, BasisFamily::Cubic]),
    ) {
        // A linear field with no normal component at the intercept satisfies
        // the zero-flux constraint there, so the closure must return its
        // value at the image point.
        let (grid, circle, cls) = lattice(8.3);
        let gp = cls.ghost_points()[gp_pick % cls.ghost_points().len()];
        let proj = project(grid.position(gp), &circle).unwrap();
        let tangent = Point2::new(-proj.normal.y, proj.normal.x);
        let field = |p: Point2| offset + slope * ((p.x - proj.bi.x) * tangent.x + (p.y - proj.bi.y) * tangent.y);
        let bc = BoundaryConditionSpec::zero_flux(1.0);
        let geom = ClosureGeometry { boundary: &circle, classification: &cls };
        let c = build_closure(gp, &spline(alg, basis, 3.5, 100.0), &bc, geom).unwrap();
        let got = c.apply(|n| field(grid.position(n)));
        prop_assert!((got - field(proj.ip)).abs() <= 1e-9, "{} vs {}", got, field(proj.ip));
    }
}

#[test]
fn penalized_closure_converges_as_kappa_grows() {
    let (_, circle, cls) = lattice(8.3);
    let bc = BoundaryConditionSpec::zero_flux(1.0);
    let geom = ClosureGeometry { boundary: &circle, classification: &cls };
    let gp = cls.ghost_points()[0];
    let coeffs = |kappa: f64| {
        build_closure(gp, &spline(Algorithm::Cmls, BasisFamily::Quadratic, 3.5, kappa), &bc, geom).unwrap().coeffs
    };
    let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let k2 = coeffs(1e2);
    let k4 = coeffs(1e4);
    let k6 = coeffs(1e6);
    let k8 = coeffs(1e8);
    assert!(gap(&k6, &k8) < 1e-2 * gap(&k2, &k4).max(1e-300) || gap(&k6, &k8) < 1e-10);
    assert!(gap(&k6, &k8) < 1e-4, "{}", gap(&k6, &k8));
}

fn small_config(model: BoundaryModel, steps: usize) -> SimConfig {
    let (grid, circle, _) = lattice(10.3);
    let dt = 0.2;
    SimConfig {
        grid,
        boundary: circle,
        diffusivity: 1.0,
        dt,
        model,
        bc: BoundaryConditionSpec::zero_flux(1.0),
        t_end: steps as f64 * dt,
        snapshot_times: vec![],
    }
}

#[test]
fn runs_are_deterministic() {
    let model = BoundaryModel::Closure(spline(Algorithm::Ecmls, BasisFamily::IncompleteQuartic, 3.0, 100.0));
    let cfg = small_config(model, 80);
    let a = run(&cfg, true).unwrap();
    let b = run(&cfg, true).unwrap();
    assert_eq!(a.snapshots, b.snapshots);
    assert_eq!(a.probes, b.probes);
}

#[test]
fn staircase_obeys_the_maximum_principle() {
    let cfg = small_config(BoundaryModel::Staircase, 200);
    let out = run(&cfg, true).unwrap();
    let peak = init_delta(&cfg).unwrap().values.iter().cloned().fold(0.0, f64::max);
    let interior: Vec<usize> = out
        .classification
        .classes()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_interior())
        .map(|(i, _)| i)
        .collect();
    let last = out.snapshots.last().unwrap();
    let max_end = interior.iter().map(|&i| last.values[i]).fold(f64::MIN, f64::max);
    assert!(max_end <= peak && max_end > 0.0);
    for &i in &interior {
        assert!(last.values[i] >= 0.0);
    }
}

#[test]
fn staircase_signal_travels_one_cell_per_step() {
    let cfg = small_config(BoundaryModel::Staircase, 40);
    let out = run(&cfg, true).unwrap();
    let g = cfg.grid;
    let center = g.node_at(Point2::default()).unwrap();
    for (i, node) in out.probe_nodes.iter().enumerate() {
        let manhattan = (node.j as isize - center.j as isize).unsigned_abs()
            + (node.k as isize - center.k as isize).unsigned_abs();
        let first = out.probes.iter().position(|row| row[i] != 0.0);
        if manhattan <= 40 {
            assert_eq!(first, Some(manhattan), "{node}");
        } else {
            assert_eq!(first, None, "{node}");
        }
    }
}
