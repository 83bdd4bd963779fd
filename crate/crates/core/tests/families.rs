mod common;

use std::f64::consts::PI;

use common::expr;
use ctrlcurv::families::{flat_normal_form_problem, translation_invariant_problem, zermelo_problem, FlatNormalForm, ZermeloSpec};
use ctrlcurv::invariants::{curvature_sweep, flatness_report, Axis, SampleGrid};
use ctrlcurv::Dynamics;

fn grid(r: f64, n: usize, nu: usize) -> SampleGrid {
    SampleGrid::new(Axis::new(-r, r, n), Axis::new(-r, r, n), Axis::new(0.0, 2.0 * PI, nu))
}

#[test]
fn linear_drift_curvature_is_constant() {
    let p = zermelo_problem(&ZermeloSpec::linear(0.8, 0.5)).unwrap();
    let ks: Vec<f64> = curvature_sweep::<f64, _>(&p, &grid(0.6, 10, 16), 6)
        .into_iter()
        .map(|s| s.unwrap().kappa)
        .collect();
    assert_eq!(ks.len(), 1600);
    let (lo, hi) = ks.iter().fold((f64::MAX, f64::MIN), |(a, b), &k| (a.min(k), b.max(k)));
    assert!(hi - lo < 1e-8);
    assert!((lo + 0.16).abs() < 1e-8);
}

#[test]
fn pure_rotation_drift_has_zero_curvature_but_is_not_flat() {
    let p = zermelo_problem(&ZermeloSpec::linear(0.0, 0.9)).unwrap();
    let rep = flatness_report::<f64, _>(&p, &grid(0.7, 5, 8), 1e-5, 6).unwrap();
    assert!(rep.sup_kappa.value < 1e-10);
    assert!(!rep.verdict_flat);
    assert!(rep.sup_lhb.value.max(rep.sup_lvh_b.value) > 1e-3);
}

#[test]
fn drift_outside_the_unit_disk_is_rejected() {
    let p = zermelo_problem(&ZermeloSpec::linear(0.8, 0.5)).unwrap();
    let out = curvature_sweep::<f64, _>(&p, &grid(2.0, 3, 4), 6);
    assert!(out.iter().any(|s| s.is_err()));
    assert!(out.iter().any(|s| s.is_ok()));
}

#[test]
fn translation_invariant_references_are_flat() {
    for (f1, f2) in [("cos(u)", "sin(u)"), ("cos(u) + 0.5", "sin(u)"), ("cos(u)", "2*sin(u)")] {
        let p = translation_invariant_problem(expr(f1), expr(f2)).unwrap();
        let rep = flatness_report::<f64, _>(&p, &grid(1.0, 3, 16), 1e-5, 6).unwrap();
        assert!(rep.verdict_flat, "({f1}, {f2})");
    }
    // a centred ellipse is the unit circle of a constant metric; an
    // off-centre circle is not Riemannian
    let ellipse = translation_invariant_problem(expr("cos(u)"), expr("2*sin(u)")).unwrap();
    let shifted = translation_invariant_problem(expr("cos(u) + 0.5"), expr("sin(u)")).unwrap();
    let b = |p: &ctrlcurv::ControlProblem| -> f64 { ctrlcurv::fiber::invariant_b(p, [0.0, 0.0], 0.5).unwrap() };
    assert!(b(&ellipse).abs() < 1e-12);
    assert!(b(&shifted).abs() > 1e-3);
}

#[test]
fn affine_generator_has_vanishing_curvature() {
    let form = FlatNormalForm::new(expr("1"), expr("0"), 0.0, &Default::default()).unwrap();
    let p = flat_normal_form_problem(&form);
    let g = SampleGrid::new(Axis::new(-0.5, 0.5, 3), Axis::new(-0.5, 0.5, 3), Axis::new(-1.0, 1.0, 4));
    let rep = flatness_report::<f64, _>(&p, &g, 1e-5, 6).unwrap();
    assert!(rep.verdict_commuting_frame);
}

#[test]
fn generated_instance_depends_on_the_state() {
    let p = flat_normal_form_problem(&common::flat_instance());
    let a: [f64; 3] = p.eval_point([0.0, 0.0], 0.5).unwrap();
    let b: [f64; 3] = p.eval_point([0.3, -0.4], 0.5).unwrap();
    assert!((a[0] - b[0]).abs() + (a[1] - b[1]).abs() > 1e-3);
}

#[test]
fn generated_second_column_matches_the_control_derivative() {
    let p = flat_normal_form_problem(&common::flat_instance());
    for (q, u) in [([0.1, 0.2], 0.4), ([-0.3, 0.2], -0.8)] {
        let inv = p.inverse_jacobian(q, u).unwrap();
        let v = ctrlcurv::jets::Jet::<f64>::variables(&[q[0], q[1], u], 2).unwrap();
        let f = p.eval_jets(&v[0], &v[1], &v[2]).unwrap();
        for i in 0..2 {
            let fu: f64 = f[i].derivative(2).unwrap().value();
            assert!((fu - inv[1][i]).abs() < 1e-6);
        }
    }
}
