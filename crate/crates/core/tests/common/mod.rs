#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use ctrlcurv::families::{
    flat_normal_form_problem, riemannian_problem, translation_invariant_problem, zermelo_problem, FlatNormalForm,
    RiemannianFrame, ZermeloSpec,
};
use ctrlcurv::{Dynamics, Expr};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Region = [[f64; 2]; 3];

pub struct Family {
    pub name: &'static str,
    pub problem: Box<dyn Dynamics<f64>>,
    /// Sampling box for `(q1, q2, u)`.
    pub region: Region,
    /// `(q0, u0, horizon)` of test extremals.
    pub extremals: Vec<([f64; 2], f64, f64)>,
}

impl Family {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> ([f64; 2], f64) {
        let r = &self.region;
        let x = |rng: &mut ChaCha8Rng, i: usize| rng.gen_range(r[i][0]..r[i][1]);
        ([x(rng, 0), x(rng, 1)], x(rng, 2))
    }
}

pub fn expr(s: &str) -> Expr {
    s.parse().unwrap()
}

pub fn nonlinear_zermelo() -> ZermeloSpec {
    ZermeloSpec::new(expr("0.3*sin(q2)"), expr("0.2*cos(q1)"))
}

pub fn flat_instance() -> FlatNormalForm {
    FlatNormalForm::new(expr("0.3*sin(u)"), expr("0.3*q2^2*cos(u) + 0.2*sin(q2)"), 0.0, &Default::default()).unwrap()
}

fn riemannian(frame: RiemannianFrame) -> Box<dyn Dynamics<f64>> {
    Box::new(riemannian_problem(&frame).unwrap())
}

fn zermelo(spec: ZermeloSpec) -> Box<dyn Dynamics<f64>> {
    Box::new(zermelo_problem(&spec).unwrap())
}

pub fn all_families() -> Vec<Family> {
    let full = [0.0, TAU];
    vec![
        Family {
            name: "euclidean",
            problem: riemannian(RiemannianFrame::euclidean()),
            region: [[-2.0, 2.0], [-2.0, 2.0], full],
            extremals: vec![([0.0, 0.0], 0.7, 5.0)],
        },
        Family {
            name: "half-plane",
            problem: riemannian(RiemannianFrame::half_plane()),
            region: [[-2.0, 2.0], [0.5, 3.0], full],
            extremals: vec![([0.0, 1.0], 0.3, 3.0), ([0.5, 2.0], 1.2, 2.0)],
        },
        Family {
            name: "sphere",
            problem: riemannian(RiemannianFrame::sphere()),
            region: [[0.4, PI - 0.4], [-PI, PI], full],
            extremals: vec![([FRAC_PI_2, 0.0], FRAC_PI_2, 4.0), ([FRAC_PI_2, 0.0], FRAC_PI_2 + 0.3, 7.0)],
        },
        Family {
            name: "perturbed-sphere",
            problem: riemannian(RiemannianFrame::perturbed_sphere(0.01)),
            region: [[-2.0, 2.0], [-2.0, 2.0], full],
            extremals: vec![([0.8, -0.3], 1.0, 8.0), ([-1.0, 0.5], FRAC_PI_2 + 0.3, 8.0)],
        },
        Family {
            name: "zermelo-linear",
            problem: zermelo(ZermeloSpec::linear(0.8, 0.5)),
            region: [[-0.6, 0.6], [-0.6, 0.6], full],
            extremals: vec![([0.0, 0.0], 0.0, 12.0), ([0.3, -0.2], 2.0, 12.0)],
        },
        Family {
            name: "zermelo-linear-weak",
            problem: zermelo(ZermeloSpec::linear(0.2, 0.5)),
            region: [[-2.0, 2.0], [-2.0, 2.0], full],
            extremals: vec![([0.0, 0.0], 0.0, 50.0), ([1.0, -0.5], 2.0, 50.0)],
        },
        Family {
            name: "zermelo-linear-slow",
            problem: zermelo(ZermeloSpec::linear(0.1, -0.3)),
            region: [[-2.0, 2.0], [-2.0, 2.0], full],
            extremals: vec![([0.0, 0.0], 0.0, 50.0), ([0.5, 0.5], 4.0, 50.0)],
        },
        Family {
            name: "zermelo-constant",
            problem: zermelo(ZermeloSpec::constant(0.3, -0.2)),
            region: [[-2.0, 2.0], [-2.0, 2.0], full],
            extremals: vec![([0.0, 0.0], 1.0, 10.0)],
        },
        Family {
            name: "zermelo-nonlinear",
            problem: zermelo(nonlinear_zermelo()),
            region: [[-2.0, 2.0], [-2.0, 2.0], full],
            extremals: vec![([0.0, 0.0], 0.5, 10.0), ([1.0, -1.0], 2.5, 10.0)],
        },
        Family {
            name: "translation-invariant",
            problem: Box::new(translation_invariant_problem(expr("cos(u) + 0.2"), expr("0.5*sin(u)")).unwrap()),
            region: [[-2.0, 2.0], [-2.0, 2.0], full],
            extremals: vec![([0.0, 0.0], 1.0, 5.0)],
        },
        Family {
            name: "flat-rotation",
            problem: Box::new(flat_normal_form_problem(&FlatNormalForm::rotation())),
            region: [[-0.5, 0.5], [-0.5, 0.5], [-1.0, 1.0]],
            extremals: vec![([0.2, 0.1], 0.3, 1.0)],
        },
        Family {
            name: "flat-normal-form",
            problem: Box::new(flat_normal_form_problem(&flat_instance())),
            region: [[-0.5, 0.5], [-0.5, 0.5], [-1.0, 1.0]],
            extremals: vec![([0.2, 0.1], 0.3, 1.0)],
        },
    ]
}
