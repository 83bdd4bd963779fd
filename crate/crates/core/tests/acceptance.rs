//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p ctrlcurv --test acceptance`.

mod common;

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;
use std::time::Instant;

use common::{all_families, expr, flat_instance, nonlinear_zermelo, Family};
use ctrlcurv::families::{
    flat_normal_form_problem, riemannian_problem, translation_invariant_problem, zermelo_problem, FlatNormalForm,
    RiemannianFrame, ZermeloSpec,
};
use ctrlcurv::fiber::hamiltonian_field;
use ctrlcurv::flow::{integrate_extremal, jacobi_solve, sturm_bounds, ExtremalOptions, ExtremalPath, JacobiSolution};
use ctrlcurv::invariants::{
    bnk_residual, curvature_sweep, curvature_with_degree, flatness_report, pde_for_c_residual, riemannian_curvature,
    Axis, InvariantJets, SampleGrid,
};
use ctrlcurv::jets::Jet;
use ctrlcurv::ode::{dormand_prince, dormand_prince_fixed, OdeOptions};
use ctrlcurv::system::{correspond_point, transform_problem_implicit};
use ctrlcurv::{Dynamics, FeedbackTransform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn grid(q1: (f64, f64, usize), q2: (f64, f64, usize), u: (f64, f64, usize)) -> SampleGrid {
    SampleGrid::new(Axis::new(q1.0, q1.1, q1.2), Axis::new(q2.0, q2.1, q2.2), Axis::new(u.0, u.1, u.2))
}

struct Run {
    family: &'static str,
    q0: [f64; 2],
    u0: f64,
    horizon: f64,
    path: ExtremalPath<f64>,
    jacobi: Result<JacobiSolution<f64>, ctrlcurv::Error>,
}

/// Every test extremal of every family, integrated once.
fn runs() -> &'static [Run] {
    static RUNS: OnceLock<Vec<Run>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut out = Vec::new();
        for fam in all_families() {
            for &(q0, u0, horizon) in &fam.extremals {
                let p = &*fam.problem;
                let path = integrate_extremal(p, q0, u0, horizon, &ExtremalOptions::default()).expect("regular start");
                let jacobi = jacobi_solve(p, &path);
                out.push(Run {
                    family: fam.name,
                    q0,
                    u0,
                    horizon,
                    path,
                    jacobi,
                });
            }
        }
        out
    })
}

fn c1_linear_zermelo() -> Outcome {
    let p = zermelo_problem(&ZermeloSpec::linear(0.8, 0.5)).unwrap();
    let g = grid((-0.5, 0.5, 4), (-0.5, 0.5, 4), (0.0, 2.0 * PI, 8));
    let mut worst = 0.0f64;
    let mut n = 0;
    for s in curvature_sweep::<f64, _>(&p, &g, 6) {
        match s {
            Ok(s) => {
                worst = worst.max((s.kappa + 0.16).abs());
                n += 1;
            }
            Err(e) => return outcome(false, format!("sweep error: {e}")),
        }
    }
    outcome(n == 128 && worst < 1e-6, format!("{n} points, max |κ + 0.16| = {worst:.3e}"))
}

fn riemannian_frames() -> Vec<(&'static str, RiemannianFrame, SampleGrid, f64)> {
    vec![
        ("euclidean", RiemannianFrame::euclidean(), grid((-2.0, 2.0, 20), (-2.0, 2.0, 20), (0.0, 2.0 * PI, 16)), 0.0),
        ("half-plane", RiemannianFrame::half_plane(), grid((-2.0, 2.0, 20), (0.5, 3.0, 20), (0.0, 2.0 * PI, 16)), -1.0),
        ("sphere", RiemannianFrame::sphere(), grid((0.4, PI - 0.4, 20), (-PI, PI, 20), (0.0, 2.0 * PI, 16)), 1.0),
    ]
}

fn c2_riemannian_b() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, frame, g, _) in riemannian_frames() {
        let p = riemannian_problem(&frame).unwrap();
        let mut sup = 0.0f64;
        for s in curvature_sweep::<f64, _>(&p, &g, 5) {
            match s {
                Ok(s) => sup = sup.max(s.b.abs()),
                Err(e) => return outcome(false, format!("{name}: {e}")),
            }
        }
        pass &= sup < 1e-8;
        parts.push(format!("{name} sup|b| = {sup:.2e}"));
    }
    outcome(pass, parts.join(", "))
}

fn c3_gaussian_curvature() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, frame, _, expected) in riemannian_frames() {
        let p = riemannian_problem(&frame).unwrap();
        let g = match name {
            "euclidean" => grid((-2.0, 2.0, 5), (-2.0, 2.0, 5), (0.0, 2.0 * PI, 4)),
            "half-plane" => grid((-2.0, 2.0, 5), (0.5, 3.0, 5), (0.0, 2.0 * PI, 4)),
            _ => grid((0.4, PI - 0.4, 5), (-PI, PI, 5), (0.0, 2.0 * PI, 4)),
        };
        let (mut gap, mut off) = (0.0f64, 0.0f64);
        for (q, u) in g.points() {
            let k = curvature_with_degree::<f64, _>(&p, q, u, 6).unwrap().kappa;
            let r = riemannian_curvature::<f64>(&frame, q).unwrap().kappa;
            gap = gap.max((k - r).abs());
            off = off.max((r - expected).abs());
        }
        pass &= gap < 1e-5 && off < 1e-5;
        parts.push(format!("{name}: |κ − K| ≤ {gap:.1e}, |K − ({expected})| ≤ {off:.1e}"));
    }
    outcome(pass, parts.join("; "))
}

fn regular_invariants(fam: &Family, rng: &mut ChaCha8Rng, count: usize, degree: usize) -> Vec<(([f64; 2], f64), InvariantJets<f64>)> {
    let mut out = Vec::new();
    let mut tries = 0;
    while out.len() < count && tries < 50 * count {
        tries += 1;
        let (q, u) = fam.sample(rng);
        if fam.problem.admissible(q, u).is_err() {
            continue;
        }
        if let Ok(inv) = InvariantJets::new(&*fam.problem, q, u, degree) {
            out.push(((q, u), inv));
        }
    }
    out
}

fn c4_collinearity() -> Outcome {
    let mut r = rng(4);
    let mut worst = (0.0f64, "");
    let mut total = 0;
    let mut short = Vec::new();
    for fam in all_families() {
        let pts = regular_invariants(&fam, &mut r, 200, 5);
        if pts.len() < 200 {
            short.push(fam.name);
        }
        total += pts.len();
        for (_, inv) in pts {
            let res = inv.collinearity_residual();
            if !(res <= worst.0) {
                worst = (res, fam.name);
            }
        }
    }
    outcome(
        short.is_empty() && worst.0 < 1e-6,
        format!("{total} regular points, max residual {:.2e} ({}){}", worst.0, worst.1, if short.is_empty() { String::new() } else { format!("; too few points for {short:?}") }),
    )
}

fn c5_bnk() -> Outcome {
    let mut r = rng(5);
    let mut parts = Vec::new();
    let mut pass = true;
    for fam in all_families() {
        let pts = regular_invariants(&fam, &mut r, 50, 6);
        let mut worst = 0.0f64;
        for ((q, u), _) in &pts {
            match bnk_residual(&*fam.problem, *q, *u) {
                Ok(v) => worst = worst.max(v),
                Err(_) => worst = f64::INFINITY,
            }
        }
        pass &= pts.len() == 50 && worst < 1e-4;
        parts.push(format!("{} {:.1e}", fam.name, worst));
    }
    outcome(pass, parts.join(", "))
}

fn c6_pde_for_c() -> Outcome {
    let cases: Vec<(&str, Box<dyn Dynamics<f64>>, SampleGrid)> = vec![
        (
            "euclidean",
            Box::new(riemannian_problem(&RiemannianFrame::euclidean()).unwrap()),
            grid((-2.0, 2.0, 10), (-2.0, 2.0, 10), (0.0, 2.0 * PI, 8)),
        ),
        (
            "sphere",
            Box::new(riemannian_problem(&RiemannianFrame::sphere()).unwrap()),
            grid((0.5, PI - 0.5, 10), (-PI, PI, 10), (0.0, 2.0 * PI, 8)),
        ),
        (
            "zermelo-constant",
            Box::new(zermelo_problem(&ZermeloSpec::constant(0.3, -0.2)).unwrap()),
            grid((-2.0, 2.0, 10), (-2.0, 2.0, 10), (0.0, 2.0 * PI, 8)),
        ),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, p, g) in cases {
        let worst = g
            .points()
            .into_iter()
            .map(|(q, u)| pde_for_c_residual(&*p, q, u, 0.0).unwrap_or(f64::INFINITY))
            .fold(0.0f64, f64::max);
        pass &= worst < 1e-4;
        parts.push(format!("{name} {worst:.1e}"));
    }
    outcome(pass, parts.join(", "))
}

fn c7_sphere_conjugate() -> Outcome {
    let run = runs()
        .iter()
        .find(|r| r.family == "sphere" && r.u0 == FRAC_PI_2)
        .expect("equator extremal");
    let jac = match &run.jacobi {
        Ok(j) => j,
        Err(e) => return outcome(false, format!("Jacobi failed: {e}")),
    };
    let first = jac.conjugate_times.first().copied();
    let pass = matches!(first, Some(t) if (t - PI).abs() < 1e-3);
    outcome(
        pass,
        format!("first conjugate time {:?} (π = {PI:.9}), all {:?}", first, jac.conjugate_times),
    )
}

fn c8_no_conjugate_zermelo() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    let mut long = 0;
    for run in runs().iter().filter(|r| r.family.starts_with("zermelo-linear")) {
        if run.horizon >= 50.0 {
            long += 1;
        }
        let ok = match &run.jacobi {
            Ok(j) => {
                let done = run.path.failure.is_none() && (run.path.end_time() - run.horizon).abs() < 1e-12;
                parts.push(format!(
                    "{} q0 {:?}: t_end {}, conjugate {:?}, κ ∈ [{:.9}, {:.9}], certificate {}",
                    run.family,
                    run.q0,
                    run.path.end_time(),
                    j.conjugate_times,
                    j.bounds.kappa_min,
                    j.bounds.kappa_max,
                    j.bounds.no_conjugate_certificate
                ));
                done && j.conjugate_times.is_empty() && j.bounds.no_conjugate_certificate
            }
            Err(e) => {
                parts.push(format!("q0 {:?}: {e}", run.q0));
                false
            }
        };
        pass &= ok;
    }
    outcome(pass && long >= 4, parts.join("; "))
}

fn c9_sturm() -> Outcome {
    let mut violations = Vec::new();
    let mut checked = 0;
    let mut with_zeros = 0;
    for run in runs() {
        let Ok(j) = &run.jacobi else {
            violations.push(format!("{}: Jacobi failed", run.family));
            continue;
        };
        checked += 1;
        if !j.conjugate_times.is_empty() {
            with_zeros += 1;
        }
        for v in j.bounds.violations.iter().chain(sturm_bounds(&run.path, &j.conjugate_times).violations.iter()) {
            violations.push(format!("{} {:?}: {v}", run.family, run.q0));
        }
    }
    outcome(
        violations.is_empty() && checked == runs().len(),
        format!("{checked} extremals ({with_zeros} with conjugate times), {} violations {}", violations.len(), violations.join("; ")),
    )
}

fn c10_feedback_invariance() -> Outcome {
    let base = zermelo_problem(&nonlinear_zermelo()).unwrap();
    let mut r = rng(10);
    let mut worst = 0.0f64;
    let mut count = 0;
    for _ in 0..10 {
        let mut m = [[1.0, 0.0], [0.0, 1.0]];
        for row in &mut m {
            for x in row.iter_mut() {
                *x += r.gen_range(-0.4..0.4);
            }
        }
        let c = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let eps: f64 = r.gen_range(0.05..0.3);
        let psi = expr(&format!("u + {eps:?}*sin(u)"));
        let t = match FeedbackTransform::affine(m, c, psi, None) {
            Ok(t) => t,
            Err(e) => return outcome(false, format!("transform: {e}")),
        };
        let tp = transform_problem_implicit(&base, &t).unwrap();
        let mut k = 0;
        while k < 20 {
            let q = [r.gen_range(-1.5..1.5), r.gen_range(-1.5..1.5)];
            let u = r.gen_range(0.0..2.0 * PI);
            let Ok(k0) = curvature_with_degree::<f64, _>(&base, q, u, 6) else { continue };
            let (tq, tu) = correspond_point(&t, q, u).unwrap();
            let k1 = match curvature_with_degree::<f64, _>(&tp, tq, tu, 6) {
                Ok(k1) => k1,
                Err(e) => return outcome(false, format!("transformed κ at {tq:?}, {tu}: {e}")),
            };
            worst = worst.max((k0.kappa - k1.kappa).abs());
            k += 1;
            count += 1;
        }
    }
    outcome(worst < 1e-5, format!("{count} corresponding points, max |Δκ| = {worst:.2e}"))
}

fn c11_flatness() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    let g = grid((-1.0, 1.0, 5), (-1.0, 1.0, 5), (0.0, 2.0 * PI, 8));
    for (f1, f2) in [("cos(u)", "sin(u)"), ("cos(u) + 0.2", "0.5*sin(u)"), ("2*cos(u) + 0.3", "sin(u) + 0.2*cos(u)")] {
        let p = translation_invariant_problem(expr(f1), expr(f2)).unwrap();
        let rep = flatness_report::<f64, _>(&p, &g, 1e-5, 6).unwrap();
        pass &= rep.verdict_flat;
        parts.push(format!("({f1}, {f2}) flat={}", rep.verdict_flat));
    }
    for (a, b) in [(0.8, 0.5), (0.3, 0.0), (-0.6, 1.0)] {
        let p = zermelo_problem(&ZermeloSpec::linear(a, b)).unwrap();
        let gz = grid((-0.4, 0.4, 4), (-0.4, 0.4, 4), (0.0, 2.0 * PI, 8));
        let rep = flatness_report::<f64, _>(&p, &gz, 1e-5, 6).unwrap();
        let dev = (rep.sup_kappa.value - a * a / 4.0).abs();
        pass &= !rep.verdict_flat && !rep.verdict_commuting_frame && dev < 1e-6;
        parts.push(format!("zermelo a={a} flat={} |sup κ − a²/4| = {dev:.1e}", rep.verdict_flat));
    }
    let gf = grid((-0.5, 0.5, 4), (-0.5, 0.5, 4), (-1.0, 1.0, 6));
    for (name, form) in [("rotation", FlatNormalForm::rotation()), ("a1=0.3 sin u, a2=0.3 q2² cos u + 0.2 sin q2", flat_instance())] {
        let p = flat_normal_form_problem(&form);
        match flatness_report::<f64, _>(&p, &gf, 1e-5, 6) {
            Ok(rep) => {
                pass &= rep.verdict_commuting_frame && rep.sup_kappa.value < 1e-5 && rep.sup_lhb.value < 1e-5;
                parts.push(format!(
                    "normal form {name}: sup|κ| = {:.1e}, sup|L_h b| = {:.1e}, sup|L_[v,h] b| = {:.1e}, commuting={}",
                    rep.sup_kappa.value, rep.sup_lhb.value, rep.sup_lvh_b.value, rep.verdict_commuting_frame
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("normal form {name}: {e}"));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn c12_cauchy_jacobi() -> Outcome {
    let (mut mismatch, mut alpha) = (0.0f64, 0.0f64);
    let mut failed = Vec::new();
    for run in runs() {
        match &run.jacobi {
            Ok(j) if j.failure.is_some() => failed.push(format!("{}: Jacobi stopped early", run.family)),
            Ok(j) => {
                mismatch = mismatch.max(j.mismatch);
                alpha = alpha.max(j.alpha_drift);
            }
            Err(e) => failed.push(format!("{}: {e}", run.family)),
        }
    }
    outcome(
        failed.is_empty() && mismatch < 1e-8 && alpha < 1e-10,
        format!("{} extremals, max |γ₃ − γ| = {mismatch:.1e}, max |α − α(0)| = {alpha:.1e} {}", runs().len(), failed.join("; ")),
    )
}

fn random_jet(r: &mut ChaCha8Rng, degree: usize, shift: f64) -> Jet<f64> {
    let n = Jet::<f64>::constant(0.0, degree, 3).unwrap().coeffs().len();
    let mut c: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    c[0] += shift;
    Jet::from_coeffs(3, degree, c).unwrap()
}

fn jet_gap(a: &Jet<f64>, b: &Jet<f64>) -> f64 {
    let scale = 1.0 + a.max_abs().max(b.max_abs());
    (a - b).max_abs() / scale
}

fn c13_engine() -> Outcome {
    let mut r = rng(13);
    let d = 6;
    let (mut leibniz, mut chain, mut round) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let f = random_jet(&mut r, d, 0.0);
        let g = random_jet(&mut r, d, 3.0);
        for i in 0..3 {
            let lhs = (&f * &g).derivative(i).unwrap();
            let rhs = &f.derivative(i).unwrap() * &g.truncate(d - 1) + &f.truncate(d - 1) * &g.derivative(i).unwrap();
            leibniz = leibniz.max(jet_gap(&lhs, &rhs));
            let e = f.exp();
            let lhs = e.sin().derivative(i).unwrap();
            let rhs = &(&e.cos() * &e).truncate(d - 1) * &f.derivative(i).unwrap();
            chain = chain.max(jet_gap(&lhs, &rhs));
        }
        round = round.max(jet_gap(&(&f * &g).try_div(&g).unwrap(), &f));
        round = round.max(jet_gap(&g.ln().unwrap().exp(), &g));
        round = round.max(jet_gap(&g.sqrt().unwrap().square(), &g));
    }
    let jets_ok = leibniz < 1e-12 && chain < 1e-12 && round < 1e-12;

    // Great circle through (π/2, 0) on the sphere, in closed form.
    let sphere = riemannian_problem(&RiemannianFrame::sphere()).unwrap();
    let u0 = 1.2f64;
    let t1: f64 = 1.5;
    let exact = {
        let (s, c) = t1.sin_cos();
        let p = [c, s * u0.sin(), -s * u0.cos()];
        [p[2].acos(), p[1].atan2(p[0])]
    };
    let rhs = |_: f64, y: &[f64; 3]| hamiltonian_field(&sphere, [y[0], y[1]], y[2]);
    let err = |n: usize| {
        let y = dormand_prince_fixed(rhs, 0.0, [FRAC_PI_2, 0.0, u0], t1, n).unwrap();
        (y[0] - exact[0]).hypot(y[1] - exact[1])
    };
    let errs = [err(8), err(16), err(32)];
    let orders = [(errs[0] / errs[1]).log2(), (errs[1] / errs[2]).log2()];
    let order_ok = orders.iter().all(|o| (4.5..5.6).contains(o));

    let line = riemannian_problem(&RiemannianFrame::euclidean()).unwrap();
    let sol = dormand_prince(
        |_, y: &[f64; 3]| hamiltonian_field(&line, [y[0], y[1]], y[2]),
        0.0,
        [0.0, 0.0, 0.7],
        10.0,
        &OdeOptions::default(),
    );
    let end = sol.y_end();
    let line_err = (end[0] - 10.0 * 0.7f64.cos()).hypot(end[1] - 10.0 * 0.7f64.sin());
    let line_ok = sol.completed() && line_err < 1e-12;

    outcome(
        jets_ok && order_ok && line_ok,
        format!(
            "Leibniz {leibniz:.1e}, chain {chain:.1e}, round-trip {round:.1e}; observed order {:.2}, {:.2} (errors {:.1e}, {:.1e}, {:.1e}); straight line error {line_err:.1e}",
            orders[0], orders[1], errs[0], errs[1], errs[2]
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("linear-drift Zermelo κ = −a²/4", c1_linear_zermelo),
        ("b ≡ 0 on Riemannian frames", c2_riemannian_b),
        ("κ equals the Gaussian curvature", c3_gaussian_curvature),
        ("[h,[v,h]] collinear with v", c4_collinearity),
        ("L_v κ + b κ + L_h² b = 0", c5_bnk),
        ("c'' + b c' + c = L_h b", c6_pde_for_c),
        ("sphere conjugate time π", c7_sphere_conjugate),
        ("no conjugate points for linear-drift Zermelo", c8_no_conjugate_zermelo),
        ("Sturm comparison windows", c9_sturm),
        ("feedback invariance of κ", c10_feedback_invariance),
        ("flatness verdicts", c11_flatness),
        ("Cauchy system vs scalar Jacobi equation", c12_cauchy_jacobi),
        ("jet identities and integrator order", c13_engine),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name} [{:.2}s]: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
