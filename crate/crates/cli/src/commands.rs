use rayon::prelude::*;
use serde_json::{json, Map, Value};

use ctrlcurv::flow::{integrate_extremal, jacobi_solve, ExtremalOptions, ExtremalPath, JacobiSolution, SturmBounds};
use ctrlcurv::invariants::{flatness_report, lie_derivative, riemannian_curvature, InvariantJets};
use ctrlcurv::system::{correspond_point, transform_problem_implicit};
use ctrlcurv::{Dynamics, Expr, FeedbackTransform};

use crate::config::{BuiltProblem, Config, Format};
use crate::output::{json_text, num, opt_num, Cell, Csv};
use crate::{CliError, EXIT_REGULARITY, EXIT_VALIDATION};

/// What a command produced: the artifact, an optional JSON summary that
/// accompanies a CSV artifact, and the exit code.
pub struct Artifact {
    pub body: String,
    pub summary: Option<String>,
    pub exit: u8,
}

fn runtime(e: ctrlcurv::Error) -> CliError {
    if e.is_regularity() {
        CliError::new(EXIT_REGULARITY, e.to_string())
    } else {
        CliError::new(EXIT_REGULARITY, format!("computation failed: {e}"))
    }
}

fn config_echo(cfg: &Config) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn point(q: [f64; 2], u: f64) -> Value {
    json!({ "q1": num(q[0]), "q2": num(q[1]), "u": num(u) })
}

struct Row {
    q: [f64; 2],
    u: f64,
    result: Result<(f64, f64, f64), String>,
}

fn sweep(p: &dyn Dynamics<f64>, cfg: &Config) -> Vec<Row> {
    let limit = cfg.tolerances.collinearity;
    cfg.grid
        .sample_grid()
        .points()
        .into_par_iter()
        .map(|(q, u)| {
            let result = (|| {
                p.admissible(q, u)?;
                let inv = InvariantJets::new(p, q, u, cfg.jet_degree)?;
                let res = inv.collinearity_residual();
                if !(res <= limit) {
                    return Err(ctrlcurv::Error::Collinearity { residual: res });
                }
                Ok((inv.kappa.value(), inv.fiber.b.value(), res))
            })()
            .map_err(|e| e.to_string());
            Row { q, u, result }
        })
        .collect()
}

pub fn curvature(cfg: &Config, built: &BuiltProblem, keep_going: bool) -> Result<Artifact, CliError> {
    let rows = sweep(&*built.dynamics, cfg);
    let failures = rows.iter().filter(|r| r.result.is_err()).count();
    if failures > 0 && !keep_going {
        let r = rows.iter().find(|r| r.result.is_err()).expect("a failing row");
        return Err(CliError::new(
            EXIT_REGULARITY,
            format!(
                "grid point q = ({}, {}), u = {}: {} (use --keep-going for partial output)",
                r.q[0],
                r.q[1],
                r.u,
                r.result.as_ref().unwrap_err()
            ),
        ));
    }
    let exit = if failures > 0 { EXIT_REGULARITY } else { 0 };
    let body = match cfg.output.format {
        Format::Csv => {
            let mut header = vec!["q1", "q2", "u", "kappa", "b", "collinearity_residual"];
            if keep_going {
                header.push("status");
            }
            let mut csv = Csv::new(&header);
            for r in &rows {
                let mut cells = vec![Cell::Num(r.q[0]), Cell::Num(r.q[1]), Cell::Num(r.u)];
                match &r.result {
                    Ok((k, b, res)) => cells.extend([Cell::Num(*k), Cell::Num(*b), Cell::Num(*res)]),
                    Err(_) => cells.extend([Cell::Empty, Cell::Empty, Cell::Empty]),
                }
                if keep_going {
                    cells.push(Cell::Text(match &r.result {
                        Ok(_) => "ok".into(),
                        Err(e) => format!("failed: {e}"),
                    }));
                }
                csv.row(&cells);
            }
            csv.finish()
        }
        Format::Json => {
            let items: Vec<Value> = rows
                .iter()
                .map(|r| {
                    let mut m = Map::new();
                    m.insert("q1".into(), num(r.q[0]));
                    m.insert("q2".into(), num(r.q[1]));
                    m.insert("u".into(), num(r.u));
                    match &r.result {
                        Ok((k, b, res)) => {
                            m.insert("kappa".into(), num(*k));
                            m.insert("b".into(), num(*b));
                            m.insert("collinearity_residual".into(), num(*res));
                        }
                        Err(e) => {
                            m.insert("error".into(), Value::String(e.clone()));
                        }
                    }
                    Value::Object(m)
                })
                .collect();
            let ok: Vec<f64> = rows.iter().filter_map(|r| r.result.as_ref().ok().map(|v| v.0)).collect();
            let kmin = ok.iter().copied().fold(None, |m: Option<f64>, k| Some(m.map_or(k, |m| m.min(k))));
            let kmax = ok.iter().copied().fold(None, |m: Option<f64>, k| Some(m.map_or(k, |m| m.max(k))));
            json_text(&json!({
                "command": "curvature",
                "family": cfg.problem.family(),
                "config": config_echo(cfg),
                "points": rows.len(),
                "failures": failures,
                "kappa_min": opt_num(kmin),
                "kappa_max": opt_num(kmax),
                "rows": items,
            }))
        }
    };
    Ok(Artifact {
        body,
        summary: None,
        exit,
    })
}

fn sturm_json(s: &SturmBounds<f64>) -> Value {
    json!({
        "kappa_min": num(s.kappa_min),
        "kappa_max": num(s.kappa_max),
        "no_conjugate_certificate": s.no_conjugate_certificate,
        "lower": opt_num(s.lower),
        "upper": opt_num(s.upper),
        "violations": s.violations,
    })
}

fn extremal_summary(cfg: &Config, path: &ExtremalPath<f64>, jac: &Result<JacobiSolution<f64>, ctrlcurv::Error>) -> Value {
    let failure = path.failure.as_ref().map(|f| json!({ "t": num(f.t), "reason": f.error.to_string() }));
    let mut m = Map::new();
    m.insert("command".into(), json!("extremal"));
    m.insert("family".into(), json!(cfg.problem.family()));
    m.insert("config".into(), config_echo(cfg));
    m.insert("t_end".into(), num(path.end_time()));
    m.insert("path_failure".into(), failure.unwrap_or(Value::Null));
    m.insert("level_drift".into(), num(path.level_drift));
    m.insert(
        "integrator".into(),
        json!({ "accepted_steps": path.stats.accepted, "rejected_steps": path.stats.rejected }),
    );
    match jac {
        Ok(j) => {
            m.insert("conjugate_times".into(), Value::Array(j.conjugate_times.iter().map(|&t| num(t)).collect()));
            m.insert("warnings".into(), json!(j.warnings));
            m.insert("sturm_bounds".into(), sturm_json(&j.bounds));
            m.insert(
                "jacobi".into(),
                json!({
                    "t_end": num(j.horizon),
                    "mismatch": num(j.mismatch),
                    "alpha_drift": num(j.alpha_drift),
                    "failure": j.failure.as_ref().map(|f| json!({ "t": num(f.t), "reason": f.error.to_string() })),
                }),
            );
            m.insert("note".into(), Value::String(j.optimality_note()));
        }
        Err(e) => {
            m.insert("jacobi_error".into(), json!(e.to_string()));
        }
    }
    Value::Object(m)
}

pub fn extremal(cfg: &Config, built: &BuiltProblem) -> Result<Artifact, CliError> {
    let Some(ex) = &cfg.extremal else {
        return Err(CliError::config("the extremal command needs an `extremal` block".into()));
    };
    let opts = ExtremalOptions {
        rtol: cfg.tolerances.integrator.rtol,
        atol: cfg.tolerances.integrator.atol,
        degree: cfg.jet_degree,
        samples: (ex.samples >= 2).then_some(ex.samples),
        ..ExtremalOptions::default()
    };
    let p = &*built.dynamics;
    let path = integrate_extremal(p, ex.q0, ex.u0, ex.horizon, &opts).map_err(runtime)?;
    let jac = jacobi_solve(p, &path);
    let gamma = |t: f64| match &jac {
        Ok(j) if t.abs() <= j.horizon.abs() => Cell::Num(j.gamma_at(t)),
        _ => Cell::Empty,
    };
    let broken = path.failure.is_some() || jac.as_ref().map_or(true, |j| j.failure.is_some());
    let exit = if broken { EXIT_REGULARITY } else { 0 };
    let summary = extremal_summary(cfg, &path, &jac);
    let artifact = match cfg.output.format {
        Format::Csv => {
            let mut csv = Csv::new(&["t", "q1", "q2", "u", "kappa_t", "gamma"]);
            for s in &path.samples {
                csv.row(&[
                    Cell::Num(s.t),
                    Cell::Num(s.q[0]),
                    Cell::Num(s.q[1]),
                    Cell::Num(s.u),
                    Cell::Num(s.kappa),
                    gamma(s.t),
                ]);
            }
            Artifact {
                body: csv.finish(),
                summary: Some(json_text(&summary)),
                exit,
            }
        }
        Format::Json => {
            let rows: Vec<Value> = path
                .samples
                .iter()
                .map(|s| {
                    let g = match gamma(s.t) {
                        Cell::Num(g) => num(g),
                        _ => Value::Null,
                    };
                    json!({ "t": num(s.t), "q1": num(s.q[0]), "q2": num(s.q[1]), "u": num(s.u), "kappa_t": num(s.kappa), "gamma": g })
                })
                .collect();
            let mut summary = summary;
            summary.as_object_mut().expect("object").insert("rows".into(), Value::Array(rows));
            Artifact {
                body: json_text(&summary),
                summary: None,
                exit,
            }
        }
    };
    Ok(artifact)
}

pub fn flatness(cfg: &Config, built: &BuiltProblem) -> Result<Artifact, CliError> {
    let grid = cfg.grid.sample_grid();
    let rep = flatness_report::<f64, _>(&*built.dynamics, &grid, cfg.tolerances.flatness, cfg.jet_degree).map_err(runtime)?;
    let sup = |s: &ctrlcurv::invariants::GridSup<f64>| json!({ "value": num(s.value), "at": point(s.q, s.u) });
    let body = match cfg.output.format {
        Format::Json => json_text(&json!({
            "command": "flatness",
            "family": cfg.problem.family(),
            "config": config_echo(cfg),
            "sup_kappa": sup(&rep.sup_kappa),
            "sup_Lhb": sup(&rep.sup_lhb),
            "sup_Lvh_b": sup(&rep.sup_lvh_b),
            "verdict_commuting_frame": rep.verdict_commuting_frame,
            "verdict_flat": rep.verdict_flat,
            "tolerance": num(rep.tolerance),
            "grid": { "points": grid.len(), "degree": rep.degree },
        })),
        Format::Csv => {
            let mut csv = Csv::new(&["sup_kappa", "sup_Lhb", "sup_Lvh_b", "verdict_commuting_frame", "verdict_flat", "tolerance"]);
            csv.row(&[
                Cell::Num(rep.sup_kappa.value),
                Cell::Num(rep.sup_lhb.value),
                Cell::Num(rep.sup_lvh_b.value),
                Cell::Text(rep.verdict_commuting_frame.to_string()),
                Cell::Text(rep.verdict_flat.to_string()),
                Cell::Num(rep.tolerance),
            ]);
            csv.finish()
        }
    };
    Ok(Artifact {
        body,
        summary: None,
        exit: 0,
    })
}

const CHECKS: [&str; 7] = [
    "collinearity",
    "bnk",
    "kappa_via_c",
    "pde_for_c",
    "feedback_invariance",
    "riemannian_kappa",
    "riemannian_b",
];
const RIEMANNIAN_B_TOLERANCE: f64 = 1e-8;

/// Residuals of every applicable check at one point; `None` when a check
/// does not apply to the family.
fn residuals_at(
    cfg: &Config,
    built: &BuiltProblem,
    transformed: &dyn Dynamics<f64>,
    transform: &FeedbackTransform,
    q: [f64; 2],
    u: f64,
) -> ctrlcurv::Result<[Option<f64>; 7]> {
    let p = &*built.dynamics;
    let bias = cfg.validate.kappa_bias;
    let degree = cfg.jet_degree.max(6);
    p.admissible(q, u)?;
    let inv = InvariantJets::new(p, q, u, degree)?;
    let kappa = inv.kappa.value() + bias;
    let b = inv.fiber.b.value();
    let lhlh_b = lie_derivative(&inv.h, &inv.lh_b()?)?.value();
    let bnk = inv.lv_kappa()?.value() + b * kappa + lhlh_b;
    let cf = inv.c_function(p, cfg.validate.anchor)?;
    let via_c = inv.kappa_via_c(&cf)?;
    let pde = inv.pde_for_c(&cf)?;
    let (tq, tu) = correspond_point(transform, q, u)?;
    let k_t = InvariantJets::new(transformed, tq, tu, degree)?.kappa.value() + bias;
    let (rk, rb) = match &built.frame {
        Some(frame) => (
            Some((kappa - riemannian_curvature::<f64>(frame, q)?.kappa).abs()),
            Some(b.abs()),
        ),
        None => (None, None),
    };
    Ok([
        Some(inv.collinearity_residual()),
        Some(bnk.abs()),
        Some((kappa - via_c).abs()),
        Some(pde.abs()),
        Some((kappa - k_t).abs()),
        rk,
        rb,
    ])
}

pub fn validate(cfg: &Config, built: &BuiltProblem) -> Result<Artifact, CliError> {
    let eps = cfg.validate.feedback_epsilon;
    let psi: Expr = format!("u + ({eps})*sin(u)")
        .parse()
        .map_err(|e: ctrlcurv::exprs::ParseError| CliError::config(e.to_string()))?;
    let transform = FeedbackTransform::affine([[1.0, 0.3], [-0.2, 1.1]], [0.5, -0.25], psi, None)
        .map_err(|e| CliError::config(e.to_string()))?;
    let transformed = transform_problem_implicit(&*built.dynamics, &transform).map_err(runtime)?;
    let points = cfg.grid.sample_grid().points();
    let results: Vec<([f64; 2], f64, ctrlcurv::Result<[Option<f64>; 7]>)> = points
        .into_par_iter()
        .map(|(q, u)| (q, u, residuals_at(cfg, built, &transformed, &transform, q, u)))
        .collect();
    let tol = &cfg.tolerances;
    let tolerances = [
        tol.collinearity,
        tol.bnk,
        tol.kappa_agreement,
        tol.pde_for_c,
        tol.kappa_agreement,
        tol.kappa_agreement,
        RIEMANNIAN_B_TOLERANCE,
    ];
    let mut worst: [Option<(f64, [f64; 2], f64)>; 7] = [None; 7];
    let mut skipped = Vec::new();
    for (q, u, r) in &results {
        match r {
            Ok(vals) => {
                for (k, v) in vals.iter().enumerate() {
                    if let Some(v) = *v {
                        let better = worst[k].map_or(true, |(w, _, _)| v > w || v.is_nan());
                        if better {
                            worst[k] = Some((v, *q, *u));
                        }
                    }
                }
            }
            Err(e) => skipped.push(json!({ "at": point(*q, *u), "reason": e.to_string() })),
        }
    }
    if skipped.len() == results.len() {
        return Err(CliError::new(EXIT_REGULARITY, "no grid point admits the residual checks".into()));
    }
    let mut all_pass = true;
    let mut checks = Vec::new();
    let mut csv = Csv::new(&["check", "max_residual", "q1", "q2", "u", "tolerance", "pass"]);
    for k in 0..CHECKS.len() {
        let Some((v, q, u)) = worst[k] else { continue };
        let pass = v <= tolerances[k];
        all_pass &= pass;
        checks.push(json!({
            "name": CHECKS[k],
            "max_residual": num(v),
            "at": point(q, u),
            "tolerance": num(tolerances[k]),
            "pass": pass,
        }));
        csv.row(&[
            Cell::Text(CHECKS[k].into()),
            Cell::Num(v),
            Cell::Num(q[0]),
            Cell::Num(q[1]),
            Cell::Num(u),
            Cell::Num(tolerances[k]),
            Cell::Text(pass.to_string()),
        ]);
    }
    let body = match cfg.output.format {
        Format::Json => json_text(&json!({
            "command": "validate",
            "family": cfg.problem.family(),
            "config": config_echo(cfg),
            "points": results.len(),
            "skipped": skipped,
            "checks": checks,
            "pass": all_pass,
        })),
        Format::Csv => csv.finish(),
    };
    Ok(Artifact {
        body,
        summary: None,
        exit: if all_pass { 0 } else { EXIT_VALIDATION },
    })
}
