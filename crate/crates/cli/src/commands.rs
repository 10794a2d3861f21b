use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use log::info;
use oce_control::export::{write_field_2d, write_field_3d, write_policy, write_terminal_paths};
use oce_control::grid::UniformGrid;
use oce_control::validation::{
    close, dpp_deviation, entropic_reduction, mc_policy_eval, property_scan, r_sweep_many, refinement_error,
};
use oce_control::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{config_error, GridConfig, PolicyChoice, RunConfig};

/// What a subcommand reports back for the manifest and the exit code.
pub struct Outcome {
    pub passed: bool,
    pub substeps: usize,
}

impl Outcome {
    fn ok(substeps: usize) -> Self {
        Self { passed: true, substeps }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn grid_json(g: &UniformGrid<f64>) -> Value {
    json!({ "lo": g.lo(), "hi": g.hi(), "n": g.len() })
}

/// `V(0, y0, 1)` when `z = 1` is on the grid, else at the middle of the z-box.
fn reference_value(field: &ValueField3DF64, y0: f64) -> (f64, f64) {
    let z = if field.z_grid.lo() <= 1.0 && 1.0 <= field.z_grid.hi() {
        1.0
    } else {
        0.5 * (field.z_grid.lo() + field.z_grid.hi())
    };
    (z, field.sample(0.0, y0, z))
}

pub fn check_loss(cfg: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    let spec = cfg.spec()?;
    let xs = linspace(-10.0, 10.0, 2001);
    let z_hi = spec.conj_domain().hi.unwrap_or(8.0);
    let zs = linspace(spec.conj_domain().lo, z_hi, 100);
    let report = check_assumptions(&spec, &xs, &zs, 1e-9);
    let conj_ok = report.conj_max_deviation <= 1e-6;
    for c in &report.clauses {
        println!("{:<20} {}", c.name, if c.passed { "ok" } else { "FAILED" });
    }
    println!("{:<20} {:.3e}", "conjugate deviation", report.conj_max_deviation);
    let passed = report.passed() && conj_ok;
    write_json(&out.join("check_loss.json"), &json!({ "passed": passed, "report": report }))?;
    Ok(Outcome { passed, substeps: 0 })
}

pub fn oce(cfg: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    let spec = cfg.spec()?;
    let outcomes = cfg.outcomes.clone().ok_or_else(|| config_error("outcomes: required by `oce`"))?;
    let dist = match &cfg.weights {
        Some(w) => EmpiricalDistribution::new(outcomes, w.clone()),
        None => EmpiricalDistribution::uniform(outcomes),
    }
    .map_err(|e| config_error(e.to_string()))?;
    let primal = oce_primal(&dist, &spec, 1e-10)?;
    let dual = oce_dual_discrete(&dist, &spec, 1e-10)?;
    println!("value {:.10}", primal.value);
    println!("r_star {:.10}", primal.r_star);
    write_json(
        &out.join("oce.json"),
        &json!({ "loss": spec.name(), "value": primal.value, "r_star": primal.r_star, "dual": dual }),
    )?;
    Ok(Outcome::ok(0))
}

fn solve_phi(cfg: &RunConfig, problem: &ControlProblemF64, grid: GridConfig) -> anyhow::Result<Arc<ValueField2DF64>> {
    let f = problem.terminal;
    let phi = solve_hjb(problem, |y| f.eval(y), f.describe(), (grid.n_t, grid.n_y), &cfg.options()?)?;
    Ok(Arc::new(phi))
}

fn solve_full(cfg: &RunConfig, grid: GridConfig, beta_bound: f64) -> anyhow::Result<(ValueField3DF64, PolicyFieldF64)> {
    let problem = cfg.problem()?;
    let phi = solve_phi(cfg, &problem, grid)?;
    let (field, policy) = solve_hjbi(&problem, &cfg.spec()?, phi, grid.n_z, beta_bound, &cfg.options()?)?;
    info!("solved on {}x{}x{} with n = {beta_bound}: {} substeps", grid.n_t, grid.n_y, grid.n_z, field.stats.substeps);
    Ok((field, policy))
}

pub fn solve_free(cfg: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    let problem = cfg.problem()?;
    let phi = solve_phi(cfg, &problem, cfg.grid)?;
    write_field_2d(&phi, &out.join("phi.csv"))?;
    let value = phi.interpolate(0.0, cfg.y0);
    println!("phi(0, {}) = {value:.8}", cfg.y0);
    write_json(
        &out.join("phi.json"),
        &json!({
            "terminal": phi.terminal_desc,
            "t_grid": grid_json(&phi.t_grid),
            "y_grid": grid_json(&phi.y_grid),
            "stats": phi.stats,
            "value_at_y0": value,
        }),
    )?;
    Ok(Outcome::ok(phi.stats.substeps))
}

pub fn solve(cfg: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    let (field, policy) = solve_full(cfg, cfg.grid, cfg.beta_bound)?;
    write_field_2d(&field.phi, &out.join("phi.csv"))?;
    write_field_3d(&field, &out.join("value"))?;
    write_policy(&policy, &out.join("policy"))?;
    let (z, v) = reference_value(&field, cfg.y0);
    println!("V(0, {}, {z}) = {v:.8}", cfg.y0);
    write_json(
        &out.join("solve.json"),
        &json!({
            "loss": cfg.spec()?.name(),
            "terminal": field.phi.terminal_desc,
            "beta_bound": field.beta_bound,
            "t_grid": grid_json(&field.t_grid),
            "y_grid": grid_json(&field.y_grid),
            "z_grid": grid_json(&field.z_grid),
            "stats": field.stats,
            "phi_stats": field.phi.stats,
            "reference": { "y": cfg.y0, "z": z, "value": v },
        }),
    )?;
    Ok(Outcome::ok(field.stats.substeps + field.phi.stats.substeps))
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    let problem = cfg.problem()?;
    let spec = cfg.spec()?;
    let sim = &cfg.simulate;
    let (policy, substeps) = match sim.policy {
        PolicyChoice::Optimal => {
            let (field, policy) = solve_full(cfg, cfg.grid, cfg.beta_bound)?;
            (policy, field.stats.substeps + field.phi.stats.substeps)
        }
        PolicyChoice::Constant { alpha, beta } => {
            let (lo, hi) = problem.y_box[0];
            let (zlo, zhi) = problem.z_box;
            let pol = PolicyField::constant(
                UniformGrid::new(0.0, problem.horizon, 2)?,
                UniformGrid::new(lo, hi, 2)?,
                UniformGrid::new(zlo, zhi, 2)?,
                &[alpha],
                &[beta],
                beta.abs().max(cfg.beta_bound),
            )
            .map_err(|e| config_error(format!("simulate.policy: {e}")))?;
            pol.check_controls(&problem.control_box).map_err(|e| config_error(format!("simulate.policy: {e}")))?;
            (pol, 0)
        }
    };
    let start = Start { s: 0.0, y: vec![cfg.y0] };
    let params = SimParams::new(sim.paths, sim.steps);
    let batch = if sim.tilted {
        simulate_tilted(&problem, &policy, &start, &params, cfg.seed)?
    } else {
        simulate_y(&problem, &policy, &start, &params, cfg.seed)?
    };
    write_terminal_paths(&batch, &out.join("paths.csv"))?;
    let ys = batch.terminal_y(0);
    let fs: Vec<f64> = ys.iter().map(|&y| problem.terminal.eval(y)).collect();
    let rho = oce_primal(&EmpiricalDistribution::uniform(fs.clone())?, &spec, 1e-10)?;
    println!("rho(f(Y_T)) = {:.8} over {} paths", rho.value, sim.paths);
    write_json(
        &out.join("summary.json"),
        &json!({
            "paths": sim.paths,
            "steps": sim.steps,
            "seed": cfg.seed,
            "tilted": sim.tilted,
            "terminal_y": SampleSummary::of(&ys),
            "terminal_f": SampleSummary::of(&fs),
            "terminal_z": batch.terminal_z().map(|z| SampleSummary::of(&z)),
            "oce_value": rho.value,
            "exit_rate": batch.exit_rate(),
        }),
    )?;
    Ok(Outcome::ok(substeps))
}

#[derive(Serialize)]
struct CheckResult {
    name: &'static str,
    passed: bool,
    detail: Value,
}

const CHECKS: [&str; 5] = ["properties", "dpp", "reduction", "r_sweep", "mc"];

pub fn validate(cfg: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    let spec = cfg.spec()?;
    let problem = cfg.problem()?;
    let options = cfg.options()?;
    let v = &cfg.validate;
    let entropic = spec.name() == "entropic";
    for name in &v.checks {
        if !CHECKS.contains(&name.as_str()) {
            return Err(config_error(format!("validate.checks: unknown check `{name}`, expected one of {CHECKS:?}")));
        }
    }
    if v.checks.iter().any(|c| c == "reduction") && !entropic {
        return Err(config_error("validate.checks: `reduction` needs the entropic loss"));
    }
    let wanted = |name: &str| if v.checks.is_empty() { name != "reduction" || entropic } else { v.checks.iter().any(|c| c == name) };

    let (field, policy) = solve_full(cfg, cfg.grid, cfg.beta_bound)?;
    let (coarse, _) = solve_full(cfg, cfg.coarse_grid(), cfg.beta_bound)?;
    let eps = refinement_error(&field, &coarse)?;
    let mut substeps = field.stats.substeps + coarse.stats.substeps;
    let v_ref = field.sample(0.0, cfg.y0, 1.0);
    let mut results = Vec::new();

    if wanted("properties") {
        let report = property_scan(&field, &spec, eps, &[]);
        results.push(CheckResult { name: "properties", passed: report.passed(), detail: serde_json::to_value(&report)? });
    }
    if wanted("dpp") {
        let theta = 0.5 * problem.horizon;
        if field.t_grid.index_of(theta, 1e-9 * field.t_grid.step()).is_none() {
            return Err(config_error("grid.n_t: must be odd so that T/2 is a time node for the `dpp` check"));
        }
        let restarted = dpp_restart(&field, &problem, &spec, theta, &options)?;
        substeps += restarted.stats.substeps;
        let dev = dpp_deviation(&field, &restarted)?;
        results.push(CheckResult {
            name: "dpp",
            passed: dev <= 2.0 * eps,
            detail: json!({ "theta": theta, "deviation": dev, "bound": 2.0 * eps }),
        });
    }
    let [o_t, o_y] = v.oracle_grid;
    if wanted("reduction") {
        let reduction = entropic_reduction(&problem, (o_t, o_y), &options)?.interpolate(0.0, cfg.y0);
        results.push(CheckResult {
            name: "reduction",
            passed: close(v_ref, reduction, v.rel_tol, v.abs_tol),
            detail: json!({ "value": v_ref, "oracle": reduction }),
        });
    }
    if wanted("r_sweep") {
        let r_grid = cfg.r_grid(&problem)?;
        let mut rows = Vec::new();
        let mut passed = true;
        for &z in &v.z_values {
            if !(field.z_grid.lo() <= z && z <= field.z_grid.hi()) {
                return Err(config_error(format!("validate.z_values: {z} is outside the z grid")));
            }
        }
        let sweeps = r_sweep_many(&problem, &spec, cfg.y0, &v.z_values, &r_grid, (o_t, o_y), &options)?;
        for (&z, sweep) in v.z_values.iter().zip(sweeps) {
            let value = field.sample(0.0, cfg.y0, z);
            let ok = close(value, sweep.value, v.rel_tol, v.abs_tol);
            passed &= ok;
            rows.push(json!({ "z": z, "value": value, "oracle": sweep.value, "r_star": sweep.r_star, "passed": ok }));
        }
        results.push(CheckResult { name: "r_sweep", passed, detail: Value::Array(rows) });
    }
    if wanted("mc") {
        let start = Start { s: 0.0, y: vec![cfg.y0] };
        let params = SimParams::new(v.paths, v.steps);
        let est = mc_policy_eval(&problem, &spec, &policy, &start, &params, cfg.seed)?;
        let closure = (est.value - v_ref).abs() <= (v.rel_tol * v_ref.abs()).max(3.0 * est.std_error);
        let n_y = policy.y_grid.len();
        let flipped = policy.perturbed(&problem.control_box, |_, j, _| j >= n_y / 2);
        let bad = mc_policy_eval(&problem, &spec, &flipped, &start, &params, cfg.seed.wrapping_add(1))?;
        let one_sided = bad.value >= v_ref - 3.0 * bad.std_error - eps;
        results.push(CheckResult {
            name: "mc",
            passed: closure && one_sided,
            detail: json!({
                "value": v_ref,
                "mc": est.value,
                "std_error": est.std_error,
                "perturbed": bad.value,
                "perturbed_std_error": bad.std_error,
            }),
        });
    }

    let passed = results.iter().all(|r| r.passed);
    for r in &results {
        println!("{:<12} {}", r.name, if r.passed { "PASS" } else { "FAIL" });
    }
    write_json(
        &out.join("report.json"),
        &json!({ "passed": passed, "eps_grid": eps, "reference_value": v_ref, "checks": results }),
    )?;
    Ok(Outcome { passed, substeps })
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    let bounds = &cfg.sweep.bounds;
    if bounds.is_empty() || bounds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config_error("sweep.bounds: need an increasing, nonempty list"));
    }
    let problem = cfg.problem()?;
    let spec = cfg.spec()?;
    let options = cfg.options()?;
    let phi = solve_phi(cfg, &problem, cfg.grid)?;
    let mut fields = Vec::new();
    for &n in bounds {
        let (field, _) = solve_hjbi(&problem, &spec, phi.clone(), cfg.grid.n_z, n, &options)?;
        fields.push(field);
    }
    let top = fields.last().expect("nonempty");
    let (coarse, _) = solve_full(cfg, cfg.coarse_grid(), top.beta_bound)?;
    let eps = refinement_error(top, &coarse)?;
    let scan: Vec<&ValueField3DF64> = fields.iter().collect();
    let report = property_scan(top, &spec, eps, &scan);

    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    w.write_record(["beta_bound", "z", "value", "min_increment", "substeps"])?;
    for (i, field) in fields.iter().enumerate() {
        let (z, value) = reference_value(field, cfg.y0);
        let inc = if i == 0 {
            String::new()
        } else {
            let min = field.values.iter().zip(&fields[i - 1].values).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min);
            format!("{min}")
        };
        w.write_record([format!("{}", field.beta_bound), format!("{z}"), format!("{value}"), inc, field.stats.substeps.to_string()])?;
        println!("n = {:<4} V = {value:.8}", field.beta_bound);
    }
    w.flush()?;
    let mono = report.check("beta_monotonicity").map_or(true, |c| c.passed);
    write_json(&out.join("sweep.json"), &json!({ "passed": mono, "eps_grid": eps, "report": report }))?;
    let substeps = fields.iter().map(|f| f.stats.substeps).sum::<usize>() + phi.stats.substeps;
    Ok(Outcome { passed: mono, substeps })
}
