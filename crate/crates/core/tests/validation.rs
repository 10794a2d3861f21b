use std::sync::Arc;

use oce_control::grid::UniformGrid;
use oce_control::validation::*;
use oce_control::*;

fn gaussian_problem() -> ControlProblemF64 {
    ControlProblem::scalar(Drift::zero(), 1.0, ControlBox::singleton(0.0), Terminal::ClampedLinear { slope: 1.0, lo: -5.0, hi: 5.0 }, 1.0)
        .with_y_box(-7.0, 7.0)
}

fn solve(p: &ControlProblemF64, spec: &LossSpecF64, grid: (usize, usize, usize), n: f64) -> (ValueField3DF64, PolicyFieldF64) {
    let o = SchemeOptions::default();
    let f = p.terminal;
    let phi = Arc::new(solve_hjb(p, |y| f.eval(y), f.describe(), (grid.0, grid.1), &o).unwrap());
    solve_hjbi(p, spec, phi, grid.2, n, &o).unwrap()
}

#[test]
fn reduction_of_a_constant() {
    let p = gaussian_problem();
    let p = ControlProblem { terminal: Terminal::Constant { c: 1.25 }, ..p };
    let field = entropic_reduction(&p, (11, 41), &SchemeOptions::default()).unwrap();
    assert!(field.values.iter().all(|&v| (v - 1.25).abs() < 1e-12));
}

#[test]
fn reduction_reproduces_the_gaussian_mgf() {
    let field = entropic_reduction(&gaussian_problem(), (51, 281), &SchemeOptions::default()).unwrap();
    assert!((field.interpolate(0.0, 0.0) - 0.5).abs() < 0.01);
}

#[test]
fn shortfall_oracle_examples() {
    assert!((avar_gaussian_oracle(0.0, 1.0, 0.5).unwrap().value() - 0.7979).abs() < 1e-4);
    assert!((avar_gaussian_oracle(0.0, 1.0, 0.05).unwrap().value() - 2.0627).abs() < 1e-4);
    let base = avar_gaussian_oracle(0.0, 2.0, 0.3).unwrap().value();
    assert!((avar_gaussian_oracle(1.5, 2.0, 0.3).unwrap().value() - base - 1.5).abs() < 1e-12);
    for g in [0.01, 0.05, 0.25, 0.5, 0.9] {
        assert!(avar_gaussian_oracle(0.0, 1.0, g).unwrap().discrepancy() < 1e-10);
    }
}

#[test]
fn sweep_on_the_uncontrolled_shortfall() {
    let spec = LossSpec::avar(0.5).unwrap();
    let p = gaussian_problem().with_z_box_for(&spec);
    let r_grid = UniformGrid::new(-7.0, 7.0, 29).unwrap();
    let s = r_sweep_oracle(&p, &spec, 0.0, 1.0, &r_grid, (21, 281), &SchemeOptions::default()).unwrap();
    assert!((s.value - 0.798).abs() < 0.02, "{s:?}");
    assert!(s.r_star.abs() < 0.1, "median is the minimizer: {}", s.r_star);
}

#[test]
fn singleton_policy_matches_the_oracle() {
    let spec = LossSpec::avar(0.5).unwrap();
    let p = gaussian_problem().with_z_box_for(&spec);
    let (_, policy) = solve(&p, &spec, (11, 57, 9), 2.0);
    let est = mc_policy_eval(&p, &spec, &policy, &Start { s: 0.0, y: vec![0.0] }, &SimParams::new(100_000, 20), 3).unwrap();
    let oracle = avar_gaussian_oracle(0.0, 1.0, 0.5).unwrap().value();
    assert!((est.value - oracle).abs() <= 3.0 * est.std_error + 1e-3, "{est:?}");
    assert_eq!(est.batch_values.len(), MC_BATCHES);
}

#[test]
fn constant_terminal_scans_clean() {
    for spec in [LossSpec::entropic(), LossSpec::avar(0.5).unwrap()] {
        let p = ControlProblem { terminal: Terminal::Constant { c: -0.3 }, ..gaussian_problem() }.with_z_box(0.0, 2.0);
        let (field, _) = solve(&p, &spec, (11, 29, 17), 4.0);
        let report = property_scan(&field, &spec, 0.0, &[]);
        assert!(report.passed(), "{report:#?}");
        assert!(report.checks.iter().all(|c| c.worst <= c.tolerance));
    }
}

#[test]
fn n_scan_is_monotone_on_the_tanh_case() {
    let spec = LossSpec::entropic();
    let p = ControlProblem::scalar(Drift::identity(), 1.0, ControlBox::interval(-1.0, 1.0), Terminal::Tanh { scale: 1.0, amplitude: 1.0 }, 1.0)
        .with_y_box(-6.0, 6.0)
        .with_z_box(0.25, 4.25);
    let fields: Vec<ValueField3DF64> = [2.0, 4.0, 8.0].iter().map(|&n| solve(&p, &spec, (21, 49, 33), n).0).collect();
    let (coarse, _) = solve(&p, &spec, (11, 25, 17), 8.0);
    let eps = refinement_error(&fields[2], &coarse).unwrap();
    let scan: Vec<&ValueField3DF64> = fields.iter().collect();
    let report = property_scan(&fields[2], &spec, eps, &scan);
    assert!(report.passed(), "{report:#?}");
    assert!(report.check("beta_monotonicity").is_some());
    let conc = report.check("z_concavity").unwrap();
    assert!(conc.worst <= 1e-4 * report.value_scale);
}
