use oce_control::grid::UniformGrid;
use oce_control::*;

const PATHS: usize = 100_000;
const STEPS: usize = 50;

fn constant_policy(alpha: f64, beta: f64) -> PolicyField<f64> {
    PolicyField::constant(
        UniformGrid::new(0.0, 1.0, 3).unwrap(),
        UniformGrid::new(-8.0, 8.0, 3).unwrap(),
        UniformGrid::new(0.05, 8.0, 3).unwrap(),
        &[alpha],
        &[beta],
        beta.abs().max(1.0),
    )
    .unwrap()
}

fn controlled() -> ControlProblem<f64> {
    ControlProblem::scalar(Drift::identity(), 1.0, ControlBox::interval(-1.0, 1.0), Terminal::Tanh { scale: 1.0, amplitude: 1.0 }, 1.0)
}

fn driftless() -> ControlProblem<f64> {
    ControlProblem::scalar(Drift::zero(), 1.0, ControlBox::interval(-1.0, 1.0), Terminal::Tanh { scale: 1.0, amplitude: 1.0 }, 1.0)
}

fn start(y: f64) -> Start<f64> {
    Start { s: 0.0, y: vec![y] }
}

fn within_se(s: &SampleSummary, target: f64, k: f64) -> bool {
    (s.mean - target).abs() <= k * s.std_error
}

#[test]
fn driftless_state_is_a_martingale() {
    let batch = simulate_y(&driftless(), &constant_policy(1.0, 0.0), &start(0.3), &SimParams::new(PATHS, STEPS), 11).unwrap();
    let s = SampleSummary::of(&batch.terminal_y(0));
    assert!(within_se(&s, 0.3, 3.0), "{s:?}");
}

#[test]
fn constant_control_shifts_the_mean() {
    let batch = simulate_y(&controlled(), &constant_policy(-1.0, 0.0), &start(0.0), &SimParams::new(PATHS, STEPS), 12).unwrap();
    let s = SampleSummary::of(&batch.terminal_y(0));
    assert!(within_se(&s, -1.0, 3.0), "{s:?}");
}

#[test]
fn idle_control_gives_gaussian_variance() {
    let batch = simulate_y(&controlled(), &constant_policy(0.0, 0.0), &start(0.0), &SimParams::new(PATHS, STEPS), 13).unwrap();
    let s = SampleSummary::of(&batch.terminal_y(0));
    assert!((s.variance - 1.0).abs() < 0.05, "{s:?}");
}

#[test]
fn density_with_unit_volatility() {
    let pol = constant_policy(0.0, 1.0);
    let batch = simulate_z(&DensityStart { s: 0.0, z: 1.0, y: 0.0 }, 1.0, &pol, &SimParams::new(PATHS, STEPS), 14).unwrap();
    let z = batch.terminal_z().unwrap();
    assert!(z.iter().all(|&v| v > 0.0));
    let s = SampleSummary::of(&z);
    assert!(within_se(&s, 1.0, 3.0), "{s:?}");
    let second = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
    assert!((second / std::f64::consts::E - 1.0).abs() < 0.05, "{second}");
}

#[test]
fn density_with_large_volatility_stays_a_martingale() {
    let pol = constant_policy(0.0, 2.0);
    let batch = simulate_z(&DensityStart { s: 0.0, z: 0.5, y: 0.0 }, 1.0, &pol, &SimParams::new(PATHS, STEPS), 15).unwrap();
    let s = SampleSummary::of(&batch.terminal_z().unwrap());
    assert!(within_se(&s, 0.5, 3.0), "{s:?}");
}

#[test]
fn martingale_property_for_constant_adversaries() {
    for (i, beta) in [-3.0, -1.5, -0.5, 0.0, 0.7, 2.0, 3.0].into_iter().enumerate() {
        let pol = constant_policy(0.0, beta);
        let batch = simulate_z(&DensityStart { s: 0.0, z: 1.0, y: 0.0 }, 1.0, &pol, &SimParams::new(PATHS, 20), 100 + i as u64).unwrap();
        let s = SampleSummary::of(&batch.terminal_z().unwrap());
        assert!(within_se(&s, 1.0, 4.0) || s.std_error == 0.0 && s.mean == 1.0, "beta {beta}: {s:?}");
    }
}

#[test]
fn untilted_paths_match_simulate_y_bit_for_bit() {
    let pol = constant_policy(0.4, 0.0);
    let params = SimParams::new(2_000, STEPS).full();
    let a = simulate_y(&controlled(), &pol, &start(0.1), &params, 21).unwrap();
    let b = simulate_tilted(&controlled(), &pol, &start(0.1), &params, 21).unwrap();
    assert_eq!(a.y_paths, b.y_paths);
    assert!(b.z_paths.unwrap().iter().all(|&z| z == 1.0));
}

#[test]
fn tilt_adds_drift() {
    let pol = constant_policy(0.0, 1.0);
    let batch = simulate_tilted(&driftless(), &pol, &start(0.0), &SimParams::new(PATHS, STEPS), 22).unwrap();
    let s = SampleSummary::of(&batch.terminal_y(0));
    assert!(within_se(&s, 1.0, 3.0), "{s:?}");

    let pol = constant_policy(1.0, 1.0);
    let batch = simulate_tilted(&controlled(), &pol, &start(0.5), &SimParams::new(PATHS, STEPS), 23).unwrap();
    let s = SampleSummary::of(&batch.terminal_y(0));
    assert!(within_se(&s, 2.5, 3.0), "{s:?}");
}

#[test]
fn same_seed_same_batch() {
    let pol = constant_policy(-0.3, 0.0);
    let params = SimParams::new(5_000, 30).full();
    let a = simulate_y(&controlled(), &pol, &start(0.0), &params, 99).unwrap();
    let b = simulate_y(&controlled(), &pol, &start(0.0), &params, 99).unwrap();
    assert_eq!(a, b);
    let c = simulate_y(&controlled(), &pol, &start(0.0), &params, 100).unwrap();
    assert_ne!(a.y_paths, c.y_paths);
}

#[test]
fn euler_is_exact_for_constant_control() {
    let a = 0.6;
    let pol = constant_policy(a, 0.0);
    for steps in [50, 100] {
        let batch = simulate_y(&controlled(), &pol, &start(0.2), &SimParams::new(1_000, steps), 31).unwrap();
        let yt = batch.terminal_y(0);
        let rms = (yt
            .iter()
            .zip(&batch.brownian_terminal)
            .map(|(&y, &w)| (y - (0.2 + a + w)).powi(2))
            .sum::<f64>()
            / 1_000.0)
            .sqrt();
        assert!(rms < 1e-12, "{rms}");
    }
}

#[test]
fn wide_box_rarely_exits() {
    // ±8 with unit variance over unit time: beyond 6 standard deviations
    let batch = simulate_y(&driftless(), &constant_policy(0.0, 0.0), &start(0.0), &SimParams::new(PATHS, STEPS), 41).unwrap();
    assert!(batch.exit_rate() < 1e-3, "{}", batch.exit_rate());

    let narrow = driftless().with_y_box(-0.5, 0.5);
    let batch = simulate_y(&narrow, &constant_policy(0.0, 0.0), &start(0.0), &SimParams::new(1_000, STEPS), 42).unwrap();
    assert!(batch.exit_count > 500);
    assert!(batch.terminal_y(0).iter().all(|y| y.abs() <= 0.5));
}
