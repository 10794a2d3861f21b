use oce_control::oce::log_mean_exp;
use oce_control::*;
use proptest::prelude::*;

const TOL: f64 = 1e-10;

fn preset_strategy() -> impl Strategy<Value = LossSpecF64> {
    prop_oneof![
        Just(LossSpec::entropic()),
        Just(LossSpec::monotone_mean_variance()),
        (0.05f64..0.95).prop_map(|g| LossSpec::avar(g).unwrap()),
    ]
}

/// Outcomes in `[-5, 5]` with positive weights normalized to one.
fn dist_strategy() -> impl Strategy<Value = EmpiricalDistributionF64> {
    prop::collection::vec((-5.0f64..5.0, 0.05f64..1.0), 1..=50).prop_map(|pairs| {
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let (xs, ws): (Vec<f64>, Vec<f64>) = pairs.into_iter().map(|(x, w)| (x, w / total)).unzip();
        EmpiricalDistribution::new(xs, ws).unwrap()
    })
}

fn rho(dist: &EmpiricalDistributionF64, spec: &LossSpecF64) -> f64 {
    oce_primal(dist, spec, TOL).unwrap().value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn duality_gap(dist in dist_strategy(), spec in preset_strategy()) {
        let p = rho(&dist, &spec);
        let d = oce_dual_discrete(&dist, &spec, TOL).unwrap();
        prop_assert!((p - d).abs() <= 1e-6 * (1.0 + p.abs()), "primal {p} dual {d}");
    }

    #[test]
    fn cash_invariance(dist in dist_strategy(), spec in preset_strategy(), c in -10.0f64..10.0) {
        let shifted = EmpiricalDistribution::new(
            dist.outcomes().iter().map(|x| x + c).collect(),
            dist.weights().to_vec(),
        ).unwrap();
        prop_assert!((rho(&shifted, &spec) - rho(&dist, &spec) - c).abs() <= 1e-9);
    }

    #[test]
    fn monotone(dist in dist_strategy(), spec in preset_strategy(), bumps in prop::collection::vec(0.0f64..2.0, 50)) {
        let higher = EmpiricalDistribution::new(
            dist.outcomes().iter().zip(&bumps).map(|(x, b)| x + b).collect(),
            dist.weights().to_vec(),
        ).unwrap();
        prop_assert!(rho(&dist, &spec) <= rho(&higher, &spec) + 1e-9);
    }

    #[test]
    fn avar_matches_sorting(dist in dist_strategy(), g in 0.05f64..0.95) {
        let spec = LossSpec::avar(g).unwrap();
        prop_assert!((rho(&dist, &spec) - avar_closed_form(&dist, g).unwrap()).abs() <= 1e-8);
    }

    #[test]
    fn entropic_matches_log_mean_exp(dist in dist_strategy()) {
        prop_assert!((rho(&dist, &LossSpec::entropic()) - log_mean_exp(&dist)).abs() <= 1e-8);
    }

    #[test]
    fn law_invariance(dist in dist_strategy(), spec in preset_strategy(), seed in any::<u64>()) {
        let n = dist.len();
        let mut order: Vec<usize> = (0..n).collect();
        // deterministic shuffle from the seed
        let mut s = seed | 1;
        for i in (1..n).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            order.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let permuted = EmpiricalDistribution::new(
            order.iter().map(|&i| dist.outcomes()[i]).collect(),
            order.iter().map(|&i| dist.weights()[i]).collect(),
        );
        // reordering the weights can move their sum by an ulp; renormalizing is not needed
        let permuted = permuted.unwrap();
        prop_assert!((rho(&permuted, &spec) - rho(&dist, &spec)).abs() <= 1e-9 * (1.0 + rho(&dist, &spec).abs()));
    }
}

#[test]
fn constant_outcome_for_every_preset() {
    let dist = EmpiricalDistribution::uniform(vec![3.7]).unwrap();
    for spec in [LossSpec::entropic(), LossSpec::monotone_mean_variance(), LossSpec::avar(0.3).unwrap()] {
        let r = oce_primal(&dist, &spec, TOL).unwrap();
        assert!((r.value - 3.7).abs() < 1e-9);
        assert!((oce_dual_discrete(&dist, &spec, TOL).unwrap() - 3.7).abs() < 1e-9);
    }
    let r = oce_primal(&dist, &LossSpec::entropic(), TOL).unwrap();
    assert!((r.r_star - 3.7).abs() < 1e-6);
}

#[test]
fn two_point_examples() {
    let coin = EmpiricalDistribution::uniform(vec![0.0, 1.0]).unwrap();
    let avar = LossSpec::avar(0.5).unwrap();
    assert!((rho(&coin, &avar) - 1.0).abs() < 1e-9);
    assert!((oce_dual_discrete(&coin, &avar, TOL).unwrap() - 1.0).abs() < 1e-6);
    let lg = EmpiricalDistribution::uniform(vec![0.0, 2f64.ln()]).unwrap();
    assert!((rho(&lg, &LossSpec::entropic()) - 1.5f64.ln()).abs() < 1e-9);
    let quarters = EmpiricalDistribution::uniform(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(avar_closed_form(&quarters, 0.25).unwrap(), 4.0);
}

#[test]
fn single_precision() {
    let coin = EmpiricalDistributionF32::uniform(vec![0.0, 1.0]).unwrap();
    let v = oce_primal(&coin, &LossSpec::avar(0.5).unwrap(), 1e-5).unwrap().value;
    assert!((v - 1.0).abs() < 1e-4, "{v}");
}
