use volterra::processes::{simulate_fbm, simulate_rosenblatt, DriverSampler, DriverSpec, RosenblattConfig, TimeGrid};
use volterra::regularity::{
    converged_increment_oracle, dyadic_lags, field_variogram, gaussian_paths, mean_square_increment_oracle,
    oracle_exponent, path_variogram, regularity_verdict, BoundCase, IncrementNorm, ORACLE_MAX_MODES,
};
use volterra::spde::{
    build_model, solve_mild, CoefficientRule, Driver, HolderParameters, MildProblem, NoiseOperator, DEFAULT_REFINEMENT,
    FIELD_TRUNCATION_LIMIT,
};

const PI: f64 = std::f64::consts::PI;

#[test]
fn estimator_recovers_known_exponents() {
    let grid = TimeGrid::uniform(1.0, 512).unwrap();
    for theta in [0.3, 0.5, 0.75] {
        let e = gaussian_paths(theta, &grid, 1000, 3).unwrap();
        let est = path_variogram(&e, &dyadic_lags(0, 4)).unwrap();
        assert!((est.exponent - theta).abs() < 0.05, "θ = {theta}: {est:?}");
        assert!(est.se < 0.05);
    }
    let fbm = simulate_fbm(0.75, &grid, 1000, 5).unwrap();
    let est = path_variogram(&fbm, &dyadic_lags(0, 4)).unwrap();
    assert!((est.exponent - 0.75).abs() < 0.05, "{est:?}");
    let cfg = RosenblattConfig::with_hurst(0.75);
    let ros = simulate_rosenblatt(&cfg, &grid, 1000, 5).unwrap();
    let est_ros = path_variogram(&ros, &dyadic_lags(0, 4)).unwrap();
    assert!((est_ros.exponent - 0.75).abs() < 0.05, "{est_ros:?}");
}

#[test]
fn increments_of_fbm_match_the_closed_form() {
    // E|b_{t+h} - b_t|² = h^{2H} for every start time.
    let grid = TimeGrid::uniform(1.0, 256).unwrap();
    let e = simulate_fbm(0.6, &grid, 2000, 8).unwrap();
    let est = path_variogram(&e, &dyadic_lags(0, 5)).unwrap();
    for (h, m) in est.lags.iter().zip(&est.moments) {
        assert!(m.within(h.powf(1.2), 3.0, 0.02), "h = {h}: {m:?}");
    }
}

#[test]
fn oracle_slope_is_twice_h_minus_a_quarter() {
    let model = build_model(PI, 1, 64, 256).unwrap();
    let noise = NoiseOperator::white();
    let t0 = 0.5;
    let lags: Vec<f64> = (5..=9).rev().map(|e| 2f64.powi(-e)).collect();
    let oracles: Vec<_> = lags
        .iter()
        .map(|h| converged_increment_oracle(&model, &noise, 0.75, 0.0, t0, t0 + h, ORACLE_MAX_MODES).unwrap())
        .collect();
    let slope = 2.0 * oracle_exponent(&oracles, &lags);
    assert!((slope - 1.0).abs() < 0.05, "{slope}");
    let zero = mean_square_increment_oracle(&model, &noise, 0.75, 0.0, 0.3, 0.3).unwrap();
    assert_eq!(zero.value, 0.0);
}

#[test]
fn mean_square_right_continuity() {
    let model = build_model(PI, 1, 64, 256).unwrap();
    let noise = NoiseOperator::white();
    let t = 0.25;
    let values: Vec<f64> = (3..=9)
        .map(|e| {
            converged_increment_oracle(&model, &noise, 0.7, 0.0, t, t + 2f64.powi(-e), ORACLE_MAX_MODES)
                .unwrap()
                .value
        })
        .collect();
    assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
    assert!(values[6] < 0.2 * values[0]);
}

#[test]
fn field_increments_match_the_oracle() {
    let grid = TimeGrid::uniform(1.0, 512).unwrap();
    let model = build_model(PI, 1, 16, 64).unwrap();
    let noise = NoiseOperator::Diagonal(CoefficientRule::Explicit {
        values: (1..=8).map(|k| 1.0 / k as f64).collect(),
    });
    let sampler = DriverSampler::new(&DriverSpec::Fbm { hurst: 0.75 }, &grid).unwrap();
    let record = vec![256, 260, 264, 272, 288, 320];
    let problem = MildProblem {
        model: &model,
        noise: noise.clone(),
        x0: vec![],
        refinement: DEFAULT_REFINEMENT,
        record: record.clone(),
        truncation_limit: Some(FIELD_TRUNCATION_LIMIT),
    };
    let field = solve_mild(
        &problem,
        Driver::Sampled {
            sampler: &sampler,
            seed: 13,
            replicas: 2000,
        },
    )
    .unwrap();
    for delta in [0.0, 0.2] {
        let est = field_variogram(&field, IncrementNorm::FractionalPower { delta, p: 2.0 }).unwrap();
        for (j, m) in est.moments.iter().enumerate() {
            let oracle = mean_square_increment_oracle(&model, &noise, 0.75, delta, 0.5, field.times[j + 1]).unwrap();
            assert!(
                m.within(oracle.value, 3.0, 0.02),
                "δ = {delta}, lag {j}: {m:?} vs {oracle:?}"
            );
        }
    }
}

fn heat_field(
    noise: NoiseOperator,
    hurst: f64,
    modes: usize,
    replicas: usize,
    x0: Vec<f64>,
) -> volterra::spde::MildSolutionField {
    let grid = TimeGrid::uniform(1.0, 512).unwrap();
    let model = build_model(PI, 1, modes, 4 * modes).unwrap();
    let sampler = DriverSampler::new(&DriverSpec::Fbm { hurst }, &grid).unwrap();
    let problem = MildProblem {
        model: &model,
        noise,
        x0,
        refinement: DEFAULT_REFINEMENT,
        record: vec![256, 260, 264, 272, 288, 320],
        truncation_limit: Some(FIELD_TRUNCATION_LIMIT),
    };
    solve_mild(
        &problem,
        Driver::Sampled {
            sampler: &sampler,
            seed: 29,
            replicas,
        },
    )
    .unwrap()
}

#[test]
fn distributed_noise_verdicts() {
    let noise = NoiseOperator::white();
    let field = heat_field(noise.clone(), 0.75, 64, 1000, vec![]);
    for (delta, predicted) in [(0.0, 0.5), (0.2, 0.3)] {
        let params = HolderParameters {
            delta,
            ..Default::default()
        };
        let report = regularity_verdict(
            &field,
            &noise,
            &params,
            &[BoundCase::HigherOrder { order: 1 }],
            IncrementNorm::FractionalPower { delta, p: 2.0 },
        )
        .unwrap();
        assert!((report.predicted.value - predicted).abs() < 1e-12);
        assert!(report.verdict, "{report:?}");
        assert!(
            (report.measured.exponent - predicted).abs() < 0.05,
            "{:?}",
            report.measured
        );
        assert!(report.measured.exponent >= predicted - 0.02);
        let oracle = report.oracle_exponent.unwrap();
        assert!((oracle - predicted).abs() < 0.05, "{oracle}");
    }
}

#[test]
fn pointwise_noise_reports_both_bounds() {
    let noise = NoiseOperator::Pointwise { location: PI / 2.0 };
    let field = heat_field(noise.clone(), 0.75, 64, 1000, vec![]);
    let params = HolderParameters::default();
    let report = regularity_verdict(
        &field,
        &noise,
        &params,
        &[BoundCase::Generic { gamma: 0.25 }, BoundCase::Pointwise { p: 2.0 }],
        IncrementNorm::FractionalPower { delta: 0.0, p: 2.0 },
    )
    .unwrap();
    assert_eq!(report.also_reported.len(), 1);
    assert!((report.predicted.value - report.also_reported[0].value).abs() < 1e-12);
    assert!(report.verdict);
    // At the source point every mode shares the one driver and the field is
    // ∫ p_{t-r}(z, z) db_r, so the sup over space only keeps α + 1/2 - 1/2,
    // the heat-kernel bound as p → ∞.
    let sup = field_variogram(&field, IncrementNorm::SupOverSpace).unwrap();
    assert!(sup.exponent + 2.0 * sup.se >= 0.25 - 0.02, "{sup:?}");
    assert!(sup.exponent < report.measured.exponent - 0.1, "{sup:?}");
}

#[test]
fn deterministic_flow_is_saturated() {
    let x0: Vec<f64> = (1..=8).map(|k| (-(k as f64)).exp()).collect();
    let field = heat_field(NoiseOperator::zero(), 0.75, 8, 1000, x0);
    let report = regularity_verdict(
        &field,
        &NoiseOperator::zero(),
        &HolderParameters::default(),
        &[BoundCase::HigherOrder { order: 1 }],
        IncrementNorm::FractionalPower { delta: 0.0, p: 2.0 },
    )
    .unwrap();
    assert!(report.measured.saturated, "{:?}", report.measured);
    assert!(report.verdict);
    assert_eq!(report.measured.mc_se, 0.0);
}

#[test]
fn mismatched_delta_is_rejected() {
    let field = heat_field(NoiseOperator::zero(), 0.75, 4, 1000, vec![1.0, 0.0, 0.0, 0.0]);
    let err = regularity_verdict(
        &field,
        &NoiseOperator::zero(),
        &HolderParameters::default(),
        &[BoundCase::HigherOrder { order: 1 }],
        IncrementNorm::FractionalPower { delta: 0.3, p: 2.0 },
    );
    assert!(err.is_err());
}
