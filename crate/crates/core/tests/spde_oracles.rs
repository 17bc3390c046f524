use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use volterra::processes::{
    simulate_cylindrical, CylindricalEnsemble, DriverSampler, DriverSpec, RosenblattConfig, TimeGrid,
};
use volterra::spde::{
    build_model, elementary_operator_check, estimate_gamma_decay, factorization_reconstruct, fractional_power_norm,
    gamma_radonifying_norm, log_grid, mode_covariance, round_trip_error, solve_mild, CoefficientRule, Driver,
    ElementaryOperator, HolderParameters, MildProblem, NoiseOperator, DEFAULT_REFINEMENT, FIELD_TRUNCATION_LIMIT,
};
use volterra::stats::{mean_se, variance_se};
use volterra::wiener_integral::{uniform_grid_energy, StepFunction};
use volterra::FbmKernel64;

const PI: f64 = std::f64::consts::PI;

fn problem<'a>(model: &'a volterra::spde::SpectralModel, noise: NoiseOperator, record: Vec<usize>) -> MildProblem<'a> {
    MildProblem {
        model,
        noise,
        x0: vec![],
        refinement: DEFAULT_REFINEMENT,
        record,
        truncation_limit: Some(FIELD_TRUNCATION_LIMIT),
    }
}

/// Only the listed 1-based modes carry unit noise.
fn selected_modes(modes: usize, chosen: &[usize]) -> NoiseOperator {
    let mut values = vec![0.0; modes];
    for &k in chosen {
        values[k - 1] = 1.0;
    }
    NoiseOperator::Diagonal(CoefficientRule::Explicit { values })
}

#[test]
fn default_model_is_orthonormal() {
    let model = build_model(PI, 1, 64, 512).unwrap();
    assert!(model.gram_error() < 1e-6);
    assert_eq!(model.eigenvalues()[63], 64.0 * 64.0);
    let quartic = build_model(PI, 2, 64, 512).unwrap();
    assert!((quartic.eigenvalues()[9] - 1e4).abs() < 1e-8);
}

#[test]
fn white_noise_decay_is_a_quarter() {
    let model = build_model(PI, 1, 256, 1024).unwrap();
    let decay = estimate_gamma_decay(&model, &NoiseOperator::white(), 2.0, &log_grid(1e-4, 1e-2, 9), 0.25).unwrap();
    assert!((decay.gamma - 0.25).abs() < 0.03, "{}", decay.gamma);
    assert!(!decay.poor_fit);
    for (u, n) in decay.times.iter().zip(&decay.norms) {
        let sum: f64 = (1..=4096).map(|k| (-2.0 * (k * k) as f64 * u).exp()).sum();
        assert!((n.value / sum.sqrt() - 1.0).abs() < 1e-3);
        assert!(n.truncation_drift < 0.01);
    }
}

#[test]
fn pointwise_noise_follows_the_heat_kernel() {
    let model = build_model(PI, 1, 256, 2048).unwrap();
    let noise = NoiseOperator::Pointwise { location: PI / 2.0 };
    for (p, expected) in [(2.0, 0.25), (4.0, 0.375)] {
        let decay = estimate_gamma_decay(&model, &noise, p, &log_grid(1e-4, 1e-2, 9), 0.25).unwrap();
        assert!((decay.gamma - expected).abs() < 0.03, "p = {p}: {}", decay.gamma);
        assert!(decay.r_squared >= 0.99);
    }
    // Gaussian heat kernel on the line; the Dirichlet images are negligible.
    let u: f64 = 1e-3;
    for p in [2.0, 4.0] {
        let exact = (4.0 * PI * u).powf(-0.5) * (4.0 * PI * u / p).powf(0.5 / p);
        let n = gamma_radonifying_norm(&model, &noise, u, p).unwrap();
        assert!((n.value / exact - 1.0).abs() < 1e-3, "{} {exact}", n.value);
    }
}

#[test]
fn smoothed_noise_does_not_decay() {
    let model = build_model(PI, 1, 64, 256).unwrap();
    let noise = NoiseOperator::Diagonal(CoefficientRule::Smoothed);
    let decay = estimate_gamma_decay(&model, &noise, 2.0, &log_grid(1e-4, 1e-2, 5), 0.1).unwrap();
    assert!(decay.gamma.abs() < 0.01);
    assert!(decay.admissible);
}

#[test]
fn mode_covariance_matches_fine_step_energy() {
    // Midpoint step approximation of e^{-λ(t-u)} on [0, t], refined until
    // the energies agree; the limit must match the closed inner integral.
    for (lambda, hurst) in [(4.0, 0.75), (30.0, 0.6), (1.0, 0.9)] {
        let t = 0.8;
        let energy = |n: usize| {
            let h = t / n as f64;
            let w: Vec<f64> = (0..n).map(|i| (-lambda * (t - (i as f64 + 0.5) * h)).exp()).collect();
            uniform_grid_energy(&w, h, hurst)
        };
        let (coarse, fine) = (energy(2000), energy(4000));
        let extrapolated = fine + (fine - coarse) / 3.0;
        let exact = mode_covariance(lambda, hurst, t, t).unwrap();
        assert!(
            (exact / extrapolated - 1.0).abs() < 1e-3,
            "{lambda} {hurst}: {exact} {extrapolated}"
        );
    }
}

#[test]
fn per_mode_variances_match_the_oracle() {
    let grid = TimeGrid::uniform(1.0, 256).unwrap();
    let model = build_model(PI, 1, 16, 64).unwrap();
    let sampler = DriverSampler::new(&DriverSpec::Fbm { hurst: 0.75 }, &grid).unwrap();
    let chosen = [1, 4, 16];
    let field = solve_mild(
        &problem(&model, selected_modes(16, &chosen), vec![128, 256]),
        Driver::Sampled {
            sampler: &sampler,
            seed: 11,
            replicas: 2000,
        },
    )
    .unwrap();
    for &k in &chosen {
        let xs: Vec<f64> = (0..field.replicas()).map(|r| field.values[[r, k - 1, 1]]).collect();
        let oracle = mode_covariance((k * k) as f64, 0.75, 1.0, 1.0).unwrap();
        let var = variance_se(&xs);
        assert!(var.within(oracle, 3.0, 0.02), "mode {k}: {var:?} vs {oracle}");
        assert!(mean_se(&xs).within_se(0.0, 3.0));
        let ys: Vec<f64> = (0..field.replicas()).map(|r| field.values[[r, k - 1, 0]]).collect();
        let cov = volterra::stats::product_moment_se(&xs, &ys);
        let oracle = mode_covariance((k * k) as f64, 0.75, 1.0, 0.5).unwrap();
        assert!(cov.within(oracle, 3.0, 0.02), "mode {k}: {cov:?} vs {oracle}");
    }
}

#[test]
fn zero_noise_is_the_exact_semigroup_flow() {
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let model = build_model(PI, 1, 8, 32).unwrap();
    let sampler = DriverSampler::new(&DriverSpec::Fbm { hurst: 0.6 }, &grid).unwrap();
    let x0: Vec<f64> = (1..=8).map(|k| 1.0 / k as f64).collect();
    let p = MildProblem {
        x0: x0.clone(),
        record: vec![0, 16, 32, 64],
        ..problem(&model, NoiseOperator::zero(), vec![])
    };
    let field = solve_mild(
        &p,
        Driver::Sampled {
            sampler: &sampler,
            seed: 1,
            replicas: 3,
        },
    )
    .unwrap();
    for r in 0..3 {
        for k in 0..8 {
            let l = model.eigenvalues()[k];
            assert_eq!(field.values[[r, k, 0]], x0[k]);
            for (j, &t) in field.times.iter().enumerate() {
                assert_eq!(field.values[[r, k, j]], (-l * t).exp() * x0[k]);
            }
            // X(t + s) = e^{-λ s} X(t)
            let shifted = (-l * 0.5).exp() * field.values[[r, k, 2]];
            assert!((field.values[[r, k, 3]] - shifted).abs() <= 1e-15 * shifted.abs().max(1e-300) + 1e-300);
        }
    }
}

#[test]
fn solution_is_linear_in_initial_data_and_driver() {
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let model = build_model(PI, 1, 8, 32).unwrap();
    let cyl = simulate_cylindrical(&DriverSpec::Fbm { hurst: 0.7 }, 8, &grid, 4, 5).unwrap();
    let doubled = CylindricalEnsemble {
        coordinates: cyl
            .coordinates
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.values.mapv_inplace(|v| 2.0 * v);
                c
            })
            .collect(),
    };
    let x0: Vec<f64> = (1..=8).map(|k| (k as f64).sin()).collect();
    let noisy = MildProblem {
        truncation_limit: None,
        ..problem(&model, NoiseOperator::white(), vec![32, 64])
    };
    let both = solve_mild(
        &MildProblem {
            x0: x0.clone(),
            ..noisy.clone()
        },
        Driver::Paths(&doubled),
    )
    .unwrap();
    let stoch = solve_mild(&noisy, Driver::Paths(&cyl)).unwrap();
    let det = solve_mild(
        &MildProblem {
            x0,
            noise: NoiseOperator::zero(),
            ..noisy.clone()
        },
        Driver::Paths(&cyl),
    )
    .unwrap();
    let combined = &det.values + &(&stoch.values * 2.0);
    for (a, b) in both.values.iter().zip(combined.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn fractional_power_norm_matches_dense_quadrature() {
    let model = build_model(PI, 1, 2, 512).unwrap();
    let grid = TimeGrid::uniform(1.0, 4).unwrap();
    let cyl = simulate_cylindrical(&DriverSpec::Fbm { hurst: 0.7 }, 2, &grid, 1, 3).unwrap();
    let p = MildProblem {
        x0: vec![0.7, -1.3],
        truncation_limit: None,
        ..problem(&model, NoiseOperator::zero(), vec![0])
    };
    let field = solve_mild(&p, Driver::Paths(&cyl)).unwrap();
    let (delta, a, b) = (0.5, 0.7, -1.3 * 4f64.powf(0.5));
    for lp in [2.0, 3.0, 4.0] {
        let norm = fractional_power_norm(&field, delta, lp, 0).unwrap()[0];
        let n = 200_000;
        let h = PI / n as f64;
        let f = |x: f64| {
            let v = (2.0 / PI).sqrt() * (a * x.sin() + b * (2.0 * x).sin());
            v.abs().powf(lp)
        };
        let mut acc = f(0.0) + f(PI);
        for i in 1..n {
            acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let dense = (acc * h / 3.0).powf(1.0 / lp);
        assert!((norm - dense).abs() < 1e-4, "p = {lp}: {norm} {dense}");
    }
    // δ = 1 on the first eigenfunction with λ_1 = 1 is the plain norm.
    let single = solve_mild(
        &MildProblem {
            x0: vec![1.0, 0.0],
            ..p.clone()
        },
        Driver::Paths(&cyl),
    )
    .unwrap();
    let plain = fractional_power_norm(&single, 0.0, 3.0, 0).unwrap()[0];
    let powered = fractional_power_norm(&single, 1.0, 3.0, 0).unwrap()[0];
    assert!((plain - powered).abs() < 1e-14);
}

#[test]
fn factorization_round_trip() {
    let grid = TimeGrid::uniform(1.0, 256).unwrap();
    let model = build_model(PI, 1, 64, 256).unwrap();
    let sampler = DriverSampler::new(&DriverSpec::Fbm { hurst: 0.75 }, &grid).unwrap();
    let driver = Driver::Sampled {
        sampler: &sampler,
        seed: 9,
        replicas: 100,
    };
    let p = problem(&model, NoiseOperator::white(), vec![128, 256]);
    let direct = solve_mild(&p, driver).unwrap();
    for (beta, delta) in [(0.15, 0.0), (0.1, 0.2), (0.2, 0.2)] {
        let params = HolderParameters {
            beta,
            delta,
            ..Default::default()
        };
        let other = factorization_reconstruct(&p, driver, &params).unwrap();
        for j in 0..2 {
            let rt = round_trip_error(&direct, &other, j).unwrap();
            assert!(rt.relative_error < 0.03, "β {beta} δ {delta}: {rt:?}");
        }
    }
    let zero = factorization_reconstruct(
        &problem(&model, NoiseOperator::zero(), vec![256]),
        driver,
        &HolderParameters::default(),
    )
    .unwrap();
    assert!(zero.values.iter().all(|v| *v == 0.0));
    let bad = HolderParameters {
        beta: 0.6,
        delta: 0.5,
        ..Default::default()
    };
    assert!(factorization_reconstruct(&p, driver, &bad).is_err());
}

#[test]
fn elementary_operator_ratios_are_stable() {
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let model = build_model(PI, 1, 8, 64).unwrap();
    let kernel = FbmKernel64::new(0.6, None).unwrap();
    let cyl = simulate_cylindrical(&DriverSpec::Fbm { hurst: 0.6 }, 8, &grid, 2000, 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ops: Vec<ElementaryOperator> = (0..20)
        .map(|_| ElementaryOperator::random(&model, &grid, 8, 6, 4, &mut rng).unwrap())
        .collect();
    ops.push(ElementaryOperator {
        terms: vec![(StepFunction::constant(0.0, 1.0).unwrap(), Array1::zeros(63))],
    });
    for (p, q) in [(2.0, 2.0), (4.0, 4.0)] {
        let report = elementary_operator_check(&model, &kernel, &ops, &cyl, p, q).unwrap();
        assert!(report.stable, "(p, q) = ({p}, {q}): {}", report.max_deviation);
        assert!(report.bound_holds);
        let zero = report.results.last().unwrap();
        assert_eq!(zero.stochastic_norm.value, 0.0);
        assert_eq!(zero.square_function, 0.0);
        if p == 2.0 {
            // Independent coordinates make both sides equal in L².
            assert!((report.mean_ratio - 1.0).abs() < 0.02);
        }
    }
}

#[test]
fn single_indicator_operator_matches_both_oracles() {
    let grid = TimeGrid::uniform(1.0, 32).unwrap();
    let model = build_model(PI, 1, 4, 64).unwrap();
    let kernel = FbmKernel64::new(0.75, None).unwrap();
    let cyl = simulate_cylindrical(&DriverSpec::Fbm { hurst: 0.75 }, 1, &grid, 10_000, 2).unwrap();
    let e1 = model.synthesize(Array1::from(vec![1.0, 0.0, 0.0, 0.0]).view());
    let op = ElementaryOperator {
        terms: vec![(StepFunction::indicator(1.0, 1.0).unwrap(), e1)],
    };
    let report = elementary_operator_check(&model, &kernel, &[op], &cyl, 2.0, 2.0).unwrap();
    let r = report.results[0];
    // ‖e_1‖_{L²} = 1 and ‖1_{[0,1]}‖²_𝒟 = 1.
    assert!((r.square_function - 1.0).abs() < 1e-4);
    assert!(r.stochastic_norm.within(1.0, 3.0, 0.02));
}

#[test]
fn field_moment_ratio_is_stable_in_modes() {
    let grid = TimeGrid::uniform(1.0, 128).unwrap();
    let specs = [
        DriverSpec::Fbm { hurst: 0.75 },
        DriverSpec::Rosenblatt(RosenblattConfig {
            inner: Some(256),
            ..RosenblattConfig::with_hurst(0.75)
        }),
    ];
    for spec in specs {
        let sampler = DriverSampler::new(&spec, &grid).unwrap();
        let mut ratios = Vec::new();
        for modes in [8, 16, 32] {
            let model = build_model(PI, 1, modes, 4 * modes).unwrap();
            let field = solve_mild(
                &MildProblem {
                    truncation_limit: None,
                    ..problem(&model, NoiseOperator::white(), vec![128])
                },
                Driver::Sampled {
                    sampler: &sampler,
                    seed: 21,
                    replicas: 2000,
                },
            )
            .unwrap();
            let sq: Vec<f64> = fractional_power_norm(&field, 0.0, 2.0, 0)
                .unwrap()
                .iter()
                .map(|n| n * n)
                .collect();
            let m2 = mean_se(&sq).value;
            let m4 = mean_se(&sq.iter().map(|s| s * s).collect::<Vec<_>>()).value;
            ratios.push(m4.powf(0.25) / m2.sqrt());
        }
        let spread = ratios.iter().fold(0.0f64, |a, r| a.max((r / ratios[0] - 1.0).abs()));
        assert!(spread < 0.01, "{spec:?}: {ratios:?}");
    }
}
