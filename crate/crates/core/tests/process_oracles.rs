use volterra::kernels::fbm_covariance_closed_form;
use volterra::processes::{
    read_binary, simulate_cylindrical, simulate_fbm, simulate_rosenblatt, third_moment_oracle, DriverSpec,
    RosenblattConfig, RosenblattScheme, TimeGrid,
};
use volterra::stats::{mean_se, product_moment_se, shape_moments};

fn raw_second(xs: &[f64]) -> volterra::stats::McEstimate {
    product_moment_se(xs, xs)
}

#[test]
fn fbm_second_moments_match_closed_form() {
    let grid = TimeGrid::uniform(1.0, 32).unwrap();
    let e = simulate_fbm(0.75, &grid, 10_000, 21).unwrap();
    assert!(e.values.column(0).iter().all(|&v| v == 0.0));
    let b1 = e.at(32);
    let bh = e.at(16);
    assert!(raw_second(&b1).within_se(1.0, 3.0));
    let cov = product_moment_se(&bh, &b1);
    assert!(
        cov.within_se(fbm_covariance_closed_form(0.75, 0.5, 1.0), 3.0),
        "{cov:?}"
    );
}

#[test]
fn fbm_increments_look_gaussian() {
    let grid = TimeGrid::uniform(1.0, 16).unwrap();
    let e = simulate_fbm(0.6, &grid, 10_000, 4).unwrap();
    let incr: Vec<f64> = (0..e.replicas()).map(|r| e.values[[r, 9]] - e.values[[r, 8]]).collect();
    let (skew, kurt) = shape_moments(&incr);
    assert!(skew.within_se(0.0, 3.0), "{skew:?}");
    assert!(kurt.within_se(0.0, 3.0), "{kurt:?}");
}

#[test]
fn ensembles_do_not_depend_on_worker_count() {
    let grid = TimeGrid::uniform(1.0, 16).unwrap();
    let cfg = RosenblattConfig {
        inner: Some(256),
        ..RosenblattConfig::with_hurst(0.75)
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                (
                    simulate_fbm(0.7, &grid, 700, 3).unwrap(),
                    simulate_rosenblatt(&cfg, &grid, 700, 3).unwrap(),
                )
            })
    };
    assert_eq!(run(1), run(3));
}

fn rosenblatt_setup() -> (TimeGrid<f64>, RosenblattScheme) {
    let grid = TimeGrid::uniform(1.0, 20).unwrap();
    let cfg = RosenblattConfig {
        inner: Some(260),
        ..RosenblattConfig::with_hurst(0.75)
    };
    let scheme = RosenblattScheme::new(&cfg, &grid).unwrap();
    (grid, scheme)
}

#[test]
fn rosenblatt_second_moments_follow_the_fbm_covariance() {
    let (_, scheme) = rosenblatt_setup();
    let cert = scheme.certificate();
    assert!(cert.third_moment_drift() < 0.02 && cert.max_drift() < 0.02, "{cert:?}");
    let e = scheme.sample(10_000, 8, 0).unwrap();
    assert!(e.values.column(0).iter().all(|&v| v == 0.0));
    let z1 = e.at(20);
    let v = raw_second(&z1);
    assert!(v.within(1.0, 3.0, 0.02), "{v:?}");
    for k in [4, 8, 12, 16, 20] {
        let t = k as f64 / 20.0;
        let c = product_moment_se(&e.at(k), &z1);
        assert!(
            c.within(fbm_covariance_closed_form(0.75, t, 1.0), 3.0, 0.02),
            "t={t}: {c:?}"
        );
        // The discretized law reproduces the covariance exactly.
        assert!((scheme.variance(k) - t.powf(1.5)).abs() < 1e-6);
    }
}

#[test]
fn rosenblatt_third_moment_and_skewness() {
    let (_, scheme) = rosenblatt_setup();
    let e = scheme.sample(10_000, 9, 0).unwrap();
    let z1 = e.at(20);
    let oracle = scheme.third_moment(20);
    assert!(oracle > 0.0);
    let cubes: Vec<f64> = z1.iter().map(|z| z.powi(3)).collect();
    let m3 = mean_se(&cubes);
    assert!(m3.within(oracle, 5.0, 0.05), "{m3:?} vs {oracle}");
    let (skew, _) = shape_moments(&z1);
    assert!(skew.value > 2.326 * skew.se, "{skew:?}");
}

#[test]
fn third_moment_oracle_converges_and_vanishes_at_zero() {
    let cfg = RosenblattConfig {
        inner: None,
        ..RosenblattConfig::with_hurst(0.75)
    };
    assert_eq!(third_moment_oracle(&cfg, 0.0, 128).unwrap(), 0.0);
    let coarse = third_moment_oracle(&cfg, 1.0, 256).unwrap();
    let fine = third_moment_oracle(&cfg, 1.0, 512).unwrap();
    assert!(coarse > 0.0);
    assert!((fine / coarse - 1.0).abs() < 0.02, "{coarse} {fine}");
}

#[test]
fn cylindrical_coordinates_are_uncorrelated() {
    let grid = TimeGrid::uniform(1.0, 8).unwrap();
    let cyl = simulate_cylindrical(&DriverSpec::Fbm { hurst: 0.75 }, 8, &grid, 10_000, 17).unwrap();
    assert_eq!(cyl.modes(), 8);
    let ends: Vec<Vec<f64>> = cyl.coordinates.iter().map(|c| c.at(8)).collect();
    assert!(product_moment_se(&ends[0], &ends[1]).within_se(0.0, 3.0));
    for e in &ends {
        assert!(raw_second(e).within_se(1.0, 3.0));
    }
}

#[test]
fn binary_files_round_trip() {
    let grid = TimeGrid::uniform(1.0, 8).unwrap();
    let e = simulate_fbm(0.8, &grid, 5, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("paths.bin");
    e.write_binary(std::fs::File::create(&path).unwrap()).unwrap();
    let back = read_binary(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back.values, e.values);
}
