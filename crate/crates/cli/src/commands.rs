//! One function per subcommand: each writes its artifacts and returns the
//! verdicts that decide the exit status.

use ndarray::s;
use serde_json::json;
use volterra::chaos::{hypercontractivity_sweep, SweepConfig};
use volterra::kernels::fbm_covariance_closed_form;
use volterra::processes::{DriverSampler, PathEnsemble};
use volterra::regularity::{regularity_verdict, BoundCase, IncrementNorm};
use volterra::rng::{stream, substream};
use volterra::spde::{
    estimate_gamma_decay, factorization_constant, factorization_reconstruct, mode_covariance, round_trip_error,
    solve_mild, CoefficientRule, Driver, MildProblem, NoiseOperator, FIELD_TRUNCATION_LIMIT, GAMMA_TRUNCATION_LIMIT,
};
use volterra::stats::product_moment_se;
use volterra::wiener_integral::{elementary_integrals, fbm_inner_product, integral_variance, StepFunction};

use crate::config::{DriverFamily, ExperimentConfig, Format, Integrand};
use crate::error::Result;
use crate::report::{Artifacts, Check};

/// Relative slack of Monte Carlo checks on Rosenblatt paths, whose law is
/// discretized; fBm paths are exact and get none.
fn discretization_slack(cfg: &ExperimentConfig) -> f64 {
    match cfg.driver.family {
        DriverFamily::Fbm => 0.0,
        DriverFamily::Rosenblatt => 0.02,
    }
}

fn head(ensemble: &PathEnsemble<f64>, replicas: usize) -> PathEnsemble<f64> {
    let n = replicas.min(ensemble.replicas());
    PathEnsemble {
        grid: ensemble.grid.clone(),
        values: ensemble.values.slice(s![..n, ..]).to_owned(),
        family: ensemble.family.clone(),
        seed: ensemble.seed,
    }
}

pub fn simulate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let grid = cfg.time_grid()?;
    let record = cfg.points_record(&grid)?;
    let sampler = DriverSampler::new(&cfg.driver_spec(), &grid)?;
    let paths = sampler.sample(cfg.mc.replicas, cfg.mc.seed, 0)?;
    let shown = head(&paths, cfg.output.csv_replicas);
    art.with_writer(Format::Csv, "paths.csv", |w| shown.write_csv(w))?;
    art.with_writer(Format::Binary, "paths.bin", |w| paths.write_binary(w))?;

    let h = cfg.driver.hurst;
    let columns: Vec<Vec<f64>> = record.iter().map(|&j| paths.at(j)).collect();
    let mut checks = Vec::new();
    for a in 0..record.len() {
        for b in a..record.len() {
            let (s, t) = (grid.points()[record[a]], grid.points()[record[b]]);
            checks.push(Check::estimate(
                format!("E b_{s} b_{t}"),
                product_moment_se(&columns[a], &columns[b]),
                fbm_covariance_closed_form(h, s, t),
                3.0,
                discretization_slack(cfg),
            ));
        }
    }
    let certificate = match &sampler {
        DriverSampler::Rosenblatt(scheme) => {
            let c = scheme.certificate();
            checks.push(Check::at_most("certificate: variance drift", c.max_drift(), c.limit));
            Some(c)
        }
        DriverSampler::Fbm(_) => None,
    };
    art.json(
        "covariance.json",
        &json!({ "checks": checks, "certificate": certificate }),
    )?;
    Ok(checks)
}

pub fn isometry(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let grid = cfg.time_grid()?;
    let kernel = cfg.kernel()?;
    let h = cfg.driver.hurst;
    let iso = &cfg.isometry;
    let functions = (0..iso.functions as u64)
        .map(|i| match iso.integrand {
            Integrand::Zero => StepFunction::constant(0.0, grid.horizon()),
            Integrand::Random => {
                let mut rng = substream(cfg.mc.seed, stream::INTEGRANDS, i);
                StepFunction::random_on_grid(&grid, iso.pieces, &mut rng)
            }
        })
        .collect::<volterra::Result<Vec<_>>>()?;
    let paths = DriverSampler::new(&cfg.driver_spec(), &grid)?.sample(cfg.mc.replicas, cfg.mc.seed, 0)?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (i, phi) in functions.iter().enumerate() {
        let norm = integral_variance(phi, &kernel)?.value;
        let inner = fbm_inner_product(phi, phi, h);
        let x = elementary_integrals(phi, &paths)?;
        let mc = product_moment_se(&x, &x);
        rows.push(vec![i as f64, norm, inner, mc.value, mc.se]);
        checks.push(Check::estimate(
            format!("φ{i}: MC variance vs ‖K*φ‖²"),
            mc,
            norm,
            3.0,
            discretization_slack(cfg),
        ));
        checks.push(Check::relative(
            format!("φ{i}: ‖K*φ‖² vs fBm inner product"),
            norm,
            inner,
            1e-3,
        ));
    }
    art.csv(
        "isometry.csv",
        &["function", "kstar_norm_sq", "inner_product", "mc_variance", "mc_se"],
        rows,
    )?;
    art.json("isometry.json", &json!({ "c_h": kernel.c_h(), "checks": checks }))?;
    Ok(checks)
}

pub fn chaos(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let c = &cfg.chaos;
    let report = hypercontractivity_sweep(&SweepConfig {
        order: c.order,
        p: c.p,
        q: c.q,
        dims: c.dims.clone(),
        trials: c.trials,
        replicas: c.replicas,
        terms: c.terms,
        space_exponent: c.space_exponent,
        seed: cfg.mc.seed,
    })?;
    let base = report.per_dim[0].sup_ratio;
    let growth = report.per_dim.iter().map(|d| d.sup_ratio / base).fold(0.0, f64::max);
    let checks = vec![
        Check::at_most("max sup ratio over dims / sup at the smallest dim", growth, 1.05),
        Check::holds("no upward trend in log dim", report.pass),
    ];
    art.csv(
        "chaos.csv",
        &["dim", "sup_ratio", "sup_se", "mean_ratio"],
        report
            .per_dim
            .iter()
            .map(|d| vec![d.dim as f64, d.sup_ratio, d.sup_se, d.mean_ratio]),
    )?;
    art.json("chaos.json", &json!({ "report": report, "checks": checks }))?;
    Ok(checks)
}

pub fn gamma_decay(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let model = cfg.spectral_model()?;
    let decay = estimate_gamma_decay(
        &model,
        &cfg.noise.operator,
        cfg.noise.p,
        &cfg.decay_times(),
        cfg.params.alpha,
    )?;
    let drift = decay.norms.iter().map(|n| n.truncation_drift).fold(0.0, f64::max);
    let checks = vec![
        Check::at_least("R²", decay.r_squared, 0.99),
        Check::at_most("γ̂ vs α + 1/2 - 0.02", decay.gamma, cfg.params.alpha + 0.5 - 0.02),
        Check::at_most("mode-doubling drift", drift, GAMMA_TRUNCATION_LIMIT),
    ];
    art.csv(
        "gamma_decay.csv",
        &["u", "gamma_norm", "truncation_drift"],
        decay
            .times
            .iter()
            .zip(&decay.norms)
            .map(|(u, n)| vec![*u, n.value, n.truncation_drift]),
    )?;
    art.json("gamma_decay.json", &json!({ "decay": decay, "checks": checks }))?;
    Ok(checks)
}

fn mild_problem<'a>(
    cfg: &ExperimentConfig,
    model: &'a volterra::spde::SpectralModel,
    record: Vec<usize>,
    truncation_limit: Option<f64>,
) -> MildProblem<'a> {
    MildProblem {
        model,
        noise: cfg.noise.operator.clone(),
        x0: vec![],
        refinement: cfg.grids.refinement,
        record,
        truncation_limit,
    }
}

pub fn solve(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let grid = cfg.time_grid()?;
    let model = cfg.spectral_model()?;
    let problem = mild_problem(cfg, &model, cfg.points_record(&grid)?, Some(FIELD_TRUNCATION_LIMIT));
    let sampler = DriverSampler::new(&cfg.driver_spec(), &grid)?;
    let field = solve_mild(
        &problem,
        Driver::Sampled {
            sampler: &sampler,
            seed: cfg.mc.seed,
            replicas: cfg.mc.replicas,
        },
    )?;
    art.with_writer(Format::Csv, "solution.csv", |w| {
        field.write_csv(w, cfg.output.csv_replicas)
    })?;
    art.with_writer(Format::Binary, "solution.bin", |w| field.write_binary(w))?;

    let coeff = cfg.noise.operator.coefficients(&model);
    let last = field.times.len() - 1;
    let t = field.times[last];
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for &k in &cfg.checks.modes {
        let c = coeff[k - 1];
        let xs: Vec<f64> = (0..field.replicas()).map(|r| field.values[[r, k - 1, last]]).collect();
        let est = product_moment_se(&xs, &xs);
        let oracle = c * c * mode_covariance(model.eigenvalues()[k - 1], cfg.driver.hurst, t, t)?;
        rows.push(vec![k as f64, t, est.value, est.se, oracle]);
        checks.push(Check::estimate(
            format!("mode {k}: E X_k({t})²"),
            est,
            oracle,
            3.0,
            0.02,
        ));
    }
    art.csv(
        "mode_variances.csv",
        &["mode", "time", "mc_second_moment", "mc_se", "oracle"],
        rows,
    )?;
    art.json(
        "solve.json",
        &json!({
            "checks": checks,
            "truncation_drift": field.truncation_drift,
            "refinement_drift": field.refinement_drift,
        }),
    )?;
    Ok(checks)
}

pub fn factorize(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let grid = cfg.time_grid()?;
    let model = cfg.spectral_model()?;
    // Both sides share the truncated model, so no truncation certificate.
    let problem = mild_problem(cfg, &model, cfg.points_record(&grid)?, None);
    let sampler = DriverSampler::new(&cfg.driver_spec(), &grid)?;
    let driver = Driver::Sampled {
        sampler: &sampler,
        seed: cfg.mc.seed,
        replicas: cfg.mc.replicas,
    };
    let direct = solve_mild(&problem, driver)?;
    let rebuilt = factorization_reconstruct(&problem, driver, &cfg.params)?;
    let mut checks = Vec::new();
    let mut trips = Vec::new();
    for (j, t) in direct.times.iter().enumerate() {
        let rt = round_trip_error(&direct, &rebuilt, j)?;
        checks.push(Check::at_most(
            format!("t = {t}: relative L² error"),
            rt.relative_error,
            0.03,
        ));
        trips.push(json!({ "time": t, "round_trip": rt }));
    }
    let beta = cfg.params.beta;
    let constant = factorization_constant(beta, 0.0, grid.horizon())?;
    let exact = std::f64::consts::PI / (std::f64::consts::PI * beta).sin();
    checks.push(Check::close(
        format!("β = {beta}: ∫ (t-u)^(β-1) (u-r)^(-β) du vs π / sin(πβ)"),
        constant.value,
        exact,
        1e-6,
    ));
    art.json("factorize.json", &json!({ "round_trips": trips, "constant": { "value": constant.value, "error": constant.error }, "checks": checks }))?;
    Ok(checks)
}

/// Bound cases for the configured noise; the first one carries the verdict.
fn bound_cases(cfg: &ExperimentConfig) -> Result<Vec<BoundCase>> {
    let order = cfg.model.order;
    let measured = || -> Result<BoundCase> {
        let decay = estimate_gamma_decay(
            &cfg.spectral_model()?,
            &cfg.noise.operator,
            cfg.noise.p,
            &cfg.decay_times(),
            cfg.params.alpha,
        )?;
        Ok(BoundCase::Generic { gamma: decay.gamma })
    };
    Ok(match &cfg.noise.operator {
        NoiseOperator::Pointwise { .. } => vec![measured()?, BoundCase::Pointwise { p: cfg.noise.p }],
        NoiseOperator::Diagonal(CoefficientRule::Constant { .. }) => vec![BoundCase::HigherOrder { order }],
        NoiseOperator::Diagonal(_) => vec![measured()?],
    })
}

pub fn regularity(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let grid = cfg.time_grid()?;
    let model = cfg.spectral_model()?;
    let problem = mild_problem(cfg, &model, cfg.variogram_record(&grid)?, Some(FIELD_TRUNCATION_LIMIT));
    let sampler = DriverSampler::new(&cfg.driver_spec(), &grid)?;
    let field = solve_mild(
        &problem,
        Driver::Sampled {
            sampler: &sampler,
            seed: cfg.mc.seed,
            replicas: cfg.mc.replicas,
        },
    )?;
    let norm = IncrementNorm::FractionalPower {
        delta: cfg.params.delta,
        p: cfg.noise.p,
    };
    let report = regularity_verdict(&field, &cfg.noise.operator, &cfg.params, &bound_cases(cfg)?, norm)?;
    let checks = vec![Check {
        name: format!("measured + 2 SE vs predicted - 0.02 ({})", report.predicted.formula),
        measured: report.measured.exponent + 2.0 * report.measured.se,
        target: report.predicted.value - 0.02,
        tolerance: 0.0,
        pass: report.verdict,
    }];
    let oracle = |j: usize| report.oracle_moments.get(j).map_or(f64::NAN, |o| o.value);
    art.csv(
        "variogram.csv",
        &["lag", "mc_moment", "mc_se", "oracle"],
        report
            .measured
            .lags
            .iter()
            .zip(&report.measured.moments)
            .enumerate()
            .map(|(j, (h, m))| vec![*h, m.value, m.se, oracle(j)]),
    )?;
    art.json("regularity.json", &json!({ "report": report, "checks": checks }))?;
    Ok(checks)
}
