use filterlab::bayes::{coin_likelihood, density_stats, posterior_grid, CoinSequence};
use filterlab::belavkin::{
    classical_wiener_unitary, ensemble_average, generate_record, norm_martingale_check, poisson_kick_evolution,
};
use filterlab::classical::{
    dmz_run, kalman_bucy_reference, kalman_bucy_stationary_variance, kushner_run, simulate_truth_and_observation,
    ObservationUpdate,
};
use filterlab::operator::superoperator_matrix;
use filterlab::qsc::{heisenberg_increment, hp_increment, output_increment, unitarity_defect};
use filterlab::sde::{ensemble_summary, euler_maruyama, step_count};
use filterlab::{
    seed_derive, DiffusionSpec, EmissionAbsorptionModel, GridDensity, IncrementBasis, ItoExpr, Likelihood,
    ObservationModel, Operator, RngStream, SlhTriple,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::artifacts::{Artifacts, Table};
use crate::config::*;

/// Unitarity defect above which `ito-check` fails.
pub const DEFECT_THRESHOLD: f64 = 1e-8;

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Core(filterlab::Error),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.0)
    }
}

impl From<filterlab::Error> for RunError {
    fn from(e: filterlab::Error) -> Self {
        RunError::Core(e)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), passed: value <= threshold, value, threshold }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Artifacts,
    pub checks: Vec<Check>,
    pub results: Value,
    /// Printed on stdout in addition to the files.
    pub report: Option<Value>,
}

pub fn run(cfg: &ScenarioConfig) -> Result<Outcome, RunError> {
    match cfg.command {
        Command::Bayes => bayes(cfg.params()?),
        Command::Sde => sde(cfg.params()?, cfg.master_seed),
        Command::Cfilter => cfilter(cfg.params()?, cfg.master_seed),
        Command::ItoCheck => ito_check(cfg.params()?),
        Command::Qfilter => qfilter(cfg.params()?, cfg.master_seed),
        Command::Ensemble => ensemble(cfg.params()?, cfg.master_seed),
    }
}

fn bayes(p: BayesParams) -> Result<Outcome, RunError> {
    let prior = match p.prior {
        PriorSpec::Uniform { lo, hi, n } => GridDensity::uniform(lo, hi, n)?,
        PriorSpec::Gaussian { mean, var, n } => GridDensity::gaussian(mean, var, n)?,
        PriorSpec::Beta { a, b, n } => {
            if !(a > 0.0 && b > 0.0) {
                return Err(RunError::Config(format!("beta prior needs a, b > 0 (got {a}, {b})")));
            }
            GridDensity::from_fn(0.0, 1.0, n, |x| x.powf(a - 1.0) * (1.0 - x).powf(b - 1.0))?.normalized()?
        }
    };
    let lik = match p.likelihood {
        LikelihoodSpec::Coin { sequence } => coin_likelihood(&sequence.parse::<CoinSequence>()?.0),
        LikelihoodSpec::GaussianNoise { var } => Likelihood::gaussian_noise(var)?,
    };
    let post = posterior_grid(&prior, &lik, p.observation)?;
    let stats = density_stats(&post);

    let mut table = Table::with_columns(&["x", "density"]);
    for (i, v) in post.values().iter().enumerate() {
        table.row(&[post.x(i), *v]);
    }
    let mut out = Outcome::default();
    out.artifacts.add_table("posterior.csv", table);
    out.checks.push(Check::at_most("posterior_mass_error", (post.mass() - 1.0).abs(), 1e-6));
    out.results = json!({
        "likelihood": lik.description,
        "mean": stats.mean,
        "variance": stats.variance,
        "mode": stats.mode,
        "cell_width": post.dx(),
    });
    Ok(out)
}

/// Exact `(mean, variance)` at time `t`.
type Moments = Box<dyn Fn(f64) -> (f64, f64)>;

fn diffusion(model: &DiffusionModel) -> (DiffusionSpec, Moments) {
    match *model {
        DiffusionModel::Wiener => (DiffusionSpec::wiener(), Box::new(|t| (0.0, t))),
        DiffusionModel::Linear { a, sig, x0 } => {
            let moments = move |t: f64| {
                let var = if a == 0.0 { sig * sig * t } else { sig * sig * (1.0 - (-2.0 * a * t).exp()) / (2.0 * a) };
                (x0 * (-a * t).exp(), var)
            };
            (DiffusionSpec::linear(a, sig, x0), Box::new(moments))
        }
        DiffusionModel::Geometric { gamma, s, x0 } => {
            let moments = move |t: f64| {
                let m = x0 * (-gamma * t).exp();
                (m, m * m * ((s * s * t).exp() - 1.0))
            };
            (DiffusionSpec::geometric(gamma, s, x0), Box::new(moments))
        }
    }
}

fn sde(p: SdeParams, seed: u64) -> Result<Outcome, RunError> {
    if p.paths == 0 {
        return Err(RunError::Config("parameters: paths must be at least 1".into()));
    }
    step_count(p.t_end, p.dt)?;
    let (spec, moments) = diffusion(&p.model);
    let paths = (0..p.paths as u64)
        .into_par_iter()
        .map(|i| euler_maruyama(&spec, p.t_end, p.dt, RngStream::new(seed, i)))
        .collect::<filterlab::Result<Vec<_>>>()?;

    let mut out = Outcome::default();
    let keep = p.write_paths.unwrap_or(10).min(p.paths);
    let width = keep.saturating_sub(1).to_string().len().max(4);
    for (i, path) in paths.iter().take(keep).enumerate() {
        let mut t = Table::with_columns(&["t", "x"]);
        for (k, x) in path.values.iter().enumerate() {
            t.row(&[path.time(k), *x]);
        }
        out.artifacts.add_table(format!("path_{i:0width$}.csv"), t);
    }
    let summary = ensemble_summary(&paths);
    let mut t = Table::with_columns(&["t", "mean", "var"]);
    for &(time, mean, var) in &summary {
        t.row(&[time, mean, var]);
    }
    out.artifacts.add_table("ensemble.csv", t);

    let &(t_end, mean, var) = summary.last().expect("at least one step");
    let finite = paths.iter().all(|p| p.values.iter().all(|x| x.is_finite()));
    out.checks.push(Check { name: "paths_finite".into(), passed: finite, value: 0.0, threshold: 0.0 });
    let mut results = json!({ "t_end": t_end, "terminal_mean": mean, "terminal_variance": var, "paths": p.paths });
    let (m_exact, v_exact) = moments(t_end);
    let se = (var / p.paths as f64).sqrt();
    results["exact_mean"] = json!(m_exact);
    results["exact_variance"] = json!(v_exact);
    results["mean_standard_error"] = json!(se);
    if p.paths > 1 {
        out.checks.push(Check::at_most("terminal_mean_within_4se", (mean - m_exact).abs(), 4.0 * se));
    }
    out.results = results;
    Ok(out)
}

fn cfilter(p: CfilterParams, seed: u64) -> Result<Outcome, RunError> {
    let prior_var = match p.prior_var {
        Some(v) => v,
        None if p.a > 0.0 => kalman_bucy_stationary_variance(p.a, 0.0, p.sig),
        None => return Err(RunError::Config("parameters: prior_var is required when a <= 0".into())),
    };
    let prior_mean = p.prior_mean.unwrap_or(0.0);
    if !(prior_var > 0.0) {
        return Err(RunError::Config(format!("parameters: prior_var must be positive, got {prior_var}")));
    }
    let grid = p.grid.clone().unwrap_or_else(|| {
        let half = 8.0 * prior_var.sqrt();
        GridSpec { lo: prior_mean - half, hi: prior_mean + half, n: 1024 }
    });
    let prior = GridDensity::gaussian_on(prior_mean, prior_var, grid.lo, grid.hi, grid.n)?;

    let x0 = prior_mean + prior_var.sqrt() * RngStream::new(seed, 1).sampler().normal();
    let spec = DiffusionSpec::linear(p.a, p.sig, x0);
    let obs = ObservationModel::linear(p.c);
    let (truth, record) = simulate_truth_and_observation(&spec, &obs, p.t_end, p.dt, RngStream::new(seed, 0))?;

    let id = |x: f64| x;
    let sq = |x: f64| x * x;
    let fs: [&dyn Fn(f64) -> f64; 2] = [&id, &sq];
    let filtered = match p.filter {
        FilterKind::Dmz => {
            let update = match p.update {
                UpdateKind::Multiplicative => ObservationUpdate::Multiplicative,
                UpdateKind::Exponential => ObservationUpdate::Exponential,
            };
            dmz_run(&prior, &spec, &obs, &record, &fs, update)?.0
        }
        FilterKind::Kushner => kushner_run(&prior, &spec, &obs, &record, &fs)?,
    };
    let (kb_mean, kb_var) = kalman_bucy_reference(p.a, p.c, p.sig, prior_mean, prior_var, &record)?;

    let mut out = Outcome::default();
    let mut t = Table::with_columns(&["t", "x"]);
    for (k, x) in truth.values.iter().enumerate() {
        t.row(&[truth.time(k), *x]);
    }
    out.artifacts.add_table("truth.csv", t);
    let mut t = Table::with_columns(&["t", "dY"]);
    for (k, dy) in record.dy.iter().enumerate() {
        t.row(&[record.times[k + 1], *dy]);
    }
    out.artifacts.add_table("record.csv", t);

    let mut t = Table::with_columns(&["t", "pi_x", "pi_x2", "dI", "kb_mean", "kb_var"]);
    let (mut mean_err, mut var_err): (f64, f64) = (0.0, 0.0);
    for k in 0..record.times.len() {
        let (m, m2) = (filtered.pi[0][k], filtered.pi[1][k]);
        let di = if k == 0 { 0.0 } else { filtered.di[k - 1] };
        mean_err = mean_err.max((m - kb_mean[k]).abs());
        var_err = var_err.max((m2 - m * m - kb_var[k]).abs());
        t.row(&[record.times[k], m, m2, di, kb_mean[k], kb_var[k]]);
    }
    out.artifacts.add_table("filter.csv", t);

    let last = record.times.len() - 1;
    let mean_tol = 5e-3f64.max(3.0 * prior.dx());
    out.checks.push(Check::at_most("kalman_bucy_mean_sup_error", mean_err, mean_tol));
    out.checks.push(Check::at_most("kalman_bucy_variance_sup_error", var_err, 1e-2));
    out.results = json!({
        "x0": x0,
        "terminal": {
            "truth": truth.last(),
            "filter_mean": filtered.pi[0][last],
            "filter_variance": filtered.pi[1][last] - filtered.pi[0][last].powi(2),
            "kalman_bucy_mean": kb_mean[last],
            "kalman_bucy_variance": kb_var[last],
        },
        "innovations": {
            "total": filtered.innovation_total(),
            "quadratic_variation": filtered.innovation_quadratic_variation(),
            "horizon": record.horizon(),
        },
    });
    Ok(out)
}

fn ito_json(e: &ItoExpr) -> Value {
    let mut m = Map::new();
    for (b, op) in e.clone().pruned().terms() {
        m.insert(b.label(), serde_json::to_value(op).expect("operator json"));
    }
    Value::Object(m)
}

fn ito_check(p: ItoCheckParams) -> Result<Outcome, RunError> {
    let n = p.l.len();
    let d = p.h.dim();
    let s = p.s.unwrap_or_else(|| {
        (0..n).map(|j| (0..n).map(|k| if j == k { Operator::identity(d) } else { Operator::zeros(d) }).collect()).collect()
    });
    let h = p.h.into_hermitian().map_err(|e| RunError::Config(format!("parameters: H: {e}")))?;
    let slh = SlhTriple::from_parts(s, p.l, h).map_err(|e| RunError::Config(format!("parameters: {e}")))?;

    let defect = unitarity_defect(&slh);
    // Matrix of X ↦ 𝓛X on row-major matrix units.
    let generator = superoperator_matrix(d, |x| {
        heisenberg_increment(&slh, x).expect("dimensions validated").coeff(IncrementBasis::Dt)
    });
    let generator = Operator::new(generator)?;
    let report = json!({
        "hp_increment": ito_json(&hp_increment(&slh)),
        "heisenberg_generator": generator,
        "output_fields": output_increment(&slh).iter().map(ito_json).collect::<Vec<_>>(),
        "unitarity_defect": defect,
    });

    let mut out = Outcome::default();
    out.checks.push(Check::at_most("unitarity_defect", defect, DEFECT_THRESHOLD));
    out.artifacts.add_json("ito.json", &report);
    out.results = json!({ "unitarity_defect": defect, "channels": n, "dim": d });
    out.report = Some(report);
    Ok(out)
}

fn qfilter(p: QfilterParams, seed: u64) -> Result<Outcome, RunError> {
    if p.observables.is_empty() {
        return Err(RunError::Config("parameters: observables must not be empty".into()));
    }
    let h = p.h.into_hermitian().map_err(|e| RunError::Config(format!("parameters: H: {e}")))?;
    let model = EmissionAbsorptionModel::new(p.l, h)?;
    let n = step_count(p.t_end, p.dt)?;
    let stride = p.stride.unwrap_or((n / 1000).max(1));
    let report = ensemble_average(&model, &p.psi0, p.t_end, p.dt, p.m, &p.observables, seed, stride)?;

    let keep = p.write_trajectories.unwrap_or(5).min(p.m);
    let trajectories = (0..keep as u64)
        .into_par_iter()
        .map(|i| generate_record(&p.psi0, &model, p.t_end, p.dt, RngStream::new(seed, i), &p.observables))
        .collect::<filterlab::Result<Vec<_>>>()?;

    let mut out = Outcome::default();
    let width = keep.saturating_sub(1).to_string().len().max(4);
    let obs_cols: Vec<String> = (0..p.observables.len()).map(|j| format!("pi_{j}")).collect();
    for (i, (rec, _)) in trajectories.iter().enumerate() {
        let mut header = vec!["t".to_string(), "dY".into(), "dI".into()];
        header.extend(obs_cols.iter().cloned());
        let mut t = Table::new(&header);
        for k in 0..rec.times.len() {
            let (dy, di) = if k == 0 { (0.0, 0.0) } else { (rec.dy[k - 1], rec.di[k - 1]) };
            let mut row = vec![rec.times[k], dy, di];
            row.extend(rec.expectations.iter().map(|e| e[k]));
            t.row(&row);
        }
        out.artifacts.add_table(format!("trajectory_{i:0width$}.csv"), t);
    }

    let mut header = vec!["t".to_string()];
    for j in 0..p.observables.len() {
        header.extend([format!("mean_{j}"), format!("se_{j}"), format!("master_{j}")]);
    }
    let mut t = Table::new(&header);
    for (k, time) in report.times.iter().enumerate() {
        let mut row = vec![*time];
        for j in 0..p.observables.len() {
            row.extend([report.mean[j][k], report.standard_error[j][k], report.master[j][k]]);
        }
        t.row(&row);
    }
    out.artifacts.add_table("ensemble.csv", t);

    let m = p.m as f64;
    let mean_total = report.innovation_totals.iter().sum::<f64>() / m;
    let mean_qv = report.innovation_quadratic_variations.iter().sum::<f64>() / m;
    let mean_record_qv = report.record_quadratic_variations.iter().sum::<f64>() / m;
    let horizon = n as f64 * p.dt;
    for j in 0..p.observables.len() {
        out.checks.push(Check::at_most(
            &format!("ensemble_vs_master_{j}"),
            report.sup_deviation[j],
            4.0 * report.max_standard_error[j],
        ));
    }
    out.checks.push(Check::at_most("innovation_mean", mean_total.abs(), 4.0 * (horizon / m).sqrt()));
    out.checks.push(Check::at_most("innovation_quadratic_variation", (mean_qv / horizon - 1.0).abs(), 0.05));
    out.results = json!({
        "trajectories": p.m,
        "stride": stride,
        "sup_deviation": report.sup_deviation,
        "max_standard_error": report.max_standard_error,
        "innovation_total_mean": mean_total,
        "innovation_quadratic_variation_mean": mean_qv,
        "record_quadratic_variation_mean": mean_record_qv,
        "horizon": horizon,
        "clip_events": report.clip_events,
    });
    Ok(out)
}

fn ensemble(p: EnsembleParams, master_seed: u64) -> Result<Outcome, RunError> {
    let mut out = Outcome::default();
    let mut table = Table::with_columns(&["t", "kind", "deviation", "standard_error", "passed"]);
    let mut results = Vec::new();
    for (i, check) in p.checks.iter().enumerate() {
        let seed = seed_derive(master_seed, i as u64);
        let (kind, t_end, deviation, se, passed) = match check {
            EnsembleCheck::NormMartingale { l, h, psi0, t_end, dt, m } => {
                let h = h.clone().into_hermitian().map_err(|e| RunError::Config(format!("checks[{i}].H: {e}")))?;
                let model = EmissionAbsorptionModel::new(l.clone(), h)?;
                let est = norm_martingale_check(&model, psi0, *t_end, *dt, *m, seed)?;
                ("norm_martingale", *t_end, (est.mean - 1.0).abs(), est.standard_error, est.within(1.0, 4.0))
            }
            EnsembleCheck::Wiener { h, r, x, t_end, dt, m } => {
                let h = h.clone().into_hermitian().map_err(|e| RunError::Config(format!("checks[{i}].H: {e}")))?;
                let r = r.clone().into_hermitian().map_err(|e| RunError::Config(format!("checks[{i}].R: {e}")))?;
                let g = classical_wiener_unitary(&h, &r, x, *t_end, *dt, *m, seed)?;
                ("wiener", *t_end, g.max_deviation, g.max_standard_error, g.within_4se)
            }
            EnsembleCheck::Poisson { s, nu, x, t_end, m } => {
                let s = Operator::unitary(s.matrix().clone())
                    .map_err(|e| RunError::Config(format!("checks[{i}].S: {e}")))?;
                let g = poisson_kick_evolution(&s, *nu, x, *t_end, *m, seed)?;
                ("poisson", *t_end, g.max_deviation, g.max_standard_error, g.within_4se)
            }
        };
        table.text_row(&[t_end.to_string(), kind.into(), deviation.to_string(), se.to_string(), passed.to_string()]);
        out.checks.push(Check { name: format!("{kind}_{i}"), passed, value: deviation, threshold: 4.0 * se });
        results.push(json!({ "kind": kind, "seed": seed, "deviation": deviation, "standard_error": se }));
    }
    out.artifacts.add_table("checks.csv", table);
    out.results = Value::Array(results);
    Ok(out)
}
