//! Continuous-time classical filtering.
//!
//! Signal `dX = v(X) dt + σ(X) dW`, observation `dY = h(X) dt + dZ` with `W`
//! and `Z` independent. The conditional law of `X(t)` given the observations
//! is computed on a grid, either unnormalized (DMZ form, linear in the
//! density) or normalized and driven by the innovations (Kushner form).
//! Both use operator splitting: a Fokker-Planck prediction over the step,
//! then the observation correction.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridDensity;
use crate::rng::RngStream;
use crate::sde::{
    euler_maruyama_driven, fokker_planck_stable_dt, step_count, wiener_increments, DiffusionSpec,
    FokkerPlanckStencil, Path,
};

/// Safety margin applied to the explicit stability limit when sub-stepping
/// the prediction.
const SUBSTEP_SAFETY: f64 = 0.9;

/// Smallest total mass accepted before the unnormalized filter is declared
/// collapsed.
pub const MASS_FLOOR: f64 = 1e-280;

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Observation drift `h` in `dY = h(X) dt + dZ`.
#[derive(Clone)]
pub struct ObservationModel {
    h: Arc<ScalarFn>,
}

impl fmt::Debug for ObservationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ObservationModel")
    }
}

impl ObservationModel {
    pub fn new(h: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { h: Arc::new(h) }
    }

    pub fn linear(c: f64) -> Self {
        Self::new(move |x| c * x)
    }

    pub fn h(&self, x: f64) -> f64 {
        (self.h)(x)
    }
}

/// Observation increments plus whatever a filter computed from them.
///
/// `times` and each `pi` series have one entry per grid time `t_0 … t_N`;
/// `dy`, `predicted_h` and `di` have one entry per step. `predicted_h[k]` is
/// the filter's `π(h)` used in step `k`, so `di[k] = dy[k] − predicted_h[k]·dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub times: Vec<f64>,
    pub dy: Vec<f64>,
    pub pi: Vec<Vec<f64>>,
    pub predicted_h: Vec<f64>,
    pub di: Vec<f64>,
}

impl TrajectoryRecord {
    /// Observations only, no filter output yet.
    pub fn from_increments(dt: f64, dy: Vec<f64>) -> Self {
        let times = (0..=dy.len()).map(|k| k as f64 * dt).collect();
        Self { dt, times, dy, pi: Vec::new(), predicted_h: Vec::new(), di: Vec::new() }
    }

    pub fn steps(&self) -> usize {
        self.dy.len()
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    /// `Y(t_k) = Σ_{j<k} ΔY_j`.
    pub fn observation_path(&self) -> Vec<f64> {
        cumulative(&self.dy)
    }

    /// `I(T)`.
    pub fn innovation_total(&self) -> f64 {
        self.di.iter().sum()
    }

    /// `Σ (ΔI)²`.
    pub fn innovation_quadratic_variation(&self) -> f64 {
        self.di.iter().map(|d| d * d).sum()
    }

    /// Checks lengths and the definition of the innovations.
    pub fn check_consistency(&self) -> Result<()> {
        let n = self.steps();
        let bad = self.times.len() != n + 1
            || self.pi.iter().any(|p| p.len() != n + 1)
            || (!self.di.is_empty() && (self.di.len() != n || self.predicted_h.len() != n));
        if bad {
            return Err(Error::Structural("record series have inconsistent lengths".into()));
        }
        for k in 0..self.di.len() {
            let expected = self.dy[k] - self.predicted_h[k] * self.dt;
            if (self.di[k] - expected).abs() > 1e-12 * (1.0 + expected.abs()) {
                return Err(Error::Structural(format!("innovation {k} disagrees with its definition")));
            }
        }
        Ok(())
    }
}

fn cumulative(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for x in xs {
        acc += x;
        out.push(acc);
    }
    out
}

/// Simulates the signal and its noisy observation on one seeded stream. The
/// signal noise uses sub-stream 0 and the observation noise sub-stream 1.
pub fn simulate_truth_and_observation(
    spec: &DiffusionSpec,
    obs: &ObservationModel,
    t_end: f64,
    dt: f64,
    rng: RngStream,
) -> Result<(Path, TrajectoryRecord)> {
    let n = step_count(t_end, dt)?;
    let dw = wiener_increments(&mut rng.substream(0).sampler(), n, dt);
    let dz = wiener_increments(&mut rng.substream(1).sampler(), n, dt);
    let x = euler_maruyama_driven(spec, dt, &dw);
    let dy = (0..n).map(|k| obs.h(x.values[k]) * dt + dz[k]).collect();
    Ok((x, TrajectoryRecord::from_increments(dt, dy)))
}

/// How the DMZ correction multiplies the density by the observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObservationUpdate {
    /// `σ ← σ (1 + h dY)`, negative values clipped to zero.
    #[default]
    Multiplicative,
    /// `σ ← σ exp(h dY − ½ h² dt)`.
    Exponential,
}

/// Unnormalized conditional density `σ_t(x)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub sigma: GridDensity,
    pub t: f64,
}

impl FilterState {
    pub fn new(sigma: GridDensity) -> Self {
        Self { sigma, t: 0.0 }
    }
}

/// Grid-bound propagation machinery shared by the DMZ and Kushner filters.
struct GridFilter {
    stencil: FokkerPlanckStencil,
    h: Vec<f64>,
    substeps: usize,
    sub_dt: f64,
    dx: f64,
}

impl GridFilter {
    fn new(template: &GridDensity, spec: &DiffusionSpec, obs: &ObservationModel, dt: f64) -> Self {
        let limit = SUBSTEP_SAFETY * fokker_planck_stable_dt(template, spec);
        let substeps = if limit.is_finite() { (dt / limit).ceil().max(1.0) as usize } else { 1 };
        let grid = template.grid();
        Self {
            stencil: FokkerPlanckStencil::new(template, spec),
            h: grid.xs().map(|x| obs.h(x)).collect(),
            substeps,
            sub_dt: dt / substeps as f64,
            dx: grid.dx(),
        }
    }

    fn predict(&mut self, rho: &mut [f64]) {
        for _ in 0..self.substeps {
            self.stencil.step(rho, self.sub_dt);
        }
    }

    fn mass(&self, rho: &[f64]) -> f64 {
        rho.iter().sum::<f64>() * self.dx
    }

    fn expect_h(&self, rho: &[f64]) -> f64 {
        rho.iter().zip(&self.h).map(|(r, h)| r * h).sum::<f64>() * self.dx / self.mass(rho)
    }

    fn dmz_correct(&self, rho: &mut [f64], dy: f64, dt: f64, update: ObservationUpdate) {
        match update {
            ObservationUpdate::Multiplicative => {
                for (r, h) in rho.iter_mut().zip(&self.h) {
                    *r = (*r * (1.0 + h * dy)).max(0.0);
                }
            }
            ObservationUpdate::Exponential => {
                for (r, h) in rho.iter_mut().zip(&self.h) {
                    *r *= (h * dy - 0.5 * h * h * dt).exp();
                }
            }
        }
    }
}

fn check_mass(mass: f64, t: f64) -> Result<()> {
    if !(mass > MASS_FLOOR) || !mass.is_finite() {
        return Err(Error::FilterCollapse { t, reason: format!("unnormalized mass {mass:e}") });
    }
    Ok(())
}

/// One splitting step of the DMZ equation `dσ = 𝓛*σ dt + h σ dY`.
pub fn dmz_step(
    fs: &FilterState,
    dy: f64,
    spec: &DiffusionSpec,
    obs: &ObservationModel,
    dt: f64,
    update: ObservationUpdate,
) -> Result<FilterState> {
    let mut gf = GridFilter::new(&fs.sigma, spec, obs, dt);
    let mut rho = fs.sigma.values().to_vec();
    gf.predict(&mut rho);
    gf.dmz_correct(&mut rho, dy, dt, update);
    let t = fs.t + dt;
    check_mass(gf.mass(&rho), t)?;
    Ok(FilterState { sigma: fs.sigma.with_values(rho), t })
}

/// `ρ_t = σ_t / ∫σ_t`.
pub fn normalize(fs: &FilterState) -> Result<GridDensity> {
    check_mass(fs.sigma.mass(), fs.t)?;
    fs.sigma.clone().normalized()
}

/// Runs the DMZ filter over a whole record, reporting normalized
/// expectations `π(f)` at every grid time together with the innovations.
pub fn dmz_run(
    prior: &GridDensity,
    spec: &DiffusionSpec,
    obs: &ObservationModel,
    record: &TrajectoryRecord,
    f_list: &[&dyn Fn(f64) -> f64],
    update: ObservationUpdate,
) -> Result<(TrajectoryRecord, FilterState)> {
    prior.require_normalized()?;
    let dt = record.dt;
    let mut gf = GridFilter::new(prior, spec, obs, dt);
    let mut rho = prior.values().to_vec();
    let mut out = empty_output(record, f_list.len());
    push_expectations(&mut out, prior, &rho, f_list);
    for (k, &dy) in record.dy.iter().enumerate() {
        gf.predict(&mut rho);
        let ph = gf.expect_h(&rho);
        gf.dmz_correct(&mut rho, dy, dt, update);
        check_mass(gf.mass(&rho), (k + 1) as f64 * dt)?;
        out.predicted_h.push(ph);
        out.di.push(dy - ph * dt);
        push_expectations(&mut out, prior, &rho, f_list);
    }
    let state = FilterState { sigma: prior.with_values(rho), t: record.horizon() };
    Ok((out, state))
}

/// Runs the normalized (Kushner) filter
/// `dπ(f) = π(𝓛f) dt + {π(fh) − π(f)π(h)} dI`, `dI = dY − π(h) dt`,
/// at the density level: after the prediction the density is multiplied by
/// `1 + (h − π(h)) dI`, clipped at zero and rescaled to unit mass.
pub fn kushner_run(
    prior: &GridDensity,
    spec: &DiffusionSpec,
    obs: &ObservationModel,
    record: &TrajectoryRecord,
    f_list: &[&dyn Fn(f64) -> f64],
) -> Result<TrajectoryRecord> {
    Ok(kushner_run_with_density(prior, spec, obs, record, f_list)?.0)
}

/// [`kushner_run`] also returning the terminal density.
pub fn kushner_run_with_density(
    prior: &GridDensity,
    spec: &DiffusionSpec,
    obs: &ObservationModel,
    record: &TrajectoryRecord,
    f_list: &[&dyn Fn(f64) -> f64],
) -> Result<(TrajectoryRecord, GridDensity)> {
    prior.require_normalized()?;
    let dt = record.dt;
    let mut gf = GridFilter::new(prior, spec, obs, dt);
    let mut rho = prior.values().to_vec();
    let mut out = empty_output(record, f_list.len());
    push_expectations(&mut out, prior, &rho, f_list);
    for (k, &dy) in record.dy.iter().enumerate() {
        gf.predict(&mut rho);
        let ph = gf.expect_h(&rho);
        let di = dy - ph * dt;
        for (r, h) in rho.iter_mut().zip(&gf.h) {
            *r = (*r * (1.0 + (h - ph) * di)).max(0.0);
        }
        let mass = gf.mass(&rho);
        check_mass(mass, (k + 1) as f64 * dt)?;
        rho.iter_mut().for_each(|r| *r /= mass);
        out.predicted_h.push(ph);
        out.di.push(di);
        push_expectations(&mut out, prior, &rho, f_list);
    }
    let terminal = prior.with_values(rho).assume_normalized();
    Ok((out, terminal))
}

fn empty_output(record: &TrajectoryRecord, n_f: usize) -> TrajectoryRecord {
    let n = record.steps();
    TrajectoryRecord {
        dt: record.dt,
        times: record.times.clone(),
        dy: record.dy.clone(),
        pi: vec![Vec::with_capacity(n + 1); n_f],
        predicted_h: Vec::with_capacity(n),
        di: Vec::with_capacity(n),
    }
}

fn push_expectations(out: &mut TrajectoryRecord, template: &GridDensity, rho: &[f64], f_list: &[&dyn Fn(f64) -> f64]) {
    let grid = template.grid();
    let mass: f64 = rho.iter().sum();
    for (series, f) in out.pi.iter_mut().zip(f_list) {
        let v = rho.iter().enumerate().map(|(i, r)| r * f(grid.x(i))).sum::<f64>() / mass;
        series.push(v);
    }
}

/// Discrete Kallianpur-Streibel log-likelihood of a signal path given the
/// record, `Σ_k [h(x_k) ΔY_k − ½ h(x_k)² dt]`.
pub fn ks_log_weight(x_path: &Path, record: &TrajectoryRecord, obs: &ObservationModel) -> Result<f64> {
    if x_path.len() < record.steps() {
        return Err(Error::DimensionMismatch { expected: record.steps(), found: x_path.len() });
    }
    Ok(record
        .dy
        .iter()
        .zip(&x_path.values)
        .map(|(dy, &x)| {
            let h = obs.h(x);
            h * dy - 0.5 * h * h * record.dt
        })
        .sum())
}

/// Kalman-Bucy filter for `v = −a x`, `h = c x`, constant `σ = sig`:
/// `dm = −a m dt + P c (dY − c m dt)`, `dP/dt = −2aP + sig² − c²P²`,
/// integrated by Euler on the record's grid. Returns `(means, variances)`
/// at every grid time.
pub fn kalman_bucy_reference(
    a: f64,
    c: f64,
    sig: f64,
    prior_mean: f64,
    prior_var: f64,
    record: &TrajectoryRecord,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(prior_var >= 0.0) {
        return Err(Error::InvalidParameter(format!("prior variance must be nonnegative, got {prior_var}")));
    }
    let dt = record.dt;
    let n = record.steps();
    let mut means = Vec::with_capacity(n + 1);
    let mut vars = Vec::with_capacity(n + 1);
    let (mut m, mut p) = (prior_mean, prior_var);
    means.push(m);
    vars.push(p);
    for &dy in &record.dy {
        let m_next = m - a * m * dt + p * c * (dy - c * m * dt);
        let p_next = p + (-2.0 * a * p + sig * sig - c * c * p * p) * dt;
        m = m_next;
        p = p_next;
        means.push(m);
        vars.push(p);
    }
    Ok((means, vars))
}

/// Positive root of `−2aP + sig² − c²P² = 0` (for `c = 0`, `sig²/(2a)`).
pub fn kalman_bucy_stationary_variance(a: f64, c: f64, sig: f64) -> f64 {
    if c == 0.0 {
        return sig * sig / (2.0 * a);
    }
    (-a + (a * a + c * c * sig * sig).sqrt()) / (c * c)
}
