//! Quantum filtering for homodyne detection of a single emission-absorption
//! channel (`S = I`), measuring the `Q = B + B*` output quadrature.
//!
//! Two discretizations of the same filter are provided:
//!
//! * [`bz_step`] propagates the unnormalized conditioned ket of the linear
//!   (Belavkin-Zakai) equation
//!   `dχ = −(½L*L + iH) χ dt + L χ dy`;
//! * [`filter_step`] propagates the normalized conditioned density
//!   `dρ = 𝓛*ρ dt + (Lρ + ρL* − tr[(L+L*)ρ] ρ) dI`, `dI = dy − tr[(L+L*)ρ] dt`.
//!
//! Physical records are sampled in the normalized picture by feeding fresh
//! Wiener increments as the innovations. Driving [`bz_step`] with raw Wiener
//! increments instead samples the reference measure, under which
//! `⟨χ_t|χ_t⟩` is the likelihood ratio of the record ([`norm_martingale_check`]).
//!
//! The remaining functions are oracles: a 4th-order master-equation solver,
//! ensemble averages of the filter, and Monte Carlo checks of the
//! classical-noise (Wiener and Poisson kick) unitary evolutions against
//! `exp(t𝓛)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{
    apply_superoperator_exp, c, check_same_dim, commutator, lindblad_adjoint_apply, superoperator_matrix, CMatrix,
    Ket, Operator, C64, I,
};
use crate::rng::{RngStream, Sampler};
use crate::sde::step_count;

/// Positivity threshold for the conditioned density.
pub const TOL_POS: f64 = 1e-9;
/// Trace drift accepted by the master-equation solver.
pub const TOL_TRACE: f64 = 1e-9;
/// Squared-norm window outside which the ket is rescaled and the scale logged.
pub const NORM_RESCALE_LOW: f64 = 1e-150;
pub const NORM_RESCALE_HIGH: f64 = 1e150;

/// Coupling `L` and Hamiltonian `H` of the filtering problem, with the
/// derived matrices used at every step.
#[derive(Debug, Clone)]
pub struct EmissionAbsorptionModel {
    l: Operator,
    h: Operator,
    l_dag: CMatrix,
    /// `K = ½L*L + iH`.
    k: CMatrix,
    /// `L + L*`.
    quadrature: CMatrix,
}

impl EmissionAbsorptionModel {
    pub fn new(l: Operator, h: Operator) -> Result<Self> {
        check_same_dim(&[&l, &h])?;
        if !h.is_hermitian() {
            return Err(Error::Structural("Hamiltonian must be hermitian".into()));
        }
        let l_dag = l.matrix().adjoint();
        let k = (&l_dag * l.matrix()) * c(0.5, 0.0) + h.matrix() * I;
        let quadrature = l.matrix() + &l_dag;
        Ok(Self { l, h, l_dag, k, quadrature })
    }

    /// Two-level emitter, `L = √κ σ₋`, `H = Ω σ_x`.
    pub fn qubit_decay(kappa: f64, omega: f64) -> Result<Self> {
        Self::new(Operator::lowering().scale_re(kappa.sqrt()), Operator::pauli_x().scale_re(omega))
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn l(&self) -> &Operator {
        &self.l
    }

    pub fn h(&self) -> &Operator {
        &self.h
    }

    /// `L + L*`, the observable whose expectation drifts the record.
    pub fn quadrature_operator(&self) -> Operator {
        Operator::from_matrix_unchecked(self.quadrature.clone()).hermitian_part()
    }

    /// `𝓛*ρ`.
    pub fn adjoint_generator(&self, rho: &Operator) -> Result<Operator> {
        lindblad_adjoint_apply(std::slice::from_ref(&self.l), &self.h, rho)
    }
}

/// Unnormalized conditioned ket. The true vector is `chi · exp(log_norm_sq / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedKet {
    pub chi: Ket,
    pub t: f64,
    pub log_norm_sq: f64,
}

impl ConditionedKet {
    pub fn new(psi0: Ket) -> Self {
        Self { chi: psi0, t: 0.0, log_norm_sq: 0.0 }
    }

    /// `⟨χ|χ⟩` including the logged scale.
    pub fn norm_sq(&self) -> f64 {
        self.chi.norm_sq() * self.log_norm_sq.exp()
    }

    /// `⟨χ|X|χ⟩` including the logged scale.
    pub fn sandwich(&self, x: &Operator) -> Result<f64> {
        Ok(x.sandwich(&self.chi)?.re * self.log_norm_sq.exp())
    }

    /// `⟨χ|X|χ⟩ / ⟨χ|χ⟩`.
    pub fn expectation(&self, x: &Operator) -> Result<f64> {
        Ok(x.sandwich(&self.chi)?.re / self.chi.norm_sq())
    }
}

fn bz_advance(chi: &mut CMatrix, scratch: &mut CMatrix, model: &EmissionAbsorptionModel, dy: f64, dt: f64) {
    // scratch = (−K dt + L dy) χ, then χ += scratch.
    scratch.gemm(c(-dt, 0.0), &model.k, chi, c(0.0, 0.0));
    scratch.gemm(c(dy, 0.0), model.l.matrix(), chi, c(1.0, 0.0));
    *chi += &*scratch;
}

fn rescale_if_needed(chi: &mut CMatrix, log_norm_sq: &mut f64, t: f64) -> Result<()> {
    let n2 = chi.norm_squared();
    if !(n2 > 0.0) || !n2.is_finite() {
        return Err(Error::FilterCollapse { t, reason: format!("conditioned ket norm² = {n2:e}") });
    }
    if !(NORM_RESCALE_LOW..=NORM_RESCALE_HIGH).contains(&n2) {
        *chi /= c(n2.sqrt(), 0.0);
        *log_norm_sq += n2.ln();
    }
    Ok(())
}

/// Euler step of the linear filter, `χ ← χ − Kχ dt + Lχ dy`. No
/// normalization is applied; if `‖χ‖²` leaves `[1e-150, 1e150]` the vector is
/// rescaled to unit norm and the factor added to `log_norm_sq`.
pub fn bz_step(ck: &ConditionedKet, dy: f64, model: &EmissionAbsorptionModel, dt: f64) -> Result<ConditionedKet> {
    if ck.chi.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: ck.chi.dim() });
    }
    let mut chi = CMatrix::from_column_slice(model.dim(), 1, ck.chi.amplitudes().as_slice());
    let mut scratch = chi.clone();
    bz_advance(&mut chi, &mut scratch, model, dy, dt);
    let mut log_norm_sq = ck.log_norm_sq;
    let t = ck.t + dt;
    rescale_if_needed(&mut chi, &mut log_norm_sq, t)?;
    Ok(ConditionedKet { chi: Ket::from_slice(chi.as_slice()), t, log_norm_sq })
}

/// Runs [`bz_step`] over a record, returning the states at every grid time.
pub fn bz_run(psi0: &Ket, model: &EmissionAbsorptionModel, dy: &[f64], dt: f64) -> Result<Vec<ConditionedKet>> {
    let mut path = Vec::with_capacity(dy.len() + 1);
    let mut ck = ConditionedKet::new(psi0.clone());
    path.push(ck.clone());
    for &d in dy {
        ck = bz_step(&ck, d, model, dt)?;
        path.push(ck.clone());
    }
    Ok(path)
}

/// `⟨χ_t|X|χ_t⟩` along a path of conditioned kets.
pub fn qdmz_expectation(path: &[ConditionedKet], x: &Operator) -> Result<Vec<f64>> {
    path.iter().map(|ck| ck.sandwich(x)).collect()
}

/// Normalized conditioned density.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedDensity {
    pub rho: Operator,
    pub t: f64,
    /// Number of steps so far in which positivity clipping was applied.
    pub clip_events: u64,
}

impl ConditionedDensity {
    pub fn pure(psi: &Ket) -> Self {
        Self { rho: Operator::density_of(psi), t: 0.0, clip_events: 0 }
    }

    /// Accepts a density matrix after checking trace and hermiticity.
    pub fn from_operator(rho: Operator) -> Result<Self> {
        let rho = rho.into_hermitian()?;
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TOL_TRACE || tr.im.abs() > TOL_TRACE {
            return Err(Error::Precondition(format!("density trace is {tr}, expected 1")));
        }
        Ok(Self { rho, t: 0.0, clip_events: 0 })
    }

    /// `π(X) = tr(ρ X)`.
    pub fn expectation(&self, x: &Operator) -> Result<C64> {
        x.expectation_in(&self.rho)
    }

    pub fn purity(&self) -> f64 {
        (self.rho.matrix() * self.rho.matrix()).trace().re
    }
}

/// Reusable buffers for the density filter; one per trajectory.
struct DensityKernel<'a> {
    model: &'a EmissionAbsorptionModel,
    l_rho: CMatrix,
    l_rho_ld: CMatrix,
    k_rho: CMatrix,
}

impl<'a> DensityKernel<'a> {
    fn new(model: &'a EmissionAbsorptionModel) -> Self {
        let d = model.dim();
        Self {
            model,
            l_rho: CMatrix::zeros(d, d),
            l_rho_ld: CMatrix::zeros(d, d),
            k_rho: CMatrix::zeros(d, d),
        }
    }

    /// `tr[(L + L*) ρ]`.
    fn quadrature_mean(&self, rho: &CMatrix) -> f64 {
        trace_product(&self.model.quadrature, rho)
    }

    /// Advances `rho` in place; returns `(π(L+L*), dI, clipped)`.
    fn step(&mut self, rho: &mut CMatrix, dy: f64, dt: f64, t: f64) -> Result<(f64, f64, bool)> {
        let m = self.model;
        let mean = self.quadrature_mean(rho);
        let di = dy - mean * dt;
        self.l_rho.gemm(c(1.0, 0.0), m.l.matrix(), rho, c(0.0, 0.0));
        self.l_rho_ld.gemm(c(1.0, 0.0), &self.l_rho, &m.l_dag, c(0.0, 0.0));
        self.k_rho.gemm(c(1.0, 0.0), &m.k, rho, c(0.0, 0.0));
        let d = rho.nrows();
        let mut tr = 0.0;
        for j in 0..d {
            for i in 0..d {
                let drift = self.l_rho_ld[(i, j)] - self.k_rho[(i, j)] - self.k_rho[(j, i)].conj();
                let gain = self.l_rho[(i, j)] + self.l_rho[(j, i)].conj() - rho[(i, j)] * mean;
                rho[(i, j)] += drift * dt + gain * di;
            }
        }
        for i in 0..d {
            rho[(i, i)].im = 0.0;
            tr += rho[(i, i)].re;
            for j in 0..i {
                let avg = (rho[(i, j)] + rho[(j, i)].conj()) * 0.5;
                rho[(i, j)] = avg;
                rho[(j, i)] = avg.conj();
            }
        }
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(Error::FilterCollapse { t, reason: format!("conditioned density trace {tr:e}") });
        }
        *rho /= c(tr, 0.0);
        let clipped = clip_positivity(rho);
        Ok((mean, di, clipped))
    }
}

fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let d = a.nrows();
    let mut acc = 0.0;
    for i in 0..d {
        for k in 0..d {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

fn min_eigenvalue(rho: &CMatrix) -> f64 {
    if rho.nrows() == 2 {
        let (a, d) = (rho[(0, 0)].re, rho[(1, 1)].re);
        let b = rho[(0, 1)];
        let half_tr = 0.5 * (a + d);
        let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        return half_tr - radius;
    }
    rho.clone().symmetric_eigenvalues().min()
}

/// Clips eigenvalues below `−TOL_POS` to zero and restores unit trace.
fn clip_positivity(rho: &mut CMatrix) -> bool {
    if min_eigenvalue(rho) >= -TOL_POS {
        return false;
    }
    let eig = rho.clone().symmetric_eigen();
    let d = rho.nrows();
    let mut out = CMatrix::zeros(d, d);
    let mut total = 0.0;
    for (i, &val) in eig.eigenvalues.iter().enumerate() {
        if val > 0.0 {
            let v = eig.eigenvectors.column(i);
            out += v * v.adjoint() * c(val, 0.0);
            total += val;
        }
    }
    *rho = out / c(total, 0.0);
    true
}

/// Euler step of the normalized quantum filter with per-step trace
/// renormalization and positivity clipping.
pub fn filter_step(
    cd: &ConditionedDensity,
    dy: f64,
    model: &EmissionAbsorptionModel,
    dt: f64,
) -> Result<ConditionedDensity> {
    if cd.rho.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: cd.rho.dim() });
    }
    let mut kernel = DensityKernel::new(model);
    let mut rho = cd.rho.matrix().clone();
    let t = cd.t + dt;
    let (_, _, clipped) = kernel.step(&mut rho, dy, dt, t)?;
    Ok(ConditionedDensity {
        rho: Operator::from_matrix_unchecked(rho).hermitian_part(),
        t,
        clip_events: cd.clip_events + clipped as u64,
    })
}

/// Measured record and the filter's output along it.
///
/// `expectations[j]` holds `π_t(X_j)` at all `N + 1` grid times; `dy`, `di`
/// and `predicted_quadrature` hold one entry per step with
/// `di[k] = dy[k] − predicted_quadrature[k]·dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantumRecord {
    pub dt: f64,
    pub times: Vec<f64>,
    pub dy: Vec<f64>,
    pub di: Vec<f64>,
    pub predicted_quadrature: Vec<f64>,
    pub expectations: Vec<Vec<f64>>,
    pub clip_events: u64,
}

impl QuantumRecord {
    pub fn steps(&self) -> usize {
        self.dy.len()
    }

    pub fn innovation_total(&self) -> f64 {
        self.di.iter().sum()
    }

    pub fn innovation_quadratic_variation(&self) -> f64 {
        self.di.iter().map(|d| d * d).sum()
    }

    pub fn record_quadratic_variation(&self) -> f64 {
        self.dy.iter().map(|d| d * d).sum()
    }
}

/// Where the record increments come from.
enum Driver<'a> {
    /// Fresh Wiener innovations: samples the physical record law.
    Innovations(Box<Sampler>),
    /// Replay of a given record.
    Replay(&'a [f64]),
}

struct FilterRun {
    record: QuantumRecord,
    path: Option<Vec<ConditionedDensity>>,
}

fn run_density_filter(
    rho0: &Operator,
    model: &EmissionAbsorptionModel,
    n: usize,
    dt: f64,
    mut driver: Driver<'_>,
    observables: &[Operator],
    keep_path: bool,
) -> Result<FilterRun> {
    let mut kernel = DensityKernel::new(model);
    let mut rho = rho0.matrix().clone();
    let sd = dt.sqrt();
    let mut record = QuantumRecord {
        dt,
        times: (0..=n).map(|k| k as f64 * dt).collect(),
        dy: Vec::with_capacity(n),
        di: Vec::with_capacity(n),
        predicted_quadrature: Vec::with_capacity(n),
        expectations: vec![Vec::with_capacity(n + 1); observables.len()],
        clip_events: 0,
    };
    let push_expectations = |record: &mut QuantumRecord, rho: &CMatrix| {
        for (series, x) in record.expectations.iter_mut().zip(observables) {
            series.push(trace_product(x.matrix(), rho));
        }
    };
    let mut path = keep_path.then(|| Vec::with_capacity(n + 1));
    let snapshot = |rho: &CMatrix, t: f64, clips: u64| ConditionedDensity {
        rho: Operator::from_matrix_unchecked(rho.clone()).hermitian_part(),
        t,
        clip_events: clips,
    };
    push_expectations(&mut record, &rho);
    if let Some(p) = path.as_mut() {
        p.push(snapshot(&rho, 0.0, 0));
    }
    for k in 0..n {
        let dy = match &mut driver {
            Driver::Innovations(sampler) => sd * sampler.normal() + kernel.quadrature_mean(&rho) * dt,
            Driver::Replay(dys) => dys[k],
        };
        let t = (k + 1) as f64 * dt;
        let (mean, di, clipped) = kernel.step(&mut rho, dy, dt, t)?;
        record.clip_events += clipped as u64;
        record.dy.push(dy);
        record.di.push(di);
        record.predicted_quadrature.push(mean);
        push_expectations(&mut record, &rho);
        if let Some(p) = path.as_mut() {
            p.push(snapshot(&rho, t, record.clip_events));
        }
    }
    Ok(FilterRun { record, path })
}

fn check_observables(model: &EmissionAbsorptionModel, observables: &[Operator]) -> Result<()> {
    for x in observables {
        if x.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), found: x.dim() });
        }
    }
    Ok(())
}

/// Samples a measured record from its physical law by running the normalized
/// filter with fresh Wiener innovations, emitting
/// `dY_k = dI_k + π_k(L + L*) dt`. Returns the record with `π_t(X)` for each
/// observable, plus the conditioned density at every grid time.
pub fn generate_record(
    psi0: &Ket,
    model: &EmissionAbsorptionModel,
    t_end: f64,
    dt: f64,
    rng: RngStream,
    observables: &[Operator],
) -> Result<(QuantumRecord, Vec<ConditionedDensity>)> {
    psi0.require_normalized()?;
    check_observables(model, observables)?;
    let n = step_count(t_end, dt)?;
    let rho0 = Operator::density_of(psi0);
    let run = run_density_filter(&rho0, model, n, dt, Driver::Innovations(Box::new(rng.sampler())), observables, true)?;
    Ok((run.record, run.path.unwrap_or_default()))
}

/// Runs the normalized filter on a given record from an arbitrary initial
/// density. Deterministic: the same record always yields the same output.
pub fn replay_filter(
    rho0: &ConditionedDensity,
    model: &EmissionAbsorptionModel,
    dy: &[f64],
    dt: f64,
    observables: &[Operator],
) -> Result<QuantumRecord> {
    check_observables(model, observables)?;
    let run = run_density_filter(&rho0.rho, model, dy.len(), dt, Driver::Replay(dy), observables, false)?;
    Ok(run.record)
}

/// Deterministic solution of `dρ/dt = 𝓛*ρ` by classical RK4 on `dt_ode`.
#[derive(Debug, Clone)]
pub struct MasterSolution {
    pub dt: f64,
    pub states: Vec<Operator>,
    /// Smallest eigenvalue encountered along the path.
    pub min_eigenvalue: f64,
}

impl MasterSolution {
    pub fn expectation_path(&self, x: &Operator) -> Vec<f64> {
        self.states.iter().map(|rho| trace_product(x.matrix(), rho.matrix())).collect()
    }
}

pub fn master_equation_solve(
    rho0: &Operator,
    model: &EmissionAbsorptionModel,
    t_end: f64,
    dt_ode: f64,
) -> Result<MasterSolution> {
    check_same_dim(&[rho0, model.h()])?;
    let n = step_count(t_end, dt_ode)?;
    let rhs = |rho: &CMatrix| -> CMatrix {
        let l = model.l.matrix();
        let comm = model.h.matrix() * rho - rho * model.h.matrix();
        let ldl = &model.l_dag * l;
        l * rho * &model.l_dag - (&ldl * rho + rho * &ldl) * c(0.5, 0.0) - comm * I
    };
    let mut rho = rho0.matrix().clone();
    let mut states = Vec::with_capacity(n + 1);
    let mut min_eig = min_eigenvalue(&rho);
    states.push(Operator::from_matrix_unchecked(rho.clone()).hermitian_part());
    let h = c(dt_ode, 0.0);
    let half = c(0.5 * dt_ode, 0.0);
    for k in 0..n {
        let k1 = rhs(&rho);
        let k2 = rhs(&(&rho + &k1 * half));
        let k3 = rhs(&(&rho + &k2 * half));
        let k4 = rhs(&(&rho + &k3 * h));
        rho += (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * c(dt_ode / 6.0, 0.0);
        let tr = rho.trace();
        let drift = (tr - rho0.trace()).norm();
        if drift > TOL_TRACE {
            return Err(Error::FilterCollapse {
                t: (k + 1) as f64 * dt_ode,
                reason: format!("master equation trace drifted by {drift:e}"),
            });
        }
        min_eig = min_eig.min(min_eigenvalue(&rho));
        states.push(Operator::from_matrix_unchecked(rho.clone()).hermitian_part());
    }
    Ok(MasterSolution { dt: dt_ode, states, min_eigenvalue: min_eig })
}

/// Per-trajectory summary kept by the ensemble runner.
struct TrajectorySummary {
    samples: Vec<Vec<f64>>,
    innovation_total: f64,
    innovation_qv: f64,
    record_qv: f64,
    clip_events: u64,
}

fn summarize_trajectory(
    rho0: &Operator,
    model: &EmissionAbsorptionModel,
    n: usize,
    dt: f64,
    rng: RngStream,
    observables: &[Operator],
    stride: usize,
) -> Result<TrajectorySummary> {
    let mut kernel = DensityKernel::new(model);
    let mut sampler = rng.sampler();
    let mut rho = rho0.matrix().clone();
    let sd = dt.sqrt();
    let mut samples = vec![Vec::with_capacity(n / stride + 2); observables.len()];
    let record = |samples: &mut Vec<Vec<f64>>, rho: &CMatrix| {
        for (s, x) in samples.iter_mut().zip(observables) {
            s.push(trace_product(x.matrix(), rho));
        }
    };
    record(&mut samples, &rho);
    let (mut i_total, mut i_qv, mut y_qv, mut clips) = (0.0, 0.0, 0.0, 0u64);
    for k in 0..n {
        let dy = sd * sampler.normal() + kernel.quadrature_mean(&rho) * dt;
        let (_, di, clipped) = kernel.step(&mut rho, dy, dt, (k + 1) as f64 * dt)?;
        i_total += di;
        i_qv += di * di;
        y_qv += dy * dy;
        clips += clipped as u64;
        if (k + 1) % stride == 0 {
            record(&mut samples, &rho);
        }
    }
    Ok(TrajectorySummary { samples, innovation_total: i_total, innovation_qv: i_qv, record_qv: y_qv, clip_events: clips })
}

/// Ensemble mean of the filter compared with the unconditional master-equation
/// solution.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleReport {
    pub trajectories: usize,
    /// Sample times (every `stride` steps).
    pub times: Vec<f64>,
    /// Per observable, per sample time.
    pub mean: Vec<Vec<f64>>,
    pub standard_error: Vec<Vec<f64>>,
    pub master: Vec<Vec<f64>>,
    /// Per observable: `sup_t |mean − master|`.
    pub sup_deviation: Vec<f64>,
    /// Per observable: `sup_t SE(t)`.
    pub max_standard_error: Vec<f64>,
    /// Per trajectory, in index order.
    pub innovation_totals: Vec<f64>,
    pub innovation_quadratic_variations: Vec<f64>,
    pub record_quadratic_variations: Vec<f64>,
    pub clip_events: u64,
}

impl EnsembleReport {
    /// `sup_t |mean − master| ≤ k · sup_t SE` for every observable.
    pub fn within(&self, k: f64) -> bool {
        self.sup_deviation.iter().zip(&self.max_standard_error).all(|(d, se)| *d <= k * se)
    }
}

/// Average of `π_t(X)` over `m` records sampled on streams
/// `(master_seed, 0..m)`, reported every `stride` steps alongside the
/// master-equation solution on the same grid. Trajectories run in parallel;
/// aggregation is in index order, so results do not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_average(
    model: &EmissionAbsorptionModel,
    psi0: &Ket,
    t_end: f64,
    dt: f64,
    m: usize,
    observables: &[Operator],
    master_seed: u64,
    stride: usize,
) -> Result<EnsembleReport> {
    psi0.require_normalized()?;
    check_observables(model, observables)?;
    if m == 0 || stride == 0 {
        return Err(Error::InvalidParameter("need at least one trajectory and a positive stride".into()));
    }
    let n = step_count(t_end, dt)?;
    let rho0 = Operator::density_of(psi0);
    let runs: Vec<TrajectorySummary> = (0..m)
        .into_par_iter()
        .map(|i| summarize_trajectory(&rho0, model, n, dt, RngStream::new(master_seed, i as u64), observables, stride))
        .collect::<Result<_>>()?;

    let master = master_equation_solve(&rho0, model, t_end, dt)?;
    let sample_steps: Vec<usize> = (0..=n).step_by(stride).collect();
    let times = sample_steps.iter().map(|&k| k as f64 * dt).collect();
    let mf = m as f64;
    let mut mean = Vec::new();
    let mut se = Vec::new();
    let mut master_paths = Vec::new();
    let mut sup_dev = Vec::new();
    let mut max_se = Vec::new();
    for (j, x) in observables.iter().enumerate() {
        let full = master.expectation_path(x);
        let mp: Vec<f64> = sample_steps.iter().map(|&k| full[k]).collect();
        let mut mu = Vec::with_capacity(mp.len());
        let mut err = Vec::with_capacity(mp.len());
        for s in 0..mp.len() {
            let avg = runs.iter().map(|r| r.samples[j][s]).sum::<f64>() / mf;
            let var = if m > 1 {
                runs.iter().map(|r| (r.samples[j][s] - avg).powi(2)).sum::<f64>() / (mf - 1.0)
            } else {
                0.0
            };
            mu.push(avg);
            err.push((var / mf).sqrt());
        }
        sup_dev.push(mu.iter().zip(&mp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        max_se.push(err.iter().copied().fold(0.0, f64::max));
        mean.push(mu);
        se.push(err);
        master_paths.push(mp);
    }
    Ok(EnsembleReport {
        trajectories: m,
        times,
        mean,
        standard_error: se,
        master: master_paths,
        sup_deviation: sup_dev,
        max_standard_error: max_se,
        innovation_totals: runs.iter().map(|r| r.innovation_total).collect(),
        innovation_quadratic_variations: runs.iter().map(|r| r.innovation_qv).collect(),
        record_quadratic_variations: runs.iter().map(|r| r.record_qv).collect(),
        clip_events: runs.iter().map(|r| r.clip_events).sum(),
    })
}

/// Sample mean of a statistic with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub samples: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let m = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / m;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
        Self { mean, standard_error: (var / m).sqrt(), samples: xs.len() }
    }

    /// `|mean − target| ≤ k · SE`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.standard_error
    }
}

/// Drives [`bz_step`] with raw Wiener increments (the reference measure) and
/// returns the ensemble mean of `⟨χ_T|χ_T⟩`, which should be 1.
pub fn norm_martingale_check(
    model: &EmissionAbsorptionModel,
    psi0: &Ket,
    t_end: f64,
    dt: f64,
    m: usize,
    seed: u64,
) -> Result<MeanEstimate> {
    psi0.require_normalized()?;
    if m == 0 {
        return Err(Error::InvalidParameter("need at least one trajectory".into()));
    }
    let n = step_count(t_end, dt)?;
    let d = model.dim();
    let sd = dt.sqrt();
    let norms: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut sampler = RngStream::new(seed, i as u64).sampler();
            let mut chi = CMatrix::from_column_slice(d, 1, psi0.amplitudes().as_slice());
            let mut scratch = chi.clone();
            let mut log_norm_sq = 0.0;
            for k in 0..n {
                let dy = sd * sampler.normal();
                bz_advance(&mut chi, &mut scratch, model, dy, dt);
                rescale_if_needed(&mut chi, &mut log_norm_sq, (k + 1) as f64 * dt)?;
            }
            Ok(chi.norm_squared() * log_norm_sq.exp())
        })
        .collect::<Result<_>>()?;
    Ok(MeanEstimate::from_samples(&norms))
}

/// Ensemble estimate of `E[j_T(X)]` for a classical-noise unitary evolution
/// against the oracle `exp(T𝓛) X`.
#[derive(Debug, Clone)]
pub struct GeneratorCheck {
    pub mean: Operator,
    pub oracle: Operator,
    /// Entrywise standard errors of the real and imaginary parts.
    pub standard_error_re: CMatrix,
    pub max_deviation: f64,
    pub max_standard_error: f64,
    /// Every real and imaginary entry satisfies `|mean − oracle| ≤ 4·SE + 1e-9`.
    pub within_4se: bool,
}

fn generator_check(samples: &[CMatrix], oracle: Operator) -> GeneratorCheck {
    let d = oracle.dim();
    let m = samples.len() as f64;
    let mut mean = CMatrix::zeros(d, d);
    for s in samples {
        mean += s;
    }
    mean /= c(m, 0.0);
    let mut se = CMatrix::zeros(d, d);
    let mut within = true;
    let mut max_se: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mu = mean[(i, j)];
            let (mut vr, mut vi) = (0.0, 0.0);
            for s in samples {
                vr += (s[(i, j)].re - mu.re).powi(2);
                vi += (s[(i, j)].im - mu.im).powi(2);
            }
            let denom = (m - 1.0).max(1.0) * m;
            let (ser, sei) = ((vr / denom).sqrt(), (vi / denom).sqrt());
            se[(i, j)] = c(ser, sei);
            max_se = max_se.max(ser).max(sei);
            let dev = mu - oracle.matrix()[(i, j)];
            within &= dev.re.abs() <= 4.0 * ser + 1e-9 && dev.im.abs() <= 4.0 * sei + 1e-9;
        }
    }
    let mean = Operator::from_matrix_unchecked(mean);
    GeneratorCheck {
        max_deviation: mean.distance(&oracle),
        mean,
        oracle,
        standard_error_re: se,
        max_standard_error: max_se,
        within_4se: within,
    }
}

/// `exp(−iA)` for hermitian `A`, by eigendecomposition.
fn unitary_exp(a: &CMatrix) -> CMatrix {
    let eig = a.clone().symmetric_eigen();
    let phases = CMatrix::from_diagonal(&eig.eigenvalues.map(|l| (-I * l).exp()));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

/// Wiener-driven unitary evolution `dU = (−iH − ½R²) U dt − iR U dW`.
///
/// Each step applies `exp(−i(H dt + R ΔW))`, which reproduces
/// `U = exp(−iHt − iRW(t))` exactly when `[H, R] = 0` and converges to the
/// SDE solution otherwise. The ensemble mean of `U*XU` at `T` is compared with
/// `exp(T𝓛) X` for `𝓛X = −i[X, H] − ½[[X, R], R]`.
#[allow(clippy::too_many_arguments)]
pub fn classical_wiener_unitary(
    h: &Operator,
    r: &Operator,
    x: &Operator,
    t_end: f64,
    dt: f64,
    m: usize,
    seed: u64,
) -> Result<GeneratorCheck> {
    check_same_dim(&[h, r, x])?;
    if !h.is_hermitian() || !r.is_hermitian() {
        return Err(Error::Structural("H and R must be hermitian".into()));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("need at least one trajectory".into()));
    }
    let n = step_count(t_end, dt)?;
    let d = h.dim();
    let sd = dt.sqrt();
    let samples: Vec<CMatrix> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut sampler = RngStream::new(seed, i as u64).sampler();
            let mut u = CMatrix::identity(d, d);
            for _ in 0..n {
                let dw = sd * sampler.normal();
                let a = h.matrix() * c(dt, 0.0) + r.matrix() * c(dw, 0.0);
                u = unitary_exp(&a) * u;
            }
            u.adjoint() * x.matrix() * u
        })
        .collect();
    let generator = |y: &Operator| -> Operator {
        let xh = commutator(y, h).expect("dims checked");
        let xr = commutator(y, r).expect("dims checked");
        let xrr = commutator(&xr, r).expect("dims checked");
        &xh.scale(-I) - &xrr.scale_re(0.5)
    };
    let sup = superoperator_matrix(d, generator);
    Ok(generator_check(&samples, apply_superoperator_exp(&sup, t_end, x)))
}

/// Poisson-kicked unitary evolution `dU = (S − I) U dN` with `⟨dN⟩ = ν dt`.
/// Kick times are sampled exactly (exponential waiting times), so
/// `j_T(X) = (S*)^N X S^N` with `N = N(T)`. Compared with
/// `exp(Tν(S*XS − X))`-flow applied to `X`.
pub fn poisson_kick_evolution(
    s: &Operator,
    nu: f64,
    x: &Operator,
    t_end: f64,
    m: usize,
    seed: u64,
) -> Result<GeneratorCheck> {
    check_same_dim(&[s, x])?;
    if !s.tags().unitary {
        return Err(Error::Structural("kick must be unitary".into()));
    }
    if !(nu >= 0.0) || !(t_end > 0.0) {
        return Err(Error::InvalidParameter(format!("need rate >= 0 and T > 0 (rate {nu}, T {t_end})")));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("need at least one trajectory".into()));
    }
    let d = s.dim();
    let samples: Vec<CMatrix> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut sampler = RngStream::new(seed, i as u64).sampler();
            let mut u = CMatrix::identity(d, d);
            if nu > 0.0 {
                let mut t = sampler.exponential(nu);
                while t <= t_end {
                    u = s.matrix() * u;
                    t += sampler.exponential(nu);
                }
            }
            u.adjoint() * x.matrix() * u
        })
        .collect();
    let generator = |y: &Operator| -> Operator { (&(&s.adjoint() * y) * s - y.clone()).scale_re(nu) };
    let sup = superoperator_matrix(d, generator);
    Ok(generator_check(&samples, apply_superoperator_exp(&sup, t_end, x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> EmissionAbsorptionModel {
        EmissionAbsorptionModel::qubit_decay(1.0, 0.0).unwrap()
    }

    #[test]
    fn schrodinger_step_preserves_norm_to_second_order() {
        let model = EmissionAbsorptionModel::new(Operator::zeros(2), Operator::pauli_x()).unwrap();
        let psi = Ket::normalize(nalgebra::DVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)])).unwrap();
        let dt = 1e-3;
        let next = bz_step(&ConditionedKet::new(psi), 0.123, &model, dt).unwrap();
        // |1 − iλdt|² = 1 + λ²dt² for the eigencomponents.
        assert!((next.norm_sq() - 1.0).abs() <= 1.01 * dt * dt);
    }

    #[test]
    fn zero_record_only_drifts() {
        let model = decay();
        let ck = ConditionedKet::new(Ket::excited());
        let next = bz_step(&ck, 0.0, &model, 0.01).unwrap();
        // χ − ½σ₊σ₋ χ dt for χ = |e⟩.
        assert!((next.chi.amplitudes()[0] - c(1.0 - 0.005, 0.0)).norm() < 1e-15);
        assert_eq!(next.chi.amplitudes()[1], c(0.0, 0.0));
    }

    #[test]
    fn underflow_is_rescaled_and_logged() {
        let model = EmissionAbsorptionModel::new(Operator::identity(1).scale_re(1.0), Operator::zeros(1)).unwrap();
        let mut ck = ConditionedKet::new(Ket::basis(1, 0));
        // (1 − 0.5·dt + dy)² with dy = −0.9 shrinks by ~100 per step.
        for _ in 0..100 {
            ck = bz_step(&ck, -0.9, &model, 1e-3).unwrap();
        }
        assert!(ck.log_norm_sq < -300.0);
        assert!(ck.chi.norm_sq() >= NORM_RESCALE_LOW);
        let expected = 100.0 * 2.0 * (1.0 - 0.5e-3 - 0.9f64).ln();
        assert!((ck.log_norm_sq + ck.chi.norm_sq().ln() - expected).abs() < 1e-9);
    }

    #[test]
    fn filter_keeps_unit_trace() {
        let model = EmissionAbsorptionModel::qubit_decay(1.0, 1.0).unwrap();
        let mut cd = ConditionedDensity::pure(&Ket::excited());
        for k in 0..1000 {
            cd = filter_step(&cd, 0.01 * ((k % 7) as f64 - 3.0), &model, 1e-3).unwrap();
            assert!((cd.expectation(&Operator::identity(2)).unwrap() - c(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn unmonitored_filter_is_von_neumann() {
        let h = Operator::pauli_x().scale_re(0.7).into_hermitian().unwrap();
        let model = EmissionAbsorptionModel::new(Operator::zeros(2), h.clone()).unwrap();
        let dt = 1e-4;
        let mixed = Operator::from_real_rows(&[&[0.7, 0.1], &[0.1, 0.3]]).unwrap();
        let cd = ConditionedDensity::from_operator(mixed).unwrap();
        let next = filter_step(&cd, 0.05, &model, dt).unwrap();
        assert_eq!(next.clip_events, 0);
        let comm = commutator(&h, &cd.rho).unwrap().scale(-I).scale_re(dt);
        let expected = &cd.rho + &comm;
        assert!(next.rho.distance(&expected) < 1e-15, "{}", next.rho.distance(&expected));
    }

    #[test]
    fn master_equation_fixed_point() {
        let model = decay();
        let ground = Operator::density_of(&Ket::ground());
        let sol = master_equation_solve(&ground, &model, 1.0, 1e-3).unwrap();
        assert!(sol.states.last().unwrap().distance(&ground) < 1e-15);
    }

    #[test]
    fn master_equation_unitary_limit() {
        let h = Operator::pauli_y();
        let model = EmissionAbsorptionModel::new(Operator::zeros(2), h).unwrap();
        let rho0 = Operator::density_of(&Ket::excited());
        let t = 0.9;
        let sol = master_equation_solve(&rho0, &model, t, 1e-3).unwrap();
        let u = unitary_exp(&(Operator::pauli_y().matrix() * c(t, 0.0)));
        let exact = Operator::from_matrix_unchecked(&u * rho0.matrix() * u.adjoint());
        assert!(sol.states.last().unwrap().distance(&exact) < 1e-12);
    }

    #[test]
    fn unmonitored_ensemble_has_no_spread() {
        let model = EmissionAbsorptionModel::new(Operator::zeros(2), Operator::pauli_x()).unwrap();
        let report = ensemble_average(&model, &Ket::excited(), 0.5, 1e-3, 8, &[Operator::pauli_z()], 1, 50).unwrap();
        assert!(report.max_standard_error[0] < 1e-12);
        assert!(report.sup_deviation[0] < 1e-5);
    }

    #[test]
    fn single_member_ensemble_is_a_trajectory() {
        let model = EmissionAbsorptionModel::qubit_decay(1.0, 1.0).unwrap();
        let sz = Operator::pauli_z();
        let report = ensemble_average(&model, &Ket::excited(), 0.2, 1e-3, 1, std::slice::from_ref(&sz), 77, 1).unwrap();
        let (rec, _) = generate_record(&Ket::excited(), &model, 0.2, 1e-3, RngStream::new(77, 0), &[sz]).unwrap();
        assert_eq!(report.mean[0], rec.expectations[0]);
    }

    #[test]
    fn unmonitored_norm_is_constant() {
        let model = EmissionAbsorptionModel::new(Operator::zeros(2), Operator::zeros(2)).unwrap();
        let est = norm_martingale_check(&model, &Ket::excited(), 0.5, 1e-3, 16, 3).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.standard_error, 0.0);
    }

    #[test]
    fn trivial_kicks_leave_observable_fixed() {
        let x = Operator::pauli_z();
        let check = poisson_kick_evolution(&Operator::identity(2), 2.0, &x, 1.0, 50, 1).unwrap();
        assert!(check.max_deviation < 1e-15 && check.within_4se);
        let check = poisson_kick_evolution(&Operator::pauli_x(), 0.0, &x, 1.0, 50, 1).unwrap();
        assert!(check.max_deviation < 1e-15 && check.within_4se);
    }

    #[test]
    fn noiseless_wiener_unitary_is_a_rotation() {
        let h = Operator::pauli_x();
        let x = Operator::pauli_z();
        let check = classical_wiener_unitary(&h, &Operator::zeros(2), &x, 1.0, 1e-3, 4, 5).unwrap();
        assert!(check.max_deviation < 1e-10, "{}", check.max_deviation);
    }

    #[test]
    fn commuting_noise_leaves_observable_fixed() {
        let r = Operator::pauli_z();
        let check = classical_wiener_unitary(&Operator::zeros(2), &r, &Operator::pauli_z(), 1.0, 1e-2, 20, 5).unwrap();
        assert!(check.max_deviation < 1e-12);
    }
}
