//! Seeded stochastic processes: random walks, Wiener paths, Euler-Maruyama
//! diffusions, diffusion generators and Fokker-Planck evolution on a grid.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{gaussian_pdf, GridDensity};
use crate::rng::{RngStream, Sampler};

/// Mass drift allowed by [`fokker_planck_evolve`].
pub const TOL_MASS: f64 = 1e-8;

/// A sampled path on the uniform time grid `t0, t0 + dt, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("paths hold at least the initial value")
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }
}

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// `dX = v(X) dt + σ(X) dW`, started at `x0`.
#[derive(Clone)]
pub struct DiffusionSpec {
    drift: Arc<ScalarFn>,
    diffusion: Arc<ScalarFn>,
    pub x0: f64,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec").field("x0", &self.x0).finish_non_exhaustive()
    }
}

impl DiffusionSpec {
    pub fn new(
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64) -> f64 + Send + Sync + 'static,
        x0: f64,
    ) -> Self {
        Self { drift: Arc::new(drift), diffusion: Arc::new(diffusion), x0 }
    }

    /// Standard Wiener process from the origin.
    pub fn wiener() -> Self {
        Self::new(|_| 0.0, |_| 1.0, 0.0)
    }

    /// Linear drift with additive noise: `dX = −a X dt + sig dW`.
    pub fn linear(a: f64, sig: f64, x0: f64) -> Self {
        Self::new(move |x| -a * x, move |_| sig, x0)
    }

    /// Multiplicative noise: `dX = −γ X dt + s X dW`, solved by
    /// `x0 exp(−(γ + s²/2) t + s W(t))`.
    pub fn geometric(gamma: f64, s: f64, x0: f64) -> Self {
        Self::new(move |x| -gamma * x, move |x| s * x, x0)
    }

    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    pub fn diffusion(&self, x: f64) -> f64 {
        (self.diffusion)(x)
    }
}

/// Number of steps of size `dt` covering `[0, t_end]`.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    if !(t_end >= dt) {
        return Err(Error::InvalidParameter(format!("horizon {t_end} shorter than one step {dt}")));
    }
    Ok((t_end / dt).round() as usize)
}

/// `n` Wiener increments `√dt·ξ`, drawn in order from the sampler.
pub fn wiener_increments(sampler: &mut Sampler, n: usize, dt: f64) -> Vec<f64> {
    let sd = dt.sqrt();
    (0..n).map(|_| sd * sampler.normal()).collect()
}

/// Wiener path on `[0, T]` with Gaussian increments: `W(0) = 0`,
/// `W_{k+1} = W_k + √dt ξ_{k+1}`.
pub fn wiener_path(t_end: f64, dt: f64, rng: RngStream) -> Result<Path> {
    let n = step_count(t_end, dt)?;
    let mut sampler = rng.sampler();
    let sd = dt.sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut w = 0.0;
    values.push(w);
    for _ in 0..n {
        let dw = sd * sampler.normal();
        w += dw;
        values.push(w);
    }
    Ok(Path { t0: 0.0, dt, values })
}

/// Partial sums `X_0 = 0, …, X_n` of fair ±1 steps.
pub fn random_walk(n: usize, rng: RngStream) -> Vec<i64> {
    let mut sampler = rng.sampler();
    let mut out = Vec::with_capacity(n + 1);
    let mut x = 0;
    out.push(x);
    for _ in 0..n {
        x += sampler.sign();
        out.push(x);
    }
    out
}

/// Euler-Maruyama: `X_{k+1} = X_k + v(X_k) dt + σ(X_k) √dt ξ_{k+1}`, with the
/// normals taken from the stream in the same order as [`wiener_path`].
pub fn euler_maruyama(spec: &DiffusionSpec, t_end: f64, dt: f64, rng: RngStream) -> Result<Path> {
    let n = step_count(t_end, dt)?;
    let mut sampler = rng.sampler();
    let sd = dt.sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut x = spec.x0;
    values.push(x);
    for _ in 0..n {
        let dw = sd * sampler.normal();
        x = x + spec.drift(x) * dt + spec.diffusion(x) * dw;
        values.push(x);
    }
    Ok(Path { t0: 0.0, dt, values })
}

/// Euler-Maruyama driven by given Wiener increments.
pub fn euler_maruyama_driven(spec: &DiffusionSpec, dt: f64, increments: &[f64]) -> Path {
    let mut values = Vec::with_capacity(increments.len() + 1);
    let mut x = spec.x0;
    values.push(x);
    for dw in increments {
        x = x + spec.drift(x) * dt + spec.diffusion(x) * dw;
        values.push(x);
    }
    Path { t0: 0.0, dt, values }
}

/// Left-point (Ito) sum `Σ_k W_k (W_{k+1} − W_k)`.
pub fn ito_integral(w: &Path) -> f64 {
    w.values.windows(2).map(|p| p[0] * (p[1] - p[0])).sum()
}

/// Sample mean and (population) variance at each time over an ensemble of
/// equally gridded paths, as `(t, mean, var)` rows.
pub fn ensemble_summary(paths: &[Path]) -> Vec<(f64, f64, f64)> {
    let Some(first) = paths.first() else {
        return Vec::new();
    };
    let m = paths.len() as f64;
    (0..first.len())
        .map(|k| {
            let mean = paths.iter().map(|p| p.values[k]).sum::<f64>() / m;
            let var = paths.iter().map(|p| (p.values[k] - mean).powi(2)).sum::<f64>() / m;
            (first.time(k), mean, var)
        })
        .collect()
}

type Derivative = Option<Arc<ScalarFn>>;

/// A test function for the generator, with optional analytic derivatives.
#[derive(Clone)]
pub struct TestFunction {
    f: Arc<ScalarFn>,
    df: Derivative,
    d2f: Derivative,
}

impl TestFunction {
    /// Derivatives will be taken by central differences.
    pub fn numeric(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), df: None, d2f: None }
    }

    pub fn analytic(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { f: Arc::new(f), df: Some(Arc::new(df)), d2f: Some(Arc::new(d2f)) }
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    fn step(x: f64) -> f64 {
        1e-5 * (1.0 + x.abs())
    }

    pub fn first(&self, x: f64) -> f64 {
        match &self.df {
            Some(df) => df(x),
            None => {
                let h = Self::step(x);
                (self.value(x + h) - self.value(x - h)) / (2.0 * h)
            }
        }
    }

    pub fn second(&self, x: f64) -> f64 {
        match &self.d2f {
            Some(d2f) => d2f(x),
            None => {
                let h = Self::step(x);
                (self.value(x + h) - 2.0 * self.value(x) + self.value(x - h)) / (h * h)
            }
        }
    }
}

/// Generator of the diffusion, `(𝓛g)(x) = v(x) g'(x) + ½ σ(x)² g''(x)`.
pub fn generator_apply(spec: &DiffusionSpec, g: &TestFunction, x: f64) -> f64 {
    let s = spec.diffusion(x);
    spec.drift(x) * g.first(x) + 0.5 * s * s * g.second(x)
}

/// Largest stable explicit step for the Fokker-Planck scheme on this grid:
/// `dt · (2 D_max / dx² + v_max / dx) ≤ 1` with `D = σ²/2`.
pub fn fokker_planck_stable_dt(grid_density: &GridDensity, spec: &DiffusionSpec) -> f64 {
    let grid = grid_density.grid();
    let dx = grid.dx();
    let (mut d_max, mut v_max) = (0.0f64, 0.0f64);
    for x in grid.xs() {
        let s = spec.diffusion(x);
        d_max = d_max.max(0.5 * s * s);
        v_max = v_max.max(spec.drift(x).abs());
    }
    let rate = 2.0 * d_max / (dx * dx) + v_max / dx;
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

/// Precomputed drift and diffusion samples for repeated explicit steps.
#[derive(Debug, Clone)]
pub(crate) struct FokkerPlanckStencil {
    drift: Vec<f64>,
    half_var: Vec<f64>,
    dx: f64,
    scratch: Vec<f64>,
}

impl FokkerPlanckStencil {
    pub(crate) fn new(grid_density: &GridDensity, spec: &DiffusionSpec) -> Self {
        let grid = grid_density.grid();
        let drift = grid.xs().map(|x| spec.drift(x)).collect();
        let half_var = grid
            .xs()
            .map(|x| {
                let s = spec.diffusion(x);
                0.5 * s * s
            })
            .collect();
        Self { drift, half_var, dx: grid.dx(), scratch: vec![0.0; grid.n + 1] }
    }

    /// One conservative explicit step of `∂ρ/∂t = −∂x(vρ) + ∂²x(Dρ)` with
    /// central differences and zero flux through both ends. Negative values
    /// are clipped and the pre-clip mass restored by rescaling.
    pub(crate) fn step(&mut self, rho: &mut [f64], dt: f64) {
        let n = rho.len();
        let flux = &mut self.scratch;
        flux[0] = 0.0;
        flux[n] = 0.0;
        for i in 0..n - 1 {
            let advective = 0.5 * (self.drift[i] * rho[i] + self.drift[i + 1] * rho[i + 1]);
            let diffusive = (self.half_var[i + 1] * rho[i + 1] - self.half_var[i] * rho[i]) / self.dx;
            flux[i + 1] = advective - diffusive;
        }
        let ratio = dt / self.dx;
        let mut mass = 0.0;
        let mut clipped = false;
        for i in 0..n {
            rho[i] -= ratio * (flux[i + 1] - flux[i]);
            mass += rho[i];
            if rho[i] < 0.0 {
                clipped = true;
            }
        }
        if clipped {
            let mut kept = 0.0;
            for v in rho.iter_mut() {
                *v = v.max(0.0);
                kept += *v;
            }
            if kept > 0.0 {
                let scale = mass / kept;
                rho.iter_mut().for_each(|v| *v *= scale);
            }
        }
    }
}

/// Evolves a density under the Fokker-Planck equation of `spec` for time
/// `t_end`, using explicit Euler steps of size `dt_pde` (the last step is
/// shortened to land on `t_end`). Fails if `dt_pde` exceeds
/// [`fokker_planck_stable_dt`].
pub fn fokker_planck_evolve(
    rho0: &GridDensity,
    spec: &DiffusionSpec,
    t_end: f64,
    dt_pde: f64,
) -> Result<GridDensity> {
    rho0.require_normalized()?;
    if !(dt_pde > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidParameter(format!("need dt > 0 and T >= 0 (dt {dt_pde}, T {t_end})")));
    }
    let limit = fokker_planck_stable_dt(rho0, spec);
    if dt_pde > limit {
        return Err(Error::Stability { dt: dt_pde, limit });
    }
    let mut stencil = FokkerPlanckStencil::new(rho0, spec);
    let mut rho = rho0.values().to_vec();
    let mut t = 0.0;
    while t < t_end - 1e-12 * t_end.max(1.0) {
        let h = dt_pde.min(t_end - t);
        stencil.step(&mut rho, h);
        t += h;
    }
    let out = rho0.with_values(rho);
    let drift = (out.mass() - 1.0).abs();
    if drift > TOL_MASS {
        return Err(Error::FilterCollapse { t, reason: format!("mass drifted by {drift:e}") });
    }
    Ok(out.assume_normalized())
}

/// Heat kernel `T(x, t | x0, t0)` of the standard Wiener process.
pub fn heat_kernel(x: f64, t: f64, x0: f64, t0: f64) -> f64 {
    gaussian_pdf(x, x0, t - t0)
}

/// Defect of the Chapman-Kolmogorov identity for the heat kernel,
/// `|∫ T(x,t|x1,t1) T(x1,t1|x0,t0) dx1 − T(x,t|x0,t0)|`, by composite
/// Simpson quadrature on `x0 ± 10√(t − t0)` with a step that resolves the
/// narrower of the two kernels.
pub fn chapman_kolmogorov_check(t: f64, t1: f64, t0: f64, x: f64, x0: f64) -> Result<f64> {
    if !(t0 <= t1 && t1 <= t && t0 < t) {
        return Err(Error::InvalidParameter(format!("need t0 <= t1 <= t and t0 < t, got {t0}, {t1}, {t}")));
    }
    let direct = heat_kernel(x, t, x0, t0);
    if t1 == t0 || t1 == t {
        // One factor is a delta function: the identity holds trivially.
        return Ok(0.0);
    }
    let half_width = 10.0 * (t - t0).sqrt();
    let (a, b) = (x0 - half_width, x0 + half_width);
    let narrow = (t - t1).sqrt().min((t1 - t0).sqrt());
    let target = narrow / 16.0;
    let mut intervals = ((b - a) / target).ceil() as usize;
    intervals = intervals.clamp(2000, 20_000_000);
    intervals += intervals % 2;
    let h = (b - a) / intervals as f64;
    let integrand = |x1: f64| heat_kernel(x, t, x1, t1) * heat_kernel(x1, t1, x0, t0);
    let mut sum = integrand(a) + integrand(b);
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * integrand(a + k as f64 * h);
    }
    Ok((sum * h / 3.0 - direct).abs())
}
