//! Bayesian estimation on one-dimensional grids.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{gaussian_pdf, ComplexGridFunction, DensityStats, GridDensity, TOL_INT};
use crate::operator::{C64, P_FLOOR};

type LikelihoodFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Conditional density `λ(y|x)` of an observation given the unknown.
#[derive(Clone)]
pub struct Likelihood {
    eval: Arc<LikelihoodFn>,
    pub description: String,
}

impl fmt::Debug for Likelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Likelihood").field("description", &self.description).finish()
    }
}

impl Likelihood {
    pub fn new(description: impl Into<String>, eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { eval: Arc::new(eval), description: description.into() }
    }

    /// `λ(y|x)`.
    pub fn eval(&self, y: f64, x: f64) -> f64 {
        (self.eval)(y, x)
    }

    /// Product of two likelihoods for independent observations `(y1, y2)`,
    /// both conditioned on the same `x`. The combined observation is passed as
    /// `y1` to the first factor and `y2` to the second.
    pub fn independent_pair(a: &Likelihood, y1: f64, b: &Likelihood, y2: f64) -> Likelihood {
        let (a, b) = (a.clone(), b.clone());
        Likelihood::new(
            format!("{} x {}", a.description, b.description),
            move |_, x| a.eval(y1, x) * b.eval(y2, x),
        )
    }

    /// Gaussian additive noise: `y = x + noise`, `noise ~ N(0, var_noise)`.
    pub fn gaussian_noise(var_noise: f64) -> Result<Self> {
        if !(var_noise > 0.0) {
            return Err(Error::InvalidParameter(format!("noise variance must be positive, got {var_noise}")));
        }
        Ok(Self::new(format!("gaussian noise (var {var_noise})"), move |y, x| {
            gaussian_pdf(y, x, var_noise)
        }))
    }

    /// Constant in both arguments: carries no information.
    pub fn uninformative() -> Self {
        Self::new("uninformative", |_, _| 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coin {
    Heads,
    Tails,
}

/// Parses strings such as `"HHT"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoinSequence(pub Vec<Coin>);

impl FromStr for CoinSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                'H' | 'h' => Ok(Coin::Heads),
                'T' | 't' => Ok(Coin::Tails),
                other => Err(Error::InvalidParameter(format!("coin outcome must be H or T, got {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(CoinSequence)
    }
}

/// Likelihood of a coin-toss sequence as a function of the heads
/// probability: `x^{#H} (1 − x)^{#T}`. The observation argument is ignored
/// since the sequence is baked in.
pub fn coin_likelihood(sequence: &[Coin]) -> Likelihood {
    let heads = sequence.iter().filter(|c| **c == Coin::Heads).count() as i32;
    let tails = sequence.len() as i32 - heads;
    let text: String = sequence.iter().map(|c| if *c == Coin::Heads { 'H' } else { 'T' }).collect();
    Likelihood::new(format!("coin {text}"), move |_, x| x.powi(heads) * (1.0 - x).powi(tails))
}

/// Posterior `λ(y|x) ρ(x) / ∫ λ(y|x') ρ(x') dx'` on the prior's grid.
pub fn posterior_grid(prior: &GridDensity, lik: &Likelihood, y: f64) -> Result<GridDensity> {
    prior.require_normalized()?;
    let grid = prior.grid();
    let values: Vec<f64> = prior
        .values()
        .iter()
        .enumerate()
        .map(|(i, p)| lik.eval(y, grid.x(i)) * p)
        .collect();
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParameter("likelihood must be finite and nonnegative".into()));
    }
    let unnormalized = prior.with_values(values);
    let evidence = unnormalized.mass();
    if !(evidence > 0.0) {
        return Err(Error::NoSupport { evidence });
    }
    unnormalized.normalized()
}

/// Conjugate update of a Gaussian prior `N(μ0, var0)` by one observation with
/// Gaussian noise of variance `var_noise`. Returns `(μ1, var1)` with
/// `1/var1 = 1/var0 + 1/var_noise` and `μ1 = var1 (μ0/var0 + y/var_noise)`.
pub fn gaussian_update(mu0: f64, var0: f64, var_noise: f64, y: f64) -> Result<(f64, f64)> {
    if !(var0 > 0.0) || !(var_noise > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "variances must be positive (prior {var0}, noise {var_noise})"
        )));
    }
    let var1 = 1.0 / (1.0 / var0 + 1.0 / var_noise);
    let mu1 = var1 / var0 * mu0 + var1 / var_noise * y;
    Ok((mu1, var1))
}

pub fn density_stats(d: &GridDensity) -> DensityStats {
    d.stats()
}

fn require_square_normalized(f: &ComplexGridFunction, what: &str) -> Result<()> {
    let n = f.norm_sq();
    if (n - 1.0).abs() > TOL_INT {
        return Err(Error::Precondition(format!("{what} must be square-normalized (∫|ψ|² = {n})")));
    }
    Ok(())
}

/// Von Neumann pointer measurement read as an estimation problem.
///
/// The system wave function `ψ(x)` is coupled to a pointer with initial
/// amplitude `φ`, shifted by `μ·x`. Reading the pointer at `y` gives the
/// posterior wave function `ψ(x) φ(y − μx) / √ρ_Y(y)` on the prior's grid,
/// together with `ρ_Y(y) = ∫ |ψ(x) φ(y − μx)|² dx`. The pointer amplitude is
/// interpolated between its grid points.
pub fn von_neumann_posterior(
    psi_prior: &ComplexGridFunction,
    phi: &ComplexGridFunction,
    mu: f64,
    y: f64,
) -> Result<(ComplexGridFunction, f64)> {
    require_square_normalized(psi_prior, "prior wave function")?;
    require_square_normalized(phi, "pointer wave function")?;
    let (post, rho_y) = pointer_joint(psi_prior, phi, mu, y);
    if rho_y < P_FLOOR {
        return Err(Error::ZeroDensityRecord { density: rho_y });
    }
    let scale = 1.0 / rho_y.sqrt();
    let values = post.iter().map(|z| z * scale).collect();
    Ok((ComplexGridFunction::new(psi_prior.lo, psi_prior.hi, values)?, rho_y))
}

/// Unnormalized `ψ(x) φ(y − μx)` and its squared norm.
fn pointer_joint(psi: &ComplexGridFunction, phi: &ComplexGridFunction, mu: f64, y: f64) -> (Vec<C64>, f64) {
    let grid = psi.grid();
    let joint: Vec<C64> = psi
        .values()
        .iter()
        .enumerate()
        .map(|(i, a)| a * phi.eval(y - mu * grid.x(i)))
        .collect();
    let rho_y = joint.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.dx();
    (joint, rho_y)
}

/// `ρ_Y(y)` alone, for scanning the record marginal.
pub fn record_density(psi: &ComplexGridFunction, phi: &ComplexGridFunction, mu: f64, y: f64) -> f64 {
    pointer_joint(psi, phi, mu, y).1
}
