//! Functions sampled at the midpoints of a uniform grid on `[lo, hi]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::C64;

/// Quadrature tolerance for normalization checks.
pub const TOL_INT: f64 = 1e-6;

/// Default number of cells for one-dimensional densities.
pub const DEFAULT_GRID_SIZE: usize = 2048;

fn check_support(lo: f64, hi: f64, n: usize) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter(format!("bad support [{lo}, {hi}]")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("grid needs at least one cell".into()));
    }
    Ok(())
}

/// Uniform midpoint grid geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        check_support(lo, hi, n)?;
        Ok(Self { lo, hi, n })
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    /// Midpoint of cell `i`.
    pub fn x(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.dx()
    }

    pub fn xs(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }

    /// Index of the cell containing `x`, if inside the support.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if x < self.lo || x > self.hi {
            return None;
        }
        Some((((x - self.lo) / self.dx()) as usize).min(self.n - 1))
    }
}

/// A nonnegative density on a uniform midpoint grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub lo: f64,
    pub hi: f64,
    values: Vec<f64>,
    is_normalized: bool,
}

/// Mean, variance and mode of a grid density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityStats {
    pub mean: f64,
    pub variance: f64,
    pub mode: f64,
}

impl GridDensity {
    /// Unnormalized density from raw values.
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        check_support(lo, hi, values.len())?;
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("density values must be finite and >= 0, got {v}")));
        }
        Ok(Self { lo, hi, values, is_normalized: false })
    }

    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = Grid::new(lo, hi, n)?;
        Self::new(lo, hi, grid.xs().map(f).collect())
    }

    /// Uniform probability density on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::from_fn(lo, hi, n, |_| 1.0)?.normalized()
    }

    /// Gaussian density truncated to `mean ± 8 sd`.
    pub fn gaussian(mean: f64, var: f64, n: usize) -> Result<Self> {
        if !(var > 0.0) {
            return Err(Error::InvalidParameter(format!("variance must be positive, got {var}")));
        }
        let sd = var.sqrt();
        Self::gaussian_on(mean, var, mean - 8.0 * sd, mean + 8.0 * sd, n)
    }

    pub fn gaussian_on(mean: f64, var: f64, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(var > 0.0) {
            return Err(Error::InvalidParameter(format!("variance must be positive, got {var}")));
        }
        Self::from_fn(lo, hi, n, |x| gaussian_pdf(x, mean, var))?.normalized()
    }

    pub fn grid(&self) -> Grid {
        Grid { lo: self.lo, hi: self.hi, n: self.values.len() }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        self.grid().dx()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.grid().x(i)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.is_normalized
    }

    /// Midpoint-rule integral.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx()
    }

    /// Rescales to unit mass.
    pub fn normalized(mut self) -> Result<Self> {
        let mass = self.mass();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::NoSupport { evidence: mass });
        }
        self.values.iter_mut().for_each(|v| *v /= mass);
        self.is_normalized = true;
        Ok(self)
    }

    pub(crate) fn require_normalized(&self) -> Result<()> {
        if !self.is_normalized || (self.mass() - 1.0).abs() > TOL_INT {
            return Err(Error::Precondition(format!(
                "density must be normalized (mass {})",
                self.mass()
            )));
        }
        Ok(())
    }

    /// Replaces the values, dropping the normalization flag.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        Self { lo: self.lo, hi: self.hi, values, is_normalized: false }
    }

    /// Marks as normalized without rescaling. Callers guarantee unit mass.
    pub(crate) fn assume_normalized(mut self) -> Self {
        self.is_normalized = true;
        self
    }

    /// `∫ f(x) ρ(x) dx` by the midpoint rule.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let grid = self.grid();
        self.values.iter().enumerate().map(|(i, v)| v * f(grid.x(i))).sum::<f64>() * grid.dx()
    }

    /// Mean, variance (both normalized by the mass) and the midpoint of the
    /// highest cell. Ties resolve to the lowest `x`.
    pub fn stats(&self) -> DensityStats {
        let mass = self.mass();
        let mean = self.integrate(|x| x) / mass;
        let variance = self.integrate(|x| (x - mean) * (x - mean)) / mass;
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        DensityStats { mean, variance, mode: self.x(best) }
    }
}

pub fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Complex-valued function on a uniform midpoint grid (wave functions).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGridFunction {
    pub lo: f64,
    pub hi: f64,
    values: Vec<C64>,
}

impl ComplexGridFunction {
    pub fn new(lo: f64, hi: f64, values: Vec<C64>) -> Result<Self> {
        check_support(lo, hi, values.len())?;
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidParameter("wave function values must be finite".into()));
        }
        Ok(Self { lo, hi, values })
    }

    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> C64) -> Result<Self> {
        let grid = Grid::new(lo, hi, n)?;
        Self::new(lo, hi, grid.xs().map(f).collect())
    }

    /// Real Gaussian amplitude whose modulus squared is `N(mean, var)`,
    /// truncated to `mean ± 8 sd`.
    pub fn gaussian_amplitude(mean: f64, var: f64, n: usize) -> Result<Self> {
        if !(var > 0.0) {
            return Err(Error::InvalidParameter(format!("variance must be positive, got {var}")));
        }
        let sd = var.sqrt();
        Self::from_fn(mean - 8.0 * sd, mean + 8.0 * sd, n, |x| {
            C64::new(gaussian_pdf(x, mean, var).sqrt(), 0.0)
        })
    }

    pub fn grid(&self) -> Grid {
        Grid { lo: self.lo, hi: self.hi, n: self.values.len() }
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// `∫ |ψ|² dx`.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid().dx()
    }

    /// `|ψ(x)|²` as a density on the same grid.
    pub fn modulus_sq(&self) -> GridDensity {
        GridDensity {
            lo: self.lo,
            hi: self.hi,
            values: self.values.iter().map(|z| z.norm_sqr()).collect(),
            is_normalized: false,
        }
    }

    /// Value at an arbitrary point by four-point cubic interpolation through
    /// the midpoints; zero outside the support.
    pub fn eval(&self, x: f64) -> C64 {
        let grid = self.grid();
        if x < self.lo || x > self.hi {
            return C64::new(0.0, 0.0);
        }
        let n = self.values.len();
        let s = (x - self.lo) / grid.dx() - 0.5;
        let base = s.floor();
        let frac = s - base;
        let base = base as isize;
        let at = |k: isize| -> C64 {
            if k < 0 || k >= n as isize {
                C64::new(0.0, 0.0)
            } else {
                self.values[k as usize]
            }
        };
        let (p0, p1, p2, p3) = (at(base - 1), at(base), at(base + 1), at(base + 2));
        // Lagrange weights for nodes -1, 0, 1, 2.
        let t = frac;
        let w0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let w2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let w3 = (t + 1.0) * t * (t - 1.0) / 6.0;
        p0 * w0 + p1 * w1 + p2 * w2 + p3 * w3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_stats() {
        let d = GridDensity::uniform(0.0, 1.0, 2048).unwrap();
        let s = d.stats();
        assert!((s.mean - 0.5).abs() < 1e-12);
        assert!((s.variance - 1.0 / 12.0).abs() < 1e-7);
        // All cells tie, so the lowest midpoint wins.
        assert_eq!(s.mode, d.x(0));
    }

    #[test]
    fn rejects_negative_values() {
        assert!(GridDensity::new(0.0, 1.0, vec![0.5, -0.1]).is_err());
        assert!(GridDensity::new(1.0, 0.0, vec![0.5]).is_err());
        assert!(matches!(
            GridDensity::new(0.0, 1.0, vec![0.0, 0.0]).unwrap().normalized(),
            Err(Error::NoSupport { .. })
        ));
    }

    #[test]
    fn gaussian_moments() {
        let d = GridDensity::gaussian(1.5, 0.3, 2048).unwrap();
        let s = d.stats();
        assert!((d.mass() - 1.0).abs() < 1e-12);
        assert!((s.mean - 1.5).abs() < 1e-10);
        assert!((s.variance - 0.3).abs() < 1e-8);
    }

    #[test]
    fn cubic_interpolation_is_accurate() {
        let f = ComplexGridFunction::gaussian_amplitude(0.0, 1.0, 2048).unwrap();
        for &x in &[-2.3, -0.01, 0.0, 0.77, 3.1] {
            let exact = gaussian_pdf(x, 0.0, 1.0).sqrt();
            assert!((f.eval(x).re - exact).abs() < 1e-9, "x = {x}");
        }
        assert_eq!(f.eval(100.0), C64::new(0.0, 0.0));
    }
}
