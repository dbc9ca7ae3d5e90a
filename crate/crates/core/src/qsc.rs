//! Quantum Ito calculus with concrete operator coefficients.
//!
//! An [`ItoExpr`] is a Wick-ordered differential
//! `Σ_β C_β ⊗ dβ` over the basis increments `dt`, `dB_k`, `dB_k*` and
//! `dΛ_jk`, optionally carrying a non-differential summand. Products of
//! increments follow the quantum Ito table (left factor first):
//!
//! ```text
//!   dB_j  · dB_k*   = δ_jk dt
//!   dB_j  · dΛ_kl   = δ_jk dB_l
//!   dΛ_ij · dB_k*   = δ_jk dB_i*
//!   dΛ_ij · dΛ_kl   = δ_jk dΛ_il
//! ```
//!
//! and every other product vanishes. Channel indices are zero-based.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::ComplexGridFunction;
use crate::operator::{c, check_same_dim, lindblad_apply, CMatrix, Operator, C64, I, TOL_HERM};

/// One basis increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum IncrementBasis {
    Dt,
    DB(usize),
    DBdag(usize),
    DLambda(usize, usize),
}

impl IncrementBasis {
    /// Product of two increments under the Ito table, `None` when it vanishes.
    pub fn times(self, rhs: IncrementBasis) -> Option<IncrementBasis> {
        use IncrementBasis::*;
        match (self, rhs) {
            (DB(j), DBdag(k)) if j == k => Some(Dt),
            (DB(j), DLambda(k, l)) if j == k => Some(DB(l)),
            (DLambda(i, j), DBdag(k)) if j == k => Some(DBdag(i)),
            (DLambda(i, j), DLambda(k, l)) if j == k => Some(DLambda(i, l)),
            _ => None,
        }
    }

    /// The increment appearing in the adjoint.
    pub fn adjoint(self) -> IncrementBasis {
        use IncrementBasis::*;
        match self {
            Dt => Dt,
            DB(k) => DBdag(k),
            DBdag(k) => DB(k),
            DLambda(j, k) => DLambda(k, j),
        }
    }

    fn max_channel(self) -> Option<usize> {
        use IncrementBasis::*;
        match self {
            Dt => None,
            DB(k) | DBdag(k) => Some(k),
            DLambda(j, k) => Some(j.max(k)),
        }
    }

    pub fn label(self) -> String {
        use IncrementBasis::*;
        match self {
            Dt => "dt".into(),
            DB(k) => format!("dB{k}"),
            DBdag(k) => format!("dB{k}*"),
            DLambda(j, k) => format!("dLambda{j},{k}"),
        }
    }
}

/// Quantum stochastic differential with operator coefficients. Absent keys
/// are zero coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ItoExpr {
    n_channels: usize,
    dim: usize,
    pub initial: Option<Operator>,
    terms: BTreeMap<IncrementBasis, Operator>,
}

impl ItoExpr {
    pub fn zero(n_channels: usize, dim: usize) -> Self {
        Self { n_channels, dim, initial: None, terms: BTreeMap::new() }
    }

    /// Single-term expression `C ⊗ dβ`.
    pub fn term(n_channels: usize, basis: IncrementBasis, coeff: Operator) -> Result<Self> {
        let mut e = Self::zero(n_channels, coeff.dim());
        e.add_term(basis, coeff)?;
        Ok(e)
    }

    /// Scalar-coefficient term `z I ⊗ dβ` on a `dim`-dimensional system.
    pub fn scalar_term(n_channels: usize, dim: usize, basis: IncrementBasis, z: C64) -> Result<Self> {
        Self::term(n_channels, basis, Operator::identity(dim).scale(z))
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds `C ⊗ dβ` to the expression.
    pub fn add_term(&mut self, basis: IncrementBasis, coeff: Operator) -> Result<()> {
        if let Some(k) = basis.max_channel() {
            if k >= self.n_channels {
                return Err(Error::InvalidParameter(format!(
                    "channel index {k} out of range for {} channels",
                    self.n_channels
                )));
            }
        }
        if coeff.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: coeff.dim() });
        }
        match self.terms.get_mut(&basis) {
            Some(existing) => *existing += &coeff,
            None => {
                self.terms.insert(basis, coeff);
            }
        }
        Ok(())
    }

    /// Coefficient of `dβ`; zero when absent.
    pub fn coeff(&self, basis: IncrementBasis) -> Operator {
        self.terms.get(&basis).cloned().unwrap_or_else(|| Operator::zeros(self.dim))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&IncrementBasis, &Operator)> {
        self.terms.iter()
    }

    fn check_compatible(&self, other: &ItoExpr) -> Result<()> {
        if self.n_channels != other.n_channels {
            return Err(Error::DimensionMismatch { expected: self.n_channels, found: other.n_channels });
        }
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        Ok(())
    }

    pub fn add(&self, other: &ItoExpr) -> Result<ItoExpr> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (b, c) in &other.terms {
            out.add_term(*b, c.clone())?;
        }
        out.initial = match (&self.initial, &other.initial) {
            (Some(a), Some(b)) => Some(a + b),
            (a, b) => a.clone().or_else(|| b.clone()),
        };
        Ok(out)
    }

    pub fn neg(&self) -> ItoExpr {
        self.map_coeffs(|c| -c)
    }

    fn map_coeffs(&self, f: impl Fn(&Operator) -> Operator) -> ItoExpr {
        ItoExpr {
            n_channels: self.n_channels,
            dim: self.dim,
            initial: self.initial.as_ref().map(&f),
            terms: self.terms.iter().map(|(b, c)| (*b, f(c))).collect(),
        }
    }

    fn check_operator(&self, x: &Operator) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.dim() });
        }
        Ok(())
    }

    /// `X · (Σ C_β dβ) = Σ (X C_β) dβ`.
    pub fn left_mul(&self, x: &Operator) -> Result<ItoExpr> {
        self.check_operator(x)?;
        Ok(self.map_coeffs(|c| x * c))
    }

    /// `(Σ C_β dβ) · X = Σ (C_β X) dβ`.
    pub fn right_mul(&self, x: &Operator) -> Result<ItoExpr> {
        self.check_operator(x)?;
        Ok(self.map_coeffs(|c| c * x))
    }

    /// Adjoint: coefficients are adjointed and `dB ↔ dB*`, `dΛ_jk → dΛ_kj`.
    pub fn adjoint(&self) -> ItoExpr {
        ItoExpr {
            n_channels: self.n_channels,
            dim: self.dim,
            initial: self.initial.as_ref().map(Operator::adjoint),
            terms: self.terms.iter().map(|(b, c)| (b.adjoint(), c.adjoint())).collect(),
        }
    }

    /// Largest coefficient entry modulus over all increments.
    pub fn max_coeff_norm(&self) -> f64 {
        self.terms.values().map(Operator::max_abs).fold(0.0, f64::max)
    }

    /// Coefficientwise `‖·‖_max` distance, treating absent keys as zero.
    pub fn distance(&self, other: &ItoExpr) -> f64 {
        self.add(&other.neg()).map(|d| d.max_coeff_norm()).unwrap_or(f64::INFINITY)
    }

    /// Drops coefficients that are exactly zero.
    pub fn pruned(mut self) -> ItoExpr {
        self.terms.retain(|_, c| c.max_abs() > 0.0);
        self
    }
}

/// Product of two differentials under the Ito table. Coefficients multiply
/// in order, left coefficient first.
pub fn ito_mul(a: &ItoExpr, b: &ItoExpr) -> Result<ItoExpr> {
    a.check_compatible(b)?;
    let mut out = ItoExpr::zero(a.n_channels, a.dim);
    for (ba, ca) in &a.terms {
        for (bb, cb) in &b.terms {
            if let Some(basis) = ba.times(*bb) {
                out.add_term(basis, ca * cb)?;
            }
        }
    }
    Ok(out)
}

/// Ito product rule `d(XY) = (dX) Y + X (dY) + (dX)(dY)`, order preserved.
pub fn ito_product(x: &Operator, dx: &ItoExpr, y: &Operator, dy: &ItoExpr) -> Result<ItoExpr> {
    dx.right_mul(y)?.add(&dy.left_mul(x)?)?.add(&ito_mul(dx, dy)?)
}

/// Scattering matrix, coupling column and Hamiltonian of an open system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlhTriple {
    pub s: Vec<Vec<Operator>>,
    pub l: Vec<Operator>,
    pub h: Operator,
}

impl SlhTriple {
    /// Checked constructor: `S` must be an `n × n` block unitary
    /// (`Σ_l S_lj* S_lk = δ_jk I`), `L` a column of `n` operators and `H`
    /// hermitian, all on one system dimension.
    pub fn new(s: Vec<Vec<Operator>>, l: Vec<Operator>, h: Operator) -> Result<Self> {
        let slh = Self::from_parts(s, l, h)?;
        let (n, dim) = (slh.n_channels(), slh.dim());
        for j in 0..n {
            for k in 0..n {
                let mut acc = CMatrix::zeros(dim, dim);
                for row in &slh.s {
                    acc += row[j].matrix().adjoint() * row[k].matrix();
                }
                if j == k {
                    acc -= CMatrix::identity(dim, dim);
                }
                let defect = crate::operator::max_abs(&acc);
                if defect > TOL_HERM {
                    return Err(Error::Structural(format!("scattering matrix not unitary (defect {defect:e})")));
                }
            }
        }
        Ok(slh)
    }

    /// Checks shapes and hermiticity of `H` but not unitarity of `S`, so that
    /// [`unitarity_defect`] can report on arbitrary inputs.
    pub fn from_parts(s: Vec<Vec<Operator>>, l: Vec<Operator>, h: Operator) -> Result<Self> {
        let n = l.len();
        if n == 0 {
            return Err(Error::Structural("an SLH model needs at least one channel".into()));
        }
        if s.len() != n || s.iter().any(|row| row.len() != n) {
            return Err(Error::Structural(format!("scattering matrix must be {n}x{n}")));
        }
        let mut all: Vec<&Operator> = vec![&h];
        all.extend(l.iter());
        all.extend(s.iter().flatten());
        check_same_dim(&all)?;
        if !h.is_hermitian() {
            return Err(Error::Structural("Hamiltonian must be hermitian".into()));
        }
        Ok(Self { s, l, h })
    }

    /// Single channel with `S = I`.
    pub fn emission_absorption(l: Operator, h: Operator) -> Result<Self> {
        let dim = h.dim();
        Self::new(vec![vec![Operator::identity(dim)]], vec![l], h)
    }

    pub fn n_channels(&self) -> usize {
        self.l.len()
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn has_trivial_scattering(&self) -> bool {
        let dim = self.dim();
        self.s.iter().enumerate().all(|(j, row)| {
            row.iter().enumerate().all(|(k, op)| {
                let target = if j == k { Operator::identity(dim) } else { Operator::zeros(dim) };
                op.distance(&target) == 0.0
            })
        })
    }
}

/// Generator `G` of the unitary QSDE `dU = G U`:
/// `dΛ_jk: S_jk − δ_jk`, `dB_j*: L_j`, `dB_k: −Σ_j L_j* S_jk`,
/// `dt: −(½ Σ_k L_k* L_k + iH)`.
pub fn hp_increment(slh: &SlhTriple) -> ItoExpr {
    let n = slh.n_channels();
    let dim = slh.dim();
    let id = Operator::identity(dim);
    let mut g = ItoExpr::zero(n, dim);
    let push = |g: &mut ItoExpr, b, c: Operator| g.add_term(b, c).expect("dimensions validated by SlhTriple");
    for j in 0..n {
        for k in 0..n {
            let coeff = if j == k { &slh.s[j][k] - &id } else { slh.s[j][k].clone() };
            push(&mut g, IncrementBasis::DLambda(j, k), coeff);
        }
    }
    for (j, l) in slh.l.iter().enumerate() {
        push(&mut g, IncrementBasis::DBdag(j), l.clone());
    }
    for k in 0..n {
        let mut coeff = Operator::zeros(dim);
        for (j, l) in slh.l.iter().enumerate() {
            coeff += &(&l.adjoint() * &slh.s[j][k]);
        }
        push(&mut g, IncrementBasis::DB(k), -coeff);
    }
    let mut damping = Operator::zeros(dim);
    for l in &slh.l {
        damping += &(&l.adjoint() * l);
    }
    push(&mut g, IncrementBasis::Dt, -(&damping.scale_re(0.5) + &slh.h.scale(I)));
    g.pruned()
}

/// Heisenberg-Langevin increment of `j_t(X) = U* X U`, returned with the
/// `j_t` stripped: `G* X + X G + G* X G` for `G` from [`hp_increment`].
pub fn heisenberg_increment(slh: &SlhTriple, x: &Operator) -> Result<ItoExpr> {
    check_same_dim(&[x, &slh.h])?;
    let g = hp_increment(slh);
    let gd = g.adjoint();
    let gdx = gd.right_mul(x)?;
    Ok(gdx.add(&g.left_mul(x)?)?.add(&ito_mul(&gdx, &g)?)?.pruned())
}

/// `d(U* U)` evaluated at `U = I`: `G* + G + G* G`.
pub fn unitarity_residual(g: &ItoExpr) -> Result<ItoExpr> {
    let id = Operator::identity(g.dim());
    ito_product(&id, &g.adjoint(), &id, g)
}

/// Largest coefficient of `d(U* U)`; zero (up to rounding) exactly when the
/// QSDE coefficients preserve unitarity.
pub fn unitarity_defect(slh: &SlhTriple) -> f64 {
    unitarity_defect_of(&hp_increment(slh))
}

pub fn unitarity_defect_of(g: &ItoExpr) -> f64 {
    unitarity_residual(g).map(|r| r.max_coeff_norm()).unwrap_or(f64::INFINITY)
}

/// Output field increments `dB_out_j = Σ_k S_jk dB_k + L_j dt`, one
/// expression per channel (system coefficients with `j_t` stripped).
pub fn output_increment(slh: &SlhTriple) -> Vec<ItoExpr> {
    let n = slh.n_channels();
    let dim = slh.dim();
    (0..n)
        .map(|j| {
            let mut e = ItoExpr::zero(n, dim);
            for k in 0..n {
                e.add_term(IncrementBasis::DB(k), slh.s[j][k].clone()).expect("validated");
            }
            e.add_term(IncrementBasis::Dt, slh.l[j].clone()).expect("validated");
            e.pruned()
        })
        .collect()
}

/// Homodyne quadrature `dB + dB*` of an output increment.
pub fn quadrature(d_out: &ItoExpr) -> ItoExpr {
    d_out.add(&d_out.adjoint()).expect("adjoint shares the shape")
}

/// Cayley transform `S = (I + iE/2)(I − iE/2)⁻¹`.
pub fn scattering_from_e(e: &Operator) -> Result<Operator> {
    if !e.is_hermitian() {
        return Err(Error::Structural("scattering generator must be hermitian".into()));
    }
    let dim = e.dim();
    let id = CMatrix::identity(dim, dim);
    let half_ie = e.matrix() * c(0.0, 0.5);
    let denom = (&id - &half_ie).try_inverse().ok_or(Error::Singular)?;
    Operator::new((&id + &half_ie) * denom)?.into_unitary()
}

/// A real linear combination `a B(t) + b B*(t)` at a fixed time, used to
/// derive quadrature commutators from `[B(t), B*(s)] = min(t, s)`.
#[derive(Debug, Clone, Copy)]
struct FieldCombination {
    t: f64,
    b: C64,
    b_dag: C64,
}

impl FieldCombination {
    fn commutator(&self, other: &FieldCombination) -> C64 {
        let m = self.t.min(other.t);
        // [B, B] = [B*, B*] = 0, [B(t), B*(s)] = min, [B*(t), B(s)] = −min.
        self.b * other.b_dag * m - self.b_dag * other.b * m
    }
}

/// `[Q(t), P(s)]` for `Q = B + B*` and `P = (B − B*)/i`; equals `2i min(t, s)`.
pub fn quadrature_commutator(t: f64, s: f64) -> C64 {
    let q = FieldCombination { t, b: c(1.0, 0.0), b_dag: c(1.0, 0.0) };
    let p = FieldCombination { t: s, b: -I, b_dag: I };
    q.commutator(&p)
}

/// `⟨exp(α)|exp(β)⟩ = exp(∫ α*(x) β(x) dx)`, by midpoint quadrature on the
/// shared grid.
pub fn exp_vector_inner(alpha: &ComplexGridFunction, beta: &ComplexGridFunction) -> Result<C64> {
    if alpha.grid() != beta.grid() {
        return Err(Error::Structural("test functions must share one grid".into()));
    }
    let overlap: C64 =
        alpha.values().iter().zip(beta.values()).map(|(a, b)| a.conj() * b).sum::<C64>() * alpha.grid().dx();
    Ok(overlap.exp())
}

/// The `dt` coefficient of the Heisenberg increment for `S = I` is the
/// Lindblad generator; exposed for cross-checks.
pub fn lindblad_from_slh(slh: &SlhTriple, x: &Operator) -> Result<Operator> {
    lindblad_apply(&slh.l, &slh.h, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use IncrementBasis::*;

    fn scalar(basis: IncrementBasis, z: f64) -> ItoExpr {
        ItoExpr::scalar_term(1, 1, basis, c(z, 0.0)).unwrap()
    }

    fn is_exactly(e: &ItoExpr, basis: IncrementBasis, z: f64) -> bool {
        let e = e.clone().pruned();
        e.terms().count() == 1 && e.coeff(basis).matrix()[(0, 0)] == c(z, 0.0)
    }

    #[test]
    fn table_entries() {
        assert!(is_exactly(&ito_mul(&scalar(DB(0), 1.0), &scalar(DBdag(0), 1.0)).unwrap(), Dt, 1.0));
        assert_eq!(ito_mul(&scalar(DBdag(0), 1.0), &scalar(DB(0), 1.0)).unwrap().terms().count(), 0);
        assert!(is_exactly(&ito_mul(&scalar(DLambda(0, 0), 1.0), &scalar(DLambda(0, 0), 1.0)).unwrap(), DLambda(0, 0), 1.0));
        assert!(is_exactly(&ito_mul(&scalar(DB(0), 1.0), &scalar(DLambda(0, 0), 1.0)).unwrap(), DB(0), 1.0));
        assert!(is_exactly(&ito_mul(&scalar(DLambda(0, 0), 1.0), &scalar(DBdag(0), 1.0)).unwrap(), DBdag(0), 1.0));
        for b in [Dt, DB(0), DBdag(0), DLambda(0, 0)] {
            assert_eq!(ito_mul(&scalar(Dt, 1.0), &scalar(b, 1.0)).unwrap().terms().count(), 0);
            assert_eq!(ito_mul(&scalar(b, 1.0), &scalar(Dt, 1.0)).unwrap().terms().count(), 0);
        }
    }

    #[test]
    fn multichannel_table() {
        let e = |b| ItoExpr::scalar_term(2, 1, b, c(1.0, 0.0)).unwrap();
        assert!(ito_mul(&e(DB(0)), &e(DBdag(1))).unwrap().pruned().terms().count() == 0);
        let prod = ito_mul(&e(DLambda(0, 1)), &e(DLambda(1, 0))).unwrap();
        assert_eq!(prod.coeff(DLambda(0, 0)).matrix()[(0, 0)], c(1.0, 0.0));
        assert!(ItoExpr::scalar_term(2, 1, DB(2), c(1.0, 0.0)).is_err());
    }

    #[test]
    fn product_of_constants_is_zero() {
        let id = Operator::identity(2);
        let zero = ItoExpr::zero(1, 2);
        assert_eq!(ito_product(&id, &zero, &id, &zero).unwrap().terms().count(), 0);
    }

    #[test]
    fn emission_absorption_generator() {
        let l = Operator::lowering();
        let h = Operator::pauli_x();
        let slh = SlhTriple::emission_absorption(l.clone(), h.clone()).unwrap();
        let g = hp_increment(&slh);
        assert_eq!(g.coeff(DBdag(0)), l);
        assert_eq!(g.coeff(DB(0)), -l.adjoint());
        let expected_dt = -(&(&l.adjoint() * &l).scale_re(0.5) + &h.scale(I));
        assert!(g.coeff(Dt).distance(&expected_dt) < 1e-15);
        assert_eq!(g.coeff(DLambda(0, 0)).max_abs(), 0.0);
    }

    #[test]
    fn schrodinger_and_scattering_limits() {
        let h = Operator::pauli_z();
        let slh = SlhTriple::emission_absorption(Operator::zeros(2), h.clone()).unwrap();
        let g = hp_increment(&slh);
        assert_eq!(g.terms().count(), 1);
        assert_eq!(g.coeff(Dt), h.scale(-I));

        let s = scattering_from_e(&Operator::pauli_x()).unwrap();
        let slh = SlhTriple::new(vec![vec![s.clone()]], vec![Operator::zeros(2)], Operator::zeros(2)).unwrap();
        let g = hp_increment(&slh);
        assert_eq!(g.terms().count(), 1);
        assert!(g.coeff(DLambda(0, 0)).distance(&(&s - &Operator::identity(2))) < 1e-15);
    }

    #[test]
    fn heisenberg_of_identity_vanishes() {
        let slh = SlhTriple::emission_absorption(Operator::lowering(), Operator::pauli_y()).unwrap();
        let d = heisenberg_increment(&slh, &Operator::identity(2)).unwrap();
        assert!(d.max_coeff_norm() < 1e-15);
    }

    #[test]
    fn heisenberg_decay_of_sigma_z() {
        let slh = SlhTriple::emission_absorption(Operator::lowering(), Operator::zeros(2)).unwrap();
        let sz = Operator::pauli_z();
        let d = heisenberg_increment(&slh, &sz).unwrap();
        let expected_dt = -(&sz + &Operator::identity(2));
        assert!(d.coeff(Dt).distance(&expected_dt) < 1e-15);
        let comm = crate::operator::commutator(&sz, &Operator::lowering()).unwrap();
        assert!(d.coeff(DBdag(0)).distance(&comm) < 1e-15);
    }

    #[test]
    fn pure_scattering_heisenberg() {
        let s = scattering_from_e(&Operator::pauli_y().scale_re(0.8).into_hermitian().unwrap()).unwrap();
        let slh = SlhTriple::new(vec![vec![s.clone()]], vec![Operator::zeros(2)], Operator::zeros(2)).unwrap();
        let x = Operator::pauli_z();
        let d = heisenberg_increment(&slh, &x).unwrap();
        let expected = &(&s.adjoint() * &x) * &s - x.clone();
        assert!(d.coeff(DLambda(0, 0)).distance(&expected) < 1e-14);
        for b in [Dt, DB(0), DBdag(0)] {
            assert!(d.coeff(b).max_abs() < 1e-14);
        }
    }

    #[test]
    fn corrupted_generator_is_detected() {
        let slh = SlhTriple::emission_absorption(Operator::lowering(), Operator::pauli_x()).unwrap();
        let mut g = hp_increment(&slh);
        assert!(unitarity_defect_of(&g) < 1e-15);
        let eps = 1e-3;
        g.add_term(Dt, Operator::identity(2).scale_re(eps)).unwrap();
        let defect = unitarity_defect_of(&g);
        // A hermitian corruption C adds C + C* to the dt coefficient.
        assert!(defect >= eps && defect <= 2.0 * eps + 1e-15, "defect {defect}");
    }

    #[test]
    fn outputs() {
        let slh = SlhTriple::emission_absorption(Operator::zeros(2), Operator::zeros(2)).unwrap();
        let out = output_increment(&slh);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].terms().count(), 1);
        assert_eq!(out[0].coeff(DB(0)), Operator::identity(2));

        let s = scattering_from_e(&Operator::pauli_x()).unwrap();
        let slh = SlhTriple::new(vec![vec![s.clone()]], vec![Operator::zeros(2)], Operator::zeros(2)).unwrap();
        assert_eq!(output_increment(&slh)[0].coeff(DB(0)), s);
    }

    #[test]
    fn cayley_examples() {
        let s = scattering_from_e(&Operator::zeros(2)).unwrap();
        assert_eq!(s.matrix(), Operator::identity(2).matrix());
        let e = Operator::diag(&[2.0]).unwrap();
        let s = scattering_from_e(&e).unwrap();
        assert!((s.matrix()[(0, 0)] - I).norm() < 1e-15);
        assert!(scattering_from_e(&Operator::lowering()).is_err());
    }

    #[test]
    fn quadrature_commutator_values() {
        assert_eq!(quadrature_commutator(1.0, 1.0), c(0.0, 2.0));
        assert_eq!(quadrature_commutator(0.7, 0.0), c(0.0, 0.0));
        assert_eq!(quadrature_commutator(0.3, 0.9), quadrature_commutator(0.9, 0.3));
        assert_eq!(quadrature_commutator(0.3, 0.9), c(0.0, 0.6));
    }

    #[test]
    fn vacuum_overlap() {
        let zero = ComplexGridFunction::from_fn(-1.0, 1.0, 64, |_| c(0.0, 0.0)).unwrap();
        let beta = ComplexGridFunction::from_fn(-1.0, 1.0, 64, |x| c(x, 1.0 - x * x)).unwrap();
        assert_eq!(exp_vector_inner(&zero, &zero).unwrap(), c(1.0, 0.0));
        assert_eq!(exp_vector_inner(&zero, &beta).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn slh_validation() {
        let not_unitary = vec![vec![Operator::identity(2).scale_re(2.0)]];
        assert!(SlhTriple::new(not_unitary, vec![Operator::zeros(2)], Operator::zeros(2)).is_err());
        assert!(SlhTriple::emission_absorption(Operator::zeros(2), Operator::lowering()).is_err());
        assert!(SlhTriple::emission_absorption(Operator::zeros(3), Operator::zeros(2)).is_err());
    }
}
