//! Finite-dimensional operator algebra.
//!
//! Operators are dense complex square matrices carrying optional structural
//! tags (hermitian, unitary, projection). Tags are only ever attached by the
//! checked constructors, so a tagged operator is guaranteed to satisfy the
//! corresponding property within [`TOL_HERM`]. Arithmetic drops the tags.
//!
//! Basis convention for two-level systems: index 0 is the excited state `|e⟩`,
//! index 1 the ground state `|g⟩`. Hence `σ_z = diag(+1, −1)` and the lowering
//! operator is `σ₋ = |g⟩⟨e|`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const TOL_HERM: f64 = 1e-10;
pub const TOL_NORM: f64 = 1e-10;
pub const TOL_SPEC: f64 = 1e-8;
pub const P_FLOOR: f64 = 1e-12;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Structural properties an operator has been verified to satisfy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tags {
    pub hermitian: bool,
    pub unitary: bool,
    pub projection: bool,
}

/// Equality compares matrices only; tags are derived data.
#[derive(Clone)]
pub struct Operator {
    m: CMatrix,
    tags: Tags,
}

impl PartialEq for Operator {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m
    }
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Operator").field("tags", &self.tags).field("m", &self.m).finish()
    }
}

/// Largest entry modulus, `‖A‖_max`.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

impl Operator {
    /// Untagged operator from a square matrix.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Structural(format!(
                "operator must be a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { m, tags: Tags::default() })
    }

    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        Self { m, tags: Tags::default() }
    }

    pub fn from_rows(rows: &[&[C64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Structural("rows must form a square matrix".into()));
        }
        Self::new(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Structural("rows must form a square matrix".into()));
        }
        Self::new(CMatrix::from_fn(n, n, |i, j| c(rows[i][j], 0.0)))
    }

    pub fn diag(entries: &[f64]) -> Result<Self> {
        let m = CMatrix::from_diagonal(&CVector::from_iterator(
            entries.len(),
            entries.iter().map(|&x| c(x, 0.0)),
        ));
        Self::new(m)?.into_hermitian()
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: CMatrix::identity(dim, dim),
            tags: Tags { hermitian: true, unitary: true, projection: true },
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: CMatrix::zeros(dim, dim),
            tags: Tags { hermitian: true, unitary: false, projection: true },
        }
    }

    /// Checked constructor: tags the matrix hermitian or fails.
    pub fn hermitian(m: CMatrix) -> Result<Self> {
        Self::new(m)?.into_hermitian()
    }

    pub fn unitary(m: CMatrix) -> Result<Self> {
        Self::new(m)?.into_unitary()
    }

    pub fn projection(m: CMatrix) -> Result<Self> {
        Self::new(m)?.into_projection()
    }

    pub fn into_hermitian(mut self) -> Result<Self> {
        let defect = hermiticity_defect(&self.m);
        if defect > TOL_HERM {
            return Err(Error::Structural(format!("not hermitian (defect {defect:e})")));
        }
        self.tags.hermitian = true;
        Ok(self)
    }

    pub fn into_unitary(mut self) -> Result<Self> {
        let n = self.dim();
        let defect = max_abs(&(self.m.adjoint() * &self.m - CMatrix::identity(n, n)));
        if defect > TOL_HERM {
            return Err(Error::Structural(format!("not unitary (defect {defect:e})")));
        }
        self.tags.unitary = true;
        Ok(self)
    }

    pub fn into_projection(self) -> Result<Self> {
        let mut op = self.into_hermitian()?;
        let defect = max_abs(&(&op.m * &op.m - &op.m));
        if defect > TOL_HERM {
            return Err(Error::Structural(format!("not idempotent (defect {defect:e})")));
        }
        op.tags.projection = true;
        Ok(op)
    }

    /// Replaces the matrix by `(A + A†)/2` and tags it hermitian. For results
    /// that are hermitian in exact arithmetic but carry rounding noise.
    pub fn hermitian_part(&self) -> Self {
        let m = (&self.m + self.m.adjoint()) * c(0.5, 0.0);
        Self { m, tags: Tags { hermitian: true, ..Tags::default() } }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn tags(&self) -> Tags {
        self.tags
    }

    pub fn is_hermitian(&self) -> bool {
        self.tags.hermitian
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint(), tags: self.tags }
    }

    pub fn scale(&self, z: C64) -> Self {
        Self::from_matrix_unchecked(&self.m * z)
    }

    pub fn scale_re(&self, x: f64) -> Self {
        let mut tags = Tags::default();
        tags.hermitian = self.tags.hermitian;
        Self { m: &self.m * c(x, 0.0), tags }
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.m)
    }

    /// `‖A − B‖_max`.
    pub fn distance(&self, other: &Operator) -> f64 {
        max_abs(&(&self.m - &other.m))
    }

    pub fn apply(&self, ket: &Ket) -> Result<Ket> {
        check_dim(self.dim(), ket.dim())?;
        Ok(Ket::new(&self.m * &ket.amps))
    }

    /// `⟨ψ|A|ψ⟩` (no normalization applied).
    pub fn sandwich(&self, ket: &Ket) -> Result<C64> {
        check_dim(self.dim(), ket.dim())?;
        Ok(ket.amps.dotc(&(&self.m * &ket.amps)))
    }

    /// `tr(A ρ)`.
    pub fn expectation_in(&self, rho: &Operator) -> Result<C64> {
        check_dim(self.dim(), rho.dim())?;
        Ok((&self.m * &rho.m).trace())
    }

    pub fn ket_bra(ket: &Ket, bra: &Ket) -> Result<Self> {
        check_dim(ket.dim(), bra.dim())?;
        Ok(Self::from_matrix_unchecked(&ket.amps * bra.amps.adjoint()))
    }

    /// `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`, tagged hermitian.
    pub fn density_of(ket: &Ket) -> Self {
        let n2 = ket.norm_sq();
        let m = &ket.amps * ket.amps.adjoint() * c(1.0 / n2, 0.0);
        Self::from_matrix_unchecked(m).hermitian_part()
    }

    pub fn pauli_x() -> Self {
        Self::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
            .and_then(Self::into_hermitian)
            .and_then(Self::into_unitary)
            .expect("pauli x")
    }

    pub fn pauli_y() -> Self {
        Self::from_rows(&[&[c(0.0, 0.0), c(0.0, -1.0)], &[c(0.0, 1.0), c(0.0, 0.0)]])
            .and_then(Self::into_hermitian)
            .and_then(Self::into_unitary)
            .expect("pauli y")
    }

    pub fn pauli_z() -> Self {
        Self::diag(&[1.0, -1.0]).and_then(Self::into_unitary).expect("pauli z")
    }

    /// `σ₋ = |g⟩⟨e|`.
    pub fn lowering() -> Self {
        Self::from_real_rows(&[&[0.0, 0.0], &[1.0, 0.0]]).expect("lowering")
    }

    /// `σ₊ = |e⟩⟨g|`.
    pub fn raising() -> Self {
        Self::lowering().adjoint()
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn check_same_dim(ops: &[&Operator]) -> Result<usize> {
    let dim = ops.first().map(|o| o.dim()).unwrap_or(0);
    for op in ops {
        check_dim(dim, op.dim())?;
    }
    Ok(dim)
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator::from_matrix_unchecked(&self.m + &rhs.m)
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator::from_matrix_unchecked(self.m + rhs.m)
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        self.m += &rhs.m;
        self.tags = Tags::default();
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator::from_matrix_unchecked(&self.m - &rhs.m)
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator::from_matrix_unchecked(self.m - rhs.m)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator::from_matrix_unchecked(&self.m * &rhs.m)
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        Operator::from_matrix_unchecked(self.m * rhs.m)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator::from_matrix_unchecked(-&self.m)
    }
}

impl Neg for Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator::from_matrix_unchecked(-self.m)
    }
}

/// A state vector, possibly unnormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Ket {
    amps: CVector,
    normalized: bool,
}

impl Ket {
    /// Unnormalized ket.
    pub fn new(amps: CVector) -> Self {
        Self { amps, normalized: false }
    }

    pub fn from_slice(amps: &[C64]) -> Self {
        Self::new(CVector::from_column_slice(amps))
    }

    /// Checked constructor for a unit vector.
    pub fn normalized(amps: CVector) -> Result<Self> {
        let norm = amps.norm();
        if (norm - 1.0).abs() > TOL_NORM {
            return Err(Error::Precondition(format!("ket norm is {norm}, expected 1")));
        }
        Ok(Self { amps, normalized: true })
    }

    /// Divides by the norm.
    pub fn normalize(amps: CVector) -> Result<Self> {
        let norm = amps.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Precondition("cannot normalize a zero vector".into()));
        }
        Ok(Self { amps: amps / c(norm, 0.0), normalized: true })
    }

    /// Basis vector `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = CVector::zeros(dim);
        amps[index] = c(1.0, 0.0);
        Self { amps, normalized: true }
    }

    /// `|e⟩` of a two-level system.
    pub fn excited() -> Self {
        Self::basis(2, 0)
    }

    /// `|g⟩` of a two-level system.
    pub fn ground() -> Self {
        Self::basis(2, 1)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn inner(&self, other: &Ket) -> Result<C64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.amps.dotc(&other.amps))
    }

    pub(crate) fn require_normalized(&self) -> Result<()> {
        let norm = self.norm();
        if (norm - 1.0).abs() > TOL_NORM {
            return Err(Error::Precondition(format!("ket must be normalized (norm {norm})")));
        }
        Ok(())
    }
}

/// Eigenvalues with their eigenprojections, `A = Σ a P_a`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub projections: Vec<Operator>,
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> Operator {
        self.resum(|a| c(a, 0.0))
    }

    /// `Σ f(a) P_a`.
    pub fn resum(&self, f: impl Fn(f64) -> C64) -> Operator {
        let dim = self.projections[0].dim();
        let mut m = CMatrix::zeros(dim, dim);
        for (a, p) in self.eigenvalues.iter().zip(&self.projections) {
            m += p.matrix() * f(*a);
        }
        Operator::from_matrix_unchecked(m)
    }

    /// `e^{itA} = Σ e^{ita} P_a`.
    pub fn exp_i(&self, t: f64) -> Operator {
        self.resum(|a| (I * (t * a)).exp())
    }
}

/// Default merging tolerance for numerically degenerate eigenvalues,
/// `1e-8·‖A‖` with `‖A‖` the spectral norm.
pub fn default_degeneracy_tol(a: &Operator) -> f64 {
    let spectral_norm = a.matrix().clone().singular_values().max();
    1e-8 * spectral_norm
}

/// Spectral decomposition of a hermitian operator. Eigenvalues come back in
/// ascending order; neighbours closer than `degeneracy_tol` share one
/// projection and are reported by their mean.
pub fn spectral_decompose(a: &Operator, degeneracy_tol: f64) -> Result<SpectralDecomposition> {
    if !a.is_hermitian() {
        return Err(Error::Structural("spectral decomposition requires a hermitian operator".into()));
    }
    let dim = a.dim();
    let eig = a.matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &idx in &order {
        match groups.last_mut() {
            Some(g) if eig.eigenvalues[idx] - eig.eigenvalues[*g.last().unwrap()] <= degeneracy_tol => {
                g.push(idx)
            }
            _ => groups.push(vec![idx]),
        }
    }

    let mut eigenvalues = Vec::with_capacity(groups.len());
    let mut projections = Vec::with_capacity(groups.len());
    for g in groups {
        let mean = g.iter().map(|&i| eig.eigenvalues[i]).sum::<f64>() / g.len() as f64;
        let mut p = CMatrix::zeros(dim, dim);
        for &i in &g {
            let v = eig.eigenvectors.column(i);
            p += v * v.adjoint();
        }
        eigenvalues.push(mean);
        let p = Operator::from_matrix_unchecked(p).hermitian_part();
        projections.push(Operator { tags: Tags { hermitian: true, unitary: false, projection: true }, ..p });
    }
    Ok(SpectralDecomposition { eigenvalues, projections })
}

/// Outcome probabilities `p_a = ‖P_a ψ‖²`, paired with their eigenvalue and
/// listed in ascending eigenvalue order.
pub fn measurement_probabilities(a: &Operator, psi: &Ket) -> Result<Vec<(f64, f64)>> {
    psi.require_normalized()?;
    check_dim(a.dim(), psi.dim())?;
    let spec = spectral_decompose(a, default_degeneracy_tol(a))?;
    Ok(spec
        .eigenvalues
        .iter()
        .zip(&spec.projections)
        .map(|(&val, p)| (val, (p.matrix() * psi.amplitudes()).norm_squared()))
        .collect())
}

/// Projection postulate: `P ψ / ‖P ψ‖`.
pub fn project_postulate(psi: &Ket, p: &Operator) -> Result<Ket> {
    psi.require_normalized()?;
    if !p.tags().projection {
        return Err(Error::Structural("projection postulate needs a projection operator".into()));
    }
    let projected = p.apply(psi)?;
    let prob = projected.norm_sq();
    if prob < P_FLOOR {
        return Err(Error::ZeroProbability { probability: prob });
    }
    Ket::normalize(projected.amps)
}

/// `[A, B] = AB − BA`.
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    check_dim(a.dim(), b.dim())?;
    Ok(Operator::from_matrix_unchecked(a.matrix() * b.matrix() - b.matrix() * a.matrix()))
}

/// `{A, B} = AB + BA`.
pub fn anticommutator(a: &Operator, b: &Operator) -> Result<Operator> {
    check_dim(a.dim(), b.dim())?;
    Ok(Operator::from_matrix_unchecked(a.matrix() * b.matrix() + b.matrix() * a.matrix()))
}

pub fn is_compatible(a: &Operator, b: &Operator, tol: f64) -> Result<bool> {
    Ok(commutator(a, b)?.max_abs() <= tol)
}

fn check_generator_dims(ls: &[Operator], h: &Operator, x: &Operator) -> Result<()> {
    check_dim(h.dim(), x.dim())?;
    for l in ls {
        check_dim(h.dim(), l.dim())?;
    }
    Ok(())
}

/// Lindblad generator in the Heisenberg picture,
/// `𝓛X = Σ_k ½L_k*[X, L_k] + ½[L_k*, X]L_k − i[X, H]`.
pub fn lindblad_apply(ls: &[Operator], h: &Operator, x: &Operator) -> Result<Operator> {
    check_generator_dims(ls, h, x)?;
    let xm = x.matrix();
    let mut out = (xm * h.matrix() - h.matrix() * xm) * (-I);
    for l in ls {
        let lm = l.matrix();
        let ld = lm.adjoint();
        let comm_xl = xm * lm - lm * xm;
        let comm_ldx = &ld * xm - xm * &ld;
        out += (&ld * comm_xl + comm_ldx * lm) * c(0.5, 0.0);
    }
    let result = Operator::from_matrix_unchecked(out);
    Ok(if x.is_hermitian() { result.hermitian_part() } else { result })
}

/// Schrödinger-picture generator,
/// `𝓛*ρ = Σ_k L_k ρ L_k* − ½{L_k*L_k, ρ} − i[H, ρ]`.
pub fn lindblad_adjoint_apply(ls: &[Operator], h: &Operator, rho: &Operator) -> Result<Operator> {
    check_generator_dims(ls, h, rho)?;
    let rm = rho.matrix();
    let mut out = (h.matrix() * rm - rm * h.matrix()) * (-I);
    for l in ls {
        let lm = l.matrix();
        let ld = lm.adjoint();
        let ldl = &ld * lm;
        out += lm * rm * &ld - (&ldl * rm + rm * &ldl) * c(0.5, 0.0);
    }
    let result = Operator::from_matrix_unchecked(out);
    Ok(if rho.is_hermitian() { result.hermitian_part() } else { result })
}

/// Matrix of a linear map on `dim × dim` operators, acting on column-stacked
/// vectorizations.
pub fn superoperator_matrix(dim: usize, map: impl Fn(&Operator) -> Operator) -> CMatrix {
    let n2 = dim * dim;
    let mut sup = CMatrix::zeros(n2, n2);
    for col in 0..n2 {
        let mut e = CMatrix::zeros(dim, dim);
        e[(col % dim, col / dim)] = c(1.0, 0.0);
        let image = map(&Operator::from_matrix_unchecked(e));
        for (row, z) in image.matrix().iter().enumerate() {
            sup[(row, col)] = *z;
        }
    }
    sup
}

/// `exp(t·𝓚)` applied to `X`, for a superoperator matrix `𝓚`.
pub fn apply_superoperator_exp(sup: &CMatrix, t: f64, x: &Operator) -> Operator {
    let dim = x.dim();
    let flow = (sup * c(t, 0.0)).exp();
    let v = CVector::from_iterator(dim * dim, x.matrix().iter().copied());
    let out = flow * v;
    Operator::from_matrix_unchecked(CMatrix::from_column_slice(dim, dim, out.as_slice()))
}

#[derive(Serialize, Deserialize)]
struct OperatorJson {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl Serialize for Operator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        let rows = |f: fn(&C64) -> f64| -> Vec<Vec<f64>> {
            (0..n).map(|i| (0..n).map(|j| f(&self.m[(i, j)])).collect()).collect()
        };
        OperatorJson { dim: n, re: rows(|z| z.re), im: rows(|z| z.im) }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Operator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = OperatorJson::deserialize(d)?;
        let n = raw.dim;
        let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if n == 0 || !shape_ok(&raw.re) || !shape_ok(&raw.im) {
            return Err(D::Error::custom(format!("operator arrays must be {n}x{n}")));
        }
        let m = CMatrix::from_fn(n, n, |i, j| c(raw.re[i][j], raw.im[i][j]));
        let op = Operator::from_matrix_unchecked(m);
        // Tag opportunistically so hermitian inputs can feed spectral routines.
        Ok(op.clone().into_hermitian().unwrap_or(op))
    }
}

#[derive(Serialize, Deserialize)]
struct KetJson {
    dim: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Serialize for Ket {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        KetJson {
            dim: self.dim(),
            re: self.amps.iter().map(|z| z.re).collect(),
            im: self.amps.iter().map(|z| z.im).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ket {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = KetJson::deserialize(d)?;
        if raw.dim == 0 || raw.re.len() != raw.dim || raw.im.len() != raw.dim {
            return Err(D::Error::custom(format!("ket arrays must have length {}", raw.dim)));
        }
        let amps = CVector::from_iterator(raw.dim, raw.re.iter().zip(&raw.im).map(|(&r, &i)| c(r, i)));
        let normalized = (amps.norm() - 1.0).abs() <= TOL_NORM;
        Ok(Ket { amps, normalized })
    }
}
