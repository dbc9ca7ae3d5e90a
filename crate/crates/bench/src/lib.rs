//! Fixtures shared by the benchmarks.

use filterlab::classical::kalman_bucy_stationary_variance;
use filterlab::operator::{c, CMatrix};
use filterlab::{DiffusionSpec, EmissionAbsorptionModel, GridDensity, IncrementBasis, ItoExpr, ObservationModel, Operator};

pub fn qubit_model() -> EmissionAbsorptionModel {
    EmissionAbsorptionModel::qubit_decay(1.0, 1.0).expect("valid qubit model")
}

/// Linear benchmark signal with its stationary prior on `n` cells.
pub fn linear_benchmark(n: usize) -> (DiffusionSpec, ObservationModel, GridDensity) {
    let var0 = kalman_bucy_stationary_variance(1.0, 0.0, 0.5);
    let half = 8.0 * var0.sqrt();
    let prior = GridDensity::gaussian_on(0.0, var0, -half, half, n).expect("valid grid");
    (DiffusionSpec::linear(1.0, 0.5, 0.0), ObservationModel::linear(1.0), prior)
}

/// Deterministic dense hermitian matrix.
pub fn hermitian(dim: usize) -> Operator {
    let m = CMatrix::from_fn(dim, dim, |i, j| {
        let (a, b) = (i.min(j) as f64, i.max(j) as f64);
        let im = if i < j { 0.3 } else if i > j { -0.3 } else { 0.0 };
        c((1.0 + a * b).sin() + if i == j { a } else { 0.0 }, im * (a + 1.0) / (b + 1.0))
    });
    Operator::hermitian(m).expect("hermitian by construction")
}

/// Expression with every increment present on `n` channels.
pub fn full_expr(n: usize, dim: usize) -> ItoExpr {
    let mut e = ItoExpr::zero(n, dim);
    let mut push = |b| e.add_term(b, hermitian(dim)).expect("matching dims");
    push(IncrementBasis::Dt);
    for j in 0..n {
        push(IncrementBasis::DB(j));
        push(IncrementBasis::DBdag(j));
        for k in 0..n {
            push(IncrementBasis::DLambda(j, k));
        }
    }
    e
}
