use filterlab::belavkin::EmissionAbsorptionModel;
use filterlab::operator::{c, commutator, lindblad_apply, CMatrix, I};
use filterlab::qsc::{
    exp_vector_inner, heisenberg_increment, hp_increment, ito_mul, ito_product, output_increment, quadrature,
    quadrature_commutator, scattering_from_e, unitarity_defect,
};
use filterlab::{ComplexGridFunction, IncrementBasis as Inc, ItoExpr, Operator, SlhTriple};
use proptest::prelude::*;

fn all_bases(n: usize) -> Vec<Inc> {
    let mut v = vec![Inc::Dt];
    for j in 0..n {
        v.push(Inc::DB(j));
        v.push(Inc::DBdag(j));
        for k in 0..n {
            v.push(Inc::DLambda(j, k));
        }
    }
    v
}

/// Integer-entry coefficients keep every product exact in floating point.
fn arb_integer_expr(n: usize, dim: usize) -> impl Strategy<Value = ItoExpr> {
    let bases = all_bases(n);
    let k = bases.len();
    prop::collection::vec(prop::collection::vec((-3i32..=3, -3i32..=3), dim * dim), k).prop_map(move |coeffs| {
        let mut e = ItoExpr::zero(n, dim);
        for (b, entries) in bases.iter().zip(coeffs) {
            let m = CMatrix::from_fn(dim, dim, |i, j| {
                let (re, im) = entries[i * dim + j];
                c(re as f64, im as f64)
            });
            e.add_term(*b, Operator::new(m).unwrap()).unwrap();
        }
        e
    })
}

fn matrix(d: usize, v: &[(f64, f64)]) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| c(v[i * d + j].0, v[i * d + j].1))
}

fn hermitian(d: usize, v: &[(f64, f64)]) -> Operator {
    let m = matrix(d, v);
    Operator::hermitian((&m + m.adjoint()) * c(0.5, 0.0)).unwrap()
}

fn entries(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.5..1.5f64, -1.5..1.5f64), n)
}

/// Random SLH model: `S` is the Cayley transform of a random hermitian on the
/// `n·d`-dimensional space, cut into `d × d` blocks.
fn arb_slh() -> impl Strategy<Value = SlhTriple> {
    (2..=4usize, 1..=2usize, any::<bool>()).prop_flat_map(|(d, n, scatter)| {
        (entries(n * d * n * d), prop::collection::vec(entries(d * d), n), entries(d * d)).prop_map(
            move |(e, ls, h)| {
                let blocks: Vec<Vec<Operator>> = if scatter {
                    let big = scattering_from_e(&hermitian(n * d, &e)).unwrap();
                    (0..n)
                        .map(|j| {
                            (0..n)
                                .map(|k| Operator::new(big.matrix().view((j * d, k * d), (d, d)).into_owned()).unwrap())
                                .collect()
                        })
                        .collect()
                } else {
                    (0..n)
                        .map(|j| (0..n).map(|k| if j == k { Operator::identity(d) } else { Operator::zeros(d) }).collect())
                        .collect()
                };
                let ls = ls.iter().map(|l| Operator::new(matrix(d, l)).unwrap()).collect();
                SlhTriple::new(blocks, ls, hermitian(d, &h)).unwrap()
            },
        )
    })
}

/// Heisenberg-Langevin increment written out term by term from the unitary's
/// QSDE. The commutators are `[X, L_l]` and `[L_l*, X]`.
fn heisenberg_oracle(slh: &SlhTriple, x: &Operator) -> ItoExpr {
    let n = slh.n_channels();
    let d = slh.dim();
    let mut e = ItoExpr::zero(n, d);
    for j in 0..n {
        for k in 0..n {
            let mut coeff = Operator::zeros(d);
            for l in 0..n {
                coeff += &(&(&slh.s[l][j].adjoint() * x) * &slh.s[l][k]);
            }
            if j == k {
                coeff = &coeff - x;
            }
            e.add_term(Inc::DLambda(j, k), coeff).unwrap();
        }
    }
    for j in 0..n {
        let mut coeff = Operator::zeros(d);
        for l in 0..n {
            coeff += &(&slh.s[l][j].adjoint() * &commutator(x, &slh.l[l]).unwrap());
        }
        e.add_term(Inc::DBdag(j), coeff).unwrap();
    }
    for k in 0..n {
        let mut coeff = Operator::zeros(d);
        for l in 0..n {
            coeff += &(&commutator(&slh.l[l].adjoint(), x).unwrap() * &slh.s[l][k]);
        }
        e.add_term(Inc::DB(k), coeff).unwrap();
    }
    e.add_term(Inc::Dt, lindblad_apply(&slh.l, &slh.h, x).unwrap()).unwrap();
    e
}

fn arb_slh_and_pair() -> impl Strategy<Value = (SlhTriple, Operator, Operator)> {
    arb_slh().prop_flat_map(|slh| {
        let d = slh.dim();
        (Just(slh), entries(d * d), entries(d * d))
            .prop_map(move |(s, x, y)| (s, Operator::new(matrix(d, &x)).unwrap(), Operator::new(matrix(d, &y)).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ito_table_is_associative(
        (a, b, cc) in (1..=2usize, 1..=3usize).prop_flat_map(|(n, d)| (
            arb_integer_expr(n, d), arb_integer_expr(n, d), arb_integer_expr(n, d),
        ))
    ) {
        let left = ito_mul(&ito_mul(&a, &b).unwrap(), &cc).unwrap().pruned();
        let right = ito_mul(&a, &ito_mul(&b, &cc).unwrap()).unwrap().pruned();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn random_slh_models_are_unitary(slh in arb_slh()) {
        prop_assert!(unitarity_defect(&slh) <= 1e-10);
    }

    #[test]
    fn heisenberg_increment_obeys_leibniz((slh, x, y) in arb_slh_and_pair()) {
        let dx = heisenberg_increment(&slh, &x).unwrap();
        let dy = heisenberg_increment(&slh, &y).unwrap();
        let dxy = heisenberg_increment(&slh, &(&x * &y)).unwrap();
        let product = ito_product(&x, &dx, &y, &dy).unwrap();
        prop_assert!(dxy.distance(&product) <= 1e-10, "{}", dxy.distance(&product));
    }

    #[test]
    fn heisenberg_increment_matches_termwise_expansion((slh, x, _y) in arb_slh_and_pair()) {
        let got = heisenberg_increment(&slh, &x).unwrap();
        let oracle = heisenberg_oracle(&slh, &x);
        prop_assert!(got.distance(&oracle) <= 1e-10, "{}", got.distance(&oracle));
    }

    #[test]
    fn drift_is_the_lindblad_generator((slh, x, _y) in arb_slh_and_pair()) {
        let plain = SlhTriple::new(
            (0..slh.n_channels())
                .map(|j| (0..slh.n_channels()).map(|k| if j == k { Operator::identity(slh.dim()) } else { Operator::zeros(slh.dim()) }).collect())
                .collect(),
            slh.l.clone(),
            slh.h.clone(),
        ).unwrap();
        let dt = heisenberg_increment(&plain, &x).unwrap().coeff(Inc::Dt);
        prop_assert!(dt.distance(&lindblad_apply(&plain.l, &plain.h, &x).unwrap()) <= 1e-12);
    }

    #[test]
    fn cayley_transform_is_unitary(e in entries(9)) {
        let s = scattering_from_e(&hermitian(3, &e)).unwrap();
        let defect = (s.matrix().adjoint() * s.matrix() - CMatrix::identity(3, 3)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(defect <= 1e-12);
    }
}

fn scalar(b: Inc, z: f64) -> ItoExpr {
    ItoExpr::scalar_term(1, 1, b, c(z, 0.0)).unwrap()
}

#[test]
fn classical_embeddings_are_coefficient_identities() {
    let dq = scalar(Inc::DB(0), 1.0).add(&scalar(Inc::DBdag(0), 1.0)).unwrap();
    assert_eq!(ito_mul(&dq, &dq).unwrap().pruned(), scalar(Inc::Dt, 1.0));

    let nu: f64 = 2.25;
    let dn = scalar(Inc::DLambda(0, 0), 1.0)
        .add(&scalar(Inc::DBdag(0), nu.sqrt()))
        .unwrap()
        .add(&scalar(Inc::DB(0), nu.sqrt()))
        .unwrap()
        .add(&scalar(Inc::Dt, nu))
        .unwrap();
    let dn2 = ito_mul(&dn, &dn).unwrap().pruned();
    for b in all_bases(1) {
        assert_eq!(dn2.coeff(b), dn.coeff(b), "{}", b.label());
    }
}

#[test]
fn homodyne_output_drift_is_the_filter_quadrature() {
    let l = Operator::lowering().scale_re(0.8);
    let h = Operator::pauli_x().scale_re(1.3).into_hermitian().unwrap();
    let slh = SlhTriple::emission_absorption(l.clone(), h.clone()).unwrap();
    let dy = quadrature(&output_increment(&slh)[0]);
    let model = EmissionAbsorptionModel::new(l, h).unwrap();
    assert!(dy.coeff(Inc::Dt).distance(&model.quadrature_operator()) < 1e-15);
    assert_eq!(dy.coeff(Inc::DB(0)), Operator::identity(2));
    assert_eq!(dy.coeff(Inc::DBdag(0)), Operator::identity(2));
    // The record's Ito square is dt.
    let noise = ItoExpr::term(1, Inc::DB(0), Operator::identity(2))
        .unwrap()
        .add(&ItoExpr::term(1, Inc::DBdag(0), Operator::identity(2)).unwrap())
        .unwrap();
    let sq = ito_mul(&dy, &dy).unwrap().pruned();
    assert_eq!(sq, ito_mul(&noise, &noise).unwrap().pruned());
}

#[test]
fn scattering_only_output_is_rotated_input() {
    let s = scattering_from_e(&Operator::diag(&[0.7, -1.1]).unwrap().into_hermitian().unwrap()).unwrap();
    let slh = SlhTriple::new(vec![vec![s.clone()]], vec![Operator::zeros(2)], Operator::zeros(2)).unwrap();
    let out = &output_increment(&slh)[0];
    assert_eq!(out.coeff(Inc::DB(0)), s);
    assert_eq!(out.coeff(Inc::Dt), Operator::zeros(2));
    let g = hp_increment(&slh);
    assert!(g.coeff(Inc::DLambda(0, 0)).distance(&(&s - &Operator::identity(2))) < 1e-15);
}

#[test]
fn quadrature_commutator_is_symmetric_in_time() {
    for &(t, s) in &[(0.3, 1.7), (2.0, 0.5), (1.0, 1.0)] {
        assert_eq!(quadrature_commutator(t, s), quadrature_commutator(s, t));
        assert_eq!(quadrature_commutator(t, s), I * (2.0 * f64::min(t, s)));
    }
}

#[test]
fn gaussian_exponential_vectors() {
    let (lo, hi, n) = (-12.0, 12.0, 4096);
    let (a, m1, s1) = (c(0.7, -0.4), 0.5, 0.8);
    let (b, m2, s2) = (c(-0.3, 1.1), -0.9, 1.3);
    let alpha = ComplexGridFunction::from_fn(lo, hi, n, |x| a * (-(x - m1).powi(2) / (2.0 * s1 * s1)).exp()).unwrap();
    let beta = ComplexGridFunction::from_fn(lo, hi, n, |x| b * (-(x - m2).powi(2) / (2.0 * s2 * s2)).exp()).unwrap();
    let v = s1 * s1 + s2 * s2;
    let overlap = a.conj()
        * b
        * (2.0 * std::f64::consts::PI * s1 * s1 * s2 * s2 / v).sqrt()
        * (-(m1 - m2).powi(2) / (2.0 * v)).exp();
    let got = exp_vector_inner(&alpha, &beta).unwrap();
    assert!((got - overlap.exp()).norm() <= 1e-10 * overlap.exp().norm());

    let zero = ComplexGridFunction::from_fn(lo, hi, n, |_| c(0.0, 0.0)).unwrap();
    assert_eq!(exp_vector_inner(&zero, &zero).unwrap(), c(1.0, 0.0));
    assert_eq!(exp_vector_inner(&zero, &beta).unwrap(), c(1.0, 0.0));
}
