use filterlab::grid::gaussian_pdf;
use filterlab::sde::{
    chapman_kolmogorov_check, euler_maruyama, euler_maruyama_driven, fokker_planck_evolve, fokker_planck_stable_dt,
    generator_apply, ito_integral, random_walk, wiener_increments, wiener_path, TestFunction,
};
use filterlab::{DiffusionSpec, GridDensity, RngStream};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn wiener_terminal_moments() {
    let w1: Vec<f64> = (0..10_000).map(|i| wiener_path(1.0, 1e-2, RngStream::new(21, i)).unwrap().last()).collect();
    let (m, v) = mean_var(&w1);
    assert!(m.abs() <= 4.0 / 100.0, "mean {m}");
    assert!((v - 1.0).abs() <= 0.05, "variance {v}");
}

#[test]
fn random_walk_variance() {
    let x: Vec<f64> = (0..10_000).map(|i| *random_walk(100, RngStream::new(22, i)).last().unwrap() as f64).collect();
    let (m, v) = mean_var(&x);
    assert!(m.abs() <= 4.0 * (100.0f64 / 10_000.0).sqrt());
    assert!((v - 100.0).abs() <= 5.0, "variance {v}");
}

#[test]
fn random_walk_mgf_approaches_gaussian_limit() {
    let (u, dt): (f64, f64) = (0.5, 1e-3);
    let steps = (1.0 / dt) as usize;
    let samples: Vec<f64> = (0..10_000)
        .map(|i| {
            let x = *random_walk(steps, RngStream::new(23, i)).last().unwrap() as f64;
            (u * x * dt.sqrt()).exp()
        })
        .collect();
    let (m, v) = mean_var(&samples);
    let se = (v / samples.len() as f64).sqrt();
    let limit = (0.5 * u * u).exp();
    assert!((m - limit).abs() <= 3.0 * se, "{m} vs {limit} (se {se})");
}

#[test]
fn quadratic_variation_of_wiener() {
    for i in 0..5 {
        let w = wiener_path(1.0, 1e-4, RngStream::new(24, i)).unwrap();
        let qv: f64 = w.increments().map(|d| d * d).sum();
        assert!((qv - 1.0).abs() <= 0.05, "path {i}: {qv}");
    }
}

#[test]
fn ito_integral_has_zero_mean() {
    let xs: Vec<f64> = (0..2000).map(|i| ito_integral(&wiener_path(1.0, 1e-3, RngStream::new(25, i)).unwrap())).collect();
    let (m, v) = mean_var(&xs);
    assert!(m.abs() <= 4.0 * (v / xs.len() as f64).sqrt());
}

fn bin(x: f64, edges: &[f64]) -> usize {
    edges.iter().take_while(|&&e| x > e).count()
}

/// Contingency test: given `W(2)` in a narrow bin around 0, the bin of `W(3)`
/// is independent of the bin of `W(1)`.
#[test]
fn markov_factorization_chi_square() {
    let (rows_edges, col_edges) = ([-0.4307, 0.4307], [-0.6745, 0.0, 0.6745]);
    let mut table = [[0.0f64; 4]; 3];
    for i in 0..200_000 {
        let w = wiener_path(3.0, 1e-2, RngStream::new(26, i)).unwrap();
        let (w1, w2, w3) = (w.values[100], w.values[200], w.values[300]);
        if w2.abs() < 0.1 {
            table[bin(w1, &rows_edges)][bin(w3 - w2, &col_edges)] += 1.0;
        }
    }
    let total: f64 = table.iter().flatten().sum();
    let row: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<f64> = (0..4).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut chi2 = 0.0;
    for i in 0..3 {
        for j in 0..4 {
            let expected = row[i] * col[j] / total;
            chi2 += (table[i][j] - expected).powi(2) / expected;
        }
    }
    let critical = ChiSquared::new(6.0).unwrap().inverse_cdf(0.99);
    assert!(total > 5000.0);
    assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
}

#[test]
fn geometric_strong_order_is_one_half() {
    let (gamma, s, x0, t_end) = (0.5, 0.8, 1.0, 1.0);
    let spec = DiffusionSpec::geometric(gamma, s, x0);
    let fine_dt = 1.0 / 4096.0;
    let factors = [64usize, 32, 16, 8];
    let mut err = [0.0; 4];
    let paths = 400;
    for i in 0..paths {
        let mut sampler = RngStream::new(27, i).sampler();
        let incs = wiener_increments(&mut sampler, (t_end / fine_dt) as usize, fine_dt);
        let w_t: f64 = incs.iter().sum();
        let exact = x0 * (-(gamma + 0.5 * s * s) * t_end + s * w_t).exp();
        for (l, &f) in factors.iter().enumerate() {
            let coarse: Vec<f64> = incs.chunks(f).map(|c| c.iter().sum()).collect();
            let x = euler_maruyama_driven(&spec, fine_dt * f as f64, &coarse);
            err[l] += (x.last() - exact).abs() / paths as f64;
        }
    }
    let xs: Vec<f64> = factors.iter().map(|&f| (fine_dt * f as f64).ln()).collect();
    let ys: Vec<f64> = err.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((0.35..=0.7).contains(&slope), "slope {slope}, errors {err:?}");
}

#[test]
fn heat_equation_spreads_variance_linearly() {
    let rho0 = GridDensity::gaussian_on(0.0, 0.01, -8.0, 8.0, 1600).unwrap();
    let spec = DiffusionSpec::wiener();
    let dt = 0.9 * fokker_planck_stable_dt(&rho0, &spec);
    let rho = fokker_planck_evolve(&rho0, &spec, 1.0, dt).unwrap();
    let stats = rho.stats();
    assert!((rho.mass() - 1.0).abs() <= 1e-8);
    assert!(stats.mean.abs() <= 1e-10);
    // Central differences add dx²/12 per unit of time to the variance.
    assert!((stats.variance - 1.01).abs() <= 1e-3, "variance {}", stats.variance);
    assert!(rho.values().iter().all(|&v| v >= 0.0));
    for (i, v) in rho.values().iter().enumerate() {
        assert!((v - gaussian_pdf(rho.x(i), 0.0, 1.01)).abs() <= 1e-3);
    }
}

#[test]
fn fokker_planck_agrees_with_euler_maruyama_histogram() {
    let spec = DiffusionSpec::new(|x| -x, |_| 1.0, 1.0);
    let var0 = 1e-3;
    let rho0 = GridDensity::gaussian_on(1.0, var0, -5.0, 5.0, 1000).unwrap();
    let dt_pde = 0.9 * fokker_planck_stable_dt(&rho0, &spec);
    let rho = fokker_planck_evolve(&rho0, &spec, 1.0, dt_pde).unwrap();

    let m = 20_000;
    let bins = 20;
    let (lo, hi) = (-2.0, 3.0);
    let width = (hi - lo) / bins as f64;
    let mut hist = vec![0.0; bins];
    for i in 0..m {
        let mut s = RngStream::new(28, i).substream(1).sampler();
        let x0 = 1.0 + var0.sqrt() * s.normal();
        let start = DiffusionSpec::new(|x| -x, |_| 1.0, x0);
        let x = euler_maruyama(&start, 1.0, 1e-3, RngStream::new(28, i)).unwrap().last();
        if (lo..hi).contains(&x) {
            hist[((x - lo) / width) as usize] += 1.0 / m as f64;
        }
    }
    let grid = rho.grid();
    let mut worst: f64 = 0.0;
    for (b, &p_em) in hist.iter().enumerate() {
        let (a, z) = (lo + b as f64 * width, lo + (b + 1) as f64 * width);
        let p_fp: f64 = (0..grid.n)
            .filter(|&i| (a..z).contains(&grid.x(i)))
            .map(|i| rho.values()[i] * grid.dx())
            .sum();
        let tol = 5.0 * (p_fp * (1.0 - p_fp) / m as f64).sqrt() + 2e-3;
        assert!((p_em - p_fp).abs() <= tol, "bin {b}: {p_em} vs {p_fp}");
        worst = worst.max((p_em - p_fp).abs());
    }
    assert!(worst > 0.0);
}

#[test]
fn pure_advection_conserves_mass() {
    let spec = DiffusionSpec::new(|x| -x, |_| 0.0, 0.0);
    let rho0 = GridDensity::gaussian_on(1.5, 0.05, -4.0, 4.0, 800).unwrap();
    let dt = 0.9 * fokker_planck_stable_dt(&rho0, &spec);
    let rho = fokker_planck_evolve(&rho0, &spec, 1.0, dt).unwrap();
    assert!((rho.mass() - 1.0).abs() <= 1e-8);
    assert!(rho.stats().mean < 0.7);
    assert!(fokker_planck_evolve(&rho0, &spec, 1.0, 3.0 * dt).is_err());
}

#[test]
fn chapman_kolmogorov_limits_and_symmetry() {
    assert!(chapman_kolmogorov_check(2.0, 1.0, 0.0, 0.0, 0.0).unwrap() <= 1e-6);
    assert!(chapman_kolmogorov_check(2.0, 1e-9, 0.0, 0.3, 0.0).unwrap() <= 1e-6);
    assert!(chapman_kolmogorov_check(2.0, 0.0, 0.0, 0.3, 0.0).unwrap() <= 1e-6);
    let a = chapman_kolmogorov_check(3.0, 1.2, 0.5, 0.7, -0.4).unwrap();
    let b = chapman_kolmogorov_check(3.0, 1.2, 0.5, -0.4, 0.7).unwrap();
    assert!(a <= 1e-6 && b <= 1e-6);
    assert!((a - b).abs() <= 1e-12);
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

fn derive(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &v)| k as f64 * v).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_matches_symbolic_derivatives(
        g in prop::collection::vec(-2.0..2.0f64, 1..6),
        v in prop::collection::vec(-1.0..1.0f64, 1..3),
        s in prop::collection::vec(-1.0..1.0f64, 1..3),
        x in -2.0..2.0f64,
    ) {
        let (vc, sc) = (v.clone(), s.clone());
        let spec = DiffusionSpec::new(move |x| poly(&vc, x), move |x| poly(&sc, x), 0.0);
        let (d1, d2) = (derive(&g), derive(&derive(&g)));
        let oracle = poly(&v, x) * poly(&d1, x) + 0.5 * poly(&s, x).powi(2) * poly(&d2, x);
        let (ga, d1a, d2a) = (g.clone(), d1.clone(), d2.clone());
        let analytic = TestFunction::analytic(move |x| poly(&ga, x), move |x| poly(&d1a, x), move |x| poly(&d2a, x));
        prop_assert!((generator_apply(&spec, &analytic, x) - oracle).abs() <= 1e-12 * (1.0 + oracle.abs()));
        let gn = g.clone();
        let numeric = TestFunction::numeric(move |x| poly(&gn, x));
        prop_assert!((generator_apply(&spec, &numeric, x) - oracle).abs() <= 1e-3 * (1.0 + oracle.abs()));
    }
}

#[test]
fn generator_examples() {
    let x2 = TestFunction::numeric(|x| x * x);
    assert!((generator_apply(&DiffusionSpec::wiener(), &x2, 0.7) - 1.0).abs() < 1e-4);
    let lin = TestFunction::numeric(|x| 3.0 * x - 1.0);
    let spec = DiffusionSpec::new(|x| x.sin(), |_| 2.0, 0.0);
    assert!((generator_apply(&spec, &lin, 0.4) - 3.0 * 0.4f64.sin()).abs() < 1e-4);
}

#[test]
fn reproducible_from_seed() {
    let a = euler_maruyama(&DiffusionSpec::geometric(0.3, 0.4, 2.0), 1.0, 1e-3, RngStream::new(29, 7)).unwrap();
    let b = euler_maruyama(&DiffusionSpec::geometric(0.3, 0.4, 2.0), 1.0, 1e-3, RngStream::new(29, 7)).unwrap();
    assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    let c = euler_maruyama(&DiffusionSpec::geometric(0.3, 0.4, 2.0), 1.0, 1e-3, RngStream::new(29, 8)).unwrap();
    assert_ne!(a.values, c.values);
}
