use nalgebra::DMatrix;
use regime_trader::markov::*;
use regime_trader::rng;

fn table_generators() -> Vec<DMatrix<f64>> {
    let cfg = EnvConfig::preset(Setting::ThetaKappaSigma);
    vec![cfg.theta.rate_matrix(), cfg.kappa.rate_matrix(), cfg.sigma.rate_matrix()]
}

/// Plain Taylor sum with many terms and no scaling, as an independent oracle.
fn series_oracle(a: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let x = a * tau;
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..60 {
        term = &term * &x / k as f64;
        sum += &term;
    }
    sum
}

#[test]
fn exponential_matches_series_and_is_stochastic() {
    for a in table_generators() {
        let p = matrix_exponential(&a, 0.2).unwrap();
        let oracle = series_oracle(&a, 0.2);
        assert!((&p - &oracle).amax() < 1e-14);
        for row in p.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-10);
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
    let p = matrix_exponential(&table_generators()[0], 0.2).unwrap();
    assert!((p[(0, 1)] - 0.0099).abs() < 1e-4);
}

#[test]
fn semigroup_property() {
    for a in table_generators() {
        for (t1, t2) in [(0.2, 0.2), (0.1, 0.7), (3.0, 5.5)] {
            let lhs = matrix_exponential(&a, t1 + t2).unwrap();
            let rhs = matrix_exponential(&a, t1).unwrap() * matrix_exponential(&a, t2).unwrap();
            assert!((lhs - rhs).amax() < 1e-8);
        }
    }
}

#[test]
fn large_argument_uses_squaring() {
    let a = &table_generators()[0];
    let p = matrix_exponential(a, 500.0).unwrap();
    for v in p.iter() {
        assert!((v - 1.0 / 3.0).abs() < 1e-10);
    }
}

#[test]
fn chain_frequencies_match_transition_matrix() {
    let spec = EnvConfig::preset(Setting::Theta).theta;
    let mut chain = RegimeChain::new(&spec, 0.2, 0).unwrap();
    let p = chain.transition().clone();
    let k = spec.len();
    let mut counts = vec![vec![0u64; k]; k];
    let mut r = rng::seeded(17);
    for _ in 0..1_000_000 {
        let from = chain.current();
        let to = chain.step(&mut r);
        counts[from][to] += 1;
    }
    for i in 0..k {
        let n: u64 = counts[i].iter().sum();
        for j in 0..k {
            let q = p[(i, j)];
            let se = (q * (1.0 - q) / n as f64).sqrt();
            let freq = counts[i][j] as f64 / n as f64;
            assert!((freq - q).abs() < 3.0 * se, "P[{i}][{j}]={q} freq={freq}");
        }
    }
}

#[test]
fn ou_one_step_moments() {
    let p = OUParams::new(5.0, 1.0, 0.2, 0.2).unwrap();
    let s = 0.8;
    let n = 1_000_000;
    let mut r = rng::seeded(5);
    let draws: Vec<f64> = (0..n).map(|_| ou_step(s, &p, &mut r)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let m_true = (-1f64).exp() * s + (1.0 - (-1f64).exp());
    let v_true = 0.04 * (1.0 - (-2f64).exp()) / 10.0;
    assert!((mean - m_true).abs() < 4.0 * (v_true / n as f64).sqrt());
    // Var of the sample variance of a normal is 2σ⁴/(n−1).
    assert!((var - v_true).abs() < 4.0 * v_true * (2.0 / (n - 1) as f64).sqrt());
}

#[test]
fn constant_parameters_converge_to_stationary_law() {
    let mut cfg = EnvConfig::preset(Setting::Theta);
    cfg.theta = ChainSpec::constant(1.0);
    let env = Environment::new(cfg).unwrap();
    let path = simulate_path(&env, 1.0, 1_000_000, &mut rng::seeded(9)).unwrap();
    let n = path.len() as f64;
    let mean = path.values.iter().sum::<f64>() / n;
    let var = path.values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let p = OUParams::new(5.0, 1.0, 0.2, 0.2).unwrap();
    let (m_true, v_true) = stationary_moments(&p);
    // Standard error of the mean of an AR(1) with coefficient φ.
    let phi = (-1f64).exp();
    let se = (v_true / n * (1.0 + phi) / (1.0 - phi)).sqrt();
    assert!((mean - m_true).abs() < 3.0 * se, "mean {mean}");
    assert!((var / v_true - 1.0).abs() < 0.05, "var {var}");
    assert!(path.theta_regime.iter().all(|&r| r == 0));
}

#[test]
fn theta_occupancy_is_uniform() {
    let env = Environment::new(EnvConfig::preset(Setting::Theta)).unwrap();
    let path = simulate_path(&env, 1.0, 1_000_000, &mut rng::seeded(21)).unwrap();
    let mut counts = [0usize; 3];
    for &r in &path.theta_regime {
        counts[r] += 1;
    }
    for c in counts {
        let share = c as f64 / path.len() as f64;
        // Mean holding time is 50 steps, so the effective sample is far smaller than 10^6.
        assert!((share - 1.0 / 3.0).abs() < 0.03, "share {share}");
    }
}

#[test]
fn zero_length_path_is_an_error() {
    let env = Environment::new(EnvConfig::default()).unwrap();
    assert!(simulate_path(&env, 1.0, 0, &mut rng::seeded(0)).is_err());
}

#[test]
fn same_seed_same_path_csv() {
    let env = Environment::new(EnvConfig::preset(Setting::ThetaKappaSigma)).unwrap();
    let csv = |seed| {
        let path = simulate_path(&env, 1.0, 500, &mut rng::seeded(seed)).unwrap();
        let mut out = Vec::new();
        path.write_csv(&mut out).unwrap();
        out
    };
    assert_eq!(csv(4), csv(4));
    assert_ne!(csv(4), csv(5));
    let text = String::from_utf8(csv(4)).unwrap();
    assert!(text.starts_with("t,S,theta_regime,kappa_regime,sigma_regime\n"));
    assert_eq!(text.lines().count(), 501);
}

#[test]
fn batch_layout_and_initial_scale() {
    let cfg = EnvConfig::preset(Setting::Theta);
    assert!((cfg.sigma_inv() - 0.02).abs() < 1e-15);
    let env = Environment::new(cfg).unwrap();
    let batch = sample_training_batch(&env, 64, 10, &mut rng::seeded(1)).unwrap();
    assert_eq!(batch.len(), 64);
    assert_eq!(batch.width(), 12);
    assert_eq!(batch.signals.len(), 64 * 12);
    assert_eq!(batch.current(3).len(), 11);
    assert_eq!(batch.shifted(3)[10], batch.next_signal(3));
    assert!(batch.labels.iter().all(|&l| l < 3));
    assert!(sample_training_batch(&env, 0, 10, &mut rng::seeded(1)).is_err());
}

#[test]
fn inventories_are_uniform_on_bounds() {
    let env = Environment::new(EnvConfig::default()).unwrap();
    let batch = sample_training_batch(&env, 100_000, 1, &mut rng::seeded(8)).unwrap();
    let inv = &batch.inventories;
    let mean = inv.iter().sum::<f64>() / inv.len() as f64;
    // Uniform on [−10, 10] has std 20/√12.
    assert!(mean.abs() < 4.0 * 20.0 / 12f64.sqrt() / (inv.len() as f64).sqrt());
    assert!(inv.iter().all(|&i| (-10.0..=10.0).contains(&i)));
}

#[test]
fn batch_start_values_follow_initial_law() {
    let env = Environment::new(EnvConfig::default()).unwrap();
    let batch = sample_training_batch(&env, 20_000, 1, &mut rng::seeded(3)).unwrap();
    let starts: Vec<f64> = (0..batch.len()).map(|i| batch.row(i)[0]).collect();
    let n = starts.len() as f64;
    let mean = starts.iter().sum::<f64>() / n;
    let sd = (starts.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - 1.0).abs() < 4.0 * 0.06 / n.sqrt());
    assert!((sd / 0.06 - 1.0).abs() < 0.03);
}

#[test]
fn labels_match_generating_regime() {
    // Three far-apart levels, fast reversion and no noise: the level of S_t reveals θ_t.
    let mut cfg = EnvConfig::preset(Setting::Theta);
    cfg.theta = ChainSpec::symmetric(vec![-5.0, 0.0, 5.0], 1e-9);
    cfg.kappa = ChainSpec::constant(50.0);
    cfg.sigma = ChainSpec::constant(0.0);
    let env = Environment::new(cfg).unwrap();
    let batch = sample_training_batch(&env, 200, 5, &mut rng::seeded(2)).unwrap();
    for i in 0..batch.len() {
        let expected = (batch.next_signal(i) / 5.0).round() as i64 + 1;
        assert_eq!(batch.labels[i] as i64, expected);
    }
}
