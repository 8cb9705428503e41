use snakesim::environment::*;
use snakesim::functional::*;
use snakesim::quadrature::GaussianQuadrature;
use snakesim::rng::replicate_rng;
use snakesim::snake::*;

fn det_env(n: usize, field: BuiltinField) -> EnvironmentRealization {
    let cfg = EnvironmentConfig::deterministic(n, field);
    EnvironmentFactory::new(&cfg).unwrap().realize(0, &mut replicate_rng(0, 0))
}

fn path(levels: usize) -> Vec<f64> {
    (0..=levels).map(|j| 0.1 * j as f64).collect()
}

#[test]
fn f_n_without_environment() {
    let n = 10;
    let env = det_env(n, BuiltinField::Zero);
    for m in 1..8 {
        let p = path(m);
        assert!((f_n(&p, 1, &env, SumStart::One) - (m as f64 - 1.0) / n as f64).abs() < 1e-15);
        assert!((f_n(&p, 1, &env, SumStart::Zero) - m as f64 / n as f64).abs() < 1e-15);
    }
    assert_eq!(f_n(&path(1), 1, &env, SumStart::One), 0.0);
    assert_eq!(f_n(&path(0), 1, &env, SumStart::Zero), 0.0);
}

#[test]
fn f_n_linear_field_is_geometric_sum() {
    let n = 40;
    let env = det_env(n, BuiltinField::Linear { rate: 1.0 });
    let m = 33;
    let got = f_n(&path(m), 1, &env, SumStart::One);
    let q = (-1.0 / n as f64).exp();
    // (1/n) Σ_{l=1}^{m−1} q^l
    let want = q * (1.0 - q.powi(m as i32 - 1)) / (1.0 - q) / n as f64;
    assert!((got - want).abs() < 1e-12 * want);
}

#[test]
fn compensator_boundary_and_interior_values() {
    let n = 25;
    let env = det_env(n, BuiltinField::Zero);
    let q = GaussianQuadrature::new(20).unwrap();
    let c = |level: usize, start| conditional_moments(level, &[0.3], 5, &env, &q, start).unwrap();
    let nf = n as f64;
    assert!(c(3, SumStart::Zero).mean.abs() < 1e-15);
    assert!((c(0, SumStart::Zero).mean - 1.0 / nf).abs() < 1e-15);
    assert!((c(5, SumStart::Zero).mean + 1.0 / nf).abs() < 1e-15);
    // bracket per interior step: E V² − (E V)² = 1/n²
    let m = c(2, SumStart::Zero);
    assert!((m.second - m.mean * m.mean - 1.0 / (nf * nf)).abs() < 1e-15);
    // summing from l = 1 removes the level-0 term and the erasure from level 1
    assert_eq!(c(0, SumStart::One).mean, 0.0);
    assert!((c(1, SumStart::One).mean - 0.5 / nf).abs() < 1e-15);
    assert!(GaussianQuadrature::new(1).is_err());
}

#[test]
fn decompose_trivial_cases() {
    let v = [0.1, -0.2, 0.3];
    let s = decompose(&v, &[0.0; 3], &[0.0; 3], vec![1.0, 1.1, 0.9, 1.2]).unwrap();
    assert!(s.a.iter().all(|&a| a == 0.0));
    for k in 0..4 {
        assert!((s.m[k] - (s.f[k] - 1.0)).abs() < 1e-15);
    }
    assert!(decompose(&v, &[0.0; 2], &[0.0; 3], vec![]).is_err());
}

#[test]
fn deterministic_contour_has_no_martingale_part() {
    let env = det_env(1, BuiltinField::Zero);
    let run = run_snake(&SnakeConfig::new(1.0, 1), Horizon::Steps { steps: 20 }, &env, &mut replicate_rng(1, 0)).unwrap();
    let s = functional_series(&run.record, &env, &FunctionalConfig::default()).unwrap();
    assert!(s.m.iter().all(|&m| m.abs() < 1e-15));
    assert!(s.bracket.iter().all(|&b| b.abs() < 1e-15));
}

#[test]
fn reconstruction_identity_on_random_runs() {
    for (n, field) in [
        (30, BuiltinField::SineProduct { amplitude: 1.0, wavenumber: 1.0 }),
        (20, BuiltinField::Linear { rate: 0.7 }),
    ] {
        let env = det_env(n, field);
        for start in [SumStart::Zero, SumStart::One] {
            let run = run_snake(&SnakeConfig::new(1.0, 1), Horizon::Steps { steps: 5000 }, &env, &mut replicate_rng(2, n as u64)).unwrap();
            let s = functional_series(&run.record, &env, &FunctionalConfig { start, quadrature_order: 20, replay: true }).unwrap();
            assert!(s.reconstruction_error() < 1e-10);
            assert!(s.bracket.windows(2).all(|w| w[1] >= w[0]));
        }
    }
    // random lattice environment
    let cfg = EnvironmentConfig::new(16, 0.5, CovarianceKernel::SquaredExponential { variance: 1.0, length_scale: 0.5 });
    let env = EnvironmentFactory::new(&cfg).unwrap().realize(32, &mut replicate_rng(3, 0));
    let run = run_snake(&SnakeConfig::new(2.0, 1), Horizon::Steps { steps: 3000 }, &env, &mut replicate_rng(3, 1)).unwrap();
    let s = functional_series(&run.record, &env, &FunctionalConfig::default()).unwrap();
    assert!(s.reconstruction_error() < 1e-10);
}

#[test]
fn zero_field_gives_tanaka_terms() {
    let n = 10;
    let env = det_env(n, BuiltinField::Zero);
    let run = run_snake(&SnakeConfig::new(1.0, 1), Horizon::Steps { steps: 4000 }, &env, &mut replicate_rng(4, 0)).unwrap();
    let s = functional_series(&run.record, &env, &FunctionalConfig::default()).unwrap();
    let t = 4000.0 / 100.0;
    let target = limit_target(&run.record, &run.ledger, &env, t).unwrap();
    assert_eq!(target.drift, 0.0);
    assert!((s.a.last().unwrap() - target.total()).abs() < 1e-12);
    // F_n = Y
    for k in 0..s.f.len() {
        assert!((s.f[k] - run.record.level(k) as f64 / n as f64).abs() < 1e-12);
    }
}

#[test]
fn drift_integrand_symbolic_check() {
    use rand::Rng;
    let field = BuiltinField::SineProduct { amplitude: 1.0, wavenumber: 1.0 };
    let mut rng = replicate_rng(5, 0);
    for _ in 0..1000 {
        let t: f64 = rng.random_range(0.0..2.0);
        let x: f64 = rng.random_range(-5.0..5.0);
        let mut g = [0.0; 3];
        field.gradient(t, &[x], &mut g[..1]);
        let jet = FieldJet { value: field.value(t, &[x]), gradient: g, laplacian: field.laplacian(t, &[x]) };
        let want = (-t * x.sin()).exp() * (0.5 * t * x.sin() + 0.5 * t * t * x.cos() * x.cos());
        assert!((drift_integrand(&jet, 1) - want).abs() < 1e-12 * want.abs().max(1.0));
    }
    let lin = BuiltinField::Linear { rate: 1.0 };
    let jet = FieldJet { value: lin.value(0.7, &[1.0]), gradient: [0.0; 3], laplacian: lin.laplacian(0.7, &[1.0]) };
    assert_eq!(drift_integrand(&jet, 1), 0.0);
}

#[test]
fn limit_target_needs_derivatives() {
    let cfg = EnvironmentConfig::new(10, 0.0, CovarianceKernel::Zero);
    let env = EnvironmentFactory::new(&cfg).unwrap().realize(10, &mut replicate_rng(6, 0));
    let run = run_snake(&SnakeConfig::new(1.0, 1), Horizon::Steps { steps: 100 }, &env, &mut replicate_rng(6, 1)).unwrap();
    assert!(matches!(limit_target(&run.record, &run.ledger, &env, 1.0), Err(snakesim::SimError::Unsupported(_))));
}
