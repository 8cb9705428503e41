use std::sync::Arc;

use nalgebra::DMatrix;
use snakesim::environment::*;
use snakesim::harness::stats::{mean, variance_estimate};
use snakesim::rng::replicate_rng;
use snakesim::SimError;

fn grid1(origin: f64, spacing: f64, points: usize) -> Arc<Grid> {
    Arc::new(Grid::new(GridSpec { origin, spacing, points }, 1).unwrap())
}

#[test]
fn zero_kernel_slice_is_mean() {
    let cfg = EnvironmentConfig::new(100, 2.0, CovarianceKernel::Zero);
    let mut rng = replicate_rng(1, 0);
    let f = sample_field_step(&cfg, 1, &mut rng).unwrap();
    for x in [-3.0, 0.0, 0.05, 2.7] {
        assert_eq!(f.eval(&[x]), 0.2);
    }
}

#[test]
fn constant_kernel_slice_is_spatially_constant() {
    let cfg = EnvironmentConfig::new(100, 0.0, CovarianceKernel::Constant { gamma: 1.0 });
    let mut rng = replicate_rng(2, 0);
    let f = sample_field_step(&cfg, 1, &mut rng).unwrap();
    let v = f.eval(&[0.0]);
    for x in [-3.9, -1.0, 0.33, 3.9] {
        assert_eq!(f.eval(&[x]), v);
    }
}

#[test]
fn constant_kernel_pointwise_variance_is_gamma() {
    let cfg = EnvironmentConfig::new(10_000, 0.0, CovarianceKernel::Constant { gamma: 1.0 });
    let grid = Arc::new(Grid::new(cfg.grid.clone(), 1).unwrap());
    let sampler = FieldSampler::new(grid, &cfg.kernel, 0.0, cfg.bound()).unwrap();
    let mut rng = replicate_rng(3, 0);
    let xs: Vec<f64> = (0..100_000).map(|k| sampler.sample(k, &mut rng).0.eval(&[0.0])).collect();
    let v = variance_estimate(&xs);
    assert!((v.value - 1.0).abs() <= 3.0 * v.se, "variance {} se {}", v.value, v.se);
}

#[test]
fn squared_exponential_marginals_and_independence() {
    let n = 64;
    let nu = 0.8;
    let kernel = CovarianceKernel::SquaredExponential { variance: 0.5, length_scale: 0.7 };
    let grid = grid1(-2.0, 0.25, 17);
    let sampler = FieldSampler::new(grid.clone(), &kernel, nu / (n as f64).sqrt(), 4.0).unwrap();
    let mut rng = replicate_rng(4, 0);
    let reps = 20_000;
    let mut a = Vec::with_capacity(reps);
    let mut b = Vec::with_capacity(reps);
    let mut near = Vec::with_capacity(reps);
    for _ in 0..reps {
        let s1 = sampler.sample(1, &mut rng).0;
        let s2 = sampler.sample(2, &mut rng).0;
        a.push(s1.eval(&[0.0]));
        near.push(s1.eval(&[0.5]));
        b.push(s2.eval(&[0.0]));
    }
    let target = nu / (n as f64).sqrt();
    let m = mean(&a);
    assert!((m - target).abs() <= 4.0 * (0.5f64 / reps as f64).sqrt(), "mean {m}");
    let mb = mean(&b);
    let cross = a.iter().zip(&b).map(|(x, y)| (x - m) * (y - mb)).sum::<f64>() / reps as f64;
    assert!(cross.abs() <= 4.0 / (reps as f64).sqrt(), "cross-generation covariance {cross}");
    // Same slice, distance 0.5: covariance 0.5·exp(−0.25/0.98).
    let mn = mean(&near);
    let cov = a.iter().zip(&near).map(|(x, y)| (x - m) * (y - mn)).sum::<f64>() / reps as f64;
    let want = kernel.eval(&[0.0], &[0.5]);
    assert!((cov - want).abs() < 0.03, "spatial covariance {cov} vs {want}");
}

#[test]
fn nearest_node_policy() {
    let grid = grid1(0.0, 1.0, 3);
    let f = EnvironmentField::new(1, grid, FieldValues::Grid(vec![10.0, 20.0, 30.0])).unwrap();
    assert_eq!(eval_field(&f, &[1.0]), 20.0);
    assert_eq!(f.eval(&[0.5]), 10.0);
    assert_eq!(f.eval(&[1.5]), 20.0);
    assert_eq!(f.eval(&[1.51]), 30.0);
    assert_eq!(f.clamp_count(), 0);
    assert_eq!(f.eval(&[-7.0]), 10.0);
    assert_eq!(f.eval(&[9.0]), 30.0);
    assert_eq!(f.clamp_count(), 2);
}

#[test]
fn smooth_increment_truncation() {
    let grid = grid1(0.0, 1.0, 2);
    let samples = vec![
        FieldValues::Grid(vec![0.0, 0.0]),
        FieldValues::Grid(vec![0.3, 0.6]),
        FieldValues::Grid(vec![0.5, 0.7]),
    ];
    let n = 25;
    let b = CumulativeField::from_smooth_samples(n, grid, samples).unwrap();
    let f1 = field_from_smooth_increments(&b, 1).unwrap();
    assert!((f1.node_value(0) / 5.0 - 0.3).abs() < 1e-15);
    assert_eq!(f1.node_value(1), 0.0);
    let f2 = field_from_smooth_increments(&b, 2).unwrap();
    assert!((f2.node_value(0) / 5.0 - 0.2).abs() < 1e-15);
    assert!(matches!(field_from_smooth_increments(&b, 3), Err(SimError::Domain(_))));
}

#[test]
fn smooth_increments_require_smooth_samples() {
    let grid = grid1(0.0, 1.0, 2);
    let slice = EnvironmentField::uniform(1, grid.clone(), 0.1);
    let lattice = CumulativeField::from_slices(4, grid, &[slice]);
    assert!(matches!(field_from_smooth_increments(&lattice, 1), Err(SimError::Config(_))));
}

#[test]
fn linear_smooth_field_gives_constant_increments() {
    let grid = grid1(0.0, 1.0, 1);
    let n = 16;
    let samples = (0..=5).map(|m| FieldValues::Uniform(0.8 * m as f64 / n as f64)).collect();
    let b = CumulativeField::from_smooth_samples(n, grid, samples).unwrap();
    for j in 1..=5 {
        let f = field_from_smooth_increments(&b, j).unwrap();
        assert!((f.node_value(0) - 0.8 / 4.0).abs() < 1e-14);
    }
}

#[test]
fn smooth_mode_reconstructs_field_without_truncation() {
    let mut cfg = EnvironmentConfig::new(400, 0.3, CovarianceKernel::SquaredExponential { variance: 1.0, length_scale: 1.0 });
    cfg.mode = EnvironmentMode::SmoothGaussian { order: 32 };
    cfg.grid = GridSpec { origin: -2.0, spacing: 0.5, points: 9 };
    let factory = EnvironmentFactory::new(&cfg).unwrap();
    let mut rng = replicate_rng(5, 0);
    let EnvironmentRealization::Smooth(real) = factory.realize(40, &mut rng) else { panic!() };
    let samples = smooth_samples_on_grid(&real, factory.grid().clone()).unwrap();
    let slices: Vec<EnvironmentField> =
        (1..=40).map(|j| field_from_smooth_increments(&samples, j).unwrap()).collect();
    let rebuilt = CumulativeField::from_slices(400, factory.grid().clone(), &slices);
    for m in [1, 10, 40] {
        for i in 0..9 {
            let x = factory.grid().node(i);
            let want = samples.eval(m, &x);
            assert!((rebuilt.eval(m, &x) - want).abs() < 1e-12);
            assert!((real.cumulative(m, &x) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn spectral_basis_matches_kernel() {
    let kernel = CovarianceKernel::SquaredExponential { variance: 2.0, length_scale: 0.8 };
    let basis = SpectralBasis::new(&kernel, 1, 64).unwrap();
    for r in [0.0, 0.3, 1.0, 2.0] {
        let got = basis.covariance(&[0.0], &[r]);
        let want = kernel.eval(&[0.0], &[r]);
        assert!((got - want).abs() < 1e-8, "r={r}: {got} vs {want}");
    }
}

#[test]
fn smooth_derivatives_match_finite_differences() {
    let mut cfg = EnvironmentConfig::new(100, 0.0, CovarianceKernel::SquaredExponential { variance: 1.0, length_scale: 1.0 });
    cfg.mode = EnvironmentMode::SmoothGaussian { order: 16 };
    cfg.dim = 2;
    let factory = EnvironmentFactory::new(&cfg).unwrap();
    let mut rng = replicate_rng(6, 0);
    let env = factory.realize(20, &mut rng);
    let x = [0.3, -0.4];
    let j = env.jet(20, &x).unwrap();
    let h = 1e-4;
    let b = |p: [f64; 2]| env.jet(20, &p).unwrap().value;
    let gx = (b([x[0] + h, x[1]]) - b([x[0] - h, x[1]])) / (2.0 * h);
    let gy = (b([x[0], x[1] + h]) - b([x[0], x[1] - h])) / (2.0 * h);
    let lap = (b([x[0] + h, x[1]]) + b([x[0] - h, x[1]]) + b([x[0], x[1] + h]) + b([x[0], x[1] - h]) - 4.0 * j.value)
        / (h * h);
    assert!((j.gradient[0] - gx).abs() < 1e-6);
    assert!((j.gradient[1] - gy).abs() < 1e-6);
    assert!((j.laplacian - lap).abs() < 1e-3);
}

#[test]
fn deterministic_mode_increments() {
    let cfg = EnvironmentConfig::deterministic(100, BuiltinField::Linear { rate: 2.0 });
    let factory = EnvironmentFactory::new(&cfg).unwrap();
    let mut rng = replicate_rng(7, 0);
    let env = factory.realize(0, &mut rng);
    assert!((env.xi(5, &[1.0]) - 0.2).abs() < 1e-12);
    assert!((env.cumulative(50, &[3.0]) - 1.0).abs() < 1e-12);
    // Increment 0.6 per step is truncated to zero.
    let cfg = EnvironmentConfig::deterministic(2, BuiltinField::Linear { rate: 1.2 });
    let env = EnvironmentFactory::new(&cfg).unwrap().realize(0, &mut rng);
    assert_eq!(env.xi(1, &[0.0]), 0.0);
    assert_eq!(env.cumulative(4, &[0.0]), 0.0);
}

#[test]
fn branch_probability_examples() {
    assert_eq!(branch_probabilities(0.0, 9).unwrap(), (0.5, 0.5));
    let (u, d) = branch_probabilities(5.0, 100).unwrap();
    assert!((u - 0.625).abs() < 1e-15 && (d - 0.375).abs() < 1e-15);
    let (u, d) = branch_probabilities(1.0, 100).unwrap();
    assert!((u - 0.525).abs() < 1e-15 && (d - 0.475).abs() < 1e-15);
    assert!((u + d - 1.0).abs() < 1e-15);
    assert!(matches!(branch_probabilities(5.01, 100), Err(SimError::Domain(_))));
}

#[test]
fn non_psd_covariance_is_rejected() {
    let grid = grid1(0.0, 1.0, 2);
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(matches!(FieldSampler::from_covariance(grid, cov, 0.0, 1.0), Err(SimError::KernelNotPsd { .. })));
}

#[test]
fn config_validation_reports_paths() {
    let mut cfg = EnvironmentConfig::new(100, 0.0, CovarianceKernel::Constant { gamma: -1.0 });
    match cfg.validate() {
        Err(SimError::Validation { path, .. }) => assert_eq!(path, "environment.kernel.gamma"),
        other => panic!("{other:?}"),
    }
    cfg.kernel = CovarianceKernel::Zero;
    cfg.bound = Some(6.0);
    assert!(matches!(cfg.validate(), Err(SimError::Validation { .. })));
    cfg.bound = None;
    cfg.grid.points = 0;
    assert!(cfg.validate().is_err());
}

#[test]
fn clipping_enforces_bound() {
    // Mean far above the bound: every value is clipped.
    let grid = grid1(0.0, 1.0, 3);
    let sampler = FieldSampler::new(grid, &CovarianceKernel::Constant { gamma: 1.0 }, 50.0, 2.0).unwrap();
    let mut rng = replicate_rng(8, 0);
    let (f, clipped) = sampler.sample(1, &mut rng);
    assert_eq!(f.eval(&[0.0]), 2.0);
    assert_eq!(clipped, 1);
}
