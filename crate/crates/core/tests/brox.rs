use rand::Rng;
use rand_distr::StandardNormal;
use snakesim::brox::*;
use snakesim::environment::{CovarianceKernel, EnvironmentConfig, EnvironmentFactory};
use snakesim::harness::stats::{variance_estimate, Estimate};
use snakesim::harness::{ks_one_sample, ks_two_sample, run_replicates, MonteCarlo};
use snakesim::rng::replicate_rng;
use snakesim::SimError;
use statrs::distribution::{ContinuousCDF, Normal};

fn random_profile(n: usize, k1: usize, seed: u64) -> PotentialProfile {
    let cfg = EnvironmentConfig::new(n, 0.0, CovarianceKernel::Constant { gamma: 1.0 });
    let factory = EnvironmentFactory::new(&cfg).unwrap();
    sample_profile(&factory, k1, &mut replicate_rng(seed, 0)).unwrap()
}

#[test]
fn tent_map_values() {
    for k1 in [1.0, 2.0, 3.5] {
        assert_eq!(tent(0.0, k1), 0.0);
        assert_eq!(tent(k1, k1), k1);
        assert!(tent(2.0 * k1, k1).abs() < 1e-15);
        for u in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let u = u * k1;
            assert!((tent(k1 + u, k1) - (k1 - u)).abs() < 1e-12);
            assert!((tent(-u, k1) - u).abs() < 1e-12);
            assert!((tent(u + 2.0 * k1, k1) - u).abs() < 1e-12);
        }
    }
}

#[test]
fn site_increment_arithmetic() {
    let got = site_increment(1.0, 100);
    assert!((got - (0.475f64 / 0.525).ln()).abs() < 1e-15);
    assert!((got + 0.100083).abs() < 1e-6);
    let mut xi = vec![0.0; 100];
    xi[1] = 1.0;
    let p = PotentialProfile::build(&xi, 100, 1, 5.0).unwrap();
    assert_eq!(p.v(0.5), 0.0);
    assert_eq!(p.v(1.5), got);
    assert_eq!(p.v(50.0), got);
}

#[test]
fn zero_field_gives_zero_potential() {
    let p = PotentialProfile::build(&vec![0.0; 40], 20, 2, 1.0).unwrap();
    for x in [-13.2, -0.5, 0.0, 3.7, 39.9, 77.0] {
        assert_eq!(p.v_hat(x), 0.0);
        assert!((p.scale_sites(x) - x).abs() < 1e-12);
    }
    assert_eq!(p.v(0.0), 0.0);
}

#[test]
fn bound_violation_is_domain_error() {
    let mut xi = vec![0.0; 16];
    xi[3] = 2.5;
    assert!(matches!(PotentialProfile::build(&xi, 16, 1, 2.0), Err(SimError::Domain(_))));
    assert!(matches!(PotentialProfile::build(&xi[..5], 16, 1, 2.0), Err(SimError::Precondition(_))));
}

#[test]
fn reflected_potential_is_even_and_periodic() {
    let p = random_profile(10, 2, 3);
    let period = p.period() as f64;
    assert_eq!(p.period(), 40);
    let mut rng = replicate_rng(9, 0);
    for _ in 0..500 {
        let x: f64 = rng.random_range(-60.0..60.0);
        if (x - x.round()).abs() < 1e-9 {
            continue;
        }
        assert_eq!(p.v_hat(x), p.v_hat(-x), "x = {x}");
        assert_eq!(p.v_hat(x), p.v_hat(x + period));
        // V̂(x) = V(n·h(x/n)) with n·h(x/n) = tent(x, nK₁)
        assert_eq!(p.v_hat(x), p.v(tent(x, 20.0)));
    }
}

#[test]
fn scale_function_closed_form() {
    let p = random_profile(25, 1, 4);
    assert_eq!(p.scale_sites(0.0), 0.0);
    // midpoint rule on a subgrid aligned with the sites is exact for a
    // piecewise-constant integrand
    let sub = 64;
    let h = 1.0 / sub as f64;
    let mut acc = 0.0;
    let mut prev = 0.0;
    for k in 0..(120 * sub) {
        let y = (k as f64 + 0.5) * h;
        acc += p.v_hat(y).exp() * h;
        let x = (k + 1) as f64 * h;
        let a = p.scale_sites(x);
        assert!(a > prev);
        prev = a;
        if (k + 1) % sub == 0 {
            assert!((a - acc).abs() <= 1e-12 * acc, "x = {x}: {a} vs {acc}");
        }
    }
    // negative side: A(−x) = −A(x) by evenness
    for x in [0.3, 7.0, 33.3] {
        assert!((p.scale_sites(-x) + p.scale_sites(x)).abs() < 1e-12 * p.scale_sites(x));
    }
}

#[test]
fn scale_inverse_round_trip() {
    let p = random_profile(30, 1, 5);
    let mut rng = replicate_rng(10, 0);
    for _ in 0..1000 {
        let z: f64 = rng.random_range(-5.0..5.0);
        let w = p.scale(z);
        assert!((p.scale_inv(w) - z).abs() < 1e-12);
    }
    for j in -70..70 {
        assert!((p.scale_at_site(j) - p.scale_sites(j as f64)).abs() < 1e-12);
    }
}

#[test]
fn up_probability_matches_site_law_on_the_positive_side() {
    let n = 40;
    let cfg = EnvironmentConfig::new(n, 0.0, CovarianceKernel::Constant { gamma: 1.0 });
    let factory = EnvironmentFactory::new(&cfg).unwrap();
    let env = factory.realize(n, &mut replicate_rng(6, 0));
    let xi = site_values(&env, n, &[0.0]);
    let p = PotentialProfile::build(&xi, n, 1, cfg.bound()).unwrap();
    let s = 4.0 * (n as f64).sqrt();
    for j in 1..n {
        let want = 0.5 + xi[j] / s;
        assert!((p.up_probability(j as i64) - want).abs() < 1e-14, "site {j}");
        // mirror image below 0
        assert!((p.up_probability(-(j as i64)) - (1.0 - want)).abs() < 1e-14);
    }
    assert!((p.up_probability(0) - 0.5).abs() < 1e-15);
    assert!((p.up_probability(n as i64) - 0.5).abs() < 1e-15);
}

#[test]
fn bmre_without_potential_is_brownian() {
    let p = PotentialProfile::from_segments(1, 1, vec![0.0]).unwrap();
    let times = [0.25, 0.5, 1.0];
    let mc = MonteCarlo::new(10_000, 21);
    let paths = run_replicates(&mc, |_, rng| simulate_bmre(&p, 1.0, 1e-3, &times, rng)).values;
    let last: Vec<f64> = paths.iter().map(|z| z[2]).collect();
    let var = variance_estimate(&last);
    assert!(var.within(1.0, 3.0), "{var:?}");
    for (i, &t) in times.iter().enumerate() {
        let zs: Vec<f64> = paths.iter().map(|z| z[i]).collect();
        let law = Normal::new(0.0, t.sqrt()).unwrap();
        let ks = ks_one_sample(&zs, |x| law.cdf(x)).unwrap();
        assert!(!ks.rejects(0.01), "t = {t}: {ks:?}");
    }
}

#[test]
fn bmre_constant_potential_is_brownian() {
    let p = PotentialProfile::from_segments(4, 1, vec![0.7; 4]).unwrap();
    let mc = MonteCarlo::new(10_000, 22);
    let last: Vec<f64> = run_replicates(&mc, |_, rng| Ok(simulate_bmre(&p, 1.0, 1e-3, &[1.0], rng)?[0])).values;
    let var = variance_estimate(&last);
    assert!(var.within(1.0, 3.0), "{var:?}");
    assert!(Estimate::mean_of(&last).within(0.0, 3.0));
}

#[test]
fn bmre_rejects_bad_parameters() {
    let p = PotentialProfile::from_segments(1, 1, vec![0.0]).unwrap();
    let mut rng = replicate_rng(1, 0);
    assert!(matches!(simulate_bmre(&p, 1.0, 0.0, &[0.5], &mut rng), Err(SimError::Config(_))));
    assert!(matches!(simulate_bmre(&p, 0.0, 1e-3, &[], &mut rng), Err(SimError::Config(_))));
    assert!(simulate_bmre(&p, 1.0, 1e-3, &[0.5, 0.2], &mut rng).is_err());
}

#[test]
fn clock_halving_changes_little() {
    let n = 10;
    let p = random_profile(n, 1, 7);
    let du = 1e-3 / (n * n) as f64;
    let mut rng = replicate_rng(8, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let mut fine = TimeChangeState::default();
        let mut coarse = TimeChangeState::default();
        let steps = (0.2 / du) as usize;
        for _ in 0..steps {
            let a = (du / 2.0).sqrt() * rng.sample::<f64, _>(StandardNormal);
            let b = (du / 2.0).sqrt() * rng.sample::<f64, _>(StandardNormal);
            fine.step(&p, a, du / 2.0);
            fine.step(&p, b, du / 2.0);
            coarse.step(&p, a + b, du);
        }
        assert!(coarse.w == fine.w || (coarse.w - fine.w).abs() < 1e-12);
        worst = worst.max((coarse.clock - fine.clock).abs() / fine.clock);
    }
    assert!(worst <= 0.01, "relative clock change {worst}");
}

#[test]
fn embedded_walk_without_field_is_simple() {
    let n = 10;
    let p = PotentialProfile::build(&vec![0.0; n], n, 1, 1.0).unwrap();
    let s = embed_rwre(&p, 100_000, DEFAULT_RESOLUTION, &mut replicate_rng(30, 0)).unwrap();
    s.check_invariants().unwrap();
    let ups = s.walk.windows(2).filter(|w| w[1] > w[0]).count();
    let est = Estimate::proportion(ups, s.steps());
    assert!(est.within(0.5, 3.0), "{est:?}");
    // mean exit time of ±1/n is 1/n²
    let mean_gap = s.sigma[s.steps()] / s.steps() as f64 * (n * n) as f64;
    assert!((mean_gap - 1.0).abs() < 0.03, "{mean_gap}");
}

#[test]
fn embedded_steps_are_unit() {
    let p = random_profile(15, 2, 31);
    let s = embed_rwre(&p, 3000, DEFAULT_RESOLUTION, &mut replicate_rng(32, 0)).unwrap();
    s.check_invariants().unwrap();
    assert!(s.walk.windows(2).all(|w| (w[1] - w[0]).abs() == 1));
    let mut out = csv::Writer::from_writer(Vec::new());
    s.write_csv(&mut out, 0).unwrap();
    let text = String::from_utf8(out.into_inner().unwrap()).unwrap();
    assert_eq!(text.lines().count(), 3001);
}

#[test]
fn coarse_embedding_is_resolution_error() {
    let p = PotentialProfile::build(&vec![0.0; 10], 10, 1, 1.0).unwrap();
    let r = embed_rwre(&p, 1000, 50.0, &mut replicate_rng(33, 0));
    assert!(matches!(r, Err(SimError::Resolution(_))), "{r:?}");
    assert!(matches!(embed_rwre(&p, 10, 0.0, &mut replicate_rng(33, 0)), Err(SimError::Config(_))));
}

#[test]
fn embedded_and_direct_walks_agree_in_law() {
    let n = 10;
    let p = random_profile(n, 1, 34);
    let emb: Vec<f64> = run_replicates(&MonteCarlo::new(3000, 35), |_, rng| {
        Ok(*embed_rwre(&p, n * n, DEFAULT_RESOLUTION, rng)?.walk.last().unwrap() as f64)
    })
    .values;
    let dir: Vec<f64> =
        run_replicates(&MonteCarlo::new(3000, 36), |_, rng| Ok(*direct_rwre(&p, n * n, rng).last().unwrap() as f64))
            .values;
    let ks = ks_two_sample(&emb, &dir).unwrap();
    assert!(!ks.rejects(0.01), "{ks:?}");
}

#[test]
fn exit_time_has_unit_mean() {
    let r = exit_time_stats(&MonteCarlo::new(10_000, 40), 1e-4).unwrap();
    assert!(r.mean.within(1.0, 3.0), "{:?}", r.mean);
    assert!(r.min > 0.0);
    assert!(r.median < r.mean.value);
    assert!(matches!(exit_time_stats(&MonteCarlo::new(999, 40), 1e-4), Err(SimError::Precondition(_))));
}

fn sigma_config(n_list: Vec<usize>, t: f64, kernel: CovarianceKernel) -> SigmaConfig {
    SigmaConfig {
        n_list,
        t,
        k1: 1,
        environment: EnvironmentConfig::new(10, 0.0, kernel),
        resolution: DEFAULT_RESOLUTION,
        grid_points: 200,
    }
}

#[test]
fn sigma_deviation_edge_cases() {
    let rows = sigma_convergence_report(&sigma_config(vec![10], 0.0, CovarianceKernel::Zero), &MonteCarlo::new(5, 1))
        .unwrap();
    assert_eq!(rows[0].median, 0.0);
    assert!(sigma_convergence_report(&sigma_config(vec![], 1.0, CovarianceKernel::Zero), &MonteCarlo::new(5, 1))
        .is_err());

    let n = 10;
    let p = PotentialProfile::build(&vec![0.0; n], n, 1, 1.0).unwrap();
    let s = embed_rwre(&p, n * n, DEFAULT_RESOLUTION, &mut replicate_rng(41, 0)).unwrap();
    let grid = s.sigma_deviation(1.0, 200);
    // brute force: every lattice time and its right end, straight from the stored schedule
    let n2 = (n * n) as f64;
    let mut brute: f64 = 0.0;
    for j in 0..=(n * n) {
        for s_val in [j as f64 / n2, ((j + 1) as f64 / n2).min(1.0)] {
            brute = brute.max((s.sigma[j] - s_val).abs());
        }
    }
    assert!(grid.is_finite());
    assert!(grid <= brute + 1e-15);
    assert!((s.sigma_deviation_sup(1.0) - brute).abs() < 1e-15);
}

#[test]
fn sigma_deviation_shrinks_with_n() {
    let rows = sigma_convergence_report(
        &sigma_config(vec![10, 40], 1.0, CovarianceKernel::Constant { gamma: 1.0 }),
        &MonteCarlo::new(100, 42),
    )
    .unwrap();
    assert!(rows[1].median < rows[0].median, "{rows:?}");
}
