use snakesim::environment::*;
use snakesim::harness::stats::Estimate;
use snakesim::rng::replicate_rng;
use snakesim::snake::*;
use snakesim::testfn::TestFunction;

fn env(n: usize, levels: usize, kernel: CovarianceKernel, seed: u64) -> EnvironmentRealization {
    let cfg = EnvironmentConfig::new(n, 0.0, kernel);
    EnvironmentFactory::new(&cfg).unwrap().realize(levels, &mut replicate_rng(seed, 999))
}

fn record_from_levels(n: usize, top: usize, levels: &[u32]) -> ContourRecord {
    let mut r = ContourRecord::new(n, top, &[0.0]);
    for (i, &l) in levels.iter().enumerate().skip(1) {
        r.push(l as usize, &[i as f64]);
    }
    r
}

#[test]
fn reflections_are_forced() {
    let e = env(4, 4, CovarianceKernel::Zero, 1);
    let mut rng = replicate_rng(1, 0);
    let mut s = SnakeState::new(&[0.0]);
    let o = snake_step(&mut s, &e, 1, &mut rng).unwrap();
    assert!(o.up && o.forced && s.level == 1);
    assert_eq!(s.path.len(), 2);
    let o = snake_step(&mut s, &e, 1, &mut rng).unwrap();
    assert!(!o.up && o.forced && s.level == 0);
    assert_eq!(s.path, vec![0.0]);
}

#[test]
fn critical_contour_steps_are_fair() {
    let e = env(4, 1000, CovarianceKernel::Zero, 2);
    let cfg = SnakeConfig::new(250.0, 1);
    let run = run_snake(&cfg, Horizon::Steps { steps: 100_000 }, &e, &mut replicate_rng(2, 0)).unwrap();
    let rec = &run.record;
    let interior: Vec<bool> = (0..rec.steps()).filter(|&i| !rec.forced(i)).map(|i| rec.up(i)).collect();
    let p = Estimate::proportion(interior.iter().filter(|&&u| u).count(), interior.len());
    assert!(p.within(0.5, 3.0), "{p:?}");
}

#[test]
fn zigzag_inverse_local_time() {
    let e = env(1, 1, CovarianceKernel::Zero, 3);
    let cfg = SnakeConfig::new(1.0, 1);
    let run = run_snake(&cfg, Horizon::LocalTime { c0: 6.0, max_steps: 1000 }, &e, &mut replicate_rng(3, 0)).unwrap();
    assert!(!run.truncated);
    let want: Vec<u32> = (0..=12).map(|i| (i % 2) as u32).collect();
    assert_eq!(run.record.levels, want);
    for r in 0..6 {
        assert_eq!(inverse_local_time(&run.ledger, 0.0, r as f64).unwrap(), 2.0 * r as f64);
    }
}

#[test]
fn unit_local_time_stops_after_first_excursion() {
    let e = env(1, 1, CovarianceKernel::Zero, 4);
    let run = run_snake(&SnakeConfig::new(1.0, 1), Horizon::LocalTime { c0: 1.0, max_steps: 100 }, &e, &mut replicate_rng(4, 0))
        .unwrap();
    assert_eq!(run.record.steps(), 2);
    assert!(local_time(&run.ledger, 0.0, 2.0).unwrap() > 1.0);
}

#[test]
fn zigzag_local_time_counts() {
    let e = env(1, 1, CovarianceKernel::Zero, 5);
    let run = run_snake(&SnakeConfig::new(1.0, 1), Horizon::Steps { steps: 4 }, &e, &mut replicate_rng(5, 0)).unwrap();
    assert_eq!(run.record.levels, vec![0, 1, 0, 1, 0]);
    assert_eq!(run.ledger.local_time_after_steps(0, 4), 2.0);
    assert_eq!(local_time(&run.ledger, 0.0, 4.0).unwrap(), 2.0);
    assert_eq!(run.ledger.local_time_after_steps(0, 0), 0.0);
}

#[test]
fn truncation_is_flagged() {
    let e = env(10, 10, CovarianceKernel::Zero, 6);
    let run = run_snake(&SnakeConfig::new(1.0, 1), Horizon::LocalTime { c0: 100.0, max_steps: 50 }, &e, &mut replicate_rng(6, 0))
        .unwrap();
    assert!(run.truncated);
    assert_eq!(run.record.steps(), 50);
    assert!(run_snake(&SnakeConfig::new(1.0, 1), Horizon::Steps { steps: 0 }, &e, &mut replicate_rng(6, 1)).is_err());
    assert!(run_snake(&SnakeConfig::new(0.55, 1), Horizon::Steps { steps: 5 }, &e, &mut replicate_rng(6, 1)).is_err());
}

#[test]
fn run_invariants_and_ledger_consistency() {
    for seed in 0..20 {
        let n = 12;
        let e = env(n, 2 * n, CovarianceKernel::Constant { gamma: 1.0 }, seed);
        let run = run_snake(&SnakeConfig::new(2.0, 1), Horizon::LocalTime { c0: 1.5, max_steps: 1_000_000 }, &e, &mut replicate_rng(7, seed))
            .unwrap();
        let rec = &run.record;
        rec.check_invariants().unwrap();
        assert_eq!(*rec.levels.last().unwrap(), 0);
        let mut up = vec![0usize; rec.top + 1];
        let mut down = vec![0usize; rec.top + 1];
        for i in 0..rec.steps() {
            if rec.up(i) {
                up[rec.level(i)] += 1;
            } else {
                down[rec.level(i) - 1] += 1;
            }
        }
        assert_eq!(up.iter().sum::<usize>() + down.iter().sum::<usize>(), rec.steps());
        let totals = run.ledger.totals();
        for m in 0..rec.top {
            let pending = usize::from(m == 0);
            assert_eq!(totals[m], up[m] + pending);
            assert!((up[m] as i64 - down[m] as i64).abs() <= 1);
            let list = run.ledger.upcrossings(m);
            assert!(list.windows(2).all(|w| w[0] < w[1]));
        }
        // ℓ^0 first exceeds c0 at the terminal state
        let steps = rec.steps() as u64;
        assert!(run.ledger.count_by_step(0, steps) as f64 / n as f64 > 1.5);
        assert!(run.ledger.count_by_step(0, steps - 1) as f64 / n as f64 <= 1.5);
    }
}

#[test]
fn inverse_local_time_round_trip() {
    let n = 10;
    let e = env(n, n, CovarianceKernel::Zero, 8);
    let run = run_snake(&SnakeConfig::new(1.0, 1), Horizon::LocalTime { c0: 3.0, max_steps: 10_000_000 }, &e, &mut replicate_rng(8, 0))
        .unwrap();
    for a in [0.0, 0.3, 0.5] {
        let lvl = run.ledger.level_index(a).unwrap();
        let total = run.ledger.upcrossings(lvl).len() as f64 / n as f64;
        for r in [0.0, 0.05, 0.1, 0.37, 1.0] {
            if r >= total {
                assert!(inverse_local_time(&run.ledger, a, r).is_err());
                continue;
            }
            let tau = inverse_local_time(&run.ledger, a, r).unwrap();
            let l = local_time(&run.ledger, a, tau).unwrap();
            assert!(l > r && l <= r + 1.0 / n as f64 + 1e-12, "a={a} r={r} l={l}");
            let before = local_time(&run.ledger, a, tau - 1.0 / (n * n) as f64).unwrap();
            assert!(before <= r);
        }
    }
    // local time before the first upcrossing of a level is zero
    let lvl = run.ledger.level_index(0.5).unwrap();
    let first = run.ledger.upcrossings(lvl)[0];
    assert_eq!(run.ledger.count_by_step(lvl, first - 1), 0);
}

#[test]
fn occupation_measure_examples() {
    let n = 20;
    let e = env(n, n, CovarianceKernel::Zero, 9);
    let run = run_snake(&SnakeConfig::new(1.0, 1), Horizon::LocalTime { c0: 2.0, max_steps: 100_000_000 }, &e, &mut replicate_rng(9, 0))
        .unwrap();
    let one = TestFunction::one();
    let (rec, led) = (&run.record, &run.ledger);
    let x0 = occupation_measure(rec, led, 0.0, 2.0, 0.0, 0.0, &one).unwrap();
    assert!((x0 - 2.0).abs() < 1e-12);
    let cos = TestFunction::Cosine { amplitude: 1.0, wavenumber: 1.0 };
    for t in [0.0, 0.25, 0.5, 0.9] {
        for phi in [&one, &cos] {
            let whole = occupation_measure(rec, led, 0.0, 2.0, 0.0, t, phi).unwrap();
            let a = occupation_measure(rec, led, 0.0, 0.75, 0.0, t, phi).unwrap();
            let b = occupation_measure(rec, led, 0.75, 2.0, 0.0, t, phi).unwrap();
            assert!((whole - a - b).abs() < 1e-12);
        }
        assert!(occupation_measure(rec, led, 0.0, 2.0, 0.0, t, &one).unwrap() >= 0.0);
    }
    assert!(occupation_measure(rec, led, 1.0, 0.5, 0.0, 0.2, &one).is_err());
    assert!(occupation_measure(rec, led, 0.0, 1.0, 0.5, 0.2, &one).is_err());
    // window of the first excursion only: nothing above its height
    let r = record_from_levels(1, 3, &[0, 1, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
    let l = LocalTimeLedger::from_record(&r, true);
    assert_eq!(occupation_measure(&r, &l, 0.0, 1.0, 0.0, 2.0, &one).unwrap(), 0.0);
    assert_eq!(occupation_measure(&r, &l, 1.0, 2.0, 0.0, 2.0, &one).unwrap(), 1.0);
}

#[test]
fn occupation_identity_examples() {
    let r = record_from_levels(1, 1, &[0, 1, 0, 1, 0]);
    let l = LocalTimeLedger::from_record(&r, false);
    let id = occupation_identity_report(&r, &l, 4.0, 0.0);
    assert_eq!(id.lhs, 2.0);
    assert!(id.gap <= 2.0);
    let n = 10;
    let e = env(n, n, CovarianceKernel::Zero, 10);
    let run = run_snake(&SnakeConfig::new(1.0, 1), Horizon::Steps { steps: 5000 }, &e, &mut replicate_rng(10, 0)).unwrap();
    let t = run.record.steps() as f64 / (n * n) as f64;
    let id = occupation_identity_report(&run.record, &run.ledger, t, 1.0);
    assert!((id.rhs - t).abs() < 1e-12);
}

#[test]
fn single_excursion_reversal_is_identity() {
    let r = record_from_levels(1, 3, &[0, 1, 2, 3, 2, 1, 0]);
    assert_eq!(reverse_transform(&r, 0).unwrap(), r);
}

#[test]
fn two_excursions_are_swapped() {
    let r = record_from_levels(1, 3, &[0, 1, 0, 1, 2, 1, 0]);
    let t = reverse_transform(&r, 0).unwrap();
    assert_eq!(t.levels, vec![0, 1, 2, 1, 0, 1, 0]);
    // tips travel with their states
    let tips: Vec<f64> = t.tips.clone();
    assert_eq!(tips, vec![0.0, 3.0, 4.0, 5.0, 2.0, 1.0, 6.0]);
    let open = record_from_levels(1, 3, &[0, 1, 2]);
    assert!(reverse_transform(&open, 0).is_err());
}

#[test]
fn full_reversal_is_pathwise_time_reversal() {
    for n in [1usize, 5, 20] {
        for k1 in [1usize, 2] {
            for seed in 0..100u64 {
                let e = env(n, n * k1, CovarianceKernel::Zero, seed);
                let run = run_snake(
                    &SnakeConfig::new(k1 as f64, 1),
                    Horizon::LocalTime { c0: 1.0, max_steps: 100_000_000 },
                    &e,
                    &mut replicate_rng(100 + seed, n as u64 * 10 + k1 as u64),
                )
                .unwrap();
                let rev = full_reversal(&run.record).unwrap();
                let mut want = run.record.levels.clone();
                want.reverse();
                assert_eq!(rev.levels, want, "n={n} k1={k1} seed={seed}");
            }
        }
    }
}

#[test]
fn single_transform_preserves_counts() {
    let n = 8;
    let e = env(n, 2 * n, CovarianceKernel::Constant { gamma: 1.0 }, 11);
    let run = run_snake(&SnakeConfig::new(2.0, 1), Horizon::LocalTime { c0: 2.0, max_steps: 100_000_000 }, &e, &mut replicate_rng(11, 0))
        .unwrap();
    let base = LocalTimeLedger::from_record(&run.record, true);
    let occ = |r: &ContourRecord| {
        let mut c = vec![0usize; r.top + 1];
        r.levels.iter().for_each(|&l| c[l as usize] += 1);
        c
    };
    for z in 0..run.record.top {
        let t = reverse_transform(&run.record, z).unwrap();
        t.check_invariants().unwrap();
        assert_eq!(t.steps(), run.record.steps());
        assert_eq!(LocalTimeLedger::from_record(&t, true).totals(), base.totals());
        assert_eq!(occ(&t), occ(&run.record));
    }
}

#[test]
fn displacement_counts_agree() {
    for seed in 0..10 {
        let n = 16;
        let cfg = EnvironmentConfig { dim: 2, ..EnvironmentConfig::new(n, 0.0, CovarianceKernel::Zero) };
        let e = EnvironmentFactory::new(&cfg).unwrap().realize(n, &mut replicate_rng(seed, 5));
        let run = run_snake(&SnakeConfig::new(1.0, 2), Horizon::LocalTime { c0: 2.0, max_steps: 100_000_000 }, &e, &mut replicate_rng(12, seed))
            .unwrap();
        let (r, l) = (&run.record, &run.ledger);
        for (a, d, eta) in [(0.25, 0.25, 0.1), (0.0, 0.5, 0.0), (0.1, 0.2, 0.3)] {
            let s = displacement_count(r, l, a, d, eta);
            assert_eq!(s, displacement_count_bruteforce(r, l, a, d, eta));
        }
        assert_eq!(displacement_count(r, l, 0.25, 0.25, 40.0), 0);
        assert_eq!(displacement_count(r, l, 0.5, 0.7, 0.1), 0);
    }
}

#[test]
fn path_reconstruction_matches_live_state() {
    let n = 9;
    let e = env(n, n, CovarianceKernel::Zero, 13);
    let mut paths = Vec::new();
    let run = run_snake_with(&SnakeConfig::new(1.0, 1), Horizon::Steps { steps: 400 }, &e, &mut replicate_rng(13, 0), |s, _| {
        paths.push(s.path.clone())
    })
    .unwrap();
    for (i, p) in paths.iter().enumerate() {
        assert_eq!(&run.record.path_at(i + 1), p);
    }
}
