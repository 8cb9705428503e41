use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ks::ks_two_sample;
use super::mp::{forward_paths, mp_residual_test};
use super::runner::{run_replicates, MonteCarlo};
use super::stats::{mean, median, Estimate, SummaryStats, Verdict};
use super::theorem1::{theorem1_representation_check, Theorem1Config};
use crate::branching::{
    estimate_survival_mc, exact_survival_geometric, generations, mass_moment_report, survival_closed_form,
    survival_rate_h, InitialCondition, SurvivalOracleParams,
};
use crate::brox::{
    direct_rwre, embed_rwre, exit_time_stats, sample_profile, sigma_convergence_report, tent, SigmaConfig,
    DEFAULT_RESOLUTION,
};
use crate::environment::{
    BuiltinField, CovarianceKernel, DeterministicEnvironment, EnvironmentConfig, EnvironmentFactory, EnvironmentMode,
};
use crate::error::{Result, SimError};
use crate::functional::{
    bracket_target, functional_series, limit_target, tanaka_quadratic_variation, FunctionalConfig,
};
use crate::rng::derive_seed;
use crate::snake::{
    full_reversal, inverse_local_time, local_time, occupation_identity_report, reverse_transform, run_snake,
    ContourStatistics, Horizon, SnakeConfig,
};
use crate::testfn::TestFunction;

/// Experiment ids accepted by [`run_experiment`].
pub const EXPERIMENTS: [&str; 8] =
    ["survival", "branching-mp", "snake", "reversal", "occupation", "functional", "brox", "theorem1"];

/// Time horizons and related knobs shared by the experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorizonParams {
    /// Survival and mass horizon δ.
    pub delta: f64,
    /// Run length t (in units of n² steps for the snake, n generations forward).
    pub t: f64,
    /// Local-time stopping level c₀ at 0.
    pub c0: f64,
    /// Initial mass r (⌊rn⌋ particles, or ⌊rn⌋ excursions).
    pub r: f64,
    /// Reflection height K₁.
    pub k1: f64,
    /// Observation times.
    pub times: Vec<f64>,
    /// Step budget per snake run.
    pub max_steps: u64,
}

impl Default for HorizonParams {
    fn default() -> Self {
        HorizonParams { delta: 1.0, t: 1.0, c0: 1.0, r: 1.0, k1: 1.0, times: vec![0.25, 0.5], max_steps: 200_000_000 }
    }
}

/// Everything needed to rerun one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: String,
    pub seed: u64,
    pub replicates: u64,
    /// 0 = rayon default. Results do not depend on it.
    #[serde(default)]
    pub workers: usize,
    pub n: Vec<usize>,
    /// Environment law; `n` is replaced by each entry of the n list.
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub horizon: HorizonParams,
    #[serde(default)]
    pub phi: Vec<TestFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn bad(path: impl Into<String>, message: impl Into<String>) -> SimError {
    SimError::Validation { path: path.into(), message: message.into() }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // an explicit kernel or mode replaces the default wholesale
                    Some(slot) if k != "kernel" && k != "mode" && slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl ExperimentSpec {
    /// Built-in defaults for one experiment id.
    pub fn defaults(id: &str) -> Result<Self> {
        let zero = CovarianceKernel::Zero;
        let constant = CovarianceKernel::Constant { gamma: 1.0 };
        let env = |n: usize, kernel: CovarianceKernel| EnvironmentConfig::new(n, 0.0, kernel);
        let (replicates, n, environment, phi) = match id {
            "survival" => (10_000, vec![100], env(100, zero), vec![]),
            "branching-mp" => (2_000, vec![100], env(100, zero), vec![TestFunction::one()]),
            "snake" => (200, vec![20], env(20, constant), vec![]),
            "reversal" => (1_000, vec![10], env(10, constant), vec![]),
            "occupation" => (100, vec![10, 50], env(10, zero), vec![]),
            "functional" => (
                500,
                vec![20, 50],
                EnvironmentConfig::deterministic(20, BuiltinField::SineProduct { amplitude: 1.0, wavenumber: 1.0 }),
                vec![],
            ),
            "brox" => (1_000, vec![10, 30], env(10, constant), vec![]),
            "theorem1" => (2_000, vec![20], env(20, zero), vec![TestFunction::one()]),
            other => {
                return Err(bad("experiment", format!("unknown experiment `{other}`; expected one of {EXPERIMENTS:?}")))
            }
        };
        let mut horizon = HorizonParams::default();
        if id == "theorem1" {
            horizon.times = vec![0.0, 0.25, 0.5];
        }
        if id == "occupation" {
            horizon.times = vec![0.5, 1.0];
        }
        Ok(ExperimentSpec {
            experiment: id.to_string(),
            seed: 1,
            replicates,
            workers: 0,
            n,
            environment,
            horizon,
            phi,
            output: None,
        })
    }

    /// Parses a TOML spec; keys that are absent take the defaults of the named
    /// experiment (or of `fallback` when the file names none).
    pub fn from_toml_str(text: &str, fallback: Option<&str>) -> Result<Self> {
        let user: toml::Value = toml::from_str(text)?;
        let id = user
            .get("experiment")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .or(fallback.map(str::to_string))
            .ok_or_else(|| bad("experiment", "missing experiment id"))?;
        let defaults = Self::defaults(&id)?;
        let mut value = toml::Value::try_from(&defaults)?;
        merge(&mut value, user);
        if let Some(t) = value.as_table_mut() {
            t.insert("experiment".into(), toml::Value::String(id));
        }
        let spec: ExperimentSpec = value.try_into()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn monte_carlo(&self) -> MonteCarlo {
        MonteCarlo::new(self.replicates, self.seed).with_workers(self.workers)
    }

    /// Environment config at one n.
    pub fn environment_at(&self, n: usize) -> EnvironmentConfig {
        let mut e = self.environment.clone();
        e.n = n;
        e
    }

    pub fn validate(&self) -> Result<()> {
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return Err(bad("experiment", format!("unknown experiment `{}`", self.experiment)));
        }
        if self.replicates == 0 {
            return Err(bad("replicates", "must be at least 1"));
        }
        if self.n.is_empty() {
            return Err(bad("n", "must list at least one value"));
        }
        for (i, &n) in self.n.iter().enumerate() {
            if n == 0 {
                return Err(bad(format!("n[{i}]"), "must be positive"));
            }
            self.environment_at(n).validate()?;
        }
        let h = &self.horizon;
        for (name, v) in [("delta", h.delta), ("t", h.t), ("c0", h.c0), ("r", h.r), ("k1", h.k1)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(format!("horizon.{name}"), "must be positive and finite"));
            }
        }
        for (i, &t) in h.times.iter().enumerate() {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(bad(format!("horizon.times[{i}]"), "must be finite and non-negative"));
            }
        }
        let uses_snake = matches!(
            self.experiment.as_str(),
            "snake" | "reversal" | "occupation" | "functional" | "theorem1" | "brox"
        );
        if uses_snake {
            for (i, &n) in self.n.iter().enumerate() {
                SnakeConfig::new(h.k1, self.environment.dim)
                    .top(n)
                    .map_err(|_| bad("horizon.k1", format!("n[{i}]·K1 must be a positive integer")))?;
            }
        }
        match self.experiment.as_str() {
            "branching-mp" | "theorem1" if self.phi.is_empty() => return Err(bad("phi", "needs a test function")),
            "theorem1" => {
                if self.replicates < 50 {
                    return Err(bad("replicates", "KS comparisons need at least 50"));
                }
                for (i, &t) in h.times.iter().enumerate() {
                    if t > h.k1 {
                        return Err(bad(format!("horizon.times[{i}]"), "must not exceed K1"));
                    }
                }
            }
            "reversal" | "brox" if self.replicates < 50 => {
                return Err(bad("replicates", "KS comparisons need at least 50"))
            }
            "survival" if self.replicates < 100 => return Err(bad("replicates", "need at least 100")),
            "functional" if !matches!(self.environment.mode, EnvironmentMode::Deterministic { .. } | EnvironmentMode::SmoothGaussian { .. }) => {
                return Err(bad("environment.mode", "the functional experiment needs a smooth or deterministic field"))
            }
            _ => {}
        }
        Ok(())
    }
}

/// A CSV file of the result bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub content: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub seed: u64,
    pub replicates: u64,
    pub n: Vec<usize>,
    pub checks: Vec<SummaryStats>,
    pub replicate_failures: usize,
    pub all_pass: bool,
    #[serde(skip)]
    pub tables: Vec<CsvTable>,
}

impl ExperimentResult {
    fn new(spec: &ExperimentSpec) -> Self {
        ExperimentResult {
            experiment: spec.experiment.clone(),
            seed: spec.seed,
            replicates: spec.replicates,
            n: spec.n.clone(),
            checks: Vec::new(),
            replicate_failures: 0,
            all_pass: true,
            tables: Vec::new(),
        }
    }

    fn finish(mut self) -> Self {
        self.all_pass = self.checks.iter().all(|c| c.verdict != Verdict::Fail);
        self
    }

    /// 0 when every pass/fail check passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_pass {
            0
        } else {
            1
        }
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes summary.json and every CSV table into `dir`.
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.json"), self.summary_json()?)?;
        for t in &self.tables {
            fs::write(dir.join(&t.name), &t.content)?;
        }
        Ok(())
    }
}

fn csv_string<F: FnOnce(&mut Vec<u8>) -> Result<()>>(f: F) -> Result<String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    String::from_utf8(buf).map_err(|e| SimError::Serialization(e.to_string()))
}

fn table(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    csv_string(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Runs one validated experiment.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut out = ExperimentResult::new(spec);
    match spec.experiment.as_str() {
        "survival" => survival(spec, &mut out)?,
        "branching-mp" => branching_mp(spec, &mut out)?,
        "snake" => snake(spec, &mut out)?,
        "reversal" => reversal(spec, &mut out)?,
        "occupation" => occupation(spec, &mut out)?,
        "functional" => functional(spec, &mut out)?,
        "brox" => brox(spec, &mut out)?,
        "theorem1" => theorem1(spec, &mut out)?,
        _ => unreachable!("validated"),
    }
    Ok(out.finish())
}

fn mc_for(spec: &ExperimentSpec, n: usize, tag: u64) -> MonteCarlo {
    spec.monte_carlo().with_seed(derive_seed(spec.seed, (n as u64) << 8 | tag))
}

fn survival(spec: &ExperimentSpec, out: &mut ExperimentResult) -> Result<()> {
    let delta = spec.horizon.delta;
    let mut rows = Vec::new();
    for &n in &spec.n {
        let cfg = spec.environment_at(n);
        let k = generations(n, delta);
        let b = cfg.growth_rate();
        let degenerate = cfg.kernel == CovarianceKernel::Zero && cfg.mode == EnvironmentMode::Random;
        let params = SurvivalOracleParams::new(b, n, k);
        let iter = exact_survival_geometric(params)?;
        let closed = survival_closed_form(params)?;
        let rel = (iter - closed).abs() / closed.abs().max(f64::MIN_POSITIVE);
        out.checks.push(
            SummaryStats::new(format!("n{n}.oracle_agreement"), rel, 0.0, 0.0)
                .note("iterated generating function vs closed form")
                .rule("relative difference <= 1e-12", rel <= 1e-12),
        );
        let est = estimate_survival_mc(&cfg, delta, &mc_for(spec, n, 0))?;
        out.replicate_failures += est.failures;
        let scaled = est.estimate.scaled(n as f64);
        let h = survival_rate_h(b, delta);
        let row = if degenerate {
            SummaryStats::new(format!("n{n}.survival"), scaled.value, scaled.se, n as f64 * iter)
                .note("n * exact survival of the degenerate environment")
                .rule("within 3 SE", scaled.within(n as f64 * iter, 3.0))
        } else {
            let rel_se = if scaled.value > 0.0 { scaled.se / scaled.value } else { 0.0 };
            SummaryStats::new(format!("n{n}.survival"), scaled.value, scaled.se, h)
                .note("upper bound h(b, delta)")
                .rule("<= h (1 + 3 rel-SE)", scaled.value <= h * (1.0 + 3.0 * rel_se))
        };
        out.checks.push(row);
        out.checks.push(
            SummaryStats::new(format!("n{n}.h_limit"), n as f64 * iter, 0.0, h)
                .note("n * exact survival against its limit")
                .informational(format!("gap {:.3e}", (n as f64 * iter - h).abs())),
        );
        rows.push(vec![
            n.to_string(),
            k.to_string(),
            b.to_string(),
            scaled.value.to_string(),
            scaled.se.to_string(),
            (n as f64 * iter).to_string(),
            h.to_string(),
        ]);
    }
    out.tables.push(CsvTable {
        name: "survival.csv".into(),
        content: table(&["n", "k", "b", "n_phat", "se", "n_exact", "h"], &rows)?,
    });
    Ok(())
}

fn phi_label(phi: &TestFunction) -> &'static str {
    match phi {
        TestFunction::Constant { .. } => "constant",
        TestFunction::Cosine { .. } => "cosine",
        TestFunction::GaussianBump { .. } => "bump",
    }
}

fn branching_mp(spec: &ExperimentSpec, out: &mut ExperimentResult) -> Result<()> {
    let h = &spec.horizon;
    for &n in &spec.n {
        let cfg = spec.environment_at(n);
        let count = generations(n, h.r).max(1);
        let initial = InitialCondition::at_origin(count, cfg.dim);
        for (j, phi) in spec.phi.iter().enumerate() {
            let (paths, failures) = forward_paths(&cfg, &initial, h.t, phi, &mc_for(spec, n, j as u64))?;
            out.replicate_failures += failures;
            let rep = mp_residual_test(&paths, cfg.growth_rate())?;
            let label = format!("n{n}.{}{j}", phi_label(phi));
            out.checks.extend(rep.summary(&label));
            out.tables.push(CsvTable {
                name: format!("mp_n{n}_{}{j}.csv", phi_label(phi)),
                content: csv_string(|b| rep.write_csv(b))?,
            });
        }
        if spec.replicates >= 100 {
            let x0 = count as f64 / n as f64;
            let rep = mass_moment_report(&cfg, &initial, h.t, &[2.0 * x0, 4.0 * x0], &mc_for(spec, n, 100))?;
            out.replicate_failures += rep.failures;
            let m = rep.mean_final_mass;
            out.checks.push(
                SummaryStats::new(format!("n{n}.mean_mass"), m.value, m.se, rep.mean_bound)
                    .note("X_0 (1 + b/n)^k")
                    .rule("<= bound + 3 SE", rep.mean_bound_ok),
            );
            for tail in &rep.tails {
                out.checks.push(
                    SummaryStats::new(
                        format!("n{n}.max_mass_tail_{}", tail.level),
                        tail.probability.value,
                        tail.probability.se,
                        tail.bound,
                    )
                    .note("P(sup mass >= a) against X_0 e^{b delta}/a")
                    .rule("<= bound + 3 SE", tail.ok),
                );
            }
            let g = rep.empirical_growth_rate;
            out.checks.push(
                SummaryStats::new(format!("n{n}.growth_rate"), g.value, g.se, rep.growth_rate_b)
                    .note(format!("b = {}, b/2 = {}", rep.growth_rate_b, rep.growth_rate_b / 2.0))
                    .informational("which of b and b/2 the empirical rate matches"),
            );
        }
    }
    Ok(())
}

fn snake(spec: &ExperimentSpec, out: &mut ExperimentResult) -> Result<()> {
    let h = &spec.horizon;
    for &n in &spec.n {
        let cfg = spec.environment_at(n);
        let factory = EnvironmentFactory::new(&cfg)?;
        let sc = SnakeConfig::new(h.k1, cfg.dim);
        let top = sc.top(n)?;
        let horizon = Horizon::LocalTime { c0: h.c0, max_steps: h.max_steps };
        let res = run_replicates(&mc_for(spec, n, 0), |i, rng| {
            let env = factory.realize(top, rng);
            let run = run_snake(&sc, horizon, &env, rng)?;
            let invariants = run.record.check_invariants().is_ok();
            let (mut ups, mut interior) = (0usize, 0usize);
            for k in 0..run.record.steps() {
                if !run.record.forced(k) {
                    interior += 1;
                    ups += run.record.up(k) as usize;
                }
            }
            let r = h.c0 / 2.0;
            let inverse_ok = match inverse_local_time(&run.ledger, 0.0, r) {
                Ok(tau) => {
                    let l = local_time(&run.ledger, 0.0, tau)?;
                    l > r && l <= r + 1.0 / n as f64 + 1e-12
                }
                Err(_) => false,
            };
            let tables = if i == 0 {
                let mut c = Vec::new();
                run.record.write_csv(&mut c)?;
                let mut l = Vec::new();
                run.ledger.write_csv(&mut l)?;
                Some((c, l))
            } else {
                None
            };
            let tau = run.record.steps() as f64 / (n * n) as f64;
            Ok((invariants && !run.truncated, ups, interior, inverse_ok, tau, tables))
        });
        out.replicate_failures += res.failure_count();
        let res = res.require_some()?;
        let all_inv = res.values.iter().all(|v| v.0);
        let all_inv_ok = res.values.iter().all(|v| v.3);
        let ups: usize = res.values.iter().map(|v| v.1).sum();
        let interior: usize = res.values.iter().map(|v| v.2).sum();
        let taus: Vec<f64> = res.values.iter().map(|v| v.4).collect();
        out.checks.push(
            SummaryStats::new(format!("n{n}.contour_invariants"), all_inv as u8 as f64, 0.0, 1.0)
                .note("unit steps, reflection at 0 and top, stopping rule reached")
                .rule("every replicate", all_inv),
        );
        out.checks.push(
            SummaryStats::new(format!("n{n}.inverse_local_time"), all_inv_ok as u8 as f64, 0.0, 1.0)
                .note("l(tau_r) > r and <= r + 1/n at level 0")
                .rule("every replicate", all_inv_ok),
        );
        if interior > 0 {
            let p = Estimate::proportion(ups, interior);
            let row = SummaryStats::new(format!("n{n}.interior_up_frequency"), p.value, p.se, 0.5);
            out.checks.push(if cfg.kernel == CovarianceKernel::Zero && cfg.nu == 0.0 {
                row.note("fair walk without environment").rule("within 3 SE", p.within(0.5, 3.0))
            } else {
                row.informational("environment present")
            });
        }
        let tau = Estimate::mean_of(&taus);
        out.checks.push(
            SummaryStats::new(format!("n{n}.tau"), tau.value, tau.se, f64::NAN)
                .informational("mean stopping time tau at level 0"),
        );
        if let Some((c, l)) = res.values.first().and_then(|v| v.5.clone()) {
            out.tables.push(CsvTable { name: format!("contour_n{n}.csv"), content: String::from_utf8_lossy(&c).into() });
            out.tables.push(CsvTable { name: format!("ledger_n{n}.csv"), content: String::from_utf8_lossy(&l).into() });
        }
    }
    Ok(())
}

fn reversal(spec: &ExperimentSpec, out: &mut ExperimentResult) -> Result<()> {
    let h = &spec.horizon;
    let mut rows = Vec::new();
    for &n in &spec.n {
        let cfg = spec.environment_at(n);
        let factory = EnvironmentFactory::new(&cfg)?;
        let sc = SnakeConfig::new(h.k1, cfg.dim);
        let top = sc.top(n)?;
        let horizon = Horizon::LocalTime { c0: h.c0, max_steps: h.max_steps };
        let res = run_replicates(&mc_for(spec, n, 0), |_, rng| {
            let env = factory.realize(top, rng);
            let run = run_snake(&sc, horizon, &env, rng)?;
            if run.truncated {
                return Err(SimError::Precondition("run did not reach tau".into()));
            }
            let rev = full_reversal(&run.record)?;
            let mut back = run.record.levels.clone();
            back.reverse();
            let exact = rev.levels == back;
            let mut raw = Vec::with_capacity(top);
            let mut moved = Vec::with_capacity(top);
            for z in 0..top {
                raw.push(ContourStatistics::of(&run.record, z).as_array());
                moved.push(ContourStatistics::of(&reverse_transform(&run.record, z)?, z).as_array());
            }
            Ok((exact, raw, moved))
        });
        out.replicate_failures += res.failure_count();
        let res = res.require_some()?;
        let exact = res.values.iter().all(|v| v.0);
        out.checks.push(
            SummaryStats::new(format!("n{n}.full_reversal_pathwise"), exact as u8 as f64, 0.0, 1.0)
                .note("composed transforms against the time-reversed contour")
                .rule("exact on every replicate", exact),
        );
        for z in 0..res.values[0].1.len() {
            for (s, name) in ContourStatistics::NAMES.iter().enumerate() {
                let a: Vec<f64> = res.values.iter().map(|v| v.1[z][s]).collect();
                let b: Vec<f64> = res.values.iter().map(|v| v.2[z][s]).collect();
                let ks = ks_two_sample(&a, &b)?;
                out.checks.push(
                    SummaryStats::new(format!("n{n}.T{z}.{name}"), ks.statistic, 0.0, 0.0)
                        .note(format!("raw vs transformed ensemble, p = {:.4}", ks.p_value))
                        .rule("KS p >= 0.01", !ks.rejects(0.01)),
                );
                rows.push(vec![n.to_string(), z.to_string(), name.to_string(), ks.statistic.to_string(), ks.p_value.to_string()]);
            }
        }
    }
    out.tables.push(CsvTable {
        name: "reversal_ks.csv".into(),
        content: table(&["n", "z", "statistic", "ks", "p_value"], &rows)?,
    });
    Ok(())
}

/// Levels y at which the occupation identity is evaluated, as fractions of K₁.
pub const OCCUPATION_Y_FRACTIONS: [f64; 4] = [0.0, 0.25, 0.5, 1.0];

fn occupation(spec: &ExperimentSpec, out: &mut ExperimentResult) -> Result<()> {
    let h = &spec.horizon;
    let times = if h.times.is_empty() { vec![h.t] } else { h.times.clone() };
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let mut rows = Vec::new();
    for &n in &spec.n {
        let cfg = spec.environment_at(n);
        let factory = EnvironmentFactory::new(&cfg)?;
        let sc = SnakeConfig::new(h.k1, cfg.dim);
        let top = sc.top(n)?;
        let steps = ((t_max * (n * n) as f64).ceil() as u64).max(1);
        let res = run_replicates(&mc_for(spec, n, 0), |_, rng| {
            let env = factory.realize(top, rng);
            let run = run_snake(&sc, Horizon::Steps { steps }, &env, rng)?;
            let mut v = Vec::new();
            for &t in &times {
                for f in OCCUPATION_Y_FRACTIONS {
                    v.push(occupation_identity_report(&run.record, &run.ledger, t, f * h.k1));
                }
            }
            Ok(v)
        });
        out.replicate_failures += res.failure_count();
        let res = res.require_some()?;
        let mut j = 0;
        for &t in &times {
            let bound = 5.0 * (h.k1 + 1.0) / n as f64 * t.max(1.0);
            for f in OCCUPATION_Y_FRACTIONS {
                let gaps: Vec<f64> = res.values.iter().map(|v| v[j].gap).collect();
                let worst = gaps.iter().copied().fold(0.0, f64::max);
                let ratio = mean(&res.values.iter().filter(|v| v[j].rhs > 0.0).map(|v| v[j].lhs / v[j].rhs).collect::<Vec<_>>());
                let y = f * h.k1;
                out.checks.push(
                    SummaryStats::new(format!("n{n}.t{t}.y{y}.identity_gap"), worst, 0.0, 0.0)
                        .note(format!("max over replicates; mean lhs/rhs = {ratio:.4}"))
                        .rule(format!("<= 5(K1+1)/n (t v 1) = {bound:.4}"), worst <= bound),
                );
                rows.push(vec![n.to_string(), t.to_string(), y.to_string(), worst.to_string(), median(&gaps).to_string(), ratio.to_string()]);
                j += 1;
            }
        }
    }
    out.tables.push(CsvTable {
        name: "occupation_identity.csv".into(),
        content: table(&["n", "t", "y", "max_gap", "median_gap", "mean_lhs_over_rhs"], &rows)?,
    });
    Ok(())
}

fn functional(spec: &ExperimentSpec, out: &mut ExperimentResult) -> Result<()> {
    let h = &spec.horizon;
    let t = h.t;
    let mut gaps = Vec::new();
    let mut rows = Vec::new();
    for &n in &spec.n {
        let cfg = spec.environment_at(n);
        let factory = EnvironmentFactory::new(&cfg)?;
        let sc = SnakeConfig::new(h.k1, cfg.dim);
        let top = sc.top(n)?;
        let steps = ((t * (n * n) as f64 + 1e-9).floor() as u64).max(1);
        let fast = FunctionalConfig { replay: false, ..FunctionalConfig::default() };
        let res = run_replicates(&mc_for(spec, n, 0), |i, rng| {
            let env = factory.realize(top, rng);
            let run = run_snake(&sc, Horizon::Steps { steps }, &env, rng)?;
            let recon = if i == 0 {
                functional_series(&run.record, &env, &FunctionalConfig::default())?.reconstruction_error()
            } else {
                0.0
            };
            let s = functional_series(&run.record, &env, &fast)?;
            let k = steps as usize;
            let target = limit_target(&run.record, &run.ledger, &env, t)?;
            let br = bracket_target(&run.record, &env, t)?;
            Ok((recon, s.m[k], s.bracket[k], br, s.a[k] - target.total(), s.a[k] - target.total_half_drift()))
        });
        out.replicate_failures += res.failure_count();
        let res = res.require_some()?;
        let recon = res.values.iter().map(|v| v.0).fold(0.0, f64::max);
        out.checks.push(
            SummaryStats::new(format!("n{n}.reconstruction"), recon, 0.0, 0.0)
                .note("max |F_n - F_n(0) - M - A| on the first replicate")
                .rule("<= 1e-10", recon <= 1e-10),
        );
        let m = Estimate::mean_of(&res.values.iter().map(|v| v.1).collect::<Vec<_>>());
        out.checks.push(
            SummaryStats::new(format!("n{n}.martingale_mean"), m.value, m.se, 0.0).rule("within 4 SE", m.within(0.0, 4.0)),
        );
        let b = Estimate::mean_of(&res.values.iter().map(|v| v.2).collect::<Vec<_>>());
        let bt = mean(&res.values.iter().map(|v| v.3).collect::<Vec<_>>());
        out.checks.push(
            SummaryStats::new(format!("n{n}.bracket"), b.value, b.se, bt)
                .note("mean of integral of exp(-2B) along the path")
                .rule("within 10%", (b.value - bt).abs() <= 0.1 * bt.abs()),
        );
        let abs_gap = Estimate::mean_of(&res.values.iter().map(|v| v.4.abs()).collect::<Vec<_>>());
        let signed = Estimate::mean_of(&res.values.iter().map(|v| v.4).collect::<Vec<_>>());
        let half = Estimate::mean_of(&res.values.iter().map(|v| v.5.abs()).collect::<Vec<_>>());
        out.checks.push(
            SummaryStats::new(format!("n{n}.limit_gap_signed"), signed.value, signed.se, 0.0)
                .informational(format!("mean |gap| with half drift {:.4} +- {:.4}", half.value, half.se)),
        );
        gaps.push((n, abs_gap));
        rows.push(vec![
            n.to_string(),
            abs_gap.value.to_string(),
            abs_gap.se.to_string(),
            signed.value.to_string(),
            half.value.to_string(),
        ]);

        let zero = DeterministicEnvironment::new(n, cfg.dim, std::sync::Arc::new(BuiltinField::Zero));
        let qv = run_replicates(&mc_for(spec, n, 1), |_, rng| {
            let run = run_snake(&sc, Horizon::Steps { steps }, &zero, rng)?;
            Ok(tanaka_quadratic_variation(&run.record, t))
        })
        .require_some()?;
        let q = Estimate::mean_of(&qv.values);
        out.checks.push(
            SummaryStats::new(format!("n{n}.tanaka_qv"), q.value, q.se, t)
                .note("QV of Y - l0 + lK1 with B = 0")
                .rule("within 10% of t", (q.value - t).abs() <= 0.1 * t),
        );
    }
    if gaps.len() > 1 {
        let decreasing = gaps.windows(2).all(|w| w[1].1.value < w[0].1.value);
        let last = gaps.last().expect("non-empty").1;
        out.checks.push(
            SummaryStats::new("limit_gap_decreasing", last.value, last.se, 0.0)
                .note(format!("mean |A_n - target| over n: {:?}", gaps.iter().map(|g| g.1.value).collect::<Vec<_>>()))
                .rule("strictly decreasing in n", decreasing),
        );
    }
    out.tables.push(CsvTable {
        name: "functional_gap.csv".into(),
        content: table(&["n", "mean_abs_gap", "se", "mean_signed_gap", "mean_abs_gap_half_drift"], &rows)?,
    });
    Ok(())
}

fn brox(spec: &ExperimentSpec, out: &mut ExperimentResult) -> Result<()> {
    let h = &spec.horizon;
    let k1 = h.k1.round() as usize;
    if (h.k1 - k1 as f64).abs() > 1e-12 || k1 == 0 {
        return Err(bad("horizon.k1", "the brox experiment needs an integer K1"));
    }
    let theta = exit_time_stats(&spec.monte_carlo().with_seed(derive_seed(spec.seed, 7)), 1e-4).or_else(|_| {
        exit_time_stats(&MonteCarlo::new(1000, derive_seed(spec.seed, 7)).with_workers(spec.workers), 1e-4)
    })?;
    out.checks.push(
        SummaryStats::new("exit_time_mean", theta.mean.value, theta.mean.se, 1.0)
            .note(format!("median {:.4}", theta.median))
            .rule("within 3 SE", theta.mean.within(1.0, 3.0)),
    );
    let sigma_cfg = SigmaConfig {
        n_list: spec.n.clone(),
        t: h.t,
        k1,
        environment: spec.environment.clone(),
        resolution: DEFAULT_RESOLUTION,
        grid_points: 200,
    };
    let sigma = sigma_convergence_report(&sigma_cfg, &spec.monte_carlo().with_seed(derive_seed(spec.seed, 8)))?;
    let decreasing = sigma.windows(2).all(|w| w[1].median < w[0].median);
    out.checks.push(
        SummaryStats::new("sigma_deviation_decreasing", sigma.last().map(|r| r.median).unwrap_or(f64::NAN), 0.0, 0.0)
            .note(format!("medians {:?}", sigma.iter().map(|r| r.median).collect::<Vec<_>>()))
            .rule("strictly decreasing in n", decreasing),
    );
    let mut rows: Vec<Vec<String>> =
        sigma.iter().map(|r| vec![r.n.to_string(), "sigma_deviation_median".into(), r.median.to_string(), r.mean.se.to_string()]).collect();
    for &n in &spec.n {
        let cfg = spec.environment_at(n);
        let factory = EnvironmentFactory::new(&cfg)?;
        let steps = n * n;
        let profile = sample_profile(&factory, k1, &mut crate::rng::replicate_rng(derive_seed(spec.seed, 9), n as u64))?;
        let emb = run_replicates(&mc_for(spec, n, 1), |_, rng| {
            Ok(*embed_rwre(&profile, steps, DEFAULT_RESOLUTION, rng)?.walk.last().expect("non-empty") as f64)
        })
        .require_some()?;
        let dir = run_replicates(&mc_for(spec, n, 2), |_, rng| {
            Ok(*direct_rwre(&profile, steps, rng).last().expect("non-empty") as f64)
        })
        .require_some()?;
        let ks = ks_two_sample(&emb.values, &dir.values)?;
        out.checks.push(
            SummaryStats::new(format!("n{n}.embedded_vs_direct"), ks.statistic, 0.0, 0.0)
                .note(format!("frozen potential, p = {:.4}", ks.p_value))
                .rule("KS p >= 0.01", !ks.rejects(0.01)),
        );
        rows.push(vec![n.to_string(), "embedded_vs_direct_ks".into(), ks.statistic.to_string(), ks.p_value.to_string()]);

        // reflected embedded walk against the snake contour at time 1
        let sc = SnakeConfig::new(h.k1, cfg.dim);
        let top = sc.top(n)?;
        let walk = run_replicates(&mc_for(spec, n, 3), |_, rng| {
            let p = sample_profile(&factory, k1, rng)?;
            let z = *embed_rwre(&p, steps, DEFAULT_RESOLUTION, rng)?.walk.last().expect("non-empty");
            Ok(tent(z as f64 / n as f64, h.k1))
        })
        .require_some()?;
        let contour = run_replicates(&mc_for(spec, n, 4), |_, rng| {
            let env = factory.realize(top, rng);
            let run = run_snake(&sc, Horizon::Steps { steps: steps as u64 }, &env, rng)?;
            Ok(run.record.level(steps) as f64 / n as f64)
        })
        .require_some()?;
        let ks = ks_two_sample(&walk.values, &contour.values)?;
        out.checks.push(
            SummaryStats::new(format!("n{n}.reflected_walk_vs_contour"), ks.statistic, 0.0, 0.0)
                .note(format!("p = {:.4}", ks.p_value))
                .rule("KS distance <= 0.1", ks.statistic <= 0.1),
        );
        rows.push(vec![n.to_string(), "reflected_vs_contour_ks".into(), ks.statistic.to_string(), ks.p_value.to_string()]);
    }
    out.tables.push(CsvTable { name: "brox.csv".into(), content: table(&["n", "statistic", "value", "aux"], &rows)? });
    Ok(())
}

fn theorem1(spec: &ExperimentSpec, out: &mut ExperimentResult) -> Result<()> {
    let h = &spec.horizon;
    for &n in &spec.n {
        let cfg = Theorem1Config {
            environment: spec.environment_at(n),
            snake_environment: None,
            k1: h.k1,
            r: h.r,
            times: h.times.clone(),
            phi: spec.phi[0].clone(),
            max_steps: h.max_steps,
        };
        let rep = theorem1_representation_check(&cfg, &mc_for(spec, n, 0))?;
        out.replicate_failures += rep.snake_failures + rep.forward_failures;
        out.checks.extend(rep.summary(&format!("n{n}"), 0.01));
        out.tables.push(CsvTable { name: format!("theorem1_n{n}.csv"), content: csv_string(|b| rep.write_csv(b))? });
    }
    Ok(())
}
