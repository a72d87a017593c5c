//! Finite-sample experiments.
//!
//! Each pair gets microscopic directions from the analyzers' smearing laws,
//! outcomes from the model, and an independent Bernoulli(η) detection on each
//! side. Two estimators come out of every run:
//!
//! * conditional: mean of `o₁·o₂` over doubly-detected pairs (what coincidence
//!   counting measures);
//! * unconditional: mean over all pairs with a missed detection counted as 0,
//!   which carries the `η_A η_B` prefactor of the predicted correlation.
//!
//! Run `r` always draws from substream `r` of the root seed and results are
//! reduced in run order, so the worker count never changes the output.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Direction;
use crate::models::{Model, Outcome, PairSource, SpinFunctionModel};
use crate::quantum::{conditional_correlation, AnalyzerSpec, SettingPair};
use crate::rng::{substream, RandomStream};
use crate::stats::{
    binomial_ci, mean_stderr, quadrature, rate_estimate, violation_zscore, EstimateWithError,
    Interval, SignTally,
};

/// Local-realist bound on the CHSH combination.
pub const CHSH_BOUND: f64 = 2.0;
/// Monte Carlo vs closed form agreement threshold, in standard errors.
pub const AGREEMENT_SIGMAS: f64 = 4.0;

pub const DEFAULT_PAIRS: u64 = 10_000;
pub const DEFAULT_RUNS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// One draw of `λ₁..λ_N` per run, evaluated at every setting.
    Shared,
    /// Independent pairs for every setting.
    #[default]
    Fresh,
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(SamplingMode::Shared),
            "fresh" => Ok(SamplingMode::Fresh),
            _ => Err(Error::Config(format!("unknown mode `{s}` (expected shared|fresh)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: Model,
    pub settings: Vec<SettingPair>,
    pub pairs_per_run: u64,
    pub runs: u64,
    pub mode: SamplingMode,
    pub seed: u64,
    /// Worker threads for the runs; 0 lets rayon decide.
    #[serde(skip)]
    pub workers: usize,
    /// Keep every [`PairRecord`] in the report.
    pub record_pairs: bool,
}

impl RunConfig {
    pub fn new(model: Model, settings: Vec<SettingPair>, seed: u64) -> Self {
        RunConfig {
            model,
            settings,
            pairs_per_run: DEFAULT_PAIRS,
            runs: DEFAULT_RUNS,
            mode: SamplingMode::Fresh,
            seed,
            workers: 0,
            record_pairs: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs_per_run == 0 {
            return Err(Error::Config("pairs per run must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.settings.is_empty() {
            return Err(Error::Config("at least one setting pair is required".into()));
        }
        if self.mode == SamplingMode::Shared {
            check_shared_settings(&self.model, &self.settings)?;
        }
        Ok(())
    }
}

/// One emitted pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub run: u64,
    pub setting: usize,
    pub micro_a: Direction,
    pub micro_b: Direction,
    pub outcome_1: Option<Outcome>,
    pub outcome_2: Option<Outcome>,
    pub detected_1: bool,
    pub detected_2: bool,
}

/// Result of `N` pairs at one setting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    /// Conditional-on-coincidence correlation `r_N`.
    pub r_n: f64,
    pub conditional: EstimateWithError,
    pub unconditional: EstimateWithError,
    pub coincidences: u64,
    pub total_pairs: u64,
    #[serde(skip)]
    conditional_tally: SignTally,
    #[serde(skip)]
    unconditional_tally: SignTally,
}

impl RunResult {
    fn from_tallies(setting: usize, conditional: SignTally, unconditional: SignTally) -> Result<Self> {
        let total_pairs = unconditional.count();
        let coincidences = conditional.count();
        let cond = conditional.estimate().ok_or(Error::DegenerateRun {
            setting,
            coincidences,
            total: total_pairs,
        })?;
        let uncond = unconditional
            .estimate()
            .expect("a run has at least one pair");
        Ok(RunResult {
            r_n: cond.value,
            conditional: cond,
            unconditional: uncond,
            coincidences,
            total_pairs,
            conditional_tally: conditional,
            unconditional_tally: unconditional,
        })
    }

    /// Pools the pairs of several runs at the same setting.
    pub fn pooled(setting: usize, runs: &[RunResult]) -> Result<RunResult> {
        let mut c = SignTally::default();
        let mut u = SignTally::default();
        for r in runs {
            c.merge(&r.conditional_tally);
            u.merge(&r.unconditional_tally);
        }
        RunResult::from_tallies(setting, c, u)
    }
}

fn simulate_setting<S, R>(
    model: &S,
    setting: &SettingPair,
    index: usize,
    pairs: u64,
    rng: &mut R,
    mut sink: Option<(&mut Vec<PairRecord>, u64)>,
) -> Result<RunResult>
where
    S: PairSource + ?Sized,
    R: Rng + ?Sized,
{
    let eta_a = setting.first.efficiency();
    let eta_b = setting.second.efficiency();
    let mut cond = SignTally::default();
    let mut uncond = SignTally::default();
    for _ in 0..pairs {
        let a = setting.first.smearing().sample(rng);
        let b = setting.second.smearing().sample(rng);
        let (o1, o2) = model.emit_pair(&a, &b, rng);
        let d1 = rng.gen::<f64>() < eta_a;
        let d2 = rng.gen::<f64>() < eta_b;
        if d1 && d2 {
            let p = o1.value() * o2.value();
            cond.push(p);
            uncond.push(p);
        } else {
            uncond.push(0);
        }
        if let Some((records, run)) = sink.as_mut() {
            records.push(PairRecord {
                run: *run,
                setting: index,
                micro_a: a,
                micro_b: b,
                outcome_1: d1.then_some(o1),
                outcome_2: d2.then_some(o2),
                detected_1: d1,
                detected_2: d2,
            });
        }
    }
    RunResult::from_tallies(index, cond, uncond)
}

/// Runs `pairs` pairs of `model` at one setting.
pub fn run_experiment<S, R>(model: &S, setting: &SettingPair, pairs: u64, rng: &mut R) -> Result<RunResult>
where
    S: PairSource + ?Sized,
    R: Rng + ?Sized,
{
    simulate_setting(model, setting, 0, pairs, rng, None)
}

/// Same as [`run_experiment`], keeping every pair.
pub fn run_experiment_recorded<S, R>(
    model: &S,
    setting: &SettingPair,
    pairs: u64,
    rng: &mut R,
) -> Result<(RunResult, Vec<PairRecord>)>
where
    S: PairSource + ?Sized,
    R: Rng + ?Sized,
{
    let mut records = Vec::with_capacity(pairs.min(1 << 20) as usize);
    let result = simulate_setting(model, setting, 0, pairs, rng, Some((&mut records, 0)))?;
    Ok((result, records))
}

fn check_sharp(analyzer: &AnalyzerSpec) -> Result<()> {
    if !analyzer.smearing().is_sharp() {
        return Err(Error::UnsupportedConfiguration(
            "shared-sample evaluation needs sharp (delta) analyzers".into(),
        ));
    }
    if analyzer.efficiency() != 1.0 {
        return Err(Error::UnsupportedConfiguration(
            "shared-sample evaluation needs perfect detectors (eta = 1)".into(),
        ));
    }
    Ok(())
}

fn check_shared_settings(model: &Model, settings: &[SettingPair]) -> Result<()> {
    if !model.supports_counterfactual() {
        return Err(Error::CounterfactualUnsupported(model.name()));
    }
    for s in settings {
        check_sharp(&s.first)?;
        check_sharp(&s.second)?;
    }
    Ok(())
}

/// Evaluates every setting on one common draw of `λ₁..λ_N`.
fn shared_runs<M, R>(
    model: &M,
    settings: &[SettingPair],
    pairs: u64,
    rng: &mut R,
    mut sink: Option<(&mut Vec<PairRecord>, u64)>,
) -> Result<Vec<RunResult>>
where
    M: SpinFunctionModel,
    R: Rng + ?Sized,
{
    let lambdas: Vec<M::Lambda> = (0..pairs).map(|_| model.sample_lambda(rng)).collect();
    settings
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let (a, b) = (s.first.orientation(), s.second.orientation());
            let mut tally = SignTally::default();
            for lambda in &lambdas {
                let o1 = model.outcome_1(lambda, &a);
                let o2 = model.outcome_2(lambda, &b);
                tally.push(o1.value() * o2.value());
                if let Some((records, run)) = sink.as_mut() {
                    records.push(PairRecord {
                        run: *run,
                        setting: index,
                        micro_a: a,
                        micro_b: b,
                        outcome_1: Some(o1),
                        outcome_2: Some(o2),
                        detected_1: true,
                        detected_2: true,
                    });
                }
            }
            RunResult::from_tallies(index, tally, tally)
        })
        .collect()
}

/// `S = |E1 - E2| + |E3 + E4|`.
pub fn chsh_statistic(e1: f64, e2: f64, e3: f64, e4: f64) -> Result<f64> {
    for e in [e1, e2, e3, e4] {
        if !(-1.0..=1.0).contains(&e) {
            return Err(Error::domain("correlation", e, "|E| <= 1"));
        }
    }
    Ok((e1 - e2).abs() + (e3 + e4).abs())
}

/// The four CHSH directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChshDirections {
    pub a: Direction,
    pub a_prime: Direction,
    pub b: Direction,
    pub b_prime: Direction,
}

impl ChshDirections {
    /// Coplanar `a = 0°, a′ = 90°, b = 45°, b′ = 135°`.
    pub fn standard() -> Self {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
        ChshDirections {
            a: Direction::planar(0.0),
            a_prime: Direction::planar(FRAC_PI_2),
            b: Direction::planar(FRAC_PI_4),
            b_prime: Direction::planar(3.0 * FRAC_PI_4),
        }
    }

    /// Setting pairs in CHSH order `(A,B), (A,B′), (A′,B′), (A′,B)`.
    pub fn setting_pairs(&self) -> [SettingPair; 4] {
        [
            SettingPair::sharp(self.a, self.b),
            SettingPair::sharp(self.a, self.b_prime),
            SettingPair::sharp(self.a_prime, self.b_prime),
            SettingPair::sharp(self.a_prime, self.b),
        ]
    }

    /// Reads the four directions back from pairs in CHSH order.
    pub fn from_settings(settings: &[SettingPair]) -> Result<Self> {
        let [ab, abp, apbp, apb] = settings else {
            return Err(Error::Config(format!(
                "CHSH needs exactly four setting pairs, got {}",
                settings.len()
            )));
        };
        let dirs = ChshDirections {
            a: ab.first.orientation(),
            b: ab.second.orientation(),
            b_prime: abp.second.orientation(),
            a_prime: apbp.first.orientation(),
        };
        let consistent = abp.first.orientation() == dirs.a
            && apbp.second.orientation() == dirs.b_prime
            && apb.first.orientation() == dirs.a_prime
            && apb.second.orientation() == dirs.b;
        if !consistent {
            return Err(Error::Config(
                "setting pairs must be ordered (A,B), (A,B'), (A',B'), (A',B)".into(),
            ));
        }
        Ok(dirs)
    }
}

/// CHSH estimate over one or more runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChshResult {
    /// Conditional correlations pooled over all runs, in CHSH order.
    pub e_hat: [EstimateWithError; 4],
    /// Unconditional (efficiency-weighted) correlations, pooled.
    pub e_unconditional: [EstimateWithError; 4],
    /// `S` of the pooled correlations.
    pub s: f64,
    /// Quadrature of the four correlation standard errors.
    pub stderr_s: f64,
    /// `S` of each run on its own.
    pub per_run_s: Vec<f64>,
    /// Mean and standard error of `per_run_s`.
    pub mean_run_s: EstimateWithError,
    /// `(S - 2) / stderr_s`; `None` when the standard error vanishes.
    pub z_score: Option<f64>,
    /// Per-run correlations, `runs × 4`.
    pub per_run_e: Vec<[f64; 4]>,
}

impl ChshResult {
    pub fn from_runs(runs: &[Vec<RunResult>]) -> Result<Self> {
        if runs.is_empty() || runs.iter().any(|r| r.len() != 4) {
            return Err(Error::Config("CHSH needs four settings in every run".into()));
        }
        let per_run_e: Vec<[f64; 4]> = runs
            .iter()
            .map(|r| [r[0].r_n, r[1].r_n, r[2].r_n, r[3].r_n])
            .collect();
        let per_run_s = per_run_e
            .iter()
            .map(|e| chsh_statistic(e[0], e[1], e[2], e[3]))
            .collect::<Result<Vec<_>>>()?;
        let pooled: Vec<RunResult> = (0..4)
            .map(|k| {
                let column: Vec<RunResult> = runs.iter().map(|r| r[k].clone()).collect();
                RunResult::pooled(k, &column)
            })
            .collect::<Result<_>>()?;
        let e_hat = [0, 1, 2, 3].map(|k| pooled[k].conditional);
        let e_unconditional = [0, 1, 2, 3].map(|k| pooled[k].unconditional);
        let s = chsh_statistic(e_hat[0].value, e_hat[1].value, e_hat[2].value, e_hat[3].value)?;
        let stderr_s = quadrature(&e_hat.map(|e| e.stderr));
        let n = e_hat.iter().map(|e| e.n).sum();
        let z_score = violation_zscore(&EstimateWithError::new(s, stderr_s, n), CHSH_BOUND).ok();
        Ok(ChshResult {
            e_hat,
            e_unconditional,
            s,
            stderr_s,
            mean_run_s: mean_stderr(&per_run_s)?,
            per_run_s,
            z_score,
            per_run_e,
        })
    }

    pub fn estimate(&self) -> EstimateWithError {
        EstimateWithError::new(self.s, self.stderr_s, self.e_hat.iter().map(|e| e.n).sum())
    }
}

/// Runs `f(run_index)` for every run, in parallel, collecting in run order.
fn par_runs<T, F>(workers: usize, runs: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    if workers == 1 {
        return (0..runs).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..runs).into_par_iter().map(&f).collect())
}

/// One shared-sample CHSH run: the four correlations share `λ₁..λ_N`, so the
/// run's `S` cannot exceed 2.
pub fn shared_sample_chsh<M, R>(model: &M, dirs: &ChshDirections, pairs: u64, rng: &mut R) -> Result<ChshResult>
where
    M: SpinFunctionModel,
    R: Rng + ?Sized,
{
    if pairs == 0 {
        return Err(Error::Config("pairs per run must be at least 1".into()));
    }
    let runs = vec![shared_runs(model, &dirs.setting_pairs(), pairs, rng, None)?];
    ChshResult::from_runs(&runs)
}

/// `runs` independent CHSH runs, each setting with its own fresh pairs.
pub fn fresh_sample_chsh<S>(
    model: &S,
    settings: &[SettingPair; 4],
    pairs: u64,
    runs: u64,
    seed: u64,
    workers: usize,
) -> Result<ChshResult>
where
    S: PairSource + Sync + ?Sized,
{
    let all = par_runs(workers, runs, |r| {
        let mut rng = substream(seed, r);
        settings
            .iter()
            .enumerate()
            .map(|(k, s)| simulate_setting(model, s, k, pairs, &mut rng, None))
            .collect::<Result<Vec<_>>>()
    })?;
    ChshResult::from_runs(&all)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HerbertVerdict {
    /// `d(2θ) < 2 d(θ)` beyond the error.
    Holds,
    /// Equal within the error.
    Saturated,
    /// `d(2θ) > 2 d(θ)` beyond the error.
    Violated,
}

/// Disagreement rates at `θ` and `2θ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HerbertResult {
    pub theta: f64,
    pub d_theta: EstimateWithError,
    pub d_2theta: EstimateWithError,
    pub d_theta_ci: Interval,
    pub d_2theta_ci: Interval,
    /// `d(2θ) - 2 d(θ)`.
    pub excess: f64,
    pub excess_stderr: f64,
    pub verdict: HerbertVerdict,
    /// `d(2θ) <= 2 d(θ)` within [`AGREEMENT_SIGMAS`] standard errors.
    pub satisfied: bool,
}

impl HerbertResult {
    pub fn from_counts(theta: f64, single: (u64, u64), double: (u64, u64), level: f64) -> Result<Self> {
        let d_theta = rate_estimate(single.0, single.1)?;
        let d_2theta = rate_estimate(double.0, double.1)?;
        let excess = d_2theta.value - 2.0 * d_theta.value;
        let excess_stderr = quadrature(&[d_2theta.stderr, 2.0 * d_theta.stderr]);
        let tol = AGREEMENT_SIGMAS * excess_stderr;
        let verdict = if excess > tol {
            HerbertVerdict::Violated
        } else if excess < -tol {
            HerbertVerdict::Holds
        } else {
            HerbertVerdict::Saturated
        };
        Ok(HerbertResult {
            theta,
            d_theta,
            d_2theta,
            d_theta_ci: binomial_ci(single.0, single.1, level)?,
            d_2theta_ci: binomial_ci(double.0, double.1, level)?,
            excess,
            excess_stderr,
            verdict,
            satisfied: verdict != HerbertVerdict::Violated,
        })
    }

    pub fn two_d_theta(&self) -> f64 {
        2.0 * self.d_theta.value
    }
}

/// Counts pairs whose two messages differ. The second message is the negated
/// side-two outcome, so a difference means equal raw outcomes.
fn count_disagreements<S, R>(model: &S, a: &Direction, b: &Direction, pairs: u64, rng: &mut R) -> u64
where
    S: PairSource + ?Sized,
    R: Rng + ?Sized,
{
    (0..pairs)
        .filter(|_| {
            let (o1, o2) = model.emit_pair(a, b, rng);
            o1 != -o2
        })
        .count() as u64
}

/// For each `θ`: `d(θ)` with detectors at `0` and `θ`, `d(2θ)` with detectors
/// turned to `-θ` and `+θ`, all in the x–z plane.
pub fn herbert_scan(
    model: &Model,
    thetas: &[f64],
    pairs: u64,
    seed: u64,
    workers: usize,
    level: f64,
) -> Result<Vec<HerbertResult>> {
    if matches!(model, Model::Factorized(_)) {
        return Err(Error::UnsupportedModel(model.name()));
    }
    if pairs == 0 {
        return Err(Error::Config("pairs per run must be at least 1".into()));
    }
    for &t in thetas {
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&t) {
            return Err(Error::domain("theta", t, "0 <= theta and 2*theta <= pi"));
        }
    }
    par_runs(workers, thetas.len() as u64, |k| {
        let theta = thetas[k as usize];
        let mut rng: RandomStream = substream(seed, 2 * k);
        let single = count_disagreements(model, &Direction::planar(0.0), &Direction::planar(theta), pairs, &mut rng);
        let mut rng = substream(seed, 2 * k + 1);
        let double = count_disagreements(model, &Direction::planar(-theta), &Direction::planar(theta), pairs, &mut rng);
        HerbertResult::from_counts(theta, (single, pairs), (double, pairs), level)
    })
}

/// One point of a correlation curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPoint {
    pub theta: f64,
    /// Closed-form conditional correlation `-κ_A κ_B cos θ`.
    pub e_qm_closed: f64,
    /// Conditional correlation estimated from the model.
    pub e_model_mc: f64,
    pub stderr: f64,
}

/// Correlation of `model` with analyzer `first` along +z and `second` turned
/// by each `θ` in the x–z plane.
pub fn correlation_scan(
    model: &Model,
    first: &AnalyzerSpec,
    second: &AnalyzerSpec,
    thetas: &[f64],
    pairs: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<ScanPoint>> {
    if thetas.is_empty() {
        return Err(Error::Config("scan grid is empty".into()));
    }
    let make = |spec: &AnalyzerSpec, d: Direction| {
        AnalyzerSpec::new(d, spec.smearing().kind(), spec.smearing().cap().epsilon(), spec.efficiency())
    };
    let first = make(first, Direction::planar(0.0))?;
    par_runs(workers, thetas.len() as u64, |k| {
        let theta = thetas[k as usize];
        let pair = SettingPair::new(first, make(second, Direction::planar(theta))?);
        let mut rng = substream(seed, k);
        let r = simulate_setting(model, &pair, k as usize, pairs, &mut rng, None)?;
        Ok(ScanPoint {
            theta,
            e_qm_closed: conditional_correlation(&pair).unwrap_or(f64::NAN),
            e_model_mc: r.r_n,
            stderr: r.conditional.stderr,
        })
    })
}

/// Everything one configured experiment produces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub config: RunConfig,
    /// `runs[r][k]` is run `r` at setting `k`.
    pub runs: Vec<Vec<RunResult>>,
    /// Per-setting results pooled over runs.
    pub pooled: Vec<RunResult>,
    /// Present when there are exactly four settings in CHSH order.
    pub chsh: Option<ChshResult>,
    pub records: Vec<PairRecord>,
}

/// Executes `config`. Same config and seed give an identical report for any
/// worker count.
pub fn reproduce(config: &RunConfig) -> Result<Report> {
    config.validate()?;
    let keep = config.record_pairs;
    let per_run = par_runs(config.workers, config.runs, |r| {
        let mut rng = substream(config.seed, r);
        let mut records = Vec::new();
        let sink = keep.then_some((&mut records, r));
        let results = match (config.mode, &config.model) {
            (SamplingMode::Shared, Model::BellSign(m)) => {
                shared_runs(m, &config.settings, config.pairs_per_run, &mut rng, sink)?
            }
            (SamplingMode::Shared, other) => return Err(Error::CounterfactualUnsupported(other.name())),
            (SamplingMode::Fresh, model) => {
                let mut sink = sink;
                config
                    .settings
                    .iter()
                    .enumerate()
                    .map(|(k, s)| {
                        let local = sink.as_mut().map(|(v, run)| (&mut **v, *run));
                        simulate_setting(model, s, k, config.pairs_per_run, &mut rng, local)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok((results, records))
    })?;
    let mut runs = Vec::with_capacity(per_run.len());
    let mut records = Vec::new();
    for (results, recs) in per_run {
        runs.push(results);
        records.extend(recs);
    }
    let pooled = (0..config.settings.len())
        .map(|k| {
            let column: Vec<RunResult> = runs.iter().map(|r| r[k].clone()).collect();
            RunResult::pooled(k, &column)
        })
        .collect::<Result<Vec<_>>>()?;
    let chsh = if ChshDirections::from_settings(&config.settings).is_ok() {
        Some(ChshResult::from_runs(&runs)?)
    } else {
        None
    };
    Ok(Report {
        config: config.clone(),
        runs,
        pooled,
        chsh,
        records,
    })
}
