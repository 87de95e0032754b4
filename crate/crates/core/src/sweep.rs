//! Random search over the two reranking weights `(δ_ch, δ_lm)` with the
//! length penalty held fixed.
//!
//! Points come from a Gaussian truncated to `bounds` by rejection, by
//! default centred at (0.5, 0.5) with standard deviation 0.25 on each axis.
//! With `recenter_every > 0` the mean moves to the best point found so far
//! after every `recenter_every` trials. The point generator is a
//! [`Proposer`], so a model-based optimizer can be dropped in.

use std::fmt::Display;

use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::config::{ConfigError, KvConfig};
use crate::parallel::ordered_map;
use crate::sampler::rng_for;

/// Objective recorded for a failed evaluation.
pub const FAILED_OBJECTIVE: f64 = f64::NEG_INFINITY;

const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SweepError {
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error("every trial failed")]
    AllTrialsFailed,
    #[error("need at least two successful trials, got {0}")]
    TooFewTrials(usize),
    #[error("{0} has zero variance across trials")]
    DegenerateVariance(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub delta_ch: f64,
    pub delta_lm: f64,
    pub objective: f64,
}

impl Trial {
    pub fn failed(&self) -> bool {
        !self.objective.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub iterations: usize,
    pub seed: u64,
    pub gaussian_mean: (f64, f64),
    pub gaussian_std: (f64, f64),
    pub bounds: (f64, f64),
    /// 0 means plain random search.
    pub recenter_every: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            seed: 0,
            gaussian_mean: (0.5, 0.5),
            gaussian_std: (0.25, 0.25),
            bounds: (0.01, 0.99),
            recenter_every: 0,
        }
    }
}

impl SweepConfig {
    pub const KEYS: [&'static str; 9] = [
        "iterations",
        "seed",
        "mean_ch",
        "mean_lm",
        "std_ch",
        "std_lm",
        "lower_bound",
        "upper_bound",
        "recenter_every",
    ];

    pub fn apply(&mut self, kv: &KvConfig) -> Result<(), ConfigError> {
        kv.check_keys(&Self::KEYS)?;
        kv.read_into("iterations", &mut self.iterations)?;
        kv.read_into("seed", &mut self.seed)?;
        kv.read_into("mean_ch", &mut self.gaussian_mean.0)?;
        kv.read_into("mean_lm", &mut self.gaussian_mean.1)?;
        kv.read_into("std_ch", &mut self.gaussian_std.0)?;
        kv.read_into("std_lm", &mut self.gaussian_std.1)?;
        kv.read_into("lower_bound", &mut self.bounds.0)?;
        kv.read_into("upper_bound", &mut self.bounds.1)?;
        kv.read_into("recenter_every", &mut self.recenter_every)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.insert("iterations", self.iterations);
        kv.insert("seed", self.seed);
        kv.insert("mean_ch", self.gaussian_mean.0);
        kv.insert("mean_lm", self.gaussian_mean.1);
        kv.insert("std_ch", self.gaussian_std.0);
        kv.insert("std_lm", self.gaussian_std.1);
        kv.insert("lower_bound", self.bounds.0);
        kv.insert("upper_bound", self.bounds.1);
        kv.insert("recenter_every", self.recenter_every);
        kv
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let fail = |m: String| Err(SweepError::Config(m));
        if self.iterations < 1 {
            return fail("iterations must be at least 1".into());
        }
        let (lo, hi) = self.bounds;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return fail(format!("bounds must be ordered, got [{lo}, {hi}]"));
        }
        let (sx, sy) = self.gaussian_std;
        if !(sx >= 0.0 && sy >= 0.0) || !sx.is_finite() || !sy.is_finite() {
            return fail("standard deviations must be finite and non-negative".into());
        }
        if !self.gaussian_mean.0.is_finite() || !self.gaussian_mean.1.is_finite() {
            return fail("means must be finite".into());
        }
        Ok(())
    }
}

/// One coordinate from `N(mean, std)` restricted to `[lo, hi]` by rejection.
/// After many rejections (a mean far outside the bounds) the clamped mean is
/// returned.
pub fn truncated_normal(mean: f64, std: f64, (lo, hi): (f64, f64), rng: &mut ChaCha20Rng) -> f64 {
    if std == 0.0 {
        return mean.clamp(lo, hi);
    }
    let normal = Normal::new(mean, std).expect("finite, non-negative std");
    for _ in 0..MAX_REJECTIONS {
        let x = normal.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    mean.clamp(lo, hi)
}

pub fn sample_point(config: &SweepConfig, mean: (f64, f64), rng: &mut ChaCha20Rng) -> (f64, f64) {
    let x = truncated_normal(mean.0, config.gaussian_std.0, config.bounds, rng);
    let y = truncated_normal(mean.1, config.gaussian_std.1, config.bounds, rng);
    (x, y)
}

/// Generates candidate points. `history` holds every trial finished before
/// the current batch.
pub trait Proposer {
    fn propose(&mut self, history: &[Trial], rng: &mut ChaCha20Rng) -> (f64, f64);
}

/// Truncated Gaussian that optionally follows the incumbent.
pub struct GaussianProposer {
    config: SweepConfig,
}

impl GaussianProposer {
    pub fn new(config: SweepConfig) -> Self {
        Self { config }
    }
}

impl Proposer for GaussianProposer {
    fn propose(&mut self, history: &[Trial], rng: &mut ChaCha20Rng) -> (f64, f64) {
        let mean = match best_trial(history) {
            Some(best) if self.config.recenter_every > 0 => (best.delta_ch, best.delta_lm),
            _ => self.config.gaussian_mean,
        };
        sample_point(&self.config, mean, rng)
    }
}

/// Highest objective among successful trials; ties go to the earliest.
pub fn best_trial(trials: &[Trial]) -> Option<Trial> {
    trials
        .iter()
        .filter(|t| !t.failed())
        .fold(None, |best: Option<&Trial>, t| match best {
            Some(b) if b.objective >= t.objective => Some(b),
            _ => Some(t),
        })
        .copied()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub trials: Vec<Trial>,
    pub best: Trial,
}

pub fn run_sweep<F, E>(objective: F, config: &SweepConfig) -> Result<SweepResult, SweepError>
where
    F: Fn(f64, f64) -> Result<f64, E> + Sync,
    E: Display,
{
    run_sweep_with(objective, config, &mut GaussianProposer::new(config.clone()), 1)
}

/// Runs the sweep with a custom proposer. Points are drawn in batches of
/// `recenter_every` (64 for plain random search) before any of the batch is
/// evaluated, so `jobs` does not change the trial sequence.
pub fn run_sweep_with<F, E>(
    objective: F,
    config: &SweepConfig,
    proposer: &mut dyn Proposer,
    jobs: usize,
) -> Result<SweepResult, SweepError>
where
    F: Fn(f64, f64) -> Result<f64, E> + Sync,
    E: Display,
{
    config.validate()?;
    let batch = if config.recenter_every > 0 { config.recenter_every } else { 64 };
    let mut rng = rng_for(config.seed, 0);
    let mut trials: Vec<Trial> = Vec::with_capacity(config.iterations);
    while trials.len() < config.iterations {
        let n = batch.min(config.iterations - trials.len());
        let points: Vec<(f64, f64)> = (0..n).map(|_| proposer.propose(&trials, &mut rng)).collect();
        let start = trials.len();
        let scored = ordered_map(&points, jobs, |i, &(x, y)| {
            let objective = match objective(x, y) {
                Ok(v) if v.is_finite() => v,
                _ => FAILED_OBJECTIVE,
            };
            Trial {
                index: start + i,
                delta_ch: x,
                delta_lm: y,
                objective,
            }
        });
        trials.extend(scored);
    }
    let best = best_trial(&trials).ok_or(SweepError::AllTrialsFailed)?;
    Ok(SweepResult { trials, best })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub delta_ch: LineFit,
    pub delta_lm: LineFit,
}

fn least_squares(xs: &[f64], ys: &[f64], axis: &'static str) -> Result<LineFit, SweepError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= f64::EPSILON * f64::EPSILON * n {
        return Err(SweepError::DegenerateVariance(axis));
    }
    let slope = sxy / sxx;
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
    })
}

/// Ordinary least-squares line of objective against each weight separately.
/// Failed trials are ignored.
pub fn regression_diagnostics(trials: &[Trial]) -> Result<Diagnostics, SweepError> {
    let ok: Vec<&Trial> = trials.iter().filter(|t| !t.failed()).collect();
    if ok.len() < 2 {
        return Err(SweepError::TooFewTrials(ok.len()));
    }
    let ys: Vec<f64> = ok.iter().map(|t| t.objective).collect();
    let ch: Vec<f64> = ok.iter().map(|t| t.delta_ch).collect();
    let lm: Vec<f64> = ok.iter().map(|t| t.delta_lm).collect();
    Ok(Diagnostics {
        delta_ch: least_squares(&ch, &ys, "delta_ch")?,
        delta_lm: least_squares(&lm, &ys, "delta_lm")?,
    })
}
