//! Direct Euler-Maruyama simulation of the Levy-driven planar SDE:
//! independent estimates of escape probability and mean exit time for
//! cross-validating the nonlocal solver.
//!
//! Every path owns two counter-derived ChaCha streams (one per noise
//! channel), so results are bit-identical for a given (seed, config)
//! regardless of how many workers run the paths. Exit detection is
//! post-step: the first step whose endpoint lies outside the open region
//! ends the path at that endpoint, which also captures jump overshoots
//! landing deep in the exterior.

use crate::error::{Error, Result};
use crate::ml::State;
use crate::noise::{standard_draw, NoiseSpec};
use crate::solver::{Region, TargetStrip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Time step, horizon, path budget and stream seeding of one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub paths: usize,
    pub seed: u64,
    /// Pair paths with sign-flipped noise draws.
    pub antithetic: bool,
    /// Estimates fail with `HorizonTooShort` when the censored fraction
    /// exceeds this limit; `None` disables the check (report-only).
    pub censor_limit: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            t_max: 1e4,
            paths: 100_000,
            seed: 7,
            antithetic: false,
            censor_limit: Some(0.01),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::config("mc.dt", "must be > 0"));
        }
        if !(self.t_max >= 100.0 * self.dt) {
            return Err(Error::config("mc.t_max", "must be at least 100 dt"));
        }
        if self.paths < 100 {
            return Err(Error::config("mc.paths", "must be at least 100"));
        }
        if let Some(limit) = self.censor_limit {
            if !(0.0..=1.0).contains(&limit) {
                return Err(Error::config("mc.censor_limit", "must lie in [0,1]"));
            }
        }
        Ok(())
    }
}

/// Terminal record of one simulated path.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PathOutcome {
    pub exit_time: f64,
    pub exit_state: State,
    pub reached_target: bool,
    /// Still inside the region at the horizon.
    pub censored: bool,
    /// Terminated on a non-finite state (overflow diagnostic); counted as
    /// censored by the estimators.
    pub non_finite: bool,
}

/// Sample estimate with a 95% confidence half-width.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PathEstimate {
    pub mean: f64,
    pub half_width: f64,
    /// Paths actually entering the estimate (uncensored).
    pub effective_paths: usize,
    pub censored_fraction: f64,
}

/// One Euler-Maruyama step: drift times dt plus one stable increment per
/// channel, each channel on its own stream.
pub fn step<F, R1, R2>(
    state: State,
    drift: F,
    spec: &NoiseSpec,
    dt: f64,
    rng_v: &mut R1,
    rng_w: &mut R2,
    negate: bool,
) -> State
where
    F: Fn(State) -> (f64, f64),
    R1: rand::Rng,
    R2: rand::Rng,
{
    let (f1, f2) = drift(state);
    let scale = dt.powf(1.0 / spec.alpha);
    let sign = if negate { -1.0 } else { 1.0 };
    let dv = if spec.sigma1 > 0.0 {
        sign * spec.sigma1 * scale * standard_draw(spec.alpha, rng_v)
    } else {
        0.0
    };
    let dw = if spec.sigma2 > 0.0 {
        sign * spec.sigma2 * scale * standard_draw(spec.alpha, rng_w)
    } else {
        0.0
    };
    State::new(state.v + f1 * dt + dv, state.w + f2 * dt + dw)
}

fn channel_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn run_one<F>(
    id: usize,
    start: State,
    region: &Region,
    target: &TargetStrip,
    drift: &F,
    spec: &NoiseSpec,
    cfg: &SimConfig,
) -> PathOutcome
where
    F: Fn(State) -> (f64, f64),
{
    // antithetic pairs share streams; the odd member flips the draws
    let (stream_base, negate) = if cfg.antithetic {
        (2 * (id / 2) as u64, id % 2 == 1)
    } else {
        (2 * id as u64, false)
    };
    let mut rng_v = channel_rng(cfg.seed, stream_base);
    let mut rng_w = channel_rng(cfg.seed, stream_base + 1);
    let mut state = start;
    let mut t = 0.0;
    if !region.contains(state) {
        // already escaped: exit time zero at the starting point
        return PathOutcome {
            exit_time: 0.0,
            exit_state: state,
            reached_target: target.contains(state, region),
            censored: false,
            non_finite: false,
        };
    }
    let steps = (cfg.t_max / cfg.dt).ceil() as u64;
    for _ in 0..steps {
        state = step(state, drift, spec, cfg.dt, &mut rng_v, &mut rng_w, negate);
        t += cfg.dt;
        if state.v.is_nan() || state.w.is_nan() {
            return PathOutcome {
                exit_time: t,
                exit_state: state,
                reached_target: false,
                censored: true,
                non_finite: true,
            };
        }
        if !region.contains(state) {
            return PathOutcome {
                exit_time: t,
                exit_state: state,
                reached_target: target.contains(state, region),
                censored: false,
                non_finite: false,
            };
        }
    }
    PathOutcome {
        exit_time: cfg.t_max,
        exit_state: state,
        reached_target: false,
        censored: true,
        non_finite: false,
    }
}

/// Simulates all paths (in parallel) and returns their outcomes in path-id
/// order. Deterministic for a fixed (seed, config) whatever the pool size.
pub fn run_paths<F>(
    start: State,
    region: &Region,
    target: &TargetStrip,
    drift: F,
    spec: &NoiseSpec,
    cfg: &SimConfig,
) -> Result<Vec<PathOutcome>>
where
    F: Fn(State) -> (f64, f64) + Sync,
{
    cfg.validate()?;
    spec.validate()?;
    region.validate()?;
    if spec.is_silent() {
        return Err(Error::config(
            "noise",
            "stochastic simulation needs a nonzero intensity",
        ));
    }
    Ok((0..cfg.paths)
        .into_par_iter()
        .map(|id| run_one(id, start, region, target, &drift, spec, cfg))
        .collect())
}

fn censored_fraction(outcomes: &[PathOutcome]) -> f64 {
    outcomes.iter().filter(|o| o.censored).count() as f64 / outcomes.len() as f64
}

fn check_censoring(cfg: &SimConfig, fraction: f64) -> Result<()> {
    if let Some(limit) = cfg.censor_limit {
        if fraction > limit {
            return Err(Error::HorizonTooShort {
                censored: fraction,
                limit,
            });
        }
    }
    Ok(())
}

/// Pairwise (tree) summation: deterministic and order-stable regardless of
/// how the outcomes were produced.
fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Escape-probability estimate from simulated outcomes: the fraction of
/// uncensored paths that left through the target strip, with a binomial
/// 95% interval.
pub fn fep_estimate_from(outcomes: &[PathOutcome], cfg: &SimConfig) -> Result<PathEstimate> {
    let fraction = censored_fraction(outcomes);
    check_censoring(cfg, fraction)?;
    let used: Vec<f64> = outcomes
        .iter()
        .filter(|o| !o.censored)
        .map(|o| if o.reached_target { 1.0 } else { 0.0 })
        .collect();
    if used.is_empty() {
        return Err(Error::InsufficientData("all paths censored".into()));
    }
    let n = used.len() as f64;
    let p = pairwise_sum(&used) / n;
    Ok(PathEstimate {
        mean: p,
        half_width: 1.96 * (p * (1.0 - p) / n).sqrt(),
        effective_paths: used.len(),
        censored_fraction: fraction,
    })
}

/// Mean-exit-time estimate from simulated outcomes with a normal 95%
/// interval over uncensored paths.
pub fn mfet_estimate_from(outcomes: &[PathOutcome], cfg: &SimConfig) -> Result<PathEstimate> {
    let fraction = censored_fraction(outcomes);
    check_censoring(cfg, fraction)?;
    let times: Vec<f64> = outcomes
        .iter()
        .filter(|o| !o.censored)
        .map(|o| o.exit_time)
        .collect();
    if times.is_empty() {
        return Err(Error::InsufficientData("all paths censored".into()));
    }
    let n = times.len() as f64;
    let mean = pairwise_sum(&times) / n;
    let sq: Vec<f64> = times.iter().map(|t| (t - mean) * (t - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0).max(1.0);
    Ok(PathEstimate {
        mean,
        half_width: 1.96 * (var / n).sqrt(),
        effective_paths: times.len(),
        censored_fraction: fraction,
    })
}

/// Runs a fresh path set and estimates the first escape probability.
pub fn estimate_fep<F>(
    start: State,
    region: &Region,
    target: &TargetStrip,
    drift: F,
    spec: &NoiseSpec,
    cfg: &SimConfig,
) -> Result<PathEstimate>
where
    F: Fn(State) -> (f64, f64) + Sync,
{
    let outcomes = run_paths(start, region, target, drift, spec, cfg)?;
    fep_estimate_from(&outcomes, cfg)
}

/// Runs a fresh path set and estimates the mean first exit time.
pub fn estimate_mfet<F>(
    start: State,
    region: &Region,
    drift: F,
    spec: &NoiseSpec,
    cfg: &SimConfig,
) -> Result<PathEstimate>
where
    F: Fn(State) -> (f64, f64) + Sync,
{
    // target only classifies exits; exit times ignore it
    let target = TargetStrip {
        v_min: region.v_max,
        v_max: f64::INFINITY,
    };
    let outcomes = run_paths(start, region, &target, drift, spec, cfg)?;
    mfet_estimate_from(&outcomes, cfg)
}
