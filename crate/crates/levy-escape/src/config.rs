//! Run configuration: a flat key-value text format with dotted section keys
//! (`noise.alpha = 1.25`), parsed without any grammar machinery so configs
//! stay diff-friendly. Unset keys take the compiled defaults; command-line
//! `--set key=value` pairs override file values.

use crate::basin::{SigmaAxis, ThresholdSpec};
use crate::error::{Error, Result};
use crate::mc::SimConfig;
use crate::ml::{MlParams, ScalingMap, State};
use crate::noise::NoiseSpec;
use crate::solver::{DriftScheme, Region, SolverConfig, TargetStrip};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "LEVY_ESCAPE_OUT";

/// How a sweep's intensity axis is built from `sweep.sigmas` and
/// `sweep.fixed_sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    Diagonal,
    FixedSigma1,
    FixedSigma2,
}

/// Everything one run needs; archived beside its outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: MlParams,
    pub scaling: ScalingMap,
    pub noise: NoiseSpec,
    pub region: Region,
    pub target: TargetStrip,
    pub solver: SolverConfig,
    pub mc: SimConfig,
    pub thresholds: ThresholdSpec,
    pub sweep_alphas: Vec<f64>,
    pub sweep_mode: SweepMode,
    pub sweep_sigmas: Vec<f64>,
    pub sweep_fixed_sigma: f64,
    pub dense: bool,
    /// Starting/observation point; the computed resting state when unset.
    pub start: Option<State>,
    pub output_dir: PathBuf,
    pub render: bool,
    pub dump_paths: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let output_dir = std::env::var_os(OUTPUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"));
        RunConfig {
            model: MlParams::default(),
            scaling: ScalingMap::default(),
            noise: NoiseSpec {
                alpha: 1.25,
                sigma1: 0.5,
                sigma2: 0.5,
            },
            region: Region::default(),
            target: TargetStrip::default(),
            solver: SolverConfig::default(),
            mc: SimConfig::default(),
            thresholds: ThresholdSpec::default(),
            sweep_alphas: vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0],
            sweep_mode: SweepMode::Diagonal,
            sweep_sigmas: vec![0.25, 0.5, 0.75, 1.0],
            sweep_fixed_sigma: 0.5,
            dense: false,
            start: None,
            output_dir,
            render: false,
            dump_paths: false,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    match value {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => value
            .parse::<f64>()
            .map_err(|_| Error::config(key, "expected a number")),
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::config(key, "expected a nonnegative integer"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(key, "expected true or false")),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_f64(key, s))
        .collect()
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "model.c_m" => self.model.c_m = parse_f64(key, v)?,
            "model.g_ca" => self.model.g_ca = parse_f64(key, v)?,
            "model.g_k" => self.model.g_k = parse_f64(key, v)?,
            "model.g_l" => self.model.g_l = parse_f64(key, v)?,
            "model.v_ca" => self.model.v_ca = parse_f64(key, v)?,
            "model.v_k" => self.model.v_k = parse_f64(key, v)?,
            "model.v_l" => self.model.v_l = parse_f64(key, v)?,
            "model.v1" => self.model.v1 = parse_f64(key, v)?,
            "model.v2" => self.model.v2 = parse_f64(key, v)?,
            "model.v3" => self.model.v3 = parse_f64(key, v)?,
            "model.v4" => self.model.v4 = parse_f64(key, v)?,
            "model.phi" => self.model.phi = parse_f64(key, v)?,
            "model.i_app" => self.model.i_app = parse_f64(key, v)?,
            "scaling.v_factor" => self.scaling.v_factor = parse_f64(key, v)?,
            "scaling.w_factor" => self.scaling.w_factor = parse_f64(key, v)?,
            "noise.alpha" => self.noise.alpha = parse_f64(key, v)?,
            "noise.sigma1" => self.noise.sigma1 = parse_f64(key, v)?,
            "noise.sigma2" => self.noise.sigma2 = parse_f64(key, v)?,
            "region.v_min" => self.region.v_min = parse_f64(key, v)?,
            "region.v_max" => self.region.v_max = parse_f64(key, v)?,
            "region.w_min" => self.region.w_min = parse_f64(key, v)?,
            "region.w_max" => self.region.w_max = parse_f64(key, v)?,
            "target.v_min" => self.target.v_min = parse_f64(key, v)?,
            "target.v_max" => self.target.v_max = parse_f64(key, v)?,
            "solver.n_v" => self.solver.grid.n_v = parse_usize(key, v)?,
            "solver.n_w" => self.solver.grid.n_w = parse_usize(key, v)?,
            "solver.drift" => {
                self.solver.drift = match v {
                    "upwind" => DriftScheme::Upwind,
                    "central" => DriftScheme::Central,
                    _ => return Err(Error::config(key, "expected upwind or central")),
                }
            }
            "solver.tol" => self.solver.tol = parse_f64(key, v)?,
            "solver.max_iter_factor" => self.solver.max_iter_factor = parse_usize(key, v)?,
            "mc.dt" => self.mc.dt = parse_f64(key, v)?,
            "mc.t_max" => self.mc.t_max = parse_f64(key, v)?,
            "mc.paths" => self.mc.paths = parse_usize(key, v)?,
            "mc.antithetic" => self.mc.antithetic = parse_bool(key, v)?,
            "mc.censor_limit" => {
                self.mc.censor_limit = if v == "none" {
                    None
                } else {
                    Some(parse_f64(key, v)?)
                }
            }
            "mc.dump_paths" => self.dump_paths = parse_bool(key, v)?,
            "seed" => {
                self.mc.seed = v
                    .parse::<u64>()
                    .map_err(|_| Error::config(key, "expected an unsigned integer"))?
            }
            "metrics.p_star" => self.thresholds.p_star = parse_f64(key, v)?,
            "metrics.u_star" => self.thresholds.u_star = parse_f64(key, v)?,
            "sweep.alphas" => self.sweep_alphas = parse_list(key, v)?,
            "sweep.mode" => {
                self.sweep_mode = match v {
                    "diagonal" => SweepMode::Diagonal,
                    "fixed_sigma1" => SweepMode::FixedSigma1,
                    "fixed_sigma2" => SweepMode::FixedSigma2,
                    _ => {
                        return Err(Error::config(
                            key,
                            "expected diagonal, fixed_sigma1 or fixed_sigma2",
                        ))
                    }
                }
            }
            "sweep.sigmas" => self.sweep_sigmas = parse_list(key, v)?,
            "sweep.fixed_sigma" => self.sweep_fixed_sigma = parse_f64(key, v)?,
            "sweep.dense" => self.dense = parse_bool(key, v)?,
            "start.v" => {
                let w = self.start.map(|s| s.w).unwrap_or(0.0);
                self.start = Some(State::new(parse_f64(key, v)?, w));
            }
            "start.w" => {
                let vv = self.start.map(|s| s.v).unwrap_or(0.0);
                self.start = Some(State::new(vv, parse_f64(key, v)?));
            }
            "output.dir" => self.output_dir = PathBuf::from(v),
            "output.render" => self.render = parse_bool(key, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Parses the flat key-value text. Lines are `key = value`; `#` starts a
    /// comment; blank lines are ignored.
    pub fn parse_str(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse_str(&text)
    }

    /// Applies `key=value` override pairs (command-line flags beat files).
    pub fn apply_overrides<'a, I>(&mut self, pairs: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        self.validate()
    }

    /// Enforces every component invariant; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.scaling.v_factor == 0.0 || self.scaling.w_factor == 0.0 {
            return Err(Error::config("scaling", "factors must be nonzero"));
        }
        self.noise.validate()?;
        self.region.validate()?;
        self.target.validate(&self.region)?;
        self.solver.validate()?;
        self.mc.validate()?;
        self.thresholds.validate()?;
        for &a in &self.sweep_alphas {
            if !(a > 0.0 && a <= 2.0) {
                return Err(Error::config("sweep.alphas", "alpha must lie in (0,2]"));
            }
        }
        for &s in &self.sweep_sigmas {
            if !(s >= 0.0) {
                return Err(Error::config("sweep.sigmas", "must be >= 0"));
            }
        }
        Ok(())
    }

    /// The sweep intensity axis this config describes.
    pub fn sigma_axis(&self) -> SigmaAxis {
        match self.sweep_mode {
            SweepMode::Diagonal => SigmaAxis::Diagonal {
                sigmas: self.sweep_sigmas.clone(),
            },
            SweepMode::FixedSigma1 => SigmaAxis::FixedSigma1 {
                sigma1: self.sweep_fixed_sigma,
                sigma2s: self.sweep_sigmas.clone(),
            },
            SweepMode::FixedSigma2 => SigmaAxis::FixedSigma2 {
                sigma2: self.sweep_fixed_sigma,
                sigma1s: self.sweep_sigmas.clone(),
            },
        }
    }

    /// Serializes every setting in a stable order; parsing the output
    /// reproduces the config exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("model.c_m", format!("{}", self.model.c_m));
        kv("model.g_ca", format!("{}", self.model.g_ca));
        kv("model.g_k", format!("{}", self.model.g_k));
        kv("model.g_l", format!("{}", self.model.g_l));
        kv("model.v_ca", format!("{}", self.model.v_ca));
        kv("model.v_k", format!("{}", self.model.v_k));
        kv("model.v_l", format!("{}", self.model.v_l));
        kv("model.v1", format!("{}", self.model.v1));
        kv("model.v2", format!("{}", self.model.v2));
        kv("model.v3", format!("{}", self.model.v3));
        kv("model.v4", format!("{}", self.model.v4));
        kv("model.phi", format!("{}", self.model.phi));
        kv("model.i_app", format!("{}", self.model.i_app));
        kv("scaling.v_factor", format!("{}", self.scaling.v_factor));
        kv("scaling.w_factor", format!("{}", self.scaling.w_factor));
        kv("noise.alpha", format!("{}", self.noise.alpha));
        kv("noise.sigma1", format!("{}", self.noise.sigma1));
        kv("noise.sigma2", format!("{}", self.noise.sigma2));
        kv("region.v_min", format!("{}", self.region.v_min));
        kv("region.v_max", format!("{}", self.region.v_max));
        kv("region.w_min", format!("{}", self.region.w_min));
        kv("region.w_max", format!("{}", self.region.w_max));
        kv("target.v_min", format!("{}", self.target.v_min));
        kv(
            "target.v_max",
            if self.target.v_max.is_infinite() {
                "inf".to_string()
            } else {
                format!("{}", self.target.v_max)
            },
        );
        kv("solver.n_v", format!("{}", self.solver.grid.n_v));
        kv("solver.n_w", format!("{}", self.solver.grid.n_w));
        kv(
            "solver.drift",
            match self.solver.drift {
                DriftScheme::Upwind => "upwind".into(),
                DriftScheme::Central => "central".into(),
            },
        );
        kv("solver.tol", format!("{}", self.solver.tol));
        kv(
            "solver.max_iter_factor",
            format!("{}", self.solver.max_iter_factor),
        );
        kv("mc.dt", format!("{}", self.mc.dt));
        kv("mc.t_max", format!("{}", self.mc.t_max));
        kv("mc.paths", format!("{}", self.mc.paths));
        kv("mc.antithetic", format!("{}", self.mc.antithetic));
        kv(
            "mc.censor_limit",
            self.mc
                .censor_limit
                .map(|x| format!("{x}"))
                .unwrap_or_else(|| "none".into()),
        );
        kv("mc.dump_paths", format!("{}", self.dump_paths));
        kv("seed", format!("{}", self.mc.seed));
        kv("metrics.p_star", format!("{}", self.thresholds.p_star));
        kv("metrics.u_star", format!("{}", self.thresholds.u_star));
        kv(
            "sweep.alphas",
            self.sweep_alphas
                .iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        kv(
            "sweep.mode",
            match self.sweep_mode {
                SweepMode::Diagonal => "diagonal".into(),
                SweepMode::FixedSigma1 => "fixed_sigma1".into(),
                SweepMode::FixedSigma2 => "fixed_sigma2".into(),
            },
        );
        kv(
            "sweep.sigmas",
            self.sweep_sigmas
                .iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("sweep.fixed_sigma", format!("{}", self.sweep_fixed_sigma));
        kv("sweep.dense", format!("{}", self.dense));
        if let Some(start) = self.start {
            kv("start.v", format!("{}", start.v));
            kv("start.w", format!("{}", start.w));
        }
        kv("output.dir", self.output_dir.display().to_string());
        kv("output.render", format!("{}", self.render));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_documented_defaults() {
        let cfg = RunConfig::parse_str("").unwrap();
        assert_eq!(cfg.model, MlParams::default());
        assert_eq!(cfg.noise.alpha, 1.25);
        assert_eq!(cfg.noise.sigma1, 0.5);
        assert_eq!(cfg.noise.sigma2, 0.5);
        assert_eq!(cfg.region, Region::default());
        assert_eq!(cfg.target.v_min, 1.0723);
        assert!(cfg.target.v_max.is_infinite());
        assert_eq!(cfg.solver.grid.n_v, 201);
    }

    #[test]
    fn domain_checks_name_the_key() {
        let err = RunConfig::parse_str("noise.alpha = 2.5").unwrap_err();
        match err {
            Error::Config { key, constraint } => {
                assert_eq!(key, "noise.alpha");
                assert!(constraint.contains("(0,2]"));
            }
            other => panic!("unexpected error {other}"),
        }
        assert!(RunConfig::parse_str("model.c_m = -3").is_err());
        assert!(RunConfig::parse_str("no_such_key = 1").is_err());
        assert!(RunConfig::parse_str("mc.paths = 0").is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        let text = "
            noise.alpha = 1.5        # comment
            noise.sigma1 = 0.75
            solver.n_v = 101
            solver.drift = central
            sweep.alphas = 0.5, 1.0, 1.5
            start.v = -2.7
            start.w = 1.2
            mc.censor_limit = none
            target.v_max = inf
        ";
        let cfg = RunConfig::parse_str(text).unwrap();
        let emitted = cfg.to_text();
        let reparsed = RunConfig::parse_str(&emitted).unwrap();
        assert_eq!(cfg, reparsed);
        // and a second emit is bit-identical
        assert_eq!(emitted, reparsed.to_text());
    }

    #[test]
    fn overrides_beat_file_values() {
        let mut cfg = RunConfig::parse_str("noise.alpha = 1.5").unwrap();
        cfg.apply_overrides([("noise.alpha", "0.8"), ("solver.n_v", "51")])
            .unwrap();
        assert_eq!(cfg.noise.alpha, 0.8);
        assert_eq!(cfg.solver.grid.n_v, 51);
    }
}
