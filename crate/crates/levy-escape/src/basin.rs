//! Stochastic basin of attraction: normalized superlevel areas of the
//! escape-probability and exit-time fields, and the parameter sweeps that
//! drive the figure reproductions.

use crate::error::{Error, Result};
use crate::ml::State;
use crate::noise::NoiseSpec;
use crate::solver::{
    assemble, solve_fep_with, solve_mfet_with, FieldKind, Region, ScalarField, SolverConfig,
    TargetStrip,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

/// Superlevel thresholds for the basin areas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub p_star: f64,
    pub u_star: f64,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec {
            p_star: 0.8,
            u_star: 10.0,
        }
    }
}

impl ThresholdSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_star > 0.0 && self.p_star < 1.0) {
            return Err(Error::config("metrics.p_star", "must lie in (0,1)"));
        }
        if !(self.u_star > 0.0) {
            return Err(Error::config("metrics.u_star", "must be > 0"));
        }
        Ok(())
    }
}

/// Fraction of the region where the field strictly exceeds the threshold,
/// counted cell-by-cell on the field's own grid (each node stands for an
/// equal share of the region's area).
pub fn superlevel_fraction(field: &ScalarField, threshold: f64) -> f64 {
    let above = field.values.iter().filter(|&&x| x > threshold).count();
    above as f64 / field.values.len() as f64
}

/// Normalized basin area of high escape probability.
pub fn r_fep(field: &ScalarField, p_star: f64) -> f64 {
    debug_assert_eq!(field.kind, FieldKind::Fep);
    superlevel_fraction(field, p_star)
}

/// Normalized basin area of long residence.
pub fn r_mfet(field: &ScalarField, u_star: f64) -> f64 {
    debug_assert_eq!(field.kind, FieldKind::Mfet);
    superlevel_fraction(field, u_star)
}

/// Intensity axis of a sweep: the diagonal sigma1 = sigma2, or one channel
/// fixed while the other (ratio) varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SigmaAxis {
    Diagonal { sigmas: Vec<f64> },
    FixedSigma1 { sigma1: f64, sigma2s: Vec<f64> },
    FixedSigma2 { sigma2: f64, sigma1s: Vec<f64> },
}

impl SigmaAxis {
    fn pairs(&self) -> Vec<(f64, f64)> {
        match self {
            SigmaAxis::Diagonal { sigmas } => sigmas.iter().map(|&s| (s, s)).collect(),
            SigmaAxis::FixedSigma1 { sigma1, sigma2s } => {
                sigma2s.iter().map(|&s2| (*sigma1, s2)).collect()
            }
            SigmaAxis::FixedSigma2 { sigma2, sigma1s } => {
                sigma1s.iter().map(|&s1| (s1, *sigma2)).collect()
            }
        }
    }
}

/// Parameter grid of one sweep. The Gaussian endpoint alpha = 2 may appear
/// as a grid value; it is computed as its own series and never interpolated
/// against the alpha < 2 points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub alphas: Vec<f64>,
    pub sigmas: SigmaAxis,
    /// Observation point for the pointwise columns (the resting state by
    /// default, resolved by the configuration layer).
    pub eval_point: State,
    pub thresholds: ThresholdSpec,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::config("sweep.alphas", "must not be empty"));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a <= 2.0) {
                return Err(Error::config("sweep.alphas", "alpha must lie in (0,2]"));
            }
        }
        if self.sigmas.pairs().is_empty() {
            return Err(Error::config("sweep.sigmas", "must not be empty"));
        }
        self.thresholds.validate()
    }
}

/// One computed sweep point. Failed points keep their parameters with an
/// error note in `status`; numeric cells stay empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub fep_at_star: Option<f64>,
    pub mfet_at_star: Option<f64>,
    pub r_fep: Option<f64>,
    pub r_mfet: Option<f64>,
    pub status: String,
}

pub const SWEEP_HEADER: &str = "alpha,sigma1,sigma2,fep_at_star,mfet_at_star,r_fep,r_mfet,status";

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_default()
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.alpha,
            self.sigma1,
            self.sigma2,
            opt(self.fep_at_star),
            opt(self.mfet_at_star),
            opt(self.r_fep),
            opt(self.r_mfet),
            self.status
        )
    }

    pub fn from_csv_line(line: &str) -> Result<SweepRow> {
        let parts: Vec<&str> = line.trim_end().splitn(8, ',').collect();
        if parts.len() != 8 {
            return Err(Error::Parse(format!("bad sweep row: {line}")));
        }
        let num = |s: &str, key: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad {key} in sweep row: {s}")))
        };
        let optnum = |s: &str, key: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s, key).map(Some)
            }
        };
        Ok(SweepRow {
            alpha: num(parts[0], "alpha")?,
            sigma1: num(parts[1], "sigma1")?,
            sigma2: num(parts[2], "sigma2")?,
            fep_at_star: optnum(parts[3], "fep")?,
            mfet_at_star: optnum(parts[4], "mfet")?,
            r_fep: optnum(parts[5], "r_fep")?,
            r_mfet: optnum(parts[6], "r_mfet")?,
            status: parts[7].to_string(),
        })
    }
}

/// Completed sweep in input order.
#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }
}

/// Content key of one sweep point: every input that can change the row.
fn cache_key(
    alpha: f64,
    sigma1: f64,
    sigma2: f64,
    region: &Region,
    target: &TargetStrip,
    cfg: &SolverConfig,
    eval_point: State,
    thresholds: &ThresholdSpec,
    drift_tag: &str,
) -> String {
    let mut text = String::new();
    let _ = write!(
        text,
        "v1|{drift_tag}|{alpha:.17e}|{sigma1:.17e}|{sigma2:.17e}|{:.17e}|{:.17e}|{:.17e}|{:.17e}|{:.17e}|{:.17e}|{}|{}|{:?}|{:.17e}|{}|{:.17e}|{:.17e}|{:.17e}|{:.17e}",
        region.v_min,
        region.v_max,
        region.w_min,
        region.w_max,
        target.v_min,
        target.v_max,
        cfg.grid.n_v,
        cfg.grid.n_w,
        cfg.drift,
        cfg.tol,
        cfg.max_iter_factor,
        eval_point.v,
        eval_point.w,
        thresholds.p_star,
        thresholds.u_star,
    );
    let digest = Sha256::digest(text.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

fn cache_read(dir: &Path, key: &str) -> Option<String> {
    std::fs::read_to_string(dir.join(format!("{key}.row"))).ok()
}

fn cache_write(dir: &Path, key: &str, line: &str) {
    // atomic per entry: write-temp-then-rename; failures just skip caching
    let _ = std::fs::create_dir_all(dir);
    let tmp = dir.join(format!("{key}.row.tmp"));
    let fin = dir.join(format!("{key}.row"));
    if std::fs::write(&tmp, line).is_ok() {
        let _ = std::fs::rename(&tmp, &fin);
    }
}

fn compute_row<F>(
    alpha: f64,
    sigma1: f64,
    sigma2: f64,
    drift: &F,
    region: &Region,
    target: &TargetStrip,
    cfg: &SolverConfig,
    eval_point: State,
    thresholds: &ThresholdSpec,
) -> SweepRow
where
    F: Fn(State) -> (f64, f64),
{
    let mut row = SweepRow {
        alpha,
        sigma1,
        sigma2,
        fep_at_star: None,
        mfet_at_star: None,
        r_fep: None,
        r_mfet: None,
        status: "ok".into(),
    };
    let spec = match NoiseSpec::new(alpha, sigma1, sigma2) {
        Ok(s) => s,
        Err(e) => {
            row.status = format!("error: {e}");
            return row;
        }
    };
    let op = match assemble(drift, &spec, region, cfg) {
        Ok(op) => op,
        Err(e) => {
            row.status = format!("error: {e}");
            return row;
        }
    };
    match solve_fep_with(&op, &spec, region, target, cfg) {
        Ok((field, _)) => {
            row.fep_at_star = Some(field.eval(eval_point));
            row.r_fep = Some(r_fep(&field, thresholds.p_star));
        }
        Err(e) => row.status = format!("fep error: {e}"),
    }
    match solve_mfet_with(&op, &spec, region, cfg) {
        Ok((field, _)) => {
            row.mfet_at_star = Some(field.eval(eval_point));
            row.r_mfet = Some(r_mfet(&field, thresholds.u_star));
        }
        Err(e) => {
            let note = format!("mfet error: {e}");
            row.status = if row.status == "ok" {
                note
            } else {
                format!("{}; {note}", row.status)
            };
        }
    }
    row
}

/// Runs one solver invocation per parameter tuple (operator shared between
/// the two right-hand sides), in a parallel pool, with per-entry
/// content-addressed caching. Output order is the input order; per-point
/// failures land in the row's status and never abort the sweep.
///
/// `drift_tag` names the drift field inside the cache key; use one tag per
/// distinct model (e.g. serialized parameters).
pub fn sweep<F>(
    spec: &SweepSpec,
    drift: F,
    drift_tag: &str,
    region: &Region,
    target: &TargetStrip,
    cfg: &SolverConfig,
    cache_dir: Option<&Path>,
) -> Result<SweepTable>
where
    F: Fn(State) -> (f64, f64) + Sync,
{
    spec.validate()?;
    region.validate()?;
    target.validate(region)?;
    cfg.validate()?;
    let mut tuples = Vec::new();
    for &alpha in &spec.alphas {
        for (s1, s2) in spec.sigmas.pairs() {
            tuples.push((alpha, s1, s2));
        }
    }
    let rows: Vec<SweepRow> = tuples
        .par_iter()
        .map(|&(alpha, s1, s2)| {
            let key = cache_key(
                alpha,
                s1,
                s2,
                region,
                target,
                cfg,
                spec.eval_point,
                &spec.thresholds,
                drift_tag,
            );
            if let Some(dir) = cache_dir {
                if let Some(line) = cache_read(dir, &key) {
                    if let Ok(row) = SweepRow::from_csv_line(&line) {
                        return row;
                    }
                }
            }
            let row = compute_row(
                alpha,
                s1,
                s2,
                &drift,
                region,
                target,
                cfg,
                spec.eval_point,
                &spec.thresholds,
            );
            if let Some(dir) = cache_dir {
                cache_write(dir, &key, &row.csv_line());
            }
            row
        })
        .collect();
    Ok(SweepTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::State;
    use crate::solver::Grid;
    use approx::assert_abs_diff_eq;

    fn synthetic_field(n: usize, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let region = Region::default();
        let grid = Grid { n_v: n, n_w: n };
        let mut values = Vec::with_capacity(n * n);
        for l in 0..n {
            for j in 0..n {
                values.push(f(grid.s_coord(j), grid.k_coord(l)));
            }
        }
        ScalarField {
            kind: FieldKind::Fep,
            region,
            target: Some(TargetStrip::default()),
            grid,
            values,
        }
    }

    #[test]
    fn superlevel_extremes() {
        let ones = synthetic_field(21, |_, _| 1.0);
        assert_eq!(r_fep(&ones, 0.8), 1.0);
        // exactly at the threshold counts as below (strict inequality)
        let flat = synthetic_field(21, |_, _| 0.8);
        assert_eq!(r_fep(&flat, 0.8), 0.0);
        let zeros = synthetic_field(21, |_, _| 0.0);
        let mut mfet = zeros.clone();
        mfet.kind = FieldKind::Mfet;
        assert_eq!(r_mfet(&mfet, 10.0), 0.0);
    }

    #[test]
    fn half_split_field() {
        let field = synthetic_field(40, |s, _| if s > 0.0 { 1.0 } else { 0.0 });
        assert_abs_diff_eq!(r_fep(&field, 0.8), 0.5, epsilon = 0.03);
    }

    #[test]
    fn monotone_in_threshold() {
        let field = synthetic_field(31, |s, k| 0.5 * (1.0 + (s + 0.3 * k).tanh()));
        let mut last = 1.1;
        for i in 1..10 {
            let r = r_fep(&field, i as f64 / 10.0);
            assert!(r <= last);
            last = r;
        }
    }

    #[test]
    fn refinement_moves_area_less_than_two_boundary_layers() {
        let n = 41;
        let field = synthetic_field(n, |s, k| 0.5 * (1.0 + (2.0 * s - k).tanh()));
        let p_star = 0.6;
        let coarse = r_fep(&field, p_star);
        // bilinear refinement to 2n+1 nodes per axis
        let fine_grid = Grid {
            n_v: 2 * n + 1,
            n_w: 2 * n + 1,
        };
        let mut fine_vals = Vec::new();
        for l in 0..fine_grid.n_w {
            for j in 0..fine_grid.n_v {
                let p = State::new(
                    fine_grid.v_coord(&field.region, j),
                    fine_grid.w_coord(&field.region, l),
                );
                fine_vals.push(field.eval(p));
            }
        }
        let fine = ScalarField {
            kind: FieldKind::Fep,
            region: field.region,
            target: field.target,
            grid: fine_grid,
            values: fine_vals,
        };
        let refined = r_fep(&fine, p_star);
        // straddling cells: nodes with a neighbor on the other side
        let mut straddle = 0usize;
        for l in 0..n {
            for j in 0..n {
                let here = field.value(j, l) > p_star;
                let mut boundary = false;
                if j + 1 < n && (field.value(j + 1, l) > p_star) != here {
                    boundary = true;
                }
                if l + 1 < n && (field.value(j, l + 1) > p_star) != here {
                    boundary = true;
                }
                if boundary {
                    straddle += 1;
                }
            }
        }
        let bound = 2.0 * straddle as f64 / (n * n) as f64;
        assert!(
            (refined - coarse).abs() <= bound,
            "moved {} > bound {bound}",
            (refined - coarse).abs()
        );
    }

    fn tiny_cfg() -> SolverConfig {
        SolverConfig {
            grid: Grid { n_v: 15, n_w: 15 },
            ..SolverConfig::default()
        }
    }

    fn linear_drift(s: State) -> (f64, f64) {
        (-0.2 * s.v, -0.2 * (s.w - 1.0))
    }

    #[test]
    fn sweep_single_tuple_matches_direct_call() {
        let region = Region::default();
        let target = TargetStrip::default();
        let cfg = tiny_cfg();
        let spec = SweepSpec {
            alphas: vec![1.25],
            sigmas: SigmaAxis::Diagonal { sigmas: vec![0.5] },
            eval_point: State::new(-2.7277, 1.2436),
            thresholds: ThresholdSpec::default(),
        };
        let table = sweep(&spec, linear_drift, "lin", &region, &target, &cfg, None).unwrap();
        assert_eq!(table.rows.len(), 1);
        let row = &table.rows[0];
        assert_eq!(row.status, "ok");
        let noise = NoiseSpec::new(1.25, 0.5, 0.5).unwrap();
        let (field, _) =
            crate::solver::solve_fep(linear_drift, &noise, &region, &target, &cfg).unwrap();
        assert_eq!(row.fep_at_star.unwrap(), field.eval(spec.eval_point));
        assert_eq!(row.r_fep.unwrap(), r_fep(&field, 0.8));
    }

    #[test]
    fn ratio_sweep_agrees_with_diagonal_at_equal_intensities() {
        let region = Region::default();
        let target = TargetStrip::default();
        let cfg = tiny_cfg();
        let mk = |sigmas: SigmaAxis| SweepSpec {
            alphas: vec![1.0, 1.5],
            sigmas,
            eval_point: State::new(-2.7277, 1.2436),
            thresholds: ThresholdSpec::default(),
        };
        let diag = sweep(
            &mk(SigmaAxis::Diagonal { sigmas: vec![0.5] }),
            linear_drift,
            "lin",
            &region,
            &target,
            &cfg,
            None,
        )
        .unwrap();
        let ratio = sweep(
            &mk(SigmaAxis::FixedSigma1 {
                sigma1: 0.5,
                sigma2s: vec![0.25, 0.5],
            }),
            linear_drift,
            "lin",
            &region,
            &target,
            &cfg,
            None,
        )
        .unwrap();
        // the sigma2 = sigma1 entries must match the diagonal bit for bit
        for (alpha_idx, &alpha) in [1.0f64, 1.5].iter().enumerate() {
            let d = &diag.rows[alpha_idx];
            let r = ratio
                .rows
                .iter()
                .find(|r| r.alpha == alpha && r.sigma2 == 0.5)
                .unwrap();
            assert_eq!(d.csv_line(), r.csv_line());
        }
    }

    #[test]
    fn cache_hits_return_identical_rows_and_failures_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let region = Region::default();
        let target = TargetStrip::default();
        let cfg = tiny_cfg();
        let spec = SweepSpec {
            // sigma1 = 0 at alpha < 2 is an unsupported escape problem: the
            // row must record the failure and keep the sweep alive
            alphas: vec![1.25],
            sigmas: SigmaAxis::FixedSigma2 {
                sigma2: 0.5,
                sigma1s: vec![0.0, 0.5],
            },
            eval_point: State::new(-2.7277, 1.2436),
            thresholds: ThresholdSpec::default(),
        };
        let first = sweep(
            &spec,
            linear_drift,
            "lin",
            &region,
            &target,
            &cfg,
            Some(dir.path()),
        )
        .unwrap();
        assert_eq!(first.rows.len(), 2);
        assert!(first.rows[0].status.contains("error"));
        assert!(first.rows[0].mfet_at_star.is_some()); // exit time still solvable
        assert_eq!(first.rows[1].status, "ok");
        let second = sweep(
            &spec,
            linear_drift,
            "lin",
            &region,
            &target,
            &cfg,
            Some(dir.path()),
        )
        .unwrap();
        assert_eq!(first.to_csv(), second.to_csv());
        // cache entries exist on disk
        let entries = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(entries, 2);
    }

    #[test]
    fn sweep_row_csv_roundtrip() {
        let row = SweepRow {
            alpha: 1.25,
            sigma1: 0.5,
            sigma2: 0.75,
            fep_at_star: Some(0.123456789012345),
            mfet_at_star: None,
            r_fep: Some(0.25),
            r_mfet: Some(0.0),
            status: "mfet error: something, with a comma".into(),
        };
        let parsed = SweepRow::from_csv_line(&row.csv_line()).unwrap();
        assert_eq!(row, parsed);
    }

    #[test]
    fn sweep_spec_validation() {
        let bad = SweepSpec {
            alphas: vec![2.5],
            sigmas: SigmaAxis::Diagonal { sigmas: vec![0.5] },
            eval_point: State::new(0.0, 0.0),
            thresholds: ThresholdSpec::default(),
        };
        assert!(bad.validate().is_err());
        let bad2 = SweepSpec {
            alphas: vec![],
            sigmas: SigmaAxis::Diagonal { sigmas: vec![0.5] },
            eval_point: State::new(0.0, 0.0),
            thresholds: ThresholdSpec::default(),
        };
        assert!(bad2.validate().is_err());
    }
}
