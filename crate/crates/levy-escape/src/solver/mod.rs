//! Nonlocal exterior-value solver: discretizes the generator of the
//! Levy-driven planar SDE on a rectangle and solves the escape-probability
//! and mean-exit-time problems.
//!
//! The escape probability p solves A p = 0 inside the region with p = 1 on
//! the target strip and p = 0 on the rest of the exterior; the jump mass
//! landing on the strip moves to the right-hand side as the source term of
//! [`fep_source`]. The mean exit time u solves A u = -1 with u = 0 on the
//! whole exterior. Both problems share one assembled operator and differ
//! only in right-hand side.

pub mod krylov;
pub mod operator;

pub use krylov::SolveStats;
pub use operator::{assemble, kappa, OperatorMatrix};

use crate::error::{Error, Result};
use crate::ml::State;
use crate::noise::{c_alpha, NoiseSpec};
use serde::{Deserialize, Serialize};

/// Open rectangular escape region (v_min, v_max) x (w_min, w_max) in scaled
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub v_min: f64,
    pub v_max: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl Default for Region {
    /// The escape region around the type-II resting state.
    fn default() -> Self {
        Region {
            v_min: -5.9277,
            v_max: 1.0723,
            w_min: -1.7564,
            w_max: 5.2436,
        }
    }
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_min < self.v_max) || !self.v_min.is_finite() || !self.v_max.is_finite() {
            return Err(Error::config("region.v", "requires v_min < v_max, finite"));
        }
        if !(self.w_min < self.w_max) || !self.w_min.is_finite() || !self.w_max.is_finite() {
            return Err(Error::config("region.w", "requires w_min < w_max, finite"));
        }
        Ok(())
    }

    pub fn len_v(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn len_w(&self) -> f64 {
        self.w_max - self.w_min
    }

    pub fn area(&self) -> f64 {
        self.len_v() * self.len_w()
    }

    pub fn center(&self) -> State {
        State::new(
            0.5 * (self.v_min + self.v_max),
            0.5 * (self.w_min + self.w_max),
        )
    }

    /// Membership in the open region.
    pub fn contains(&self, p: State) -> bool {
        p.v > self.v_min && p.v < self.v_max && p.w > self.w_min && p.w < self.w_max
    }
}

/// Target strip E = [v_min, v_max] x [region.w_min, region.w_max], closed,
/// abutting the region on the right (`v_min >= region.v_max`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetStrip {
    pub v_min: f64,
    /// May be +infinity for a half-line strip.
    pub v_max: f64,
}

impl Default for TargetStrip {
    fn default() -> Self {
        TargetStrip {
            v_min: 1.0723,
            v_max: f64::INFINITY,
        }
    }
}

impl TargetStrip {
    pub fn validate(&self, region: &Region) -> Result<()> {
        if !(self.v_min >= region.v_max) {
            return Err(Error::Geometry(format!(
                "target strip must lie right of the region: v_min {} < region v_max {}",
                self.v_min, region.v_max
            )));
        }
        if !(self.v_max > self.v_min) && !(self.v_max == f64::INFINITY && self.v_min.is_finite()) {
            return Err(Error::Geometry(
                "target strip requires v_min < v_max".into(),
            ));
        }
        Ok(())
    }

    /// Membership in the closed strip (w-range borrowed from the region).
    pub fn contains(&self, p: State, region: &Region) -> bool {
        p.v >= self.v_min && p.v <= self.v_max && p.w >= region.w_min && p.w <= region.w_max
    }

    /// Whether the region's right boundary line itself belongs to the strip
    /// (ties at v = v_min resolve inside).
    pub fn touches(&self, region: &Region) -> bool {
        self.v_min <= region.v_max
    }
}

/// Interior node counts per axis; nodes are strictly inside the rescaled
/// unit square at spacing 2/(n+1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub n_v: usize,
    pub n_w: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid { n_v: 201, n_w: 201 }
    }
}

impl Grid {
    pub fn new(n_v: usize, n_w: usize) -> Result<Self> {
        if n_v < 2 || n_w < 2 {
            return Err(Error::config("solver.grid", "needs at least 2 nodes per axis"));
        }
        Ok(Grid { n_v, n_w })
    }

    pub fn h_v(&self) -> f64 {
        2.0 / (self.n_v as f64 + 1.0)
    }

    pub fn h_w(&self) -> f64 {
        2.0 / (self.n_w as f64 + 1.0)
    }

    pub fn s_coord(&self, j: usize) -> f64 {
        -1.0 + (j as f64 + 1.0) * self.h_v()
    }

    pub fn k_coord(&self, l: usize) -> f64 {
        -1.0 + (l as f64 + 1.0) * self.h_w()
    }

    pub fn v_coord(&self, region: &Region, j: usize) -> f64 {
        0.5 * region.len_v() * self.s_coord(j) + 0.5 * (region.v_min + region.v_max)
    }

    pub fn w_coord(&self, region: &Region, l: usize) -> f64 {
        0.5 * region.len_w() * self.k_coord(l) + 0.5 * (region.w_min + region.w_max)
    }
}

/// Affine map of a region point onto the open unit square (-1,1)^2.
pub fn rescale(region: &Region, point: State) -> Result<(f64, f64)> {
    let s = (point.v - 0.5 * (region.v_min + region.v_max)) / (0.5 * region.len_v());
    let k = (point.w - 0.5 * (region.w_min + region.w_max)) / (0.5 * region.len_w());
    if !(-1.0..=1.0).contains(&s) || !(-1.0..=1.0).contains(&k) {
        return Err(Error::OutOfRegion {
            v: point.v,
            w: point.w,
        });
    }
    Ok((s, k))
}

/// Inverse of [`rescale`].
pub fn unrescale(region: &Region, s: f64, k: f64) -> State {
    State::new(
        0.5 * region.len_v() * s + 0.5 * (region.v_min + region.v_max),
        0.5 * region.len_w() * k + 0.5 * (region.w_min + region.w_max),
    )
}

/// Drift discretization mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftScheme {
    /// Downstream one-sided differences; keeps every off-diagonal
    /// nonnegative (monotone scheme). Default.
    Upwind,
    /// Second-order central differences; for convergence studies and
    /// diffusion-dominated Gaussian runs.
    Central,
}

/// Grid, drift mode and linear-solver budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid: Grid,
    pub drift: DriftScheme,
    /// Relative residual tolerance of the linear solve, in (0, 1e-6].
    pub tol: f64,
    /// Iteration cap as a multiple of the unknown count.
    pub max_iter_factor: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grid: Grid::default(),
            drift: DriftScheme::Upwind,
            tol: 1e-10,
            max_iter_factor: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.n_v < 2 || self.grid.n_w < 2 {
            return Err(Error::config("solver.grid", "needs at least 2 nodes per axis"));
        }
        if !(self.tol > 0.0 && self.tol <= 1e-6) {
            return Err(Error::config("solver.tol", "must lie in (0, 1e-6]"));
        }
        if self.max_iter_factor == 0 {
            return Err(Error::config("solver.max_iter_factor", "must be >= 1"));
        }
        Ok(())
    }
}

/// Which exterior-value problem a field solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Fep,
    Mfet,
}

/// Grid-sampled solution with its exterior-value semantics.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub kind: FieldKind,
    pub region: Region,
    pub target: Option<TargetStrip>,
    pub grid: Grid,
    /// Node values, w-major: values[l * n_v + j].
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn value(&self, j: usize, l: usize) -> f64 {
        self.values[l * self.grid.n_v + j]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value of the known exterior data at an exterior point.
    pub fn exterior_value(&self, p: State) -> f64 {
        match (self.kind, &self.target) {
            (FieldKind::Fep, Some(t)) if t.contains(p, &self.region) => 1.0,
            _ => 0.0,
        }
    }

    /// Node value extended by the boundary data: virtual indices -1 and n
    /// evaluate the exterior value on the boundary line.
    fn lattice_value(&self, ji: isize, li: isize) -> f64 {
        let n_v = self.grid.n_v as isize;
        let n_w = self.grid.n_w as isize;
        if ji >= 0 && ji < n_v && li >= 0 && li < n_w {
            return self.value(ji as usize, li as usize);
        }
        // boundary ring: only the right edge can carry the target value
        if ji == n_v {
            if let (FieldKind::Fep, Some(t)) = (self.kind, &self.target) {
                if t.touches(&self.region) {
                    return 1.0;
                }
            }
        }
        0.0
    }

    /// Bilinear evaluation anywhere in the plane; exterior points return the
    /// exterior data exactly.
    pub fn eval(&self, p: State) -> f64 {
        if !self.region.contains(p) {
            return self.exterior_value(p);
        }
        let (s, k) = rescale(&self.region, p).expect("point inside region");
        let (h_v, h_w) = (self.grid.h_v(), self.grid.h_w());
        let fj = (s + 1.0) / h_v - 1.0;
        let fl = (k + 1.0) / h_w - 1.0;
        let j0 = fj.floor();
        let l0 = fl.floor();
        let tj = fj - j0;
        let tl = fl - l0;
        let (j0, l0) = (j0 as isize, l0 as isize);
        self.lattice_value(j0, l0) * (1.0 - tj) * (1.0 - tl)
            + self.lattice_value(j0 + 1, l0) * tj * (1.0 - tl)
            + self.lattice_value(j0, l0 + 1) * (1.0 - tj) * tl
            + self.lattice_value(j0 + 1, l0 + 1) * tj * tl
    }
}

/// Source term of the escape-probability problem: the jump rate onto the
/// target strip, moved to the right-hand side. Nonpositive everywhere. At
/// alpha = 2 the target enters through the Dirichlet boundary value instead
/// and the source vanishes.
pub fn fep_source(
    spec: &NoiseSpec,
    region: &Region,
    target: &TargetStrip,
    grid: &Grid,
) -> Result<Vec<f64>> {
    target.validate(region)?;
    let dim = grid.n_v * grid.n_w;
    if spec.is_gaussian() || spec.sigma1 == 0.0 {
        return Ok(vec![0.0; dim]);
    }
    let c = c_alpha(spec.alpha)?;
    let rate = spec.sigma1.powf(spec.alpha) * c / spec.alpha;
    let mut psi = vec![0.0; dim];
    for l in 0..grid.n_w {
        for j in 0..grid.n_v {
            let v = grid.v_coord(region, j);
            let near = (target.v_min - v).powf(-spec.alpha);
            let far = if target.v_max.is_finite() {
                (target.v_max - v).powf(-spec.alpha)
            } else {
                0.0
            };
            psi[l * grid.n_v + j] = -rate * (near - far);
        }
    }
    Ok(psi)
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteSolution("non-finite entries".into()));
    }
    Ok(())
}

/// Escape probability field on a freshly assembled operator.
pub fn solve_fep<F>(
    drift: F,
    spec: &NoiseSpec,
    region: &Region,
    target: &TargetStrip,
    cfg: &SolverConfig,
) -> Result<(ScalarField, SolveStats)>
where
    F: Fn(State) -> (f64, f64),
{
    let op = assemble(&drift, spec, region, cfg)?;
    solve_fep_with(&op, spec, region, target, cfg)
}

/// Escape probability on a shared operator (reuse across right-hand sides).
pub fn solve_fep_with(
    op: &OperatorMatrix,
    spec: &NoiseSpec,
    region: &Region,
    target: &TargetStrip,
    cfg: &SolverConfig,
) -> Result<(ScalarField, SolveStats)> {
    if spec.is_silent() {
        return Err(Error::OutOfDomain(
            "escape probability needs a noise source".into(),
        ));
    }
    if !spec.is_gaussian() && spec.sigma1 == 0.0 {
        return Err(Error::Unsupported(
            "sigma1 = 0 with alpha < 2: the discretized nonlocal problem has no \
             jump route into the target strip"
                .into(),
        ));
    }
    let mut rhs = fep_source(spec, region, target, &cfg.grid)?;
    if target.touches(region) {
        // known value 1 on the right boundary line enters through every
        // stencil/quadrature reference to it
        for (r, w) in rhs.iter_mut().zip(op.right_value_weight()) {
            *r -= w;
        }
    }
    let max_iter = cfg.max_iter_factor * op.dim();
    let (values, stats) = krylov::bicgstab(op, &rhs, cfg.tol, max_iter)?;
    check_finite(&values)?;
    let slack = 10.0 * cfg.tol;
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo < -slack || hi > 1.0 + slack {
        return Err(Error::NonFiniteSolution(format!(
            "escape probability leaves [0,1] beyond slack: range [{lo:.3e}, {hi:.3e}]"
        )));
    }
    Ok((
        ScalarField {
            kind: FieldKind::Fep,
            region: *region,
            target: Some(*target),
            grid: cfg.grid,
            values,
        },
        stats,
    ))
}

/// Mean first exit time field on a freshly assembled operator.
pub fn solve_mfet<F>(
    drift: F,
    spec: &NoiseSpec,
    region: &Region,
    cfg: &SolverConfig,
) -> Result<(ScalarField, SolveStats)>
where
    F: Fn(State) -> (f64, f64),
{
    let op = assemble(&drift, spec, region, cfg)?;
    solve_mfet_with(&op, spec, region, cfg)
}

/// Mean first exit time on a shared operator.
pub fn solve_mfet_with(
    op: &OperatorMatrix,
    spec: &NoiseSpec,
    region: &Region,
    cfg: &SolverConfig,
) -> Result<(ScalarField, SolveStats)> {
    if spec.is_silent() {
        return Err(Error::OutOfDomain(
            "exit from the basin needs a noise source".into(),
        ));
    }
    let rhs = vec![-1.0; op.dim()];
    let max_iter = cfg.max_iter_factor * op.dim();
    let (values, stats) = krylov::bicgstab(op, &rhs, cfg.tol, max_iter)?;
    check_finite(&values)?;
    let slack = 10.0 * cfg.tol;
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if lo < -slack {
        return Err(Error::NonFiniteSolution(format!(
            "mean exit time went negative beyond slack: min {lo:.3e}"
        )));
    }
    Ok((
        ScalarField {
            kind: FieldKind::Mfet,
            region: *region,
            target: None,
            grid: cfg.grid,
            values,
        },
        stats,
    ))
}

/// One refinement step of a grid-convergence table.
#[derive(Debug, Clone, Copy)]
pub struct ConvergencePair {
    /// Spacing (s-units) of the finer grid in the pair.
    pub h_fine: f64,
    /// Max absolute difference over nodes the two grids share.
    pub max_delta: f64,
    /// Difference at the shared node closest to the region center.
    pub center_delta: f64,
}

/// Successive-refinement report.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub pairs: Vec<ConvergencePair>,
    /// Order estimates from successive max-norm deltas (h-ratio aware).
    pub orders: Vec<f64>,
    /// Order estimates from the center deltas; the boundary layer of the
    /// exterior-value problem caps sup-norm rates at alpha/2, so interior
    /// observables carry the scheme's transport/quadrature order.
    pub center_orders: Vec<f64>,
}

/// Solves the same problem on each grid and reports successive differences
/// at common nodes with empirical order estimates. Grids must refine by
/// roughly 2x each step.
pub fn convergence_study<F>(
    kind: FieldKind,
    drift: F,
    spec: &NoiseSpec,
    region: &Region,
    target: Option<&TargetStrip>,
    grids: &[Grid],
    base: &SolverConfig,
) -> Result<ConvergenceReport>
where
    F: Fn(State) -> (f64, f64),
{
    if grids.len() < 3 {
        return Err(Error::config(
            "convergence.grids",
            "needs at least 3 grids, each refining the last by 2x",
        ));
    }
    for pair in grids.windows(2) {
        // each axis either refines by roughly 2x or stays fixed (a silent
        // axis need not refine)
        for (coarse, fine) in [
            (pair[0].n_v, pair[1].n_v),
            (pair[0].n_w, pair[1].n_w),
        ] {
            let ratio = fine as f64 / coarse as f64;
            if fine != coarse && !(1.7..=2.3).contains(&ratio) {
                return Err(Error::config(
                    "convergence.grids",
                    "each grid must refine the previous by roughly 2x per axis",
                ));
            }
        }
        if pair[1].n_v == pair[0].n_v && pair[1].n_w == pair[0].n_w {
            return Err(Error::config(
                "convergence.grids",
                "consecutive grids must differ",
            ));
        }
    }
    let mut fields = Vec::with_capacity(grids.len());
    for g in grids {
        let cfg = SolverConfig { grid: *g, ..*base };
        let field = match kind {
            FieldKind::Fep => {
                let t = target.ok_or_else(|| {
                    Error::config("convergence.target", "escape problems need a target strip")
                })?;
                solve_fep(&drift, spec, region, t, &cfg)?.0
            }
            FieldKind::Mfet => solve_mfet(&drift, spec, region, &cfg)?.0,
        };
        fields.push(field);
    }
    let mut pairs = Vec::new();
    for w in fields.windows(2) {
        let (coarse, fine) = (&w[0], &w[1]);
        let mut max_delta = 0.0f64;
        let mut center_delta = 0.0f64;
        let mut center_dist = f64::INFINITY;
        let mut any = false;
        for jc in 0..coarse.grid.n_v {
            // common v-nodes: (jc+1)(nf+1) == (jf+1)(nc+1)
            let num = (jc + 1) * (fine.grid.n_v + 1);
            if num % (coarse.grid.n_v + 1) != 0 {
                continue;
            }
            let jf = num / (coarse.grid.n_v + 1) - 1;
            if jf >= fine.grid.n_v {
                continue;
            }
            for lc in 0..coarse.grid.n_w {
                let num = (lc + 1) * (fine.grid.n_w + 1);
                if num % (coarse.grid.n_w + 1) != 0 {
                    continue;
                }
                let lf = num / (coarse.grid.n_w + 1) - 1;
                if lf >= fine.grid.n_w {
                    continue;
                }
                any = true;
                let delta = (coarse.value(jc, lc) - fine.value(jf, lf)).abs();
                max_delta = max_delta.max(delta);
                let s = coarse.grid.s_coord(jc);
                let k = coarse.grid.k_coord(lc);
                let dist = s.hypot(k);
                if dist < center_dist {
                    center_dist = dist;
                    center_delta = delta;
                }
            }
        }
        if !any {
            return Err(Error::config(
                "convergence.grids",
                "consecutive grids share no nodes; use n -> 2n+1 or matching refinements",
            ));
        }
        pairs.push(ConvergencePair {
            h_fine: fine.grid.h_v(),
            max_delta,
            center_delta,
        });
    }
    // order estimates track whichever axis refines
    let hs: Vec<f64> = if grids[0].n_v != grids[1].n_v {
        grids.iter().map(|g| g.h_v()).collect()
    } else {
        grids.iter().map(|g| g.h_w()).collect()
    };
    let orders = order_estimates(&hs, &pairs.iter().map(|p| p.max_delta).collect::<Vec<_>>());
    let center_orders =
        order_estimates(&hs, &pairs.iter().map(|p| p.center_delta).collect::<Vec<_>>());
    Ok(ConvergenceReport {
        pairs,
        orders,
        center_orders,
    })
}

/// Order p solving (h1^p - h2^p)/(h2^p - h3^p) = d1/d2 for each successive
/// delta pair; exact for error expansions C h^p on arbitrary ratios.
fn order_estimates(hs: &[f64], deltas: &[f64]) -> Vec<f64> {
    let mut orders = Vec::new();
    for i in 0..deltas.len().saturating_sub(1) {
        let (h1, h2, h3) = (hs[i], hs[i + 1], hs[i + 2]);
        let target = deltas[i] / deltas[i + 1];
        if !target.is_finite() || target <= 0.0 {
            orders.push(f64::NAN);
            continue;
        }
        let ratio = |p: f64| (h1.powf(p) - h2.powf(p)) / (h2.powf(p) - h3.powf(p));
        let (mut lo, mut hi) = (0.01f64, 8.0f64);
        if (ratio(lo) - target) * (ratio(hi) - target) > 0.0 {
            orders.push(f64::NAN);
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (ratio(lo) - target) * (ratio(mid) - target) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        orders.push(0.5 * (lo + hi));
    }
    orders
}
