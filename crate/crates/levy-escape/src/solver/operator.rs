//! Discrete generator on the rescaled unit square.
//!
//! Interior nodes are s_j = -1 + (j+1) h, j = 0..n-1, h = 2/(n+1), per axis.
//! For alpha < 2 each row carries: upwind or central drift transport with the
//! affine factors 2/(b-a), 2/(d-c); the analytic exterior-killing term
//! -(sigma_i^alpha C_alpha/alpha) (len_i/2)^{-alpha} [(1+.)^{-alpha} + (1-.)^{-alpha}];
//! and the principal-value jump integral over the rescaled interval,
//! discretized by a second-difference cell on |s'| <= h plus a composite
//! trapezoid on the remaining grid multiples with exterior values
//! substituted. The trapezoid's leading error against the singular kernel is
//! itself a second-difference term, h^{2-alpha} kappa(alpha) m'', and is
//! folded into the cell coefficient. For alpha = 2 rows reduce to the
//! five-point stencil of the Gaussian endpoint generator (sigma_i^2 per axis,
//! matching the variance-2t law of S_2 increments).
//!
//! Exterior couplings never enter the matrix: every stencil or quadrature
//! reference to a point outside the open region contributes
//! weight x known-value to the right-hand side. Only the v = v_max boundary
//! can carry a nonzero known value (the target strip), so those weights are
//! kept per node.

use crate::error::{Error, Result};
use crate::ml::State;
use crate::noise::{c_alpha, NoiseSpec};
use crate::solver::{DriftScheme, Grid, Region, SolverConfig};

/// Trapezoid-vs-kernel correction constant: the summed difference between
/// exact segment integrals of t^{1-alpha} and their trapezoid values on the
/// unit lattice. Vanishes at alpha = 1.
pub fn kappa(alpha: f64) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < 2.0);
    let n = 200_000usize;
    let mut sum = 0.0;
    let mut prev_pow2 = 1.0f64; // i^{2-alpha} at i=1
    let mut prev_pow1 = 1.0f64; // i^{1-alpha} at i=1
    for i in 1..=n {
        let next = (i + 1) as f64;
        let next_pow2 = next.powf(2.0 - alpha);
        let next_pow1 = next.powf(1.0 - alpha);
        sum += (next_pow2 - prev_pow2) / (2.0 - alpha) - 0.5 * (prev_pow1 + next_pow1);
        prev_pow2 = next_pow2;
        prev_pow1 = next_pow1;
    }
    // Euler-Maclaurin tail of the remaining segments
    sum + (1.0 - alpha) / 12.0 * ((n + 1) as f64 + 0.5).powf(-alpha)
}

/// One axis of the assembled operator.
struct AxisTerms {
    /// Symmetric Toeplitz couplings between interior pairs at offsets
    /// 1..n-1; empty when this axis carries no jumps.
    kernel: Vec<f64>,
    /// Per-node diagonal contribution (killing + quadrature mass).
    diag: Vec<f64>,
    /// Per-node coupling weight to the known value on the upper boundary
    /// (s = +1) of this axis.
    upper_weight: Vec<f64>,
    /// Second-difference cell coefficient (or the five-point diffusion
    /// weight at alpha = 2).
    cell: f64,
}

impl AxisTerms {
    /// Nonlocal terms of one axis for alpha < 2.
    fn stable(alpha: f64, coef: f64, n: usize) -> Self {
        let h = 2.0 / (n as f64 + 1.0);
        let mut kernel = vec![0.0; n.saturating_sub(1)];
        let mut diag = vec![0.0; n];
        let mut upper_weight = vec![0.0; n];
        if coef == 0.0 {
            return AxisTerms {
                kernel: Vec::new(),
                diag,
                upper_weight,
                cell: 0.0,
            };
        }
        let cell = coef * h.powf(-alpha) * (1.0 / (2.0 - alpha) + kappa(alpha));
        let kk: Vec<f64> = (1..=n)
            .map(|i| coef * (i as f64 * h).powf(-1.0 - alpha))
            .collect();
        // interior trapezoid weight at offset i: the composite rule's inner
        // endpoint gets h/2, everything farther gets h
        let trap = |i: usize| -> f64 {
            if i == 1 {
                0.5 * h * kk[0]
            } else {
                h * kk[i - 1]
            }
        };
        for (i, k) in kernel.iter_mut().enumerate() {
            *k = trap(i + 1) + if i == 0 { cell } else { 0.0 };
        }
        let mut prefix = vec![0.0; n + 1];
        for i in 1..=n {
            prefix[i] = prefix[i - 1] + trap(i);
        }
        for j in 0..n {
            let s = -1.0 + (j as f64 + 1.0) * h;
            // analytic killing: jump mass landing past either boundary
            let kill = coef / alpha * ((1.0 + s).powf(-alpha) + (1.0 - s).powf(-alpha));
            let mut d = -kill - 2.0 * cell;
            // quadrature mass toward each boundary; a degenerate (single
            // cell) range has no trapezoid and couples through the cell only
            for (extent, is_upper) in [(n - j, true), (j + 1, false)] {
                if extent >= 2 {
                    d -= prefix[extent - 1];
                    let boundary_w = 0.5 * h * kk[extent - 1];
                    d -= boundary_w;
                    if is_upper {
                        upper_weight[j] = boundary_w;
                    }
                } else if is_upper {
                    upper_weight[j] = cell;
                }
            }
            diag[j] = d;
        }
        AxisTerms {
            kernel,
            diag,
            upper_weight,
            cell,
        }
    }

    /// Five-point diffusion of the Gaussian endpoint: coefficient
    /// sigma^2 (2/len)^2 on the second derivative in rescaled coordinates.
    fn gaussian(diffusion: f64, n: usize) -> Self {
        let h = 2.0 / (n as f64 + 1.0);
        let k = diffusion / (h * h);
        AxisTerms {
            kernel: Vec::new(),
            diag: vec![-2.0 * k; n],
            upper_weight: vec![0.0; n],
            cell: k,
        }
    }
}

/// Assembled interior operator plus the boundary-coupling weights needed to
/// build right-hand sides. The matrix itself acts only on interior unknowns.
pub struct OperatorMatrix {
    pub n_v: usize,
    pub n_w: usize,
    pub alpha: f64,
    /// Full diagonal (killing + quadrature mass + drift outflow).
    diag: Vec<f64>,
    /// Immediate-neighbor couplings from drift (and, for alpha = 2 or the
    /// second-difference cell, diffusion).
    to_left: Vec<f64>,
    to_right: Vec<f64>,
    to_down: Vec<f64>,
    to_up: Vec<f64>,
    /// Toeplitz jump-kernel couplings per axis (alpha < 2, empty otherwise).
    kernel_v: Vec<f64>,
    kernel_w: Vec<f64>,
    /// Per-node coupling weight to the known exterior value on the
    /// v = v_max boundary; the only boundary that may carry a nonzero value.
    right_value_weight: Vec<f64>,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.n_v * self.n_w
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn right_value_weight(&self) -> &[f64] {
        &self.right_value_weight
    }

    /// y = A x. Sequential; rows are independent and the kernels are shared
    /// read-only, so callers may shard over rows if they need to.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (n_v, n_w) = (self.n_v, self.n_w);
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        // diagonal and immediate neighbors
        for m in 0..self.dim() {
            let j = m % n_v;
            let mut acc = self.diag[m] * x[m];
            if j > 0 {
                acc += self.to_left[m] * x[m - 1];
            }
            if j + 1 < n_v {
                acc += self.to_right[m] * x[m + 1];
            }
            if m >= n_v {
                acc += self.to_down[m] * x[m - n_v];
            }
            if m + n_v < self.dim() {
                acc += self.to_up[m] * x[m + n_v];
            }
            y[m] = acc;
        }
        // v-axis jump kernel: symmetric Toeplitz within each w-row
        if !self.kernel_v.is_empty() {
            for l in 0..n_w {
                let xr = &x[l * n_v..(l + 1) * n_v];
                let yr = &mut y[l * n_v..(l + 1) * n_v];
                toeplitz_symmetric(&self.kernel_v, xr, yr);
            }
        }
        // w-axis kernel over columns, via transposed scratch for locality
        if !self.kernel_w.is_empty() {
            let mut xt = vec![0.0; self.dim()];
            let mut yt = vec![0.0; self.dim()];
            for l in 0..n_w {
                for j in 0..n_v {
                    xt[j * n_w + l] = x[l * n_v + j];
                }
            }
            for j in 0..n_v {
                let xr = &xt[j * n_w..(j + 1) * n_w];
                let yr = &mut yt[j * n_w..(j + 1) * n_w];
                toeplitz_symmetric(&self.kernel_w, xr, yr);
            }
            for l in 0..n_w {
                for j in 0..n_v {
                    y[l * n_v + j] += yt[j * n_w + l];
                }
            }
        }
    }
}

/// y += T x for the symmetric Toeplitz matrix with zero diagonal and
/// entries kernel[i-1] at offset i.
fn toeplitz_symmetric(kernel: &[f64], x: &[f64], y: &mut [f64]) {
    let n = x.len();
    for i in 1..n {
        let k = kernel[i - 1];
        for j in 0..n - i {
            y[j] += k * x[j + i];
        }
        for j in 0..n - i {
            y[j + i] += k * x[j];
        }
    }
}

/// Builds the interior operator for the generator of the planar SDE on the
/// region, in rescaled coordinates. Deterministic: identical inputs produce
/// bit-identical matrices.
pub fn assemble<F>(
    drift: F,
    spec: &NoiseSpec,
    region: &Region,
    cfg: &SolverConfig,
) -> Result<OperatorMatrix>
where
    F: Fn(State) -> (f64, f64),
{
    spec.validate()?;
    cfg.validate()?;
    region.validate()?;
    let grid = cfg.grid;
    let (n_v, n_w) = (grid.n_v, grid.n_w);
    let dim = n_v * n_w;
    let half_v = 0.5 * region.len_v();
    let half_w = 0.5 * region.len_w();

    let (axis_v, axis_w) = if spec.is_gaussian() {
        (
            AxisTerms::gaussian(spec.sigma1 * spec.sigma1 * (1.0 / half_v) * (1.0 / half_v), n_v),
            AxisTerms::gaussian(spec.sigma2 * spec.sigma2 * (1.0 / half_w) * (1.0 / half_w), n_w),
        )
    } else {
        let c = c_alpha(spec.alpha)?;
        (
            AxisTerms::stable(
                spec.alpha,
                spec.sigma1.powf(spec.alpha) * c * half_v.powf(-spec.alpha),
                n_v,
            ),
            AxisTerms::stable(
                spec.alpha,
                spec.sigma2.powf(spec.alpha) * c * half_w.powf(-spec.alpha),
                n_w,
            ),
        )
    };

    let h_v = grid.h_v();
    let h_w = grid.h_w();
    let mut diag = vec![0.0; dim];
    let mut to_left = vec![0.0; dim];
    let mut to_right = vec![0.0; dim];
    let mut to_down = vec![0.0; dim];
    let mut to_up = vec![0.0; dim];
    let mut right_value_weight = vec![0.0; dim];

    let gaussian = spec.is_gaussian();
    for l in 0..n_w {
        let w = grid.w_coord(region, l);
        for j in 0..n_v {
            let v = grid.v_coord(region, j);
            let m = l * n_v + j;
            let (f1, f2) = drift(State::new(v, w));
            // drift coefficients in rescaled coordinates
            let fv = f1 / half_v;
            let fw = f2 / half_w;
            let mut d = axis_v.diag[j] + axis_w.diag[l];
            // cell / diffusion couplings to immediate neighbors; references
            // that cross a boundary carry the known value instead. For
            // alpha < 2 interior cell couplings live inside kernel[0] and
            // the boundary ones inside the precomputed axis weights.
            if gaussian {
                if j > 0 {
                    to_left[m] += axis_v.cell;
                }
                if j + 1 < n_v {
                    to_right[m] += axis_v.cell;
                } else {
                    right_value_weight[m] += axis_v.cell;
                }
                if l > 0 {
                    to_down[m] += axis_w.cell;
                }
                if l + 1 < n_w {
                    to_up[m] += axis_w.cell;
                }
            } else {
                right_value_weight[m] += axis_v.upper_weight[j];
            }
            // drift discretization
            match cfg.drift {
                DriftScheme::Upwind => {
                    if fv >= 0.0 {
                        d -= fv / h_v;
                        if j + 1 < n_v {
                            to_right[m] += fv / h_v;
                        } else {
                            right_value_weight[m] += fv / h_v;
                        }
                    } else {
                        d += fv / h_v;
                        if j > 0 {
                            to_left[m] += -fv / h_v;
                        }
                    }
                    if fw >= 0.0 {
                        d -= fw / h_w;
                        if l + 1 < n_w {
                            to_up[m] += fw / h_w;
                        }
                    } else {
                        d += fw / h_w;
                        if l > 0 {
                            to_down[m] += -fw / h_w;
                        }
                    }
                }
                DriftScheme::Central => {
                    if j + 1 < n_v {
                        to_right[m] += fv / (2.0 * h_v);
                    } else {
                        right_value_weight[m] += fv / (2.0 * h_v);
                    }
                    if j > 0 {
                        to_left[m] += -fv / (2.0 * h_v);
                    }
                    if l + 1 < n_w {
                        to_up[m] += fw / (2.0 * h_w);
                    }
                    if l > 0 {
                        to_down[m] += -fw / (2.0 * h_w);
                    }
                }
            }
            diag[m] = d;
        }
    }

    Ok(OperatorMatrix {
        n_v,
        n_w,
        alpha: spec.alpha,
        diag,
        to_left,
        to_right,
        to_down,
        to_up,
        kernel_v: axis_v.kernel,
        kernel_w: axis_w.kernel,
        right_value_weight,
    })
}
