//! Deterministic Morris-Lecar vector field.
//!
//! The model lives in two coordinate systems: the raw (mV, activation)
//! variables of the conductance equations, and the scaled phase-plane
//! coordinates used by every solver and simulator in this crate
//! (`v_scaled = v_raw / 10`, `w_scaled = 10 * w_raw`). Time is not rescaled,
//! so all rates and exit times are in the raw milliseconds.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Membrane-current parameters of the Morris-Lecar model.
///
/// Defaults are the type-II excitability set: a unique equilibrium, stable
/// for input currents below [`MlParams::I_HOPF`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlParams {
    /// Membrane capacitance (uF/cm^2).
    pub c_m: f64,
    /// Maximal Ca2+ conductance (uS/cm^2).
    pub g_ca: f64,
    /// Maximal K+ conductance (uS/cm^2).
    pub g_k: f64,
    /// Leak conductance (uS/cm^2).
    pub g_l: f64,
    /// Ca2+ reversal potential (mV).
    pub v_ca: f64,
    /// K+ reversal potential (mV).
    pub v_k: f64,
    /// Leak reversal potential (mV).
    pub v_l: f64,
    /// Steady-state tuning constants (mV).
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
    /// Rate scale between the fast and slow subsystems.
    pub phi: f64,
    /// Applied input current (uA/cm^2).
    pub i_app: f64,
}

impl Default for MlParams {
    fn default() -> Self {
        MlParams {
            c_m: 20.0,
            g_ca: 4.4,
            g_k: 8.0,
            g_l: 2.0,
            v_ca: 120.0,
            v_k: -84.0,
            v_l: -60.0,
            v1: -1.2,
            v2: 18.0,
            v3: 2.0,
            v4: 30.0,
            phi: 0.04,
            i_app: 88.0,
        }
    }
}

impl MlParams {
    /// Subcritical Hopf current of the type-II set: the resting state is
    /// stable for `i_app < I_HOPF`. Documentation only; no algorithm here
    /// reads it.
    pub const I_HOPF: f64 = 93.86;

    pub fn validate(&self) -> Result<()> {
        if !(self.c_m > 0.0) {
            return Err(Error::config("model.c_m", "must be > 0"));
        }
        for (key, g) in [
            ("model.g_ca", self.g_ca),
            ("model.g_k", self.g_k),
            ("model.g_l", self.g_l),
        ] {
            if !(g > 0.0) {
                return Err(Error::config(key, "must be > 0"));
            }
        }
        if self.v2 == 0.0 {
            return Err(Error::config("model.v2", "must be nonzero"));
        }
        if self.v4 == 0.0 {
            return Err(Error::config("model.v4", "must be nonzero"));
        }
        if !(self.phi > 0.0) {
            return Err(Error::config("model.phi", "must be > 0"));
        }
        Ok(())
    }
}

/// A phase-plane point in scaled coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub v: f64,
    pub w: f64,
}

impl State {
    pub fn new(v: f64, w: f64) -> Self {
        State { v, w }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.w.is_finite()
    }
}

/// Affine change of variables between raw and scaled coordinates:
/// `v_scaled = v_factor * v_raw`, `w_scaled = w_factor * w_raw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingMap {
    pub v_factor: f64,
    pub w_factor: f64,
}

impl Default for ScalingMap {
    /// The transformation that places the type-II resting state at
    /// (-2.7277, 1.2436): ten-fold compression of the potential and
    /// ten-fold expansion of the activation.
    fn default() -> Self {
        ScalingMap {
            v_factor: 0.1,
            w_factor: 10.0,
        }
    }
}

impl ScalingMap {
    pub fn to_scaled(&self, raw: State) -> State {
        State::new(raw.v * self.v_factor, raw.w * self.w_factor)
    }

    pub fn to_raw(&self, scaled: State) -> State {
        State::new(scaled.v / self.v_factor, scaled.w / self.w_factor)
    }
}

/// Voltage-dependent steady states and the w time constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gating {
    pub m_inf: f64,
    pub w_inf: f64,
    pub tau_w: f64,
}

/// Gating functions at a raw membrane potential.
pub fn gating(v_raw: f64, p: &MlParams) -> Gating {
    Gating {
        m_inf: 0.5 * (1.0 + ((v_raw - p.v1) / p.v2).tanh()),
        w_inf: 0.5 * (1.0 + ((v_raw - p.v3) / p.v4).tanh()),
        tau_w: 1.0 / ((v_raw - p.v3) / (2.0 * p.v4)).cosh(),
    }
}

/// Right-hand side in raw coordinates: (dv_raw/dt, dw_raw/dt).
pub fn drift_raw(raw: State, p: &MlParams) -> (f64, f64) {
    let g = gating(raw.v, p);
    let dv = (-p.g_ca * g.m_inf * (raw.v - p.v_ca)
        - p.g_k * raw.w * (raw.v - p.v_k)
        - p.g_l * (raw.v - p.v_l)
        + p.i_app)
        / p.c_m;
    let dw = p.phi * (g.w_inf - raw.w) / g.tau_w;
    (dv, dw)
}

/// Drift in scaled coordinates: the raw field at the pulled-back point,
/// pushed forward through the scaling Jacobian. Time is untouched.
pub fn drift(state: State, p: &MlParams, map: &ScalingMap) -> (f64, f64) {
    let raw = map.to_raw(state);
    let (dv, dw) = drift_raw(raw, p);
    (dv * map.v_factor, dw * map.w_factor)
}

/// Analytic Jacobian of [`drift`] with respect to the scaled state.
pub fn drift_jacobian(state: State, p: &MlParams, map: &ScalingMap) -> [[f64; 2]; 2] {
    let raw = map.to_raw(state);
    let g = gating(raw.v, p);
    // d m_inf / d v_raw and d w_inf / d v_raw
    let sech2 = |x: f64| {
        let c = x.cosh();
        1.0 / (c * c)
    };
    let dm = 0.5 * sech2((raw.v - p.v1) / p.v2) / p.v2;
    let dwi = 0.5 * sech2((raw.v - p.v3) / p.v4) / p.v4;
    let df1_dv = (-p.g_ca * (dm * (raw.v - p.v_ca) + g.m_inf) - p.g_k * raw.w - p.g_l) / p.c_m;
    let df1_dw = -p.g_k * (raw.v - p.v_k) / p.c_m;
    // f2_raw = phi * cosh((v-v3)/(2 v4)) * (w_inf - w)
    let ch = ((raw.v - p.v3) / (2.0 * p.v4)).cosh();
    let sh = ((raw.v - p.v3) / (2.0 * p.v4)).sinh();
    let df2_dv = p.phi * (sh / (2.0 * p.v4) * (g.w_inf - raw.w) + ch * dwi);
    let df2_dw = -p.phi * ch;
    // chain rule through v_raw = v_scaled / v_factor etc.
    [
        [df1_dv, df1_dw * map.v_factor / map.w_factor],
        [df2_dv * map.w_factor / map.v_factor, df2_dw],
    ]
}

/// Damped Newton iteration on the scaled drift. Feeding the returned point
/// back as the guess reproduces it.
pub fn find_equilibrium(
    p: &MlParams,
    map: &ScalingMap,
    guess: State,
    tol: f64,
) -> Result<State> {
    assert!(tol > 0.0, "tolerance must be positive");
    const MAX_ITER: usize = 100;
    let norm = |f: (f64, f64)| f.0.hypot(f.1);
    let mut x = guess;
    let mut f = drift(x, p, map);
    for _ in 0..MAX_ITER {
        if norm(f) <= tol {
            return Ok(x);
        }
        let j = drift_jacobian(x, p, map);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::NoConvergence {
                iterations: MAX_ITER,
                residual: norm(f),
            });
        }
        let dx = (-f.0 * j[1][1] + f.1 * j[0][1]) / det;
        let dw = (-f.1 * j[0][0] + f.0 * j[1][0]) / det;
        // backtracking line search on the residual norm
        let mut lambda = 1.0;
        loop {
            let cand = State::new(x.v + lambda * dx, x.w + lambda * dw);
            let fc = drift(cand, p, map);
            if norm(fc) < norm(f) || lambda < 1e-8 {
                x = cand;
                f = fc;
                break;
            }
            lambda *= 0.5;
        }
    }
    if norm(f) <= tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence {
            iterations: MAX_ITER,
            residual: norm(f),
        })
    }
}

/// Default equilibrium of the default parameter set, in scaled coordinates.
pub fn default_equilibrium() -> State {
    find_equilibrium(
        &MlParams::default(),
        &ScalingMap::default(),
        State::new(-2.5, 1.2),
        1e-10,
    )
    .expect("type-II equilibrium")
}

/// Sampled nullcline curves in scaled coordinates.
#[derive(Debug, Clone)]
pub struct Nullclines {
    /// Points (v, w) with dv/dt = 0.
    pub v_nullcline: Vec<(f64, f64)>,
    /// Points (v, w) with dw/dt = 0.
    pub w_nullcline: Vec<(f64, f64)>,
}

/// Solves each nullcline pointwise at the given scaled v samples. The
/// dv/dt = 0 branch is algebraic in w and has a pole at the K+ reversal
/// potential.
pub fn nullclines(p: &MlParams, map: &ScalingMap, v_samples: &[f64]) -> Result<Nullclines> {
    let mut v_curve = Vec::with_capacity(v_samples.len());
    let mut w_curve = Vec::with_capacity(v_samples.len());
    for &v in v_samples {
        if !v.is_finite() {
            return Err(Error::OutOfDomain("nullcline sample must be finite".into()));
        }
        let v_raw = v / map.v_factor;
        let g = gating(v_raw, p);
        let denom = p.g_k * (v_raw - p.v_k);
        if denom == 0.0 {
            return Err(Error::Singular(format!(
                "v-nullcline undefined at v_raw = V_K = {}",
                p.v_k
            )));
        }
        let w_raw = (-p.g_ca * g.m_inf * (v_raw - p.v_ca) - p.g_l * (v_raw - p.v_l) + p.i_app)
            / denom;
        v_curve.push((v, w_raw * map.w_factor));
        w_curve.push((v, g.w_inf * map.w_factor));
    }
    Ok(Nullclines {
        v_nullcline: v_curve,
        w_nullcline: w_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn defaults() -> (MlParams, ScalingMap) {
        (MlParams::default(), ScalingMap::default())
    }

    #[test]
    fn gating_at_tuning_points() {
        let (p, _) = defaults();
        assert_abs_diff_eq!(gating(p.v1, &p).m_inf, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(gating(p.v3, &p).w_inf, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(gating(p.v3, &p).tau_w, 1.0, epsilon = 1e-15);
        // direct evaluation of 0.5 (1 + tanh(1.2/18))
        assert_relative_eq!(gating(0.0, &p).m_inf, 0.533_284_038_251_131_2, max_relative = 1e-12);
    }

    #[test]
    fn gating_ranges() {
        let (p, _) = defaults();
        for i in -200..=200 {
            let g = gating(i as f64, &p);
            assert!(g.m_inf > 0.0 && g.m_inf < 1.0);
            assert!(g.w_inf > 0.0 && g.w_inf < 1.0);
            assert!(g.tau_w > 0.0 && g.tau_w <= 1.0);
        }
    }

    #[test]
    fn drift_at_origin_matches_direct_evaluation() {
        let (p, map) = defaults();
        let (f1, _) = drift(State::new(0.0, 0.0), &p, &map);
        // (1/10)(1/20)[-4.4 m_inf(0)(0-120) - 0 - 2(0+60) + 88]
        assert_relative_eq!(f1, 1.247_869_860_982_986_8, max_relative = 1e-12);
    }

    #[test]
    fn w_nullcline_is_w_equation_zero() {
        let (p, map) = defaults();
        for i in -30..30 {
            let v = i as f64 / 5.0;
            let v_raw = v / map.v_factor;
            let w = gating(v_raw, &p).w_inf * map.w_factor;
            let (_, f2) = drift(State::new(v, w), &p, &map);
            assert_abs_diff_eq!(f2, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn scaling_roundtrip_is_identity() {
        let map = ScalingMap::default();
        let raw = State::new(-27.276, 0.12436);
        let back = map.to_raw(map.to_scaled(raw));
        assert_abs_diff_eq!(back.v, raw.v, epsilon = 1e-15);
        assert_abs_diff_eq!(back.w, raw.w, epsilon = 1e-15);
    }

    #[test]
    fn scaled_drift_is_jacobian_pushforward_exactly() {
        let (p, map) = defaults();
        let s = State::new(-1.3, 2.1);
        let raw = map.to_raw(s);
        let (dv, dw) = drift_raw(raw, &p);
        let (f1, f2) = drift(s, &p, &map);
        assert_eq!(f1, dv * map.v_factor);
        assert_eq!(f2, dw * map.w_factor);
    }

    #[test]
    fn equilibrium_matches_stated_point() {
        let (p, map) = defaults();
        let s = find_equilibrium(&p, &map, State::new(-2.5, 1.2), 1e-10).unwrap();
        assert_abs_diff_eq!(s.v, -2.7277, epsilon = 5e-4);
        assert_abs_diff_eq!(s.w, 1.2436, epsilon = 5e-4);
        let (f1, f2) = drift(s, &p, &map);
        assert!(f1.hypot(f2) < 1e-3);
        // idempotence: feeding the output back returns the same point
        let s2 = find_equilibrium(&p, &map, s, 1e-10).unwrap();
        assert_eq!(s.v, s2.v);
        assert_eq!(s.w, s2.w);
    }

    #[test]
    fn leak_only_fixed_point() {
        let map = ScalingMap::default();
        let p = MlParams {
            g_ca: 1e-300, // conductances must stay positive; effectively off
            g_k: 1e-300,
            i_app: 0.0,
            ..MlParams::default()
        };
        let s = find_equilibrium(&p, &map, State::new(-6.2, 0.2), 1e-12).unwrap();
        let v_raw = s.v / map.v_factor;
        assert_abs_diff_eq!(v_raw, p.v_l, epsilon = 1e-8);
        assert_abs_diff_eq!(s.w / map.w_factor, gating(p.v_l, &p).w_inf, epsilon = 1e-8);
    }

    #[test]
    fn equilibrium_matches_bisection_oracle_at_i_80() {
        let (mut p, map) = defaults();
        p.i_app = 80.0;
        // independent 1D oracle: bisection on the current balance along the
        // w-nullcline, g(v) = f1_raw(v, w_inf(v))
        let g = |v_raw: f64| {
            let gt = gating(v_raw, &p);
            -p.g_ca * gt.m_inf * (v_raw - p.v_ca) - p.g_k * gt.w_inf * (v_raw - p.v_k)
                - p.g_l * (v_raw - p.v_l)
                + p.i_app
        };
        let (mut lo, mut hi) = (-40.0, -10.0);
        assert!(g(lo) * g(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(lo) * g(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let v_oracle = 0.5 * (lo + hi);
        let s = find_equilibrium(&p, &map, State::new(-2.5, 1.2), 1e-12).unwrap();
        assert_abs_diff_eq!(s.v / map.v_factor, v_oracle, epsilon = 1e-8);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let (p, map) = defaults();
        let h = 1e-5;
        for (v, w) in [(-2.7, 1.2), (0.3, 4.0), (-5.0, -1.0)] {
            let j = drift_jacobian(State::new(v, w), &p, &map);
            let fd = |i: usize, dv: f64, dw: f64| {
                let a = drift(State::new(v + dv, w + dw), &p, &map);
                let b = drift(State::new(v - dv, w - dw), &p, &map);
                if i == 0 {
                    (a.0 - b.0) / (2.0 * dv.max(dw))
                } else {
                    (a.1 - b.1) / (2.0 * dv.max(dw))
                }
            };
            assert_relative_eq!(j[0][0], fd(0, h, 0.0), max_relative = 1e-6);
            assert_relative_eq!(j[0][1], fd(0, 0.0, h), max_relative = 1e-6);
            assert_relative_eq!(j[1][0], fd(1, h, 0.0), max_relative = 1e-6);
            assert_relative_eq!(j[1][1], fd(1, 0.0, h), max_relative = 1e-6);
        }
    }

    #[test]
    fn nullcline_intersection_is_equilibrium() {
        let (p, map) = defaults();
        let vs: Vec<f64> = (0..2000).map(|i| -6.0 + i as f64 * 0.004).collect();
        let nc = nullclines(&p, &map, &vs).unwrap();
        // nearest intersection to (-2.7, 1.2)
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for (&(v, wv), &(_, ww)) in nc.v_nullcline.iter().zip(&nc.w_nullcline) {
            let gap = (wv - ww).abs();
            let d = (v + 2.7).abs() + (wv - 1.2).abs();
            if gap < 0.01 && d < best.0 {
                best = (d, v, 0.5 * (wv + ww));
            }
        }
        let s = default_equilibrium();
        assert_abs_diff_eq!(best.1, s.v, epsilon = 1e-2);
        assert_abs_diff_eq!(best.2, s.w, epsilon = 1e-2);
    }

    #[test]
    fn nullcline_points_zero_their_drift_component() {
        let (p, map) = defaults();
        let vs: Vec<f64> = (0..100).map(|i| -5.8 + i as f64 * 0.07).collect();
        let nc = nullclines(&p, &map, &vs).unwrap();
        for &(v, w) in &nc.v_nullcline {
            let (f1, _) = drift(State::new(v, w), &p, &map);
            assert_abs_diff_eq!(f1, 0.0, epsilon = 1e-8);
        }
        for &(v, w) in &nc.w_nullcline {
            let (_, f2) = drift(State::new(v, w), &p, &map);
            assert_abs_diff_eq!(f2, 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn w_nullcline_at_v3_scaled() {
        let (p, map) = defaults();
        let v3_scaled = p.v3 * map.v_factor;
        let nc = nullclines(&p, &map, &[v3_scaled]).unwrap();
        assert_abs_diff_eq!(nc.w_nullcline[0].1, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn v_nullcline_has_two_interior_turning_points() {
        // cubic-like shape: w(v) changes slope sign exactly twice on
        // v_raw in [-60, 40]
        let (p, map) = defaults();
        let vs: Vec<f64> = (0..=1000)
            .map(|i| (-60.0 + i as f64 * 0.1) * map.v_factor)
            .collect();
        let nc = nullclines(&p, &map, &vs).unwrap();
        let mut turns = 0;
        let mut last_sign = 0i32;
        for pair in nc.v_nullcline.windows(2) {
            let dw = pair[1].1 - pair[0].1;
            let sign = if dw > 0.0 { 1 } else { -1 };
            if last_sign != 0 && sign != last_sign {
                turns += 1;
            }
            last_sign = sign;
        }
        assert_eq!(turns, 2);
    }

    #[test]
    fn nullcline_pole_is_reported() {
        let (p, map) = defaults();
        let err = nullclines(&p, &map, &[p.v_k * map.v_factor]).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }
}
