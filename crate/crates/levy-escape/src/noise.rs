//! Symmetric alpha-stable noise: jump-measure constant, exact sampling via
//! the Chambers-Mallows-Stuck transform, per-step SDE increments and a Hill
//! tail diagnostic.
//!
//! Conventions. A standard draw has the law S_alpha(1, 0, 0) with
//! characteristic function exp(-|xi|^alpha); over a time step dt the
//! increment of the driving motion is dt^{1/alpha} times a standard draw.
//! alpha = 2 is the Gaussian endpoint of the family: S_2(1,0,0) = N(0, 2),
//! so the alpha = 2 increment carries variance 2 dt (and the matching
//! generator uses sigma^2 times the second derivative per axis).

use crate::error::{Error, Result};
use crate::special::gamma;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Four-parameter stable law S_alpha(scale, skewness, shift).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub alpha: f64,
    pub scale: f64,
    pub skewness: f64,
    pub shift: f64,
}

impl StableParams {
    pub fn new(alpha: f64, scale: f64, skewness: f64, shift: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::OutOfDomain(format!(
                "alpha must lie in (0,2], got {alpha}"
            )));
        }
        if !(scale >= 0.0) {
            return Err(Error::OutOfDomain(format!("scale must be >= 0, got {scale}")));
        }
        if !(-1.0..=1.0).contains(&skewness) {
            return Err(Error::OutOfDomain(format!(
                "skewness must lie in [-1,1], got {skewness}"
            )));
        }
        Ok(StableParams {
            alpha,
            scale,
            skewness,
            shift,
        })
    }

    pub fn symmetric(alpha: f64, scale: f64) -> Result<Self> {
        StableParams::new(alpha, scale, 0.0, 0.0)
    }
}

/// Shared Levy index plus the per-channel intensities of the planar SDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Stability index in (0, 2]; 2 selects the Gaussian endpoint.
    pub alpha: f64,
    /// Intensity on the v-equation (current fluctuations).
    pub sigma1: f64,
    /// Intensity on the w-equation (ion-channel noise).
    pub sigma2: f64,
}

impl NoiseSpec {
    pub fn new(alpha: f64, sigma1: f64, sigma2: f64) -> Result<Self> {
        let spec = NoiseSpec {
            alpha,
            sigma1,
            sigma2,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::config("noise.alpha", "alpha must lie in (0,2]"));
        }
        if !(self.sigma1 >= 0.0) {
            return Err(Error::config("noise.sigma1", "must be >= 0"));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(Error::config("noise.sigma2", "must be >= 0"));
        }
        Ok(())
    }

    /// Intensity ratio r = sigma2 / sigma1, defined only for sigma1 > 0.
    pub fn ratio(&self) -> Option<f64> {
        (self.sigma1 > 0.0).then(|| self.sigma2 / self.sigma1)
    }

    pub fn is_gaussian(&self) -> bool {
        self.alpha == 2.0
    }

    pub fn is_silent(&self) -> bool {
        self.sigma1 == 0.0 && self.sigma2 == 0.0
    }
}

/// Noise channel of the planar system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    V,
    W,
}

/// Jump-measure normalization of the symmetric alpha-stable law,
/// nu_alpha(dy) = C_alpha |y|^{-1-alpha} dy:
///
/// C_alpha = alpha Gamma((1+alpha)/2) / (2^{1-alpha} sqrt(pi) Gamma(1-alpha/2)).
///
/// This is the constant that makes the jump integral generate the process
/// with S_alpha((t-s)^{1/alpha}, 0, 0) increments; the associated tail law is
/// y^alpha P(L > y) -> C_alpha / alpha.
pub fn c_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::OutOfDomain(format!(
            "c_alpha requires alpha in (0,2), got {alpha}"
        )));
    }
    Ok(alpha * gamma((1.0 + alpha) / 2.0)
        / (2f64.powf(1.0 - alpha) * PI.sqrt() * gamma(1.0 - alpha / 2.0)))
}

/// Deterministic core of the CMS transform: maps an angle in (-pi/2, pi/2)
/// and a unit-exponential variate to a standard S_alpha(1,0,0) draw.
///
/// Implemented to be exactly odd in the angle, so negating the underlying
/// uniform stream negates the draw bit-for-bit.
pub fn cms_transform(alpha: f64, angle: f64, exp_draw: f64) -> f64 {
    debug_assert!(angle.abs() < PI / 2.0);
    debug_assert!(exp_draw > 0.0);
    let sign = if angle < 0.0 { -1.0 } else { 1.0 };
    let u = angle.abs();
    let x = if alpha == 1.0 {
        u.tan()
    } else if alpha == 2.0 {
        2.0 * exp_draw.sqrt() * u.sin()
    } else {
        (alpha * u).sin() / u.cos().powf(1.0 / alpha)
            * (((1.0 - alpha) * u).cos() / exp_draw).powf((1.0 - alpha) / alpha)
    };
    sign * x
}

fn uniform_open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// One standard S_alpha(1,0,0) draw. Consumes two uniforms.
pub fn standard_draw<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let angle = PI * (uniform_open01(rng) - 0.5);
    // u in (0,1) keeps 1-u in (0,1), so the exponential draw stays positive
    let exp_draw = -(1.0 - uniform_open01(rng)).ln();
    cms_transform(alpha, angle, exp_draw)
}

/// n independent standard draws; bit-identical for identical
/// (seed, alpha, n) given the same generator type.
pub fn sample_standard<R: Rng + ?Sized>(alpha: f64, rng: &mut R, n: usize) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::OutOfDomain(format!(
            "sampler requires alpha in (0,2], got {alpha}"
        )));
    }
    Ok((0..n).map(|_| standard_draw(alpha, rng)).collect())
}

/// Draws from a general symmetric stable law by scaling a standard draw;
/// skewed or shifted laws are rejected.
pub fn sample<R: Rng + ?Sized>(params: &StableParams, rng: &mut R, n: usize) -> Result<Vec<f64>> {
    if params.skewness != 0.0 || params.shift != 0.0 {
        return Err(Error::Unsupported(
            "only symmetric centered stable laws are sampled".into(),
        ));
    }
    let mut draws = sample_standard(params.alpha, rng, n)?;
    for d in &mut draws {
        *d *= params.scale;
    }
    Ok(draws)
}

/// Noise increment of one channel over a step dt:
/// sigma * dt^{1/alpha} * xi with xi ~ S_alpha(1,0,0). At alpha = 2 this is
/// Gaussian with variance 2 sigma^2 dt, the stable family's endpoint law.
pub fn increment<R: Rng + ?Sized>(
    spec: &NoiseSpec,
    channel: Channel,
    dt: f64,
    rng: &mut R,
) -> f64 {
    debug_assert!(dt > 0.0);
    let sigma = match channel {
        Channel::V => spec.sigma1,
        Channel::W => spec.sigma2,
    };
    if sigma == 0.0 {
        return 0.0;
    }
    sigma * dt.powf(1.0 / spec.alpha) * standard_draw(spec.alpha, rng)
}

/// Hill tail-index estimate with a normal-theory half-width.
#[derive(Debug, Clone, Copy)]
pub struct TailEstimate {
    pub alpha_hat: f64,
    pub half_width: f64,
    /// False when the order statistics look incompatible with a power tail
    /// (estimate drifting with the cut or out of the stable range).
    pub power_tail: bool,
}

/// Hill estimator on the upper order statistics of |samples|.
/// Diagnostic only; `fraction` defaults to 1% of the sample.
pub fn tail_exponent(samples: &[f64]) -> Result<TailEstimate> {
    tail_exponent_with_fraction(samples, 0.01)
}

pub fn tail_exponent_with_fraction(samples: &[f64], fraction: f64) -> Result<TailEstimate> {
    const MIN_SAMPLES: usize = 100_000;
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "tail estimate needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let mut magnitudes: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    magnitudes.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let hill_at = |frac: f64| -> Option<f64> {
        let k = ((magnitudes.len() as f64) * frac) as usize;
        if k < 10 {
            return None;
        }
        let cut = magnitudes[magnitudes.len() - 1 - k];
        if cut <= 0.0 {
            return None;
        }
        let mean_log: f64 = magnitudes[magnitudes.len() - k..]
            .iter()
            .map(|x| (x / cut).ln())
            .sum::<f64>()
            / k as f64;
        (mean_log > 0.0).then(|| 1.0 / mean_log)
    };
    let k = ((magnitudes.len() as f64) * fraction) as usize;
    let alpha_hat = hill_at(fraction).ok_or_else(|| {
        Error::InsufficientData("degenerate sample: no tail spread above the cut".into())
    })?;
    let half_width = 1.96 * alpha_hat / (k as f64).sqrt();
    // power-tail plausibility: the Hill estimate of an exponential-tailed
    // sample keeps climbing as the cut moves outward
    let deeper = hill_at(fraction / 4.0);
    let drift_free = match deeper {
        Some(a_deep) => (a_deep - alpha_hat).abs() <= 0.25 * alpha_hat,
        None => false,
    };
    let power_tail = drift_free && alpha_hat < 2.2;
    Ok(TailEstimate {
        alpha_hat,
        half_width,
        power_tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn c_alpha_reference_values() {
        // direct evaluation of the jump-measure normalization
        assert_relative_eq!(c_alpha(1.0).unwrap(), 1.0 / PI, max_relative = 1e-12);
        assert_relative_eq!(c_alpha(0.5).unwrap(), 0.199_471_140_200_716_35, max_relative = 1e-10);
        assert_relative_eq!(c_alpha(1.5).unwrap(), 0.299_206_710_301_074_5, max_relative = 1e-10);
        // the constant vanishes toward the Gaussian endpoint, monotonically
        // on a right neighborhood of 2
        let tail: Vec<f64> = [1.9, 1.95, 1.99]
            .iter()
            .map(|&a| c_alpha(a).unwrap())
            .collect();
        assert!(tail[0] > tail[1] && tail[1] > tail[2] && tail[2] > 0.0);
        assert!(tail[2] < 0.02);
        assert!(c_alpha(0.0).is_err());
        assert!(c_alpha(2.0).is_err());
        assert!(c_alpha(-1.0).is_err());
    }

    #[test]
    fn c_alpha_matches_quadrature_of_jump_measure() {
        // mass of nu_alpha outside the unit interval: integrate
        // C |y|^{-1-a} over |y| > 1 by Simpson in the variable y = e^u and
        // compare with 2 C / a
        for &alpha in &[0.5, 1.0, 1.25, 1.8] {
            let c = c_alpha(alpha).unwrap();
            let f = |u: f64| c * (-alpha * u).exp(); // integrand after substitution
            let upper = 60.0 / alpha;
            let n = 40_000usize;
            let h = upper / n as f64;
            let mut s = f(0.0) + f(upper);
            for i in 1..n {
                s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let mass = 2.0 * s * h / 3.0;
            assert_relative_eq!(mass, 2.0 * c / alpha, max_relative = 1e-8);
        }
    }

    #[test]
    fn gaussian_endpoint_variance_is_two() {
        let mut r = rng(42);
        let xs = sample_standard(2.0, &mut r, 1_000_000).unwrap();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert_abs_diff_eq!(var, 2.0, epsilon = 0.01);
    }

    #[test]
    fn cauchy_quartiles() {
        let mut r = rng(7);
        let mut xs = sample_standard(1.0, &mut r, 1_000_000).unwrap();
        xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| xs[(xs.len() as f64 * p) as usize];
        assert!(q(0.5).abs() < 0.01);
        assert_abs_diff_eq!(q(0.75) - q(0.25), 2.0, epsilon = 0.02);
    }

    #[test]
    fn tail_frequency_matches_levy_measure_asymptotic() {
        // y^a P(L > y) -> C_a / a; checked at y = 50 with 1e6 draws at the
        // acceptance-scale accuracy (the 1e7-draw version lives in the
        // acceptance suite)
        let mut r = rng(3);
        let alpha = 1.5;
        let xs = sample_standard(alpha, &mut r, 1_000_000).unwrap();
        let y = 50.0;
        let p = xs.iter().filter(|&&x| x > y).count() as f64 / xs.len() as f64;
        let want = c_alpha(alpha).unwrap() / alpha;
        assert_relative_eq!(y.powf(alpha) * p, want, max_relative = 0.15);
    }

    #[test]
    fn increments_scale_with_dt() {
        // Cauchy: IQR of sigma dt^{1/1} xi over draws is 2 sigma dt
        let spec = NoiseSpec::new(1.0, 0.7, 0.0).unwrap();
        let mut r = rng(11);
        let dt = 0.01;
        let mut xs: Vec<f64> = (0..1_000_000)
            .map(|_| increment(&spec, Channel::V, dt, &mut r))
            .collect();
        xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let iqr = xs[750_000] - xs[250_000];
        assert_relative_eq!(iqr, 2.0 * 0.7 * dt, max_relative = 0.02);
        // zero intensity is exactly zero
        let silent = NoiseSpec::new(1.0, 0.7, 0.0).unwrap();
        assert_eq!(increment(&silent, Channel::W, dt, &mut r), 0.0);
    }

    #[test]
    fn gaussian_increment_variance_is_two_sigma_sq_dt() {
        // alpha = 2 increments follow the stable-family endpoint law
        // S_2(dt^{1/2}): variance 2 sigma^2 dt
        let spec = NoiseSpec::new(2.0, 1.0, 1.0).unwrap();
        let mut r = rng(5);
        let dt = 0.25;
        let var = (0..1_000_000)
            .map(|_| {
                let x = increment(&spec, Channel::V, dt, &mut r);
                x * x
            })
            .sum::<f64>()
            / 1e6;
        assert_relative_eq!(var, 2.0 * dt, max_relative = 0.01);
    }

    #[test]
    fn transform_is_exactly_odd_in_the_angle() {
        for &alpha in &[0.5, 1.0, 1.3, 2.0] {
            for i in 1..200 {
                let angle = (i as f64 / 200.0 - 0.5) * 3.0;
                let w = 0.1 + i as f64 * 0.01;
                let plus = cms_transform(alpha, angle, w);
                let minus = cms_transform(alpha, -angle, w);
                assert_eq!(plus, -minus);
            }
        }
    }

    #[test]
    fn draws_are_reproducible() {
        let a = sample_standard(1.3, &mut rng(99), 1000).unwrap();
        let b = sample_standard(1.3, &mut rng(99), 1000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scale_multiplies_standard_draws() {
        let params = StableParams::symmetric(0.8, 2.5).unwrap();
        let scaled = sample(&params, &mut rng(21), 500).unwrap();
        let standard = sample_standard(0.8, &mut rng(21), 500).unwrap();
        for (s, x) in scaled.iter().zip(&standard) {
            assert_eq!(*s, 2.5 * x);
        }
    }

    #[test]
    fn skewed_laws_are_rejected() {
        let params = StableParams::new(1.2, 1.0, 0.5, 0.0).unwrap();
        assert!(matches!(
            sample(&params, &mut rng(0), 10),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn hill_recovers_the_index() {
        let xs = sample_standard(0.8, &mut rng(17), 1_000_000).unwrap();
        let est = tail_exponent(&xs).unwrap();
        assert!(est.power_tail);
        assert_abs_diff_eq!(est.alpha_hat, 0.8, epsilon = 0.05);
    }

    #[test]
    fn hill_rejects_degenerate_and_gaussian_tails() {
        let flat = vec![1.0; 200_000];
        assert!(matches!(
            tail_exponent(&flat),
            Err(Error::InsufficientData(_))
        ));
        let gauss = sample_standard(2.0, &mut rng(13), 1_000_000).unwrap();
        let est = tail_exponent(&gauss).unwrap();
        assert!(!est.power_tail, "no power tail should be detected, got {est:?}");
    }

    #[test]
    fn ratio_accessor() {
        assert_eq!(NoiseSpec::new(1.0, 0.5, 1.0).unwrap().ratio(), Some(2.0));
        assert_eq!(NoiseSpec::new(1.0, 0.0, 1.0).unwrap().ratio(), None);
        assert!(NoiseSpec::new(2.5, 1.0, 1.0).is_err());
    }
}
