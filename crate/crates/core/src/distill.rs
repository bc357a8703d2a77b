//! Single-copy heralded distillation.
//!
//! Mode B passes a tap beam splitter of transmittivity `T`. The tapped
//! fraction is measured in `x` and the signal is kept when the outcome
//! reaches the threshold:
//!
//! ```text
//! x'_B = sqrt(T) x_B - sqrt(R) x_v      x_t = sqrt(R) x_B + sqrt(T) x_v
//! p'_B = sqrt(T) p_B - sqrt(R) p_v      p_t = sqrt(R) p_B + sqrt(T) p_v
//! herald: x_t >= x_th
//! ```
//!
//! Each mixture component is jointly Gaussian in `(x_A, p_A, x'_B, p'_B, x_t)`,
//! so its post-selected moments follow from the truncated-normal identities
//! for the half-line `x_t >= x_th`. The post-selected covariance matrix
//! is built from central moments.

use nalgebra::{Matrix4, Matrix6, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::channel::GaussianMixture;
use crate::error::{Error, Result};
use crate::gaussian::{
    conditional_entropy_lower_bound, gaussian_log_negativity, upper_bound_ln_mixture, TwoModeCovariance,
};
use crate::special::{inverse_mills_ratio, normal_pdf, truncation_variance_shift, upper_tail};
use crate::tol;

/// Tap beam splitter and herald threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapConfig {
    /// Fraction of mode B kept as signal, `0 < T <= 1`.
    pub transmittivity: f64,
    /// Herald threshold on `x_t` in shot-noise units. `-inf` disables
    /// post-selection.
    pub threshold: f64,
}

impl TapConfig {
    pub fn new(transmittivity: f64, threshold: f64) -> Result<Self> {
        let tap = Self {
            transmittivity,
            threshold,
        };
        tap.validate()?;
        Ok(tap)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.transmittivity > 0.0 && self.transmittivity <= 1.0) {
            return Err(Error::Param(format!(
                "tap transmittivity {} must lie in (0, 1]",
                self.transmittivity
            )));
        }
        if self.threshold.is_nan() {
            return Err(Error::Param("threshold is NaN".into()));
        }
        Ok(())
    }

    pub fn reflectivity(&self) -> f64 {
        1.0 - self.transmittivity
    }

    pub fn with_threshold(self, threshold: f64) -> Self {
        Self { threshold, ..self }
    }
}

/// Linear map from `(x_A, p_A, x_B, p_B, x_v, p_v)` to
/// `(x_A, p_A, x'_B, p'_B, x_t, p_t)`.
pub fn tap_matrix(transmittivity: f64) -> Matrix6<f64> {
    let st = transmittivity.sqrt();
    let sr = (1.0 - transmittivity).sqrt();
    #[rustfmt::skip]
    let m = Matrix6::new(
        1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, st,  0.0, -sr, 0.0,
        0.0, 0.0, 0.0, st,  0.0, -sr,
        0.0, 0.0, sr,  0.0, st,  0.0,
        0.0, 0.0, 0.0, sr,  0.0, st,
    );
    m
}

/// Variance of the tapped quadrature, `(1 - T) V_BX + T`.
pub fn detected_variance(v_bx: f64, transmittivity: f64) -> f64 {
    (1.0 - transmittivity) * v_bx + transmittivity
}

/// `P(x_t >= x_th) = erfc(x_th / sqrt(2 V'))/2` for detected variance `V'`.
pub fn success_probability(detected_variance: f64, threshold: f64) -> f64 {
    upper_tail(threshold / detected_variance.sqrt())
}

/// Joint Gaussian statistics of one component after the tap.
#[derive(Debug, Clone, Copy)]
struct Tapped {
    /// Covariance of `(x_A, p_A, x'_B, p'_B)`.
    signal: Matrix4<f64>,
    /// `Cov(signal, x_t)`.
    cross: Vector4<f64>,
    /// `Var(x_t)`.
    detected: f64,
}

fn tapped(cm: &TwoModeCovariance, transmittivity: f64) -> Tapped {
    let mut input = Matrix6::identity();
    input.fixed_view_mut::<4, 4>(0, 0).copy_from(cm.matrix());
    let map = tap_matrix(transmittivity);
    let out = map * input * map.transpose();
    Tapped {
        signal: out.fixed_view::<4, 4>(0, 0).into_owned(),
        cross: out.fixed_view::<4, 1>(0, 4).into_owned(),
        detected: out[(4, 4)],
    }
}

/// One component conditioned on `x_t >= threshold`.
#[derive(Debug, Clone, Copy)]
struct Conditioned {
    success: f64,
    /// `phi(alpha)` and `alpha phi(alpha)`, the unnormalized weights used by
    /// the raw moments.
    density: f64,
    alpha_density: f64,
    mean: Vector4<f64>,
    cov: Matrix4<f64>,
    detected: f64,
    /// Unconditioned post-tap covariance of the signal.
    signal: Matrix4<f64>,
    cross: Vector4<f64>,
}

fn condition(cm: &TwoModeCovariance, tap: &TapConfig) -> Result<Conditioned> {
    let Tapped {
        signal,
        cross,
        detected,
    } = tapped(cm, tap.transmittivity);
    if !(detected > 0.0) {
        return Err(Error::Numerical(format!(
            "detected variance {detected} is not positive"
        )));
    }
    let sd = detected.sqrt();
    let alpha = tap.threshold / sd;
    let lambda = inverse_mills_ratio(alpha);
    let shift = truncation_variance_shift(alpha);
    let density = normal_pdf(alpha);
    let alpha_density = if density == 0.0 { 0.0 } else { alpha * density };
    Ok(Conditioned {
        success: upper_tail(alpha),
        density,
        alpha_density,
        mean: cross * (lambda / sd),
        cov: signal + cross * cross.transpose() * (shift / detected),
        detected,
        signal,
        cross,
    })
}

/// Post-selected `x` moments of one component in the unnormalized convention
/// (each already multiplied by the component's success probability).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawXMoments {
    pub mean_a: f64,
    pub mean_b: f64,
    pub sq_a: f64,
    pub sq_b: f64,
    pub cross: f64,
}

/// Conditional central `x` moments of one component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralXMoments {
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub cov_ab: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XMoments {
    /// `P_{S,i}`.
    pub success: f64,
    /// `V'_DX,i`.
    pub detected_variance: f64,
    pub raw: RawXMoments,
    pub central: CentralXMoments,
}

/// Post-selected moments of `x_A` and `x'_B` for one component.
pub fn conditional_moments_x(cm: &TwoModeCovariance, tap: &TapConfig) -> Result<XMoments> {
    tap.validate()?;
    let c = condition(cm, tap)?;
    let sd = c.detected.sqrt();
    let (a, b) = (0, 2);
    // Raw second moments: Q Sigma + cross cross^T alpha phi / V'.
    let raw_sq =
        |i: usize, j: usize| c.success * c.signal[(i, j)] + c.cross[i] * c.cross[j] * c.alpha_density / c.detected;
    Ok(XMoments {
        success: c.success,
        detected_variance: c.detected,
        raw: RawXMoments {
            mean_a: c.cross[a] * c.density / sd,
            mean_b: c.cross[b] * c.density / sd,
            sq_a: raw_sq(a, a),
            sq_b: raw_sq(b, b),
            cross: raw_sq(a, b),
        },
        central: CentralXMoments {
            mean_a: c.mean[a],
            mean_b: c.mean[b],
            var_a: c.cov[(a, a)],
            var_b: c.cov[(b, b)],
            cov_ab: c.cov[(a, b)],
        },
    })
}

/// The closed forms as commonly printed, kept for
/// comparison with [`conditional_moments_x`].
///
/// The `<x'_B^2>` and `<x_A x'_B>` lines disagree with the conditioning
/// result away from `x_th = 0`: their first terms carry `V' - 1` where the
/// derivation gives `V_BX - 1` (and the cross term lacks a factor `x_th`),
/// and the cross term's erfc part carries an extra `V'`.
pub fn printed_conditional_moments_x(cm: &TwoModeCovariance, tap: &TapConfig) -> RawXMoments {
    use std::f64::consts::PI;
    let t = tap.transmittivity;
    let r = tap.reflectivity();
    let h = tap.threshold;
    let (v_ax, v_bx, c_x) = (cm.v_ax(), cm.v_bx(), cm.c_x());
    let vd = detected_variance(v_bx, t);
    let gauss = if h.is_finite() {
        (-h * h / (2.0 * vd)).exp()
    } else {
        0.0
    };
    let h_gauss = if gauss == 0.0 { 0.0 } else { h * gauss };
    let erfc = 2.0 * success_probability(vd, h);
    let norm1 = (2.0 * PI * vd).sqrt();
    let norm3 = (2.0 * PI * vd.powi(3)).sqrt();
    RawXMoments {
        mean_a: c_x * r.sqrt() / norm1 * gauss,
        mean_b: (t * r).sqrt() * (v_bx - 1.0) / norm1 * gauss,
        sq_a: r * c_x * c_x / norm3 * h_gauss + v_ax / 2.0 * erfc,
        sq_b: r * t * (vd - 1.0).powi(2) / norm3 * h_gauss + (r * t * (v_bx - 1.0).powi(2) + v_bx) / (2.0 * vd) * erfc,
        cross: t.sqrt() * r * (vd - 1.0) * c_x / norm3 * gauss + t.sqrt() * c_x * vd / 2.0 * erfc,
    }
}

/// Per-component `p` contributions `P_{S,i} V_AP`, `P_{S,i} (T V_BP + R)` and
/// `P_{S,i} sqrt(T) C_P`. The `x` herald leaves `p` untouched when the
/// component has no `x`-`p` correlations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PMoments {
    pub sq_a: f64,
    pub sq_b: f64,
    pub cross: f64,
}

pub fn conditional_moments_p(cm: &TwoModeCovariance, tap: &TapConfig, success: f64) -> PMoments {
    let t = tap.transmittivity;
    PMoments {
        sq_a: success * cm.v_ap(),
        sq_b: success * (t * cm.v_bp() + tap.reflectivity()),
        cross: success * t.sqrt() * cm.c_p(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillationResult {
    /// Central second moments of `(x_A, p_A, x'_B, p'_B)` after heralding.
    pub cm_post: TwoModeCovariance,
    pub p_success: f64,
    /// `w_i = p_i P_{S,i} / P_S`.
    pub posterior_weights: Vec<f64>,
    pub ln_gaussian: f64,
    /// Mean of `(x_A, p_A, x'_B, p'_B)` after heralding.
    pub mean_post: Vector4<f64>,
    /// Conditional `(<x_A>, <x'_B>)` of each component.
    pub component_means: Vec<(f64, f64)>,
}

pub fn distill(mix: &GaussianMixture, tap: &TapConfig) -> Result<DistillationResult> {
    tap.validate()?;
    let conditioned = mix
        .components()
        .iter()
        .map(|(_, cm)| condition(cm, tap))
        .collect::<Result<Vec<_>>>()?;
    let p_success: f64 = mix.weights().zip(&conditioned).map(|(p, c)| p * c.success).sum();
    if !(p_success >= tol::MIN_SUCCESS) {
        return Err(Error::DegenerateSelection(p_success));
    }
    let posterior_weights: Vec<f64> = mix
        .weights()
        .zip(&conditioned)
        .map(|(p, c)| p * c.success / p_success)
        .collect();

    let mean = posterior_weights
        .iter()
        .zip(&conditioned)
        .fold(Vector4::zeros(), |acc, (w, c)| acc + c.mean * *w);
    // Law of total covariance, with the spread of component means taken about
    // the overall mean.
    let cov = posterior_weights
        .iter()
        .zip(&conditioned)
        .fold(Matrix4::zeros(), |acc, (w, c)| {
            let d = c.mean - mean;
            acc + (c.cov + d * d.transpose()) * *w
        });
    let cov = (cov + cov.transpose()) * 0.5;
    let cm_post = TwoModeCovariance::new(cov)?;
    let ln_gaussian = gaussian_log_negativity(&cm_post)?;
    Ok(DistillationResult {
        cm_post,
        p_success,
        posterior_weights,
        ln_gaussian,
        mean_post: mean,
        component_means: conditioned.iter().map(|c| (c.mean[0], c.mean[2])).collect(),
    })
}

/// A component whose printed closed form differs from the conditioning
/// result.
#[derive(Debug, Clone, PartialEq)]
pub struct PrintedFormDiscrepancy {
    pub component: usize,
    pub moment: &'static str,
    pub printed: f64,
    pub derived: f64,
}

/// [`distill`], plus a comparison of every component's raw `x` moments with
/// [`printed_conditional_moments_x`]. Disagreements are logged and returned.
pub fn distill_checked(
    mix: &GaussianMixture,
    tap: &TapConfig,
) -> Result<(DistillationResult, Vec<PrintedFormDiscrepancy>)> {
    let result = distill(mix, tap)?;
    let mut found = Vec::new();
    for (i, (_, cm)) in mix.components().iter().enumerate() {
        let derived = conditional_moments_x(cm, tap)?.raw;
        let printed = printed_conditional_moments_x(cm, tap);
        let pairs = [
            ("<x_A>", printed.mean_a, derived.mean_a),
            ("<x'_B>", printed.mean_b, derived.mean_b),
            ("<x_A^2>", printed.sq_a, derived.sq_a),
            ("<x'_B^2>", printed.sq_b, derived.sq_b),
            ("<x_A x'_B>", printed.cross, derived.cross),
        ];
        for (moment, printed, derived) in pairs {
            if (printed - derived).abs() > tol::PRINTED_FORM {
                log::warn!("component {i}: printed {moment} = {printed:e} differs from conditioned value {derived:e}");
                found.push(PrintedFormDiscrepancy {
                    component: i,
                    moment,
                    printed,
                    derived,
                });
            }
        }
    }
    Ok((result, found))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub p_success: f64,
    pub ln_gaussian: f64,
    pub posterior_weights: Vec<f64>,
    /// Conditional-entropy bound of the post-selected state.
    pub lower_bound: f64,
    /// Mixture log-negativity bound before the tap; constant over a sweep.
    pub upper_bound_before: f64,
    pub cm_post: TwoModeCovariance,
}

pub fn threshold_sweep(mix: &GaussianMixture, transmittivity: f64, thresholds: &[f64]) -> Result<Vec<SweepRow>> {
    if thresholds.is_empty() {
        return Err(Error::Param("threshold list is empty".into()));
    }
    if thresholds.iter().any(|h| !h.is_finite()) {
        return Err(Error::Param("thresholds must be finite".into()));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Param("thresholds must be strictly ascending".into()));
    }
    let upper_bound_before = upper_bound_ln_mixture(mix.components())?;
    thresholds
        .iter()
        .map(|&threshold| {
            let tap = TapConfig::new(transmittivity, threshold)?;
            let r = distill(mix, &tap)?;
            Ok(SweepRow {
                threshold,
                p_success: r.p_success,
                ln_gaussian: r.ln_gaussian,
                lower_bound: conditional_entropy_lower_bound(&r.cm_post)?,
                upper_bound_before,
                posterior_weights: r.posterior_weights,
                cm_post: r.cm_post,
            })
        })
        .collect()
}

/// Log-negativity error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LnError {
    /// Log-negativity of the unperturbed matrix.
    pub ln: f64,
    /// Mean over the retained perturbed draws.
    pub ln_mean: f64,
    /// Total error: `mc_std` and `stat_term` added in quadrature.
    pub ln_std: f64,
    pub mc_std: f64,
    /// `sqrt(2 / (n_post - 1))`.
    pub stat_term: f64,
    pub kept: usize,
    pub discarded: usize,
}

/// Monte-Carlo propagation of a per-element measurement error into the
/// log-negativity, combined with the finite-sample term for `n_post`
/// post-selected records.
///
/// Each of the ten independent elements receives independent zero-mean
/// Gaussian noise of standard deviation `element_sigma`. Draws for which the
/// log-negativity cannot be evaluated are discarded. Trial `k` draws from
/// stream `k` of a ChaCha generator keyed by `seed`.
pub fn ln_error_monte_carlo(
    cm: &TwoModeCovariance,
    element_sigma: f64,
    n_post: f64,
    trials: usize,
    seed: u64,
) -> Result<LnError> {
    if trials < 100 {
        return Err(Error::Param(format!("need at least 100 trials, got {trials}")));
    }
    if !(element_sigma >= 0.0) || !element_sigma.is_finite() {
        return Err(Error::Param(format!(
            "element sigma {element_sigma} must be non-negative"
        )));
    }
    let ln = gaussian_log_negativity(cm)?;
    let noise = Normal::new(0.0, element_sigma).map_err(|e| Error::Param(e.to_string()))?;
    let draws: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let mut m = *cm.matrix();
            for i in 0..4 {
                for j in i..4 {
                    let v = m[(i, j)] + noise.sample(&mut rng);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            TwoModeCovariance::new(m)
                .and_then(|p| gaussian_log_negativity(&p))
                .ok()
                .filter(|v| v.is_finite())
        })
        .collect();
    let kept: Vec<f64> = draws.into_iter().flatten().collect();
    let discarded = trials - kept.len();
    if kept.len() * 100 < trials || kept.len() < 2 {
        return Err(Error::AllDrawsNonPhysical { discarded, trials });
    }
    let n = kept.len() as f64;
    let ln_mean = kept.iter().sum::<f64>() / n;
    let mc_std = (kept.iter().map(|v| (v - ln_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let stat_term = if n_post > 1.0 {
        (2.0 / (n_post - 1.0)).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(LnError {
        ln,
        ln_mean,
        ln_std: mc_std.hypot(stat_term),
        mc_std,
        stat_term,
        kept: kept.len(),
        discarded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{mixture_from_channel, subchannel_cm, LossChannel, SourceParams};
    use approx::assert_abs_diff_eq;

    fn two_level_mixture() -> GaussianMixture {
        let src = SourceParams::new(0.1, 10.0, 0.5).unwrap();
        let ch = LossChannel::new(vec![(0.0, 0.8), (1.0, 0.2)]).unwrap();
        mixture_from_channel(&src, &ch).unwrap()
    }

    #[test]
    fn detected_variance_examples() {
        assert_eq!(detected_variance(1.0, 0.3), 1.0);
        assert_abs_diff_eq!(detected_variance(5.05, 0.7), 2.215, epsilon = 1e-15);
        assert_abs_diff_eq!(detected_variance(1.81, 0.93), 1.0567, epsilon = 1e-15);
    }

    #[test]
    fn success_probability_limits() {
        assert_eq!(success_probability(2.215, 0.0), 0.5);
        assert_eq!(success_probability(2.215, f64::INFINITY), 0.0);
        assert!(success_probability(2.215, 40.0) < 1e-100);
        assert!(success_probability(2.0, 1.0) > success_probability(2.0, 1.1));
        assert!(success_probability(2.1, 1.0) > success_probability(2.0, 1.0));
    }

    #[test]
    fn tap_validation() {
        assert!(TapConfig::new(0.0, 1.0).is_err());
        assert!(TapConfig::new(1.1, 1.0).is_err());
        assert!(TapConfig::new(0.7, f64::NAN).is_err());
        assert!(TapConfig::new(1.0, 1.0).is_ok());
    }

    #[test]
    fn no_selection_limit() {
        let src = SourceParams::new(0.1, 10.0, 0.5).unwrap();
        let cm = subchannel_cm(&src, 0.6).unwrap();
        let tap = TapConfig::new(0.7, f64::NEG_INFINITY).unwrap();
        let m = conditional_moments_x(&cm, &tap).unwrap();
        assert_eq!(m.success, 1.0);
        assert_eq!(m.central.mean_a, 0.0);
        assert_abs_diff_eq!(m.central.var_b, 0.7 * cm.v_bx() + 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(m.central.cov_ab, 0.7f64.sqrt() * cm.c_x(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.central.var_a, cm.v_ax(), epsilon = 1e-12);
    }

    #[test]
    fn product_state_stays_uncorrelated() {
        let src = SourceParams::new(0.1, 10.0, 1.0).unwrap();
        let cm = subchannel_cm(&src, 0.8).unwrap();
        for h in [-1.0, 0.0, 2.0, 6.0] {
            let m = conditional_moments_x(&cm, &TapConfig::new(0.7, h).unwrap()).unwrap();
            assert_eq!(m.central.mean_a, 0.0);
            assert_abs_diff_eq!(m.central.cov_ab, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn printed_forms_agree_where_expected() {
        let src = SourceParams::new(0.1, 10.0, 0.5).unwrap();
        let cm = subchannel_cm(&src, 1.0).unwrap();
        let tap = TapConfig::new(0.7, 2.0).unwrap();
        let d = conditional_moments_x(&cm, &tap).unwrap().raw;
        let p = printed_conditional_moments_x(&cm, &tap);
        assert_abs_diff_eq!(d.mean_a, p.mean_a, epsilon = 1e-12);
        assert_abs_diff_eq!(d.mean_b, p.mean_b, epsilon = 1e-12);
        assert_abs_diff_eq!(d.sq_a, p.sq_a, epsilon = 1e-12);
        assert!((d.sq_b - p.sq_b).abs() > 1e-3);
        assert!((d.cross - p.cross).abs() > 1e-3);
        // At x_th = 0 the erfc part of <x'_B^2> is exact and the x_th term vanishes.
        let tap0 = tap.with_threshold(0.0);
        let d0 = conditional_moments_x(&cm, &tap0).unwrap().raw;
        assert_abs_diff_eq!(d0.sq_b, printed_conditional_moments_x(&cm, &tap0).sq_b, epsilon = 1e-12);

        let (_, found) = distill_checked(&two_level_mixture(), &tap).unwrap();
        assert!(found.iter().any(|d| d.moment == "<x'_B^2>"));
        assert!(found.iter().all(|d| d.moment != "<x_A>"));
    }

    #[test]
    fn p_moments_match_conditioning() {
        let src = SourceParams::new(0.1, 10.0, 0.5).unwrap();
        let cm = subchannel_cm(&src, 0.6).unwrap();
        let tap = TapConfig::new(0.7, 1.5).unwrap();
        let c = condition(&cm, &tap).unwrap();
        let p = conditional_moments_p(&cm, &tap, c.success);
        assert_abs_diff_eq!(p.sq_a / c.success, c.cov[(1, 1)], epsilon = 1e-12);
        assert_abs_diff_eq!(p.sq_b / c.success, c.cov[(3, 3)], epsilon = 1e-12);
        assert_abs_diff_eq!(p.cross / c.success, c.cov[(1, 3)], epsilon = 1e-12);
    }

    #[test]
    fn no_selection_distill_is_tapped_mixture() {
        let mix = two_level_mixture();
        let tap = TapConfig::new(0.7, f64::NEG_INFINITY).unwrap();
        let r = distill(&mix, &tap).unwrap();
        assert_eq!(r.p_success, 1.0);
        assert_eq!(r.posterior_weights, vec![0.8, 0.2]);
        let m = mix.mixture_cm().unwrap();
        assert_abs_diff_eq!(r.cm_post.v_bx(), 0.7 * m.v_bx() + 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(r.cm_post.c_p(), 0.7f64.sqrt() * m.c_p(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.cm_post.v_ax(), m.v_ax(), epsilon = 1e-12);
    }

    #[test]
    fn degenerate_selection() {
        let tap = TapConfig::new(0.7, 1e3).unwrap();
        assert!(matches!(
            distill(&two_level_mixture(), &tap),
            Err(Error::DegenerateSelection(_))
        ));
    }

    #[test]
    fn sweep_input_errors() {
        let mix = two_level_mixture();
        assert!(threshold_sweep(&mix, 0.7, &[]).is_err());
        assert!(threshold_sweep(&mix, 0.7, &[1.0, 0.5]).is_err());
        assert!(threshold_sweep(&mix, 0.7, &[0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn sweep_upper_bound_is_constant() {
        let rows = threshold_sweep(&two_level_mixture(), 0.7, &[0.0, 2.0, 4.0]).unwrap();
        assert!(rows.iter().all(|r| r.upper_bound_before == rows[0].upper_bound_before));
        assert_abs_diff_eq!(rows[0].upper_bound_before, 2.8f64.log2(), epsilon = 1e-12);
    }

    #[test]
    fn ln_error_zero_sigma_is_statistical_term() {
        let cm = subchannel_cm(&SourceParams::new(0.1, 10.0, 0.5).unwrap(), 0.5).unwrap();
        let e = ln_error_monte_carlo(&cm, 0.0, 1001.0, 100, 7).unwrap();
        assert!(e.mc_std < 1e-12);
        assert_abs_diff_eq!(e.ln_std, (2.0f64 / 1000.0).sqrt(), epsilon = 1e-12);
        assert_eq!(e.discarded, 0);
        assert!(ln_error_monte_carlo(&cm, 0.03, 1001.0, 99, 7).is_err());
    }
}
