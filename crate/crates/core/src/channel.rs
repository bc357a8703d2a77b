//! Two-mode squeezed source, fluctuating-loss channels and the Gaussian
//! mixtures they produce.
//!
//! Sign convention: the stored inter-mode correlations are `C_X = -|c|` and
//! `C_P = +|c|`, so that `(x_A + x_B)/sqrt2` and `(p_A - p_B)/sqrt2` are the
//! squeezed joint quadratures. The magnitudes follow the usual beam-splitter
//! model; the sign choice is a pi phase rotation of mode B and does not change
//! any entanglement measure.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{validate_weights, TwoModeCovariance};
use crate::tol;

/// Identical squeezers mixed on an entangling beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    /// Squeezed-quadrature variance, `0 < v_s <= 1`.
    pub v_s: f64,
    /// Anti-squeezed variance; `v_s * v_a = 1` for pure squeezers.
    pub v_a: f64,
    /// Transmittivity of the entangling beam splitter.
    pub t_s: f64,
}

impl SourceParams {
    pub fn new(v_s: f64, v_a: f64, t_s: f64) -> Result<Self> {
        let src = Self { v_s, v_a, t_s };
        src.validate()?;
        Ok(src)
    }

    /// Pure squeezers, `v_a = 1/v_s`.
    pub fn pure(v_s: f64, t_s: f64) -> Result<Self> {
        Self::new(v_s, 1.0 / v_s, t_s)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { v_s, v_a, t_s } = *self;
        if !(v_s > 0.0 && v_s <= 1.0) {
            return Err(Error::Param(format!("v_s = {v_s} must lie in (0, 1]")));
        }
        if !v_a.is_finite() || v_s * v_a < 1.0 - tol::PHYSICAL {
            return Err(Error::Param(format!(
                "v_s * v_a = {} violates the uncertainty principle",
                v_s * v_a
            )));
        }
        if !(0.0..=1.0).contains(&t_s) {
            return Err(Error::Param(format!("t_s = {t_s} must lie in [0, 1]")));
        }
        Ok(())
    }
}

/// Standard-form entries as functions of the transmittance and its square
/// root. Both the per-level matrices and the averaged matrix go through here.
fn standard_form_entries(src: &SourceParams, eta: f64, sqrt_eta: f64) -> [f64; 6] {
    let t_s = src.t_s;
    let r_s = 1.0 - t_s;
    let v_ax = t_s * src.v_s + r_s * src.v_a;
    let v_ap = t_s * src.v_a + r_s * src.v_s;
    let v_bx = eta * (t_s * src.v_a + r_s * src.v_s) + (1.0 - eta);
    let v_bp = eta * (t_s * src.v_s + r_s * src.v_a) + (1.0 - eta);
    let c = sqrt_eta * (r_s * t_s).sqrt() * (src.v_a - src.v_s);
    [v_ax, v_ap, v_bx, v_bp, -c, c]
}

fn check_transmittance(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Param(format!("transmittance {eta} outside [0, 1]")));
    }
    Ok(())
}

/// Covariance matrix after a constant-loss channel of transmittance `eta`
/// acting on mode B.
pub fn subchannel_cm(src: &SourceParams, eta: f64) -> Result<TwoModeCovariance> {
    src.validate()?;
    check_transmittance(eta)?;
    let [v_ax, v_ap, v_bx, v_bp, c_x, c_p] = standard_form_entries(src, eta, eta.sqrt());
    TwoModeCovariance::from_standard_form(v_ax, v_ap, v_bx, v_bp, c_x, c_p)
}

/// Discrete distribution of channel transmittances.
#[derive(Debug, Clone, PartialEq)]
pub struct LossChannel {
    levels: Vec<(f64, f64)>,
}

impl LossChannel {
    /// Takes `(eta_i, p_i)` pairs in any order; they are stored sorted by
    /// transmittance. Repeated transmittances are rejected.
    pub fn new(mut levels: Vec<(f64, f64)>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Param("channel needs at least one level".into()));
        }
        for &(eta, _) in &levels {
            check_transmittance(eta)?;
        }
        validate_weights(levels.iter().map(|l| l.1))?;
        levels.sort_by(|a, b| a.0.total_cmp(&b.0));
        if levels.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Param("transmittance levels must be distinct".into()));
        }
        Ok(Self { levels })
    }

    /// Normalizes non-negative weights before building the channel.
    pub fn from_unnormalized(etas: &[f64], weights: &[f64]) -> Result<Self> {
        if etas.len() != weights.len() {
            return Err(Error::Param("level and weight counts differ".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Weight("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Weight("weights sum to zero".into()));
        }
        Self::new(etas.iter().zip(weights).map(|(&e, &w)| (e, w / total)).collect())
    }

    pub fn levels(&self) -> &[(f64, f64)] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn mean_eta(&self) -> f64 {
        self.levels.iter().map(|(e, p)| p * e).sum()
    }

    pub fn mean_sqrt_eta(&self) -> f64 {
        self.levels.iter().map(|(e, p)| p * e.sqrt()).sum()
    }
}

pub const DEFAULT_LEVELS: usize = 45;

fn default_levels() -> usize {
    DEFAULT_LEVELS
}

fn d_eta_hi() -> f64 {
    1.0
}
fn d_eta_lo() -> f64 {
    0.25
}
fn d_half() -> f64 {
    0.5
}
fn d_center_hi() -> f64 {
    0.8
}
fn d_width_hi() -> f64 {
    0.11
}
fn d_center_lo() -> f64 {
    0.3
}
fn d_width_lo() -> f64 {
    0.08
}
fn d_ratio() -> f64 {
    0.75
}
fn d_rate() -> f64 {
    5.0
}

/// Equally spaced transmittances from 0.1 to 1.
pub fn level_grid(n_levels: usize) -> Result<Vec<f64>> {
    match n_levels {
        0 => Err(Error::Param("a level grid needs at least one level".into())),
        1 => Ok(vec![1.0]),
        n => {
            let step = 0.9 / (n - 1) as f64;
            Ok((0..n).map(|k| 0.1 + k as f64 * step).collect())
        }
    }
}

/// Parametric transmittance distributions. Omitted parameters take the
/// defaults of [`ChannelPreset::named`].
///
/// The bump and decay envelopes are modelling choices; only their centres
/// have direct experimental anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelPreset {
    /// Two levels: `eta_hi` with probability `p_hi`, otherwise `eta_lo`.
    Erasure {
        #[serde(default = "d_eta_hi")]
        eta_hi: f64,
        #[serde(default = "d_eta_lo")]
        eta_lo: f64,
        #[serde(default = "d_half")]
        p_hi: f64,
    },
    /// Equal weight on every grid level.
    Uniform {
        #[serde(default = "default_levels")]
        n_levels: usize,
    },
    /// Gaussian envelope centred on `center`.
    OnePeak {
        #[serde(default = "d_center_hi")]
        center: f64,
        #[serde(default = "d_width_hi")]
        width: f64,
        #[serde(default = "default_levels")]
        n_levels: usize,
    },
    /// Sum of two Gaussian envelopes; `ratio` scales the low-transmittance one.
    TwoPeak {
        #[serde(default = "d_center_hi")]
        center_hi: f64,
        #[serde(default = "d_width_hi")]
        width_hi: f64,
        #[serde(default = "d_center_lo")]
        center_lo: f64,
        #[serde(default = "d_width_lo")]
        width_lo: f64,
        #[serde(default = "d_ratio")]
        ratio: f64,
        #[serde(default = "default_levels")]
        n_levels: usize,
    },
    /// Weights `exp(-rate (1 - eta))`: peaked at full transmission with a
    /// long low-transmittance tail.
    ExpDecay {
        #[serde(default = "d_rate")]
        rate: f64,
        #[serde(default = "default_levels")]
        n_levels: usize,
    },
    /// Explicit `(eta, p)` list.
    Explicit { levels: Vec<(f64, f64)> },
}

pub const PRESET_NAMES: [&str; 6] = ["erasure", "uniform45", "uniform", "one_peak", "two_peak", "exp_decay"];

impl ChannelPreset {
    /// Default parameters for a named preset.
    pub fn named(name: &str, n_levels: usize) -> Result<Self> {
        Ok(match name {
            "erasure" => ChannelPreset::Erasure {
                eta_hi: d_eta_hi(),
                eta_lo: d_eta_lo(),
                p_hi: d_half(),
            },
            "uniform45" => ChannelPreset::Uniform { n_levels: 45 },
            "uniform" => ChannelPreset::Uniform { n_levels },
            "one_peak" => ChannelPreset::OnePeak {
                center: d_center_hi(),
                width: d_width_hi(),
                n_levels,
            },
            "two_peak" => ChannelPreset::TwoPeak {
                center_hi: d_center_hi(),
                width_hi: d_width_hi(),
                center_lo: d_center_lo(),
                width_lo: d_width_lo(),
                ratio: d_ratio(),
                n_levels,
            },
            "exp_decay" => ChannelPreset::ExpDecay {
                rate: d_rate(),
                n_levels,
            },
            other => return Err(Error::UnknownPreset(other.to_string())),
        })
    }

    pub fn build(&self) -> Result<LossChannel> {
        let bump = |eta: f64, c: f64, w: f64| (-(eta - c).powi(2) / (2.0 * w * w)).exp();
        match self {
            ChannelPreset::Erasure { eta_hi, eta_lo, p_hi } => {
                if !(eta_lo < eta_hi) {
                    return Err(Error::Param(format!(
                        "erasure needs eta_lo < eta_hi, got {eta_lo} and {eta_hi}"
                    )));
                }
                if !(0.0..=1.0).contains(p_hi) {
                    return Err(Error::Weight(format!("p_hi = {p_hi}")));
                }
                LossChannel::new(vec![(*eta_lo, 1.0 - p_hi), (*eta_hi, *p_hi)])
            }
            ChannelPreset::Uniform { n_levels } => {
                let etas = level_grid(*n_levels)?;
                let weights = vec![1.0 / *n_levels as f64; etas.len()];
                LossChannel::from_unnormalized(&etas, &weights)
            }
            ChannelPreset::OnePeak {
                center,
                width,
                n_levels,
            } => {
                positive_width(*width)?;
                let etas = level_grid(*n_levels)?;
                let weights: Vec<f64> = etas.iter().map(|&e| bump(e, *center, *width)).collect();
                LossChannel::from_unnormalized(&etas, &weights)
            }
            ChannelPreset::TwoPeak {
                center_hi,
                width_hi,
                center_lo,
                width_lo,
                ratio,
                n_levels,
            } => {
                positive_width(*width_hi)?;
                positive_width(*width_lo)?;
                if !(*ratio >= 0.0) {
                    return Err(Error::Param(format!("peak ratio {ratio} must be non-negative")));
                }
                let etas = level_grid(*n_levels)?;
                let weights: Vec<f64> = etas
                    .iter()
                    .map(|&e| bump(e, *center_hi, *width_hi) + ratio * bump(e, *center_lo, *width_lo))
                    .collect();
                LossChannel::from_unnormalized(&etas, &weights)
            }
            ChannelPreset::ExpDecay { rate, n_levels } => {
                if !(*rate >= 0.0) {
                    return Err(Error::Param(format!("decay rate {rate} must be non-negative")));
                }
                let etas = level_grid(*n_levels)?;
                let weights: Vec<f64> = etas.iter().map(|&e| (-rate * (1.0 - e)).exp()).collect();
                LossChannel::from_unnormalized(&etas, &weights)
            }
            ChannelPreset::Explicit { levels } => LossChannel::new(levels.clone()),
        }
    }
}

fn positive_width(w: f64) -> Result<()> {
    if !(w > 0.0) {
        return Err(Error::Param(format!("envelope width {w} must be positive")));
    }
    Ok(())
}

/// Named preset with default parameters on an `n_levels` grid.
pub fn channel_preset(name: &str, n_levels: usize) -> Result<LossChannel> {
    ChannelPreset::named(name, n_levels)?.build()
}

/// Weighted list of zero-mean two-mode Gaussian components.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<(f64, TwoModeCovariance)>,
}

impl GaussianMixture {
    pub fn new(components: Vec<(f64, TwoModeCovariance)>) -> Result<Self> {
        validate_weights(components.iter().map(|c| c.0))?;
        if let Some(i) = components.iter().position(|(_, cm)| !cm.is_physical()) {
            return Err(Error::NonPhysical(format!("mixture component {i} is not physical")));
        }
        Ok(Self { components })
    }

    pub fn single(cm: TwoModeCovariance) -> Result<Self> {
        Self::new(vec![(1.0, cm)])
    }

    pub fn components(&self) -> &[(f64, TwoModeCovariance)] {
        &self.components
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(|c| c.0)
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Element-wise convex combination of the component matrices.
    pub fn mixture_cm(&self) -> Result<TwoModeCovariance> {
        let m = self
            .components
            .iter()
            .fold(nalgebra::Matrix4::zeros(), |acc, (p, cm)| acc + *cm.matrix() * *p);
        TwoModeCovariance::new(m)
    }
}

pub fn mixture_from_channel(src: &SourceParams, ch: &LossChannel) -> Result<GaussianMixture> {
    let components = ch
        .levels()
        .iter()
        .map(|&(eta, p)| Ok((p, subchannel_cm(src, eta)?)))
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::new(components)
}

/// The mixture covariance matrix evaluated with `eta -> <eta>` and
/// `sqrt(eta) -> <sqrt(eta)>` in the single-level formulas.
pub fn mixture_cm_via_averages(src: &SourceParams, ch: &LossChannel) -> Result<TwoModeCovariance> {
    src.validate()?;
    let [v_ax, v_ap, v_bx, v_bp, c_x, c_p] = standard_form_entries(src, ch.mean_eta(), ch.mean_sqrt_eta());
    TwoModeCovariance::from_standard_form(v_ax, v_ap, v_bx, v_bp, c_x, c_p)
}

/// Single quadratures and the two joint combinations measured in homodyne
/// correlation experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    XA,
    PA,
    XB,
    PB,
    /// `(x_A + x_B) / sqrt 2`
    XSum,
    /// `(p_A - p_B) / sqrt 2`
    PDiff,
}

impl Quadrature {
    pub const ALL: [Quadrature; 6] = [
        Quadrature::XA,
        Quadrature::PA,
        Quadrature::XB,
        Quadrature::PB,
        Quadrature::XSum,
        Quadrature::PDiff,
    ];

    /// Coefficients on `(x_A, p_A, x_B, p_B)`.
    pub fn coefficients(self) -> Vector4<f64> {
        let h = FRAC_1_SQRT_2;
        match self {
            Quadrature::XA => Vector4::new(1.0, 0.0, 0.0, 0.0),
            Quadrature::PA => Vector4::new(0.0, 1.0, 0.0, 0.0),
            Quadrature::XB => Vector4::new(0.0, 0.0, 1.0, 0.0),
            Quadrature::PB => Vector4::new(0.0, 0.0, 0.0, 1.0),
            Quadrature::XSum => Vector4::new(h, 0.0, h, 0.0),
            Quadrature::PDiff => Vector4::new(0.0, h, 0.0, -h),
        }
    }

    pub fn eval(self, x_a: f64, p_a: f64, x_b: f64, p_b: f64) -> f64 {
        self.coefficients().dot(&Vector4::new(x_a, p_a, x_b, p_b))
    }

    /// Variance of the combination under covariance `cm`.
    pub fn variance(self, cm: &TwoModeCovariance) -> f64 {
        let w = self.coefficients();
        (w.transpose() * cm.matrix() * w)[(0, 0)]
    }

    pub fn name(self) -> &'static str {
        match self {
            Quadrature::XA => "x_A",
            Quadrature::PA => "p_A",
            Quadrature::XB => "x_B",
            Quadrature::PB => "p_B",
            Quadrature::XSum => "x_sum",
            Quadrature::PDiff => "p_diff",
        }
    }
}

/// Marginal density of `quadrature` under the mixture, evaluated on `grid`.
pub fn marginal_pdf(mix: &GaussianMixture, quadrature: Quadrature, grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::Grid("empty grid".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::Grid("grid contains non-finite points".into()));
    }
    let parts: Vec<(f64, f64)> = mix
        .components()
        .iter()
        .map(|(p, cm)| (*p, quadrature.variance(cm)))
        .collect();
    Ok(grid
        .iter()
        .map(|&x| {
            parts
                .iter()
                .map(|&(p, var)| p * (-0.5 * x * x / var).exp() / (2.0 * PI * var).sqrt())
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pure_source() -> SourceParams {
        SourceParams::new(0.1, 10.0, 0.5).unwrap()
    }

    #[test]
    fn pure_subchannel_entries() {
        let cm = subchannel_cm(&pure_source(), 1.0).unwrap();
        for v in [cm.v_ax(), cm.v_ap(), cm.v_bx(), cm.v_bp()] {
            assert_abs_diff_eq!(v, 5.05, epsilon = 1e-14);
        }
        // Stored with the squeezed-sum sign convention.
        assert_abs_diff_eq!(cm.c_x(), -4.95, epsilon = 1e-14);
        assert_abs_diff_eq!(cm.c_p(), 4.95, epsilon = 1e-14);
    }

    #[test]
    fn full_erasure_leaves_vacuum_on_b() {
        let cm = subchannel_cm(&pure_source(), 0.0).unwrap();
        assert_eq!(cm.v_bx(), 1.0);
        assert_eq!(cm.v_bp(), 1.0);
        assert_eq!(cm.c_x(), 0.0);
        assert_eq!(cm.c_p(), 0.0);
    }

    #[test]
    fn unbalanced_splitter_gives_product_state() {
        for t_s in [0.0, 1.0] {
            let src = SourceParams::new(0.1, 10.0, t_s).unwrap();
            let cm = subchannel_cm(&src, 0.7).unwrap();
            assert_eq!(cm.c_x(), 0.0);
            assert_eq!(cm.c_p(), 0.0);
        }
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(SourceParams::new(0.0, 10.0, 0.5), Err(Error::Param(_))));
        assert!(matches!(SourceParams::new(0.1, 5.0, 0.5), Err(Error::Param(_))));
        assert!(matches!(SourceParams::new(0.1, 10.0, 1.5), Err(Error::Param(_))));
        assert!(matches!(subchannel_cm(&pure_source(), 1.2), Err(Error::Param(_))));
        assert!(matches!(subchannel_cm(&pure_source(), -0.1), Err(Error::Param(_))));
    }

    #[test]
    fn erasure_mixture_matches_both_paths() {
        let ch = LossChannel::new(vec![(1.0, 0.2), (0.0, 0.8)]).unwrap();
        let src = pure_source();
        let a = mixture_from_channel(&src, &ch).unwrap().mixture_cm().unwrap();
        let b = mixture_cm_via_averages(&src, &ch).unwrap();
        assert_abs_diff_eq!(a.v_bx(), 1.81, epsilon = 1e-12);
        assert_abs_diff_eq!(b.c_x(), -0.99, epsilon = 1e-12);
        assert!((a.matrix() - b.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn experimental_channel_averages() {
        let ch = channel_preset("erasure", 45).unwrap();
        assert_eq!(ch.levels(), &[(0.25, 0.5), (1.0, 0.5)]);
        assert_abs_diff_eq!(ch.mean_eta(), 0.625, epsilon = 1e-15);
        assert_abs_diff_eq!(ch.mean_sqrt_eta(), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn single_level_mixture_is_the_subchannel() {
        let ch = LossChannel::new(vec![(0.6, 1.0)]).unwrap();
        let src = pure_source();
        let mix = mixture_from_channel(&src, &ch).unwrap();
        assert_eq!(mix.mixture_cm().unwrap(), subchannel_cm(&src, 0.6).unwrap());
    }

    #[test]
    fn channel_validation() {
        assert!(LossChannel::new(vec![]).is_err());
        assert!(matches!(
            LossChannel::new(vec![(0.5, 0.5), (0.5, 0.5)]),
            Err(Error::Param(_))
        ));
        assert!(matches!(
            LossChannel::new(vec![(0.5, 0.6), (0.7, 0.5)]),
            Err(Error::Weight(_))
        ));
        let ch = LossChannel::new(vec![(0.9, 0.3), (0.2, 0.7)]).unwrap();
        assert_eq!(ch.levels()[0].0, 0.2);
    }

    #[test]
    fn presets() {
        let u = channel_preset("uniform45", 45).unwrap();
        assert_eq!(u.len(), 45);
        assert_abs_diff_eq!(u.levels()[1].0 - u.levels()[0].0, 0.9 / 44.0, epsilon = 1e-15);
        assert_eq!(u.levels()[44].0, 1.0);
        for (_, p) in u.levels() {
            assert_abs_diff_eq!(*p, 1.0 / 45.0, epsilon = 1e-15);
        }

        let one = channel_preset("one_peak", 45).unwrap();
        let argmax = one.levels().iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        let nearest = u
            .levels()
            .iter()
            .map(|l| l.0)
            .min_by(|a, b| (a - 0.8).abs().total_cmp(&(b - 0.8).abs()))
            .unwrap();
        assert_eq!(argmax, nearest);

        let two = channel_preset("two_peak", 45).unwrap();
        let low_mass: f64 = two.levels().iter().filter(|l| l.0 < 0.7).map(|l| l.1).sum();
        assert!(low_mass > 0.3 && low_mass < 0.7, "{low_mass}");

        let exp = channel_preset("exp_decay", 45).unwrap();
        assert!(exp.levels().windows(2).all(|w| w[0].1 < w[1].1));

        assert!(matches!(channel_preset("rician", 45), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn serde_defaults_match_named_presets() {
        for name in ["erasure", "one_peak", "two_peak", "exp_decay"] {
            let parsed: ChannelPreset = serde_json::from_str(&format!(r#"{{"preset": "{name}"}}"#)).unwrap();
            assert_eq!(parsed, ChannelPreset::named(name, DEFAULT_LEVELS).unwrap());
        }
        assert!(serde_json::from_str::<ChannelPreset>(r#"{"preset": "erasure", "eta": 1}"#).is_err());
    }

    #[test]
    fn marginal_of_vacuum_is_standard_normal() {
        let mix = GaussianMixture::single(TwoModeCovariance::vacuum()).unwrap();
        let grid = [-2.0, 0.0, 1.5];
        let pdf = marginal_pdf(&mix, Quadrature::XB, &grid).unwrap();
        for (x, d) in grid.iter().zip(pdf) {
            assert_abs_diff_eq!(d, (-0.5 * x * x).exp() / (2.0 * PI).sqrt(), epsilon = 1e-15);
        }
        assert!(matches!(marginal_pdf(&mix, Quadrature::XA, &[]), Err(Error::Grid(_))));
        assert!(matches!(
            marginal_pdf(&mix, Quadrature::XA, &[f64::NAN]),
            Err(Error::Grid(_))
        ));
    }

    #[test]
    fn squeezed_joint_quadratures() {
        let cm = subchannel_cm(&pure_source(), 1.0).unwrap();
        assert_abs_diff_eq!(Quadrature::XSum.variance(&cm), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(Quadrature::PDiff.variance(&cm), 0.1, epsilon = 1e-12);
    }
}
