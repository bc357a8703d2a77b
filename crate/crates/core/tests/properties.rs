//! Property tests over random states, sources and channels.

mod common;

use common::{channels, dense_log_negativity, dense_symplectic_eigenvalues, integrate, sources, symplectic_params};
use proptest::prelude::*;

use cvdistill::special::upper_tail;
use cvdistill::{
    conditional_entropy_lower_bound, detected_variance, distill, entropy_f, gaussian_log_negativity, marginal_pdf,
    mixture_cm_via_averages, mixture_from_channel, ptranspose, subchannel_cm, symplectic_eigenvalues,
    upper_bound_ln_mixture, GaussianMixture, LossChannel, Quadrature, TapConfig,
};

const PHYS: f64 = 1e-9;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #[test]
    fn eigenvalues_match_dense_oracle_and_construction(p in symplectic_params()) {
        let cm = p.cm();
        let (mu1, mu2) = symplectic_eigenvalues(&cm).unwrap();
        let (d1, d2) = dense_symplectic_eigenvalues(cm.matrix());
        let (s1, s2) = p.spectrum();
        prop_assert!(rel(mu1, d1) < 1e-9 && rel(mu2, d2) < 1e-9, "{mu1} {mu2} vs dense {d1} {d2}");
        prop_assert!(rel(mu1, s1) < 1e-9 && rel(mu2, s2) < 1e-9, "{mu1} {mu2} vs built {s1} {s2}");
        prop_assert!(mu2 >= 1.0 - PHYS);
        let ln = gaussian_log_negativity(&cm).unwrap();
        prop_assert!((ln - dense_log_negativity(cm.matrix())).abs() < 1e-9);
    }

    #[test]
    fn local_flip_swap_and_transpose(p in symplectic_params()) {
        let cm = p.cm();
        let ln = gaussian_log_negativity(&cm).unwrap();
        prop_assert!((gaussian_log_negativity(&cm.flip_mode_b()).unwrap() - ln).abs() < 1e-12);
        prop_assert!((gaussian_log_negativity(&cm.swap_modes()).unwrap() - ln).abs() < 1e-9);
        prop_assert_eq!(ptranspose(&ptranspose(&cm)), cm);
    }

    #[test]
    fn lower_bound_never_exceeds_log_negativity(p in symplectic_params()) {
        let cm = p.cm();
        let lower = conditional_entropy_lower_bound(&cm).unwrap();
        let ln = gaussian_log_negativity(&cm).unwrap();
        prop_assert!(lower <= ln + 1e-9, "lower {lower} > LN {ln}");
    }

    #[test]
    fn pure_states_saturate_the_entropy_bound(p in symplectic_params()) {
        let pure = common::SymplecticParams { nu: (1.0, 1.0), ..p }.cm();
        let (mu1, mu2) = symplectic_eigenvalues(&pure).unwrap();
        prop_assert!((mu1 - 1.0).abs() < 1e-9 && (mu2 - 1.0).abs() < 1e-9);
        let lower = conditional_entropy_lower_bound(&pure).unwrap();
        let direct = entropy_f(pure.block_a().determinant().sqrt().max(1.0)).unwrap();
        prop_assert!((lower - direct).abs() < 1e-7, "{lower} vs {direct}");
        prop_assert!(gaussian_log_negativity(&pure).unwrap() >= lower - 1e-9);
    }

    #[test]
    fn subchannel_states_are_physical(src in sources(), eta in 0.0..=1.0f64) {
        let cm = subchannel_cm(&src, eta).unwrap();
        let (_, mu2) = symplectic_eigenvalues(&cm).unwrap();
        prop_assert!(mu2 >= 1.0 - PHYS, "mu2 = {mu2}");
        let (_, d2) = dense_symplectic_eigenvalues(cm.matrix());
        prop_assert!(rel(mu2, d2) < 1e-9);
    }

    #[test]
    fn averaged_formulas_equal_the_convex_sum(src in sources(), ch in channels()) {
        let mix = mixture_from_channel(&src, &ch).unwrap();
        let direct = mix.mixture_cm().unwrap();
        let averaged = mixture_cm_via_averages(&src, &ch).unwrap();
        prop_assert!((direct.matrix() - averaged.matrix()).abs().max() <= 1e-12);
        prop_assert!(direct.is_physical());
    }

    #[test]
    fn single_component_bound_is_clamped_log_negativity(src in sources(), eta in 0.0..=1.0f64) {
        let cm = subchannel_cm(&src, eta).unwrap();
        let ub = upper_bound_ln_mixture(&[(1.0, cm)]).unwrap();
        let ln = gaussian_log_negativity(&cm).unwrap();
        prop_assert!((ub - ln.max(0.0)).abs() < 1e-12, "{ub} vs {ln}");
    }

    #[test]
    fn mixing_never_beats_the_best_component(src in sources(), ch in channels()) {
        let mix = mixture_from_channel(&src, &ch).unwrap();
        let ln_mix = gaussian_log_negativity(&mix.mixture_cm().unwrap()).unwrap();
        let best = mix
            .components()
            .iter()
            .map(|(_, cm)| gaussian_log_negativity(cm).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(ln_mix <= best + 1e-9, "{ln_mix} > {best}");
        let ub = upper_bound_ln_mixture(mix.components()).unwrap();
        prop_assert!(ub <= best.max(0.0) + 1e-9);
    }

    #[test]
    fn spread_at_fixed_mean_transmittance_costs_entanglement(
        src in sources(),
        mean in 0.2..0.8f64,
        a in 0.0..1.0f64,
        b in 0.0..1.0f64,
    ) {
        let reach = mean.min(1.0 - mean);
        let (narrow, wide) = (reach * a.min(b), reach * a.max(b));
        let ln = |d: f64| {
            let ch = if d == 0.0 {
                LossChannel::new(vec![(mean, 1.0)]).unwrap()
            } else {
                LossChannel::new(vec![(mean - d, 0.5), (mean + d, 0.5)]).unwrap()
            };
            gaussian_log_negativity(&mixture_cm_via_averages(&src, &ch).unwrap()).unwrap()
        };
        prop_assert!(ln(wide) <= ln(narrow) + 1e-12);
    }

    #[test]
    fn success_probability_is_the_tail_of_the_detected_mixture(
        src in sources(),
        ch in channels(),
        t in 0.5..1.0f64,
        x_th in -3.0..4.0f64,
    ) {
        let mix = mixture_from_channel(&src, &ch).unwrap();
        let r = distill(&mix, &TapConfig::new(t, x_th).unwrap()).unwrap();
        let parts: Vec<(f64, f64)> = mix
            .components()
            .iter()
            .map(|(p, cm)| (*p, detected_variance(cm.v_bx(), t)))
            .collect();
        let closed: f64 = parts.iter().map(|&(p, v)| p * upper_tail(x_th / v.sqrt())).sum();
        prop_assert!(rel(r.p_success, closed) < 1e-14);

        let density = |x: f64| -> f64 {
            parts
                .iter()
                .map(|&(p, v)| p * (-0.5 * x * x / v).exp() / (std::f64::consts::TAU * v).sqrt())
                .sum()
        };
        let widest = parts.iter().map(|p| p.1).fold(0.0, f64::max).sqrt();
        let integral = integrate(&density, x_th, x_th.max(0.0) + 40.0 * widest, 1e-14);
        prop_assert!(rel(r.p_success, integral) < 1e-8, "{} vs {integral}", r.p_success);
    }

    #[test]
    fn heralded_states_are_physical_and_bounded(
        src in sources(),
        ch in channels(),
        t in 0.5..1.0f64,
        x_th in -2.0..8.0f64,
    ) {
        let mix = mixture_from_channel(&src, &ch).unwrap();
        let r = distill(&mix, &TapConfig::new(t, x_th).unwrap()).unwrap();
        let (_, mu2) = symplectic_eigenvalues(&r.cm_post).unwrap();
        prop_assert!(mu2 >= 1.0 - PHYS, "mu2 = {mu2}");
        let w: f64 = r.posterior_weights.iter().sum();
        prop_assert!((w - 1.0).abs() < 1e-12);
        let lower = conditional_entropy_lower_bound(&r.cm_post).unwrap();
        if lower > 0.0 {
            prop_assert!(lower <= r.ln_gaussian + 1e-9);
        }
    }

    #[test]
    fn selection_favours_larger_detected_variance(
        src in sources(),
        ch in channels(),
        t in 0.5..1.0f64,
        x_th in 0.01..6.0f64,
    ) {
        let mix = mixture_from_channel(&src, &ch).unwrap();
        let r = distill(&mix, &TapConfig::new(t, x_th).unwrap()).unwrap();
        let stats: Vec<(f64, f64)> = mix
            .components()
            .iter()
            .zip(&r.posterior_weights)
            .map(|((p, cm), w)| (detected_variance(cm.v_bx(), t), w / p))
            .collect();
        for a in &stats {
            for b in &stats {
                if a.0 > b.0 + 1e-12 {
                    prop_assert!(a.1 >= b.1 * (1.0 - 1e-12), "V' {} > {} but ratio {} < {}", a.0, b.0, a.1, b.1);
                }
            }
        }
    }

    #[test]
    fn widest_component_weight_grows_with_threshold(src in sources(), ch in channels(), t in 0.5..1.0f64) {
        let mix = mixture_from_channel(&src, &ch).unwrap();
        let widest = mix
            .components()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.v_bx().total_cmp(&b.1 .1.v_bx()))
            .unwrap()
            .0;
        let mut prev = 0.0;
        for k in 0..=20 {
            let r = distill(&mix, &TapConfig::new(t, 0.5 * k as f64).unwrap()).unwrap();
            let w = r.posterior_weights[widest];
            prop_assert!(w >= prev * (1.0 - 1e-12), "weight fell from {prev} to {w}");
            prev = w;
        }
    }

    #[test]
    fn entropy_is_increasing(a in 1.0..1000.0f64, b in 1.0..1000.0f64) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(entropy_f(lo).unwrap() <= entropy_f(hi).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn marginals_are_normalized(src in sources(), ch in channels()) {
        let mix = mixture_from_channel(&src, &ch).unwrap();
        for q in Quadrature::ALL {
            let widest = mix.components().iter().map(|(_, cm)| q.variance(cm)).fold(0.0, f64::max).sqrt();
            let f = |x: f64| marginal_pdf(&mix, q, &[x]).unwrap()[0];
            let total = integrate(&f, -14.0 * widest, 14.0 * widest, 1e-10);
            prop_assert!((total - 1.0).abs() < 1e-6, "{}: {total}", q.name());
        }
    }
}

#[test]
fn vacuum_marginals_are_standard_normal() {
    let mix = GaussianMixture::single(cvdistill::TwoModeCovariance::vacuum()).unwrap();
    let grid = [-2.0, 0.0, 1.5];
    for q in Quadrature::ALL {
        let got = marginal_pdf(&mix, q, &grid).unwrap();
        for (g, x) in got.iter().zip(grid) {
            let want = (-0.5 * x * x).exp() / std::f64::consts::TAU.sqrt();
            assert!((g - want).abs() < 1e-15);
        }
    }
}
