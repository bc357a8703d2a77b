//! Standard-normal tail functions used by the heralding formulas.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    if !x.is_finite() {
        return 0.0;
    }
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Upper tail `P(Z >= alpha)` of a standard normal, `erfc(alpha/sqrt 2)/2`.
pub fn upper_tail(alpha: f64) -> f64 {
    if alpha == f64::NEG_INFINITY {
        return 1.0;
    }
    if alpha == f64::INFINITY {
        return 0.0;
    }
    0.5 * erfc(alpha * FRAC_1_SQRT_2)
}

/// Inverse Mills ratio `phi(alpha) / Q(alpha)`: the mean of a standard normal
/// truncated to `[alpha, inf)`.
///
/// Above `alpha = 5` the ratio is evaluated from the Laplace continued
/// fraction for `Q/phi`, which stays accurate after `Q` underflows.
pub fn inverse_mills_ratio(alpha: f64) -> f64 {
    if alpha == f64::NEG_INFINITY {
        return 0.0;
    }
    if alpha == f64::INFINITY {
        return f64::INFINITY;
    }
    if alpha < 5.0 {
        let q = upper_tail(alpha);
        return normal_pdf(alpha) / q;
    }
    1.0 / mills_ratio_cf(alpha)
}

/// `Q(a)/phi(a) = 1/(a + 1/(a + 2/(a + 3/(a + ...))))`, modified Lentz.
fn mills_ratio_cf(a: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = a;
    let mut c = a;
    let mut d = 0.0;
    for k in 1..500 {
        let k = k as f64;
        d = a + k * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = a + k / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// `alpha * lambda(alpha) - lambda(alpha)^2`, the relative variance change of
/// a standard normal truncated to `[alpha, inf)` (lies in `(-1, 0]`).
pub fn truncation_variance_shift(alpha: f64) -> f64 {
    let lambda = inverse_mills_ratio(alpha);
    if lambda == 0.0 {
        return 0.0;
    }
    lambda * (alpha - lambda)
}
