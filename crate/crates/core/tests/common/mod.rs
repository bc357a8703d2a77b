//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix2, Matrix4};
use proptest::prelude::*;

use cvdistill::{LossChannel, SourceParams, TwoModeCovariance};

fn omega() -> Matrix4<f64> {
    #[rustfmt::skip]
    let w = Matrix4::new(
        0.0,  1.0, 0.0,  0.0,
        -1.0, 0.0, 0.0,  0.0,
        0.0,  0.0, 0.0,  1.0,
        0.0,  0.0, -1.0, 0.0,
    );
    w
}

/// Symplectic eigenvalues as the moduli of the (purely imaginary) eigenvalues
/// of `Omega V`, from a general real Schur decomposition.
pub fn dense_symplectic_eigenvalues(m: &Matrix4<f64>) -> (f64, f64) {
    let ev = (omega() * m).complex_eigenvalues();
    let mut mods: Vec<f64> = ev.iter().map(|z| z.im.abs()).collect();
    mods.sort_by(|a, b| b.total_cmp(a));
    (0.5 * (mods[0] + mods[1]), 0.5 * (mods[2] + mods[3]))
}

/// Log-negativity from the dense oracle.
pub fn dense_log_negativity(m: &Matrix4<f64>) -> f64 {
    let flip = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, 1.0, -1.0));
    let (_, nu) = dense_symplectic_eigenvalues(&(flip * m * flip));
    -nu.log2()
}

fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, -s, c)
}

fn local(a: Matrix2<f64>, b: Matrix2<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&b);
    m
}

fn beam_splitter(phi: f64) -> Matrix4<f64> {
    let (s, c) = phi.sin_cos();
    #[rustfmt::skip]
    let m = Matrix4::new(
        c,   0.0, s,   0.0,
        0.0, c,   0.0, s,
        -s,  0.0, c,   0.0,
        0.0, -s,  0.0, c,
    );
    m
}

/// Parameters of `S diag(nu1, nu1, nu2, nu2) S^T` with `S` a product of
/// local rotations, squeezers and a beam splitter.
#[derive(Debug, Clone, Copy)]
pub struct SymplecticParams {
    pub nu: (f64, f64),
    pub squeeze: (f64, f64),
    pub angles: [f64; 4],
    pub mixing: f64,
}

impl SymplecticParams {
    pub fn transform(&self) -> Matrix4<f64> {
        let sq = |r: f64| Matrix2::new((-r).exp(), 0.0, 0.0, r.exp());
        let [a, b, c, d] = self.angles;
        local(rotation(a), rotation(b))
            * beam_splitter(self.mixing)
            * local(sq(self.squeeze.0), sq(self.squeeze.1))
            * local(rotation(c), rotation(d))
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let s = self.transform();
        let d = Matrix4::from_diagonal(&nalgebra::Vector4::new(self.nu.0, self.nu.0, self.nu.1, self.nu.1));
        let m = s * d * s.transpose();
        (m + m.transpose()) * 0.5
    }

    pub fn cm(&self) -> TwoModeCovariance {
        TwoModeCovariance::new(self.matrix()).expect("symplectic image of a thermal state is positive definite")
    }

    /// The symplectic spectrum this matrix was built with, in descending order.
    pub fn spectrum(&self) -> (f64, f64) {
        (self.nu.0.max(self.nu.1), self.nu.0.min(self.nu.1))
    }
}

pub fn symplectic_params() -> impl Strategy<Value = SymplecticParams> {
    (
        1.0..4.0f64,
        1.0..4.0f64,
        0.0..1.5f64,
        0.0..1.5f64,
        prop::array::uniform4(0.0..std::f64::consts::TAU),
        0.0..std::f64::consts::PI,
    )
        .prop_map(|(n1, n2, r1, r2, angles, mixing)| SymplecticParams {
            nu: (n1, n2),
            squeeze: (r1, r2),
            angles,
            mixing,
        })
}

/// Sources with up to 20 units of excess anti-squeezing noise.
pub fn sources() -> impl Strategy<Value = SourceParams> {
    (0.05..1.0f64, 0.0..20.0f64, 0.0..=1.0f64)
        .prop_map(|(v_s, excess, t_s)| SourceParams::new(v_s, 1.0 / v_s + excess, t_s).unwrap())
}

/// Channels with 1 to 8 distinct levels.
pub fn channels() -> impl Strategy<Value = LossChannel> {
    prop::collection::btree_map(0u32..=1000, 0.01..1.0f64, 1..8).prop_map(|m| {
        let etas: Vec<f64> = m.keys().map(|&k| k as f64 / 1000.0).collect();
        let weights: Vec<f64> = m.values().copied().collect();
        LossChannel::from_unnormalized(&etas, &weights).unwrap()
    })
}

/// Adaptive Simpson quadrature.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 50)
}

/// Excess kurtosis of a zero-mean scale mixture of normals.
pub fn scale_mixture_excess_kurtosis(weights: &[f64], variances: &[f64]) -> f64 {
    let m2: f64 = weights.iter().zip(variances).map(|(p, v)| p * v).sum();
    let m4: f64 = weights.iter().zip(variances).map(|(p, v)| 3.0 * p * v * v).sum();
    m4 / (m2 * m2) - 3.0
}

/// Fitted experimental source: -2.6 dB of two-mode squeezing and a success
/// probability of about 1.7e-5 at `x_th = 9` on the 7%-tap erasure channel.
pub fn fitted_source() -> SourceParams {
    SourceParams::new(10f64.powf(-0.26), 118.64360816744701, 0.5).unwrap()
}
