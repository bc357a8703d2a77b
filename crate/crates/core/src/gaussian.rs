//! Two-mode covariance matrices and entanglement measures.
//!
//! Matrices are stored in the mode-block layout `(x_A, p_A, x_B, p_B)`:
//!
//! ```text
//!     | A   C |
//!     | C^T B |
//! ```
//!
//! with `A`, `B` the 2x2 single-mode blocks and `C` the inter-mode block.

use std::f64::consts::LN_2;

use nalgebra::{Matrix2, Matrix4, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tol;

/// Covariance matrix of a two-mode state in shot-noise units.
///
/// Construction checks symmetry and positive definiteness. Physicality (the
/// uncertainty principle) is a separate, weaker-to-fail property exposed by
/// [`TwoModeCovariance::is_physical`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeCovariance {
    m: Matrix4<f64>,
}

impl TwoModeCovariance {
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonPhysical("matrix has non-finite entries".into()));
        }
        if m != m.transpose() {
            return Err(Error::NonPhysical("matrix is not symmetric".into()));
        }
        if m.cholesky().is_none() {
            return Err(Error::NonPhysical("matrix is not positive definite".into()));
        }
        Ok(Self { m })
    }

    /// Builds the matrix from its standard-form entries; intra-mode and
    /// cross-quadrature correlations are zero.
    pub fn from_standard_form(v_ax: f64, v_ap: f64, v_bx: f64, v_bp: f64, c_x: f64, c_p: f64) -> Result<Self> {
        #[rustfmt::skip]
        let m = Matrix4::new(
            v_ax, 0.0,  c_x, 0.0,
            0.0,  v_ap, 0.0, c_p,
            c_x,  0.0,  v_bx, 0.0,
            0.0,  c_p,  0.0, v_bp,
        );
        Self::new(m)
    }

    /// Two vacuum modes.
    pub fn vacuum() -> Self {
        Self { m: Matrix4::identity() }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.m[(row, col)]
    }

    pub fn v_ax(&self) -> f64 {
        self.m[(0, 0)]
    }
    pub fn v_ap(&self) -> f64 {
        self.m[(1, 1)]
    }
    pub fn v_bx(&self) -> f64 {
        self.m[(2, 2)]
    }
    pub fn v_bp(&self) -> f64 {
        self.m[(3, 3)]
    }
    pub fn c_x(&self) -> f64 {
        self.m[(0, 2)]
    }
    pub fn c_p(&self) -> f64 {
        self.m[(1, 3)]
    }

    pub fn block_a(&self) -> Matrix2<f64> {
        self.m.fixed_view::<2, 2>(0, 0).into_owned()
    }

    pub fn block_b(&self) -> Matrix2<f64> {
        self.m.fixed_view::<2, 2>(2, 2).into_owned()
    }

    pub fn block_c(&self) -> Matrix2<f64> {
        self.m.fixed_view::<2, 2>(0, 2).into_owned()
    }

    pub fn det(&self) -> f64 {
        self.m.determinant()
    }

    /// Both symplectic eigenvalues are at least `1 - tol::PHYSICAL`.
    pub fn is_physical(&self) -> bool {
        symplectic_eigenvalues(self)
            .map(|(_, mu2)| mu2 >= 1.0 - tol::PHYSICAL)
            .unwrap_or(false)
    }

    /// Exchanges the roles of modes A and B.
    pub fn swap_modes(&self) -> Self {
        let perm = [2, 3, 0, 1];
        Self {
            m: Matrix4::from_fn(|r, c| self.m[(perm[r], perm[c])]),
        }
    }

    /// Applies a pi phase rotation to mode B (`x_B, p_B -> -x_B, -p_B`).
    /// This is a local unitary and leaves every entanglement measure fixed.
    pub fn flip_mode_b(&self) -> Self {
        let sign = [1.0, 1.0, -1.0, -1.0];
        Self {
            m: Matrix4::from_fn(|r, c| sign[r] * sign[c] * self.m[(r, c)]),
        }
    }
}

/// Lower and upper bounds on distillable entanglement in ebits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntanglementInterval {
    /// Conditional-entropy (hashing) bound of the Gaussian approximation.
    pub lower: f64,
    /// Gaussian log-negativity.
    pub upper: f64,
}

impl EntanglementInterval {
    pub fn of(cm: &TwoModeCovariance) -> Result<Self> {
        Ok(Self {
            lower: conditional_entropy_lower_bound(cm)?,
            upper: gaussian_log_negativity(cm)?,
        })
    }
}

/// `(gamma, det CM)` with `gamma = det A + det B + 2 det C`. The symplectic
/// eigenvalues are the roots of `mu^4 - gamma mu^2 + det CM = 0`.
pub fn symplectic_invariants(cm: &TwoModeCovariance) -> (f64, f64) {
    let gamma = cm.block_a().determinant() + cm.block_b().determinant() + 2.0 * cm.block_c().determinant();
    (gamma, cm.det())
}

/// Symplectic eigenvalues `(mu1, mu2)` with `mu1 >= mu2`.
///
/// Solving the invariant quadratic directly loses half the significant digits
/// when `mu1` and `mu2` nearly coincide, which is the case for every pure
/// state. The values are instead read from the spectrum of the symmetric
/// matrix `K^T K`, `K = L^T Omega L` with `L L^T = CM`, which holds each
/// `mu^2` twice.
pub fn symplectic_eigenvalues(cm: &TwoModeCovariance) -> Result<(f64, f64)> {
    let l =
        cm.m.cholesky()
            .ok_or_else(|| Error::NonPhysical("matrix is not positive definite".into()))?
            .l();
    #[rustfmt::skip]
    let omega = Matrix4::new(
        0.0,  1.0, 0.0, 0.0,
        -1.0, 0.0, 0.0, 0.0,
        0.0,  0.0, 0.0, 1.0,
        0.0,  0.0, -1.0, 0.0,
    );
    let k = l.transpose() * omega * l;
    let s = k.transpose() * k;
    let s = (s + s.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let mu1_sq = 0.5 * (ev[0] + ev[1]);
    let mu2_sq = 0.5 * (ev[2] + ev[3]);
    if !(mu2_sq > 0.0) {
        return Err(Error::NonPhysical(format!(
            "symplectic spectrum {ev:?} is not positive"
        )));
    }
    Ok((mu1_sq.sqrt(), mu2_sq.sqrt()))
}

/// Roots of the invariant quadratic. Accurate to about `sqrt(eps)` near
/// pure states; kept as a cross-check of [`symplectic_eigenvalues`].
///
/// The discriminant `gamma^2 - 4 det CM` is compared against the tolerance
/// scaled by `max(1, gamma^2)`; smaller negative values are clamped to zero.
pub fn symplectic_eigenvalues_closed_form(cm: &TwoModeCovariance) -> Result<(f64, f64)> {
    let (gamma, det) = symplectic_invariants(cm);
    eigen_pair(gamma, det)
}

fn eigen_pair(invariant: f64, det: f64) -> Result<(f64, f64)> {
    if det <= 0.0 || invariant <= 0.0 {
        return Err(Error::NonPhysical(format!(
            "symplectic invariants gamma={invariant}, det={det} are not positive"
        )));
    }
    let disc = invariant * invariant - 4.0 * det;
    let slack = tol::PHYSICAL * (invariant * invariant).max(1.0);
    if disc < -slack {
        return Err(Error::NonPhysical(format!("negative symplectic discriminant {disc:e}")));
    }
    let root = disc.max(0.0).sqrt();
    let mu1_sq = 0.5 * (invariant + root);
    // mu1^2 mu2^2 = det; avoids the cancellation in (gamma - root)/2.
    let mu2_sq = det / mu1_sq;
    Ok((mu1_sq.sqrt(), mu2_sq.sqrt()))
}

/// Partial transpose on mode B: `p_B -> -p_B`.
pub fn ptranspose(cm: &TwoModeCovariance) -> TwoModeCovariance {
    let mut m = cm.m;
    for k in 0..3 {
        m[(3, k)] = -m[(3, k)];
        m[(k, 3)] = -m[(k, 3)];
    }
    TwoModeCovariance { m }
}

/// Gaussian log-negativity `-log2 nu_min`, where `nu_min` is the smaller
/// symplectic eigenvalue of the partially transposed matrix. Negative values
/// are returned unclamped.
pub fn gaussian_log_negativity(cm: &TwoModeCovariance) -> Result<f64> {
    let (_, nu_min) = symplectic_eigenvalues(&ptranspose(cm))?;
    Ok(-nu_min.log2())
}

/// Von Neumann entropy (bits) of a thermal mode with symplectic eigenvalue
/// `x`: `f(x) = (x+1)/2 log2((x+1)/2) - (x-1)/2 log2((x-1)/2)`.
pub fn entropy_f(x: f64) -> Result<f64> {
    if !(x >= 1.0 - tol::PHYSICAL) {
        return Err(Error::Domain(format!("entropy_f needs x >= 1, got {x}")));
    }
    if x <= 1.0 {
        return Ok(0.0);
    }
    // With u = (x-1)/2: f = ln(1+u) + u ln(1 + 1/u), all in nats. This form
    // avoids the large cancellation between the two printed terms.
    let u = 0.5 * (x - 1.0);
    Ok((u.ln_1p() + u * (1.0 / u).ln_1p()) / LN_2)
}

/// Conditional-entropy lower bound `S(rho_A) - S(rho)` of the Gaussian
/// approximation, with `S(rho_A) = f(sqrt(det A))`. May be negative.
pub fn conditional_entropy_lower_bound(cm: &TwoModeCovariance) -> Result<f64> {
    let (mu1, mu2) = symplectic_eigenvalues(cm)?;
    if mu2 < 1.0 - tol::PHYSICAL {
        return Err(Error::NonPhysical(format!(
            "symplectic eigenvalue {mu2} below the vacuum limit"
        )));
    }
    let det_a = cm.block_a().determinant();
    if det_a <= 0.0 {
        return Err(Error::NonPhysical(format!("det A = {det_a}")));
    }
    Ok(entropy_f(det_a.sqrt())? - entropy_f(mu1)? - entropy_f(mu2)?)
}

pub(crate) fn validate_weights(weights: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for p in weights {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::Weight(format!("weight {p} is not a probability")));
        }
        sum += p;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Weight("no components".into()));
    }
    if (sum - 1.0).abs() > tol::WEIGHT_SUM {
        return Err(Error::Weight(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Upper bound on the log-negativity of `sum_i p_i rho_i` from convexity of
/// the negativity: `log2 sum_i p_i max(1, 1/nu_min_i)`.
///
/// A component whose partial transpose is positive has trace norm exactly 1,
/// hence the clamp.
pub fn upper_bound_ln_mixture(components: &[(f64, TwoModeCovariance)]) -> Result<f64> {
    validate_weights(components.iter().map(|(p, _)| *p))?;
    let mut trace_norm = 0.0;
    for (p, cm) in components {
        if !cm.is_physical() {
            return Err(Error::NonPhysical(
                "mixture component violates the uncertainty principle".into(),
            ));
        }
        let (_, nu_min) = symplectic_eigenvalues(&ptranspose(cm))?;
        trace_norm += p * (1.0 / nu_min).max(1.0);
    }
    Ok(trace_norm.log2())
}
