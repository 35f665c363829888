//! Pointwise conformal calculus on a flat background chart: the conformal
//! Hessian of a scalar field, the conformal change of boundary mean
//! curvature, and the boundary identities its tangential/normal derivatives
//! satisfy on an umbilic boundary.
//!
//! Chart conventions, used everywhere downstream:
//! - the last coordinate axis is the normal direction; indices 0..n-1 are
//!   tangential, index n-1 is normal,
//! - the normal is the unit inner normal, so on the chart {x_n >= 0} it is
//!   +d/dx_n, and on a ball of radius R it is -d/dr,
//! - `mu` is the (constant) umbilicity factor of the boundary with respect
//!   to the inner normal: 0 for a flat face, +1/R for a sphere of radius R,
//! - all derivatives in boundary identities are covariant ones; with these
//!   conventions the only surviving Christoffel constants are
//!   Gamma^n_{ab} = mu g_{ab} and Gamma^b_{an} = -mu delta_{ab}.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symfun::SymMatrix;

/// Mixed relative/absolute tolerance on the boundary-condition residual
/// below which a jet is accepted by the identity evaluators. The identities
/// are algebraic consequences of the boundary condition; feeding them data
/// that violates it returns garbage, so that is a hard error.
pub const BC_CONSISTENCY_TOL: f64 = 1e-8;

/// Constant boundary data of the conformal Neumann problem: background
/// umbilicity factor `mu` and target mean curvature `mu_hat`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub mu: f64,
    pub mu_hat: f64,
}

impl BoundaryData {
    pub fn new(mu: f64, mu_hat: f64) -> Result<Self> {
        if !mu.is_finite() || !mu_hat.is_finite() {
            return Err(Error::Parameter("boundary data must be finite".into()));
        }
        Ok(BoundaryData { mu, mu_hat })
    }

    /// Residual of the conformal Neumann condition u_n + mu = mu_hat e^{-u}.
    pub fn residual(&self, u: f64, u_n: f64) -> f64 {
        u_n + self.mu - self.mu_hat * (-u).exp()
    }

    /// The normal derivative the condition imposes at boundary value `u`.
    pub fn imposed_normal_derivative(&self, u: f64) -> f64 {
        self.mu_hat * (-u).exp() - self.mu
    }

    fn check_jet(&self, jet: &PointJet) -> Result<()> {
        let u_n = jet.grad[jet.n() - 1];
        let r = self.residual(jet.u, u_n);
        let scale = 1.0 + u_n.abs() + self.mu.abs() + (self.mu_hat * (-jet.u).exp()).abs();
        if r.abs() > BC_CONSISTENCY_TOL * scale {
            return Err(Error::BoundaryConditionViolation {
                residual: r,
                tolerance: BC_CONSISTENCY_TOL * scale,
            });
        }
        Ok(())
    }
}

/// Second-order data of a scalar field at one point.
#[derive(Debug, Clone)]
pub struct PointJet {
    pub u: f64,
    pub grad: Vec<f64>,
    pub hess: SymMatrix,
}

impl PointJet {
    pub fn new(u: f64, grad: Vec<f64>, hess: SymMatrix) -> Result<Self> {
        if grad.len() < 2 {
            return Err(Error::Dimension("jet needs dimension >= 2".into()));
        }
        if hess.n() != grad.len() {
            return Err(Error::Dimension(format!(
                "Hessian dimension {} does not match gradient length {}",
                hess.n(),
                grad.len()
            )));
        }
        Ok(PointJet { u, grad, hess })
    }

    pub fn n(&self) -> usize {
        self.grad.len()
    }
}

fn check_tangential(n: usize, idx: usize) -> Result<()> {
    if idx + 1 >= n {
        return Err(Error::Parameter(format!(
            "index {idx} is not tangential in dimension {n} (normal axis is {})",
            n - 1
        )));
    }
    Ok(())
}

/// The conformal Hessian of the field at a point on a flat chart:
/// hess(u) + du (x) du - |du|^2/2 * id + a_g.
pub fn schouten_hat(jet: &PointJet, a_g: &SymMatrix) -> Result<SymMatrix> {
    let n = jet.n();
    if a_g.n() != n {
        return Err(Error::Dimension("background term dimension mismatch".into()));
    }
    let grad_sq: f64 = jet.grad.iter().map(|g| g * g).sum();
    let mut a = jet.hess.clone();
    for i in 0..n {
        for j in i..n {
            let mut v = a.get(i, j) + jet.grad[i] * jet.grad[j] + a_g.get(i, j);
            if i == j {
                v -= 0.5 * grad_sq;
            }
            a.set(i, j, v);
        }
    }
    Ok(a)
}

/// Conformal transformation law of boundary mean curvature: the curvature
/// of the boundary in the metric e^{2u} g is e^{u} (u_n + mu) when the
/// background curvature is `mu` (inner-normal convention).
pub fn mean_curvature_transform(u: f64, u_n: f64, mu: f64) -> f64 {
    u.exp() * (u_n + mu)
}

/// Mixed second derivative u_{n alpha} forced by the boundary condition:
/// differentiating u_n = mu_hat e^{-u} - mu along the boundary gives
/// u_{n alpha} = mu u_alpha - mu_hat u_alpha e^{-u}.
///
/// The jet must satisfy the boundary condition at the point.
pub fn tangential_normal_mixed_second(
    jet: &PointJet,
    bd: &BoundaryData,
    alpha: usize,
) -> Result<f64> {
    check_tangential(jet.n(), alpha)?;
    bd.check_jet(jet)?;
    let u_alpha = jet.grad[alpha];
    Ok(bd.mu * u_alpha - bd.mu_hat * u_alpha * (-jet.u).exp())
}

/// Third derivative u_{alpha beta n} forced by the boundary condition and
/// umbilicity, expressed through second-order jet data only:
///
///   u_{ab n} = (2 mu - mu_hat e^{-u}) u_{ab} - mu u_{nn} g_{ab}
///              + mu_hat u_a u_b e^{-u} - mu (mu_hat e^{-u} - mu)^2 g_{ab}.
pub fn tangential_hessian_normal_derivative(
    jet: &PointJet,
    bd: &BoundaryData,
    alpha: usize,
    beta: usize,
) -> Result<f64> {
    let n = jet.n();
    check_tangential(n, alpha)?;
    check_tangential(n, beta)?;
    bd.check_jet(jet)?;
    let e = (-jet.u).exp();
    let g_ab = if alpha == beta { 1.0 } else { 0.0 };
    let u_nn = jet.hess.get(n - 1, n - 1);
    Ok((2.0 * bd.mu - bd.mu_hat * e) * jet.hess.get(alpha, beta) - bd.mu * u_nn * g_ab
        + bd.mu_hat * jet.grad[alpha] * jet.grad[beta] * e
        - bd.mu * (bd.mu_hat * e - bd.mu).powi(2) * g_ab)
}

/// Residual of the normal-derivative law of the conformal Hessian on the
/// boundary,
///
///   A_{ab,n} = 2 mu A_{ab} - mu_hat e^{-u} (A_{ab} + A_{nn} g_{ab}),
///
/// where the left side is assembled from supplied third-order data
/// (`hess_normal`, the normal derivative of the Hessian) and the jet:
/// A_{ab,n} = u_{abn} + u_{an} u_b + u_{bn} u_a - (sum_l u_l u_{ln}) g_{ab}.
/// Returns the residual, which is differencing error for consistent data.
pub fn schouten_normal_derivative_identity(
    jet: &PointJet,
    hess_normal: &SymMatrix,
    a_hat: &SymMatrix,
    bd: &BoundaryData,
    alpha: usize,
    beta: usize,
) -> Result<f64> {
    let n = jet.n();
    check_tangential(n, alpha)?;
    check_tangential(n, beta)?;
    if hess_normal.n() != n || a_hat.n() != n {
        return Err(Error::Dimension("third-order data dimension mismatch".into()));
    }
    bd.check_jet(jet)?;
    let nn = n - 1;
    let g_ab = if alpha == beta { 1.0 } else { 0.0 };
    let mut grad_dot_hn = 0.0;
    for l in 0..n {
        grad_dot_hn += jet.grad[l] * jet.hess.get(l, nn);
    }
    let a_abn = hess_normal.get(alpha, beta)
        + jet.hess.get(alpha, nn) * jet.grad[beta]
        + jet.hess.get(beta, nn) * jet.grad[alpha]
        - grad_dot_hn * g_ab;
    let e = (-jet.u).exp();
    let rhs = 2.0 * bd.mu * a_hat.get(alpha, beta)
        - bd.mu_hat * e * (a_hat.get(alpha, beta) + a_hat.get(nn, nn) * g_ab);
    Ok(a_abn - rhs)
}

/// Eigenvalues of the conformal Hessian of a radially symmetric field on a
/// flat background: the radial eigenvalue u_rr + u_r^2/2 (simple) and the
/// tangential eigenvalue u_r/r - u_r^2/2 (multiplicity n-1). At r = 0
/// smoothness forces u_r -> 0 and u_r/r -> u_rr, and the analytic limit is
/// used instead of the removable singularity.
pub fn radial_schouten_eigenvalues(u_r: f64, u_rr: f64, r: f64) -> Result<(f64, f64)> {
    if r < 0.0 || !r.is_finite() {
        return Err(Error::Parameter(format!("radius {r} must be >= 0")));
    }
    let half_sq = 0.5 * u_r * u_r;
    let tangential = if r == 0.0 {
        u_rr - half_sq
    } else {
        u_r / r - half_sq
    };
    Ok((u_rr + half_sq, tangential))
}
