//! Continuation Newton solver for the conformal Neumann problem on a flat
//! chart: find u with
//!
//!   F^t(A[u]) = f e^{-2u}   in the domain,
//!   u_n + mu  = mu_hat e^{-u}   on the Neumann boundary piece,
//!
//! where A[u] is the conformal Hessian from [`crate::conformal`] and F^t
//! the deformed cone functional from [`crate::symfun`]. The deformation
//! parameter is continued from the semilinear t = 0 problem to the target
//! t = 1 along a uniform schedule with adaptive bisection of stalled legs.
//! Every accepted iterate is required to stay strictly inside the deformed
//! cone at every grid node, mirroring the a priori structure that makes
//! the continuous problem solvable: the solver never evaluates the
//! functional outside its domain of ellipticity.
//!
//! Two discretizations share the driver: a box chart where the last axis
//! is normal and the face x_n = 0 carries the Neumann rows, and a radial
//! grid for rotationally symmetric problems, closed by evenness at the
//! origin and either a framed (Dirichlet) or Neumann outer end.

mod linalg;

use serde::{Deserialize, Serialize};

use crate::conformal::{radial_schouten_eigenvalues, schouten_hat, BoundaryData, PointJet};
use crate::error::{Error, Result};
use crate::grid::{hess_index, BoxGrid, Field, GridHeader, PointClass, RadialGrid};
use crate::symfun::{FunctionalSpec, Spectrum, SymMatrix};
use linalg::{bicgstab, CsrBuilder, CsrMatrix};

/// Floor applied to the background curvature scale when deriving the
/// constant initial guess from f = F(A) e^{2u}.
const INITIAL_CURVATURE_FLOOR: f64 = 0.1;
/// Curvature of the quadratic bump added to the constant initial guess
/// when the background term alone is not strictly inside the cone.
const BUMP_CURVATURE: f64 = 0.1;
/// Tolerance on the analytic boundary-condition residual of a reference
/// field, relative to the natural scale of the condition.
const REFERENCE_BC_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Box { points: Vec<usize> },
    Radial { r_max: f64, points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RhsSpec {
    /// f = 1.
    One,
    /// Positive constant f.
    Constant(f64),
    /// f manufactured from the reference field at t = 1 and then frozen,
    /// so intermediate continuation steps solve a genuinely different
    /// problem than the reference.
    ManufacturedFixed,
    /// f manufactured from the reference field at every continuation step,
    /// so the reference solves each step's problem exactly.
    ManufacturedPath,
}

/// Constant background term added to the conformal Hessian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum BackgroundTerm {
    #[default]
    Zero,
    Isotropic(f64),
    Diagonal(Vec<f64>),
}

impl BackgroundTerm {
    fn matrix(&self, n: usize) -> Result<SymMatrix> {
        match self {
            BackgroundTerm::Zero => Ok(SymMatrix::zero(n)),
            BackgroundTerm::Isotropic(s) => Ok(SymMatrix::identity(n).scale(*s)),
            BackgroundTerm::Diagonal(d) => {
                if d.len() != n {
                    return Err(Error::Dimension(format!(
                        "background diagonal has {} entries in dimension {n}",
                        d.len()
                    )));
                }
                Ok(SymMatrix::from_diag(d))
            }
        }
    }

    /// Isotropic value, required for rotationally symmetric problems.
    fn isotropic_value(&self) -> Result<f64> {
        match self {
            BackgroundTerm::Zero => Ok(0.0),
            BackgroundTerm::Isotropic(s) => Ok(*s),
            BackgroundTerm::Diagonal(d) => {
                if d.windows(2).all(|w| w[0] == w[1]) {
                    Ok(d[0])
                } else {
                    Err(Error::Parameter(
                        "radial problems need an isotropic background term".into(),
                    ))
                }
            }
        }
    }

}

/// Closure of the outer radial end: pinned to the reference field or
/// carrying the Neumann condition. Box charts frame every face except
/// x_n = 0 regardless of this setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum OuterClosure {
    #[default]
    Frame,
    Sigma,
}

/// Built-in analytic fields used as frames, manufacture sources, initial
/// interpolants, and error references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Reference {
    /// u(r) = ln((1 + r^2) / sqrt(2)); its conformal Hessian is the
    /// isotropic matrix 2/(1+r^2)^2 I, so every deformed functional of it
    /// equals e^{-2u} and the field solves f = 1 at every t.
    Hemisphere,
    /// u(r) = c + a r^2 / 2.
    RadialQuadratic { a: f64, c: f64 },
    /// u(x) = gamma + alpha |x|^2 / 2 + beta x_1 x_2 (both tangential), so
    /// u_n = alpha x_n vanishes on the Neumann face.
    BoxQuadratic { alpha: f64, beta: f64, gamma: f64 },
}

impl Reference {
    /// Value, first, and second radial derivatives at r.
    pub fn radial_profile(&self, r: f64) -> Result<(f64, f64, f64)> {
        match self {
            Reference::Hemisphere => {
                let q = 1.0 + r * r;
                Ok(((q / 2f64.sqrt()).ln(), 2.0 * r / q, (2.0 - 2.0 * r * r) / (q * q)))
            }
            Reference::RadialQuadratic { a, c } => Ok((c + 0.5 * a * r * r, a * r, *a)),
            Reference::BoxQuadratic { .. } => Err(Error::Parameter(
                "this reference is not rotationally symmetric".into(),
            )),
        }
    }

    /// Full second-order jet at a chart point.
    pub fn box_jet(&self, x: &[f64]) -> Result<PointJet> {
        let n = x.len();
        match self {
            Reference::Hemisphere => {
                let q = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
                let grad: Vec<f64> = x.iter().map(|v| 2.0 * v / q).collect();
                let mut hess = SymMatrix::zero(n);
                for i in 0..n {
                    for j in i..n {
                        let mut v = -4.0 * x[i] * x[j] / (q * q);
                        if i == j {
                            v += 2.0 / q;
                        }
                        hess.set(i, j, v);
                    }
                }
                PointJet::new((q / 2f64.sqrt()).ln(), grad, hess)
            }
            Reference::RadialQuadratic { a, c } => {
                let q: f64 = x.iter().map(|v| v * v).sum();
                let grad = x.iter().map(|v| a * v).collect();
                PointJet::new(c + 0.5 * a * q, grad, SymMatrix::identity(n).scale(*a))
            }
            Reference::BoxQuadratic { alpha, beta, gamma } => {
                if n < 3 {
                    return Err(Error::Dimension(
                        "the coupled quadratic needs two tangential axes".into(),
                    ));
                }
                let q: f64 = x.iter().map(|v| v * v).sum();
                let mut grad: Vec<f64> = x.iter().map(|v| alpha * v).collect();
                grad[0] += beta * x[1];
                grad[1] += beta * x[0];
                let mut hess = SymMatrix::identity(n).scale(*alpha);
                hess.set(0, 1, *beta);
                PointJet::new(gamma + 0.5 * alpha * q + beta * x[0] * x[1], grad, hess)
            }
        }
    }

    pub fn box_value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.box_jet(x)?.u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Sup-norm residual at which a Newton solve is converged.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Smallest admissible line-search damping factor.
    pub damping_min: f64,
    /// Number of points in the uniform deformation schedule from 0 to 1;
    /// 1 solves directly at t = 1.
    pub t_steps: usize,
    /// Accepted iterates must keep every cone margin at or above this.
    pub cone_margin: f64,
    /// Relative tolerance of the inner linear solves; Newton steps are
    /// deliberately inexact.
    pub linear_tol: f64,
    pub linear_max_iters: usize,
    /// Bisection budget per leg of the continuation schedule.
    pub max_bisections: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tol: 1e-9,
            max_newton_iters: 40,
            damping_min: 1.0 / 1024.0,
            t_steps: 11,
            cone_margin: 1e-10,
            linear_tol: 1e-3,
            linear_max_iters: 10_000,
            max_bisections: 6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Problem {
    /// Ambient dimension; equals the number of box axes.
    pub n: usize,
    /// Cone order of the target functional.
    pub k: usize,
    pub domain: Domain,
    pub boundary: BoundaryData,
    #[serde(default)]
    pub background: BackgroundTerm,
    pub rhs: RhsSpec,
    #[serde(default)]
    pub reference: Option<Reference>,
    #[serde(default)]
    pub outer: OuterClosure,
    #[serde(default)]
    pub config: SolverConfig,
}

/// One accepted continuation solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub newton_iters: usize,
    pub residual: f64,
    /// Smallest cone margin over all grid nodes at the solved iterate.
    pub min_margin: f64,
    pub monitor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub steps: Vec<StepRecord>,
    pub final_residual: f64,
    pub min_margin: f64,
    pub monitor: f64,
    /// Set when mu_hat < 0: such targets sit outside the supported
    /// existence theory, and results are best-effort.
    pub negative_target_curvature: bool,
    pub reference_sup_error: Option<f64>,
    pub grid: GridHeader,
    pub solution: Vec<f64>,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        FunctionalSpec::new(self.n, self.k, 1.0)?;
        BoundaryData::new(self.boundary.mu, self.boundary.mu_hat)?;
        if let RhsSpec::Constant(c) = self.rhs {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Parameter(format!("constant rhs {c} must be positive")));
            }
        }
        if matches!(self.rhs, RhsSpec::ManufacturedFixed | RhsSpec::ManufacturedPath)
            && self.reference.is_none()
        {
            return Err(Error::Parameter(
                "a manufactured rhs needs a reference field".into(),
            ));
        }
        if self.config.t_steps == 0 {
            return Err(Error::Parameter("the continuation schedule needs at least one step".into()));
        }
        match &self.domain {
            Domain::Box { points } => {
                if points.len() != self.n {
                    return Err(Error::Dimension(format!(
                        "{} box axes in dimension {}",
                        points.len(),
                        self.n
                    )));
                }
                // Box charts always have framed faces.
                if self.reference.is_none() {
                    return Err(Error::Parameter(
                        "box problems need a reference field to frame the outer faces".into(),
                    ));
                }
                let grid = BoxGrid::chart(points)?;
                self.check_reference_boundary_box(&grid)?;
            }
            Domain::Radial { r_max, points } => {
                let grid = RadialGrid::new(*r_max, *points)?;
                self.background.isotropic_value()?;
                match self.outer {
                    OuterClosure::Frame => {
                        if self.reference.is_none() {
                            return Err(Error::Parameter(
                                "a framed outer end needs a reference field".into(),
                            ));
                        }
                    }
                    OuterClosure::Sigma => self.check_reference_boundary_radial(&grid)?,
                }
                if let Some(r) = &self.reference {
                    r.radial_profile(0.0)?;
                }
            }
        }
        Ok(())
    }

    /// A reference field combined with Neumann rows must satisfy the
    /// boundary condition analytically; otherwise frames, manufactured
    /// right-hand sides, and boundary rows would fight each other.
    fn check_reference_boundary_box(&self, grid: &BoxGrid) -> Result<()> {
        let reference = self.reference.as_ref().unwrap();
        let n = self.n;
        for face in 0..grid.sigma_len() {
            let x = grid.point_of(grid.sigma_flat(face));
            let jet = reference.box_jet(&x)?;
            let r = self.boundary.residual(jet.u, jet.grad[n - 1]);
            let scale = 1.0
                + jet.grad[n - 1].abs()
                + self.boundary.mu.abs()
                + (self.boundary.mu_hat * (-jet.u).exp()).abs();
            if r.abs() > REFERENCE_BC_TOL * scale {
                return Err(Error::Parameter(format!(
                    "reference field violates the boundary data on the Neumann face \
                     (residual {r:.3e} at {x:?})"
                )));
            }
        }
        Ok(())
    }

    fn check_reference_boundary_radial(&self, grid: &RadialGrid) -> Result<()> {
        let Some(reference) = self.reference.as_ref() else {
            return Ok(());
        };
        let (u, u_r, _) = reference.radial_profile(grid.r_max())?;
        let r = self.boundary.residual(u, -u_r);
        let scale =
            1.0 + u_r.abs() + self.boundary.mu.abs() + (self.boundary.mu_hat * (-u).exp()).abs();
        if r.abs() > REFERENCE_BC_TOL * scale {
            return Err(Error::Parameter(format!(
                "reference field violates the boundary data at the outer radius \
                 (residual {r:.3e})"
            )));
        }
        Ok(())
    }
}

/// Solves the problem by deformation continuation and returns the full
/// run record together with the final solution values.
pub fn solve(problem: &Problem) -> Result<SolveReport> {
    problem.validate()?;
    match &problem.domain {
        Domain::Box { points } => {
            let grid = BoxGrid::chart(points)?;
            let mut sys = BoxSystem::new(problem, grid)?;
            let mut u = sys.initial_guess();
            let steps = continuation(&mut sys, &mut u, &problem.config)?;
            Ok(assemble_report(
                steps,
                problem,
                sys.reference_error(&u),
                sys.grid.header(),
                u,
            ))
        }
        Domain::Radial { r_max, points } => {
            let grid = RadialGrid::new(*r_max, *points)?;
            let mut sys = RadialSystem::new(problem, grid)?;
            let mut u = sys.initial_guess();
            let steps = continuation(&mut sys, &mut u, &problem.config)?;
            Ok(assemble_report(
                steps,
                problem,
                sys.reference_error(&u),
                sys.grid.header(),
                u,
            ))
        }
    }
}

fn assemble_report(
    steps: Vec<StepRecord>,
    problem: &Problem,
    reference_sup_error: Option<f64>,
    grid: GridHeader,
    solution: Vec<f64>,
) -> SolveReport {
    let last = steps.last().expect("continuation returns at least one step");
    SolveReport {
        final_residual: last.residual,
        min_margin: last.min_margin,
        monitor: last.monitor,
        negative_target_curvature: problem.boundary.mu_hat < 0.0,
        reference_sup_error,
        grid,
        solution,
        steps,
    }
}

/// Residual vector together with the worst cone margin over the grid.
pub(crate) struct Evaluation {
    pub residual: Vec<f64>,
    pub min_margin: f64,
}

/// The two discretizations and the test mock implement this; the Newton
/// and continuation drivers are generic over it.
pub(crate) trait SystemOps {
    /// Refresh state that depends on the deformation parameter (the
    /// manufactured right-hand side on path mode).
    fn prepare_t(&mut self, t: f64) -> Result<()>;
    /// Residual and margins at a feasible point; errors with
    /// [`Error::InfeasibleIterate`] if any node leaves the open cone.
    fn evaluate(&self, u: &[f64], t: f64) -> Result<Evaluation>;
    fn jacobian(&self, u: &[f64], t: f64) -> Result<CsrMatrix>;
    fn monitor(&self, u: &[f64]) -> f64;
}

fn t_schedule(steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![1.0];
    }
    (0..steps).map(|i| i as f64 / (steps - 1) as f64).collect()
}

/// Damped Newton iteration at fixed t. A step is accepted only if it both
/// strictly decreases the sup-norm residual and keeps every cone margin at
/// or above the configured floor; the damping factor halves until either
/// holds or the budget runs out.
fn newton_solve<S: SystemOps>(
    sys: &S,
    u: &mut [f64],
    t: f64,
    cfg: &SolverConfig,
) -> Result<(usize, f64, f64)> {
    let mut eval = sys.evaluate(u, t)?;
    let mut res_norm = crate::grid::sup_norm(&eval.residual);
    for iter in 0..cfg.max_newton_iters {
        if res_norm <= cfg.newton_tol {
            return Ok((iter, res_norm, eval.min_margin));
        }
        let jac = sys.jacobian(u, t)?;
        let rhs: Vec<f64> = eval.residual.iter().map(|r| -r).collect();
        let (delta, _, _) = bicgstab(&jac, &rhs, cfg.linear_tol, cfg.linear_max_iters)?;
        let mut damping = 1.0;
        let mut accepted = false;
        while damping >= cfg.damping_min {
            let trial: Vec<f64> =
                u.iter().zip(&delta).map(|(ui, di)| ui + damping * di).collect();
            if let Ok(trial_eval) = sys.evaluate(&trial, t) {
                let trial_norm = crate::grid::sup_norm(&trial_eval.residual);
                if trial_eval.min_margin >= cfg.cone_margin && trial_norm < res_norm {
                    u.copy_from_slice(&trial);
                    eval = trial_eval;
                    res_norm = trial_norm;
                    accepted = true;
                    break;
                }
            }
            damping *= 0.5;
        }
        if !accepted {
            return Err(Error::LineSearchFailure {
                t,
                damping_min: cfg.damping_min,
                residual: res_norm,
            });
        }
    }
    if res_norm <= cfg.newton_tol {
        return Ok((cfg.max_newton_iters, res_norm, eval.min_margin));
    }
    Err(Error::NonConvergence { t, iterations: cfg.max_newton_iters, residual: res_norm })
}

fn bisectable(e: &Error) -> bool {
    matches!(
        e,
        Error::InfeasibleIterate { .. }
            | Error::LineSearchFailure { .. }
            | Error::NonConvergence { .. }
            | Error::LinearSolveFailure { .. }
            | Error::ConeViolation { .. }
    )
}

/// Marches the deformation parameter along the uniform schedule, warm
/// starting every solve from the previous iterate. A failed leg is
/// bisected toward the last solved t, up to the configured budget; every
/// intermediate success is recorded. `last_t` is -1 when nothing solved.
fn continuation<S: SystemOps>(
    sys: &mut S,
    u: &mut [f64],
    cfg: &SolverConfig,
) -> Result<Vec<StepRecord>> {
    let schedule = t_schedule(cfg.t_steps);
    let mut steps = Vec::new();
    let mut solved_t: Option<f64> = None;
    for &target in &schedule {
        let mut bisections = 0;
        let mut t_try = target;
        loop {
            let attempt = sys.prepare_t(t_try).and_then(|()| newton_solve(sys, u, t_try, cfg));
            match attempt {
                Ok((newton_iters, residual, min_margin)) => {
                    steps.push(StepRecord {
                        t: t_try,
                        newton_iters,
                        residual,
                        min_margin,
                        monitor: sys.monitor(u),
                    });
                    solved_t = Some(t_try);
                    if t_try == target {
                        break;
                    }
                    t_try = target;
                }
                Err(e)
                    if bisections < cfg.max_bisections
                        && bisectable(&e)
                        && solved_t.is_some() =>
                {
                    bisections += 1;
                    t_try = 0.5 * (solved_t.unwrap() + t_try);
                }
                Err(e) => {
                    return Err(Error::ContinuationFailure {
                        last_t: solved_t.unwrap_or(-1.0),
                        bisections,
                        source: Box::new(e),
                    });
                }
            }
        }
    }
    Ok(steps)
}

/// Shared scalar diagnostic: normalized derivative magnitudes plus the
/// worst semilinear curvature term. Bounded monitors across refinements
/// indicate the a priori estimates are active on the discrete level.
fn monitor_value(
    sup_grad_sq: f64,
    sup_hess_frob: f64,
    sup_exp: f64,
    min_sigma1_term: f64,
) -> f64 {
    (sup_grad_sq + sup_hess_frob) / (1.0 + sup_exp) + min_sigma1_term
}

// ---------------------------------------------------------------------------
// Box chart discretization
// ---------------------------------------------------------------------------

struct BoxSystem {
    grid: BoxGrid,
    n: usize,
    k: usize,
    bd: BoundaryData,
    a_g: SymMatrix,
    frame: Vec<f64>,
    f: Vec<f64>,
    rhs: RhsSpec,
    reference: Option<Reference>,
    class: Vec<PointClass>,
}

impl BoxSystem {
    fn new(problem: &Problem, grid: BoxGrid) -> Result<Self> {
        let n = problem.n;
        let a_g = problem.background.matrix(n)?;
        let reference = problem.reference.clone();
        let frame = match &reference {
            Some(r) => {
                let mut vals = Vec::with_capacity(grid.len());
                for p in 0..grid.len() {
                    vals.push(r.box_value(&grid.point_of(p))?);
                }
                vals
            }
            None => vec![0.0; grid.len()],
        };
        let class = (0..grid.len()).map(|p| grid.classify(p)).collect();
        let mut sys = BoxSystem {
            n,
            k: problem.k,
            bd: problem.boundary,
            a_g,
            frame,
            f: vec![1.0; grid.len()],
            rhs: problem.rhs.clone(),
            reference,
            class,
            grid,
        };
        match &sys.rhs {
            RhsSpec::One => {}
            RhsSpec::Constant(c) => sys.f = vec![*c; sys.grid.len()],
            RhsSpec::ManufacturedFixed => sys.f = sys.manufacture(1.0)?,
            RhsSpec::ManufacturedPath => sys.f = sys.manufacture(0.0)?,
        }
        Ok(sys)
    }

    fn spec(&self, t: f64) -> Result<FunctionalSpec> {
        FunctionalSpec::new(self.n, self.k, t)
    }

    /// f = F^t(A[reference]) e^{2 reference}, from analytic jets, so the
    /// discrete solve against it carries the full truncation error.
    fn manufacture(&self, t: f64) -> Result<Vec<f64>> {
        let reference = self.reference.as_ref().expect("validated");
        let spec = self.spec(t)?;
        let mut f = Vec::with_capacity(self.grid.len());
        for p in 0..self.grid.len() {
            let jet = reference.box_jet(&self.grid.point_of(p))?;
            let a = schouten_hat(&jet, &self.a_g)?;
            f.push(spec.matrix(&a)?.value * (2.0 * jet.u).exp());
        }
        Ok(f)
    }

    fn initial_guess(&self) -> Vec<f64> {
        // Frames need a reference, and the reference interpolant is the
        // natural feasible start.
        self.frame.clone()
    }

    fn reference_error(&self, u: &[f64]) -> Option<f64> {
        self.reference.as_ref().map(|_| {
            u.iter().zip(&self.frame).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
    }

    /// Ghost-closed first and second derivative fields of u.
    fn derivative_fields(&self, u: &[f64]) -> Result<(Vec<Field>, Vec<Field>)> {
        let uf = Field::from_values(u.to_vec());
        let ghost = self.grid.neumann_ghost_closure(&uf, &self.bd)?;
        let grad = self.grid.gradient_with_ghost(&uf, &ghost)?;
        let hess = self.grid.hessian_with_ghost(&uf, &ghost)?;
        Ok((grad, hess))
    }

    fn schouten_at(&self, p: usize, grad: &[Field], hess: &[Field]) -> SymMatrix {
        let n = self.n;
        let mut grad_sq = 0.0;
        for g in grad {
            let v = g.get(p);
            grad_sq += v * v;
        }
        let mut a = SymMatrix::zero(n);
        for i in 0..n {
            for j in i..n {
                let mut v = hess[hess_index(n, i, j)].get(p)
                    + grad[i].get(p) * grad[j].get(p)
                    + self.a_g.get(i, j);
                if i == j {
                    v -= 0.5 * grad_sq;
                }
                a.set(i, j, v);
            }
        }
        a
    }

    fn sigma_residual(&self, u: &[f64], p: usize) -> f64 {
        let s = 1; // normal axis is last and fastest
        let h = self.grid.spacing(self.n - 1);
        let u_n = (-3.0 * u[p] + 4.0 * u[p + s] - u[p + 2 * s]) / (2.0 * h);
        self.bd.residual(u[p], u_n)
    }
}

impl SystemOps for BoxSystem {
    fn prepare_t(&mut self, t: f64) -> Result<()> {
        if matches!(self.rhs, RhsSpec::ManufacturedPath) {
            self.f = self.manufacture(t)?;
        }
        Ok(())
    }

    fn evaluate(&self, u: &[f64], t: f64) -> Result<Evaluation> {
        let spec = self.spec(t)?;
        let (grad, hess) = self.derivative_fields(u)?;
        let mut residual = vec![0.0; self.grid.len()];
        let mut min_margin = f64::INFINITY;
        for p in 0..self.grid.len() {
            let a = self.schouten_at(p, &grad, &hess);
            match self.class[p] {
                PointClass::Interior => {
                    let mf = spec.matrix(&a).map_err(|e| infeasible_at(e, self.grid.point_of(p)))?;
                    min_margin = min_margin.min(worst_of(&mf.margins));
                    residual[p] = mf.value - self.f[p] * (-2.0 * u[p]).exp();
                }
                PointClass::SigmaFace => {
                    let m = spec.matrix_membership(&a)?;
                    if !m.inside {
                        return Err(Error::InfeasibleIterate {
                            point: self.grid.point_of(p),
                            margins: m.margins,
                        });
                    }
                    min_margin = min_margin.min(m.worst());
                    residual[p] = self.sigma_residual(u, p);
                }
                PointClass::Framed => {
                    let m = spec.matrix_membership(&a)?;
                    if !m.inside {
                        return Err(Error::InfeasibleIterate {
                            point: self.grid.point_of(p),
                            margins: m.margins,
                        });
                    }
                    min_margin = min_margin.min(m.worst());
                    residual[p] = u[p] - self.frame[p];
                }
            }
        }
        Ok(Evaluation { residual, min_margin })
    }

    fn jacobian(&self, u: &[f64], t: f64) -> Result<CsrMatrix> {
        let spec = self.spec(t)?;
        let (grad, hess) = self.derivative_fields(u)?;
        let n = self.n;
        let mut bld = CsrBuilder::new(self.grid.len());
        for p in 0..self.grid.len() {
            match self.class[p] {
                PointClass::Framed => bld.add(p, 1.0),
                PointClass::SigmaFace => {
                    let h = self.grid.spacing(n - 1);
                    let s = 1;
                    bld.add(p, -3.0 / (2.0 * h) + self.bd.mu_hat * (-u[p]).exp());
                    bld.add(p + s, 4.0 / (2.0 * h));
                    bld.add(p + 2 * s, -1.0 / (2.0 * h));
                }
                PointClass::Interior => {
                    let a = self.schouten_at(p, &grad, &hess);
                    let mf =
                        spec.matrix(&a).map_err(|e| infeasible_at(e, self.grid.point_of(p)))?;
                    let fp = &mf.derivative;
                    let trace = fp.trace();
                    // Transport coefficients 2 F' grad u - tr(F') grad u.
                    let mut b = vec![0.0; n];
                    for (j, bj) in b.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for i in 0..n {
                            acc += fp.get(i, j) * grad[i].get(p);
                        }
                        *bj = 2.0 * acc - trace * grad[j].get(p);
                    }
                    let mut diag = 2.0 * self.f[p] * (-2.0 * u[p]).exp();
                    for axis in 0..n {
                        let ha = self.grid.spacing(axis);
                        let s = stride_of(&self.grid, axis);
                        let faa = fp.get(axis, axis);
                        diag += -2.0 * faa / (ha * ha);
                        bld.add(p + s, faa / (ha * ha) + b[axis] / (2.0 * ha));
                        bld.add(p - s, faa / (ha * ha) - b[axis] / (2.0 * ha));
                    }
                    bld.add(p, diag);
                    for a1 in 0..n {
                        for a2 in a1 + 1..n {
                            let c = 2.0 * fp.get(a1, a2)
                                / (4.0 * self.grid.spacing(a1) * self.grid.spacing(a2));
                            if c == 0.0 {
                                continue;
                            }
                            let s1 = stride_of(&self.grid, a1);
                            let s2 = stride_of(&self.grid, a2);
                            bld.add(p + s1 + s2, c);
                            bld.add(p - s1 - s2, c);
                            bld.add(p + s1 - s2, -c);
                            bld.add(p - s1 + s2, -c);
                        }
                    }
                }
            }
            bld.finish_row();
        }
        bld.finish()
    }

    fn monitor(&self, u: &[f64]) -> f64 {
        let (grad, hess) = match self.derivative_fields(u) {
            Ok(v) => v,
            Err(_) => return f64::NAN,
        };
        let n = self.n;
        let mut sup_grad_sq = 0.0f64;
        let mut sup_hess = 0.0f64;
        let mut sup_exp = 0.0f64;
        let mut min_term = f64::INFINITY;
        for p in 0..self.grid.len() {
            let gsq: f64 = grad.iter().map(|g| g.get(p) * g.get(p)).sum();
            let mut frob = 0.0;
            let mut lap = 0.0;
            for i in 0..n {
                for j in i..n {
                    let v = hess[hess_index(n, i, j)].get(p);
                    frob += if i == j { v * v } else { 2.0 * v * v };
                    if i == j {
                        lap += v;
                    }
                }
            }
            sup_grad_sq = sup_grad_sq.max(gsq);
            sup_hess = sup_hess.max(frob.sqrt());
            sup_exp = sup_exp.max((-2.0 * u[p]).exp());
            min_term = min_term.min(lap - 0.5 * (n as f64 - 2.0) * gsq);
        }
        monitor_value(sup_grad_sq, sup_hess, sup_exp, min_term)
    }
}

fn stride_of(grid: &BoxGrid, axis: usize) -> usize {
    // Strides are implicit in the flat indexing: the product of the point
    // counts of all later axes.
    grid.points()[axis + 1..].iter().product()
}

fn worst_of(margins: &[f64]) -> f64 {
    margins.iter().fold(f64::INFINITY, |m, &v| m.min(v))
}

fn infeasible_at(e: Error, point: Vec<f64>) -> Error {
    match e {
        Error::ConeViolation { margins } => Error::InfeasibleIterate { point, margins },
        other => other,
    }
}

// ---------------------------------------------------------------------------
// Radial discretization
// ---------------------------------------------------------------------------

struct RadialSystem {
    grid: RadialGrid,
    n: usize,
    k: usize,
    bd: BoundaryData,
    a_iso: f64,
    outer: OuterClosure,
    frame: Vec<f64>,
    f: Vec<f64>,
    rhs: RhsSpec,
    reference: Option<Reference>,
}

impl RadialSystem {
    fn new(problem: &Problem, grid: RadialGrid) -> Result<Self> {
        let a_iso = problem.background.isotropic_value()?;
        let reference = problem.reference.clone();
        let frame = match &reference {
            Some(r) => (0..grid.points())
                .map(|i| r.radial_profile(grid.r(i)).map(|(u, _, _)| u))
                .collect::<Result<Vec<f64>>>()?,
            None => vec![0.0; grid.points()],
        };
        let mut sys = RadialSystem {
            n: problem.n,
            k: problem.k,
            bd: problem.boundary,
            a_iso,
            outer: problem.outer,
            frame,
            f: vec![1.0; grid.points()],
            rhs: problem.rhs.clone(),
            reference,
            grid,
        };
        match &sys.rhs {
            RhsSpec::One => {}
            RhsSpec::Constant(c) => sys.f = vec![*c; sys.grid.points()],
            RhsSpec::ManufacturedFixed => sys.f = sys.manufacture(1.0)?,
            RhsSpec::ManufacturedPath => sys.f = sys.manufacture(0.0)?,
        }
        Ok(sys)
    }

    fn spec(&self, t: f64) -> Result<FunctionalSpec> {
        FunctionalSpec::new(self.n, self.k, t)
    }

    fn manufacture(&self, t: f64) -> Result<Vec<f64>> {
        let reference = self.reference.as_ref().expect("validated");
        let spec = self.spec(t)?;
        let mut f = Vec::with_capacity(self.grid.points());
        for i in 0..self.grid.points() {
            let r = self.grid.r(i);
            let (u, u_r, u_rr) = reference.radial_profile(r)?;
            let (lr, lt) = radial_schouten_eigenvalues(u_r, u_rr, r)?;
            let lam = self.spectrum(lr, lt)?;
            f.push(spec.value(&lam)? * (2.0 * u).exp());
        }
        Ok(f)
    }

    fn spectrum(&self, lam_rad: f64, lam_tan: f64) -> Result<Spectrum> {
        let mut v = vec![lam_tan + self.a_iso; self.n];
        v[0] = lam_rad + self.a_iso;
        Spectrum::new(v)
    }

    fn initial_guess(&self) -> Vec<f64> {
        if self.reference.is_some() {
            return self.frame.clone();
        }
        // Constant level matched to the data scale: e^{-2u} f = F(A_g)
        // with the curvature floored away from zero, plus a strictly
        // convex bump whenever the background alone is not inside the
        // open cone (a flat constant field never is).
        let sigma1 = self.a_iso * self.n as f64;
        let base = sigma1.max(INITIAL_CURVATURE_FLOOR) / self.n as f64;
        let mean_f = match self.rhs {
            RhsSpec::Constant(c) => c,
            _ => 1.0,
        };
        let u0 = -0.5 * (base / mean_f).ln();
        let bump = if sigma1 < INITIAL_CURVATURE_FLOOR { BUMP_CURVATURE } else { 0.0 };
        (0..self.grid.points())
            .map(|i| {
                let r = self.grid.r(i);
                u0 + 0.5 * bump * r * r
            })
            .collect()
    }

    fn reference_error(&self, u: &[f64]) -> Option<f64> {
        self.reference.as_ref().map(|_| {
            u.iter().zip(&self.frame).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
    }

    /// Radial derivative values with the origin closed by evenness and the
    /// outer end closed one-sidedly (framed) or through the Neumann mirror
    /// (so the cone margins there reflect the imposed derivative).
    fn radial_derivatives(&self, u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let uf = Field::from_values(u.to_vec());
        let d1 = self.grid.deriv1(&uf)?;
        let d2 = self.grid.deriv2(&uf)?;
        let mut u_r: Vec<f64> = d1.as_slice().to_vec();
        let mut u_rr: Vec<f64> = d2.as_slice().to_vec();
        if self.outer == OuterClosure::Sigma {
            let m = self.grid.points();
            let h = self.grid.spacing();
            let ghost = self.grid.outer_ghost(&uf, &self.bd)?;
            u_r[m - 1] = (ghost - u[m - 2]) / (2.0 * h);
            u_rr[m - 1] = (u[m - 2] - 2.0 * u[m - 1] + ghost) / (h * h);
        }
        Ok((u_r, u_rr))
    }

    fn lambda_at(&self, i: usize, u_r: &[f64], u_rr: &[f64]) -> Result<Spectrum> {
        let (lr, lt) = radial_schouten_eigenvalues(u_r[i], u_rr[i], self.grid.r(i))?;
        self.spectrum(lr, lt)
    }

    fn outer_sigma_residual(&self, u: &[f64]) -> f64 {
        let m = self.grid.points();
        let h = self.grid.spacing();
        let u_r = (3.0 * u[m - 1] - 4.0 * u[m - 2] + u[m - 3]) / (2.0 * h);
        self.bd.residual(u[m - 1], -u_r)
    }
}

impl SystemOps for RadialSystem {
    fn prepare_t(&mut self, t: f64) -> Result<()> {
        if matches!(self.rhs, RhsSpec::ManufacturedPath) {
            self.f = self.manufacture(t)?;
        }
        Ok(())
    }

    fn evaluate(&self, u: &[f64], t: f64) -> Result<Evaluation> {
        let spec = self.spec(t)?;
        let (u_r, u_rr) = self.radial_derivatives(u)?;
        let m = self.grid.points();
        let mut residual = vec![0.0; m];
        let mut min_margin = f64::INFINITY;
        for i in 0..m {
            let lam = self.lambda_at(i, &u_r, &u_rr)?;
            let mem = spec.membership(&lam)?;
            if !mem.inside {
                return Err(Error::InfeasibleIterate {
                    point: vec![self.grid.r(i)],
                    margins: mem.margins,
                });
            }
            min_margin = min_margin.min(mem.worst());
            residual[i] = if i == m - 1 {
                match self.outer {
                    OuterClosure::Frame => u[i] - self.frame[i],
                    OuterClosure::Sigma => self.outer_sigma_residual(u),
                }
            } else {
                spec.value(&lam).map_err(|e| infeasible_at(e, vec![self.grid.r(i)]))?
                    - self.f[i] * (-2.0 * u[i]).exp()
            };
        }
        Ok(Evaluation { residual, min_margin })
    }

    fn jacobian(&self, u: &[f64], t: f64) -> Result<CsrMatrix> {
        let spec = self.spec(t)?;
        let (u_r, u_rr) = self.radial_derivatives(u)?;
        let m = self.grid.points();
        let h = self.grid.spacing();
        let mut bld = CsrBuilder::new(m);
        for i in 0..m {
            if i == m - 1 {
                match self.outer {
                    OuterClosure::Frame => bld.add(i, 1.0),
                    OuterClosure::Sigma => {
                        // residual = -u_r(R) + mu - mu_hat e^{-u}.
                        bld.add(i, -3.0 / (2.0 * h) + self.bd.mu_hat * (-u[i]).exp());
                        bld.add(i - 1, 4.0 / (2.0 * h));
                        bld.add(i - 2, -1.0 / (2.0 * h));
                    }
                }
                bld.finish_row();
                continue;
            }
            let lam = self.lambda_at(i, &u_r, &u_rr)?;
            let grad = spec
                .gradient(&lam)
                .map_err(|e| infeasible_at(e, vec![self.grid.r(i)]))?;
            let g_rad = grad[0];
            let g_tan: f64 = grad[1..].iter().sum();
            let zeroth = 2.0 * self.f[i] * (-2.0 * u[i]).exp();
            if i == 0 {
                // Both eigenvalues reduce to u_rr at the origin and the
                // even second-derivative stencil is 2(u_1 - u_0)/h^2.
                let c = (g_rad + g_tan) * 2.0 / (h * h);
                bld.add(0, -c + zeroth);
                bld.add(1, c);
            } else {
                let r = self.grid.r(i);
                let c_rr = g_rad;
                let c_r = g_rad * u_r[i] + g_tan * (1.0 / r - u_r[i]);
                bld.add(i - 1, c_rr / (h * h) - c_r / (2.0 * h));
                bld.add(i, -2.0 * c_rr / (h * h) + zeroth);
                bld.add(i + 1, c_rr / (h * h) + c_r / (2.0 * h));
            }
            bld.finish_row();
        }
        bld.finish()
    }

    fn monitor(&self, u: &[f64]) -> f64 {
        let (u_r, u_rr) = match self.radial_derivatives(u) {
            Ok(v) => v,
            Err(_) => return f64::NAN,
        };
        let n = self.n as f64;
        let mut sup_grad_sq = 0.0f64;
        let mut sup_hess = 0.0f64;
        let mut sup_exp = 0.0f64;
        let mut min_term = f64::INFINITY;
        for i in 0..self.grid.points() {
            let r = self.grid.r(i);
            let tangential = if i == 0 { u_rr[0] } else { u_r[i] / r };
            let gsq = u_r[i] * u_r[i];
            let frob = (u_rr[i] * u_rr[i] + (n - 1.0) * tangential * tangential).sqrt();
            let lap = u_rr[i] + (n - 1.0) * tangential;
            sup_grad_sq = sup_grad_sq.max(gsq);
            sup_hess = sup_hess.max(frob);
            sup_exp = sup_exp.max((-2.0 * u[i]).exp());
            min_term = min_term.min(lap - 0.5 * (n - 2.0) * gsq);
        }
        monitor_value(sup_grad_sq, sup_hess, sup_exp, min_term)
    }
}
