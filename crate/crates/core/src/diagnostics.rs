//! Analysis quantities computed by inner solves: `x*(y,z)`, `u*(x,y,z)`,
//! `x̄*(z)`, the potentials `V` and `V̄`, stationarity residuals, and
//! numerical audits of the error-bound and variance inequalities.
//!
//! Everything here calls exact gradients and is meant for tests and audits,
//! not for the iteration itself.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::PolyhedralSet;
use crate::linalg::{axpy, dist, dot, norm, norm_sq, Matrix, Vector};
use crate::objective::Objective;
use crate::oracles::OracleKind;
use crate::problem::ConstrainedProblem;
use crate::rng::SeededRng;
use crate::solvers::{Monitor, SolverParams, SolverState, PROJECTION_TOL};

/// Inequalities count as violated when `lhs > rhs + REL·max(|lhs|,|rhs|) + ABS`.
pub const AUDIT_REL_TOL: f64 = 1e-6;
/// Absolute floor absorbing inner-solve error.
pub const AUDIT_ABS_TOL: f64 = 1e-8;
/// Denominator floor of the Hoffman ratio.
pub const HOFFMAN_FLOOR: f64 = 1e-12;

/// Safety factor on smoothness constants fed to the inner solver.
const SMOOTHNESS_MARGIN: f64 = 1.0 + 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSolveResult {
    pub minimizer: Vector,
    pub value: f64,
    /// `L‖x − proj_X(x − ∇F(x)/L)‖` at the minimizer.
    pub residual: f64,
    pub iterations: usize,
}

/// `x̄*(z)` with the multiplier and penalty reached by the augmented
/// Lagrangian loop; both seed warm starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XbarSolution {
    pub result: InnerSolveResult,
    pub multiplier: Vector,
    pub penalty: f64,
}

fn check_modulus(p: &ConstrainedProblem, mu: f64) -> Result<()> {
    let lf = p.lipschitz();
    if !(mu > lf) {
        return Err(Error::InvalidArgument(format!(
            "inner problems need mu > L_f (mu = {mu}, L_f = {lf})"
        )));
    }
    Ok(())
}

/// Accelerated projected gradient for an `m`-strongly convex, `l`-smooth
/// function, with gradient-based momentum restarts.
fn apg(
    set: &PolyhedralSet,
    start: &[f64],
    l: f64,
    m: f64,
    opts: &InnerOptions,
    grad: &dyn Fn(&[f64]) -> Vector,
) -> Result<(Vector, f64, usize)> {
    let kappa = (l / m).max(1.0).sqrt();
    let q = (kappa - 1.0) / (kappa + 1.0);
    let mut x = set.project(start, PROJECTION_TOL)?;
    let mut yk = x.clone();
    let mut last = f64::INFINITY;
    for k in 0..opts.max_iter {
        let g = grad(&yk);
        let mut xn = yk.clone();
        axpy(-1.0 / l, &g, &mut xn);
        set.project_into(&mut xn, PROJECTION_TOL)?;
        last = l * dist(&yk, &xn);
        if last <= opts.tol {
            // Certify at the feasible point xn.
            let gx = grad(&xn);
            let mut probe = xn.clone();
            axpy(-1.0 / l, &gx, &mut probe);
            set.project_into(&mut probe, PROJECTION_TOL)?;
            let res = l * dist(&xn, &probe);
            if res <= opts.tol {
                return Ok((xn, res, k + 1));
            }
        }
        let restart = yk.iter().zip(&xn).zip(&x).map(|((a, b), c)| (a - b) * (b - c)).sum::<f64>() > 0.0;
        let mom = if restart { 0.0 } else { q };
        let next: Vector = xn.iter().zip(&x).map(|(a, b)| a + mom * (a - b)).collect();
        x = xn;
        yk = next;
    }
    Err(Error::InnerSolveFailed {
        iterations: opts.max_iter,
        residual: last,
        tol: opts.tol,
    })
}

fn k_smoothness(p: &ConstrainedProblem, rho: f64, mu: f64) -> f64 {
    (p.lipschitz() + rho * p.norm_a * p.norm_a + mu) * SMOOTHNESS_MARGIN
}

/// `x*(y,z) = argmin_{x∈X} K(x,y,z)` started from `start`.
#[allow(clippy::too_many_arguments)]
pub fn inner_solve_x_star_from(
    p: &ConstrainedProblem,
    y: &[f64],
    z: &[f64],
    mu: f64,
    rho: f64,
    opts: &InnerOptions,
    start: &[f64],
) -> Result<InnerSolveResult> {
    check_modulus(p, mu)?;
    check_dim("dual point", p.num_constraints(), y.len())?;
    check_dim("proximal center", p.dim(), z.len())?;
    check_dim("warm start", p.dim(), start.len())?;
    let l = k_smoothness(p, rho, mu);
    let grad = |x: &[f64]| p.prox_al_grad(x, y, z, rho, mu).expect("shapes checked");
    let (x, residual, iterations) = apg(&p.set, start, l, mu - p.lipschitz(), opts, &grad)?;
    Ok(InnerSolveResult {
        value: p.k_value(&x, y, z, rho, mu)?,
        minimizer: x,
        residual,
        iterations,
    })
}

pub fn inner_solve_x_star(
    p: &ConstrainedProblem,
    y: &[f64],
    z: &[f64],
    mu: f64,
    rho: f64,
    opts: &InnerOptions,
) -> Result<InnerSolveResult> {
    inner_solve_x_star_from(p, y, z, mu, rho, opts, z)
}

/// `u*(x,y,z) = argmin_{u∈X} K(u,y,z) + (λ/2)‖u − x‖²`; the reported value
/// is `φ_{1/λ}(x,y,z)`.
#[allow(clippy::too_many_arguments)]
pub fn inner_solve_u_star_from(
    p: &ConstrainedProblem,
    x: &[f64],
    y: &[f64],
    z: &[f64],
    params: &SolverParams,
    opts: &InnerOptions,
    start: &[f64],
) -> Result<InnerSolveResult> {
    let (mu, rho, lambda) = (params.mu, params.rho, params.lambda);
    check_modulus(p, mu)?;
    check_dim("primal point", p.dim(), x.len())?;
    check_dim("dual point", p.num_constraints(), y.len())?;
    check_dim("proximal center", p.dim(), z.len())?;
    check_dim("warm start", p.dim(), start.len())?;
    let l = k_smoothness(p, rho, mu) + lambda;
    let grad = |u: &[f64]| {
        let mut g = p.prox_al_grad(u, y, z, rho, mu).expect("shapes checked");
        for ((gi, ui), xi) in g.iter_mut().zip(u).zip(x) {
            *gi += lambda * (ui - xi);
        }
        g
    };
    let (u, residual, iterations) = apg(&p.set, start, l, mu - p.lipschitz() + lambda, opts, &grad)?;
    Ok(InnerSolveResult {
        value: p.k_value(&u, y, z, rho, mu)? + 0.5 * lambda * dist(&u, x).powi(2),
        minimizer: u,
        residual,
        iterations,
    })
}

pub fn inner_solve_u_star(
    p: &ConstrainedProblem,
    x: &[f64],
    y: &[f64],
    z: &[f64],
    params: &SolverParams,
    opts: &InnerOptions,
) -> Result<InnerSolveResult> {
    inner_solve_u_star_from(p, x, y, z, params, opts, x)
}

/// Checks `X ∩ {Ax = b} ≠ ∅` by projecting `z` onto the combined polyhedron.
fn feasible_set_check(p: &ConstrainedProblem, z: &[f64], residual: f64) -> Result<()> {
    let (h, hv) = p.set.to_halfspaces();
    let n = p.dim();
    let mut rows: Vec<Vec<f64>> = h.to_rows();
    let mut rhs = hv;
    for i in 0..p.num_constraints() {
        rows.push(p.a.row(i).to_vec());
        rhs.push(p.b[i]);
        rows.push(p.a.row(i).iter().map(|v| -v).collect());
        rhs.push(-p.b[i]);
    }
    let set = PolyhedralSet::halfspaces(Matrix::from_rows(&rows, n)?, rhs, false)?;
    match set.project(z, 1e-8) {
        Err(Error::InfeasibleSet { .. }) => Err(Error::SubproblemInfeasible { residual }),
        _ => Ok(()),
    }
}

/// `x̄*(z) = argmin_{x∈X, Ax=b} f(x) + (μ/2)‖x−z‖²`, solved by an augmented
/// Lagrangian loop over `inner_solve_x_star` with penalty increased tenfold
/// whenever feasibility fails to drop by a factor four.
pub fn inner_solve_xbar_from(
    p: &ConstrainedProblem,
    z: &[f64],
    mu: f64,
    opts: &InnerOptions,
    warm: Option<&XbarSolution>,
) -> Result<XbarSolution> {
    check_modulus(p, mu)?;
    check_dim("proximal center", p.dim(), z.len())?;
    let m = p.num_constraints();
    if m == 0 || p.norm_a == 0.0 {
        if p.b.iter().any(|v| *v != 0.0) {
            return Err(Error::SubproblemInfeasible { residual: norm(&p.b) });
        }
        let start = warm.map_or(z, |w| w.result.minimizer.as_slice());
        let result = inner_solve_x_star_from(p, &vec![0.0; m], z, mu, 0.0, opts, start)?;
        let value = p.objective.value(&result.minimizer) + 0.5 * mu * dist(&result.minimizer, z).powi(2);
        return Ok(XbarSolution {
            result: InnerSolveResult { value, ..result },
            multiplier: vec![0.0; m],
            penalty: 0.0,
        });
    }
    let rho0 = (mu / (p.norm_a * p.norm_a)).max(1e-6);
    let (mut y, mut rho, mut x) = match warm {
        Some(w) if w.multiplier.len() == m && w.result.minimizer.len() == p.dim() => {
            (w.multiplier.clone(), w.penalty.max(rho0), w.result.minimizer.clone())
        }
        _ => (vec![0.0; m], rho0, z.to_vec()),
    };
    let rho_cap = rho0 * 1e12;
    let mut prev = f64::INFINITY;
    let mut checked = false;
    for _ in 0..500 {
        let sub = inner_solve_x_star_from(p, &y, z, mu, rho, opts, &x)?;
        let r = p.residual(&sub.minimizer);
        let feas = norm(&r);
        axpy(rho, &r, &mut y);
        x = sub.minimizer.clone();
        if feas <= opts.tol {
            // Lagrangian value: first-order correct in the leftover residual.
            let value = p.objective.value(&x) + 0.5 * mu * dist(&x, z).powi(2) + dot(&y, &r);
            return Ok(XbarSolution {
                result: InnerSolveResult {
                    minimizer: x,
                    value,
                    residual: sub.residual,
                    iterations: sub.iterations,
                },
                multiplier: y,
                penalty: rho,
            });
        }
        if feas > 0.25 * prev {
            rho *= 10.0;
        }
        if !checked && rho > rho0 * 1e6 {
            feasible_set_check(p, z, feas)?;
            checked = true;
        }
        if rho > rho_cap {
            return Err(Error::SubproblemInfeasible { residual: feas });
        }
        prev = feas;
    }
    Err(Error::InnerSolveFailed {
        iterations: 500,
        residual: prev,
        tol: opts.tol,
    })
}

pub fn inner_solve_xbar(p: &ConstrainedProblem, z: &[f64], mu: f64, opts: &InnerOptions) -> Result<InnerSolveResult> {
    Ok(inner_solve_xbar_from(p, z, mu, opts, None)?.result)
}

/// `∇Ψ(z) = μ(z − x̄*(z))`.
pub fn moreau_grad(p: &ConstrainedProblem, z: &[f64], mu: f64, opts: &InnerOptions) -> Result<Vector> {
    let xbar = inner_solve_xbar(p, z, mu, opts)?;
    Ok(z.iter().zip(&xbar.minimizer).map(|(a, b)| mu * (a - b)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityResidual {
    /// Element of `∇f(x') + Aᵀy + ∂I_X(x')`.
    pub v: Vector,
    pub norm: f64,
    /// `‖x − x'‖/s`, the gradient mapping at `x`.
    pub map_norm: f64,
    pub x_prime: Vector,
    pub feasibility: f64,
}

/// Gradient-mapping stationarity of `(x, y)` with step `s = 1/lk`.
///
/// With `x' = proj_X(x − s g)`, `g = ∇f(x) + Aᵀy`, and `w = (x − x')/s`, the
/// vector `v = w + ∇f(x') − ∇f(x)` lies in `∇f(x') + Aᵀy + ∂I_X(x')`.
pub fn stationarity_residual(p: &ConstrainedProblem, x: &[f64], y: &[f64], lk: f64) -> Result<StationarityResidual> {
    check_dim("primal point", p.dim(), x.len())?;
    check_dim("dual point", p.num_constraints(), y.len())?;
    if !(lk > 0.0 && lk.is_finite()) {
        return Err(Error::InvalidArgument(format!("step constant must be positive, got {lk}")));
    }
    let s = 1.0 / lk;
    let gx = p.objective.grad(x);
    let mut g = gx.clone();
    if p.num_constraints() > 0 {
        axpy(1.0, &p.a.tmul_vec(y), &mut g);
    }
    let mut xp = x.to_vec();
    axpy(-s, &g, &mut xp);
    p.set.project_into(&mut xp, PROJECTION_TOL)?;
    let gxp = p.objective.grad(&xp);
    let w: Vector = x.iter().zip(&xp).map(|(a, b)| (a - b) / s).collect();
    let v: Vector = w.iter().zip(gxp.iter().zip(&gx)).map(|(wi, (a, b))| wi + a - b).collect();
    Ok(StationarityResidual {
        norm: norm(&v),
        map_norm: norm(&w),
        feasibility: p.feasibility(&xp),
        x_prime: xp,
        v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialTerms {
    /// `φ_{1/λ}(x,y,z)`.
    pub phi: f64,
    /// `d(y,z)`.
    pub d: f64,
    /// `Ψ(z)`.
    pub psi: f64,
    /// `K(x,y,z)`.
    pub k: f64,
}

impl PotentialTerms {
    /// `V = φ − 2d + 2Ψ`.
    pub fn v(&self) -> f64 {
        self.phi - 2.0 * self.d + 2.0 * self.psi
    }

    /// `K − 2d + 2Ψ`, the part of `V̄` without the variance term.
    pub fn k_based(&self) -> f64 {
        self.k - 2.0 * self.d + 2.0 * self.psi
    }
}

/// Potential evaluation with warm starts carried between calls.
#[derive(Debug, Clone, Default)]
pub struct PotentialEvaluator {
    pub opts: InnerOptions,
    warm_u: Option<Vector>,
    warm_x: Option<Vector>,
    warm_xbar: Option<XbarSolution>,
}

impl PotentialEvaluator {
    pub fn new(opts: InnerOptions) -> Self {
        Self {
            opts,
            ..Self::default()
        }
    }

    pub fn terms(
        &mut self,
        p: &ConstrainedProblem,
        params: &SolverParams,
        x: &[f64],
        y: &[f64],
        z: &[f64],
    ) -> Result<PotentialTerms> {
        let (mu, rho) = (params.mu, params.rho);
        let u_start = self.warm_u.clone().unwrap_or_else(|| x.to_vec());
        let u = inner_solve_u_star_from(p, x, y, z, params, &self.opts, &u_start)?;
        let x_start = self.warm_x.clone().unwrap_or_else(|| z.to_vec());
        let xs = inner_solve_x_star_from(p, y, z, mu, rho, &self.opts, &x_start)?;
        let xbar = inner_solve_xbar_from(p, z, mu, &self.opts, self.warm_xbar.as_ref())?;
        let terms = PotentialTerms {
            phi: u.value,
            d: xs.value,
            psi: xbar.result.value,
            k: p.k_value(x, y, z, rho, mu)?,
        };
        self.warm_u = Some(u.minimizer);
        self.warm_x = Some(xs.minimizer);
        self.warm_xbar = Some(xbar);
        Ok(terms)
    }
}

impl Monitor for PotentialEvaluator {
    fn potential(&mut self, p: &ConstrainedProblem, params: &SolverParams, state: &SolverState) -> Result<Option<f64>> {
        Ok(Some(self.terms(p, params, &state.x, &state.y, &state.z)?.v()))
    }
}

pub fn potential_terms(
    p: &ConstrainedProblem,
    params: &SolverParams,
    x: &[f64],
    y: &[f64],
    z: &[f64],
    opts: &InnerOptions,
) -> Result<PotentialTerms> {
    PotentialEvaluator::new(*opts).terms(p, params, x, y, z)
}

/// `V = φ_{1/λ}(x,y,z) − 2d(y,z) + 2Ψ(z)`.
pub fn potential_value(
    p: &ConstrainedProblem,
    params: &SolverParams,
    x: &[f64],
    y: &[f64],
    z: &[f64],
    opts: &InnerOptions,
) -> Result<f64> {
    Ok(potential_terms(p, params, x, y, z, opts)?.v())
}

/// `V̄ = K(x,y,z) − 2d(y,z) + 2Ψ(z) + ‖∇̂f − ∇f(x)‖²/(48(L_0²+L_f²)τ)` for
/// one realization of the estimator.
#[allow(clippy::too_many_arguments)]
pub fn potential_bar(
    p: &ConstrainedProblem,
    params: &SolverParams,
    x: &[f64],
    y: &[f64],
    z: &[f64],
    grad_est: &[f64],
    opts: &InnerOptions,
) -> Result<f64> {
    check_dim("gradient estimate", p.dim(), grad_est.len())?;
    let terms = potential_terms(p, params, x, y, z, opts)?;
    let err = dist(grad_est, &p.objective.grad(x)).powi(2);
    let scale = 48.0 * (params.l0 * params.l0 + params.lf * params.lf) * params.tau;
    let extra = if err == 0.0 {
        0.0
    } else if scale > 0.0 {
        err / scale
    } else {
        f64::INFINITY
    };
    Ok(terms.k_based() + extra)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub lemma: String,
    pub trials: usize,
    /// `min(rhs − lhs)` over trials.
    pub worst_slack: f64,
    pub violations: usize,
}

impl AuditReport {
    fn new(lemma: &str) -> Self {
        Self {
            lemma: lemma.to_string(),
            trials: 0,
            worst_slack: f64::INFINITY,
            violations: 0,
        }
    }

    /// Records one instance of `lhs ≤ rhs`.
    pub fn check(&mut self, lhs: f64, rhs: f64) {
        self.trials += 1;
        let slack = rhs - lhs;
        self.worst_slack = self.worst_slack.min(slack);
        let allowance = AUDIT_REL_TOL * lhs.abs().max(rhs.abs()) + AUDIT_ABS_TOL;
        if !(slack >= -allowance) {
            self.violations += 1;
        }
    }

    fn merge(&mut self, other: &AuditReport) {
        self.trials += other.trials;
        self.worst_slack = self.worst_slack.min(other.worst_slack);
        self.violations += other.violations;
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// A random point of `X`: uniform in a bounded box, otherwise the projection
/// of a centered Gaussian with standard deviation `scale`.
pub fn random_point(set: &PolyhedralSet, rng: &mut SeededRng, scale: f64) -> Result<Vector> {
    if let PolyhedralSet::Box { lo, hi } = set {
        if set.is_bounded() {
            return Ok(lo.iter().zip(hi).map(|(&l, &h)| rng.uniform_in(l, h)).collect());
        }
    }
    let g: Vector = rng.normal_vec(set.dim()).into_iter().map(|v| scale * v).collect();
    set.project(&g, PROJECTION_TOL)
}

fn random_dual(m: usize, rng: &mut SeededRng, scale: f64) -> Vector {
    rng.normal_vec(m).into_iter().map(|v| scale * v).collect()
}

/// Names of the seven error-bound inequalities, in audit order.
pub const ERROR_BOUND_IDS: [&str; 7] = [
    "x_to_xstar_via_prox_gap",
    "prox_gap_below_xstar_gap",
    "prox_point_dual_lipschitz",
    "prox_point_center_lipschitz",
    "xstar_center_lipschitz",
    "xstar_dual_lipschitz",
    "xbar_center_lipschitz",
];

/// Samples `(x, z, z' ∈ X; y, y')` and checks the seven error-bound
/// inequalities with `γ = (μ−L_f)λ/(μ−L_f+λ)`, `γ_s = μ−L_f+λ`,
/// `γ_K = μ−L_f`. One report per inequality.
pub fn audit_error_bounds(
    p: &ConstrainedProblem,
    params: &SolverParams,
    trials: usize,
    rng: &SeededRng,
    dual_scale: f64,
    opts: &InnerOptions,
) -> Result<Vec<AuditReport>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    check_modulus(p, params.mu)?;
    let (mu, rho, lambda, lf) = (params.mu, params.rho, params.lambda, p.lipschitz());
    let gamma = (mu - lf) * lambda / (mu - lf + lambda);
    let gamma_s = mu - lf + lambda;
    let gamma_k = mu - lf;
    let na = p.norm_a;
    let m = p.num_constraints();
    let per_trial: Vec<Result<[(f64, f64); 7]>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.derive(i as u64);
            let x = random_point(&p.set, &mut r, dual_scale)?;
            let z = random_point(&p.set, &mut r, dual_scale)?;
            let z2 = random_point(&p.set, &mut r, dual_scale)?;
            let y = random_dual(m, &mut r, dual_scale);
            let y2 = random_dual(m, &mut r, dual_scale);
            let u = inner_solve_u_star(p, &x, &y, &z, params, opts)?.minimizer;
            let u_y2 = inner_solve_u_star(p, &x, &y2, &z, params, opts)?.minimizer;
            let u_z2 = inner_solve_u_star(p, &x, &y, &z2, params, opts)?.minimizer;
            let xs = inner_solve_x_star(p, &y, &z, mu, rho, opts)?.minimizer;
            let xs_z2 = inner_solve_x_star(p, &y, &z2, mu, rho, opts)?.minimizer;
            let xs_y2 = inner_solve_x_star(p, &y2, &z, mu, rho, opts)?.minimizer;
            let xb = inner_solve_xbar(p, &z, mu, opts)?.minimizer;
            let xb_z2 = inner_solve_xbar(p, &z2, mu, opts)?.minimizer;
            let dz = dist(&z, &z2);
            let dy = dist(&y, &y2);
            Ok([
                (dist(&x, &xs), lambda / gamma * dist(&x, &u)),
                (dist(&u, &x), dist(&x, &xs)),
                (dist(&u, &u_y2), na / gamma_s * dy),
                (dist(&u_z2, &u), mu / gamma_s * dz),
                (dist(&xs_z2, &xs), mu / (mu - lf) * dz),
                (dist(&xs_y2, &xs), na / gamma_k * dy),
                (dist(&xb, &xb_z2), mu / (mu - lf) * dz),
            ])
        })
        .collect();
    let mut reports: Vec<AuditReport> = ERROR_BOUND_IDS.iter().map(|id| AuditReport::new(id)).collect();
    for t in per_trial {
        for (rep, (lhs, rhs)) in reports.iter_mut().zip(t?) {
            rep.check(lhs, rhs);
        }
    }
    Ok(reports)
}

/// Collapses per-inequality reports into one.
pub fn combine_reports(lemma: &str, reports: &[AuditReport]) -> AuditReport {
    let mut out = AuditReport::new(lemma);
    for r in reports {
        out.merge(r);
    }
    out
}

/// `‖x*(y,z) − x̄*(z)‖ / max(‖Ax*(y,z) − b‖, floor)` over sampled `(y, z)`,
/// in sampling order.
pub fn hoffman_ratios(
    p: &ConstrainedProblem,
    params: &SolverParams,
    trials: usize,
    rng: &SeededRng,
    dual_scale: f64,
    opts: &InnerOptions,
) -> Result<Vec<f64>> {
    check_modulus(p, params.mu)?;
    let m = p.num_constraints();
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.derive(i as u64);
            let z = random_point(&p.set, &mut r, dual_scale)?;
            let y = random_dual(m, &mut r, dual_scale);
            let xs = inner_solve_x_star(p, &y, &z, params.mu, params.rho, opts)?.minimizer;
            let xb = inner_solve_xbar(p, &z, params.mu, opts)?.minimizer;
            Ok(dist(&xs, &xb) / p.feasibility(&xs).max(HOFFMAN_FLOOR))
        })
        .collect()
}

/// Empirical lower estimate of the error-bound constant `σ̄`.
pub fn hoffman_estimate(
    p: &ConstrainedProblem,
    params: &SolverParams,
    trials: usize,
    rng: &SeededRng,
    dual_scale: f64,
    opts: &InnerOptions,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let r = hoffman_ratios(p, params, trials, rng, dual_scale, opts)?;
    Ok(r.into_iter().fold(0.0, f64::max))
}

/// Checks `V(x,y,z) ≥ f̲` on sampled `(x ∈ X, y, z ∈ X)`.
pub fn audit_potential_lower_bound(
    p: &ConstrainedProblem,
    params: &SolverParams,
    trials: usize,
    rng: &SeededRng,
    dual_scale: f64,
    opts: &InnerOptions,
) -> Result<AuditReport> {
    let lower = p
        .objective
        .lower_bound
        .ok_or_else(|| Error::InvalidArgument("the objective has no declared lower bound".into()))?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let m = p.num_constraints();
    let values: Vec<Result<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.derive(i as u64);
            let x = random_point(&p.set, &mut r, dual_scale)?;
            let z = random_point(&p.set, &mut r, dual_scale)?;
            let y = random_dual(m, &mut r, dual_scale);
            potential_value(p, params, &x, &y, &z, opts)
        })
        .collect();
    let mut rep = AuditReport::new("potential-lower-bound");
    for v in values {
        rep.check(lower, v?);
    }
    Ok(rep)
}

/// Largest number of finite-sum atoms the variance audit enumerates.
pub const MAX_ENUMERATED_ATOMS: usize = 16;

/// `E‖Z‖²` and `E‖D(x)‖²` for one STORM step, where `D(x) = ∇f(x,ξ) − ∇f(x)`
/// and `Z = D(x_new) − (1−α)D(x_old)`.
fn storm_moments(f: &Objective, kind: OracleKind, x_old: &[f64], x_new: &[f64], alpha: f64) -> Result<(f64, f64)> {
    match kind {
        OracleKind::Exact => Ok((0.0, 0.0)),
        OracleKind::AdditiveNoise { sigma } => Ok((alpha * alpha * sigma * sigma, sigma * sigma)),
        OracleKind::FiniteSum => {
            let m = f
                .num_components()
                .ok_or(Error::UnsupportedOracle("finite-sum sampling of this objective"))?;
            if m > MAX_ENUMERATED_ATOMS {
                return Err(Error::UnsupportedOracle("enumeration of more than 16 atoms"));
            }
            let g_new = f.grad(x_new);
            let g_old = f.grad(x_old);
            let (mut ez, mut var) = (0.0, 0.0);
            for i in 0..m {
                let a = f.component_grad(i, x_new)?;
                let b = f.component_grad(i, x_old)?;
                let mut zsq = 0.0;
                let mut dsq = 0.0;
                for k in 0..a.len() {
                    let d_new = a[k] - g_new[k];
                    let d_old = b[k] - g_old[k];
                    let zk = d_new - (1.0 - alpha) * d_old;
                    zsq += zk * zk;
                    dsq += d_new * d_new;
                }
                ez += zsq;
                var += dsq;
            }
            Ok((ez / m as f64, var / m as f64))
        }
    }
}

/// Exact check of the STORM variance recursion along `points = [x_0, x_1, …]`.
///
/// With `s_t = E‖∇̂f_t − ∇f(x_t)‖²` (starting from `s0`) and fresh samples
/// each step, `s_{t+1} = (1−α)²s_t + E‖Z_t‖²` exactly. Each step is compared
/// with `(1−α)²s_t + 3(L_0²+L_f²)‖x_{t+1}−x_t‖² + 3α²σ²`, where `σ²` is the
/// largest oracle variance over the supplied points.
pub fn audit_storm_recursion(
    f: &Objective,
    kind: OracleKind,
    points: &[Vector],
    alpha: f64,
    s0: f64,
    l0: f64,
    lf: f64,
) -> Result<AuditReport> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    for x in points {
        check_dim("iterate", f.dim(), x.len())?;
    }
    let mut sigma2: f64 = 0.0;
    let mut moments = Vec::with_capacity(points.len().saturating_sub(1));
    for w in points.windows(2) {
        let (ez, var_new) = storm_moments(f, kind, &w[0], &w[1], alpha)?;
        let (_, var_old) = storm_moments(f, kind, &w[1], &w[0], alpha)?;
        sigma2 = sigma2.max(var_new).max(var_old);
        moments.push(ez);
    }
    let keep = (1.0 - alpha) * (1.0 - alpha);
    let mut rep = AuditReport::new("storm-recursion");
    let mut s = s0;
    for (w, ez) in points.windows(2).zip(moments) {
        let next = keep * s + ez;
        let bound = keep * s + 3.0 * (l0 * l0 + lf * lf) * norm_sq(&crate::linalg::sub(&w[1], &w[0])) + 3.0 * alpha * alpha * sigma2;
        rep.check(next, bound);
        s = next;
    }
    Ok(rep)
}

/// Monte-Carlo maxima for the safeguard threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MyBounds {
    /// `max_{x,z∈X} K(x,0,z) − 2d(0,z) + 2Ψ(z)`.
    pub m_v: f64,
    /// `max_{x,z∈X} |f(x)| + (μ/2)‖x−z‖² + (ρ/2)‖Ax−b‖²`.
    pub m: f64,
    /// Lower bound of `Ψ`, taken as `f̲`.
    pub m_psi: f64,
}

/// Sampled estimates of the maxima entering the `M_y` rule. Requires a
/// bounded set and a declared lower bound.
pub fn estimate_my_bounds(
    p: &ConstrainedProblem,
    params: &SolverParams,
    samples: usize,
    rng: &SeededRng,
    opts: &InnerOptions,
) -> Result<MyBounds> {
    if !p.set.is_bounded() {
        return Err(Error::Config("M_y bounds need a bounded set X".into()));
    }
    let m_psi = p
        .objective
        .lower_bound
        .ok_or_else(|| Error::Config("M_y bounds need a declared lower bound of f".into()))?;
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    let zero = vec![0.0; p.num_constraints()];
    let vals: Vec<Result<(f64, f64)>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.derive(i as u64);
            let x = random_point(&p.set, &mut r, 1.0)?;
            let z = random_point(&p.set, &mut r, 1.0)?;
            let t = potential_terms(p, params, &x, &zero, &z, opts)?;
            let mv = t.k_based();
            let mm = p.objective.value(&x).abs()
                + 0.5 * params.mu * dist(&x, &z).powi(2)
                + 0.5 * params.rho * p.feasibility(&x).powi(2);
            Ok((mv, mm))
        })
        .collect();
    let (mut m_v, mut m) = (f64::NEG_INFINITY, 0.0f64);
    for v in vals {
        let (a, b) = v?;
        m_v = m_v.max(a);
        m = m.max(b);
    }
    Ok(MyBounds { m_v, m, m_psi })
}
