//! Algorithms 1-3, their parameter schedules, and the post-processing step
//! that turns a random iterate into a stationarity certificate.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, axpy, dist, norm, Vector};
use crate::oracles::{stochastic_k_grad_twosample, ConstraintSampler, GradientOracle};
use crate::problem::{smoothness_constant_k_with, ConstrainedProblem, LkConvention};
use crate::rng::SeededRng;

/// Tolerance handed to polyhedral projections inside the iteration.
pub const PROJECTION_TOL: f64 = 1e-10;

/// Stream ids under a run seed.
pub const STREAM_ORACLE: u64 = 1;
pub const STREAM_CONSTRAINTS: u64 = 2;
pub const STREAM_T_STAR: u64 = 3;
pub const STREAM_POSTPROCESS: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Alg1,
    Alg2,
    Alg3,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Alg1 => "alg1",
            Algorithm::Alg2 => "alg2",
            Algorithm::Alg3 => "alg3",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alg1" => Ok(Algorithm::Alg1),
            "alg2" => Ok(Algorithm::Alg2),
            "alg3" => Ok(Algorithm::Alg3),
            other => Err(Error::Config(format!("unknown algorithm `{other}` (expected alg1, alg2 or alg3)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub rho: f64,
    pub tau: f64,
    pub eta: f64,
    pub beta: f64,
    pub mu: f64,
    pub lambda: f64,
    /// STORM momentum; unused by Algorithms 1 and 2.
    #[serde(default)]
    pub alpha: f64,
    /// Dual safeguard threshold of `alg2`. `None` never resets.
    #[serde(default)]
    pub m_y: Option<f64>,
    pub sigma_bar: f64,
    pub iterations: usize,
    /// Smoothness constants the schedule was derived from.
    pub lf: f64,
    #[serde(default)]
    pub l0: f64,
    pub lk: f64,
    /// Use `λ(x−z)` instead of `μ(x−z)` in the STORM search direction.
    #[serde(default)]
    pub literal_lambda: bool,
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("eta", self.eta),
            ("beta", self.beta),
            ("mu", self.mu),
            ("lambda", self.lambda),
            ("sigma_bar", self.sigma_bar),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidArgument(format!("rho must be >= 0, got {}", self.rho)));
        }
        if self.beta > 1.0 {
            return Err(Error::InvalidArgument(format!("beta must be <= 1, got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if let Some(m) = self.m_y {
            if !(m > 0.0) {
                return Err(Error::InvalidArgument(format!("M_y must be positive, got {m}")));
            }
        }
        Ok(())
    }

    /// Coefficient of `(x − z)` in the search direction of `alg`.
    fn prox_weight(&self, alg: Algorithm) -> f64 {
        if alg == Algorithm::Alg3 && self.literal_lambda {
            self.lambda
        } else {
            self.mu
        }
    }
}

fn check_inputs(lf: f64, norm_a: f64, rho: f64, sigma_bar: f64) -> Result<()> {
    if !(lf >= 0.0 && lf.is_finite()) {
        return Err(Error::InvalidArgument(format!("L_f must be >= 0, got {lf}")));
    }
    if !(norm_a >= 0.0 && norm_a.is_finite()) {
        return Err(Error::InvalidArgument(format!("‖A‖ must be >= 0, got {norm_a}")));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!("rho must be >= 0, got {rho}")));
    }
    if !(sigma_bar > 0.0 && sigma_bar.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma_bar must be positive, got {sigma_bar}")));
    }
    Ok(())
}

/// `μ = max{2, 4L_f}`.
pub fn default_mu(lf: f64) -> f64 {
    (4.0 * lf).max(2.0)
}

/// The dual step bound shared by both schedules; `τ` when `A = 0`.
fn eta_bound(tau: f64, mu: f64, norm_a: f64, rho: f64) -> f64 {
    if norm_a == 0.0 {
        return tau;
    }
    let a2 = norm_a * norm_a;
    ((2.0 * mu + rho * norm_a) / (4.0 * a2 * a2))
        .min(tau / (200.0 * a2))
        .min(tau * (2.0 * mu + rho * a2) / (20.0 * a2))
}

pub fn derive_params_alg1(lf: f64, norm_a: f64, rho: f64, sigma_bar: f64, t: usize) -> Result<SolverParams> {
    derive_params_alg1_with(lf, norm_a, rho, sigma_bar, t, LkConvention::Squared)
}

pub fn derive_params_alg1_with(
    lf: f64,
    norm_a: f64,
    rho: f64,
    sigma_bar: f64,
    t: usize,
    conv: LkConvention,
) -> Result<SolverParams> {
    check_inputs(lf, norm_a, rho, sigma_bar)?;
    if t == 0 {
        return Err(Error::InvalidArgument("iteration count T must be positive".into()));
    }
    let mu = default_mu(lf);
    let lk = smoothness_constant_k_with(lf, norm_a, rho, mu, conv);
    let lambda = lk;
    let tau = (1.0 / (6.0 * lambda * lambda * (t as f64).sqrt())).min(1.0 / (6.0 * lambda));
    let eta = eta_bound(tau, mu, norm_a, rho);
    let beta = (tau / 100.0)
        .min(1.0 / (50.0 * lambda))
        .min(eta / (36.0 * mu * sigma_bar * sigma_bar));
    Ok(SolverParams {
        rho,
        tau,
        eta,
        beta,
        mu,
        lambda,
        alpha: 0.0,
        m_y: None,
        sigma_bar,
        iterations: t,
        lf,
        l0: lf,
        lk,
        literal_lambda: false,
    })
}

/// STORM schedule with `τ` at its upper bound. `T` is stored but does not
/// enter the formulas.
pub fn derive_params_storm(lf: f64, l0: f64, norm_a: f64, rho: f64, sigma_bar: f64, t: usize) -> Result<SolverParams> {
    derive_params_storm_with(lf, l0, norm_a, rho, sigma_bar, t, LkConvention::Squared)
}

pub fn derive_params_storm_with(
    lf: f64,
    l0: f64,
    norm_a: f64,
    rho: f64,
    sigma_bar: f64,
    t: usize,
    conv: LkConvention,
) -> Result<SolverParams> {
    check_inputs(lf, norm_a, rho, sigma_bar)?;
    if !(l0 >= 0.0 && l0.is_finite()) {
        return Err(Error::InvalidArgument(format!("L_0 must be >= 0, got {l0}")));
    }
    let mu = default_mu(lf);
    let lk = smoothness_constant_k_with(lf, norm_a, rho, mu, conv);
    let lambda = lk;
    let spread = 48.0 * (l0 * l0 + lf * lf);
    let mut tau = 1.0 / (4.0 * lk + 8.0 * mu);
    if spread > 0.0 {
        tau = tau.min(1.0 / spread.sqrt());
    }
    let mut eta = eta_bound(tau, mu, norm_a, rho);
    if norm_a > 0.0 {
        eta = eta.min((mu - lf).powi(2) * tau / (4.0 * norm_a * norm_a));
    }
    let beta = (tau / 100.0).min(1.0 / 50.0).min(eta / (36.0 * mu * sigma_bar * sigma_bar));
    let alpha = (spread * tau * tau).min(1.0);
    Ok(SolverParams {
        rho,
        tau,
        eta,
        beta,
        mu,
        lambda,
        alpha,
        m_y: None,
        sigma_bar,
        iterations: t,
        lf,
        l0,
        lk,
        literal_lambda: false,
    })
}

/// Steps proportional to `T^{-e}` with tunable constants:
/// `τ = c_τ T^{-e}/L_K`, `η = c_η T^{-e}/‖A‖²`, `β = c_β T^{-e}`, and for
/// STORM `α = 48(L_0²+L_f²)τ²`. The worst-case constants of the derived
/// schedules make steps so small that rates only show at very large `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledSchedule {
    pub c_tau: f64,
    pub c_eta: f64,
    pub c_beta: f64,
    pub exponent: f64,
}

impl ScaledSchedule {
    /// `T^{-1/2}` steps for Algorithms 1 and 2. Constants tuned on
    /// `gen_nonconvex_qp(20, 5)` so that `T = 10³` is already past the
    /// transient.
    pub fn sgd() -> Self {
        Self {
            c_tau: 50.0,
            c_eta: 50.0,
            c_beta: 50.0,
            exponent: 0.5,
        }
    }

    /// `T^{-1/3}` steps for `alg3`.
    pub fn storm() -> Self {
        Self {
            c_tau: 7.0,
            c_eta: 50.0,
            c_beta: 50.0,
            exponent: 1.0 / 3.0,
        }
    }

    pub fn for_algorithm(alg: Algorithm) -> Self {
        match alg {
            Algorithm::Alg3 => Self::storm(),
            _ => Self::sgd(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn params(
        &self,
        lf: f64,
        l0: f64,
        norm_a: f64,
        rho: f64,
        sigma_bar: f64,
        t: usize,
        conv: LkConvention,
    ) -> Result<SolverParams> {
        check_inputs(lf, norm_a, rho, sigma_bar)?;
        if t == 0 {
            return Err(Error::InvalidArgument("iteration count T must be positive".into()));
        }
        for (name, v) in [("c_tau", self.c_tau), ("c_eta", self.c_eta), ("c_beta", self.c_beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.exponent >= 0.0 && self.exponent.is_finite()) {
            return Err(Error::InvalidArgument(format!("exponent must be >= 0, got {}", self.exponent)));
        }
        let mu = default_mu(lf);
        let lk = smoothness_constant_k_with(lf, norm_a, rho, mu, conv);
        let scale = (t as f64).powf(-self.exponent);
        let tau = (self.c_tau * scale / lk).min(1.0 / lk);
        let eta = if norm_a > 0.0 {
            self.c_eta * scale / (norm_a * norm_a)
        } else {
            tau
        };
        let beta = (self.c_beta * scale).min(1.0);
        let alpha = (48.0 * (l0 * l0 + lf * lf) * tau * tau).min(1.0);
        Ok(SolverParams {
            rho,
            tau,
            eta,
            beta,
            mu,
            lambda: lk,
            alpha,
            m_y: None,
            sigma_bar,
            iterations: t,
            lf,
            l0,
            lk,
            literal_lambda: false,
        })
    }
}

/// `(M_V − M_Ψ + 2M)/r · (1 + margin)`, floored at 1.
pub fn choose_my(m_v: f64, m_psi: f64, m: f64, r: f64, margin: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("radius r must be positive, got {r}")));
    }
    if !(margin >= 0.0) {
        return Err(Error::InvalidArgument(format!("margin must be >= 0, got {margin}")));
    }
    let v = (m_v - m_psi + 2.0 * m) / r * (1.0 + margin);
    if !v.is_finite() {
        return Err(Error::InvalidArgument("M_y bound is not finite".into()));
    }
    Ok(v.max(1.0))
}

/// Minibatch size `max(1, round(T^{1/6}))` of the STORM initialization.
pub fn storm_batch_size(t: usize) -> usize {
    ((t as f64).powf(1.0 / 6.0).round() as usize).max(1)
}

/// `∇̂f_0`, the mean of `storm_batch_size(T)` samples at `x0`.
pub fn storm_init(p: &ConstrainedProblem, oracle: &mut GradientOracle, x0: &[f64], t: usize) -> Result<Vector> {
    check_dim("initial point", p.dim(), x0.len())?;
    oracle.sample_mean(&p.objective.func, x0, storm_batch_size(t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub t: usize,
    pub x: Vector,
    pub y: Vector,
    pub z: Vector,
    /// STORM estimator `∇̂f_t`.
    pub grad_est: Option<Vector>,
    pub resets: u64,
}

impl SolverState {
    /// `x0` projected onto `X`, `z0 = x0`.
    pub fn init(p: &ConstrainedProblem, x0: &[f64], y0: &[f64]) -> Result<Self> {
        check_dim("initial point", p.dim(), x0.len())?;
        check_dim("initial dual", p.num_constraints(), y0.len())?;
        let x = p.set.project(x0, PROJECTION_TOL)?;
        Ok(Self {
            t: 0,
            z: x.clone(),
            x,
            y: y0.to_vec(),
            grad_est: None,
            resets: 0,
        })
    }

    fn check(&self, p: &ConstrainedProblem) -> Result<()> {
        check_dim("state x", p.dim(), self.x.len())?;
        check_dim("state z", p.dim(), self.z.len())?;
        check_dim("state y", p.num_constraints(), self.y.len())
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.x)
            && all_finite(&self.y)
            && all_finite(&self.z)
            && self.grad_est.as_deref().is_none_or(all_finite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// `‖x_t − x_{t+1}‖/τ`, the gradient mapping of the sampled direction.
    pub stat_est: f64,
    pub reset: bool,
}

/// `x ← proj_X(x − τG)`, `z ← z + β(x_old − z)`.
fn primal_and_center(p: &ConstrainedProblem, params: &SolverParams, state: &mut SolverState, g: &[f64]) -> Result<f64> {
    let mut x_new = state.x.clone();
    axpy(-params.tau, g, &mut x_new);
    p.set.project_into(&mut x_new, PROJECTION_TOL)?;
    let stat = dist(&state.x, &x_new) / params.tau;
    for (zi, xi) in state.z.iter_mut().zip(&state.x) {
        *zi += params.beta * (xi - *zi);
    }
    state.x = x_new;
    state.t += 1;
    Ok(stat)
}

/// One iteration of `alg1`.
pub fn step_alg1(
    p: &ConstrainedProblem,
    oracle: &mut GradientOracle,
    params: &SolverParams,
    state: &mut SolverState,
) -> Result<StepInfo> {
    state.check(p)?;
    let r = p.residual(&state.x);
    axpy(params.eta, &r, &mut state.y);
    let mut g = oracle.sample(&p.objective.func, &state.x)?;
    p.add_constraint_terms(&state.x, &state.y, &state.z, params.rho, params.mu, &mut g);
    let stat_est = primal_and_center(p, params, state, &g)?;
    Ok(StepInfo { stat_est, reset: false })
}

fn check_alg2(p: &ConstrainedProblem, sampler: &ConstraintSampler) -> Result<()> {
    if !p.set.is_bounded() {
        return Err(Error::Config(
            "`alg2` needs a bounded set X (box, simplex, or halfspaces asserted bounded)".into(),
        ));
    }
    let (rows, cols) = sampler.dims();
    check_dim("sampler columns", p.dim(), cols)?;
    check_dim("sampler rows", p.num_constraints(), rows)
}

/// One iteration of `alg2`: sampled dual step with safeguard, then the
/// two-sample direction. Consumes three constraint draws and one oracle
/// sample.
pub fn step_alg2(
    p: &ConstrainedProblem,
    oracle: &mut GradientOracle,
    sampler: &ConstraintSampler,
    params: &SolverParams,
    state: &mut SolverState,
    rng: &mut SeededRng,
) -> Result<StepInfo> {
    check_alg2(p, sampler)?;
    state.check(p)?;
    let (a, b) = sampler.draw(rng);
    let mut r = a.mul_vec(&state.x);
    for (ri, bi) in r.iter_mut().zip(&b) {
        *ri -= bi;
    }
    axpy(params.eta, &r, &mut state.y);
    let mut reset = false;
    if let Some(m_y) = params.m_y {
        if norm(&state.y) >= m_y {
            state.y.iter_mut().for_each(|v| *v = 0.0);
            state.resets += 1;
            reset = true;
        }
    }
    let g = stochastic_k_grad_twosample(
        p,
        oracle,
        sampler,
        &state.x,
        &state.y,
        &state.z,
        params.rho,
        params.mu,
        rng,
    )?;
    let stat_est = primal_and_center(p, params, state, &g)?;
    Ok(StepInfo { stat_est, reset })
}

/// One iteration of `alg3`. The estimator update draws one fresh
/// realization and evaluates it at both `x_{t+1}` and `x_t`.
pub fn step_alg3(
    p: &ConstrainedProblem,
    oracle: &mut GradientOracle,
    params: &SolverParams,
    state: &mut SolverState,
) -> Result<StepInfo> {
    state.check(p)?;
    let est = state
        .grad_est
        .take()
        .ok_or_else(|| Error::InvalidArgument("STORM estimator is not initialized".into()))?;
    check_dim("STORM estimator", p.dim(), est.len())?;
    let r = p.residual(&state.x);
    axpy(params.eta, &r, &mut state.y);
    let mut g = est.clone();
    let w = params.prox_weight(Algorithm::Alg3);
    p.add_constraint_terms(&state.x, &state.y, &state.z, params.rho, w, &mut g);
    let x_old = state.x.clone();
    let stat_est = primal_and_center(p, params, state, &g)?;
    let (g_new, g_old) = oracle.two_point(&p.objective.func, &state.x, &x_old)?;
    let keep = 1.0 - params.alpha;
    let next: Vector = g_new
        .iter()
        .zip(&est)
        .zip(&g_old)
        .map(|((gn, e), go)| gn + keep * (e - go))
        .collect();
    state.grad_est = Some(next);
    Ok(StepInfo { stat_est, reset: false })
}

/// `y_{t+1} = y_t + η(Ax_t − b)` under the mean constraint.
pub fn next_dual(p: &ConstrainedProblem, params: &SolverParams, state: &SolverState) -> Vector {
    let mut y = state.y.clone();
    axpy(params.eta, &p.residual(&state.x), &mut y);
    y
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub feasibility: f64,
    pub set_violation: f64,
    pub stat_est: f64,
    pub dual_norm: f64,
    pub x_minus_z: f64,
    pub resets: u64,
    pub potential: Option<f64>,
}

/// Iterate `(x_{t*}, y_{t*+1}, z_{t*})` kept for post-processing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: usize,
    pub x: Vector,
    pub y_next: Vector,
    pub z: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Metrics at `t = 0`.
    pub initial: TraceRecord,
    /// One record per `stride` steps, always including the last step.
    pub records: Vec<TraceRecord>,
    pub stride: usize,
    /// Uniform draw from `{1, …, T}`; `None` when `T = 0`.
    pub t_star: Option<usize>,
    pub snapshot: Option<Snapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    EarlyStopped { t: usize },
    NonFinite { t: usize },
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub state: SolverState,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Seed of the `t*` draw and of constraint sampling.
    pub seed: u64,
    pub trace_stride: usize,
    /// Stop once feasibility and the stationarity estimate are both below.
    pub early_stop: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            trace_stride: 1,
            early_stop: None,
        }
    }
}

/// Optional per-record hook; used to attach potential values to the trace.
pub trait Monitor {
    fn potential(&mut self, p: &ConstrainedProblem, params: &SolverParams, state: &SolverState) -> Result<Option<f64>>;
}

pub struct NoMonitor;

impl Monitor for NoMonitor {
    fn potential(&mut self, _: &ConstrainedProblem, _: &SolverParams, _: &SolverState) -> Result<Option<f64>> {
        Ok(None)
    }
}

fn record(
    p: &ConstrainedProblem,
    params: &SolverParams,
    state: &SolverState,
    stat_est: f64,
    monitor: &mut dyn Monitor,
) -> Result<TraceRecord> {
    Ok(TraceRecord {
        t: state.t,
        feasibility: p.feasibility(&state.x),
        set_violation: p.set.violation(&state.x)?,
        stat_est,
        dual_norm: norm(&state.y),
        x_minus_z: dist(&state.x, &state.z),
        resets: state.resets,
        potential: monitor.potential(p, params, state)?,
    })
}

fn drive(
    p: &ConstrainedProblem,
    params: &SolverParams,
    mut state: SolverState,
    opts: &RunOptions,
    monitor: &mut dyn Monitor,
    step: &mut dyn FnMut(&mut SolverState) -> Result<StepInfo>,
) -> Result<RunOutput> {
    params.validate()?;
    if opts.trace_stride == 0 {
        return Err(Error::InvalidArgument("trace stride must be positive".into()));
    }
    let t_total = params.iterations;
    let t_star = (t_total > 0).then(|| 1 + SeededRng::new(opts.seed, STREAM_T_STAR).index(t_total));
    let initial = record(p, params, &state, f64::NAN, monitor)?;
    let initial = TraceRecord {
        stat_est: 0.0,
        ..initial
    };
    let mut trace = Trace {
        initial,
        records: Vec::with_capacity(t_total / opts.trace_stride + 1),
        stride: opts.trace_stride,
        t_star,
        snapshot: None,
    };
    let mut status = RunStatus::Completed;
    while state.t < t_total {
        let info = step(&mut state)?;
        if !state.is_finite() || !info.stat_est.is_finite() {
            status = RunStatus::NonFinite { t: state.t };
            break;
        }
        if Some(state.t) == t_star {
            trace.snapshot = Some(Snapshot {
                t: state.t,
                x: state.x.clone(),
                y_next: next_dual(p, params, &state),
                z: state.z.clone(),
            });
        }
        let last = state.t == t_total;
        let stop = opts.early_stop.is_some_and(|eps| {
            info.stat_est <= eps && p.feasibility(&state.x) <= eps
        });
        if last || stop || state.t % opts.trace_stride == 0 {
            let r = record(p, params, &state, info.stat_est, monitor)?;
            // Finite iterates can still overflow a norm.
            let finite = [r.feasibility, r.set_violation, r.dual_norm, r.x_minus_z]
                .iter()
                .chain(r.potential.as_ref())
                .all(|v| v.is_finite());
            trace.records.push(r);
            if !finite {
                status = RunStatus::NonFinite { t: state.t };
                break;
            }
        }
        if stop && !last {
            status = RunStatus::EarlyStopped { t: state.t };
            if trace.snapshot.is_none() {
                // t* lies beyond the stopping index; fall back to the last iterate.
                trace.snapshot = Some(Snapshot {
                    t: state.t,
                    x: state.x.clone(),
                    y_next: next_dual(p, params, &state),
                    z: state.z.clone(),
                });
            }
            break;
        }
    }
    Ok(RunOutput { trace, state, status })
}

#[allow(clippy::too_many_arguments)]
pub fn run_alg1(
    p: &ConstrainedProblem,
    oracle: &mut GradientOracle,
    params: &SolverParams,
    x0: &[f64],
    y0: &[f64],
    opts: &RunOptions,
    monitor: &mut dyn Monitor,
) -> Result<RunOutput> {
    oracle.validate_for(&p.objective.func)?;
    let state = SolverState::init(p, x0, y0)?;
    drive(p, params, state, opts, monitor, &mut |s| step_alg1(p, oracle, params, s))
}

#[allow(clippy::too_many_arguments)]
pub fn run_alg2(
    p: &ConstrainedProblem,
    oracle: &mut GradientOracle,
    sampler: &ConstraintSampler,
    params: &SolverParams,
    x0: &[f64],
    y0: &[f64],
    opts: &RunOptions,
    monitor: &mut dyn Monitor,
) -> Result<RunOutput> {
    oracle.validate_for(&p.objective.func)?;
    sampler.validate()?;
    check_alg2(p, sampler)?;
    let state = SolverState::init(p, x0, y0)?;
    let mut rng = SeededRng::new(opts.seed, STREAM_CONSTRAINTS);
    drive(p, params, state, opts, monitor, &mut |s| {
        step_alg2(p, oracle, sampler, params, s, &mut rng)
    })
}

#[allow(clippy::too_many_arguments)]
pub fn run_alg3(
    p: &ConstrainedProblem,
    oracle: &mut GradientOracle,
    params: &SolverParams,
    x0: &[f64],
    y0: &[f64],
    opts: &RunOptions,
    monitor: &mut dyn Monitor,
) -> Result<RunOutput> {
    oracle.validate_for(&p.objective.func)?;
    let mut state = SolverState::init(p, x0, y0)?;
    state.grad_est = Some(storm_init(p, oracle, &state.x, params.iterations)?);
    drive(p, params, state, opts, monitor, &mut |s| step_alg3(p, oracle, params, s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityCertificate {
    pub x_hat: Vector,
    pub y: Vector,
    /// Element of `∇f(x̂) + Aᵀy + ∂I_X(x̂)`.
    pub v: Vector,
    pub feasibility: f64,
    pub residual_norm: f64,
    pub batch: usize,
}

/// One projected step from `x` with a `B`-sample direction, and the residual
/// `v = ∇K(x̂) − Ĝ − (x̂ − x)/τ − ρAᵀ(Ax̂−b) − μ(x̂−z)`.
#[allow(clippy::too_many_arguments)]
pub fn postprocess(
    p: &ConstrainedProblem,
    oracle: &mut GradientOracle,
    params: &SolverParams,
    x: &[f64],
    y_next: &[f64],
    z: &[f64],
    batch: usize,
) -> Result<StationarityCertificate> {
    if batch == 0 {
        return Err(Error::InvalidArgument("post-processing batch B must be positive".into()));
    }
    check_dim("post-processing point", p.dim(), x.len())?;
    check_dim("post-processing dual", p.num_constraints(), y_next.len())?;
    check_dim("post-processing center", p.dim(), z.len())?;
    if params.tau * params.lk > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "post-processing needs tau <= 1/L_K, got tau = {} with L_K = {}",
            params.tau, params.lk
        )));
    }
    let (rho, mu) = (params.rho, params.mu);
    let mut g_hat = oracle.sample_mean(&p.objective.func, x, batch)?;
    p.add_constraint_terms(x, y_next, z, rho, mu, &mut g_hat);
    let mut x_hat = x.to_vec();
    axpy(-params.tau, &g_hat, &mut x_hat);
    p.set.project_into(&mut x_hat, PROJECTION_TOL)?;

    // ∇K(x̂) − ρAᵀ(Ax̂−b) − μ(x̂−z) = ∇f(x̂) + Aᵀy.
    let mut v = p.objective.grad(&x_hat);
    if p.num_constraints() > 0 {
        axpy(1.0, &p.a.tmul_vec(y_next), &mut v);
    }
    for ((vi, gi), (xh, xi)) in v.iter_mut().zip(&g_hat).zip(x_hat.iter().zip(x)) {
        *vi -= gi + (xh - xi) / params.tau;
    }
    Ok(StationarityCertificate {
        feasibility: p.feasibility(&x_hat),
        residual_norm: norm(&v),
        x_hat,
        y: y_next.to_vec(),
        v,
        batch,
    })
}
