//! Turning a [`RunConfig`] into a solver run and a report.

use std::time::Instant;

use salm::benchmarks::{BenchmarkInstance, OracleConfig, ProblemDocument};
use salm::diagnostics::{estimate_my_bounds, stationarity_residual, InnerOptions, PotentialEvaluator};
use salm::solvers::*;
use salm::{ConstrainedProblem, GradientOracle, OracleKind, SeededRng};
use serde::{Deserialize, Serialize};

use crate::config::{ProblemSource, RunConfig, ScheduleKind};
use crate::CliError;

/// Stream of the Monte-Carlo draws behind the automatic `M_y`.
const STREAM_MY: u64 = 5;

pub struct Prepared {
    pub instance: BenchmarkInstance,
    pub oracle: OracleKind,
    /// Explicit oracle seed; runs use their own seed otherwise.
    pub oracle_seed: Option<u64>,
}

pub fn load_instance(source: &ProblemSource) -> Result<(BenchmarkInstance, Option<OracleConfig>), CliError> {
    match source {
        ProblemSource::Generator(spec) => Ok((spec.generate()?, None)),
        ProblemSource::File { path } => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let doc = ProblemDocument::from_json(&text)?;
            Ok((doc.instance, doc.oracle))
        }
    }
}

/// The config's oracle section wins over the document's; exact otherwise.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let (instance, doc_oracle) = load_instance(&cfg.problem)?;
    let (oracle, oracle_seed) = match (&cfg.oracle, doc_oracle) {
        (Some(o), _) => (o.kind, o.seed),
        (None, Some(o)) => (o.kind, Some(o.seed)),
        (None, None) => (OracleKind::Exact, None),
    };
    Ok(Prepared {
        instance,
        oracle,
        oracle_seed,
    })
}

/// Parameters for `T` iterations: the configured schedule, then explicit
/// overrides.
pub fn build_params(cfg: &RunConfig, inst: &BenchmarkInstance, t: usize) -> Result<SolverParams, CliError> {
    let s = &cfg.solver;
    let p = &inst.problem;
    let (lf, l0) = (inst.metadata.lf, inst.metadata.l0);
    // Both derivations need T ≥ 1; a zero-step run only reports the start.
    let t_eff = t.max(1);
    let mut params = match (s.schedule, cfg.algorithm) {
        (ScheduleKind::Theory, Algorithm::Alg3) => {
            derive_params_storm_with(lf, l0, p.norm_a, s.rho, s.sigma_bar, t_eff, s.lk_convention)?
        }
        (ScheduleKind::Theory, _) => derive_params_alg1_with(lf, p.norm_a, s.rho, s.sigma_bar, t_eff, s.lk_convention)?,
        (ScheduleKind::Scaled, alg) => s
            .schedule_for(alg)
            .params(lf, l0, p.norm_a, s.rho, s.sigma_bar, t_eff, s.lk_convention)?,
    };
    params.iterations = t;
    params.literal_lambda = s.literal_lambda;
    if let Some(v) = s.tau {
        params.tau = v;
    }
    if let Some(v) = s.eta {
        params.eta = v;
    }
    if let Some(v) = s.beta {
        params.beta = v;
    }
    if let Some(v) = s.alpha {
        params.alpha = v;
    }
    if cfg.algorithm == Algorithm::Alg2 {
        params.m_y = Some(match (s.m_y, s.my_radius) {
            (Some(m), _) => m,
            (None, Some(r)) => {
                let b = estimate_my_bounds(p, &params, s.my_samples, &SeededRng::new(cfg.seed, STREAM_MY), &InnerOptions::default())?;
                choose_my(b.m_v, b.m_psi, b.m, r, 0.0)?
            }
            (None, None) => {
                return Err(CliError::Config(
                    "alg2 needs solver.m_y, or solver.my_radius to derive it".into(),
                ))
            }
        });
    } else {
        params.m_y = s.m_y;
    }
    params.validate()?;
    if cfg.postprocess_batch.is_some() && params.tau * params.lk > 1.0 + 1e-12 {
        return Err(CliError::Config(format!(
            "postprocess_batch needs tau <= 1/L_K, got tau = {} with L_K = {}",
            params.tau, params.lk
        )));
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub t: usize,
    pub feasibility: f64,
    pub set_violation: f64,
    /// Exact gradient-mapping residual at `(x_T, y_T)`.
    pub stationarity: f64,
    /// Step-based surrogate from the last trace record.
    pub stat_est: f64,
    pub dual_norm: f64,
    pub resets: u64,
    pub objective: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub oracle_draws: u64,
    pub gradient_evaluations: u64,
    pub postprocess_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub problem: String,
    pub dimension: usize,
    pub constraints: usize,
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub seed: u64,
    pub oracle: OracleConfig,
    pub status: RunStatus,
    pub params: SolverParams,
    pub initial: TraceRecord,
    #[serde(rename = "final")]
    pub final_metrics: FinalMetrics,
    pub t_star: Option<usize>,
    pub certificate: Option<Certificate>,
    pub samples: SampleCounts,
    pub warnings: Vec<String>,
    pub wallclock_seconds: f64,
}

/// Post-processing output as reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub t: usize,
    pub batch: usize,
    pub residual_norm: f64,
    pub feasibility: f64,
    pub x_hat: Vec<f64>,
    pub y: Vec<f64>,
}

pub struct RunResult {
    pub output: RunOutput,
    pub report: Report,
}

/// Runs one configuration for `T` steps with run seed `seed`.
pub fn execute(cfg: &RunConfig, prep: &Prepared, t: usize, seed: u64) -> Result<RunResult, CliError> {
    let start = Instant::now();
    let inst = &prep.instance;
    let p: &ConstrainedProblem = &inst.problem;
    let params = build_params(cfg, inst, t)?;
    let oracle_cfg = OracleConfig {
        kind: prep.oracle,
        seed: prep.oracle_seed.unwrap_or(seed),
    };
    let mut oracle = GradientOracle::new(oracle_cfg.kind, SeededRng::new(oracle_cfg.seed, STREAM_ORACLE))?;
    let opts = RunOptions {
        seed,
        trace_stride: cfg.trace_stride,
        early_stop: cfg.early_stop,
    };
    let x0 = vec![0.0; p.dim()];
    let y0 = vec![0.0; p.num_constraints()];
    let mut evaluator = PotentialEvaluator::new(InnerOptions::default());
    let mut none = NoMonitor;
    let monitor: &mut dyn Monitor = if cfg.record_potential { &mut evaluator } else { &mut none };
    let output = match cfg.algorithm {
        Algorithm::Alg1 => run_alg1(p, &mut oracle, &params, &x0, &y0, &opts, monitor)?,
        Algorithm::Alg2 => {
            let sampler = inst.sampler.clone().unwrap_or_else(|| salm::ConstraintSampler::Fixed {
                a: p.a.clone(),
                b: p.b.clone(),
            });
            run_alg2(p, &mut oracle, &sampler, &params, &x0, &y0, &opts, monitor)?
        }
        Algorithm::Alg3 => run_alg3(p, &mut oracle, &params, &x0, &y0, &opts, monitor)?,
    };
    let (draws, evals) = (oracle.tickets_drawn(), oracle.evaluations());

    let state = &output.state;
    let last = output.trace.records.last().unwrap_or(&output.trace.initial);
    let final_metrics = if state.is_finite() {
        let res = stationarity_residual(p, &state.x, &state.y, params.lk)?;
        FinalMetrics {
            t: state.t,
            feasibility: p.feasibility(&state.x),
            set_violation: p.set.violation(&state.x)?,
            stationarity: res.norm,
            stat_est: last.stat_est,
            dual_norm: salm::linalg::norm(&state.y),
            resets: state.resets,
            objective: p.objective.value(&state.x),
            x: state.x.clone(),
            y: state.y.clone(),
        }
    } else {
        FinalMetrics {
            t: last.t,
            feasibility: last.feasibility,
            set_violation: last.set_violation,
            stationarity: f64::NAN,
            stat_est: last.stat_est,
            dual_norm: last.dual_norm,
            resets: last.resets,
            objective: f64::NAN,
            x: state.x.clone(),
            y: state.y.clone(),
        }
    };

    let mut post_evals = 0;
    let certificate = match (cfg.postprocess_batch, &output.trace.snapshot, output.status) {
        (Some(batch), Some(snap), RunStatus::Completed | RunStatus::EarlyStopped { .. }) => {
            let mut po = GradientOracle::new(oracle_cfg.kind, SeededRng::new(seed, STREAM_POSTPROCESS))?;
            let c = postprocess(p, &mut po, &params, &snap.x, &snap.y_next, &snap.z, batch)?;
            post_evals = po.evaluations();
            Some(Certificate {
                t: snap.t,
                batch,
                residual_norm: c.residual_norm,
                feasibility: c.feasibility,
                x_hat: c.x_hat,
                y: c.y,
            })
        }
        _ => None,
    };

    let report = Report {
        problem: inst.name.clone(),
        dimension: p.dim(),
        constraints: p.num_constraints(),
        algorithm: cfg.algorithm,
        iterations: t,
        seed,
        oracle: oracle_cfg,
        status: output.status,
        params,
        initial: output.trace.initial.clone(),
        final_metrics,
        t_star: output.trace.t_star,
        certificate,
        samples: SampleCounts {
            oracle_draws: draws,
            gradient_evaluations: evals,
            postprocess_evaluations: post_evals,
        },
        warnings: inst.metadata.warnings.clone(),
        wallclock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(RunResult { output, report })
}
