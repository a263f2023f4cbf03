//! Subcommands: `solve`, `sweep`, `audit`, `gen` and `params`. Each returns
//! the process exit code or an error carrying one.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use salm::benchmarks::{GeneratorSpec, OracleConfig, ProblemDocument};
use salm::diagnostics::*;
use salm::solvers::*;
use salm::{GradientOracle, LkConvention, SeededRng};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::config::{parse_assignment, RunConfig, ScheduleKind};
use crate::output::{fmt_f64, table_csv, trace_csv, write_atomic, write_json};
use crate::plot::convergence_svg;
use crate::run::{build_params, execute, prepare, Report};
use crate::CliError;

/// Stream of the audit samplers.
const STREAM_AUDIT: u64 = 6;
/// Scale of the Gaussian duals and unbounded-set points drawn by audits.
const AUDIT_DUAL_SCALE: f64 = 3.0;

pub const LEMMA_IDS: [&str; 5] = ["error-bounds", "hoffman", "potential-lower-bound", "storm-recursion", "descent"];

fn numerical_status(report: &Report) -> Result<(), CliError> {
    match report.status {
        RunStatus::NonFinite { t } => Err(CliError::Numerical(format!("non-finite iterate at step {t}"))),
        _ => Ok(()),
    }
}

/// Runs one configuration and writes `trace.csv`, `report.json` and
/// `convergence.svg` into `out`. Outputs are written before a non-finite
/// run is reported as a failure.
pub fn solve(cfg: &RunConfig, out: &Path) -> Result<Report, CliError> {
    let prep = prepare(cfg)?;
    let res = execute(cfg, &prep, cfg.iterations, cfg.seed)?;
    let csv = trace_csv(&res.output.trace, cfg.record_potential)?;
    write_atomic(&out.join("trace.csv"), csv.as_bytes())?;
    write_json(&out.join("report.json"), &res.report)?;
    write_atomic(&out.join("convergence.svg"), convergence_svg(&csv)?.as_bytes())?;
    numerical_status(&res.report)?;
    Ok(res.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub iterations: usize,
    pub seed: u64,
    pub report: Report,
}

/// Medians per `T` and least-squares slopes of `log10(median)` against
/// `log10(T)`. A slope is `null` with fewer than two distinct `T` or a
/// non-positive median.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub algorithm: Algorithm,
    pub iterations: Vec<usize>,
    pub seeds: Vec<u64>,
    pub median_stationarity: Vec<f64>,
    pub median_feasibility: Vec<f64>,
    pub median_stat_est: Vec<f64>,
    /// Slope of the exact final gradient-mapping residual.
    pub slope: Option<f64>,
    pub slope_feasibility: Option<f64>,
    pub slope_stat_est: Option<f64>,
}

pub fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

pub fn loglog_slope(ts: &[usize], ys: &[f64]) -> Option<f64> {
    if ts.len() < 2 || ys.iter().any(|&y| !(y > 0.0 && y.is_finite())) {
        return None;
    }
    let xs: Vec<f64> = ts.iter().map(|&t| (t as f64).log10()).collect();
    let ls: Vec<f64> = ys.iter().map(|y| y.log10()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ls.iter().sum::<f64>() / n);
    let num: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (den > 0.0).then(|| num / den)
}

pub fn summarize(alg: Algorithm, iterations: &[usize], seeds: &[u64], cells: &[SweepCell]) -> SlopeSummary {
    let per_t = |f: &dyn Fn(&Report) -> f64| -> Vec<f64> {
        iterations
            .iter()
            .map(|&t| {
                let v: Vec<f64> = cells.iter().filter(|c| c.iterations == t).map(|c| f(&c.report)).collect();
                median(&v)
            })
            .collect()
    };
    let stat = per_t(&|r| r.final_metrics.stationarity);
    let feas = per_t(&|r| r.final_metrics.feasibility);
    let est = per_t(&|r| r.final_metrics.stat_est);
    SlopeSummary {
        algorithm: alg,
        iterations: iterations.to_vec(),
        seeds: seeds.to_vec(),
        slope: loglog_slope(iterations, &stat),
        slope_feasibility: loglog_slope(iterations, &feas),
        slope_stat_est: loglog_slope(iterations, &est),
        median_stationarity: stat,
        median_feasibility: feas,
        median_stat_est: est,
    }
}

pub const SWEEP_COLUMNS: [&str; 10] = [
    "iterations",
    "seed",
    "status",
    "feas",
    "set_violation",
    "stationarity",
    "stat_est",
    "dual_norm",
    "resets",
    "objective",
];

fn status_name(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Completed => "completed",
        RunStatus::EarlyStopped { .. } => "early_stopped",
        RunStatus::NonFinite { .. } => "non_finite",
    }
}

/// Every `(T, seed)` cell in a worker pool. Cells are ordered by `T` then
/// seed, each writes `cells/T<T>_seed<seed>.json`, and the results do not
/// depend on the number of workers.
pub fn sweep(cfg: &RunConfig, iterations: &[usize], seeds: &[u64], jobs: Option<usize>, out: &Path) -> Result<SlopeSummary, CliError> {
    if iterations.is_empty() || seeds.is_empty() {
        return Err(CliError::Config("sweep needs at least one T and one seed".into()));
    }
    let mut ts = iterations.to_vec();
    ts.sort_unstable();
    ts.dedup();
    let prep = prepare(cfg)?;
    let grid: Vec<(usize, u64)> = ts.iter().flat_map(|&t| seeds.iter().map(move |&s| (t, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let cells_dir = out.join("cells");
    let cells: Vec<SweepCell> = pool.install(|| {
        grid.par_iter()
            .map(|&(t, seed)| {
                // Only the final metrics are kept.
                let mut c = cfg.clone();
                c.trace_stride = t.max(1);
                c.record_potential = false;
                let res = execute(&c, &prep, t, seed)?;
                let cell = SweepCell {
                    iterations: t,
                    seed,
                    report: res.report,
                };
                write_json(&cells_dir.join(format!("T{t}_seed{seed}.json")), &cell)?;
                Ok(cell)
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let m = &c.report.final_metrics;
            vec![
                c.iterations.to_string(),
                c.seed.to_string(),
                status_name(c.report.status).to_string(),
                fmt_f64(m.feasibility),
                fmt_f64(m.set_violation),
                fmt_f64(m.stationarity),
                fmt_f64(m.stat_est),
                fmt_f64(m.dual_norm),
                m.resets.to_string(),
                fmt_f64(m.objective),
            ]
        })
        .collect();
    write_atomic(&out.join("sweep.csv"), table_csv(&SWEEP_COLUMNS, &rows)?.as_bytes())?;
    let summary = summarize(cfg.algorithm, &ts, seeds, &cells);
    write_json(&out.join("slope.json"), &summary)?;
    if let Some(c) = cells.iter().find(|c| matches!(c.report.status, RunStatus::NonFinite { .. })) {
        return Err(CliError::Numerical(format!("cell T = {}, seed = {} produced a non-finite iterate", c.iterations, c.seed)));
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOutput {
    pub lemma: String,
    pub seed: u64,
    /// All checks of the lemma merged.
    pub report: AuditReport,
    /// Per-inequality reports where the lemma has several.
    pub details: Vec<AuditReport>,
    /// Largest sampled ratio, for `hoffman`.
    pub estimate: Option<f64>,
}

/// Runs one lemma audit on the configured problem with the parameters the
/// configuration would use for `cfg.iterations` steps.
pub fn audit_lemma(cfg: &RunConfig, lemma: &str, trials: usize, seed: u64) -> Result<AuditOutput, CliError> {
    if !LEMMA_IDS.contains(&lemma) {
        return Err(CliError::Config(format!("unknown lemma id `{lemma}` (expected one of {})", LEMMA_IDS.join(", "))));
    }
    if trials == 0 {
        return Err(CliError::Config("trials must be positive".into()));
    }
    let prep = prepare(cfg)?;
    let inst = &prep.instance;
    let p = &inst.problem;
    let params = build_params(cfg, inst, cfg.iterations)?;
    let rng = SeededRng::new(seed, STREAM_AUDIT);
    let opts = InnerOptions::default();
    let mut estimate = None;
    let (report, details) = match lemma {
        "error-bounds" => {
            let d = audit_error_bounds(p, &params, trials, &rng, AUDIT_DUAL_SCALE, &opts)?;
            (combine_reports(lemma, &d), d)
        }
        "hoffman" => {
            // Each sampled ratio is checked against the configured σ̄.
            let ratios = hoffman_ratios(p, &params, trials, &rng, AUDIT_DUAL_SCALE, &opts)?;
            let mut rep = combine_reports(lemma, &[]);
            for &r in &ratios {
                rep.check(r, params.sigma_bar);
            }
            estimate = Some(ratios.iter().copied().fold(0.0, f64::max));
            (rep, Vec::new())
        }
        "potential-lower-bound" => (
            audit_potential_lower_bound(p, &params, trials, &rng, AUDIT_DUAL_SCALE, &opts)?,
            Vec::new(),
        ),
        "storm-recursion" => {
            // Iterates of `trials` STORM steps from the origin.
            let mut oracle = GradientOracle::new(prep.oracle, SeededRng::new(seed, STREAM_ORACLE))?;
            let mut state = SolverState::init(p, &vec![0.0; p.dim()], &vec![0.0; p.num_constraints()])?;
            let batch = storm_batch_size(trials);
            let s0 = salm::oracles::oracle_variance(prep.oracle, &p.objective.func, &state.x)? / batch as f64;
            state.grad_est = Some(oracle.sample_mean(&p.objective.func, &state.x, batch)?);
            let mut points = vec![state.x.clone()];
            for _ in 0..trials {
                step_alg3(p, &mut oracle, &params, &mut state)?;
                if !state.is_finite() {
                    return Err(CliError::Numerical("non-finite iterate while building the audit path".into()));
                }
                points.push(state.x.clone());
            }
            let l0 = inst.metadata.l0;
            let rep = audit_storm_recursion(&p.objective.func, prep.oracle, &points, params.alpha, s0, l0, p.lipschitz())?;
            (rep, Vec::new())
        }
        "descent" => {
            // Potential along an exact-oracle `alg1` run; each step must
            // not increase it beyond 1e-9.
            let mut ev = PotentialEvaluator::new(opts);
            let mut pr = params.clone();
            pr.iterations = trials;
            let out = run_alg1(
                p,
                &mut GradientOracle::exact(),
                &pr,
                &vec![0.0; p.dim()],
                &vec![0.0; p.num_constraints()],
                &RunOptions {
                    seed,
                    trace_stride: 1,
                    early_stop: None,
                },
                &mut ev,
            )?;
            let mut rep = combine_reports(lemma, &[]);
            let mut prev = out.trace.initial.potential;
            for r in &out.trace.records {
                if let (Some(a), Some(b)) = (prev, r.potential) {
                    rep.check(b, a + 1e-9);
                }
                prev = r.potential;
            }
            (rep, Vec::new())
        }
        _ => unreachable!("checked against LEMMA_IDS"),
    };
    let mut report = report;
    report.lemma = lemma.to_string();
    Ok(AuditOutput {
        lemma: lemma.to_string(),
        seed,
        report,
        details,
        estimate,
    })
}

/// Writes `audit.json`; a report with violations is an error with exit
/// code 3.
pub fn audit(cfg: &RunConfig, lemma: &str, trials: usize, seed: u64, out: &Path) -> Result<AuditOutput, CliError> {
    let res = audit_lemma(cfg, lemma, trials, seed)?;
    write_json(&out.join("audit.json"), &res)?;
    if !res.report.passed() {
        return Err(CliError::Audit(format!(
            "{lemma}: {} of {} checks violated (worst slack {:e})",
            res.report.violations, res.report.trials, res.report.worst_slack
        )));
    }
    Ok(res)
}

/// Problem document for generator `name` with `key=value` parameters and an
/// optional oracle block given the same way.
pub fn generate(name: &str, params: &[String], oracle: &[String]) -> Result<ProblemDocument, CliError> {
    let mut table = Table::new();
    table.insert("name".into(), Value::String(name.to_string()));
    for a in params {
        let (k, v) = parse_assignment(a)?;
        table.insert(k, v);
    }
    let spec: GeneratorSpec = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("generator `{name}`: {e}")))?;
    let mut doc = ProblemDocument::from_generator(spec)?;
    if !oracle.is_empty() {
        let mut t = Table::new();
        for a in oracle {
            let (k, v) = parse_assignment(a)?;
            t.insert(k, v);
        }
        let o: OracleConfig = Value::Table(t)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("oracle: {e}")))?;
        // Reject unusable combinations now rather than at solve time.
        o.build()?.validate_for(&doc.instance.problem.objective.func)?;
        doc.oracle = Some(o);
    }
    Ok(doc)
}

pub fn gen(name: &str, params: &[String], oracle: &[String], out: Option<&PathBuf>) -> Result<(), CliError> {
    let doc = generate(name, params, oracle)?;
    let mut text = doc.to_json()?;
    text.push('\n');
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            use std::io::Write;
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamsRequest {
    pub algorithm: Algorithm,
    pub schedule: ScheduleKind,
    pub lf: f64,
    pub l0: Option<f64>,
    pub norm_a: f64,
    pub rho: f64,
    pub sigma_bar: f64,
    pub iterations: usize,
    pub lk_convention: LkConvention,
}

pub fn params(req: &ParamsRequest) -> Result<SolverParams, CliError> {
    let l0 = req.l0.unwrap_or(req.lf);
    let p = match (req.schedule, req.algorithm) {
        (ScheduleKind::Theory, Algorithm::Alg3) => {
            derive_params_storm_with(req.lf, l0, req.norm_a, req.rho, req.sigma_bar, req.iterations, req.lk_convention)?
        }
        (ScheduleKind::Theory, _) => derive_params_alg1_with(req.lf, req.norm_a, req.rho, req.sigma_bar, req.iterations, req.lk_convention)?,
        (ScheduleKind::Scaled, alg) => {
            ScaledSchedule::for_algorithm(alg).params(req.lf, l0, req.norm_a, req.rho, req.sigma_bar, req.iterations, req.lk_convention)?
        }
    };
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use salm::OracleKind;

    #[test]
    fn slope_of_power_law() {
        let ts = [10, 100, 1000];
        let ys: Vec<f64> = ts.iter().map(|&t| 3.0 * (t as f64).powf(-0.25)).collect();
        assert!((loglog_slope(&ts, &ys).unwrap() + 0.25).abs() < 1e-12);
        assert_eq!(loglog_slope(&[10], &[1.0]), None);
        assert_eq!(loglog_slope(&[10, 100], &[1.0, 0.0]), None);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn gen_parses_keys() {
        let doc = generate("nonconvex_qp", &["n=4".into(), "m=2".into(), "seed=3".into()], &[]).unwrap();
        assert_eq!(doc.generator, Some(GeneratorSpec::NonconvexQp { n: 4, m: 2, seed: 3 }));
        assert!(generate("nope", &[], &[]).is_err());
        let doc = generate("nonconvex_qp", &["n=4".into(), "m=2".into()], &["kind=additive_noise".into(), "sigma=0.5".into()]).unwrap();
        assert_eq!(doc.oracle.unwrap().kind, OracleKind::AdditiveNoise { sigma: 0.5 });
        assert!(generate("nonconvex_qp", &["n=4".into(), "m=2".into()], &["kind=finite_sum".into()]).is_err());
    }
}
