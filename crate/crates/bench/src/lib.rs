//! Fixtures shared by the benchmarks.

use salm::benchmarks::{gen_nonconvex_qp, BenchmarkInstance};
use salm::solvers::{Algorithm, ScaledSchedule, SolverParams, SolverState};
use salm::{LkConvention, Result};

/// The rate-sweep instance, `gen_nonconvex_qp(20, 5)`.
pub fn sweep_instance() -> BenchmarkInstance {
    gen_nonconvex_qp(20, 5, 0).expect("generator accepts these sizes")
}

pub fn scaled_params(inst: &BenchmarkInstance, alg: Algorithm, t: usize) -> Result<SolverParams> {
    let p = &inst.problem;
    ScaledSchedule::for_algorithm(alg).params(inst.metadata.lf, inst.metadata.l0, p.norm_a, 5.0, 1.0, t, LkConvention::default())
}

pub fn origin_state(inst: &BenchmarkInstance) -> Result<SolverState> {
    let p = &inst.problem;
    SolverState::init(p, &vec![0.0; p.dim()], &vec![0.0; p.num_constraints()])
}
