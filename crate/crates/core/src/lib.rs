pub mod error;
pub mod benchmarks;
pub mod diagnostics;
pub mod geometry;
pub mod linalg;
pub mod objective;
pub mod oracles;
pub mod problem;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
pub use geometry::PolyhedralSet;
pub use linalg::{kron_identity, operator_norm, Matrix, Vector};
pub use objective::{LossKind, Objective, SlicingObjective};
pub use oracles::{ConstraintSampler, GradientOracle, OracleKind, Ticket};
pub use problem::{reformulate_inequality, smoothness_constant_k, ConstrainedProblem, LkConvention, ObjectiveModel};
pub use rng::SeededRng;
pub use benchmarks::{BenchmarkInstance, GeneratorSpec, InstanceMetadata, ProblemDocument};
pub use diagnostics::{stationarity_residual, AuditReport, PotentialEvaluator, StationarityResidual};
pub use solvers::{Algorithm, RunOptions, RunOutput, RunStatus, SolverParams, SolverState, Trace, TraceRecord};
