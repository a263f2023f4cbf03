//! Instance generators: a synthetic nonconvex QP family, decentralized
//! consensus over a random graph, relaxed network slicing, and
//! fairness-constrained classification. Each returns a problem with
//! metadata, and instances serialize through [`ProblemDocument`].

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PolyhedralSet;
use crate::linalg::{kron_identity, norm, operator_norm, orthonormal_columns, Matrix, Vector};
use crate::linalg::{DEFAULT_NORM_MAX_ITER, DEFAULT_NORM_TOL};
use crate::objective::{LossKind, Objective, SlicingObjective};
use crate::oracles::{incidence, ConstraintSampler, GradientOracle, OracleKind};
use crate::problem::{reformulate_inequality, ConstrainedProblem, ObjectiveModel};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetadata {
    pub lf: f64,
    /// Expected-smoothness constant of the finite-sum decomposition, or `L_f`
    /// when there is none.
    pub l0: f64,
    pub feasible_point: Vector,
    #[serde(default)]
    pub known_optimum: Option<Vector>,
    pub seed: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkInstance {
    pub name: String,
    pub problem: ConstrainedProblem,
    #[serde(default)]
    pub sampler: Option<ConstraintSampler>,
    pub metadata: InstanceMetadata,
}

impl BenchmarkInstance {
    fn build(name: &str, problem: ConstrainedProblem, sampler: Option<ConstraintSampler>, feasible: Vector, seed: u64) -> Result<Self> {
        let lf = problem.lipschitz();
        let l0 = problem.objective.func.expected_smoothness()?.unwrap_or(lf);
        let inst = Self {
            name: name.to_string(),
            problem,
            sampler,
            metadata: InstanceMetadata {
                lf,
                l0,
                feasible_point: feasible,
                known_optimum: None,
                seed,
                warnings: Vec::new(),
            },
        };
        inst.check_feasible_point(1e-9)?;
        Ok(inst)
    }

    /// `‖Ax − b‖ ≤ tol` and `x ∈ X` up to `tol` at the recorded point.
    pub fn check_feasible_point(&self, tol: f64) -> Result<()> {
        let x = &self.metadata.feasible_point;
        let p = &self.problem;
        let feas = p.feasibility(x);
        let viol = p.set.violation(x)?;
        if feas > tol || viol > tol {
            return Err(Error::InvalidArgument(format!(
                "recorded feasible point violates the constraints (residual {feas:e}, set violation {viol:e})"
            )));
        }
        Ok(())
    }
}

/// Canonical instance with `Q = diag(1, −1)` from the generator's examples,
/// or any user-supplied data on a box.
pub fn nonconvex_qp_from(q: Matrix, c: Vector, a: Matrix, b: Vector, set: PolyhedralSet) -> Result<ConstrainedProblem> {
    let obj = ObjectiveModel::with_derived_lipschitz(Objective::quadratic(q, c)?, None)?;
    ConstrainedProblem::new(obj, a, b, set)
}

/// Half-width of the box in [`gen_nonconvex_qp`].
pub const QP_BOX: f64 = 10.0;

/// `½xᵀQx + cᵀx` with `Q = UΛUᵀ`, eigenvalues in `[−1, 1]` and the first
/// one pinned at `−1`; `A` is Gaussian scaled by `1/√n` with full row rank;
/// `b = Ax_feas` for `x_feas` uniform in `[−5, 5]ⁿ`; `X = [−10, 10]ⁿ`.
pub fn gen_nonconvex_qp(n: usize, m: usize, seed: u64) -> Result<BenchmarkInstance> {
    if n == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if m > n {
        return Err(Error::InvalidArgument(format!("need m <= n, got m = {m}, n = {n}")));
    }
    let mut rng = SeededRng::new(seed, 0);
    let u = orthonormal_columns(n, &mut rng);
    let eig: Vec<f64> = (0..n).map(|i| if i == 0 { -1.0 } else { rng.uniform_in(-1.0, 1.0) }).collect();
    let mut q = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v: f64 = (0..n).map(|k| u.get(i, k) * eig[k] * u.get(j, k)).sum();
            q.set(i, j, v);
        }
    }
    // Exact symmetry.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (q.get(i, j) + q.get(j, i));
            q.set(i, j, v);
            q.set(j, i, v);
        }
    }
    let c = rng.normal_vec(n);
    let scale = 1.0 / (n as f64).sqrt();
    let a = loop {
        let data: Vec<f64> = rng.normal_vec(m * n).into_iter().map(|v| v * scale).collect();
        let a = Matrix::from_row_major(m, n, data)?;
        if full_row_rank(&a) {
            break a;
        }
    };
    let x_feas: Vector = (0..n).map(|_| rng.uniform_in(-0.5 * QP_BOX, 0.5 * QP_BOX)).collect();
    let b = a.mul_vec(&x_feas);
    let set = PolyhedralSet::uniform_box(n, -QP_BOX, QP_BOX)?;
    // ½xᵀQx ≥ −½‖x‖² ≥ −½nB² and cᵀx ≥ −B‖c‖₁ on the box.
    let lower = -0.5 * n as f64 * QP_BOX * QP_BOX - QP_BOX * c.iter().map(|v| v.abs()).sum::<f64>();
    let obj = ObjectiveModel::with_derived_lipschitz(Objective::quadratic(q, c)?, Some(lower))?;
    let p = ConstrainedProblem::new(obj, a, b, set)?;
    BenchmarkInstance::build("nonconvex_qp", p, None, x_feas, seed)
}

fn full_row_rank(a: &Matrix) -> bool {
    let m = a.rows();
    if m == 0 {
        return true;
    }
    // Smallest eigenvalue of AAᵀ by Cholesky with a relative pivot threshold.
    let g = a.matmul(&a.transpose()).expect("conforming shapes");
    let scale = (0..m).map(|i| g.get(i, i)).fold(0.0, f64::max);
    let mut l = vec![0.0; m * m];
    for j in 0..m {
        let mut d = g.get(j, j);
        for k in 0..j {
            d -= l[j * m + k] * l[j * m + k];
        }
        if d <= 1e-8 * scale {
            return false;
        }
        let d = d.sqrt();
        l[j * m + j] = d;
        for i in j + 1..m {
            let mut s = g.get(i, j);
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            l[i * m + j] = s / d;
        }
    }
    true
}

fn connected(nodes: usize, pairs: &[(usize, usize)]) -> bool {
    if nodes == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); nodes];
    for &(i, j) in pairs {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; nodes];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Separable strongly convex locals `½ Σ d_k x_k² + c_kx_k` with
/// `d_k ∈ [0.5, 1.5]` and `c_k` standard normal, and their exact minimum.
pub fn random_local_quadratics(agents: usize, dim: usize, seed: u64) -> (Vec<Objective>, f64) {
    let mut rng = SeededRng::new(seed, 1);
    let mut lower = 0.0;
    let locals = (0..agents)
        .map(|_| {
            let d: Vec<f64> = (0..dim).map(|_| rng.uniform_in(0.5, 1.5)).collect();
            let c = rng.normal_vec(dim);
            lower += d.iter().zip(&c).map(|(dk, ck)| -ck * ck / (2.0 * dk)).sum::<f64>();
            Objective::Quadratic {
                q: Matrix::diag(&d),
                c,
                offset: 0.0,
            }
        })
        .collect();
    (locals, lower / agents as f64)
}

/// Half-width of each agent's box in [`gen_consensus`].
pub const CONSENSUS_BOX: f64 = 10.0;

/// `min (1/N) Σ f_i(x_i)` s.t. `E[A(ζ)]x = 0`, with edge `(i, j)` present
/// independently with probability `p_ij`. The mean constraint matrix is
/// `W_p ⊗ I_n` where row `k` of `W_p` is `p_k(e_i − e_j)`.
pub fn gen_consensus(
    agents: usize,
    dim: usize,
    edges: &[(usize, usize, f64)],
    locals: Option<Vec<Objective>>,
    seed: u64,
) -> Result<BenchmarkInstance> {
    if agents < 2 {
        return Err(Error::InvalidArgument("consensus needs at least 2 agents".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("agent dimension must be positive".into()));
    }
    let mut pairs = Vec::with_capacity(edges.len());
    let mut probs = Vec::with_capacity(edges.len());
    for &(i, j, p) in edges {
        if i >= agents || j >= agents || i == j {
            return Err(Error::InvalidArgument(format!("invalid edge ({i}, {j})")));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidArgument(format!("edge probability must lie in (0, 1], got {p}")));
        }
        pairs.push((i, j));
        probs.push(p);
    }
    if !connected(agents, &pairs) {
        return Err(Error::InvalidArgument("the support graph is disconnected; consensus is unattainable".into()));
    }
    let (locals, lower) = match locals {
        Some(l) => {
            if l.len() != agents || l.iter().any(|f| f.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    context: "local objectives",
                    expected: agents,
                    actual: l.len(),
                });
            }
            (l, None)
        }
        None => {
            let (l, lb) = random_local_quadratics(agents, dim, seed);
            (l, Some(lb))
        }
    };
    let func = Objective::Consensus { block: dim, locals };
    let obj = ObjectiveModel::with_derived_lipschitz(func, lower)?;
    let a = kron_identity(&incidence(agents, &pairs, &probs), dim)?;
    let b = vec![0.0; a.rows()];
    let set = PolyhedralSet::uniform_box(agents * dim, -CONSENSUS_BOX, CONSENSUS_BOX)?;
    let p = ConstrainedProblem::new(obj, a, b, set)?;
    let sampler = ConstraintSampler::RandomEdges {
        nodes: agents,
        block: dim,
        pairs,
        probs,
    };
    sampler.validate()?;
    BenchmarkInstance::build("consensus", p, Some(sampler), vec![0.0; agents * dim], seed)
}

/// All pairs with a common probability.
pub fn complete_graph(agents: usize, prob: f64) -> Vec<(usize, usize, f64)> {
    let mut e = Vec::new();
    for i in 0..agents {
        for j in i + 1..agents {
            e.push((i, j, prob));
        }
    }
    e
}

/// Path `0 − 1 − … − (N−1)` with a common probability.
pub fn path_graph(agents: usize, prob: f64) -> Vec<(usize, usize, f64)> {
    (1..agents).map(|i| (i - 1, i, prob)).collect()
}

/// Largest pairwise block distance `max_{i<j} ‖x_i − x_j‖`.
pub fn max_disagreement(x: &[f64], dim: usize) -> f64 {
    let n = x.len() / dim.max(1);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = (0..dim).map(|k| (x[i * dim + k] - x[j * dim + k]).powi(2)).sum();
            worst = worst.max(d.sqrt());
        }
    }
    worst
}

/// Random connected graph: a random spanning tree plus extra links.
fn random_topology(nodes: usize, links: usize, rng: &mut SeededRng) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..nodes).collect();
    for i in (1..nodes).rev() {
        order.swap(i, rng.index(i + 1));
    }
    let mut e: Vec<(usize, usize)> = (1..nodes).map(|i| (order[rng.index(i)], order[i])).collect();
    let max_links = nodes * (nodes - 1) / 2;
    let mut guard = 0;
    while e.len() < links.min(max_links) && guard < 10_000 {
        guard += 1;
        let (i, j) = (rng.index(nodes), rng.index(nodes));
        if i != j && !e.iter().any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i)) {
            e.push((i, j));
        }
    }
    e
}

fn shortest_path(nodes: usize, links: &[(usize, usize)], s: usize, t: usize) -> Vec<usize> {
    let mut adj = vec![Vec::new(); nodes];
    for &(i, j) in links {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut prev = vec![usize::MAX; nodes];
    prev[s] = s;
    let mut queue = VecDeque::from([s]);
    while let Some(v) = queue.pop_front() {
        if v == t {
            break;
        }
        for &w in &adj[v] {
            if prev[w] == usize::MAX {
                prev[w] = v;
                queue.push_back(w);
            }
        }
    }
    let mut path = vec![t];
    let mut v = t;
    while v != s {
        v = prev[v];
        path.push(v);
    }
    path.reverse();
    path
}

/// Relaxed network slicing on a random topology.
///
/// Each flow `k` follows a shortest path between two random nodes; its
/// function is hosted at one node of the path, chosen by `x_{k,v} ∈ [0,1]`
/// with `Σ_v x_{k,v} = 1`. The rate on the first link equals
/// `Σ_v w_{k,v}x_{k,v}` and is conserved along the path; rates lie in
/// `[0, 1]`. The objective is the total rate plus `σP_ε(x)`.
pub fn gen_network_slicing(
    flows: usize,
    nodes: usize,
    links: usize,
    p: f64,
    eps: f64,
    sigma: f64,
    seed: u64,
) -> Result<BenchmarkInstance> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "regularizer offset must be positive (the gradient is unbounded at 0 otherwise), got {eps}"
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (0, 1), got {p}")));
    }
    if flows == 0 || nodes < 2 {
        return Err(Error::InvalidArgument("need at least one flow and two nodes".into()));
    }
    let mut rng = SeededRng::new(seed, 2);
    let topo = random_topology(nodes, links.max(nodes - 1), &mut rng);
    let factor: Vec<f64> = (0..nodes).map(|_| rng.uniform_in(0.5, 1.0)).collect();

    struct Flow {
        hosts: Vec<usize>,
        weights: Vec<f64>,
        hops: usize,
    }
    let mut spec = Vec::with_capacity(flows);
    for _ in 0..flows {
        let s = rng.index(nodes);
        let mut t = rng.index(nodes - 1);
        if t >= s {
            t += 1;
        }
        let path = shortest_path(nodes, &topo, s, t);
        let demand = rng.uniform_in(0.5, 1.0);
        spec.push(Flow {
            weights: path.iter().map(|&v| demand * factor[v]).collect(),
            hops: path.len() - 1,
            hosts: path,
        });
    }
    let nx: usize = spec.iter().map(|f| f.hosts.len()).sum();
    let nr: usize = spec.iter().map(|f| f.hops).sum();
    let n = nx + nr;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut b: Vector = Vec::new();
    let mut groups = Vec::with_capacity(flows);
    let mut feasible = vec![0.0; n];
    let (mut xo, mut ro) = (0, nx);
    for f in &spec {
        let k = f.hosts.len();
        groups.push((xo..xo + k).collect::<Vec<_>>());
        let mut simplex = vec![0.0; n];
        simplex[xo..xo + k].iter_mut().for_each(|v| *v = 1.0);
        rows.push(simplex);
        b.push(1.0);
        let mut rate = vec![0.0; n];
        rate[ro] = 1.0;
        for (i, w) in f.weights.iter().enumerate() {
            rate[xo + i] = -w;
        }
        rows.push(rate);
        b.push(0.0);
        for h in 0..f.hops - 1 {
            let mut cons = vec![0.0; n];
            cons[ro + h] = 1.0;
            cons[ro + h + 1] = -1.0;
            rows.push(cons);
            b.push(0.0);
        }
        feasible[xo] = 1.0;
        feasible[ro..ro + f.hops].iter_mut().for_each(|v| *v = f.weights[0]);
        xo += k;
        ro += f.hops;
    }
    let a = Matrix::from_rows(&rows, n)?;
    let mut linear = vec![0.0; n];
    linear[nx..].iter_mut().for_each(|v| *v = 1.0);
    let s = SlicingObjective {
        linear,
        groups,
        p,
        eps,
        sigma,
    };
    s.validate()?;
    let lower = s.lower_bound();
    let obj = ObjectiveModel::new(Objective::Slicing(s.clone()), s.lipschitz(), Some(lower))?;
    let set = PolyhedralSet::uniform_box(n, 0.0, 1.0)?;
    let prob = ConstrainedProblem::new(obj, a, b, set)?;
    BenchmarkInstance::build("network_slicing", prob, None, feasible, seed)
}

/// Labeled data with one sensitive attribute per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairDataset {
    pub features: Matrix,
    pub labels: Vector,
    pub sensitive: Vector,
}

/// Two Gaussian clusters at `±1·mean` per label, with a sensitive
/// attribute equal to the label with probability 0.8. The last feature is
/// a constant bias.
pub fn synthetic_fair_dataset(samples: usize, features: usize, seed: u64) -> Result<FairDataset> {
    if samples < 2 || features < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples and 2 features".into()));
    }
    let mut rng = SeededRng::new(seed, 3);
    let d = features - 1;
    let mean: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let mn = norm(&mean).max(1e-12);
    let mean: Vec<f64> = mean.iter().map(|v| v / mn).collect();
    let mut data = Vec::with_capacity(samples * features);
    let mut labels = Vec::with_capacity(samples);
    let mut sensitive = Vec::with_capacity(samples);
    for i in 0..samples {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 };
        for &mk in &mean {
            data.push(y * mk + rng.normal());
        }
        data.push(1.0);
        labels.push(y);
        let agree = rng.bernoulli(0.8);
        sensitive.push(if (y > 0.0) == agree { 1.0 } else { 0.0 });
    }
    Ok(FairDataset {
        features: Matrix::from_row_major(samples, features, data)?,
        labels,
        sensitive,
    })
}

/// Half-width of the parameter box in [`gen_fair_classification`].
pub const FAIR_BOX: f64 = 10.0;

/// `a = (1/N) Σ (z_i − z̄) x_i`.
pub fn covariance_row(data: &FairDataset) -> Vector {
    let n = data.labels.len();
    let zbar = data.sensitive.iter().sum::<f64>() / n as f64;
    let mut a = vec![0.0; data.features.cols()];
    for i in 0..n {
        let w = (data.sensitive[i] - zbar) / n as f64;
        for (ak, xk) in a.iter_mut().zip(data.features.row(i)) {
            *ak += w * xk;
        }
    }
    a
}

/// Empirical loss over `θ ∈ [−10, 10]^d` subject to `|aᵀθ| ≤ c`, turned
/// into equalities with two slack variables.
pub fn gen_fair_classification(data: &FairDataset, loss: LossKind, c_cov: f64, seed: u64) -> Result<BenchmarkInstance> {
    loss.validate()?;
    if !(c_cov >= 0.0 && c_cov.is_finite()) {
        return Err(Error::InvalidArgument(format!("covariance bound must be >= 0, got {c_cov}")));
    }
    let n = data.labels.len();
    if n == 0 || data.features.rows() != n || data.sensitive.len() != n {
        return Err(Error::InvalidArgument("dataset rows, labels and attributes must agree".into()));
    }
    if data.labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidArgument("labels must be -1 or +1".into()));
    }
    let d = data.features.cols();
    let a = covariance_row(data);
    let mut warnings = Vec::new();
    if norm(&a) == 0.0 {
        warnings.push("sensitive attribute is constant: the covariance constraints are vacuous".to_string());
    }
    let mut rows = a.clone();
    rows.extend(a.iter().map(|v| -v));
    let ineq = Matrix::from_row_major(2, d, rows)?;
    let func = Objective::Fair {
        features: data.features.clone(),
        labels: data.labels.clone(),
        loss,
    };
    let obj = ObjectiveModel::with_derived_lipschitz(func, Some(loss.lower_bound()))?;
    let set = PolyhedralSet::uniform_box(d, -FAIR_BOX, FAIR_BOX)?;
    let p = reformulate_inequality(obj, ineq, vec![c_cov, c_cov], set)?;
    let mut feasible = vec![0.0; d];
    feasible.extend([-c_cov, -c_cov]);
    let mut inst = BenchmarkInstance::build("fair_classification", p, None, feasible, seed)?;
    inst.metadata.warnings = warnings;
    Ok(inst)
}

/// Generator name plus parameters, as stored in problem documents and
/// accepted by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum GeneratorSpec {
    NonconvexQp {
        n: usize,
        m: usize,
        #[serde(default)]
        seed: u64,
    },
    Consensus {
        agents: usize,
        dim: usize,
        #[serde(default = "default_edge_prob")]
        edge_prob: f64,
        #[serde(default)]
        topology: Topology,
        #[serde(default)]
        seed: u64,
    },
    NetworkSlicing {
        flows: usize,
        #[serde(default = "default_nodes")]
        nodes: usize,
        #[serde(default = "default_links")]
        links: usize,
        #[serde(default = "default_p")]
        p: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_sigma_pen")]
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    FairClassification {
        samples: usize,
        features: usize,
        loss: LossKind,
        c_cov: f64,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    #[default]
    Complete,
    Path,
    Ring,
}

fn default_edge_prob() -> f64 {
    0.5
}
fn default_nodes() -> usize {
    6
}
fn default_links() -> usize {
    8
}
fn default_p() -> f64 {
    0.5
}
fn default_eps() -> f64 {
    0.1
}
fn default_sigma_pen() -> f64 {
    1.0
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<BenchmarkInstance> {
        match *self {
            GeneratorSpec::NonconvexQp { n, m, seed } => gen_nonconvex_qp(n, m, seed),
            GeneratorSpec::Consensus {
                agents,
                dim,
                edge_prob,
                topology,
                seed,
            } => {
                let edges = match topology {
                    Topology::Complete => complete_graph(agents, edge_prob),
                    Topology::Path => path_graph(agents, edge_prob),
                    Topology::Ring => {
                        let mut e = path_graph(agents, edge_prob);
                        if agents > 2 {
                            e.push((agents - 1, 0, edge_prob));
                        }
                        e
                    }
                };
                gen_consensus(agents, dim, &edges, None, seed)
            }
            GeneratorSpec::NetworkSlicing {
                flows,
                nodes,
                links,
                p,
                eps,
                sigma,
                seed,
            } => gen_network_slicing(flows, nodes, links, p, eps, sigma, seed),
            GeneratorSpec::FairClassification {
                samples,
                features,
                loss,
                c_cov,
                seed,
            } => {
                let data = synthetic_fair_dataset(samples, features, seed)?;
                gen_fair_classification(&data, loss, c_cov, seed)
            }
        }
    }
}

/// Oracle block of a problem document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    #[serde(flatten)]
    pub kind: OracleKind,
    #[serde(default)]
    pub seed: u64,
}

impl OracleConfig {
    pub fn build(&self) -> Result<GradientOracle> {
        GradientOracle::new(self.kind, SeededRng::new(self.seed, crate::solvers::STREAM_ORACLE))
    }
}

/// Serialized instance: optional generator provenance, the data itself, and
/// an optional oracle block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDocument {
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    pub instance: BenchmarkInstance,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
}

impl ProblemDocument {
    pub fn from_generator(spec: GeneratorSpec) -> Result<Self> {
        Ok(Self {
            instance: spec.generate()?,
            generator: Some(spec),
            oracle: None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(format!("cannot serialize problem: {e}")))
    }

    /// Parses and validates a document.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s).map_err(|e| Error::Config(format!("invalid problem document: {e}")))?;
        doc.instance.problem.validate()?;
        if let Some(sm) = &doc.instance.sampler {
            sm.validate()?;
        }
        let na = if doc.instance.problem.a.rows() == 0 {
            0.0
        } else {
            operator_norm(&doc.instance.problem.a, DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER)?
        };
        let stored = doc.instance.problem.norm_a;
        if (na - stored).abs() > 1e-6 * na.max(1.0) {
            return Err(Error::Config(format!("stored ‖A‖ = {stored} disagrees with the matrix ({na})")));
        }
        Ok(doc)
    }
}

/// Sampled check that `‖∇f(x) − ∇f(x')‖ ≤ L_f‖x − x'‖` on pairs in `X`;
/// returns the largest observed ratio.
pub fn sampled_lipschitz_ratio(p: &ConstrainedProblem, pairs: usize, rng: &mut SeededRng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = crate::diagnostics::random_point(&p.set, rng, 5.0)?;
        let xp = crate::diagnostics::random_point(&p.set, rng, 5.0)?;
        let d = crate::linalg::dist(&x, &xp);
        if d == 0.0 {
            continue;
        }
        let g = p.objective.grad(&x);
        let gp = p.objective.grad(&xp);
        worst = worst.max(crate::linalg::dist(&g, &gp) / d);
    }
    Ok(worst)
}

/// `Σ_i |x_i − round(x_i)|` over the hosting variables, a measure of how far
/// the relaxed slicing solution is from a binary one.
pub fn integrality_gap(x: &[f64], groups: &[Vec<usize>]) -> f64 {
    groups
        .iter()
        .flat_map(|g| g.iter())
        .map(|&i| (x[i] - x[i].round()).abs())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qp_generator_invariants() {
        let inst = gen_nonconvex_qp(8, 3, 4).unwrap();
        inst.check_feasible_point(1e-9).unwrap();
        assert_eq!(inst.problem.num_constraints(), 3);
        assert!((inst.metadata.lf - 1.0).abs() < 1e-5, "{}", inst.metadata.lf);
        assert!(gen_nonconvex_qp(2, 3, 0).is_err());
    }

    #[test]
    fn consensus_examples() {
        let inst = gen_consensus(2, 1, &[(0, 1, 1.0)], None, 0).unwrap();
        assert_eq!(inst.problem.a.to_rows(), vec![vec![1.0, -1.0]]);
        assert_eq!(inst.problem.feasibility(&[1.0, 1.0]), 0.0);
        let inst = gen_consensus(2, 1, &[(0, 1, 0.5)], None, 0).unwrap();
        assert_eq!(inst.problem.a.to_rows(), vec![vec![0.5, -0.5]]);
        let inst = gen_consensus(3, 1, &path_graph(3, 1.0), None, 0).unwrap();
        assert_eq!(inst.problem.a.to_rows(), vec![vec![1.0, -1.0, 0.0], vec![0.0, 1.0, -1.0]]);
        assert!(gen_consensus(3, 1, &[(0, 1, 1.0)], None, 0).is_err());
        assert!(gen_consensus(1, 1, &[], None, 0).is_err());
    }

    #[test]
    fn slicing_generator() {
        let inst = gen_network_slicing(3, 6, 8, 0.5, 0.1, 1.0, 5).unwrap();
        inst.check_feasible_point(1e-9).unwrap();
        let Objective::Slicing(s) = &inst.problem.objective.func else { panic!() };
        // The recorded point is one-hot, so the penalty vanishes.
        assert!(s.regularizer(&inst.metadata.feasible_point).abs() < 1e-12);
        assert!(gen_network_slicing(3, 6, 8, 0.5, 0.0, 1.0, 5).is_err());
    }

    #[test]
    fn fair_covariance_example() {
        let data = FairDataset {
            features: Matrix::from_row_major(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            labels: vec![1.0, -1.0],
            sensitive: vec![0.0, 1.0],
        };
        assert_eq!(covariance_row(&data), vec![-0.25, 0.25]);
        let inst = gen_fair_classification(&data, LossKind::Smoothed01, 0.1, 0).unwrap();
        assert_eq!(inst.problem.dim(), 4);
        assert!(inst.metadata.warnings.is_empty());
        let flat = FairDataset {
            sensitive: vec![1.0, 1.0],
            ..data
        };
        let inst = gen_fair_classification(&flat, LossKind::Smoothed01, 0.1, 0).unwrap();
        assert_eq!(inst.metadata.warnings.len(), 1);
    }

    #[test]
    fn document_round_trip() {
        let doc = ProblemDocument::from_generator(GeneratorSpec::NonconvexQp { n: 4, m: 2, seed: 1 }).unwrap();
        let s = doc.to_json().unwrap();
        let back = ProblemDocument::from_json(&s).unwrap();
        assert_eq!(back, doc);
    }
}
