//! Stochastic gradient oracles and sampled constraint pairs.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, kron_identity, norm_sq, Matrix, Vector};
use crate::objective::Objective;
use crate::problem::ConstrainedProblem;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleKind {
    Exact,
    /// `∇f(x) + (σ/√n)·N(0, I_n)`, so that `E‖F − ∇f‖² = σ²`.
    AdditiveNoise { sigma: f64 },
    /// Uniformly sampled component gradient of a finite-sum objective.
    FiniteSum,
}

/// One realization `ξ` of the oracle randomness. Evaluating the same ticket
/// at two points reuses the realization.
#[derive(Debug, Clone, PartialEq)]
pub enum Ticket {
    Exact,
    Noise(Vector),
    Index(usize),
}

#[derive(Debug, Clone)]
pub struct GradientOracle {
    kind: OracleKind,
    rng: SeededRng,
    tickets: u64,
    evaluations: u64,
}

impl GradientOracle {
    pub fn new(kind: OracleKind, rng: SeededRng) -> Result<Self> {
        if let OracleKind::AdditiveNoise { sigma } = kind {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::InvalidArgument(format!("noise level must be >= 0, got {sigma}")));
            }
        }
        Ok(Self {
            kind,
            rng,
            tickets: 0,
            evaluations: 0,
        })
    }

    pub fn exact() -> Self {
        Self::new(OracleKind::Exact, SeededRng::new(0, 0)).expect("exact oracle is always valid")
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    /// Checks that `f` can be served by this oracle kind.
    pub fn validate_for(&self, f: &Objective) -> Result<()> {
        if self.kind == OracleKind::FiniteSum && f.num_components().is_none() {
            return Err(Error::UnsupportedOracle("finite-sum sampling of this objective"));
        }
        Ok(())
    }

    /// Number of independent realizations drawn so far.
    pub fn tickets_drawn(&self) -> u64 {
        self.tickets
    }

    /// Number of stochastic gradients evaluated so far (a two-point query
    /// counts twice).
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn rng(&self) -> &SeededRng {
        &self.rng
    }

    pub fn draw_ticket(&mut self, f: &Objective) -> Result<Ticket> {
        self.tickets += 1;
        Ok(match self.kind {
            OracleKind::Exact => Ticket::Exact,
            OracleKind::AdditiveNoise { sigma } => {
                let n = f.dim();
                if sigma == 0.0 || n == 0 {
                    Ticket::Exact
                } else {
                    let s = sigma / (n as f64).sqrt();
                    Ticket::Noise(self.rng.normal_vec(n).into_iter().map(|v| v * s).collect())
                }
            }
            OracleKind::FiniteSum => {
                let m = f
                    .num_components()
                    .ok_or(Error::UnsupportedOracle("finite-sum sampling of this objective"))?;
                Ticket::Index(self.rng.index(m))
            }
        })
    }

    /// `∇f(x, ξ)` for the realization carried by `ticket`.
    pub fn eval(&mut self, f: &Objective, ticket: &Ticket, x: &[f64]) -> Result<Vector> {
        check_dim("oracle query", f.dim(), x.len())?;
        self.evaluations += 1;
        match ticket {
            Ticket::Exact => Ok(f.grad(x)),
            Ticket::Noise(e) => {
                let mut g = f.grad(x);
                axpy(1.0, e, &mut g);
                Ok(g)
            }
            Ticket::Index(i) => f.component_grad(*i, x),
        }
    }

    /// One unbiased draw `F(x)`.
    pub fn sample(&mut self, f: &Objective, x: &[f64]) -> Result<Vector> {
        let t = self.draw_ticket(f)?;
        self.eval(f, &t, x)
    }

    /// Mean of `batch` independent draws at `x`.
    pub fn sample_mean(&mut self, f: &Objective, x: &[f64], batch: usize) -> Result<Vector> {
        if batch == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        let mut acc = vec![0.0; f.dim()];
        for _ in 0..batch {
            let g = self.sample(f, x)?;
            axpy(1.0, &g, &mut acc);
        }
        acc.iter_mut().for_each(|v| *v /= batch as f64);
        Ok(acc)
    }

    /// `(∇f(x_new, ξ), ∇f(x_old, ξ))` under one fresh realization `ξ`.
    pub fn two_point(&mut self, f: &Objective, x_new: &[f64], x_old: &[f64]) -> Result<(Vector, Vector)> {
        let t = self.draw_ticket(f)?;
        let g_new = self.eval(f, &t, x_new)?;
        let g_old = self.eval(f, &t, x_old)?;
        Ok((g_new, g_old))
    }
}

/// Exact variance `E‖F(x) − ∇f(x)‖²` where it is known in closed form or by
/// enumeration.
pub fn oracle_variance(kind: OracleKind, f: &Objective, x: &[f64]) -> Result<f64> {
    match kind {
        OracleKind::Exact => Ok(0.0),
        OracleKind::AdditiveNoise { sigma } => Ok(sigma * sigma),
        OracleKind::FiniteSum => {
            let m = f
                .num_components()
                .ok_or(Error::UnsupportedOracle("finite-sum sampling of this objective"))?;
            let g = f.grad(x);
            let mut s = 0.0;
            for i in 0..m {
                let gi = f.component_grad(i, x)?;
                s += gi.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
            Ok(s / m as f64)
        }
    }
}

/// `F(x) + Aᵀy + ρAᵀ(Ax−b) + μ(x−z)` with one oracle draw.
#[allow(clippy::too_many_arguments)]
pub fn stochastic_prox_al_grad(
    p: &ConstrainedProblem,
    o: &mut GradientOracle,
    x: &[f64],
    y: &[f64],
    z: &[f64],
    rho: f64,
    mu: f64,
) -> Result<Vector> {
    check_dim("dual point", p.num_constraints(), y.len())?;
    check_dim("proximal center", p.dim(), z.len())?;
    let mut g = o.sample(&p.objective.func, x)?;
    p.add_constraint_terms(x, y, z, rho, mu, &mut g);
    Ok(g)
}

/// Distribution of the random constraint pair `(A_ζ, b_ζ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSampler {
    /// Always returns the same pair.
    Fixed { a: Matrix, b: Vector },
    /// Finitely many atoms with the given probabilities.
    Discrete { atoms: Vec<(Matrix, Vector)>, probs: Vec<f64> },
    /// `(A + σ_a·G, b + σ_b·g)` with standard Gaussian `G`, `g`.
    Gaussian { a: Matrix, b: Vector, sigma_a: f64, sigma_b: f64 },
    /// Random graph: pair `k = (i, j)` is present independently with
    /// probability `probs[k]`; present pairs carry incidence rows
    /// `e_i − e_j`, absent pairs zero rows. `A(ζ) = W(ζ) ⊗ I_block`, `b = 0`.
    RandomEdges { nodes: usize, block: usize, pairs: Vec<(usize, usize)>, probs: Vec<f64> },
}

impl ConstraintSampler {
    pub fn validate(&self) -> Result<()> {
        match self {
            ConstraintSampler::Fixed { a, b } => check_dim("sampler rhs", a.rows(), b.len()),
            ConstraintSampler::Discrete { atoms, probs } => {
                check_dim("sampler probabilities", atoms.len(), probs.len())?;
                let Some((a0, _)) = atoms.first() else {
                    return Err(Error::InvalidArgument("discrete sampler needs atoms".into()));
                };
                for (a, b) in atoms {
                    check_dim("atom rows", a0.rows(), a.rows())?;
                    check_dim("atom cols", a0.cols(), a.cols())?;
                    check_dim("atom rhs", a.rows(), b.len())?;
                }
                let total: f64 = probs.iter().sum();
                if probs.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument("atom probabilities must be a distribution".into()));
                }
                Ok(())
            }
            ConstraintSampler::Gaussian { a, b, sigma_a, sigma_b } => {
                check_dim("sampler rhs", a.rows(), b.len())?;
                if !(*sigma_a >= 0.0 && *sigma_b >= 0.0) {
                    return Err(Error::InvalidArgument("sampler noise must be >= 0".into()));
                }
                Ok(())
            }
            ConstraintSampler::RandomEdges { nodes, block, pairs, probs } => {
                check_dim("edge probabilities", pairs.len(), probs.len())?;
                if *block == 0 {
                    return Err(Error::InvalidArgument("block size must be positive".into()));
                }
                for &(i, j) in pairs {
                    if i >= *nodes || j >= *nodes || i == j {
                        return Err(Error::InvalidArgument(format!("bad edge ({i}, {j})")));
                    }
                }
                if probs.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
                    return Err(Error::InvalidArgument("edge probabilities must lie in (0, 1]".into()));
                }
                Ok(())
            }
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            ConstraintSampler::Fixed { a, .. } | ConstraintSampler::Gaussian { a, .. } => (a.rows(), a.cols()),
            ConstraintSampler::Discrete { atoms, .. } => (atoms[0].0.rows(), atoms[0].0.cols()),
            ConstraintSampler::RandomEdges { nodes, block, pairs, .. } => (pairs.len() * block, nodes * block),
        }
    }

    /// `(E[A_ζ], E[b_ζ])`.
    pub fn mean(&self) -> (Matrix, Vector) {
        match self {
            ConstraintSampler::Fixed { a, b } | ConstraintSampler::Gaussian { a, b, .. } => (a.clone(), b.clone()),
            ConstraintSampler::Discrete { atoms, probs } => {
                let (r, c) = self.dims();
                let mut a = vec![0.0; r * c];
                let mut b = vec![0.0; r];
                for ((ak, bk), &pk) in atoms.iter().zip(probs) {
                    axpy(pk, ak.data(), &mut a);
                    axpy(pk, bk, &mut b);
                }
                (Matrix::from_row_major(r, c, a).expect("sizes match"), b)
            }
            ConstraintSampler::RandomEdges { nodes, block, pairs, probs } => {
                let w = incidence(*nodes, pairs, probs);
                (kron_identity(&w, *block).expect("block >= 1"), vec![0.0; pairs.len() * block])
            }
        }
    }

    pub fn draw(&self, rng: &mut SeededRng) -> (Matrix, Vector) {
        match self {
            ConstraintSampler::Fixed { a, b } => (a.clone(), b.clone()),
            ConstraintSampler::Discrete { atoms, probs } => {
                let u = rng.uniform();
                let mut acc = 0.0;
                for (k, &pk) in probs.iter().enumerate() {
                    acc += pk;
                    if u < acc {
                        return atoms[k].clone();
                    }
                }
                atoms[atoms.len() - 1].clone()
            }
            ConstraintSampler::Gaussian { a, b, sigma_a, sigma_b } => {
                let da: Vec<f64> = a.data().iter().map(|v| v + sigma_a * rng.normal()).collect();
                let db: Vec<f64> = b.iter().map(|v| v + sigma_b * rng.normal()).collect();
                (Matrix::from_row_major(a.rows(), a.cols(), da).expect("sizes match"), db)
            }
            ConstraintSampler::RandomEdges { nodes, block, pairs, probs } => {
                let present: Vec<f64> = probs.iter().map(|&p| if rng.bernoulli(p) { 1.0 } else { 0.0 }).collect();
                let w = incidence(*nodes, pairs, &present);
                (kron_identity(&w, *block).expect("block >= 1"), vec![0.0; pairs.len() * block])
            }
        }
    }

    /// Full support with probabilities, when it is small enough to list.
    pub fn atoms(&self) -> Option<Vec<(f64, Matrix, Vector)>> {
        match self {
            ConstraintSampler::Fixed { a, b } => Some(vec![(1.0, a.clone(), b.clone())]),
            ConstraintSampler::Discrete { atoms, probs } => Some(
                atoms
                    .iter()
                    .zip(probs)
                    .map(|((a, b), &p)| (p, a.clone(), b.clone()))
                    .collect(),
            ),
            ConstraintSampler::Gaussian { sigma_a, sigma_b, a, b } => {
                if *sigma_a == 0.0 && *sigma_b == 0.0 {
                    Some(vec![(1.0, a.clone(), b.clone())])
                } else {
                    None
                }
            }
            ConstraintSampler::RandomEdges { nodes, block, pairs, probs } => {
                let k = pairs.len();
                if k > 12 {
                    return None;
                }
                let mut out = Vec::with_capacity(1 << k);
                for mask in 0u32..(1u32 << k) {
                    let mut p = 1.0;
                    let present: Vec<f64> = (0..k)
                        .map(|e| {
                            if mask & (1 << e) != 0 {
                                p *= probs[e];
                                1.0
                            } else {
                                p *= 1.0 - probs[e];
                                0.0
                            }
                        })
                        .collect();
                    if p == 0.0 {
                        continue;
                    }
                    let w = incidence(*nodes, pairs, &present);
                    out.push((p, kron_identity(&w, *block).expect("block >= 1"), vec![0.0; k * block]));
                }
                Some(out)
            }
        }
    }
}

/// Incidence matrix with row `k` equal to `weights[k]·(e_i − e_j)`.
pub fn incidence(nodes: usize, pairs: &[(usize, usize)], weights: &[f64]) -> Matrix {
    let mut w = Matrix::zeros(pairs.len(), nodes);
    for (k, (&(i, j), &wk)) in pairs.iter().zip(weights).enumerate() {
        if wk != 0.0 {
            w.set(k, i, wk);
            w.set(k, j, -wk);
        }
    }
    w
}

/// `A_ζ x − b_ζ`.
pub fn sampled_residual(a: &Matrix, b: &[f64], x: &[f64]) -> Vector {
    let mut r = a.mul_vec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri -= bi;
    }
    r
}

/// Two-sample estimator
/// `F(x) + A_{ζ¹}ᵀy + ρA_{ζ¹}ᵀ(A_{ζ²}x − b_{ζ²}) + μ(x−z)`, drawing `ζ¹`
/// then `ζ²` from `rng` and one oracle sample.
#[allow(clippy::too_many_arguments)]
pub fn stochastic_k_grad_twosample(
    p: &ConstrainedProblem,
    o: &mut GradientOracle,
    sampler: &ConstraintSampler,
    x: &[f64],
    y: &[f64],
    z: &[f64],
    rho: f64,
    mu: f64,
    rng: &mut SeededRng,
) -> Result<Vector> {
    let (rows, cols) = sampler.dims();
    check_dim("sampler columns", p.dim(), cols)?;
    check_dim("dual point", rows, y.len())?;
    check_dim("proximal center", p.dim(), z.len())?;
    let (a1, _b1) = sampler.draw(rng);
    let (a2, b2) = sampler.draw(rng);
    let g = o.sample(&p.objective.func, x)?;
    Ok(two_sample_combine(g, &a1, &a2, &b2, x, y, z, rho, mu))
}

/// Adds the constraint and proximal parts of the two-sample estimator to a
/// gradient sample `g`.
#[allow(clippy::too_many_arguments)]
pub fn two_sample_combine(
    mut g: Vector,
    a1: &Matrix,
    a2: &Matrix,
    b2: &[f64],
    x: &[f64],
    y: &[f64],
    z: &[f64],
    rho: f64,
    mu: f64,
) -> Vector {
    let mut w = sampled_residual(a2, b2, x);
    for (wi, yi) in w.iter_mut().zip(y) {
        *wi = yi + rho * *wi;
    }
    axpy(1.0, &a1.tmul_vec(&w), &mut g);
    if mu != 0.0 {
        for ((gi, xi), zi) in g.iter_mut().zip(x).zip(z) {
            *gi += mu * (xi - zi);
        }
    }
    g
}

/// Monte-Carlo estimate of `max_x E‖A_ζx − b_ζ‖²` over random points of a
/// bounded set, returned as its square root `L`.
pub fn estimate_second_moment_bound(
    sampler: &ConstraintSampler,
    set: &crate::geometry::PolyhedralSet,
    points: usize,
    draws_per_point: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    let (_, n) = sampler.dims();
    check_dim("sampler columns", set.dim(), n)?;
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x0: Vec<f64> = (0..n).map(|_| 10.0 * rng.normal()).collect();
        let x = set.project(&x0, 1e-10)?;
        let mut s = 0.0;
        for _ in 0..draws_per_point {
            let (a, b) = sampler.draw(rng);
            s += norm_sq(&sampled_residual(&a, &b, &x));
        }
        worst = worst.max(s / draws_per_point.max(1) as f64);
    }
    Ok(worst.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PolyhedralSet;
    use crate::linalg::norm;
    use crate::problem::ObjectiveModel;

    fn scalar_problem(q: f64) -> ConstrainedProblem {
        let obj = ObjectiveModel::new(Objective::diagonal_quadratic(&[q]), q.abs(), None).unwrap();
        ConstrainedProblem::new(obj, Matrix::identity(1), vec![0.0], PolyhedralSet::free(1)).unwrap()
    }

    fn two_atom_sum() -> Objective {
        // Component gradients at any x: 0 and 2 (linear terms 0 and 2).
        Objective::Mean {
            terms: vec![
                Objective::quadratic(Matrix::zeros(1, 1), vec![0.0]).unwrap(),
                Objective::quadratic(Matrix::zeros(1, 1), vec![2.0]).unwrap(),
            ],
        }
    }

    #[test]
    fn exact_and_zero_noise() {
        let f = Objective::diagonal_quadratic(&[1.0]);
        let mut o = GradientOracle::exact();
        assert_eq!(o.sample(&f, &[3.0]).unwrap(), vec![3.0]);
        let mut z = GradientOracle::new(OracleKind::AdditiveNoise { sigma: 0.0 }, SeededRng::new(1, 1)).unwrap();
        assert_eq!(z.sample(&f, &[3.0]).unwrap(), vec![3.0]);
        assert!(GradientOracle::new(OracleKind::AdditiveNoise { sigma: -1.0 }, SeededRng::new(1, 1)).is_err());
    }

    #[test]
    fn two_atom_finite_sum_mean() {
        let f = two_atom_sum();
        let mut o = GradientOracle::new(OracleKind::FiniteSum, SeededRng::new(5, 0)).unwrap();
        let n = 100_000;
        let mut s = 0.0;
        for _ in 0..n {
            let g = o.sample(&f, &[0.3]).unwrap()[0];
            assert!(g == 0.0 || g == 2.0);
            s += g;
        }
        let mean = s / n as f64;
        let se = 1.0 / (n as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * se, "{mean}");
        assert_eq!(o.evaluations(), n as u64);
    }

    #[test]
    fn finite_sum_requires_components() {
        let o = GradientOracle::new(OracleKind::FiniteSum, SeededRng::new(5, 0)).unwrap();
        assert!(o.validate_for(&Objective::zero(1)).is_err());
        assert!(o.validate_for(&two_atom_sum()).is_ok());
    }

    #[test]
    fn additive_noise_has_declared_variance() {
        let f = Objective::zero(4);
        let sigma = 0.5;
        let mut o = GradientOracle::new(OracleKind::AdditiveNoise { sigma }, SeededRng::new(9, 3)).unwrap();
        let trials = 20_000;
        let mut s = 0.0;
        for _ in 0..trials {
            s += norm_sq(&o.sample(&f, &[0.0; 4]).unwrap());
        }
        let v = s / trials as f64;
        assert!(v <= sigma * sigma * (1.0 + 3.0 / (trials as f64).sqrt()), "{v}");
        assert!(v >= sigma * sigma * (1.0 - 3.0 / (trials as f64).sqrt()), "{v}");
    }

    #[test]
    fn prox_grad_sample_examples() {
        let p = scalar_problem(1.0);
        let mut o = GradientOracle::exact();
        let g = stochastic_prox_al_grad(&p, &mut o, &[1.0], &[0.1], &[1.0], 0.0, 2.0).unwrap();
        assert_eq!(g, p.prox_al_grad(&[1.0], &[0.1], &[1.0], 0.0, 2.0).unwrap());
        assert!((g[0] - 1.1).abs() < 1e-15);
        let mut z = GradientOracle::new(OracleKind::AdditiveNoise { sigma: 0.0 }, SeededRng::new(2, 2)).unwrap();
        let g0 = stochastic_prox_al_grad(&p, &mut z, &[1.0], &[0.1], &[1.0], 0.0, 2.0).unwrap();
        assert!((g0[0] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn two_point_shares_realization() {
        let f = Objective::diagonal_quadratic(&[2.0, 1.0]);
        let mut o = GradientOracle::new(OracleKind::AdditiveNoise { sigma: 1.0 }, SeededRng::new(3, 3)).unwrap();
        let (a, b) = o.two_point(&f, &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(a, b);
        let (a, b) = o.two_point(&f, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        assert!((d[0] - 2.0).abs() < 1e-14 && d[1].abs() < 1e-14);
        assert_eq!(o.evaluations(), 4);
        assert_eq!(o.tickets_drawn(), 2);
        let mut e = GradientOracle::exact();
        let (a, b) = e.two_point(&f, &[1.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(a, f.grad(&[1.0, 1.0]));
        assert_eq!(b, f.grad(&[0.0, 1.0]));
    }

    fn two_atom_sampler() -> ConstraintSampler {
        ConstraintSampler::Discrete {
            atoms: vec![
                (Matrix::zeros(1, 1), vec![0.0]),
                (Matrix::diag(&[2.0]), vec![0.0]),
            ],
            probs: vec![0.5, 0.5],
        }
    }

    #[test]
    fn two_sample_enumeration_quadratic_term() {
        let p = ConstrainedProblem::new(
            ObjectiveModel::new(Objective::zero(1), 0.0, None).unwrap(),
            Matrix::identity(1),
            vec![0.0],
            PolyhedralSet::free(1),
        )
        .unwrap();
        let s = two_atom_sampler();
        let atoms = s.atoms().unwrap();
        let mut outcomes = Vec::new();
        let mut mean = 0.0;
        for (p1, a1, _) in &atoms {
            for (p2, a2, b2) in &atoms {
                let v = two_sample_combine(vec![0.0], a1, a2, b2, &[1.0], &[0.0], &[0.0], 1.0, 0.0)[0];
                outcomes.push(v);
                mean += p1 * p2 * v;
            }
        }
        assert_eq!(outcomes, vec![0.0, 0.0, 0.0, 4.0]);
        let exact = p.prox_al_grad(&[1.0], &[0.0], &[0.0], 1.0, 0.0).unwrap()[0];
        assert!((mean - exact).abs() < 1e-12);
        assert_eq!(mean, 1.0);
    }

    #[test]
    fn two_sample_enumeration_dual_term() {
        let s = two_atom_sampler();
        let atoms = s.atoms().unwrap();
        let mut mean = 0.0;
        let mut seen = Vec::new();
        for (p1, a1, _) in &atoms {
            for (p2, a2, b2) in &atoms {
                let v = two_sample_combine(vec![0.0], a1, a2, b2, &[0.0], &[1.0], &[0.0], 1.0, 0.0)[0];
                if !seen.contains(&v) {
                    seen.push(v);
                }
                mean += p1 * p2 * v;
            }
        }
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(seen, vec![0.0, 2.0]);
        assert_eq!(mean, 1.0);
    }

    #[test]
    fn degenerate_sampler_matches_deterministic_gradient() {
        let p = scalar_problem(1.0);
        let s = ConstraintSampler::Fixed { a: p.a.clone(), b: p.b.clone() };
        let mut o = GradientOracle::exact();
        let mut rng = SeededRng::new(1, 1);
        let g = stochastic_k_grad_twosample(&p, &mut o, &s, &[0.7], &[0.2], &[0.1], 1.0, 2.0, &mut rng).unwrap();
        let e = p.prox_al_grad(&[0.7], &[0.2], &[0.1], 1.0, 2.0).unwrap();
        assert!((g[0] - e[0]).abs() < 1e-15);
    }

    #[test]
    fn random_edges_mean_and_atoms() {
        let s = ConstraintSampler::RandomEdges { nodes: 2, block: 1, pairs: vec![(0, 1)], probs: vec![0.5] };
        s.validate().unwrap();
        let (a, b) = s.mean();
        assert_eq!(a.to_rows(), vec![vec![0.5, -0.5]]);
        assert_eq!(b, vec![0.0]);
        let atoms = s.atoms().unwrap();
        assert_eq!(atoms.len(), 2);
        let total: f64 = atoms.iter().map(|t| t.0).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let full = ConstraintSampler::RandomEdges { nodes: 2, block: 1, pairs: vec![(0, 1)], probs: vec![1.0] };
        let (a, _) = full.mean();
        assert!(norm(&a.mul_vec(&[1.0, 1.0])) == 0.0);
    }

    #[test]
    fn gaussian_sampler_unbiased() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, -1.0]], 2).unwrap();
        let s = ConstraintSampler::Gaussian { a: a.clone(), b: vec![1.0, 0.5], sigma_a: 0.3, sigma_b: 0.2 };
        let mut rng = SeededRng::new(8, 8);
        let n = 50_000;
        let mut acc = vec![0.0; 4];
        for _ in 0..n {
            let (ad, _) = s.draw(&mut rng);
            axpy(1.0 / n as f64, ad.data(), &mut acc);
        }
        let se = 0.3 / (n as f64).sqrt();
        for (m, e) in acc.iter().zip(a.data()) {
            assert!((m - e).abs() <= 4.0 * se);
        }
    }
}
