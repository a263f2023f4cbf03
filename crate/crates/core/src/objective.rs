//! Smooth objective families with analytic gradients.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, dot, operator_norm, Matrix, Vector, DEFAULT_NORM_MAX_ITER, DEFAULT_NORM_TOL};

/// Per-sample loss for the fairness-constrained classifier, as a function of
/// the margin `m = y·θᵀx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// `log(1+e^{−m}) − log(1+e^{−m−μ})`, nonconvex for `μ > 0`.
    LogisticDifference { mu: f64 },
    /// Cubic interpolation between 1 (for `m < −1`) and 0 (for `m > 1`).
    Smoothed01,
    /// Plain logistic loss, the convex baseline.
    Logistic,
}

/// `log(1 + e^{−m})` without overflow.
fn softplus_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// Derivative of `log(1 + e^{−m})`, i.e. `−1/(1+e^{m})`.
fn softplus_neg_prime(m: f64) -> f64 {
    if m > 0.0 {
        let e = (-m).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + m.exp())
    }
}

impl LossKind {
    pub fn value(&self, m: f64) -> f64 {
        match *self {
            LossKind::LogisticDifference { mu } => softplus_neg(m) - softplus_neg(m + mu),
            LossKind::Smoothed01 => {
                if m > 1.0 {
                    0.0
                } else if m < -1.0 {
                    1.0
                } else {
                    0.25 * m * m * m - 0.75 * m + 0.5
                }
            }
            LossKind::Logistic => softplus_neg(m),
        }
    }

    pub fn derivative(&self, m: f64) -> f64 {
        match *self {
            LossKind::LogisticDifference { mu } => softplus_neg_prime(m) - softplus_neg_prime(m + mu),
            LossKind::Smoothed01 => {
                if m.abs() > 1.0 {
                    0.0
                } else {
                    0.75 * m * m - 0.75
                }
            }
            LossKind::Logistic => softplus_neg_prime(m),
        }
    }

    /// `sup |V''|` over the real line.
    pub fn curvature_bound(&self) -> f64 {
        match self {
            LossKind::LogisticDifference { .. } | LossKind::Logistic => 0.25,
            LossKind::Smoothed01 => 1.5,
        }
    }

    /// All three losses are nonnegative (`μ ≥ 0` for the difference loss).
    pub fn lower_bound(&self) -> f64 {
        0.0
    }

    pub fn validate(&self) -> Result<()> {
        if let LossKind::LogisticDifference { mu } = self {
            if !(mu.is_finite() && *mu >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "logistic difference parameter must be finite and >= 0, got {mu}"
                )));
            }
        }
        Ok(())
    }
}

/// The nonconvex part of the relaxed network-slicing objective.
///
/// `f(v) = cᵀv + σ Σ_g (Σ_{i∈g} (v_i+ε)^p − c_g)` with
/// `c_g = (1+ε)^p + (|g|−1)ε^p`. For `v_i < 0` each power term is continued
/// by its second-order Taylor expansion at `v_i = 0`, so the gradient stays
/// Lipschitz with the same constant on all of ℝⁿ and agrees with the power
/// law on the box `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicingObjective {
    pub linear: Vector,
    pub groups: Vec<Vec<usize>>,
    pub p: f64,
    pub eps: f64,
    pub sigma: f64,
}

impl SlicingObjective {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidArgument(format!("p must lie in (0,1), got {}", self.p)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "regularizer offset must be positive, got {}",
                self.eps
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("penalty weight must be >= 0, got {}", self.sigma)));
        }
        let n = self.linear.len();
        for g in &self.groups {
            if g.is_empty() || g.iter().any(|&i| i >= n) {
                return Err(Error::InvalidArgument("slicing group indices out of range".into()));
            }
        }
        Ok(())
    }

    pub fn group_constant(&self, size: usize) -> f64 {
        (1.0 + self.eps).powf(self.p) + (size as f64 - 1.0) * self.eps.powf(self.p)
    }

    fn power(&self, v: f64) -> f64 {
        let (p, e) = (self.p, self.eps);
        if v >= 0.0 {
            (v + e).powf(p)
        } else {
            let d1 = p * e.powf(p - 1.0);
            let d2 = p * (p - 1.0) * e.powf(p - 2.0);
            e.powf(p) + d1 * v + 0.5 * d2 * v * v
        }
    }

    fn power_prime(&self, v: f64) -> f64 {
        let (p, e) = (self.p, self.eps);
        if v >= 0.0 {
            p * (v + e).powf(p - 1.0)
        } else {
            p * e.powf(p - 1.0) + p * (p - 1.0) * e.powf(p - 2.0) * v
        }
    }

    /// `P_ε(v)` without the weight σ.
    pub fn regularizer(&self, v: &[f64]) -> f64 {
        self.groups
            .iter()
            .map(|g| g.iter().map(|&i| self.power(v[i])).sum::<f64>() - self.group_constant(g.len()))
            .sum()
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        dot(&self.linear, v) + self.sigma * self.regularizer(v)
    }

    pub fn grad(&self, v: &[f64]) -> Vector {
        let mut g = self.linear.clone();
        for grp in &self.groups {
            for &i in grp {
                g[i] += self.sigma * self.power_prime(v[i]);
            }
        }
        g
    }

    pub fn lipschitz(&self) -> f64 {
        self.sigma * self.p * (1.0 - self.p) * self.eps.powf(self.p - 2.0)
    }

    /// Lower bound over `v ≥ 0` with nonnegative linear cost: every power
    /// term is at least `ε^p`.
    pub fn lower_bound(&self) -> f64 {
        self.sigma
            * self
                .groups
                .iter()
                .map(|g| g.len() as f64 * self.eps.powf(self.p) - self.group_constant(g.len()))
                .sum::<f64>()
    }
}

/// Objective function families. Each has a value, an analytic gradient and,
/// where the structure allows, a finite-sum decomposition `f = (1/m) Σ f_i`
/// used by the finite-sum oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Objective {
    /// `½xᵀQx + cᵀx + offset`; `q` is expected symmetric.
    Quadratic { q: Matrix, c: Vector, #[serde(default)] offset: f64 },
    /// `(1/m) Σ terms_i(x)`.
    Mean { terms: Vec<Objective> },
    /// `(1/N) Σ locals_i(x_i)` over `N` stacked blocks of size `block`.
    Consensus { block: usize, locals: Vec<Objective> },
    Slicing(SlicingObjective),
    /// `(1/N) Σ V(y_i θᵀx_i)` with `x_i` the rows of `features`.
    Fair { features: Matrix, labels: Vector, loss: LossKind },
    /// `inner(x)` on the leading coordinates of `(x, t)`, constant in `t`.
    Slack { inner: Box<Objective>, slack_dim: usize },
}

impl Objective {
    pub fn quadratic(q: Matrix, c: Vector) -> Result<Self> {
        let o = Objective::Quadratic { q, c, offset: 0.0 };
        o.validate()?;
        Ok(o)
    }

    /// `½ a x²`-style separable helper: `½ Σ d_i x_i²`.
    pub fn diagonal_quadratic(d: &[f64]) -> Self {
        Objective::Quadratic {
            q: Matrix::diag(d),
            c: vec![0.0; d.len()],
            offset: 0.0,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Objective::Quadratic {
            q: Matrix::zeros(dim, dim),
            c: vec![0.0; dim],
            offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Objective::Quadratic { q, c, offset } => {
                check_dim("quadratic rows", q.cols(), q.rows())?;
                check_dim("quadratic linear term", q.rows(), c.len())?;
                if !q.is_finite() || c.iter().any(|v| !v.is_finite()) || !offset.is_finite() {
                    return Err(Error::InvalidArgument("quadratic data must be finite".into()));
                }
                Ok(())
            }
            Objective::Mean { terms } => {
                let Some(first) = terms.first() else {
                    return Err(Error::InvalidArgument("finite sum needs at least one term".into()));
                };
                let d = first.dim();
                for t in terms {
                    t.validate()?;
                    check_dim("finite-sum term", d, t.dim())?;
                }
                Ok(())
            }
            Objective::Consensus { block, locals } => {
                if locals.is_empty() || *block == 0 {
                    return Err(Error::InvalidArgument("consensus needs agents and block >= 1".into()));
                }
                for l in locals {
                    l.validate()?;
                    check_dim("consensus local objective", *block, l.dim())?;
                }
                Ok(())
            }
            Objective::Slicing(s) => s.validate(),
            Objective::Fair { features, labels, loss } => {
                check_dim("fair labels", features.rows(), labels.len())?;
                if features.rows() == 0 {
                    return Err(Error::InvalidArgument("empty dataset".into()));
                }
                if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
                    return Err(Error::InvalidArgument("labels must be -1 or +1".into()));
                }
                loss.validate()
            }
            Objective::Slack { inner, .. } => inner.validate(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic { c, .. } => c.len(),
            Objective::Mean { terms } => terms.first().map_or(0, |t| t.dim()),
            Objective::Consensus { block, locals } => block * locals.len(),
            Objective::Slicing(s) => s.linear.len(),
            Objective::Fair { features, .. } => features.cols(),
            Objective::Slack { inner, slack_dim } => inner.dim() + slack_dim,
        }
    }

    /// Value at `x`; the caller guarantees `x.len() == dim()`.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Objective::Quadratic { q, c, offset } => 0.5 * dot(x, &q.mul_vec(x)) + dot(c, x) + offset,
            Objective::Mean { terms } => {
                terms.iter().map(|t| t.value(x)).sum::<f64>() / terms.len() as f64
            }
            Objective::Consensus { block, locals } => {
                locals
                    .iter()
                    .enumerate()
                    .map(|(i, l)| l.value(&x[i * block..(i + 1) * block]))
                    .sum::<f64>()
                    / locals.len() as f64
            }
            Objective::Slicing(s) => s.value(x),
            Objective::Fair { features, labels, loss } => {
                let n = labels.len() as f64;
                (0..features.rows())
                    .map(|i| loss.value(labels[i] * dot(features.row(i), x)))
                    .sum::<f64>()
                    / n
            }
            Objective::Slack { inner, .. } => inner.value(&x[..inner.dim()]),
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vector {
        let mut g = vec![0.0; self.dim()];
        self.add_grad(x, 1.0, &mut g);
        g
    }

    /// `out += s·∇f(x)`.
    pub fn add_grad(&self, x: &[f64], s: f64, out: &mut [f64]) {
        match self {
            Objective::Quadratic { q, c, .. } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += s * (dot(q.row(i), x) + c[i]);
                }
            }
            Objective::Mean { terms } => {
                let w = s / terms.len() as f64;
                for t in terms {
                    t.add_grad(x, w, out);
                }
            }
            Objective::Consensus { block, locals } => {
                let w = s / locals.len() as f64;
                for (i, l) in locals.iter().enumerate() {
                    let r = i * block..(i + 1) * block;
                    l.add_grad(&x[r.clone()], w, &mut out[r]);
                }
            }
            Objective::Slicing(sl) => axpy(s, &sl.grad(x), out),
            Objective::Fair { features, labels, loss } => {
                let w = s / labels.len() as f64;
                for i in 0..features.rows() {
                    let row = features.row(i);
                    let d = loss.derivative(labels[i] * dot(row, x));
                    if d != 0.0 {
                        axpy(w * d * labels[i], row, out);
                    }
                }
            }
            Objective::Slack { inner, .. } => {
                let n = inner.dim();
                inner.add_grad(&x[..n], s, &mut out[..n]);
            }
        }
    }

    /// Number of components in the finite-sum decomposition, if any.
    pub fn num_components(&self) -> Option<usize> {
        match self {
            Objective::Mean { terms } => Some(terms.len()),
            Objective::Consensus { locals, .. } => Some(locals.len()),
            Objective::Fair { labels, .. } => Some(labels.len()),
            Objective::Slack { inner, .. } => inner.num_components(),
            _ => None,
        }
    }

    /// `∇f_i(x)` of component `i`, scaled so that the components average to
    /// `∇f(x)`.
    pub fn component_grad(&self, i: usize, x: &[f64]) -> Result<Vector> {
        let mut g = vec![0.0; self.dim()];
        self.add_component_grad(i, x, &mut g)?;
        Ok(g)
    }

    fn add_component_grad(&self, i: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Objective::Mean { terms } => {
                let t = terms.get(i).ok_or_else(|| component_range(i, terms.len()))?;
                t.add_grad(x, 1.0, out);
                Ok(())
            }
            Objective::Consensus { block, locals } => {
                let l = locals.get(i).ok_or_else(|| component_range(i, locals.len()))?;
                let r = i * block..(i + 1) * block;
                l.add_grad(&x[r.clone()], 1.0, &mut out[r]);
                Ok(())
            }
            Objective::Fair { features, labels, loss } => {
                if i >= labels.len() {
                    return Err(component_range(i, labels.len()));
                }
                let row = features.row(i);
                let d = loss.derivative(labels[i] * dot(row, x));
                axpy(d * labels[i], row, out);
                Ok(())
            }
            Objective::Slack { inner, .. } => {
                let n = inner.dim();
                inner.add_component_grad(i, &x[..n], &mut out[..n])
            }
            _ => Err(Error::UnsupportedOracle("finite-sum sampling of this objective")),
        }
    }

    /// A Lipschitz constant of `∇f` derived from the structure.
    pub fn smoothness_bound(&self) -> Result<f64> {
        Ok(match self {
            Objective::Quadratic { q, .. } => {
                if q.rows() == 0 {
                    0.0
                } else {
                    operator_norm(q, DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER)? * (1.0 + 1e-7)
                }
            }
            Objective::Mean { terms } => {
                // The mean of quadratics is again a quadratic; use its exact
                // norm when possible, otherwise average the term bounds.
                if let Some(q) = mean_quadratic(terms) {
                    operator_norm(&q, DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER)? * (1.0 + 1e-7)
                } else {
                    let mut s = 0.0;
                    for t in terms {
                        s += t.smoothness_bound()?;
                    }
                    s / terms.len() as f64
                }
            }
            Objective::Consensus { locals, .. } => {
                let mut m: f64 = 0.0;
                for l in locals {
                    m = m.max(l.smoothness_bound()?);
                }
                m / locals.len() as f64
            }
            Objective::Slicing(s) => s.lipschitz(),
            Objective::Fair { features, loss, .. } => {
                let nx = operator_norm(features, DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER)? * (1.0 + 1e-7);
                loss.curvature_bound() * nx * nx / features.rows() as f64
            }
            Objective::Slack { inner, .. } => inner.smoothness_bound()?,
        })
    }

    /// Expected-smoothness constant `L_0` for uniform component sampling:
    /// `E_i‖∇f_i(x) − ∇f_i(y)‖² ≤ L_0²‖x−y‖²` with `L_0² = mean_i L_i²`.
    pub fn expected_smoothness(&self) -> Result<Option<f64>> {
        let comps: Vec<f64> = match self {
            Objective::Mean { terms } => {
                terms.iter().map(|t| t.smoothness_bound()).collect::<Result<_>>()?
            }
            Objective::Consensus { locals, .. } => {
                locals.iter().map(|t| t.smoothness_bound()).collect::<Result<_>>()?
            }
            Objective::Fair { features, loss, .. } => (0..features.rows())
                .map(|i| loss.curvature_bound() * dot(features.row(i), features.row(i)))
                .collect(),
            Objective::Slack { inner, .. } => return inner.expected_smoothness(),
            _ => return Ok(None),
        };
        let ms = comps.iter().map(|l| l * l).sum::<f64>() / comps.len() as f64;
        Ok(Some(ms.sqrt()))
    }
}

fn component_range(i: usize, m: usize) -> Error {
    Error::InvalidArgument(format!("component {i} out of range 0..{m}"))
}

fn mean_quadratic(terms: &[Objective]) -> Option<Matrix> {
    let mut acc: Option<Matrix> = None;
    for t in terms {
        let Objective::Quadratic { q, .. } = t else { return None };
        acc = Some(match acc {
            None => q.clone(),
            Some(a) => {
                let data: Vec<f64> = a.data().iter().zip(q.data()).map(|(x, y)| x + y).collect();
                Matrix::from_row_major(a.rows(), a.cols(), data).ok()?
            }
        });
    }
    acc.map(|a| a.scale(1.0 / terms.len() as f64))
}
