//! The template `min f(x) s.t. Ax = b, x ∈ X` and its augmented Lagrangian.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::PolyhedralSet;
use crate::linalg::{axpy, dot, norm_sq, operator_norm, Matrix, Vector, DEFAULT_NORM_MAX_ITER, DEFAULT_NORM_TOL};
use crate::objective::Objective;

/// An objective together with its smoothness constant and an optional lower
/// bound over the feasible set. `lower_bound = None` means unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveModel {
    pub func: Objective,
    pub lipschitz: f64,
    #[serde(default)]
    pub lower_bound: Option<f64>,
}

impl ObjectiveModel {
    pub fn new(func: Objective, lipschitz: f64, lower_bound: Option<f64>) -> Result<Self> {
        func.validate()?;
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "smoothness constant must be finite and >= 0, got {lipschitz}"
            )));
        }
        Ok(Self {
            func,
            lipschitz,
            lower_bound,
        })
    }

    /// Uses the structural smoothness bound of `func`.
    pub fn with_derived_lipschitz(func: Objective, lower_bound: Option<f64>) -> Result<Self> {
        let l = func.smoothness_bound()?;
        Self::new(func, l, lower_bound)
    }

    pub fn dim(&self) -> usize {
        self.func.dim()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.func.value(x)
    }

    pub fn grad(&self, x: &[f64]) -> Vector {
        self.func.grad(x)
    }
}

/// Which Lipschitz constant of `∇_x K` to use in step-size formulas.
///
/// `Squared` is `L_f + ρ‖A‖² + μ`, the true constant. `Linear` reproduces the
/// alternative reading `L_f + ρ‖A‖ + μ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LkConvention {
    #[default]
    Squared,
    Linear,
}

pub fn smoothness_constant_k(lf: f64, norm_a: f64, rho: f64, mu: f64) -> f64 {
    lf + rho * norm_a * norm_a + mu
}

pub fn smoothness_constant_k_with(lf: f64, norm_a: f64, rho: f64, mu: f64, conv: LkConvention) -> f64 {
    match conv {
        LkConvention::Squared => smoothness_constant_k(lf, norm_a, rho, mu),
        LkConvention::Linear => lf + rho * norm_a + mu,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedProblem {
    pub objective: ObjectiveModel,
    pub a: Matrix,
    pub b: Vector,
    pub set: PolyhedralSet,
    pub norm_a: f64,
}

impl ConstrainedProblem {
    pub fn new(objective: ObjectiveModel, a: Matrix, b: Vector, set: PolyhedralSet) -> Result<Self> {
        let norm_a = if a.rows() == 0 || a.cols() == 0 {
            0.0
        } else {
            operator_norm(&a, DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER)?
        };
        let p = Self {
            objective,
            a,
            b,
            set,
            norm_a,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.objective.dim();
        check_dim("constraint matrix columns", n, self.a.cols())?;
        check_dim("set dimension", n, self.set.dim())?;
        check_dim("constraint right-hand side", self.a.rows(), self.b.len())?;
        if self.b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("right-hand side must be finite".into()));
        }
        self.set.validate()?;
        self.objective.func.validate()
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn num_constraints(&self) -> usize {
        self.a.rows()
    }

    pub fn lipschitz(&self) -> f64 {
        self.objective.lipschitz
    }

    /// `Ax − b`.
    pub fn residual(&self, x: &[f64]) -> Vector {
        let mut r = self.a.mul_vec(x);
        for (ri, bi) in r.iter_mut().zip(&self.b) {
            *ri -= bi;
        }
        r
    }

    pub fn feasibility(&self, x: &[f64]) -> f64 {
        norm_sq(&self.residual(x)).sqrt()
    }

    fn check_xy(&self, x: &[f64], y: &[f64]) -> Result<()> {
        check_dim("primal point", self.dim(), x.len())?;
        check_dim("dual point", self.num_constraints(), y.len())
    }

    /// `L_ρ(x,y) = f(x) + ⟨Ax−b, y⟩ + (ρ/2)‖Ax−b‖²`.
    pub fn al_value(&self, x: &[f64], y: &[f64], rho: f64) -> Result<f64> {
        self.check_xy(x, y)?;
        let r = self.residual(x);
        Ok(self.objective.value(x) + dot(&r, y) + 0.5 * rho * norm_sq(&r))
    }

    /// `K(x,y,z) = L_ρ(x,y) + (μ/2)‖x−z‖²`.
    pub fn k_value(&self, x: &[f64], y: &[f64], z: &[f64], rho: f64, mu: f64) -> Result<f64> {
        check_dim("proximal center", self.dim(), z.len())?;
        let d: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(self.al_value(x, y, rho)? + 0.5 * mu * d)
    }

    /// `∇_x K = ∇f(x) + Aᵀy + ρAᵀ(Ax−b) + μ(x−z)`.
    pub fn prox_al_grad(&self, x: &[f64], y: &[f64], z: &[f64], rho: f64, mu: f64) -> Result<Vector> {
        self.check_xy(x, y)?;
        check_dim("proximal center", self.dim(), z.len())?;
        let mut g = self.objective.grad(x);
        self.add_constraint_terms(x, y, z, rho, mu, &mut g);
        Ok(g)
    }

    /// `out += Aᵀy + ρAᵀ(Ax−b) + μ(x−z)`; shapes are assumed checked.
    pub(crate) fn add_constraint_terms(&self, x: &[f64], y: &[f64], z: &[f64], rho: f64, mu: f64, out: &mut [f64]) {
        if self.a.rows() > 0 {
            let mut w = self.residual(x);
            for (wi, yi) in w.iter_mut().zip(y) {
                *wi = yi + rho * *wi;
            }
            axpy(1.0, &self.a.tmul_vec(&w), out);
        }
        if mu != 0.0 {
            for ((o, xi), zi) in out.iter_mut().zip(x).zip(z) {
                *o += mu * (xi - zi);
            }
        }
    }
}

/// Turns `min f(x) s.t. Ax ≤ b, x ∈ X` into an equality-constrained problem
/// over `(x, t)` with `Ax − t = b` and `t ≤ 0`.
pub fn reformulate_inequality(
    objective: ObjectiveModel,
    a: Matrix,
    b: Vector,
    set: PolyhedralSet,
) -> Result<ConstrainedProblem> {
    let n = objective.dim();
    check_dim("inequality matrix columns", n, a.cols())?;
    check_dim("inequality right-hand side", a.rows(), b.len())?;
    check_dim("set dimension", n, set.dim())?;
    let m = a.rows();
    if m == 0 {
        return ConstrainedProblem::new(objective, a, b, set);
    }
    let a_ext = a.hstack(&Matrix::identity(m).scale(-1.0))?;
    let slack_set = PolyhedralSet::boxed(vec![f64::NEG_INFINITY; m], vec![0.0; m])?;
    let set_ext = PolyhedralSet::product(vec![set, slack_set])?;
    let func = Objective::Slack {
        inner: Box::new(objective.func),
        slack_dim: m,
    };
    let obj_ext = ObjectiveModel::new(func, objective.lipschitz, objective.lower_bound)?;
    ConstrainedProblem::new(obj_ext, a_ext, b, set_ext)
}
