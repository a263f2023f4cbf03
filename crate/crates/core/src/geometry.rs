//! Polyhedral sets `X = {x : Hx ≤ h}` and Euclidean projection onto them.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, norm_sq, solve_consistent, Matrix, Vector};

pub const DEFAULT_PROJECTION_TOL: f64 = 1e-10;

/// Closed convex polyhedral set.
///
/// `Simplex` is the scaled probability simplex `{x ≥ 0, Σx = radius}`.
/// `Halfspaces` carries a user assertion `bounded` since boundedness of a
/// general `{Hx ≤ h}` is not checked. `Product` is the Cartesian product of
/// its parts in order; it is what the slack reformulation produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolyhedralSet {
    FreeSpace {
        dim: usize,
    },
    Box {
        #[serde(with = "ext_floats")]
        lo: Vector,
        #[serde(with = "ext_floats")]
        hi: Vector,
    },
    NonnegativeOrthant {
        dim: usize,
    },
    Simplex {
        dim: usize,
        radius: f64,
    },
    Halfspaces {
        h_mat: Matrix,
        h: Vector,
        #[serde(default)]
        bounded: bool,
    },
    Product {
        parts: Vec<PolyhedralSet>,
    },
}

/// Serializes ±∞ as the strings `"inf"` / `"-inf"` so JSON round-trips.
mod ext_floats {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let reprs: Vec<Repr> = v
            .iter()
            .map(|&x| {
                if x == f64::INFINITY {
                    Repr::Str("inf".into())
                } else if x == f64::NEG_INFINITY {
                    Repr::Str("-inf".into())
                } else {
                    Repr::Num(x)
                }
            })
            .collect();
        reprs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let reprs = Vec::<Repr>::deserialize(d)?;
        reprs
            .into_iter()
            .map(|r| match r {
                Repr::Num(x) => Ok(x),
                Repr::Str(s) => match s.as_str() {
                    "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                    "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                    other => Err(serde::de::Error::custom(format!("bad bound {other:?}"))),
                },
            })
            .collect()
    }
}

impl PolyhedralSet {
    pub fn free(dim: usize) -> Self {
        PolyhedralSet::FreeSpace { dim }
    }

    pub fn boxed(lo: Vector, hi: Vector) -> Result<Self> {
        let s = PolyhedralSet::Box { lo, hi };
        s.validate()?;
        Ok(s)
    }

    pub fn uniform_box(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::boxed(vec![lo; dim], vec![hi; dim])
    }

    pub fn simplex(dim: usize, radius: f64) -> Result<Self> {
        let s = PolyhedralSet::Simplex { dim, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn halfspaces(h_mat: Matrix, h: Vector, bounded: bool) -> Result<Self> {
        let s = PolyhedralSet::Halfspaces { h_mat, h, bounded };
        s.validate()?;
        Ok(s)
    }

    pub fn product(parts: Vec<PolyhedralSet>) -> Result<Self> {
        let s = PolyhedralSet::Product { parts };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PolyhedralSet::FreeSpace { .. } | PolyhedralSet::NonnegativeOrthant { .. } => Ok(()),
            PolyhedralSet::Box { lo, hi } => {
                check_dim("box bounds", lo.len(), hi.len())?;
                for (i, (l, u)) in lo.iter().zip(hi).enumerate() {
                    if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                        return Err(Error::InvalidArgument(format!(
                            "box bound {i} is invalid: [{l}, {u}]"
                        )));
                    }
                }
                Ok(())
            }
            PolyhedralSet::Simplex { dim, radius } => {
                if *dim == 0 || !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "simplex needs dim >= 1 and finite radius > 0 (dim {dim}, radius {radius})"
                    )));
                }
                Ok(())
            }
            PolyhedralSet::Halfspaces { h_mat, h, .. } => {
                check_dim("halfspace right-hand side", h_mat.rows(), h.len())?;
                if !h_mat.is_finite() || h.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("halfspace data must be finite".into()));
                }
                Ok(())
            }
            PolyhedralSet::Product { parts } => parts.iter().try_for_each(|p| p.validate()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PolyhedralSet::FreeSpace { dim }
            | PolyhedralSet::NonnegativeOrthant { dim }
            | PolyhedralSet::Simplex { dim, .. } => *dim,
            PolyhedralSet::Box { lo, .. } => lo.len(),
            PolyhedralSet::Halfspaces { h_mat, .. } => h_mat.cols(),
            PolyhedralSet::Product { parts } => parts.iter().map(|p| p.dim()).sum(),
        }
    }

    pub fn is_bounded(&self) -> bool {
        match self {
            PolyhedralSet::FreeSpace { dim } | PolyhedralSet::NonnegativeOrthant { dim } => *dim == 0,
            PolyhedralSet::Box { lo, hi } => lo.iter().chain(hi).all(|v| v.is_finite()),
            PolyhedralSet::Simplex { .. } => true,
            PolyhedralSet::Halfspaces { bounded, .. } => *bounded,
            PolyhedralSet::Product { parts } => parts.iter().all(|p| p.is_bounded()),
        }
    }

    /// The `{x : Hx ≤ h}` description. Infinite box sides produce no row.
    pub fn to_halfspaces(&self) -> (Matrix, Vector) {
        let n = self.dim();
        let mut rows: Vec<Vector> = Vec::new();
        let mut rhs: Vector = Vec::new();
        self.push_rows(0, n, &mut rows, &mut rhs);
        let m = Matrix::from_rows(&rows, n).expect("rows built with matching width");
        (m, rhs)
    }

    fn push_rows(&self, offset: usize, n: usize, rows: &mut Vec<Vector>, rhs: &mut Vector) {
        let unit = |i: usize, s: f64| {
            let mut r = vec![0.0; n];
            r[offset + i] = s;
            r
        };
        match self {
            PolyhedralSet::FreeSpace { .. } => {}
            PolyhedralSet::Box { lo, hi } => {
                for i in 0..lo.len() {
                    if hi[i].is_finite() {
                        rows.push(unit(i, 1.0));
                        rhs.push(hi[i]);
                    }
                    if lo[i].is_finite() {
                        rows.push(unit(i, -1.0));
                        rhs.push(-lo[i]);
                    }
                }
            }
            PolyhedralSet::NonnegativeOrthant { dim } => {
                for i in 0..*dim {
                    rows.push(unit(i, -1.0));
                    rhs.push(0.0);
                }
            }
            PolyhedralSet::Simplex { dim, radius } => {
                for i in 0..*dim {
                    rows.push(unit(i, -1.0));
                    rhs.push(0.0);
                }
                let mut up = vec![0.0; n];
                let mut down = vec![0.0; n];
                for i in 0..*dim {
                    up[offset + i] = 1.0;
                    down[offset + i] = -1.0;
                }
                rows.push(up);
                rhs.push(*radius);
                rows.push(down);
                rhs.push(-*radius);
            }
            PolyhedralSet::Halfspaces { h_mat, h, .. } => {
                for i in 0..h_mat.rows() {
                    let mut r = vec![0.0; n];
                    r[offset..offset + h_mat.cols()].copy_from_slice(h_mat.row(i));
                    rows.push(r);
                    rhs.push(h[i]);
                }
            }
            PolyhedralSet::Product { parts } => {
                let mut off = offset;
                for p in parts {
                    p.push_rows(off, n, rows, rhs);
                    off += p.dim();
                }
            }
        }
    }

    /// `max(0, max_i (Hx − h)_i)` under the halfspace reduction.
    pub fn violation(&self, x: &[f64]) -> Result<f64> {
        check_dim("set violation", self.dim(), x.len())?;
        Ok(self.violation_unchecked(x))
    }

    fn violation_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            PolyhedralSet::FreeSpace { .. } => 0.0,
            PolyhedralSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .fold(0.0, |m, (&v, (&l, &u))| m.max(v - u).max(l - v)),
            PolyhedralSet::NonnegativeOrthant { .. } => x.iter().fold(0.0, |m, &v| m.max(-v)),
            PolyhedralSet::Simplex { radius, .. } => {
                let s: f64 = x.iter().sum();
                let neg = x.iter().fold(0.0f64, |m, &v| m.max(-v));
                neg.max((s - radius).abs())
            }
            PolyhedralSet::Halfspaces { h_mat, h, .. } => (0..h_mat.rows())
                .fold(0.0, |m, i| m.max(dot(h_mat.row(i), x) - h[i])),
            PolyhedralSet::Product { parts } => {
                let mut off = 0;
                let mut m: f64 = 0.0;
                for p in parts {
                    let d = p.dim();
                    m = m.max(p.violation_unchecked(&x[off..off + d]));
                    off += d;
                }
                m
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && self.violation_unchecked(x) <= tol
    }

    /// Euclidean projection. Exact for every variant except `Halfspaces`,
    /// which runs Dykstra's method to accuracy `tol`.
    pub fn project(&self, x: &[f64], tol: f64) -> Result<Vector> {
        check_dim("projection", self.dim(), x.len())?;
        let mut out = x.to_vec();
        self.project_into(&mut out, tol)?;
        Ok(out)
    }

    /// In-place variant of [`project`](Self::project).
    pub fn project_into(&self, x: &mut [f64], tol: f64) -> Result<()> {
        check_dim("projection", self.dim(), x.len())?;
        match self {
            PolyhedralSet::FreeSpace { .. } => Ok(()),
            PolyhedralSet::Box { lo, hi } => {
                for ((v, &l), &u) in x.iter_mut().zip(lo).zip(hi) {
                    *v = v.clamp(l, u);
                }
                Ok(())
            }
            PolyhedralSet::NonnegativeOrthant { .. } => {
                x.iter_mut().for_each(|v| *v = v.max(0.0));
                Ok(())
            }
            PolyhedralSet::Simplex { radius, .. } => {
                project_simplex(x, *radius);
                Ok(())
            }
            PolyhedralSet::Halfspaces { h_mat, h, .. } => {
                if !(tol > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "projection tolerance must be positive, got {tol}"
                    )));
                }
                let p = dykstra(h_mat, h, x, tol)?;
                x.copy_from_slice(&p);
                Ok(())
            }
            PolyhedralSet::Product { parts } => {
                let mut off = 0;
                for p in parts {
                    let d = p.dim();
                    p.project_into(&mut x[off..off + d], tol)?;
                    off += d;
                }
                Ok(())
            }
        }
    }
}

/// Sort-and-threshold projection onto `{x ≥ 0, Σx = r}`.
fn project_simplex(x: &mut [f64], r: f64) {
    let mut u: Vec<f64> = x.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - r) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            theta = t;
        }
    }
    x.iter_mut().for_each(|v| *v = (*v - theta).max(0.0));
}

/// Sweep cap for Dykstra: `10·dim·rows`, floored so that small or
/// ill-conditioned systems still get room to converge.
pub fn dykstra_sweep_cap(dim: usize, rows: usize) -> usize {
    (10 * dim * rows).max(10_000)
}

fn dykstra(h_mat: &Matrix, h: &[f64], x0: &[f64], tol: f64) -> Result<Vector> {
    let m = h_mat.rows();
    let n = h_mat.cols();
    let mut x = x0.to_vec();
    if m == 0 {
        return Ok(x);
    }
    let row_norm_sq: Vec<f64> = (0..m).map(|i| norm_sq(h_mat.row(i))).collect();
    for i in 0..m {
        if row_norm_sq[i] == 0.0 && h[i] < 0.0 {
            return Err(Error::InfeasibleSet { residual: -h[i] });
        }
    }
    let violation = |x: &[f64]| {
        (0..m)
            .filter(|&i| row_norm_sq[i] > 0.0)
            .fold(0.0f64, |acc, i| {
                acc.max((dot(h_mat.row(i), x) - h[i]) / row_norm_sq[i].sqrt())
            })
    };
    if violation(&x) <= 0.0 {
        return Ok(x);
    }
    // Dykstra keeps one scalar correction per halfspace since each correction
    // is a multiple of the row normal.
    let mut corr = vec![0.0; m];
    let cap = dykstra_sweep_cap(n, m);
    let mut last_viol = f64::INFINITY;
    for sweep in 0..cap {
        let mut change_sq = 0.0;
        for i in 0..m {
            if row_norm_sq[i] == 0.0 {
                continue;
            }
            let a = h_mat.row(i);
            // Undo the previous correction, then project onto row i.
            // y = x + c_i a ; p = proj(y) ; c_i = (y − p)/a
            let ax = dot(a, &x) + corr[i] * row_norm_sq[i];
            let excess = ax - h[i];
            let new_c = if excess > 0.0 { excess / row_norm_sq[i] } else { 0.0 };
            let delta = corr[i] - new_c;
            if delta != 0.0 {
                for (xj, aj) in x.iter_mut().zip(a) {
                    *xj += delta * aj;
                }
                change_sq += delta * delta * row_norm_sq[i];
            }
            corr[i] = new_c;
        }
        let viol = violation(&x);
        last_viol = viol;
        if viol <= tol && change_sq.sqrt() <= tol {
            return Ok(x);
        }
        if (sweep + 1) % POLISH_EVERY == 0 {
            if let Some(p) = polish(h_mat, h, x0, &corr, tol) {
                return Ok(p);
            }
        }
        if (sweep + 1) % INFEASIBILITY_CHECK_EVERY == 0 && viol > tol {
            if let Some(r) = farkas_certificate(h_mat, h, &x, x0, &corr) {
                return Err(Error::InfeasibleSet { residual: r.max(viol) });
            }
        }
    }
    if let Some(p) = polish(h_mat, h, x0, &corr, tol) {
        return Ok(p);
    }
    if let Some(r) = farkas_certificate(h_mat, h, &x, x0, &corr) {
        return Err(Error::InfeasibleSet { residual: r.max(last_viol) });
    }
    Err(Error::ProjectionNotConverged {
        sweeps: cap,
        residual: last_viol,
    })
}

const POLISH_EVERY: usize = 25;
const INFEASIBILITY_CHECK_EVERY: usize = 200;

/// On an empty intersection the Dykstra corrections grow without bound along
/// a Farkas direction `λ ≥ 0` with `Hᵀλ = 0`, `hᵀλ < 0`. For a nonempty set,
/// every `λ ≥ 0` obeys `hᵀλ ≥ −‖Hᵀλ‖·‖x*‖`, so a normalized correction with
/// `hᵀd` far below `−‖Hᵀd‖·‖x‖` certifies emptiness. Returns the implied
/// lower bound on the violation when the certificate holds.
fn farkas_certificate(h_mat: &Matrix, h: &[f64], x: &[f64], x0: &[f64], corr: &[f64]) -> Option<f64> {
    let cn = norm(corr);
    if cn == 0.0 {
        return None;
    }
    let d: Vec<f64> = corr.iter().map(|c| c / cn).collect();
    let s = dot(h, &d);
    let g = norm(&h_mat.tmul_vec(&d));
    let radius = norm(x) + norm(x0) + 1.0;
    (s < 0.0 && 100.0 * g * radius < -s).then(|| -s / norm(&d).max(1.0))
}

/// Exact finish once Dykstra has roughly found the active rows. The
/// corrections are the dual multipliers, so their support seeds a short
/// active-set loop on the KKT system; the result is accepted only if it is
/// primal and dual feasible, which makes it the exact projection.
fn polish(h_mat: &Matrix, h: &[f64], x0: &[f64], corr: &[f64], tol: f64) -> Option<Vector> {
    let m = h_mat.rows();
    let scale = 1.0 + norm(x0);
    let mut act: Vec<usize> = (0..m).filter(|&i| corr[i] > 0.0).collect();
    for _ in 0..(2 * m + 2) {
        let k = act.len();
        let mut p = x0.to_vec();
        if k > 0 {
            let mut gram = Matrix::zeros(k, k);
            let mut rhs = vec![0.0; k];
            for (r, &i) in act.iter().enumerate() {
                for (c, &j) in act.iter().enumerate() {
                    gram.set(r, c, dot(h_mat.row(i), h_mat.row(j)));
                }
                rhs[r] = dot(h_mat.row(i), x0) - h[i];
            }
            let Some(lam) = solve_consistent(&gram, &rhs) else {
                // Over-determined guess: drop the row with the weakest multiplier.
                let r = (0..k)
                    .min_by(|&a, &b| corr[act[a]].partial_cmp(&corr[act[b]]).unwrap_or(std::cmp::Ordering::Equal))
                    .unwrap_or(0);
                act.remove(r);
                continue;
            };
            let (worst, lmin) = lam
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (r, &l)| if l < acc.1 { (r, l) } else { acc });
            if lmin < 0.0 {
                act.remove(worst);
                continue;
            }
            for (&i, &l) in act.iter().zip(&lam) {
                for (pj, aj) in p.iter_mut().zip(h_mat.row(i)) {
                    *pj -= l * aj;
                }
            }
        }
        let (worst, vmax) = (0..m)
            .map(|i| (i, dot(h_mat.row(i), &p) - h[i]))
            .fold((0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
        if vmax <= tol * scale {
            return Some(p);
        }
        if act.contains(&worst) {
            return None;
        }
        act.push(worst);
    }
    None
}
