//! Dense row-major matrices and vector helpers.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};
use crate::rng::SeededRng;

pub type Vector = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in d.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("matrix entries", rows * cols, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows. An empty slice gives a 0×`cols` matrix.
    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim("matrix row length", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Self::from_row_major(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `A x`, assuming `x.len() == cols`.
    pub fn mul_vec(&self, x: &[f64]) -> Vector {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Aᵀ y`, assuming `y.len() == rows`.
    pub fn tmul_vec(&self, y: &[f64]) -> Vector {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                axpy(yi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn try_mul_vec(&self, x: &[f64]) -> Result<Vector> {
        check_dim("matrix-vector product", self.cols, x.len())?;
        Ok(self.mul_vec(x))
    }

    pub fn try_tmul_vec(&self, y: &[f64]) -> Result<Vector> {
        check_dim("transposed matrix-vector product", self.rows, y.len())?;
        Ok(self.tmul_vec(y))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim("matrix product", self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                axpy(a, orow, dst);
            }
        }
        Ok(out)
    }

    /// `[self, other]` side by side.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        check_dim("hstack rows", self.rows, other.rows)?;
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// `[self; other]` stacked vertically.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        check_dim("vstack cols", self.cols, other.cols)?;
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    entries: Vec<Vec<f64>>,
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixDoc {
            rows: self.rows,
            cols: self.cols,
            entries: self.to_rows(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = MatrixDoc::deserialize(d)?;
        if doc.entries.len() != doc.rows {
            return Err(serde::de::Error::custom(format!(
                "matrix declares {} rows but has {}",
                doc.rows,
                doc.entries.len()
            )));
        }
        Matrix::from_rows(&doc.entries, doc.cols).map_err(serde::de::Error::custom)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `y += a x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scaled(a: &[f64], s: f64) -> Vector {
    a.iter().map(|v| v * s).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

pub const DEFAULT_NORM_TOL: f64 = 1e-8;
pub const DEFAULT_NORM_MAX_ITER: usize = 10_000;

/// Largest singular value of `a` by power iteration on `AᵀA`.
///
/// The start vector is drawn from a fixed seed so the result is
/// reproducible. Convergence is declared once successive estimates of
/// `σ_max²` agree to `tol²/4` relative, which is tighter than needed for a
/// relative error of `tol` on `σ_max` itself when the top singular value is
/// isolated. A zero matrix returns 0.
pub fn operator_norm(a: &Matrix, tol: f64, max_iter: usize) -> Result<f64> {
    if a.rows == 0 || a.cols == 0 {
        return Err(Error::InvalidArgument(
            "operator norm of an empty matrix".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    if a.data.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    // Work with the smaller Gram matrix side.
    let m = if a.rows < a.cols {
        a.transpose()
    } else {
        a.clone()
    };
    let n = m.cols;
    let mut rng = SeededRng::new(0x5eed_0f_a11, 0);
    let mut v: Vector = (0..n).map(|_| rng.uniform_in(-1.0, 1.0) + 1e-3).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let target = (tol * tol * 0.25).max(f64::EPSILON * 16.0);
    let mut prev = 0.0;
    let mut est = 0.0;
    for _ in 0..max_iter {
        let w = m.tmul_vec(&m.mul_vec(&v));
        est = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            // Start vector landed in the null space; restart along a new direction.
            v = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let nv = norm(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            continue;
        }
        v = w.iter().map(|x| x / nw).collect();
        if prev > 0.0 && (est - prev).abs() <= target * est {
            // One final Rayleigh quotient on the normalized iterate.
            let av = m.mul_vec(&v);
            return Ok(norm(&av));
        }
        prev = est;
    }
    Err(Error::NormNotConverged {
        iterations: max_iter,
        estimate: est.max(0.0).sqrt(),
    })
}

/// Solves a square system `M u = r` by Gaussian elimination with complete
/// pivoting. Rank-deficient but consistent systems get the basic solution
/// with free variables at zero; inconsistent or non-finite results give
/// `None`.
pub fn solve_consistent(m: &Matrix, r: &[f64]) -> Option<Vector> {
    let n = m.rows;
    if m.cols != n || r.len() != n {
        return None;
    }
    let mut a = m.data.clone();
    let mut b = r.to_vec();
    let mut col_perm: Vec<usize> = (0..n).collect();
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    let mut rank = 0;
    for k in 0..n {
        let (mut pi, mut pj, mut best) = (k, k, 0.0);
        for i in k..n {
            for j in k..n {
                let v = a[i * n + j].abs();
                if v > best {
                    best = v;
                    pi = i;
                    pj = j;
                }
            }
        }
        if best <= 1e-12 * scale {
            break;
        }
        if pi != k {
            for j in 0..n {
                a.swap(k * n + j, pi * n + j);
            }
            b.swap(k, pi);
        }
        if pj != k {
            for i in 0..n {
                a.swap(i * n + k, i * n + pj);
            }
            col_perm.swap(k, pj);
        }
        let piv = a[k * n + k];
        for i in (k + 1)..n {
            let f = a[i * n + k] / piv;
            if f != 0.0 {
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
                b[i] -= f * b[k];
            }
        }
        rank += 1;
    }
    let bscale = 1.0 + norm_inf(r);
    if b[rank..].iter().any(|v| v.abs() > 1e-9 * bscale) {
        return None;
    }
    let mut u = vec![0.0; n];
    for k in (0..rank).rev() {
        let mut s = b[k];
        for j in (k + 1)..rank {
            s -= a[k * n + j] * u[j];
        }
        u[k] = s / a[k * n + k];
    }
    let mut out = vec![0.0; n];
    for (k, &c) in col_perm.iter().enumerate() {
        out[c] = u[k];
    }
    all_finite(&out).then_some(out)
}

/// `W ⊗ I_n`.
pub fn kron_identity(w: &Matrix, n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("kron_identity needs n >= 1".into()));
    }
    let rows = w
        .rows
        .checked_mul(n)
        .ok_or_else(|| Error::InvalidArgument("kron_identity size overflow".into()))?;
    let cols = w
        .cols
        .checked_mul(n)
        .ok_or_else(|| Error::InvalidArgument("kron_identity size overflow".into()))?;
    rows.checked_mul(cols)
        .ok_or_else(|| Error::InvalidArgument("kron_identity size overflow".into()))?;
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..w.rows {
        for j in 0..w.cols {
            let v = w.get(i, j);
            if v == 0.0 {
                continue;
            }
            for k in 0..n {
                out.set(i * n + k, j * n + k, v);
            }
        }
    }
    Ok(out)
}

/// Orthonormalizes the columns of a square matrix in place (modified
/// Gram–Schmidt). Columns that collapse are replaced by fresh random ones.
pub fn orthonormal_columns(n: usize, rng: &mut SeededRng) -> Matrix {
    let mut cols: Vec<Vector> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v = rng.normal_vec(n);
        for c in &cols {
            let p = dot(&v, c);
            axpy(-p, c, &mut v);
        }
        let nv = norm(&v);
        if nv < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        cols.push(v);
    }
    let mut m = Matrix::zeros(n, n);
    for (j, c) in cols.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            m.set(i, j, v);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> Matrix {
        let cols = rows[0].len();
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), cols).unwrap()
    }

    #[test]
    fn norm_identity_and_diag() {
        let i3 = Matrix::identity(3);
        assert!((operator_norm(&i3, 1e-10, 1000).unwrap() - 1.0).abs() < 1e-10);
        let d = Matrix::diag(&[3.0, 1.0]);
        assert!((operator_norm(&d, 1e-10, 1000).unwrap() - 3.0).abs() < 3e-10);
    }

    #[test]
    fn norm_shear_matches_golden_ratio() {
        let a = mat(&[&[1.0, 1.0], &[0.0, 1.0]]);
        // σ_max² is the larger root of s² − 3s + 1.
        let expected = ((3.0 + 5f64.sqrt()) / 2.0).sqrt();
        let got = operator_norm(&a, 1e-8, 10_000).unwrap();
        assert!((got - expected).abs() <= 1e-8 * expected, "{got} vs {expected}");
        assert!((got - 1.6180339887).abs() < 1e-8);
    }

    #[test]
    fn norm_zero_and_empty() {
        assert_eq!(operator_norm(&Matrix::zeros(2, 3), 1e-8, 10).unwrap(), 0.0);
        assert!(operator_norm(&Matrix::zeros(0, 3), 1e-8, 10).is_err());
        assert!(operator_norm(&Matrix::identity(2), 0.0, 10).is_err());
    }

    #[test]
    fn norm_reports_non_convergence() {
        // Two nearly tied singular values make power iteration slow.
        let a = Matrix::diag(&[1.0, 0.999_999]);
        match operator_norm(&a, 1e-12, 3) {
            Err(Error::NormNotConverged { iterations, estimate }) => {
                assert_eq!(iterations, 3);
                assert!(estimate > 0.9);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn kron_examples() {
        let w = mat(&[&[1.0, -1.0]]);
        assert_eq!(kron_identity(&w, 1).unwrap(), w);
        let k = kron_identity(&w, 2).unwrap();
        assert_eq!(
            k,
            mat(&[&[1.0, 0.0, -1.0, 0.0], &[0.0, 1.0, 0.0, -1.0]])
        );
        let s = mat(&[&[2.0]]);
        assert_eq!(kron_identity(&s, 2).unwrap(), Matrix::diag(&[2.0, 2.0]));
        assert!(kron_identity(&w, 0).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let a = mat(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let s = serde_json::to_string(&a).unwrap();
        assert!(s.contains("\"entries\":[[1.0,2.0,3.0],[4.0,5.0,6.0]]"));
        let back: Matrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        let bad = r#"{"rows":2,"cols":2,"entries":[[1.0,2.0]]}"#;
        assert!(serde_json::from_str::<Matrix>(bad).is_err());
    }

    #[test]
    fn products_agree_with_transpose() {
        let a = mat(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let y = [1.0, -1.0, 2.0];
        assert_eq!(a.tmul_vec(&y), a.transpose().mul_vec(&y));
        assert!(a.try_mul_vec(&y).is_err());
    }

    #[test]
    fn solve_handles_rank_deficiency() {
        let m = mat(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let u = solve_consistent(&m, &[3.0, 4.0]).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-14 && (u[1] - 1.0).abs() < 1e-14);
        let s = mat(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let u = solve_consistent(&s, &[2.0, 2.0]).unwrap();
        assert!((u[0] + u[1] - 2.0).abs() < 1e-14);
        assert!(solve_consistent(&s, &[2.0, 3.0]).is_none());
    }

    #[test]
    fn orthonormal_is_orthonormal() {
        let mut rng = SeededRng::new(1, 2);
        let u = orthonormal_columns(6, &mut rng);
        let g = u.transpose().matmul(&u).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g.get(i, j) - e).abs() < 1e-12);
            }
        }
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = SeededRng::new(seed, 99);
        Matrix::from_row_major(rows, cols, rng.normal_vec(rows * cols)).unwrap()
    }

    /// Independent reference: singular values from nalgebra's SVD.
    fn svd_norm(a: &Matrix) -> f64 {
        let m = nalgebra::DMatrix::from_row_slice(a.rows(), a.cols(), a.data());
        m.singular_values().max()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn norm_is_transpose_invariant(rows in 1usize..7, cols in 1usize..7, seed in any::<u64>()) {
            let a = random_matrix(rows, cols, seed);
            let tol = 1e-8;
            let n1 = operator_norm(&a, tol, 100_000).unwrap();
            let n2 = operator_norm(&a.transpose(), tol, 100_000).unwrap();
            prop_assert!((n1 - n2).abs() <= 2.0 * tol * n1.max(n2));
        }

        #[test]
        fn norm_matches_svd(rows in 1usize..7, cols in 1usize..7, seed in any::<u64>()) {
            let a = random_matrix(rows, cols, seed);
            let r = operator_norm(&a, 1e-8, 100_000).unwrap();
            let s = svd_norm(&a);
            prop_assert!((r - s).abs() <= 1e-8 * s, "{} vs {}", r, s);
        }

        #[test]
        fn kron_matches_edge_differences(nodes in 2usize..7, n in 1usize..4, seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed, 3);
            let mut edges = Vec::new();
            for i in 0..nodes {
                for j in (i + 1)..nodes {
                    if rng.bernoulli(0.5) {
                        edges.push((i, j));
                    }
                }
            }
            prop_assume!(!edges.is_empty());
            let mut w = Matrix::zeros(edges.len(), nodes);
            for (k, &(i, j)) in edges.iter().enumerate() {
                w.set(k, i, 1.0);
                w.set(k, j, -1.0);
            }
            let a = kron_identity(&w, n).unwrap();
            let x = rng.normal_vec(nodes * n);
            let lhs = norm_sq(&a.mul_vec(&x));
            let rhs: f64 = edges
                .iter()
                .map(|&(i, j)| dist(&x[i * n..(i + 1) * n], &x[j * n..(j + 1) * n]).powi(2))
                .sum();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }
}
