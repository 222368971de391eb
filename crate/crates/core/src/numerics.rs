//! Dense complex linear algebra used by the solver.
//!
//! Only what the beamforming updates need: products, adjoints, Cholesky
//! solves against Hermitian positive-definite matrices, the dominant
//! generalized eigenvector of a Hermitian pencil and Frobenius norms.
//! Tolerances are relative (scaled by trace or norm), so the kernel does
//! not care which power units a scenario uses.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{JcasError, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(JcasError::dims(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(CMatrix { rows, cols, data })
    }

    /// Builds from nested rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(JcasError::dims("ragged rows"));
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(CMatrix {
            rows: rows.len(),
            cols: if rows.is_empty() { 0 } else { cols },
            data,
        })
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// Single-column matrix.
    pub fn column_vector(v: &[C64]) -> Self {
        CMatrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    /// `u vᴴ`
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[C64]) {
        assert_eq!(v.len(), self.rows, "column length");
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<C64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Self {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul {}x{} by {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᴴ · rhs` without materializing the adjoint.
    pub fn adjoint_matmul(&self, rhs: &CMatrix) -> Self {
        assert_eq!(self.rows, rhs.rows, "adjoint_matmul row counts");
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i].conj();
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "mul_vec length");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Row vector `vᴴ · self`.
    pub fn left_mul_adjoint(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.rows, v.len(), "left_mul_adjoint length");
        let mut out = vec![ZERO; self.cols];
        for (i, vi) in v.iter().enumerate() {
            let c = vi.conj();
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += c * a;
            }
        }
        out
    }

    pub fn scale(&self, c: C64) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    /// `self += c · other`
    pub fn axpy(&mut self, c: C64, other: &CMatrix) {
        assert_eq!(self.shape(), other.shape(), "axpy shapes");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Power of row `i`, i.e. the `i`th diagonal entry of `A Aᴴ`.
    pub fn row_power(&self, i: usize) -> f64 {
        self.row(i).iter().map(C64::norm_sqr).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;

    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "add shapes");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;

    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "sub shapes");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.4e}{:+.4e}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

// Nested row-major arrays of [re, im] pairs.
impl Serialize for CMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[C64]> = (0..self.rows).map(|i| self.row(i)).collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<C64>>::deserialize(d)?;
        let m = CMatrix::from_rows(&rows).map_err(D::Error::custom)?;
        if !m.is_finite() {
            return Err(D::Error::custom("non-finite matrix entry"));
        }
        Ok(m)
    }
}

/// Hermitian matrix (`A = Aᴴ` up to `1e-10` relative Frobenius asymmetry).
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    pub const ASYMMETRY_TOL: f64 = 1e-10;

    pub fn new(a: CMatrix) -> Result<Self> {
        if a.rows() != a.cols() || a.rows() == 0 {
            return Err(JcasError::dims(format!(
                "Hermitian matrix must be square and nonempty, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let norm = fro_norm(&a);
        let asym = fro_norm(&(&a - &a.adjoint()));
        if asym > Self::ASYMMETRY_TOL * norm {
            return Err(JcasError::NotHermitian(if norm > 0.0 {
                asym / norm
            } else {
                asym
            }));
        }
        Ok(Self::hermitian_part(&a))
    }

    /// `(A + Aᴴ)/2`, for matrices Hermitian by construction up to rounding.
    pub fn hermitian_part(a: &CMatrix) -> Self {
        assert_eq!(a.rows(), a.cols(), "hermitian_part of non-square matrix");
        let n = a.rows();
        HermitianMatrix(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(a[(i, i)].re, 0.0)
            } else {
                (a[(i, j)] + a[(j, i)].conj()) * 0.5
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// `vᴴ A v` (real for Hermitian `A`).
    pub fn quad_form(&self, v: &[C64]) -> f64 {
        dot(v, &self.0.mul_vec(v)).re
    }

    pub fn real_trace(&self) -> f64 {
        self.0.trace().re
    }
}

/// Lower Cholesky factor `A = L Lᴴ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: CMatrix,
}

impl Cholesky {
    /// Pivots must exceed `1e-12 · trace(A)/dim`.
    pub fn factor(a: &HermitianMatrix) -> Result<Self> {
        let n = a.dim();
        let a = a.as_matrix();
        let tolerance = 1e-12 * (a.trace().re / n as f64).abs();
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > tolerance) {
                return Err(JcasError::NotPositiveDefinite {
                    pivot: j,
                    value: d,
                    tolerance,
                });
            }
            let djj = d.sqrt();
            l[(j, j)] = C64::new(djj, 0.0);
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn lower(&self) -> &CMatrix {
        &self.l
    }

    /// Solves `L y = b`.
    pub fn forward(&self, b: &[C64]) -> Vec<C64> {
        let n = self.l.rows();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Solves `Lᴴ x = y`.
    pub fn backward(&self, y: &[C64]) -> Vec<C64> {
        let n = self.l.rows();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)].conj() * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    pub fn solve_vec(&self, b: &[C64]) -> Vec<C64> {
        self.backward(&self.forward(b))
    }

    pub fn solve(&self, b: &CMatrix) -> Result<CMatrix> {
        if b.rows() != self.l.rows() {
            return Err(JcasError::dims(format!(
                "right-hand side has {} rows, system has dimension {}",
                b.rows(),
                self.l.rows()
            )));
        }
        let mut x = CMatrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            x.set_column(j, &self.solve_vec(&b.column(j)));
        }
        Ok(x)
    }
}

/// Solves `A X = B` for Hermitian positive-definite `A`.
pub fn hermitian_solve(a: &HermitianMatrix, b: &CMatrix) -> Result<CMatrix> {
    if b.rows() != a.dim() {
        return Err(JcasError::dims(format!(
            "right-hand side has {} rows, system has dimension {}",
            b.rows(),
            a.dim()
        )));
    }
    Cholesky::factor(a)?.solve(b)
}

/// Dominant generalized eigenpair of the pencil `(A, B)`.
#[derive(Clone, Debug)]
pub struct GeneralizedEig {
    /// `vᴴAv / vᴴBv`
    pub value: f64,
    /// Unit norm; the largest-magnitude entry is real and positive.
    pub vector: Vec<C64>,
    pub iterations: usize,
}

const EIG_REL_TOL: f64 = 1e-10;
const EIG_MAX_ITER: usize = 500;
// Repeated squaring of the whitened matrix before iterating, which widens
// the eigengap to (λ2/λ1)^64.
const EIG_SQUARINGS: usize = 6;

/// Unit `v` maximizing `vᴴAv / vᴴBv` for `A` positive semidefinite and `B`
/// positive definite.
///
/// Whitens with `B = L Lᴴ` and runs power iteration on `L⁻¹ A L⁻ᴴ`.
pub fn max_generalized_eigvec(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<GeneralizedEig> {
    let n = a.dim();
    if b.dim() != n {
        return Err(JcasError::dims(format!(
            "pencil dimensions {} and {}",
            n,
            b.dim()
        )));
    }
    let chol = Cholesky::factor(b)?;

    // C = L⁻¹ A L⁻ᴴ = L⁻¹ (L⁻¹ A)ᴴ since A = Aᴴ.
    let mut t = CMatrix::zeros(n, n);
    for j in 0..n {
        t.set_column(j, &chol.forward(&a.as_matrix().column(j)));
    }
    let th = t.adjoint();
    let mut c = CMatrix::zeros(n, n);
    for j in 0..n {
        c.set_column(j, &chol.forward(&th.column(j)));
    }
    let c = HermitianMatrix::hermitian_part(&c);

    let scale = c.real_trace();
    let (u, iterations) = if scale > 0.0 {
        dominant_eigvec(&c, scale)
    } else {
        let mut e = vec![ZERO; n];
        e[0] = ONE;
        (e, 0)
    };

    let mut v = chol.backward(&u);
    let nv = vec_norm(&v);
    for x in &mut v {
        *x /= nv;
    }
    fix_phase(&mut v);
    let value = a.quad_form(&v) / b.quad_form(&v);
    Ok(GeneralizedEig {
        value,
        vector: v,
        iterations,
    })
}

fn dominant_eigvec(c: &HermitianMatrix, scale: f64) -> (Vec<C64>, usize) {
    let n = c.dim();
    let mut p = c.as_matrix().scale_real(1.0 / scale);
    for _ in 0..EIG_SQUARINGS {
        p = p.matmul(&p);
        let s = fro_norm(&p);
        if s == 0.0 || !s.is_finite() {
            break;
        }
        p = p.scale_real(1.0 / s);
    }
    // Largest column of the powered matrix as the starting vector; it cannot
    // be orthogonal to the dominant eigenvector unless P vanishes.
    let start = (0..n)
        .map(|j| (j, vec_norm(&p.column(j))))
        .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0;
    let mut x = p.column(start);
    if vec_norm(&x) == 0.0 {
        x = vec![ONE; n];
    }
    normalize(&mut x);

    let cm = c.as_matrix();
    let mut rho = dot(&x, &cm.mul_vec(&x)).re;
    let mut iterations = 0;
    while iterations < EIG_MAX_ITER {
        iterations += 1;
        let mut y = cm.mul_vec(&x);
        if vec_norm(&y) == 0.0 {
            break;
        }
        normalize(&mut y);
        let next = dot(&y, &cm.mul_vec(&y)).re;
        x = y;
        let done = (next - rho).abs() <= EIG_REL_TOL * next.abs();
        rho = next;
        if done {
            break;
        }
    }
    (x, iterations)
}

fn fix_phase(v: &mut [C64]) {
    let pivot = v
        .iter()
        .enumerate()
        .fold((0, -1.0), |best, (i, z)| {
            let m = z.norm();
            if m > best.1 {
                (i, m)
            } else {
                best
            }
        })
        .0;
    let z = v[pivot];
    if z.norm() > 0.0 {
        let rot = z.conj() / z.norm();
        for x in v.iter_mut() {
            *x *= rot;
        }
    }
}

pub fn fro_norm(a: &CMatrix) -> f64 {
    a.as_slice().iter().map(C64::norm_sqr).sum::<f64>().sqrt()
}

/// `tr(Aᴴ B)`
pub fn fro_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    assert_eq!(a.shape(), b.shape(), "fro_inner shapes");
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x.conj() * y)
        .sum()
}

/// `aᴴ b`
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    assert_eq!(a.len(), b.len(), "dot lengths");
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(C64::norm_sqr).sum::<f64>().sqrt()
}

pub fn normalize(v: &mut [C64]) {
    let n = vec_norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}
