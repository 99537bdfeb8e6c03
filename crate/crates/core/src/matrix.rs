//! Dense complex linear algebra: Kronecker products, the diagonal-stacking
//! operator, index-set submatrices, LU determinants and solves, and
//! singular values by one-sided Jacobi rotations.
//!
//! Shapes here are desk scale (sides up to a few dozen), so everything is
//! dense and row-major. Shape mismatches are programming errors and panic;
//! data-dependent failures (singular systems, malformed files) are returned
//! as [`Error`].

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default relative singular-value threshold for [`numerical_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Systems whose condition number exceeds this are reported as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Sorted, duplicate-free set of 1-based indices into `1..=bound`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IndexSet {
    indices: Vec<usize>,
    bound: usize,
}

impl IndexSet {
    /// Builds a set from arbitrary-order 1-based indices.
    pub fn new(mut indices: Vec<usize>, bound: usize) -> Result<Self> {
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::IndexSet(format!("duplicate index {}", w[0])));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i > bound) {
            return Err(Error::IndexSet(format!("index {bad} outside [1, {bound}]")));
        }
        Ok(Self { indices, bound })
    }

    /// `{1, ..., n}`.
    pub fn full(n: usize) -> Self {
        Self { indices: (1..=n).collect(), bound: n }
    }

    /// Inclusive range `{lo, ..., hi}` (empty when `hi < lo`).
    pub fn range(lo: usize, hi: usize, bound: usize) -> Result<Self> {
        Self::new((lo..=hi).collect(), bound)
    }

    /// Parses a comma-separated list such as `1,2,4`.
    pub fn parse_list(list: &str, bound: usize) -> Result<Self> {
        let indices = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::IndexSet(format!("not an index: {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices, bound)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    /// The indices shifted to 0-based positions.
    pub fn zero_based(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().map(|&i| i - 1)
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// Indices of `1..=bound` not in `self`.
    pub fn complement(&self) -> Self {
        Self {
            indices: (1..=self.bound).filter(|&i| !self.contains(i)).collect(),
            bound: self.bound,
        }
    }

    /// Selects `v[i]` for every `i` in the set.
    pub fn select<C: Copy>(&self, v: &[C]) -> Vec<C> {
        assert_eq!(v.len(), self.bound, "vector length must equal index-set bound");
        self.zero_based().map(|i| v[i]).collect()
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices.iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Dense complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex::new(T::zero(), T::zero()); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count must equal rows*cols");
        Self { rows, cols, data }
    }

    /// Builds from nested rows; all rows must have the same length.
    pub fn from_rows(rows: &[Vec<Complex<T>>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self::from_vec(r, c, rows.concat())
    }

    /// Real-valued convenience constructor.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let rows: Vec<Vec<Complex<T>>> = rows
            .iter()
            .map(|row| row.iter().map(|&v| Complex::new(T::lit(v), T::zero())).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(entries: &[Complex<T>]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Single-column matrix.
    pub fn column(entries: &[Complex<T>]) -> Self {
        Self::from_vec(entries.len(), 1, entries.to_vec())
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex<T>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<Complex<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, c: Complex<T>) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in add");
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in sub");
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.re.is_zero() && a.im.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other[(k, j)];
                    out[(i, j)] += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(self.cols, v.len(), "vector length must equal column count");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).fold(Complex::new(T::zero(), T::zero()), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    /// Keeps the listed 0-based columns, in order.
    pub fn select_cols(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.rows, cols.len(), |i, j| self[(i, cols[j])])
    }

    /// Keeps the listed 0-based rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self::from_fn(rows.len(), self.cols, |i, j| self[(rows[i], j)])
    }

    /// `[self | other]`.
    pub fn hstack(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "row counts must agree in hstack");
        Self::from_fn(self.rows, self.cols + other.cols, |i, j| {
            if j < self.cols {
                self[(i, j)]
            } else {
                other[(i, j - self.cols)]
            }
        })
    }

    /// Block-diagonal `diag(self, other)`.
    pub fn block_diag(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.rows + other.rows, self.cols + other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)];
            }
        }
        for i in 0..other.rows {
            for j in 0..other.cols {
                out[(self.rows + i, self.cols + j)] = other[(i, j)];
            }
        }
        out
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> T {
        self.data.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }
}

impl<T> Index<(usize, usize)> for ComplexMatrix<T> {
    type Output = Complex<T>;

    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for ComplexMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Mul for &ComplexMatrix<T> {
    type Output = ComplexMatrix<T>;

    fn mul(self, rhs: Self) -> ComplexMatrix<T> {
        self.matmul(rhs)
    }
}

/// Kronecker product `a ⊗ b`.
///
/// Ordinary products bind tighter than `⊗` in the usual notation, so
/// `A B ⊗ C` means `kron(&a.matmul(&b), &c)`; callers form the inner product
/// first.
pub fn kron<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    let (br, bc) = b.shape();
    ComplexMatrix::from_fn(a.rows * br, a.cols * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Stacks the diagonal matrices built from each column of an `M×N` matrix
/// into an `NM×M` matrix: block `n` is `diag(a[:, n])`.
pub fn dstack<T: Real>(a: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    let (m, n) = a.shape();
    let mut out = ComplexMatrix::zeros(n * m, m);
    for col in 0..n {
        for i in 0..m {
            out[(col * m + i, i)] = a[(i, col)];
        }
    }
    out
}

/// `a[rows, cols]` with 1-based index sets whose bounds match `a`'s shape.
pub fn submatrix<T: Real>(a: &ComplexMatrix<T>, rows: &IndexSet, cols: &IndexSet) -> ComplexMatrix<T> {
    assert_eq!(rows.bound(), a.rows, "row index set bound must equal row count");
    assert_eq!(cols.bound(), a.cols, "column index set bound must equal column count");
    let r: Vec<usize> = rows.zero_based().collect();
    let c: Vec<usize> = cols.zero_based().collect();
    ComplexMatrix::from_fn(r.len(), c.len(), |i, j| a[(r[i], c[j])])
}

/// LU factorization with partial pivoting, packed in place.
struct Lu<T> {
    lu: ComplexMatrix<T>,
    perm: Vec<usize>,
    odd_swaps: bool,
    singular: bool,
}

fn lu<T: Real>(a: &ComplexMatrix<T>) -> Lu<T> {
    assert!(a.is_square(), "LU requires a square matrix");
    let n = a.rows;
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut odd_swaps = false;
    let mut singular = false;
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, lu[(i, k)].norm()))
            .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax.is_zero() {
            singular = true;
            continue;
        }
        if p != k {
            for j in 0..n {
                lu.data.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
            odd_swaps = !odd_swaps;
        }
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let factor = lu[(i, k)] / pivot;
            lu[(i, k)] = factor;
            for j in k + 1..n {
                let ukj = lu[(k, j)];
                lu[(i, j)] -= factor * ukj;
            }
        }
    }
    Lu { lu, perm, odd_swaps, singular }
}

/// Determinant by pivoted elimination; the empty matrix has determinant 1.
pub fn determinant<T: Real>(a: &ComplexMatrix<T>) -> Complex<T> {
    assert!(a.is_square(), "determinant requires a square matrix");
    let f = lu(a);
    if f.singular {
        return Complex::new(T::zero(), T::zero());
    }
    let mut det = Complex::new(T::one(), T::zero());
    for i in 0..a.rows {
        det *= f.lu[(i, i)];
    }
    if f.odd_swaps {
        -det
    } else {
        det
    }
}

/// `log2 |det a|`, accumulated pivot by pivot so large sides neither
/// overflow nor underflow. Returns `-inf` for exactly singular input.
pub fn log2_abs_det<T: Real>(a: &ComplexMatrix<T>) -> T {
    assert!(a.is_square(), "determinant requires a square matrix");
    let f = lu(a);
    if f.singular {
        return T::neg_infinity();
    }
    (0..a.rows).map(|i| f.lu[(i, i)].norm().log2()).sum()
}

/// Singular values in descending order (one-sided Jacobi).
pub fn singular_values<T: Real>(a: &ComplexMatrix<T>) -> Vec<T> {
    // Orthogonalize the columns of whichever orientation is tall.
    let work = if a.rows >= a.cols { a.clone() } else { a.adjoint() };
    let (m, n) = work.shape();
    let mut cols: Vec<Vec<Complex<T>>> = (0..n).map(|j| work.col(j)).collect();
    let eps = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: T = cols[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: T = cols[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma = cols[p]
                    .iter()
                    .zip(&cols[q])
                    .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b);
                let g = gamma.norm();
                if g.is_zero() || g <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (g + g);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let ap = cols[p][i];
                    let bq = cols[q][i] * phase.conj();
                    cols[p][i] = ap * c - bq * s;
                    cols[q][i] = ap * s + bq * c;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<T> = cols.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()).collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    sv.truncate(m.min(n));
    sv
}

/// Number of singular values above `tol` times the largest one.
pub fn numerical_rank<T: Real>(a: &ComplexMatrix<T>, tol: T) -> usize {
    assert!(tol >= T::zero(), "rank tolerance must be nonnegative");
    let sv = singular_values(a);
    let Some(&smax) = sv.first() else { return 0 };
    if smax.is_zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// 2-norm condition number; infinite for singular or empty-rank input.
pub fn condition_number<T: Real>(a: &ComplexMatrix<T>) -> T {
    let sv = singular_values(a);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if !lo.is_zero() => hi / lo,
        (Some(_), Some(_)) => T::infinity(),
        _ => T::one(),
    }
}

/// Solves `a x = b`, refusing systems with condition number above
/// [`MAX_CONDITION`]. Returns the solution and the condition number.
pub fn solve_square_with_condition<T: Real>(
    a: &ComplexMatrix<T>,
    b: &[Complex<T>],
) -> Result<(Vec<Complex<T>>, T)> {
    assert!(a.is_square(), "solve requires a square matrix");
    assert_eq!(a.rows, b.len(), "right-hand side length must equal side");
    let cond = condition_number(a);
    if !(cond <= T::lit(MAX_CONDITION)) {
        return Err(Error::SingularSystem { condition: cond.to_f64().unwrap_or(f64::INFINITY) });
    }
    let f = lu(a);
    if f.singular {
        return Err(Error::SingularSystem { condition: f64::INFINITY });
    }
    let n = a.rows;
    let mut x: Vec<Complex<T>> = f.perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        for k in 0..i {
            let l = f.lu[(i, k)];
            let xk = x[k];
            x[i] -= l * xk;
        }
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let u = f.lu[(i, k)];
            let xk = x[k];
            x[i] -= u * xk;
        }
        x[i] = x[i] / f.lu[(i, i)];
    }
    Ok((x, cond))
}

pub fn solve_square<T: Real>(a: &ComplexMatrix<T>, b: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    solve_square_with_condition(a, b).map(|(x, _)| x)
}

/// Matrix inverse through column-by-column solves.
pub fn inverse<T: Real>(a: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    assert!(a.is_square(), "inverse requires a square matrix");
    let n = a.rows;
    let mut inv = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![Complex::new(T::zero(), T::zero()); n];
        e[j] = Complex::new(T::one(), T::zero());
        for (i, v) in solve_square(a, &e)?.into_iter().enumerate() {
            inv[(i, j)] = v;
        }
    }
    Ok(inv)
}

/// Parses the text format: a `rows cols` header, then one `re im` pair per
/// line in row-major order. Blank lines and `#` comments are skipped.
pub fn parse_matrix<T: Real>(text: &str) -> Result<ComplexMatrix<T>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Parse { line: hline, message: format!("bad dimension {s:?}") })
    };
    if dims.len() != 2 {
        return Err(Error::Parse { line: hline, message: "header must be \"rows cols\"".into() });
    }
    let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);

    let mut data = Vec::with_capacity(rows * cols);
    let mut last_line = hline;
    for (line, content) in lines {
        last_line = line;
        if data.len() == rows * cols {
            return Err(Error::Parse { line, message: "more entries than rows*cols".into() });
        }
        let parts: Vec<&str> = content.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::Parse { line, message: "expected \"re im\"".into() });
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse { line, message: format!("not a finite number: {s:?}") })
        };
        data.push(Complex::new(T::lit(num(parts[0])?), T::lit(num(parts[1])?)));
    }
    if data.len() != rows * cols {
        return Err(Error::Parse {
            line: last_line,
            message: format!("expected {} entries, found {}", rows * cols, data.len()),
        });
    }
    Ok(ComplexMatrix::from_vec(rows, cols, data))
}

/// Inverse of [`parse_matrix`], with round-trip float formatting.
pub fn format_matrix<T: Real>(a: &ComplexMatrix<T>) -> String {
    let mut out = format!("{} {}\n", a.rows, a.cols);
    for z in &a.data {
        out.push_str(&format!("{:?} {:?}\n", z.re, z.im));
    }
    out
}
