//! Jacobian of the noiseless output map restricted to `J`, taken with
//! respect to `(s, x_2..x_T)`, and its determinant factorization
//!
//! ```text
//! |det Jac| = Π_{j=Q+2..T} |Σ_q S_1q A_jq| · Π_k |det M_k|,   k = 1..5
//! ```
//!
//! with the canonical row choice `I = {1, ..., Q+1}` throughout.

use num_complex::Complex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::{complex_normal_vec, fading_matrix, index_set_j, substream, CovarianceFactor};
use crate::error::{Error, Result};
use crate::matrix::{determinant, dstack, inverse, kron, log2_abs_det, numerical_rank, ComplexMatrix, IndexSet};
use crate::property_a::satisfies_property_a;
use crate::recovery::{boundary_sums, check_injectivity_constraints};
use crate::scalar::Real;

/// Above this side length determinants are compared in log space.
pub const LOG_SPACE_SIDE: usize = 20;

fn one<T: Real>() -> Complex<T> {
    Complex::new(T::one(), T::zero())
}

fn check_dims<T: Real>(a: &CovarianceFactor<T>, x: &[Complex<T>], s_matrix: &ComplexMatrix<T>) {
    let (t, q) = a.matrix().shape();
    assert_eq!(x.len(), t, "symbol count must equal T");
    assert_eq!(s_matrix.shape(), (q, q), "S must be Q×Q (R = Q)");
}

/// `(S ⊗ I_T) D(A)`, restricted to rows `J` and columns `2..T`.
fn symbol_block<T: Real>(a: &CovarianceFactor<T>, s_matrix: &ComplexMatrix<T>, j_set: &IndexSet) -> ComplexMatrix<T> {
    let t = a.block_len();
    let full = kron(s_matrix, &ComplexMatrix::identity(t)).matmul(&dstack(a.matrix()));
    let rows: Vec<usize> = j_set.zero_based().collect();
    full.select_rows(&rows).select_cols(&(1..t).collect::<Vec<_>>())
}

/// `[ (I_R ⊗ diag(x) A)[J, :] | ((S ⊗ I_T) D(A))[J, 2..T] ]`.
pub fn build_jacobian<T: Real>(
    a: &CovarianceFactor<T>,
    x: &[Complex<T>],
    s_matrix: &ComplexMatrix<T>,
    j_set: &IndexSet,
) -> ComplexMatrix<T> {
    check_dims(a, x, s_matrix);
    let r = s_matrix.rows();
    assert_eq!(j_set.bound(), r * a.block_len(), "J must index into R*T outputs");
    let xa = ComplexMatrix::diag(x).matmul(a.matrix());
    let rows: Vec<usize> = j_set.zero_based().collect();
    let left = kron(&ComplexMatrix::identity(r), &xa).select_rows(&rows);
    left.hstack(&symbol_block(a, s_matrix, j_set))
}

/// Same layout as [`build_jacobian`] with `diag(x)` replaced by its inverse
/// in the left block. Left-multiplying by `(I_R ⊗ diag(x))[J, J]` gives the
/// pilot-anchored recovery matrix up to the sign of the symbol columns.
pub fn build_g_matrix<T: Real>(
    a: &CovarianceFactor<T>,
    x: &[Complex<T>],
    s_matrix: &ComplexMatrix<T>,
    j_set: &IndexSet,
) -> ComplexMatrix<T> {
    check_dims(a, x, s_matrix);
    let r = s_matrix.rows();
    let inv_x: Vec<Complex<T>> = x.iter().map(|&v| one::<T>() / v).collect();
    let xa = ComplexMatrix::diag(&inv_x).matmul(a.matrix());
    let rows: Vec<usize> = j_set.zero_based().collect();
    let left = kron(&ComplexMatrix::identity(r), &xa).select_rows(&rows);
    left.hstack(&symbol_block(a, s_matrix, j_set))
}

/// `[ I_N ⊗ Ã | D(Ã)[:, 2..N+1] ]` for an `(N+1)×N` matrix `Ã`.
pub fn build_mhat<T: Real>(a_tilde: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    let (rows, n) = a_tilde.shape();
    assert!(n >= 1 && rows == n + 1, "expected an (N+1)×N matrix, got {rows}×{n}");
    let left = kron(&ComplexMatrix::identity(n), a_tilde);
    let right = dstack(a_tilde).select_cols(&(1..=n).collect::<Vec<_>>());
    left.hstack(&right)
}

/// The five structured factors for the canonical rows `1..=Q+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorMatrices<T> {
    /// `I_R ⊗ diag(x_1..x_{Q+1})`
    pub m1: ComplexMatrix<T>,
    /// `S ⊗ I_{Q+1}`
    pub m2: ComplexMatrix<T>,
    /// `[I_Q ⊗ Ã | D(Ã)[:, 2..Q+1]]`
    pub m3: ComplexMatrix<T>,
    /// `diag(S⁻¹ ⊗ I_Q, I_Q)`
    pub m4: ComplexMatrix<T>,
    /// `diag(I_{Q²}, diag(x_2..x_{Q+1})⁻¹)`
    pub m5: ComplexMatrix<T>,
}

impl<T: Real> FactorMatrices<T> {
    pub fn as_array(&self) -> [&ComplexMatrix<T>; 5] {
        [&self.m1, &self.m2, &self.m3, &self.m4, &self.m5]
    }

    /// `M1 M2 M3 M4 M5`.
    pub fn product(&self) -> ComplexMatrix<T> {
        self.m1.matmul(&self.m2).matmul(&self.m3).matmul(&self.m4).matmul(&self.m5)
    }
}

pub fn factor_matrices<T: Real>(
    a: &CovarianceFactor<T>,
    x: &[Complex<T>],
    s_matrix: &ComplexMatrix<T>,
) -> Result<FactorMatrices<T>> {
    check_dims(a, x, s_matrix);
    let q = a.rank();
    if let Some(i) = x[..=q].iter().position(|v| v.norm().is_zero()) {
        return Err(Error::FactorizationPrecondition(format!("x_{} is zero", i + 1)));
    }
    let s_inv = inverse(s_matrix).map_err(|_| Error::FactorizationPrecondition("S is singular".into()))?;
    let m1 = kron(&ComplexMatrix::identity(q), &ComplexMatrix::diag(&x[..=q]));
    let m2 = kron(s_matrix, &ComplexMatrix::identity(q + 1));
    let m3 = build_mhat(&a.leading_block());
    let m4 = kron(&s_inv, &ComplexMatrix::identity(q)).block_diag(&ComplexMatrix::identity(q));
    let inv_x: Vec<Complex<T>> = x[1..=q].iter().map(|&v| one::<T>() / v).collect();
    let m5 = ComplexMatrix::identity(q * q).block_diag(&ComplexMatrix::diag(&inv_x));
    Ok(FactorMatrices { m1, m2, m3, m4, m5 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct JacobianFactorization<T> {
    /// `Π_{j=Q+2..T} |Σ_q S_1q A_jq|`; 1 when `T = Q+1`.
    pub boundary_product: T,
    pub det_m: [Complex<T>; 5],
    pub abs_det_factored: T,
    pub abs_det_direct: T,
    pub log2_abs_det_factored: T,
    pub log2_abs_det_direct: T,
    /// Side of the Jacobian, `T-1+Q²`.
    pub side: usize,
}

impl<T: Real> JacobianFactorization<T> {
    /// Relative disagreement between the two routes; for sides above
    /// [`LOG_SPACE_SIDE`] this is `|Δ log2|` instead.
    pub fn discrepancy(&self) -> T {
        if self.side > LOG_SPACE_SIDE {
            (self.log2_abs_det_direct - self.log2_abs_det_factored).abs()
        } else {
            (self.abs_det_direct - self.abs_det_factored).abs() / self.abs_det_direct
        }
    }
}

/// Evaluates the determinant both directly and through the factorization.
pub fn factored_abs_det<T: Real>(
    a: &CovarianceFactor<T>,
    x: &[Complex<T>],
    s_matrix: &ComplexMatrix<T>,
) -> Result<JacobianFactorization<T>> {
    let factors = factor_matrices(a, x, s_matrix)?;
    let (t, q) = a.matrix().shape();
    let sums = boundary_sums(a, s_matrix);
    let boundary_product = sums.iter().map(|z| z.norm()).fold(T::one(), |acc, v| acc * v);
    let det_m = factors.as_array().map(determinant);
    let abs_det_factored = det_m.iter().fold(boundary_product, |acc, d| acc * d.norm());
    let log2_abs_det_factored = sums.iter().map(|z| z.norm().log2()).sum::<T>()
        + factors.as_array().iter().map(|m| log2_abs_det(m)).sum::<T>();

    let jac = build_jacobian(a, x, s_matrix, &index_set_j(t, q, q));
    Ok(JacobianFactorization {
        boundary_product,
        det_m,
        abs_det_factored,
        abs_det_direct: determinant(&jac).norm(),
        log2_abs_det_factored,
        log2_abs_det_direct: log2_abs_det(&jac),
        side: jac.rows(),
    })
}

/// Per-draw `log2` magnitudes of every factor in the decomposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogDetTerms<T> {
    /// `Σ_j log2 |Σ_q S_1q A_jq|`
    pub boundary: T,
    pub m1: T,
    pub m2: T,
    pub m3: T,
    pub m4: T,
    pub m5: T,
}

impl<T: Real> LogDetTerms<T> {
    pub fn as_array(&self) -> [T; 6] {
        [self.boundary, self.m1, self.m2, self.m3, self.m4, self.m5]
    }

    pub fn total(&self) -> T {
        self.as_array().iter().copied().sum()
    }
}

pub fn log_det_terms<T: Real>(a: &CovarianceFactor<T>, x: &[Complex<T>], s_matrix: &ComplexMatrix<T>) -> Result<LogDetTerms<T>> {
    let f = factor_matrices(a, x, s_matrix)?;
    Ok(LogDetTerms {
        boundary: boundary_sums(a, s_matrix).iter().map(|z| z.norm().log2()).sum(),
        m1: log2_abs_det(&f.m1),
        m2: log2_abs_det(&f.m2),
        m3: log2_abs_det(&f.m3),
        m4: log2_abs_det(&f.m4),
        m5: log2_abs_det(&f.m5),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankLemmaReport {
    /// Every `N` rows of `Ã` are independent.
    pub hypothesis_holds: bool,
    pub mhat_full_rank: bool,
}

impl RankLemmaReport {
    /// True unless the hypothesis holds and the conclusion fails.
    pub fn consistent(&self) -> bool {
        !self.hypothesis_holds || self.mhat_full_rank
    }
}

pub fn rank_lemma_check<T: Real>(a_tilde: &ComplexMatrix<T>, tol: T) -> RankLemmaReport {
    let hypothesis_holds = satisfies_property_a(a_tilde, tol).satisfied;
    let mhat = build_mhat(a_tilde);
    let mhat_full_rank = numerical_rank(&mhat, tol) == mhat.rows();
    RankLemmaReport { hypothesis_holds, mhat_full_rank }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankLemmaSummary {
    pub n: usize,
    pub trials: u64,
    pub hypothesis_holds: u64,
    pub mhat_full_rank: u64,
    pub violations: u64,
}

const RANK_LEMMA_DOMAIN: u16 = 3;
const FACTORIZATION_DOMAIN: u16 = 2;

/// Rank checks on i.i.d. `CN(0, 1)` `(N+1)×N` matrices.
pub fn run_rank_lemma_trials<T: Real>(n: usize, trials: u64, seed: u64, tol: T) -> RankLemmaSummary
where
    StandardNormal: Distribution<T>,
{
    let reports: Vec<RankLemmaReport> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, RANK_LEMMA_DOMAIN, k);
            let m = ComplexMatrix::from_vec(n + 1, n, complex_normal_vec(&mut rng, n * (n + 1)));
            rank_lemma_check(&m, tol)
        })
        .collect();
    let count = |f: fn(&RankLemmaReport) -> bool| reports.iter().filter(|r| f(r)).count() as u64;
    RankLemmaSummary {
        n,
        trials,
        hypothesis_holds: count(|r| r.hypothesis_holds),
        mhat_full_rank: count(|r| r.mhat_full_rank),
        violations: count(|r| !r.consistent()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorizationTrial<T> {
    pub trial: u64,
    pub abs_det_direct: T,
    pub abs_det_factored: T,
    pub discrepancy: T,
    /// Draws discarded before an admissible one was found.
    pub rejected: u32,
}

/// Admissibility tolerance for Monte Carlo draws.
pub const ADMISSIBLE_TOL: f64 = 1e-12;
const MAX_REJECTIONS: u32 = 1000;

/// Compares the two determinant routes on random admissible draws. With
/// `factor = None` every trial also draws a fresh `CN(0, 1)` `T×Q` factor.
pub fn run_factorization_trials<T: Real>(
    block_len: usize,
    rank: usize,
    factor: Option<&CovarianceFactor<T>>,
    trials: u64,
    seed: u64,
) -> Result<Vec<FactorizationTrial<T>>>
where
    StandardNormal: Distribution<T>,
{
    if rank == 0 || rank >= block_len {
        return Err(Error::Config(format!("need 1 <= Q < T, got T={block_len}, Q={rank}")));
    }
    if let Some(f) = factor {
        if f.matrix().shape() != (block_len, rank) {
            return Err(Error::Config("covariance factor shape does not match T, Q".into()));
        }
    }
    (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, FACTORIZATION_DOMAIN, k);
            for rejected in 0..MAX_REJECTIONS {
                let drawn;
                let a = match factor {
                    Some(f) => f,
                    None => {
                        let m = ComplexMatrix::from_vec(block_len, rank, complex_normal_vec(&mut rng, block_len * rank));
                        match CovarianceFactor::new(m) {
                            Ok(f) => {
                                drawn = f;
                                &drawn
                            }
                            Err(_) => continue,
                        }
                    }
                };
                let x = complex_normal_vec(&mut rng, block_len);
                let s = fading_matrix(&complex_normal_vec(&mut rng, rank * rank), rank);
                if !check_injectivity_constraints(&x, &s, a, T::lit(ADMISSIBLE_TOL)).all() {
                    continue;
                }
                let f = factored_abs_det(a, &x, &s)?;
                return Ok(FactorizationTrial {
                    trial: k,
                    abs_det_direct: f.abs_det_direct,
                    abs_det_factored: f.abs_det_factored,
                    discrepancy: f.discrepancy(),
                    rejected,
                });
            }
            Err(Error::FactorizationPrecondition(format!("no admissible draw in {MAX_REJECTIONS} attempts")))
        })
        .collect()
}
