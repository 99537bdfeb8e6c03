//! Pilot-anchored blind recovery from noiseless observations.
//!
//! Substituting `β_i = 1/x_i` turns `ỹ = (I_R ⊗ diag(x) A) s` into a system
//! that is linear in `(s, β)`. Fixing the pilot `x_1` removes the scale
//! ambiguity; keeping only the output components in `J` leaves a square
//! system of side `T-1+Q²` whose solution gives the fading coefficients and,
//! through reciprocals, the data symbols `x_2..x_T`.

use std::fmt;

use num_complex::Complex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::{complex_normal, complex_normal_vec, index_set_j, noiseless_output, substream, CovarianceFactor};
use crate::error::{Error, Result};
use crate::matrix::{determinant, solve_square_with_condition, ComplexMatrix, IndexSet};
use crate::scalar::Real;

/// Conditioning above which a solved system is reported as ill-conditioned
/// rather than accurate.
pub const ACCURATE_CONDITION: f64 = 1e8;

/// How the first (pilot) symbol of a block is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PilotMode<T> {
    /// `x_1 ~ CN(0, 1)`, known to the receiver.
    Sampled,
    /// `x_1` frozen to this value in every block.
    Fixed(Complex<T>),
}

impl<T: Real> PilotMode<T> {
    pub fn unit() -> Self {
        PilotMode::Fixed(Complex::new(T::one(), T::zero()))
    }

    /// Draws a full symbol vector honoring the pilot choice.
    pub fn draw_symbols<R: rand::Rng + ?Sized>(&self, rng: &mut R, block_len: usize) -> Vec<Complex<T>>
    where
        StandardNormal: Distribution<T>,
    {
        let mut x = complex_normal_vec(rng, block_len);
        if let PilotMode::Fixed(p) = *self {
            x[0] = p;
        }
        x
    }
}

/// Square linear system in the unknowns `[s'; β'_2..β'_T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoverySystem<T> {
    pub g: ComplexMatrix<T>,
    pub rhs: Vec<Complex<T>>,
    pub pilot: Complex<T>,
    pub j_set: IndexSet,
    block_len: usize,
    rank: usize,
}

impl<T: Real> RecoverySystem<T> {
    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn rank(&self) -> usize {
        self.rank
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryResult<T> {
    /// Estimates of the stacked fading vector `[s_1; ...; s_Q]`.
    pub s_hat: Vec<Complex<T>>,
    /// Symbol estimates, `x_hat[0]` being the pilot.
    pub x_hat: Vec<Complex<T>>,
    /// 2-norm condition number of the solved system.
    pub condition: T,
}

fn zero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Builds the pilot-anchored system from `ỹ_J` (ordered as `J`) and `A`.
///
/// Row `(m-1)T+i` of `J` reads `a_i^T s'_m - ỹ β'_i = 0` for `i >= 2`, and
/// `a_1^T s'_m = ỹ / x_1` for the pilot row.
pub fn build_recovery_system<T: Real>(
    a: &CovarianceFactor<T>,
    y_tilde_j: &[Complex<T>],
    pilot: Complex<T>,
) -> Result<RecoverySystem<T>> {
    if pilot.norm().is_zero() {
        return Err(Error::ZeroPilot);
    }
    let (t, q) = a.matrix().shape();
    let j_set = index_set_j(t, q, q);
    let n = j_set.len();
    if y_tilde_j.len() != n {
        return Err(Error::Config(format!("expected {n} observations on J, got {}", y_tilde_j.len())));
    }
    let mut g = ComplexMatrix::zeros(n, n);
    let mut rhs = vec![zero(); n];
    for (row, idx) in j_set.zero_based().enumerate() {
        let (m, i) = (idx / t, idx % t);
        for (k, &coef) in a.row(i).iter().enumerate() {
            g[(row, m * q + k)] = coef;
        }
        if i == 0 {
            rhs[row] = y_tilde_j[row] / pilot;
        } else {
            g[(row, q * q + i - 1)] = -y_tilde_j[row];
        }
    }
    Ok(RecoverySystem { g, rhs, pilot, j_set, block_len: t, rank: q })
}

/// Solves the system and inverts `β'` back to symbols.
pub fn solve_recovery<T: Real>(sys: &RecoverySystem<T>) -> Result<RecoveryResult<T>> {
    let (sol, condition) = solve_square_with_condition(&sys.g, &sys.rhs)?;
    let q2 = sys.rank * sys.rank;
    let s_hat = sol[..q2].to_vec();
    let mut x_hat = Vec::with_capacity(sys.block_len);
    x_hat.push(sys.pilot);
    for (k, &beta) in sol[q2..].iter().enumerate() {
        let x = Complex::new(T::one(), T::zero()) / beta;
        if beta.norm().is_zero() || !x.re.is_finite() || !x.im.is_finite() {
            return Err(Error::ZeroSymbol(k + 2));
        }
        x_hat.push(x);
    }
    Ok(RecoveryResult { s_hat, x_hat, condition })
}

/// Homogeneous system in `[s; β_1..β_T]` with no pilot fixed. It has one
/// more unknown than equations, so its kernel is never trivial.
pub fn build_homogeneous_system<T: Real>(a: &CovarianceFactor<T>, y_tilde_j: &[Complex<T>]) -> ComplexMatrix<T> {
    let (t, q) = a.matrix().shape();
    let j_set = index_set_j(t, q, q);
    assert_eq!(y_tilde_j.len(), j_set.len(), "observation length must equal |J|");
    let mut h = ComplexMatrix::zeros(j_set.len(), q * q + t);
    for (row, idx) in j_set.zero_based().enumerate() {
        let (m, i) = (idx / t, idx % t);
        for (k, &coef) in a.row(i).iter().enumerate() {
            h[(row, m * q + k)] = coef;
        }
        h[(row, q * q + i)] = -y_tilde_j[row];
    }
    h
}

/// Almost-everywhere conditions under which the recovery map is injective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConstraintCheck {
    /// Every `|x_i|` lies in `(tol, 1/tol)`.
    pub symbols_nonzero: bool,
    /// `|det S| > tol`.
    pub fading_invertible: bool,
    /// `|Σ_q S_1q A_jq| > tol` for all `j` in `Q+2..=T`.
    pub boundary_nonzero: bool,
}

impl ConstraintCheck {
    pub fn all(&self) -> bool {
        self.symbols_nonzero && self.fading_invertible && self.boundary_nonzero
    }
}

pub fn check_injectivity_constraints<T: Real>(
    x: &[Complex<T>],
    s_matrix: &ComplexMatrix<T>,
    a: &CovarianceFactor<T>,
    tol: T,
) -> ConstraintCheck {
    let (t, q) = a.matrix().shape();
    assert_eq!(s_matrix.shape(), (q, q), "S must be Q×Q");
    assert_eq!(x.len(), t, "symbol count must equal T");
    let symbols_nonzero = x.iter().all(|z| z.norm() > tol && z.norm() < T::one() / tol);
    let fading_invertible = determinant(s_matrix).norm() > tol;
    let boundary_nonzero = boundary_sums(a, s_matrix).iter().all(|z| z.norm() > tol);
    ConstraintCheck { symbols_nonzero, fading_invertible, boundary_nonzero }
}

/// `Σ_q S_1q A_jq` for `j` in `Q+2..=T` (empty when `T = Q+1`).
pub fn boundary_sums<T: Real>(a: &CovarianceFactor<T>, s_matrix: &ComplexMatrix<T>) -> Vec<Complex<T>> {
    let (t, q) = a.matrix().shape();
    let s1 = s_matrix.row(0);
    (q + 1..t)
        .map(|j| a.row(j).iter().zip(s1).fold(zero(), |acc, (&ajq, &s)| acc + ajq * s))
        .collect()
}

/// Least-squares variant for noisy outputs at finite SNR, using every
/// output component. Demonstration only: the injectivity argument is for
/// noiseless observations and says nothing about noise.
pub fn recover_least_squares<T: Real>(
    a: &CovarianceFactor<T>,
    y: &[Complex<T>],
    snr: T,
    pilot: Complex<T>,
) -> Result<RecoveryResult<T>> {
    if pilot.norm().is_zero() {
        return Err(Error::ZeroPilot);
    }
    let (t, q) = a.matrix().shape();
    if y.is_empty() || y.len() % t != 0 {
        return Err(Error::Config(format!("output length {} is not a multiple of T={t}", y.len())));
    }
    let r = y.len() / t;
    let scale = T::one() / snr.sqrt();
    let unknowns = r * q + t - 1;
    let mut m = ComplexMatrix::zeros(y.len(), unknowns);
    let mut rhs = vec![zero(); y.len()];
    for (row, &yv) in y.iter().enumerate() {
        let (ant, i) = (row / t, row % t);
        let yt = yv * scale;
        for (k, &coef) in a.row(i).iter().enumerate() {
            m[(row, ant * q + k)] = coef;
        }
        if i == 0 {
            rhs[row] = yt / pilot;
        } else {
            m[(row, r * q + i - 1)] = -yt;
        }
    }
    let mh = m.adjoint();
    let normal = mh.matmul(&m);
    let (sol, condition) = solve_square_with_condition(&normal, &mh.mul_vec(&rhs))?;
    let mut x_hat = vec![pilot];
    for (k, &beta) in sol[r * q..].iter().enumerate() {
        if beta.norm().is_zero() {
            return Err(Error::ZeroSymbol(k + 2));
        }
        x_hat.push(Complex::new(T::one(), T::zero()) / beta);
    }
    Ok(RecoveryResult { s_hat: sol[..r * q].to_vec(), x_hat, condition: condition.sqrt() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialStatus {
    Ok,
    IllConditioned,
    Singular,
    ZeroSymbol,
}

impl fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrialStatus::Ok => "ok",
            TrialStatus::IllConditioned => "ill-conditioned",
            TrialStatus::Singular => "singular",
            TrialStatus::ZeroSymbol => "zero-symbol",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundTripTrial<T> {
    pub trial: u64,
    pub condition: T,
    /// `max_{i>=2} |x̂_i - x_i| / |x_i|`.
    pub max_rel_err_x: T,
    /// `max_k |ŝ_k - s_k| / max_k |s_k|`.
    pub max_rel_err_s: T,
    pub status: TrialStatus,
}

/// Random stream domain for round-trip trials.
const ROUND_TRIP_DOMAIN: u16 = 1;

/// Samples `(x, s)`, forms `ỹ_J`, recovers, and compares with the truth.
pub fn round_trip_trial<T: Real>(a: &CovarianceFactor<T>, pilot: PilotMode<T>, seed: u64, trial: u64) -> RoundTripTrial<T>
where
    StandardNormal: Distribution<T>,
{
    let (t, q) = a.matrix().shape();
    let mut rng = substream(seed, ROUND_TRIP_DOMAIN, trial);
    let x = pilot.draw_symbols(&mut rng, t);
    let s: Vec<Complex<T>> = (0..q * q).map(|_| complex_normal(&mut rng)).collect();
    let y_tilde = noiseless_output(a, &x, &s);
    let y_j = index_set_j(t, q, q).select(&y_tilde);

    let nan = T::nan();
    let failed = |status| RoundTripTrial { trial, condition: T::infinity(), max_rel_err_x: nan, max_rel_err_s: nan, status };
    let sys = match build_recovery_system(a, &y_j, x[0]) {
        Ok(sys) => sys,
        Err(_) => return failed(TrialStatus::Singular),
    };
    match solve_recovery(&sys) {
        Ok(res) => {
            let max_rel_err_x = (1..t).map(|i| (res.x_hat[i] - x[i]).norm() / x[i].norm()).fold(T::zero(), T::max);
            let s_scale = s.iter().map(|z| z.norm()).fold(T::zero(), T::max);
            let max_rel_err_s =
                res.s_hat.iter().zip(&s).map(|(a, b)| (*a - *b).norm()).fold(T::zero(), T::max) / s_scale;
            let status = if res.condition > T::lit(ACCURATE_CONDITION) {
                TrialStatus::IllConditioned
            } else {
                TrialStatus::Ok
            };
            RoundTripTrial { trial, condition: res.condition, max_rel_err_x, max_rel_err_s, status }
        }
        Err(Error::ZeroSymbol(_)) => failed(TrialStatus::ZeroSymbol),
        Err(Error::SingularSystem { condition }) => RoundTripTrial {
            condition: T::from_f64(condition).unwrap_or(T::infinity()),
            ..failed(TrialStatus::Singular)
        },
        Err(_) => failed(TrialStatus::Singular),
    }
}

/// Runs `trials` independent round trips in parallel; the output order and
/// values depend only on `seed`.
pub fn run_round_trips<T: Real>(a: &CovarianceFactor<T>, pilot: PilotMode<T>, trials: u64, seed: u64) -> Vec<RoundTripTrial<T>>
where
    StandardNormal: Distribution<T>,
{
    (0..trials).into_par_iter().map(|k| round_trip_trial(a, pilot, seed, k)).collect()
}
