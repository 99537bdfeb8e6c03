//! Monte Carlo evaluation of the capacity lower bound and its pre-log.
//!
//! For `R = Q` antennas and i.i.d. `CN(0, 1)` inputs the bound reads, in
//! bits per channel use,
//!
//! ```text
//! L(snr) = (1/T) [ |J| log2 snr + (RQ + T - 1) log2(πe) + E log2 |det Jac|
//!                  + |N| log2(πe) - h(y | x) ]
//! h(y | x) = RT log2(πe) + E log2 det(I + snr (I_R ⊗ XA)(I_R ⊗ XA)^H)
//! ```
//!
//! Its slope in `log2 snr` tends to `(|J| - Q²)/T = 1 - 1/T`.
//!
//! Every trial draws from its own substream keyed by `(seed, trial)`, and
//! the SNR points of a sweep reuse the same draws, so curves are smooth in
//! SNR and bit-identical across thread counts.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::{complex_normal_vec, fading_matrix, index_set_j, substream, CovarianceFactor};
use crate::error::{Error, Result};
use crate::jacobian::{build_jacobian, log_det_terms, ADMISSIBLE_TOL};
use crate::matrix::{log2_abs_det, ComplexMatrix, DEFAULT_RANK_TOL};
use crate::property_a::satisfies_property_a;
use crate::recovery::{check_injectivity_constraints, PilotMode};
use crate::scalar::{mean_and_std_err, pairwise_sum, Real};

const CONDITIONAL_DOMAIN: u16 = 4;
const DIRECT_DOMAIN: u16 = 5;
/// Term `k` of the decomposition draws from domain `TERM_DOMAIN + k`.
const TERM_DOMAIN: u16 = 6;
const BOUND_DOMAIN: u16 = 12;
const MAX_REJECTIONS: u32 = 1000;

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub std_err: T,
}

impl<T: Real> Estimate<T> {
    pub fn from_samples(samples: &[T]) -> Self {
        let (value, std_err) = mean_and_std_err(samples);
        Self { value, std_err }
    }

    pub fn exact(value: T) -> Self {
        Self { value, std_err: T::zero() }
    }
}

/// `log2(πe)`, the entropy of `CN(0, 1)` in bits.
pub fn gaussian_entropy_bits<T: Real>() -> T {
    (T::PI() * T::E()).log2()
}

/// `(|J| - Q², T)`: the pre-log as an unreduced fraction, computed from the
/// cardinality of `J` for `R = Q`.
pub fn prelog_fraction(block_len: usize, rank: usize) -> (usize, usize) {
    let j = index_set_j(block_len, rank, rank).len();
    (j - rank * rank, block_len)
}

/// Pre-log of the single-antenna channel, `1 - Q/T`.
pub fn siso_prelog<T: Real>(block_len: usize, rank: usize) -> T {
    T::one() - T::from_usize_lossy(rank) / T::from_usize_lossy(block_len)
}

pub fn target_prelog<T: Real>(block_len: usize, rank: usize) -> T {
    let (num, den) = prelog_fraction(block_len, rank);
    T::from_usize_lossy(num) / T::from_usize_lossy(den)
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn least_squares_slope<T: Real>(xs: &[T], ys: &[T]) -> T {
    assert_eq!(xs.len(), ys.len(), "fit needs paired samples");
    assert!(xs.len() >= 2, "fit needs at least two points");
    let n = T::from_usize_lossy(xs.len());
    let mx = pairwise_sum(xs) / n;
    let my = pairwise_sum(ys) / n;
    let sxy: Vec<T> = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).collect();
    let sxx: Vec<T> = xs.iter().map(|&x| (x - mx) * (x - mx)).collect();
    pairwise_sum(&sxy) / pairwise_sum(&sxx)
}

/// `log2 det(I_T + snr XA (XA)^H)` for one antenna, evaluated through the
/// `Q×Q` form `I_Q + snr A^H |X|² A` (Sylvester's determinant identity).
pub fn per_antenna_logdet<T: Real>(a: &ComplexMatrix<T>, x: &[Complex<T>], snr: T) -> T {
    let (t, q) = a.shape();
    assert_eq!(x.len(), t, "symbol count must equal T");
    let mut m = ComplexMatrix::identity(q);
    for k in 0..q {
        for l in 0..q {
            let g = (0..t).fold(Complex::new(T::zero(), T::zero()), |acc, i| {
                acc + a[(i, k)].conj() * a[(i, l)] * x[i].norm_sqr()
            });
            m[(k, l)] += g * snr;
        }
    }
    log2_abs_det(&m)
}

/// Per-trial values of `R log2 det(...)` on a grid of SNRs, sharing the
/// `x` draws across the grid.
fn conditional_logdet_samples<T: Real>(a: &ComplexMatrix<T>, antennas: usize, snrs: &[T], n_samples: u64, seed: u64) -> Vec<Vec<T>>
where
    StandardNormal: Distribution<T>,
{
    let r = T::from_usize_lossy(antennas);
    (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, CONDITIONAL_DOMAIN, k);
            let x = complex_normal_vec(&mut rng, a.rows());
            snrs.iter().map(|&snr| r * per_antenna_logdet(a, &x, snr)).collect()
        })
        .collect()
}

fn column<T: Copy>(rows: &[Vec<T>], k: usize) -> Vec<T> {
    rows.iter().map(|r| r[k]).collect()
}

/// Monte Carlo estimate of `h(y | x)` in bits for `antennas` receive
/// antennas. Takes the raw `T×Q` matrix so degenerate shapes such as the
/// scalar channel `A = [1]` can be evaluated too.
pub fn conditional_entropy_term<T: Real>(a: &ComplexMatrix<T>, antennas: usize, snr: T, n_samples: u64, seed: u64) -> Estimate<T>
where
    StandardNormal: Distribution<T>,
{
    conditional_entropy_curve(a, antennas, &[snr], n_samples, seed)[0]
}

/// [`conditional_entropy_term`] over an SNR grid with common draws.
pub fn conditional_entropy_curve<T: Real>(
    a: &ComplexMatrix<T>,
    antennas: usize,
    snrs: &[T],
    n_samples: u64,
    seed: u64,
) -> Vec<Estimate<T>>
where
    StandardNormal: Distribution<T>,
{
    assert!(snrs.iter().all(|&s| s > T::zero()), "snr must be positive");
    let offset = T::from_usize_lossy(antennas * a.rows()) * gaussian_entropy_bits::<T>();
    let samples = conditional_logdet_samples(a, antennas, snrs, n_samples, seed);
    (0..snrs.len())
        .map(|k| {
            let e = Estimate::from_samples(&column(&samples, k));
            Estimate { value: e.value + offset, std_err: e.std_err }
        })
        .collect()
}

/// Draws `(x, S)` satisfying the injectivity constraints, resampling
/// rejected draws. Returns the draw and the number of rejections.
pub fn draw_admissible<T: Real, R: Rng + ?Sized>(
    a: &CovarianceFactor<T>,
    pilot: PilotMode<T>,
    rng: &mut R,
) -> Result<(Vec<Complex<T>>, ComplexMatrix<T>, u32)>
where
    StandardNormal: Distribution<T>,
{
    let (t, q) = a.matrix().shape();
    for rejected in 0..MAX_REJECTIONS {
        let x = pilot.draw_symbols(rng, t);
        let s = fading_matrix(&complex_normal_vec(rng, q * q), q);
        if check_injectivity_constraints(&x, &s, a, T::lit(ADMISSIBLE_TOL)).all() {
            return Ok((x, s, rejected));
        }
    }
    Err(Error::FactorizationPrecondition(format!("no admissible draw in {MAX_REJECTIONS} attempts")))
}

fn require_property_a<T: Real>(a: &CovarianceFactor<T>) -> Result<()> {
    let report = satisfies_property_a(&a.leading_block(), T::lit(DEFAULT_RANK_TOL));
    if report.satisfied {
        Ok(())
    } else {
        let rows = report.failing_row_subset.map(|s| s.to_string()).unwrap_or_default();
        Err(Error::PropertyAViolated(rows))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogDetExpectation<T> {
    /// Mean of `log2 |det Jac|` over admissible draws.
    pub direct: Estimate<T>,
    /// Sum of the six independently estimated terms.
    pub decomposed: Estimate<T>,
    /// Boundary sums, then `M1..M5`.
    pub terms: [Estimate<T>; 6],
    /// `sqrt(se_direct² + se_decomposed²)`.
    pub std_err: T,
    pub rejected: u64,
}

/// Estimates `E log2 |det Jac|` two ways: directly, and term by term
/// through the factorization with an independent substream per term.
pub fn jacobian_logdet_expectation<T: Real>(
    a: &CovarianceFactor<T>,
    n_samples: u64,
    seed: u64,
    pilot: PilotMode<T>,
) -> Result<LogDetExpectation<T>>
where
    StandardNormal: Distribution<T>,
{
    require_property_a(a)?;
    let (t, q) = a.matrix().shape();
    let j_set = index_set_j(t, q, q);

    let direct: Vec<(T, u32)> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, DIRECT_DOMAIN, k);
            let (x, s, rej) = draw_admissible(a, pilot, &mut rng)?;
            Ok((log2_abs_det(&build_jacobian(a, &x, &s, &j_set)), rej))
        })
        .collect::<Result<_>>()?;
    let mut rejected: u64 = direct.iter().map(|&(_, r)| r as u64).sum();
    let direct = Estimate::from_samples(&direct.iter().map(|&(v, _)| v).collect::<Vec<_>>());

    let mut terms = [Estimate::exact(T::zero()); 6];
    for (k, term) in terms.iter_mut().enumerate() {
        let samples: Vec<(T, u32)> = (0..n_samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, TERM_DOMAIN + k as u16, i);
                let (x, s, rej) = draw_admissible(a, pilot, &mut rng)?;
                Ok((log_det_terms(a, &x, &s)?.as_array()[k], rej))
            })
            .collect::<Result<_>>()?;
        rejected += samples.iter().map(|&(_, r)| r as u64).sum::<u64>();
        *term = Estimate::from_samples(&samples.iter().map(|&(v, _)| v).collect::<Vec<_>>());
    }
    let decomposed = Estimate {
        value: terms.iter().map(|e| e.value).sum(),
        std_err: terms.iter().map(|e| e.std_err * e.std_err).sum::<T>().sqrt(),
    };
    let std_err = (direct.std_err * direct.std_err + decomposed.std_err * decomposed.std_err).sqrt();
    Ok(LogDetExpectation { direct, decomposed, terms, std_err, rejected })
}

/// Per-trial `log2 |det Jac| - R log2 det(I + snr ...)` for every SNR.
fn bound_samples<T: Real>(
    a: &CovarianceFactor<T>,
    snrs: &[T],
    n_samples: u64,
    seed: u64,
    pilot: PilotMode<T>,
) -> Result<(Vec<Vec<T>>, u64)>
where
    StandardNormal: Distribution<T>,
{
    let (t, q) = a.matrix().shape();
    let j_set = index_set_j(t, q, q);
    let r = T::from_usize_lossy(q);
    let rows: Vec<(Vec<T>, u32)> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, BOUND_DOMAIN, k);
            let (x, s, rej) = draw_admissible(a, pilot, &mut rng)?;
            let ldj = log2_abs_det(&build_jacobian(a, &x, &s, &j_set));
            let vals = snrs.iter().map(|&snr| ldj - r * per_antenna_logdet(a.matrix(), &x, snr)).collect();
            Ok((vals, rej))
        })
        .collect::<Result<_>>()?;
    let rejected = rows.iter().map(|(_, r)| *r as u64).sum();
    Ok((rows.into_iter().map(|(v, _)| v).collect(), rejected))
}

/// `L(snr)` assembled from its Monte Carlo ingredients.
fn assemble_bound<T: Real>(block_len: usize, rank: usize, snr: T, mc: Estimate<T>) -> Estimate<T> {
    let (t, q) = (block_len, rank);
    let j = index_set_j(t, q, q).len();
    let complement = q * t - j;
    let h = gaussian_entropy_bits::<T>();
    let tf = T::from_usize_lossy(t);
    let constant = T::from_usize_lossy(q * q + t - 1) * h + T::from_usize_lossy(complement) * h
        - T::from_usize_lossy(q * t) * h;
    let value = (T::from_usize_lossy(j) * snr.log2() + constant + mc.value) / tf;
    Estimate { value, std_err: mc.std_err / tf }
}

/// Lower bound on capacity (bits per channel use) at one SNR.
pub fn capacity_lower_bound<T: Real>(
    a: &CovarianceFactor<T>,
    snr: T,
    n_samples: u64,
    seed: u64,
    pilot: PilotMode<T>,
) -> Result<Estimate<T>>
where
    StandardNormal: Distribution<T>,
{
    if !(snr > T::zero()) {
        return Err(Error::Config(format!("snr must be positive, got {snr}")));
    }
    require_property_a(a)?;
    let (rows, _) = bound_samples(a, &[snr], n_samples, seed, pilot)?;
    let mc = Estimate::from_samples(&column(&rows, 0));
    Ok(assemble_bound(a.block_len(), a.rank(), snr, mc))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundPoint<T> {
    pub snr: T,
    pub bound: T,
    pub std_err: T,
}

impl<T: Real> BoundPoint<T> {
    pub fn snr_db(&self) -> T {
        T::lit(10.0) * self.snr.log10()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundCurve<T> {
    /// Sorted by SNR.
    pub points: Vec<BoundPoint<T>>,
    /// Least-squares slope of the bound against `log2 snr` over `fit_range`.
    pub fitted_slope: T,
    /// Inclusive linear-SNR interval used for the fit.
    pub fit_range: (T, T),
    pub mc_samples: u64,
    pub target_slope: T,
    pub siso_reference: T,
    /// Inadmissible draws that were resampled.
    pub rejected: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions<T> {
    pub pilot: PilotMode<T>,
    /// The fit uses points within this many decades of the largest SNR.
    pub fit_decades: T,
}

impl<T: Real> Default for SweepOptions<T> {
    fn default() -> Self {
        Self { pilot: PilotMode::Sampled, fit_decades: T::lit(2.0) }
    }
}

/// Evaluates the bound on `snr_grid` and fits its slope over the top
/// `fit_decades` decades.
pub fn prelog_sweep<T: Real>(
    a: &CovarianceFactor<T>,
    snr_grid: &[T],
    n_samples: u64,
    seed: u64,
    options: SweepOptions<T>,
) -> Result<BoundCurve<T>>
where
    StandardNormal: Distribution<T>,
{
    let mut grid = snr_grid.to_vec();
    if grid.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
        return Err(Error::Config("SNR grid must be positive and finite".into()));
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    if grid.len() < 3 {
        return Err(Error::Config("SNR grid needs at least 3 points".into()));
    }
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    if (hi / lo).log10() < T::lit(3.0) - T::lit(1e-9) {
        return Err(Error::Config("SNR grid must span at least 3 decades".into()));
    }
    if n_samples < 2 {
        return Err(Error::Config("need at least 2 Monte Carlo samples".into()));
    }
    require_property_a(a)?;

    let (rows, rejected) = bound_samples(a, &grid, n_samples, seed, options.pilot)?;
    let points: Vec<BoundPoint<T>> = grid
        .iter()
        .enumerate()
        .map(|(k, &snr)| {
            let e = assemble_bound(a.block_len(), a.rank(), snr, Estimate::from_samples(&column(&rows, k)));
            BoundPoint { snr, bound: e.value, std_err: e.std_err }
        })
        .collect();

    let fit_lo = hi / T::lit(10.0).powf(options.fit_decades);
    let tol = T::lit(1e-9);
    let in_fit: Vec<&BoundPoint<T>> = points.iter().filter(|p| p.snr >= fit_lo * (T::one() - tol)).collect();
    if in_fit.len() < 2 {
        return Err(Error::Config("fit range holds fewer than 2 grid points".into()));
    }
    let xs: Vec<T> = in_fit.iter().map(|p| p.snr.log2()).collect();
    let ys: Vec<T> = in_fit.iter().map(|p| p.bound).collect();
    Ok(BoundCurve {
        fitted_slope: least_squares_slope(&xs, &ys),
        fit_range: (in_fit[0].snr, hi),
        points,
        mc_samples: n_samples,
        target_slope: target_prelog(a.block_len(), a.rank()),
        siso_reference: siso_prelog(a.block_len(), a.rank()),
        rejected,
    })
}

/// Evenly spaced grid in dB, converted to linear SNR.
pub fn db_grid<T: Real>(db_min: T, db_max: T, points: usize) -> Vec<T> {
    assert!(points >= 2, "grid needs at least two points");
    let step = (db_max - db_min) / T::from_usize_lossy(points - 1);
    (0..points)
        .map(|k| T::lit(10.0).powf((db_min + step * T::from_usize_lossy(k)) / T::lit(10.0)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::dft_first_columns;
    use crate::matrix::IndexSet;

    #[test]
    fn prelog_fraction_is_one_minus_one_over_t() {
        for t in 2..=12 {
            for q in 1..t {
                assert_eq!(prelog_fraction(t, q), (t - 1, t), "T={t} Q={q}");
            }
        }
        assert!((target_prelog::<f64>(3, 2) - 2.0 / 3.0).abs() < 1e-15);
        assert!((siso_prelog::<f64>(3, 2) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn slope_fit_recovers_line() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.25 * x - 3.0).collect();
        assert!((least_squares_slope(&xs, &ys) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn sylvester_form_matches_full_determinant() {
        let a = dft_first_columns::<f64>(5, 2).unwrap();
        let mut rng = substream(3, 0, 0);
        let x = complex_normal_vec(&mut rng, 5);
        let snr = 1e3;
        let xa = ComplexMatrix::diag(&x).matmul(a.matrix());
        let full = ComplexMatrix::identity(5).add(&xa.matmul(&xa.adjoint()).scale(Complex::new(snr, 0.0)));
        assert!((per_antenna_logdet(a.matrix(), &x, snr) - log2_abs_det(&full)).abs() < 1e-10);
    }

    #[test]
    fn low_snr_limit_is_noise_entropy() {
        let a = dft_first_columns::<f64>(3, 2).unwrap();
        let e = conditional_entropy_term(a.matrix(), 2, 1e-12, 200, 1);
        assert!((e.value - 6.0 * gaussian_entropy_bits::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn sweep_validates_grid() {
        let a = dft_first_columns::<f64>(3, 2).unwrap();
        let opts = SweepOptions::default();
        assert!(prelog_sweep(&a, &[1.0, 10.0], 10, 0, opts).is_err());
        assert!(prelog_sweep(&a, &[1.0, 10.0, 100.0], 10, 0, opts).is_err());
        assert!(prelog_sweep(&a, &[1.0, -10.0, 1e4], 10, 0, opts).is_err());
    }

    #[test]
    fn property_a_required() {
        // T=4, columns {1,3} repeats rows 1 and 3.
        let a = crate::channel::dft_covariance_factor::<f64>(4, &IndexSet::new(vec![1, 3], 4).unwrap()).unwrap();
        assert!(matches!(capacity_lower_bound(&a, 1e4, 10, 0, PilotMode::Sampled), Err(Error::PropertyAViolated(_))));
        assert!(matches!(
            jacobian_logdet_expectation(&a, 10, 0, PilotMode::Sampled),
            Err(Error::PropertyAViolated(_))
        ));
    }

    #[test]
    fn db_grid_endpoints() {
        let g = db_grid::<f64>(40.0, 80.0, 9);
        assert_eq!(g.len(), 9);
        assert!((g[0] - 1e4).abs() < 1e-8);
        assert!((g[8] - 1e8).abs() < 1e-2);
    }

    #[test]
    fn sweep_is_deterministic() {
        let a = dft_first_columns::<f64>(3, 2).unwrap();
        let grid = db_grid(0.0, 40.0, 5);
        let c1 = prelog_sweep(&a, &grid, 200, 9, SweepOptions::default()).unwrap();
        let c2 = prelog_sweep(&a, &grid, 200, 9, SweepOptions::default()).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(c1.fit_range.0, grid[2]);
    }
}
