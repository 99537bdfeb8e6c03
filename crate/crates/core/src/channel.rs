//! Correlated block-fading SIMO channel: configuration, covariance factors,
//! block sampling and the stacked input/output relation
//! `y = sqrt(snr) (I_R ⊗ diag(x) A) s + w`.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{numerical_rank, ComplexMatrix, IndexSet, DEFAULT_RANK_TOL};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelConfig<T> {
    /// Symbols per fading block.
    pub block_len: usize,
    /// Rank of the channel covariance.
    pub rank: usize,
    /// Receive antennas.
    pub antennas: usize,
    /// Linear SNR.
    pub snr: T,
}

impl<T: Real> ChannelConfig<T> {
    pub fn new(block_len: usize, rank: usize, antennas: usize, snr: T) -> Result<Self> {
        if rank == 0 || rank >= block_len {
            return Err(Error::Config(format!("need 1 <= Q < T, got T={block_len}, Q={rank}")));
        }
        if antennas == 0 {
            return Err(Error::Config("need at least one receive antenna".into()));
        }
        if !(snr > T::zero()) || !snr.is_finite() {
            return Err(Error::Config(format!("snr must be positive and finite, got {snr}")));
        }
        Ok(Self { block_len, rank, antennas, snr })
    }

    /// The configuration the lower-bound machinery works in: as many
    /// antennas as the covariance rank.
    pub fn matched(block_len: usize, rank: usize, snr: T) -> Result<Self> {
        Self::new(block_len, rank, rank, snr)
    }

    /// Fails unless `R = Q`.
    pub fn require_matched(&self) -> Result<()> {
        if self.antennas != self.rank {
            return Err(Error::Config(format!(
                "this operation needs R = Q, got R={}, Q={}",
                self.antennas, self.rank
            )));
        }
        Ok(())
    }
}

/// Whitened `T×Q` covariance factor `A` of rank `Q < T`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceFactor<T> {
    a: ComplexMatrix<T>,
}

impl<T: Real> CovarianceFactor<T> {
    /// Validates shape and full column rank at the default tolerance.
    pub fn new(a: ComplexMatrix<T>) -> Result<Self> {
        Self::with_tolerance(a, T::lit(DEFAULT_RANK_TOL))
    }

    pub fn with_tolerance(a: ComplexMatrix<T>, tol: T) -> Result<Self> {
        let (t, q) = a.shape();
        if q == 0 || q >= t {
            return Err(Error::Config(format!("covariance factor must be T×Q with 1 <= Q < T, got {t}×{q}")));
        }
        if !a.is_finite() {
            return Err(Error::Config("covariance factor has non-finite entries".into()));
        }
        let rank = numerical_rank(&a, tol);
        if rank != q {
            return Err(Error::Config(format!("covariance factor has rank {rank}, expected {q}")));
        }
        Ok(Self { a })
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.a
    }

    pub fn block_len(&self) -> usize {
        self.a.rows()
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    /// Row `i` (0-based) of `A`.
    pub fn row(&self, i: usize) -> &[Complex<T>] {
        self.a.row(i)
    }

    /// First `Q+1` rows.
    pub fn leading_block(&self) -> ComplexMatrix<T> {
        let q = self.rank();
        self.a.select_rows(&(0..=q).collect::<Vec<_>>())
    }
}

/// Columns `keep_cols` of the unitary `T×T` DFT matrix with entries
/// `exp(-2πi (j-1)(k-1) / T) / sqrt(T)`.
pub fn dft_covariance_factor<T: Real>(block_len: usize, keep_cols: &IndexSet) -> Result<CovarianceFactor<T>> {
    if keep_cols.bound() != block_len {
        return Err(Error::IndexSet(format!(
            "column set bound {} does not match T={block_len}",
            keep_cols.bound()
        )));
    }
    let q = keep_cols.len();
    if q == 0 || q >= block_len {
        return Err(Error::Config(format!("need 1 <= Q < T, got T={block_len}, Q={q}")));
    }
    let cols: Vec<usize> = keep_cols.zero_based().collect();
    let norm = T::one() / T::from_usize_lossy(block_len).sqrt();
    let two_pi = T::PI() + T::PI();
    let a = ComplexMatrix::from_fn(block_len, q, |j, k| {
        // Reduce the exponent mod T before scaling to keep the phase exact.
        let e = (j * cols[k]) % block_len;
        let theta = -two_pi * T::from_usize_lossy(e) / T::from_usize_lossy(block_len);
        Complex::from_polar(norm, theta)
    });
    Ok(CovarianceFactor { a })
}

/// Standard DFT factor keeping the first `Q` columns.
pub fn dft_first_columns<T: Real>(block_len: usize, rank: usize) -> Result<CovarianceFactor<T>> {
    let cols = IndexSet::range(1, rank, block_len)?;
    dft_covariance_factor(block_len, &cols)
}

/// Draws one circularly symmetric `CN(0, 1)` value.
pub fn complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T>
where
    StandardNormal: Distribution<T>,
{
    let half = T::lit(0.5).sqrt();
    let re: T = StandardNormal.sample(rng);
    let im: T = StandardNormal.sample(rng);
    Complex::new(re * half, im * half)
}

pub fn complex_normal_vec<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Complex<T>>
where
    StandardNormal: Distribution<T>,
{
    (0..n).map(|_| complex_normal(rng)).collect()
}

/// Independent random stream for `(seed, domain, index)`. The same triple
/// always yields the same stream, whatever thread consumes it.
pub fn substream(seed: u64, domain: u16, index: u64) -> ChaCha8Rng {
    assert!(index < 1 << 48, "trial index exceeds stream space");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 48) | index);
    rng
}

/// Reshapes the stacked fading vector `[s_1; ...; s_R]` into the `R×Q`
/// matrix `S` whose row `m` is `s_m^T`.
pub fn fading_matrix<T: Real>(s_stacked: &[Complex<T>], antennas: usize) -> ComplexMatrix<T> {
    assert!(antennas > 0 && s_stacked.len() % antennas == 0, "stack length must be a multiple of R");
    let q = s_stacked.len() / antennas;
    ComplexMatrix::from_vec(antennas, q, s_stacked.to_vec())
}

/// One fading block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSample<T> {
    pub x: Vec<Complex<T>>,
    pub s_stacked: Vec<Complex<T>>,
    pub s_matrix: ComplexMatrix<T>,
    pub w: Vec<Complex<T>>,
    pub y: Vec<Complex<T>>,
}

impl<T: Real> BlockSample<T> {
    /// Checks that `s_matrix` rows are the per-antenna segments of
    /// `s_stacked`.
    pub fn is_consistent(&self) -> bool {
        self.s_matrix.rows() > 0 && fading_matrix(&self.s_stacked, self.s_matrix.rows()) == self.s_matrix
    }
}

/// Samples `x`, `s` and `w` i.i.d. `CN(0, 1)` and forms the output.
pub fn sample_block<T: Real, R: Rng + ?Sized>(
    cfg: &ChannelConfig<T>,
    a: &CovarianceFactor<T>,
    rng: &mut R,
) -> BlockSample<T>
where
    StandardNormal: Distribution<T>,
{
    assert_eq!(a.block_len(), cfg.block_len, "factor rows must equal T");
    assert_eq!(a.rank(), cfg.rank, "factor columns must equal Q");
    let x = complex_normal_vec(rng, cfg.block_len);
    let s_stacked = complex_normal_vec(rng, cfg.antennas * cfg.rank);
    let w = complex_normal_vec(rng, cfg.antennas * cfg.block_len);
    let y = apply_channel(a, &x, &s_stacked, &w, cfg.snr);
    let s_matrix = fading_matrix(&s_stacked, cfg.antennas);
    BlockSample { x, s_stacked, s_matrix, w, y }
}

/// `y = sqrt(snr) (I_R ⊗ diag(x) A) s + w`.
pub fn apply_channel<T: Real>(
    a: &CovarianceFactor<T>,
    x: &[Complex<T>],
    s_stacked: &[Complex<T>],
    w: &[Complex<T>],
    snr: T,
) -> Vec<Complex<T>> {
    assert!(snr > T::zero(), "snr must be positive");
    let clean = noiseless_output(a, x, s_stacked);
    assert_eq!(w.len(), clean.len(), "noise length must be R*T");
    let gain = snr.sqrt();
    clean.iter().zip(w).map(|(&c, &n)| c * gain + n).collect()
}

/// `ỹ = (I_R ⊗ diag(x) A) s`, evaluated antenna by antenna.
pub fn noiseless_output<T: Real>(a: &CovarianceFactor<T>, x: &[Complex<T>], s_stacked: &[Complex<T>]) -> Vec<Complex<T>> {
    let (t, q) = a.matrix().shape();
    assert_eq!(x.len(), t, "symbol count must equal T");
    assert!(!s_stacked.is_empty() && s_stacked.len() % q == 0, "fading length must be R*Q");
    s_stacked
        .chunks(q)
        .flat_map(|s_m| {
            let h = a.matrix().mul_vec(s_m);
            h.into_iter().zip(x).map(|(hi, &xi)| xi * hi).collect::<Vec<_>>()
        })
        .collect()
}

/// Output components on which the noiseless map is one-to-one: the whole
/// first antenna plus the first `Q+1` samples of every other antenna.
pub fn index_set_j(block_len: usize, rank: usize, antennas: usize) -> IndexSet {
    assert!(rank < block_len && antennas >= 1, "need Q < T and R >= 1");
    let mut idx: Vec<usize> = (1..=block_len).collect();
    for m in 1..antennas {
        idx.extend(m * block_len + 1..=m * block_len + rank + 1);
    }
    IndexSet::new(idx, antennas * block_len).expect("J is sorted and in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    type C = Complex<f64>;

    fn close(a: C, b: C, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn config_validation() {
        assert!(ChannelConfig::new(3, 3, 3, 1.0).is_err());
        assert!(ChannelConfig::new(3, 0, 1, 1.0).is_err());
        assert!(ChannelConfig::new(3, 2, 0, 1.0).is_err());
        assert!(ChannelConfig::new(3, 2, 2, 0.0).is_err());
        assert!(ChannelConfig::new(3, 2, 1, 10.0).unwrap().require_matched().is_err());
        assert!(ChannelConfig::matched(3, 2, 10.0).unwrap().require_matched().is_ok());
    }

    #[test]
    fn covariance_factor_rejects_rank_deficiency() {
        let a = ComplexMatrix::<f64>::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        assert!(CovarianceFactor::new(a).is_err());
        let square = ComplexMatrix::<f64>::identity(2);
        assert!(CovarianceFactor::new(square).is_err());
    }

    #[test]
    fn dft_t2_first_column_constant() {
        let a = dft_covariance_factor::<f64>(2, &IndexSet::new(vec![1], 2).unwrap()).unwrap();
        let v = 0.5f64.sqrt();
        assert!(close(a.matrix()[(0, 0)], C::new(v, 0.0), 1e-15));
        assert!(close(a.matrix()[(1, 0)], C::new(v, 0.0), 1e-15));
    }

    #[test]
    fn dft_t3_two_columns() {
        let a = dft_covariance_factor::<f64>(3, &IndexSet::new(vec![1, 2], 3).unwrap()).unwrap();
        let s = 1.0 / 3f64.sqrt();
        let w = C::from_polar(1.0, -2.0 * std::f64::consts::PI / 3.0);
        let expected = [[1.0.into(), 1.0.into()], [1.0.into(), w], [1.0.into(), w * w]];
        for (i, row) in expected.iter().enumerate() {
            for (j, &e) in row.iter().enumerate() {
                assert!(close(a.matrix()[(i, j)], e * s, 1e-15), "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn dft_columns_are_orthonormal() {
        for t in 2..=9 {
            for q in 1..t {
                let a = dft_first_columns::<f64>(t, q).unwrap();
                let gram = a.matrix().adjoint().matmul(a.matrix());
                let err = gram.sub(&ComplexMatrix::identity(q)).max_abs();
                assert!(err < 1e-14, "T={t} Q={q} err={err}");
            }
        }
    }

    #[test]
    fn dft_rejects_full_rank_and_bad_bound() {
        assert!(dft_covariance_factor::<f64>(3, &IndexSet::full(3)).is_err());
        assert!(dft_covariance_factor::<f64>(3, &IndexSet::full(2)).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_consistent() {
        let cfg = ChannelConfig::matched(5, 2, 100.0).unwrap();
        let a = dft_first_columns::<f64>(5, 2).unwrap();
        let b1 = sample_block(&cfg, &a, &mut substream(42, 0, 3));
        let b2 = sample_block(&cfg, &a, &mut substream(42, 0, 3));
        assert_eq!(b1, b2);
        assert!(b1.is_consistent());
        let b3 = sample_block(&cfg, &a, &mut substream(42, 0, 4));
        assert_ne!(b1, b3);
        assert_eq!(b1.y, apply_channel(&a, &b1.x, &b1.s_stacked, &b1.w, cfg.snr));
    }

    #[test]
    fn fading_matrix_rows_are_antenna_segments() {
        let s: Vec<C> = (0..6).map(|k| C::new(k as f64, 0.0)).collect();
        let m = fading_matrix(&s, 3);
        assert_eq!(m.shape(), (3, 2));
        assert_eq!(m[(2, 1)], C::new(5.0, 0.0));
    }

    #[test]
    fn zero_fading_passes_noise_through() {
        let a = dft_first_columns::<f64>(3, 2).unwrap();
        let mut rng = substream(1, 0, 0);
        let x = complex_normal_vec(&mut rng, 3);
        let w = complex_normal_vec(&mut rng, 6);
        let y = apply_channel(&a, &x, &[C::new(0.0, 0.0); 4], &w, 7.0);
        assert_eq!(y, w);
    }

    #[test]
    fn single_antenna_component_expansion() {
        let a = dft_first_columns::<f64>(4, 2).unwrap();
        let mut rng = substream(2, 0, 0);
        let x = complex_normal_vec(&mut rng, 4);
        let s = complex_normal_vec(&mut rng, 2);
        let snr = 13.0;
        let y = apply_channel(&a, &x, &s, &[C::new(0.0, 0.0); 4], snr);
        for i in 0..4 {
            let ai_s = a.row(i)[0] * s[0] + a.row(i)[1] * s[1];
            assert!(close(y[i], x[i] * ai_s * snr.sqrt(), 1e-12));
        }
    }

    #[test]
    fn per_antenna_oracle() {
        // y_m = sqrt(snr) diag(x) A s_m + w_m, built from dense products.
        let a = dft_first_columns::<f64>(3, 2).unwrap();
        let mut rng = substream(3, 0, 0);
        let x = complex_normal_vec(&mut rng, 3);
        let s = complex_normal_vec(&mut rng, 4);
        let w = complex_normal_vec(&mut rng, 6);
        let snr = 2.5;
        let y = apply_channel(&a, &x, &s, &w, snr);
        let xa = ComplexMatrix::diag(&x).matmul(a.matrix());
        for m in 0..2 {
            let ym = xa.mul_vec(&s[2 * m..2 * m + 2]);
            for i in 0..3 {
                assert!(close(y[3 * m + i], ym[i] * snr.sqrt() + w[3 * m + i], 1e-12));
            }
        }
    }

    #[test]
    fn noiseless_output_cases() {
        let a = dft_first_columns::<f64>(3, 2).unwrap();
        let mut rng = substream(4, 0, 0);
        let s = complex_normal_vec(&mut rng, 4);
        let ones = vec![C::new(1.0, 0.0); 3];
        let y = noiseless_output(&a, &ones, &s);
        let h1 = a.matrix().mul_vec(&s[..2]);
        let h2 = a.matrix().mul_vec(&s[2..]);
        assert_eq!(y, [h1, h2].concat());

        let x = complex_normal_vec(&mut rng, 3);
        let clean = noiseless_output(&a, &x, &s);
        let unit = apply_channel(&a, &x, &s, &[C::new(0.0, 0.0); 6], 1.0);
        assert_eq!(clean, unit);
        for m in 0..2 {
            for i in 0..3 {
                let expect = x[i] * (a.row(i)[0] * s[2 * m] + a.row(i)[1] * s[2 * m + 1]);
                assert!(close(clean[3 * m + i], expect, 1e-14));
            }
        }
    }

    #[test]
    fn index_set_j_cases() {
        assert_eq!(index_set_j(3, 2, 2), IndexSet::full(6));
        assert_eq!(index_set_j(7, 3, 1), IndexSet::full(7));
        let j = index_set_j(5, 2, 2);
        assert_eq!(j.as_slice(), &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(j.len(), 5 - 1 + 4);
        assert_eq!(j.complement().as_slice(), &[9, 10]);
    }

    #[test]
    fn index_set_j_cardinality_exhaustive() {
        for t in 2..=12 {
            for q in 1..t {
                assert_eq!(index_set_j(t, q, q).len(), t - 1 + q * q, "T={t} Q={q}");
            }
        }
    }

    #[test]
    fn empirical_symbol_power() {
        let mut rng = substream(11, 0, 0);
        let n = 100_000;
        let p: f64 = (0..n).map(|_| complex_normal::<f64, _>(&mut rng).norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 1.0).abs() < 0.02, "power {p}");
    }

    #[test]
    fn empirical_fading_covariance() {
        let a = dft_first_columns::<f64>(4, 2).unwrap();
        let target = a.matrix().matmul(&a.matrix().adjoint());
        let mut acc = ComplexMatrix::<f64>::zeros(4, 4);
        let mut rng = substream(12, 0, 0);
        let n = 100_000;
        for _ in 0..n {
            let s = complex_normal_vec(&mut rng, 2);
            let h = ComplexMatrix::column(&a.matrix().mul_vec(&s));
            acc = acc.add(&h.matmul(&h.adjoint()));
        }
        let emp = acc.scale(C::new(1.0 / n as f64, 0.0));
        let diff = crate::matrix::singular_values(&emp.sub(&target))[0];
        let norm = crate::matrix::singular_values(&target)[0];
        assert!(diff / norm < 0.05, "relative spectral error {}", diff / norm);
    }
}
