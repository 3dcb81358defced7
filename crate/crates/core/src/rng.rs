//! Hierarchically keyed random streams and the samplers built on them.
//!
//! A [`StreamKey`] is a master seed plus a path of `(tag, index)` labels such as
//! `replicate 3 / imputation 7 / interval 2 / variable y3`. The path is hashed
//! into a 256-bit ChaCha12 seed, so every path maps to its own stream and no
//! coordination between workers is needed. Normal variates come from the
//! ziggurat sampler in `rand_distr`; exponentials use the inverse CDF.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Negative eigenvalues down to `-CLIP_TOLERANCE * max_eigenvalue` are treated
/// as rounding noise and clipped to zero.
pub const CLIP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub labels: Vec<(&'static str, u64)>,
}

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            labels: Vec::new(),
        }
    }

    pub fn child(&self, tag: &'static str, index: u64) -> Self {
        let mut labels = self.labels.clone();
        labels.push((tag, index));
        Self {
            master_seed: self.master_seed,
            labels,
        }
    }

    pub fn stream(&self) -> RandomStream {
        derive_stream(self)
    }

    fn seed_bytes(&self) -> [u8; 32] {
        let mut lanes = [
            0x243f_6a88_85a3_08d3u64,
            0x1319_8a2e_0370_7344,
            0xa409_3822_299f_31d0,
            0x082e_fa98_ec4e_6c89,
        ];
        let mut absorb = |word: u64| {
            for (i, lane) in lanes.iter_mut().enumerate() {
                *lane = splitmix64(*lane ^ word.wrapping_add(i as u64).rotate_left(17 * i as u32));
            }
        };
        absorb(self.master_seed);
        absorb(self.labels.len() as u64);
        for (tag, index) in &self.labels {
            absorb(fnv1a(tag.as_bytes()));
            absorb(*index);
        }
        let mut out = [0u8; 32];
        for (chunk, lane) in out.chunks_exact_mut(8).zip(lanes) {
            chunk.copy_from_slice(&splitmix64(lane).to_le_bytes());
        }
        out
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// A value-like random stream. Cloning copies its position.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha12Rng,
}

pub fn derive_stream(key: &StreamKey) -> RandomStream {
    RandomStream {
        rng: ChaCha12Rng::from_seed(key.seed_bytes()),
    }
}

impl RandomStream {
    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.rng.gen::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.gen()
    }
}

/// Square-root factor `L` with `L Lᵀ = cov`, after clipping rounding-level
/// negative eigenvalues.
pub fn psd_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance entry".into()));
    }
    if n == 0 || cov.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::zeros(n, n));
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max_eig = eig.eigenvalues.max();
    let min_eig = eig.eigenvalues.min();
    if min_eig < -CLIP_TOLERANCE * max_eig.max(0.0) || max_eig < 0.0 {
        return Err(Error::IndefiniteCovariance { min_eig, max_eig });
    }
    let mut factor = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    Ok(factor)
}

pub fn draw_mvn(stream: &mut RandomStream, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<DVector<f64>> {
    if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
        return Err(Error::DimensionMismatch(format!(
            "mean has length {} but covariance is {}x{}",
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let factor = psd_sqrt(cov)?;
    let z = DVector::from_fn(mean.len(), |_, _| stream.standard_normal());
    Ok(mean + factor * z)
}

pub fn draw_chi_square(stream: &mut RandomStream, df: u64) -> Result<f64> {
    if df < 1 {
        return Err(Error::InvalidArgument(format!("chi-square df must be >= 1, got {df}")));
    }
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(dist.sample(&mut stream.rng))
}

pub fn draw_exponential(stream: &mut RandomStream, rate: f64) -> Result<f64> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidArgument(format!("exponential rate must be positive and finite, got {rate}")));
    }
    Ok(exponential_from_uniform(stream.uniform_open0(), rate))
}

/// Inverse CDF of the exponential distribution for `u` in `(0, 1]`.
pub fn exponential_from_uniform(u: f64, rate: f64) -> f64 {
    -u.ln() / rate
}

pub fn draw_bernoulli(stream: &mut RandomStream, p: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
    }
    Ok(u8::from(stream.uniform() < p))
}
