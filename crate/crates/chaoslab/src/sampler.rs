//! Samplers for the Gaussian field grids: exact dense factorization for
//! small grids and FFT circulant embedding for large ones.
//!
//! Both kernels are stationary, so the circulant route applies; they are
//! also convex and decreasing with support in `[0, 1]`, which keeps the
//! embedded spectrum nonnegative up to rounding noise.

use crate::error::{Error, Result};
use crate::kernels::{FieldKind, FieldSpec};
use crate::rng::RngStream;
use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::io::{Read, Write};
use std::sync::Arc;

/// Grid size above which dense factorization is refused.
pub const DENSE_LIMIT: usize = 4096;

/// Relative spectral mass that clipping may remove before the embedding is
/// declared failed.
pub const CLIP_TOLERANCE: f64 = 1e-8;

const RAW_MAGIC: &[u8; 4] = b"CHAO";
const RAW_VERSION: u32 = 1;

/// One realization of a field on the grid, together with the exact
/// pointwise variance from the kernel diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub spec: FieldSpec,
    pub values: Vec<f64>,
    pub variance_profile: Vec<f64>,
}

impl FieldSample {
    fn new(spec: FieldSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.m);
        let variance_profile = vec![spec.variance(); spec.m];
        FieldSample {
            spec,
            values,
            variance_profile,
        }
    }

    /// Raw binary export: 32-byte header (magic, version, kind, t, m)
    /// followed by the grid values as little-endian doubles.
    pub fn write_raw<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(RAW_MAGIC)?;
        w.write_all(&RAW_VERSION.to_le_bytes())?;
        w.write_all(&self.spec.kind.code().to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        w.write_all(&self.spec.t.to_le_bytes())?;
        w.write_all(&(self.spec.m as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_raw<R: Read>(mut r: R) -> Result<FieldSample> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != RAW_MAGIC {
            return Err(Error::Config("bad magic in raw field file".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != RAW_VERSION {
            return Err(Error::Config(format!("unsupported raw version {version}")));
        }
        r.read_exact(&mut u32buf)?;
        let kind = FieldKind::from_code(u32::from_le_bytes(u32buf))?;
        r.read_exact(&mut u32buf)?;
        let mut f64buf = [0u8; 8];
        r.read_exact(&mut f64buf)?;
        let t = f64::from_le_bytes(f64buf);
        r.read_exact(&mut f64buf)?;
        let m = u64::from_le_bytes(f64buf) as usize;
        let spec = FieldSpec::new(kind, t, m)?;
        let mut values = Vec::with_capacity(m);
        for _ in 0..m {
            r.read_exact(&mut f64buf)?;
            values.push(f64::from_le_bytes(f64buf));
        }
        Ok(FieldSample::new(spec, values))
    }
}

/// Dense symmetric covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(pub DMatrix<f64>);

impl CovarianceMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        CovarianceMatrix(DMatrix::from_fn(n, n, f))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// True when every entry of `self` is `<=` the matching entry of `other`.
    pub fn dominated_by(&self, other: &CovarianceMatrix) -> bool {
        self.n() == other.n()
            && self
                .0
                .iter()
                .zip(other.0.iter())
                .all(|(a, b)| a <= b)
    }
}

/// Kernel matrix at the grid centers of a spec.
pub fn build_covariance(spec: &FieldSpec) -> CovarianceMatrix {
    CovarianceMatrix::from_fn(spec.m, |i, j| {
        spec.cov(spec.grid_point(i), spec.grid_point(j))
    })
}

/// Lower Cholesky factor with the diagonal jitter policy: factor as given,
/// then retry once with `1e-12 * max_diag` added to the diagonal, then fail
/// reporting the smallest eigenvalue.
pub struct FactorizedCov {
    lower: DMatrix<f64>,
    jitter: f64,
}

impl FactorizedCov {
    pub fn new(cov: &CovarianceMatrix) -> Result<Self> {
        if let Some(chol) = cov.0.clone().cholesky() {
            return Ok(FactorizedCov {
                lower: chol.unpack(),
                jitter: 0.0,
            });
        }
        let max_diag = (0..cov.n()).map(|i| cov.entry(i, i)).fold(1.0f64, f64::max);
        let jitter = 1e-12 * max_diag;
        let mut jittered = cov.0.clone();
        for i in 0..cov.n() {
            jittered[(i, i)] += jitter;
        }
        if let Some(chol) = jittered.cholesky() {
            return Ok(FactorizedCov {
                lower: chol.unpack(),
                jitter,
            });
        }
        let min_eig = cov
            .0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        Err(Error::Numeric(format!(
            "covariance factorization failed even with jitter {jitter:.3e}; \
             smallest eigenvalue estimate {min_eig:.6e}"
        )))
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn n(&self) -> usize {
        self.lower.nrows()
    }

    /// Correlated draw `L z` from one vector of standard normals.
    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut z = DVector::zeros(self.n());
        for v in z.iter_mut() {
            *v = rng.standard_normal();
        }
        self.sample_from(&z)
    }

    /// Correlated draw from externally supplied standard normals, for
    /// common-random-number comparisons.
    pub fn sample_from(&self, z: &DVector<f64>) -> Vec<f64> {
        (&self.lower * z).iter().cloned().collect()
    }
}

/// Exact dense sampler for a field spec.
pub struct CholeskySampler {
    spec: FieldSpec,
    factor: FactorizedCov,
}

impl CholeskySampler {
    pub fn new(spec: FieldSpec) -> Result<Self> {
        if spec.m > DENSE_LIMIT {
            return Err(Error::Config(format!(
                "grid size {} exceeds the dense factorization limit {}",
                spec.m, DENSE_LIMIT
            )));
        }
        let cov = build_covariance(&spec);
        let factor = FactorizedCov::new(&cov)?;
        Ok(CholeskySampler { spec, factor })
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    pub fn sample(&self, rng: &mut RngStream) -> FieldSample {
        FieldSample::new(self.spec, self.factor.sample(rng))
    }
}

/// One-shot exact sample of a spec through the dense route.
pub fn sample_cholesky(spec: FieldSpec, rng: &mut RngStream) -> Result<FieldSample> {
    Ok(CholeskySampler::new(spec)?.sample(rng))
}

/// FFT circulant-embedding sampler.
///
/// The embedding size starts at `2m` and doubles until the circulant
/// spectrum is nonnegative or the clipped relative mass falls below
/// `CLIP_TOLERANCE`; larger clipping is an error.
pub struct CirculantEmbedding {
    spec: FieldSpec,
    embed_len: usize,
    /// `sqrt(lambda_j / M)` per frequency, negatives clipped to zero.
    scaled_sqrt_eigs: Vec<f64>,
    clipped_mass: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl CirculantEmbedding {
    pub fn new(spec: FieldSpec) -> Result<Self> {
        if spec.m < 2 {
            return Err(Error::Config(
                "circulant embedding needs a grid of at least 2 points".into(),
            ));
        }
        let mut planner = FftPlanner::new();
        let mut embed_len = 2 * spec.m;
        let max_len = (64 * spec.m).max(1 << 22);
        loop {
            let fft = planner.plan_fft_forward(embed_len);
            let mut row: Vec<Complex64> = (0..embed_len)
                .map(|j| {
                    let lag = j.min(embed_len - j) as f64 / spec.m as f64;
                    Complex64::new(spec.cov(0.0, lag), 0.0)
                })
                .collect();
            fft.process(&mut row);
            let eigs: Vec<f64> = row.iter().map(|c| c.re).collect();
            let total_mass: f64 = eigs.iter().map(|l| l.abs()).sum();
            let neg_mass: f64 = eigs.iter().filter(|l| **l < 0.0).map(|l| -*l).sum();
            let rel_clip = neg_mass / total_mass;
            if eigs.iter().all(|l| *l >= 0.0) || rel_clip <= CLIP_TOLERANCE {
                let scale = 1.0 / embed_len as f64;
                let scaled_sqrt_eigs = eigs
                    .iter()
                    .map(|l| (l.max(0.0) * scale).sqrt())
                    .collect();
                return Ok(CirculantEmbedding {
                    spec,
                    embed_len,
                    scaled_sqrt_eigs,
                    clipped_mass: rel_clip,
                    fft,
                });
            }
            embed_len *= 2;
            if embed_len > max_len {
                return Err(Error::Numeric(format!(
                    "circulant embedding failed for m = {}, t = {}: relative \
                     negative spectral mass {rel_clip:.3e} above {CLIP_TOLERANCE:.0e} \
                     at embedding size {}",
                    spec.m,
                    spec.t,
                    embed_len / 2
                )));
            }
        }
    }

    pub fn embed_len(&self) -> usize {
        self.embed_len
    }

    /// Relative spectral mass removed by clipping, zero when the embedded
    /// spectrum was already nonnegative.
    pub fn relative_clipped_mass(&self) -> f64 {
        self.clipped_mass
    }

    pub fn sample(&self, rng: &mut RngStream) -> FieldSample {
        let m = self.embed_len;
        let mut w: Vec<Complex64> = Vec::with_capacity(m);
        for s in &self.scaled_sqrt_eigs {
            let u = rng.standard_normal();
            let v = rng.standard_normal();
            w.push(Complex64::new(s * u, s * v));
        }
        self.fft.process(&mut w);
        let values: Vec<f64> = w[..self.spec.m].iter().map(|c| c.re).collect();
        FieldSample::new(self.spec, values)
    }
}

/// One-shot sample of a spec through the circulant route.
pub fn sample_circulant(spec: FieldSpec, rng: &mut RngStream) -> Result<FieldSample> {
    Ok(CirculantEmbedding::new(spec)?.sample(rng))
}

/// Sampler chosen by grid size: dense factorization up to `DENSE_LIMIT`,
/// circulant embedding beyond.
pub enum FieldSampler {
    Dense(CholeskySampler),
    Circulant(CirculantEmbedding),
}

impl FieldSampler {
    pub fn new(spec: FieldSpec) -> Result<Self> {
        if spec.m <= DENSE_LIMIT {
            Ok(FieldSampler::Dense(CholeskySampler::new(spec)?))
        } else {
            Ok(FieldSampler::Circulant(CirculantEmbedding::new(spec)?))
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> FieldSample {
        match self {
            FieldSampler::Dense(s) => s.sample(rng),
            FieldSampler::Circulant(s) => s.sample(rng),
        }
    }
}
