//! Random matrix generators for the power study, plus Haar-orthogonal
//! draws for invariance testing.
//!
//! Two Wishart parametrizations appear and must not be confused.
//! [`sample_wishart`] is rate-parametrized — density proportional to
//! `(det Σ)^a (det X)^{a - (d+1)/2} etr(-Σ X)`, drawn via the conventional
//! Bartlett sampler with degrees of freedom `2a` and scale `(2Σ)^{-1}`,
//! mean `a Σ^{-1}` — which is the form the test statistic's weighting
//! measure uses. The `W(d,a,sigma)` labels of power-study scenarios,
//! however, follow the conventional `(df, scale)` reading — df `a`, scale
//! `Σ`, mean `a Σ` — which is what reproduces the reference power levels
//! (the two readings coincide on every identity-scale mean, so only power
//! levels distinguish them). The inverse Wishart has one reading: invert a
//! conventional Wishart with `df = a` and scale `Σ^{-1}`; its mean is
//! `Σ / (a - d - 1)` when that exists. All mappings are pinned by moment
//! tests.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::spectral::SpectralMatrix;
use crate::{Error, Result};

/// Names the covariance normalization used when a matrix is assembled from
/// centered vectors: the plain outer-product sum, the (n-1) sample rule, or
/// the maximum-likelihood 1/n rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Normalization {
    Sum,
    Sample,
    Ml,
}

impl Normalization {
    fn divisor(self, count: usize) -> f64 {
        match self {
            Normalization::Sum => 1.0,
            Normalization::Sample => (count - 1) as f64,
            Normalization::Ml => count as f64,
        }
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Normalization::Sum),
            "sample" => Ok(Normalization::Sample),
            "ml" => Ok(Normalization::Ml),
            other => Err(Error::Parse(format!(
                "unknown normalization {other:?}; expected sum, sample or ml"
            ))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Sum => "sum",
            Normalization::Sample => "sample",
            Normalization::Ml => "ml",
        })
    }
}

/// The 2x2 built-in scale matrix used by the power study.
pub fn k2_matrix() -> SpectralMatrix {
    let (c, s) = (0.7f64.cos(), 0.7f64.sin());
    SpectralMatrix::from_rows(&[vec![c, s], vec![s, c]]).expect("K2 is positive definite")
}

/// The 3x3 built-in scale matrix used by the power study.
pub fn k3_matrix() -> SpectralMatrix {
    SpectralMatrix::from_rows(&[
        vec![1.0, -1.0, 0.95],
        vec![-1.0, 5.0, 0.01],
        vec![0.95, 0.01, 7.0],
    ])
    .expect("K3 is positive definite")
}

/// One of the four matrix distribution families of the power study.
#[derive(Debug, Clone)]
pub enum DistributionSpec {
    /// Wishart `W_d(a, Σ)` in the conventional `(df, scale)` reading;
    /// requires `a > d - 1` to sample.
    Wishart { a: f64, sigma: SpectralMatrix },
    /// Inverse Wishart `IW_d(a, Σ)`; requires `a > d - 1` to sample.
    InvWishart { a: f64, sigma: SpectralMatrix },
    /// Covariance matrix of `nvec` i.i.d. uniform vectors on [0,1]^d.
    CovUniform { dim: usize, nvec: usize },
    /// Covariance matrix of `nvec` i.i.d. multivariate-t vectors.
    CovT {
        a: f64,
        sigma: SpectralMatrix,
        nvec: usize,
    },
}

impl DistributionSpec {
    pub fn dim(&self) -> usize {
        match self {
            DistributionSpec::Wishart { sigma, .. } => sigma.dim(),
            DistributionSpec::InvWishart { sigma, .. } => sigma.dim(),
            DistributionSpec::CovUniform { dim, .. } => *dim,
            DistributionSpec::CovT { sigma, .. } => sigma.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DistributionSpec::Wishart { a, sigma } => {
                let d = sigma.dim() as f64;
                sigma.require_positive_definite("Wishart scale")?;
                if *a <= d - 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "Wishart degrees of freedom {a} must exceed d - 1 = {}",
                        d - 1.0
                    )));
                }
            }
            DistributionSpec::InvWishart { a, sigma } => {
                let d = sigma.dim() as f64;
                sigma.require_positive_definite("inverse Wishart scale")?;
                if *a <= d - 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "inverse Wishart shape {a} must exceed d - 1 = {}",
                        d - 1.0
                    )));
                }
            }
            DistributionSpec::CovUniform { dim, nvec } => {
                check_nvec(*dim, *nvec)?;
            }
            DistributionSpec::CovT { a, sigma, nvec } => {
                sigma.require_positive_definite("t scale")?;
                if *a <= 0.0 {
                    return Err(Error::InvalidParameter(
                        "t degrees of freedom must be positive".into(),
                    ));
                }
                check_nvec(sigma.dim(), *nvec)?;
            }
        }
        Ok(())
    }

    /// One draw. Callers own the generator; replications should derive
    /// independent streams from a seed and a replication index.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<SpectralMatrix> {
        match self {
            DistributionSpec::Wishart { a, sigma } => {
                sample_wishart_conventional(*a, sigma, rng)
            }
            DistributionSpec::InvWishart { a, sigma } => sample_inv_wishart(*a, sigma, rng),
            DistributionSpec::CovUniform { dim, nvec } => {
                sample_cov_uniform(*dim, *nvec, Normalization::Sum, rng)
            }
            DistributionSpec::CovT { a, sigma, nvec } => {
                sample_cov_t(*a, sigma, *nvec, Normalization::Sum, rng)
            }
        }
    }
}

fn check_nvec(dim: usize, nvec: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    if nvec < dim + 1 {
        return Err(Error::InvalidParameter(format!(
            "nvec = {nvec} too small; need at least d + 1 = {} vectors",
            dim + 1
        )));
    }
    Ok(())
}

/// Lower-triangular Bartlett factor of a conventional Wishart with the
/// given (possibly fractional) degrees of freedom: standard normals below
/// the diagonal, square roots of chi-square draws on it.
fn bartlett_factor(dim: usize, df: f64, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let dof = df - i as f64;
        if dof <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "degrees of freedom {df} too small for dimension {dim}"
            )));
        }
        let chi = ChiSquared::new(dof).map_err(|e| {
            Error::InvalidParameter(format!("chi-square with {dof} dof: {e}"))
        })?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    Ok(a)
}

fn conventional_wishart(
    scale: &DMatrix<f64>,
    df: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(scale.clone()).ok_or_else(|| {
        Error::NotPositiveSemiDefinite("Wishart scale failed Cholesky".into())
    })?;
    let l = chol.l();
    let a = bartlett_factor(scale.nrows(), df, rng)?;
    let la = l * a;
    Ok(&la * la.transpose())
}

/// Draw from the conventional Wishart with degrees of freedom `df` and
/// scale matrix `scale`; mean `df * scale`. This is the reading the
/// power-study `W(...)` labels use.
pub fn sample_wishart_conventional(
    df: f64,
    scale: &SpectralMatrix,
    rng: &mut ChaCha8Rng,
) -> Result<SpectralMatrix> {
    let d = scale.dim() as f64;
    scale.require_positive_definite("Wishart scale")?;
    if df <= d - 1.0 {
        return Err(Error::InvalidParameter(format!(
            "Wishart degrees of freedom {df} must exceed d - 1 = {}",
            d - 1.0
        )));
    }
    SpectralMatrix::new(conventional_wishart(scale.entries(), df, rng)?)
}

/// Draw from the rate-parametrized Wishart `W_d(a, Σ)` with density
/// proportional to `(det X)^{a-(d+1)/2} etr(-Σ X)` and mean `a Σ^{-1}`;
/// this is the parametrization of the statistic's weighting measure.
pub fn sample_wishart(
    a: f64,
    sigma: &SpectralMatrix,
    rng: &mut ChaCha8Rng,
) -> Result<SpectralMatrix> {
    let d = sigma.dim() as f64;
    sigma.require_positive_definite("Wishart scale")?;
    if a <= (d - 1.0) / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "Wishart shape {a} must exceed (d-1)/2 = {}",
            (d - 1.0) / 2.0
        )));
    }
    let scale = (sigma.entries() * 2.0)
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveSemiDefinite("scale not invertible".into()))?;
    SpectralMatrix::new(conventional_wishart(&scale, 2.0 * a, rng)?)
}

/// Draw from the inverse Wishart `IW_d(a, Σ)`; `X = W^{-1}` for a
/// conventional Wishart `W` with df `a` and scale `Σ^{-1}`.
pub fn sample_inv_wishart(
    a: f64,
    sigma: &SpectralMatrix,
    rng: &mut ChaCha8Rng,
) -> Result<SpectralMatrix> {
    let d = sigma.dim() as f64;
    sigma.require_positive_definite("inverse Wishart scale")?;
    if a <= d - 1.0 {
        return Err(Error::InvalidParameter(format!(
            "inverse Wishart shape {a} must exceed d - 1 = {}",
            d - 1.0
        )));
    }
    let scale = sigma
        .entries()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveSemiDefinite("scale not invertible".into()))?;
    let w = conventional_wishart(&scale, a, rng)?;
    let x = w
        .try_inverse()
        .ok_or_else(|| Error::Inconsistency("Wishart draw not invertible".into()))?;
    SpectralMatrix::new(x)
}

/// Centered outer-product matrix of a list of d-vectors under the given
/// normalization; shared by the covariance samplers and the return-block
/// pipeline.
pub(crate) fn covariance_of(
    vectors: &[Vec<f64>],
    normalization: Normalization,
) -> Result<SpectralMatrix> {
    let n = vectors.len();
    let d = vectors[0].len();
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = DMatrix::zeros(d, d);
    for v in vectors {
        for i in 0..d {
            let ci = v[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += ci * (v[j] - mean[j]);
            }
        }
    }
    let div = normalization.divisor(n);
    for i in 0..d {
        for j in i..d {
            cov[(i, j)] /= div;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    SpectralMatrix::new(cov)
}

/// Covariance matrix of `nvec` i.i.d. uniform vectors on the unit cube.
pub fn sample_cov_uniform(
    dim: usize,
    nvec: usize,
    normalization: Normalization,
    rng: &mut ChaCha8Rng,
) -> Result<SpectralMatrix> {
    check_nvec(dim, nvec)?;
    let vectors: Vec<Vec<f64>> = (0..nvec)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
        .collect();
    covariance_of(&vectors, normalization)
}

/// Covariance matrix of `nvec` i.i.d. multivariate-t vectors with `a`
/// degrees of freedom and scale Σ, generated as `z / sqrt(g / a)` with
/// `z ~ N(0, Σ)` and `g ~ χ²_a`.
pub fn sample_cov_t(
    a: f64,
    sigma: &SpectralMatrix,
    nvec: usize,
    normalization: Normalization,
    rng: &mut ChaCha8Rng,
) -> Result<SpectralMatrix> {
    let dim = sigma.dim();
    check_nvec(dim, nvec)?;
    sigma.require_positive_definite("t scale")?;
    if a <= 0.0 {
        return Err(Error::InvalidParameter(
            "t degrees of freedom must be positive".into(),
        ));
    }
    let chol = nalgebra::Cholesky::new(sigma.entries().clone())
        .ok_or_else(|| Error::NotPositiveSemiDefinite("t scale failed Cholesky".into()))?;
    let l = chol.l();
    let chi = ChiSquared::new(a)
        .map_err(|e| Error::InvalidParameter(format!("chi-square with {a} dof: {e}")))?;
    let vectors: Vec<Vec<f64>> = (0..nvec)
        .map(|_| {
            let z = DMatrix::from_fn(dim, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
            let correlated = &l * z;
            let g: f64 = chi.sample(rng);
            let factor = (a / g).sqrt();
            (0..dim).map(|i| correlated[(i, 0)] * factor).collect()
        })
        .collect();
    covariance_of(&vectors, normalization)
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// R diagonal signs fixed.
pub fn sample_haar_orthogonal(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    assert!(m >= 1, "dimension must be >= 1");
    let g = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            for i in 0..m {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistributionSpec::Wishart { a, sigma } => {
                write!(f, "W(d={},a={},sigma={})", sigma.dim(), a, sigma_label(sigma))
            }
            DistributionSpec::InvWishart { a, sigma } => {
                write!(f, "IW(d={},a={},sigma={})", sigma.dim(), a, sigma_label(sigma))
            }
            DistributionSpec::CovUniform { dim, nvec } => {
                write!(f, "CMU(d={dim},nvec={nvec})")
            }
            DistributionSpec::CovT { a, sigma, nvec } => {
                write!(
                    f,
                    "CMT(d={},a={},sigma={},nvec={})",
                    sigma.dim(),
                    a,
                    sigma_label(sigma),
                    nvec
                )
            }
        }
    }
}

fn sigma_label(sigma: &SpectralMatrix) -> String {
    let d = sigma.dim();
    if matrices_equal(sigma, &k2_matrix()) {
        return "K2".into();
    }
    if d == 3 && matrices_equal(sigma, &k3_matrix()) {
        return "K3".into();
    }
    // multiples of the identity
    let c = sigma.entries()[(0, 0)];
    let ci = SpectralMatrix::scaled_identity(d, c);
    if matrices_equal(sigma, &ci) {
        return if (c - 1.0).abs() < 1e-12 {
            "I".into()
        } else {
            format!("{c}*I")
        };
    }
    format!("{:?}", sigma.entries().as_slice())
}

fn matrices_equal(a: &SpectralMatrix, b: &SpectralMatrix) -> bool {
    a.dim() == b.dim()
        && a.entries()
            .iter()
            .zip(b.entries().iter())
            .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0))
}

impl FromStr for DistributionSpec {
    type Err = Error;

    /// Canonical text form, e.g. `W(d=2,a=2.5,sigma=I)`,
    /// `IW(d=2,a=4,sigma=2.5*I)`, `CMU(d=2,nvec=3)`,
    /// `CMT(d=2,a=3,sigma=K2,nvec=3)`. `nvec` defaults to `d + 1`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s
            .find('(')
            .ok_or_else(|| Error::Parse(format!("missing '(' in {s:?}")))?;
        if !s.ends_with(')') {
            return Err(Error::Parse(format!("missing ')' in {s:?}")));
        }
        let family = &s[..open];
        let body = &s[open + 1..s.len() - 1];
        let mut dim: Option<usize> = None;
        let mut a: Option<f64> = None;
        let mut sigma_text: Option<String> = None;
        let mut nvec: Option<usize> = None;
        for field in body.split(',').filter(|f| !f.trim().is_empty()) {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got {field:?}")))?;
            let value = value.trim();
            match key.trim() {
                "d" => dim = Some(parse_num(value)?),
                "a" => {
                    a = Some(value.parse().map_err(|_| {
                        Error::Parse(format!("invalid shape parameter {value:?}"))
                    })?)
                }
                "sigma" => sigma_text = Some(value.to_string()),
                "nvec" => nvec = Some(parse_num(value)?),
                other => {
                    return Err(Error::Parse(format!("unknown field {other:?} in {s:?}")))
                }
            }
        }
        let dim = dim.ok_or_else(|| Error::Parse(format!("missing d= in {s:?}")))?;
        let sigma = match sigma_text.as_deref() {
            Some(text) => Some(parse_sigma(text, dim)?),
            None => None,
        };
        let need_a =
            || a.ok_or_else(|| Error::Parse(format!("missing a= in {s:?}")));
        let spec = match family {
            "W" => DistributionSpec::Wishart {
                a: need_a()?,
                sigma: sigma.unwrap_or_else(|| SpectralMatrix::identity(dim)),
            },
            "IW" => DistributionSpec::InvWishart {
                a: need_a()?,
                sigma: sigma.unwrap_or_else(|| SpectralMatrix::identity(dim)),
            },
            "CMU" => DistributionSpec::CovUniform {
                dim,
                nvec: nvec.unwrap_or(dim + 1),
            },
            "CMT" => DistributionSpec::CovT {
                a: need_a()?,
                sigma: sigma.unwrap_or_else(|| SpectralMatrix::identity(dim)),
                nvec: nvec.unwrap_or(dim + 1),
            },
            other => {
                return Err(Error::Parse(format!(
                    "unknown family {other:?}; expected W, IW, CMU or CMT"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_num(value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("invalid integer {value:?}")))
}

fn parse_sigma(text: &str, dim: usize) -> Result<SpectralMatrix> {
    let check_dim = |matrix: SpectralMatrix, name: &str| {
        if matrix.dim() != dim {
            Err(Error::Parse(format!(
                "sigma {name} has dimension {} but d={dim}",
                matrix.dim()
            )))
        } else {
            Ok(matrix)
        }
    };
    match text {
        "I" => Ok(SpectralMatrix::identity(dim)),
        "K2" => check_dim(k2_matrix(), "K2"),
        "K3" => check_dim(k3_matrix(), "K3"),
        other => {
            if let Some(coeff) = other.strip_suffix("*I") {
                let c: f64 = coeff.parse().map_err(|_| {
                    Error::Parse(format!("invalid sigma coefficient {coeff:?}"))
                })?;
                if c <= 0.0 {
                    return Err(Error::Parse("sigma multiple must be positive".into()));
                }
                Ok(SpectralMatrix::scaled_identity(dim, c))
            } else {
                Err(Error::Parse(format!(
                    "unknown sigma {other:?}; expected I, c*I, K2 or K3"
                )))
            }
        }
    }
}
