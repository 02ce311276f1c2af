//! The two-sample statistic.
//!
//! The squared L2 difference of two empirical orthogonally invariant Hankel
//! transforms against the standard Wishart measure has a closed form in the
//! pair kernel
//!
//! ```text
//! h_ν(X, Y) = etr(-X - Y) · J_ν(-X, Y) = exp(-tr X - tr Y + ln 0F1(b; X, Y))
//! ```
//!
//! with `b = ν + (m+1)/2`, so the statistic assembles from three Gram
//! blocks:
//!
//! ```text
//! I = (1/n1²) Σ h(X_i, X_j) + (1/n2²) Σ h(Y_k, Y_l) - (2/n1n2) Σ h(X_i, Y_k)
//! ```
//!
//! Kernel evaluations are pure; sums run in a fixed order with compensated
//! accumulation so results do not depend on evaluation order.

use serde::Serialize;

use crate::specfun::{SeriesControl, Workspace, ZonalTable};
use crate::spectral::SpectralMatrix;
use crate::{Error, Result};

/// Negative statistic values beyond this magnitude indicate a bug rather
/// than rounding.
const NEGATIVE_I_TOL: f64 = 1e-10;

/// A homogeneous collection of sample matrices.
#[derive(Debug, Clone)]
pub struct SampleSet {
    matrices: Vec<SpectralMatrix>,
}

impl SampleSet {
    pub fn new(matrices: Vec<SpectralMatrix>) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::EmptyInput("sample set".into()))?;
        let dim = first.dim();
        if matrices.iter().any(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch(
                "sample matrices have mixed dimensions".into(),
            ));
        }
        Ok(SampleSet { matrices })
    }

    pub fn matrices(&self) -> &[SpectralMatrix] {
        &self.matrices
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].dim()
    }

    /// Number of numerically singular members (kept, but worth surfacing).
    pub fn rank_deficient_count(&self) -> usize {
        self.matrices.iter().filter(|m| m.is_rank_deficient()).count()
    }
}

/// Worst-case convergence report aggregated over many series evaluations.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SeriesDiagnostics {
    pub evaluations: usize,
    pub non_converged: usize,
    pub max_degree_reached: usize,
    pub worst_last_layer_ratio: f64,
}

impl SeriesDiagnostics {
    pub(crate) fn absorb(&mut self, converged: bool, degree: usize, ratio: f64) {
        self.evaluations += 1;
        if !converged {
            self.non_converged += 1;
        }
        self.max_degree_reached = self.max_degree_reached.max(degree);
        if ratio.is_finite() {
            self.worst_last_layer_ratio = self.worst_last_layer_ratio.max(ratio);
        }
    }

    pub(crate) fn merge(&mut self, other: &SeriesDiagnostics) {
        self.evaluations += other.evaluations;
        self.non_converged += other.non_converged;
        self.max_degree_reached = self.max_degree_reached.max(other.max_degree_reached);
        self.worst_last_layer_ratio = self
            .worst_last_layer_ratio
            .max(other.worst_last_layer_ratio);
    }

    pub fn all_converged(&self) -> bool {
        self.non_converged == 0
    }
}

/// The statistic together with its scaled form and metadata.
#[derive(Debug, Clone, Serialize)]
pub struct StatisticValue {
    /// The integrated squared transform difference `I_{n1,n2}`.
    pub i_value: f64,
    /// `(n1 n2 / (n1 + n2)) * i_value`, the quantity with a limit law.
    pub scaled: f64,
    pub nu: f64,
    pub n1: usize,
    pub n2: usize,
    pub series: SeriesDiagnostics,
}

/// One pair-kernel evaluation.
#[derive(Debug, Clone)]
pub struct KernelEval {
    pub value: f64,
    pub converged: bool,
    pub achieved_degree: usize,
    pub last_layer_ratio: f64,
}

fn series_order(nu: f64, m: usize) -> Result<f64> {
    if nu <= (m as f64 - 2.0) / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "order nu = {nu} must exceed (m-2)/2 = {} in dimension {m}",
            (m as f64 - 2.0) / 2.0
        )));
    }
    Ok(nu + (m as f64 + 1.0) / 2.0)
}

/// True when the pair kernel is exactly 0.0 in f64, so the series walk can
/// be skipped. Uses the bound `0F1(b; X, Y) <= exp(2 sqrt(m min(λ_x tr Y,
/// λ_y tr X)))`, which follows from `C_κ(X) <= λ_x^k C_κ(I)`,
/// `Σ_κ C_κ(Y) = (tr Y)^k` and `[b]_κ >= k!/m^k`; the last step needs
/// `b - (m-1)/2 >= 1`, so the shortcut is disabled below that.
fn kernel_underflows(b: f64, x: &SpectralMatrix, y: &SpectralMatrix) -> bool {
    let m = x.dim() as f64;
    if b - (m - 1.0) / 2.0 < 1.0 {
        return false;
    }
    let lead_x = x.eigenvalues()[0];
    let lead_y = y.eigenvalues()[0];
    let cross = m * (lead_x * y.trace()).min(lead_y * x.trace());
    2.0 * cross.max(0.0).sqrt() - x.trace() - y.trace() < -760.0
}

/// Compensated (Kahan) summation in the iteration order of the input.
fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Empirical orthogonally invariant Hankel transform of a sample at `T`:
/// the sample mean of `J_ν(T, X_j)`. Lies in [-1, 1].
pub fn empirical_transform(
    sample: &SampleSet,
    t: &SpectralMatrix,
    nu: f64,
    ctl: &SeriesControl,
) -> Result<f64> {
    if t.dim() != sample.dim() {
        return Err(Error::DimensionMismatch(
            "evaluation point dimension differs from the sample".into(),
        ));
    }
    t.require_positive_definite("transform argument T")?;
    let m = sample.dim();
    let b = series_order(nu, m)?;
    let mut ws = Workspace::new(b, m, ctl)?;
    let neg_t: Vec<f64> = t.eigenvalues().iter().map(|x| -x).collect();
    let t_table = ZonalTable::new(&neg_t);
    let mut values = Vec::with_capacity(sample.len());
    for x in sample.matrices() {
        let x_table = ZonalTable::new(x.eigenvalues());
        let f = ws.eval_double_ln(&t_table, &x_table)?;
        values.push(f.sign * f.ln_abs.exp());
    }
    Ok(kahan_sum(values.into_iter()) / sample.len() as f64)
}

/// Repeated empirical-transform evaluation for one fixed sample, reusing
/// the per-matrix zonal tables across evaluation points. One evaluator
/// serves one thread.
pub struct TransformEvaluator {
    ws: Workspace,
    tables: Vec<ZonalTable>,
    n: usize,
}

impl TransformEvaluator {
    pub fn new(sample: &SampleSet, nu: f64, ctl: &SeriesControl) -> Result<Self> {
        let m = sample.dim();
        let b = series_order(nu, m)?;
        Ok(TransformEvaluator {
            ws: Workspace::new(b, m, ctl)?,
            tables: sample
                .matrices()
                .iter()
                .map(|x| ZonalTable::new(x.eigenvalues()))
                .collect(),
            n: sample.len(),
        })
    }

    /// `H~_{n,ν}(T)`, the mean of `J_ν(T, X_j)` over the sample.
    pub fn value(&mut self, t: &SpectralMatrix) -> Result<f64> {
        let neg_t: Vec<f64> = t.eigenvalues().iter().map(|x| -x).collect();
        let t_table = ZonalTable::new(&neg_t);
        let mut values = Vec::with_capacity(self.n);
        for table in &self.tables {
            let f = self.ws.eval_double_ln(&t_table, table)?;
            values.push(f.sign * f.ln_abs.exp());
        }
        Ok(kahan_sum(values.into_iter()) / self.n as f64)
    }
}

/// The pair kernel `h_ν(X, Y)`, symmetric, invariant under orthogonal
/// conjugation of either argument, and confined to (0, 1].
pub fn pair_kernel(
    x: &SpectralMatrix,
    y: &SpectralMatrix,
    nu: f64,
    ctl: &SeriesControl,
) -> Result<KernelEval> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(
            "kernel arguments have different dimensions".into(),
        ));
    }
    let b = series_order(nu, x.dim())?;
    if kernel_underflows(b, x, y) {
        return Ok(KernelEval {
            value: 0.0,
            converged: true,
            achieved_degree: 0,
            last_layer_ratio: 0.0,
        });
    }
    let mut ws = Workspace::new(b, x.dim(), ctl)?;
    let tx = ZonalTable::new(x.eigenvalues());
    let ty = ZonalTable::new(y.eigenvalues());
    let f = ws.eval_double_ln(&tx, &ty)?;
    Ok(KernelEval {
        value: (f.ln_abs - x.trace() - y.trace()).exp(),
        converged: f.converged,
        achieved_degree: f.achieved_degree,
        last_layer_ratio: f.last_layer_ratio,
    })
}

/// All pair-kernel values over one pooled list of matrices, stored densely
/// for O(1) lookup. Building this once makes bootstrap replication cheap:
/// every resampled statistic is an index computation over the same values.
pub struct PooledGram {
    n: usize,
    values: Vec<f64>,
    pub nu: f64,
    pub diagnostics: SeriesDiagnostics,
}

impl PooledGram {
    pub fn build(pool: &[SpectralMatrix], nu: f64, ctl: &SeriesControl) -> Result<Self> {
        let first = pool
            .first()
            .ok_or_else(|| Error::EmptyInput("pooled sample".into()))?;
        let m = first.dim();
        if pool.iter().any(|x| x.dim() != m) {
            return Err(Error::DimensionMismatch(
                "pooled matrices have mixed dimensions".into(),
            ));
        }
        let b = series_order(nu, m)?;
        let mut ws = Workspace::new(b, m, ctl)?;
        let tables: Vec<ZonalTable> =
            pool.iter().map(|x| ZonalTable::new(x.eigenvalues())).collect();
        let traces: Vec<f64> = pool.iter().map(|x| x.trace()).collect();

        let n = pool.len();
        let mut values = vec![0.0; n * n];
        let mut diagnostics = SeriesDiagnostics::default();
        for i in 0..n {
            for j in i..n {
                let h = if kernel_underflows(b, &pool[i], &pool[j]) {
                    diagnostics.absorb(true, 0, 0.0);
                    0.0
                } else {
                    let f = ws.eval_double_ln(&tables[i], &tables[j])?;
                    diagnostics.absorb(f.converged, f.achieved_degree, f.last_layer_ratio);
                    (f.ln_abs - traces[i] - traces[j]).exp()
                };
                values[i * n + j] = h;
                values[j * n + i] = h;
            }
        }
        Ok(PooledGram {
            n,
            values,
            nu,
            diagnostics,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// The statistic for index multisets into the pooled Gram matrix
    /// (repetitions allowed, as bootstrap resampling produces).
    pub fn statistic_on(&self, xs: &[usize], ys: &[usize]) -> f64 {
        let n1 = xs.len() as f64;
        let n2 = ys.len() as f64;
        let xx = kahan_sum(
            xs.iter()
                .flat_map(|&i| xs.iter().map(move |&j| self.value(i, j))),
        );
        let yy = kahan_sum(
            ys.iter()
                .flat_map(|&k| ys.iter().map(move |&l| self.value(k, l))),
        );
        let xy = kahan_sum(
            xs.iter()
                .flat_map(|&i| ys.iter().map(move |&k| self.value(i, k))),
        );
        xx / (n1 * n1) + yy / (n2 * n2) - 2.0 * xy / (n1 * n2)
    }
}

fn settle_negative(i_value: f64) -> Result<f64> {
    if i_value < -NEGATIVE_I_TOL {
        return Err(Error::Inconsistency(format!(
            "statistic {i_value} is negative beyond rounding tolerance"
        )));
    }
    Ok(i_value.max(0.0))
}

/// The two-sample statistic `I_{n1,n2}` with its scaled form.
pub fn statistic(
    xs: &SampleSet,
    ys: &SampleSet,
    nu: f64,
    ctl: &SeriesControl,
) -> Result<StatisticValue> {
    if xs.dim() != ys.dim() {
        return Err(Error::DimensionMismatch(
            "the two samples have different matrix dimensions".into(),
        ));
    }
    let pool: Vec<SpectralMatrix> = xs
        .matrices()
        .iter()
        .chain(ys.matrices())
        .cloned()
        .collect();
    let gram = PooledGram::build(&pool, nu, ctl)?;
    let (n1, n2) = (xs.len(), ys.len());
    let x_idx: Vec<usize> = (0..n1).collect();
    let y_idx: Vec<usize> = (n1..n1 + n2).collect();
    let i_value = settle_negative(gram.statistic_on(&x_idx, &y_idx))?;
    Ok(StatisticValue {
        i_value,
        scaled: (n1 * n2) as f64 / (n1 + n2) as f64 * i_value,
        nu,
        n1,
        n2,
        series: gram.diagnostics,
    })
}

/// Only the scaled statistic `(n1 n2 / N) I`.
pub fn scaled_statistic(
    xs: &SampleSet,
    ys: &SampleSet,
    nu: f64,
    ctl: &SeriesControl,
) -> Result<f64> {
    Ok(statistic(xs, ys, nu, ctl)?.scaled)
}
