//! Bootstrap machinery: pooled-bootstrap p-values for observed data and
//! warp-speed power estimation for sampled scenarios.
//!
//! Resampling is i.i.d. with replacement from the pooled multiset of the
//! two samples. The warp-speed scheme draws exactly one bootstrap pair per
//! Monte-Carlo replication and pools all bootstrap statistics into a single
//! critical value. Replications run as independent tasks with their own
//! RNG stream derived from `(seed, replication index)`, so results are
//! identical regardless of worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::kernel::{statistic, PooledGram, SampleSet, SeriesDiagnostics, StatisticValue};
use crate::sampling::DistributionSpec;
use crate::specfun::SeriesControl;
use crate::spectral::SpectralMatrix;
use crate::{Error, Result};

/// Seed type for every randomized routine; a fixed seed reproduces results
/// bit for bit, independent of thread count.
pub type RngSeed = u64;

/// Generator for one replication: stream `index + 1` of the seeded ChaCha
/// generator (stream 0 is reserved for non-replicated draws).
pub(crate) fn replication_rng(seed: RngSeed, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "pooled_bootstrap")]
    PooledBootstrap,
}

/// Result of testing one observed pair of samples.
#[derive(Debug, Clone, Serialize)]
pub struct TwoSampleResult {
    pub statistic: StatisticValue,
    pub p_value: f64,
    pub replications: usize,
    pub seed: RngSeed,
    pub method: Method,
}

/// Result of one warp-speed power estimation run.
#[derive(Debug, Clone, Serialize)]
pub struct WarpSpeedReport {
    pub rejection_rate: f64,
    pub alpha: f64,
    pub replications: usize,
    pub critical_value: f64,
    pub seed: RngSeed,
    pub diagnostics: SeriesDiagnostics,
}

/// Lower empirical quantile: the order statistic at rank `ceil(q n)`
/// (1-based) of the sorted values; `q = 0` gives the minimum.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("quantile of no values".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!(
            "quantile level {q} outside [0, 1]"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    let rank = ((q * sorted.len() as f64).ceil() as usize).max(1);
    Ok(sorted[rank - 1])
}

fn resample_indices(rng: &mut ChaCha8Rng, pool_size: usize, count: usize) -> Vec<usize> {
    (0..count).map(|_| rng.gen_range(0..pool_size)).collect()
}

/// Add-one Monte-Carlo p-value: `(1 + #{star >= observed}) / (len + 1)`.
/// Never zero, and monotone non-increasing in the observed statistic for a
/// fixed set of bootstrap statistics.
pub fn add_one_pvalue(observed: f64, stars: &[f64]) -> f64 {
    let exceed = stars.iter().filter(|&&s| s >= observed).count();
    (1 + exceed) as f64 / (stars.len() + 1) as f64
}

/// Pooled-bootstrap p-value for a fixed observed pair of samples.
///
/// The kernel Gram matrix over the pooled sample is computed once; the
/// observed statistic and all `b_reps` bootstrap statistics are assembled
/// from it by index lookup. The p-value uses the add-one rule
/// `(1 + #{I* >= I_obs}) / (B + 1)` so it is never zero.
pub fn pooled_bootstrap_pvalue(
    xs: &SampleSet,
    ys: &SampleSet,
    nu: f64,
    b_reps: usize,
    seed: RngSeed,
    ctl: &SeriesControl,
) -> Result<TwoSampleResult> {
    if b_reps < 100 {
        return Err(Error::InvalidParameter(
            "bootstrap replications must be >= 100".into(),
        ));
    }
    if xs.dim() != ys.dim() {
        return Err(Error::DimensionMismatch(
            "the two samples have different matrix dimensions".into(),
        ));
    }
    let (n1, n2) = (xs.len(), ys.len());
    let pool: Vec<SpectralMatrix> = xs
        .matrices()
        .iter()
        .chain(ys.matrices())
        .cloned()
        .collect();
    let gram = PooledGram::build(&pool, nu, ctl)?;

    let x_idx: Vec<usize> = (0..n1).collect();
    let y_idx: Vec<usize> = (n1..n1 + n2).collect();
    let observed = gram.statistic_on(&x_idx, &y_idx).max(0.0);

    let stars: Vec<f64> = (0..b_reps as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = replication_rng(seed, b);
            let bx = resample_indices(&mut rng, n1 + n2, n1);
            let by = resample_indices(&mut rng, n1 + n2, n2);
            gram.statistic_on(&bx, &by).max(0.0)
        })
        .collect();
    let p_value = add_one_pvalue(observed, &stars);

    Ok(TwoSampleResult {
        statistic: StatisticValue {
            i_value: observed,
            scaled: (n1 * n2) as f64 / (n1 + n2) as f64 * observed,
            nu,
            n1,
            n2,
            series: gram.diagnostics,
        },
        p_value,
        replications: b_reps,
        seed,
        method: Method::PooledBootstrap,
    })
}

/// Warp-speed bootstrap power estimation.
///
/// Each replication draws fresh samples from the two specifications,
/// computes the statistic, draws one pooled bootstrap pair of the same
/// sizes and computes the bootstrap statistic. The critical value is the
/// empirical `(1 - alpha)` quantile of the bootstrap statistics and the
/// rejection rate counts strict exceedances. `alpha = 0` never rejects.
#[allow(clippy::too_many_arguments)]
pub fn warp_speed_power(
    spec_x: &DistributionSpec,
    spec_y: &DistributionSpec,
    n1: usize,
    n2: usize,
    nu: f64,
    alpha: f64,
    replications: usize,
    seed: RngSeed,
    ctl: &SeriesControl,
) -> Result<WarpSpeedReport> {
    if replications < 100 {
        return Err(Error::InvalidParameter(
            "warp-speed replications must be >= 100".into(),
        ));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "significance level {alpha} outside [0, 1)"
        )));
    }
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidParameter("sample sizes must be >= 1".into()));
    }
    spec_x.validate()?;
    spec_y.validate()?;
    if spec_x.dim() != spec_y.dim() {
        return Err(Error::DimensionMismatch(
            "scenario distributions have different dimensions".into(),
        ));
    }

    let per_rep: Vec<(f64, f64, SeriesDiagnostics)> = (0..replications as u64)
        .into_par_iter()
        .map(|rep| -> Result<(f64, f64, SeriesDiagnostics)> {
            let mut rng = replication_rng(seed, rep);
            let mut pool = Vec::with_capacity(n1 + n2);
            for _ in 0..n1 {
                pool.push(spec_x.sample(&mut rng)?);
            }
            for _ in 0..n2 {
                pool.push(spec_y.sample(&mut rng)?);
            }
            // The pooled Gram matrix serves both the data statistic and the
            // bootstrap statistic of this replication.
            let gram = PooledGram::build(&pool, nu, ctl)?;
            let x_idx: Vec<usize> = (0..n1).collect();
            let y_idx: Vec<usize> = (n1..n1 + n2).collect();
            let observed = gram.statistic_on(&x_idx, &y_idx).max(0.0);
            let bx = resample_indices(&mut rng, n1 + n2, n1);
            let by = resample_indices(&mut rng, n1 + n2, n2);
            let star = gram.statistic_on(&bx, &by).max(0.0);
            Ok((observed, star, gram.diagnostics))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut diagnostics = SeriesDiagnostics::default();
    for (_, _, d) in &per_rep {
        diagnostics.merge(d);
    }
    let stars: Vec<f64> = per_rep.iter().map(|r| r.1).collect();
    let critical_value = if alpha == 0.0 {
        f64::INFINITY
    } else {
        quantile(&stars, 1.0 - alpha)?
    };
    let rejections = per_rep.iter().filter(|r| r.0 > critical_value).count();

    Ok(WarpSpeedReport {
        rejection_rate: rejections as f64 / replications as f64,
        alpha,
        replications,
        critical_value,
        seed,
        diagnostics,
    })
}

/// The observed statistic without any resampling, for callers that only
/// need the value.
pub fn observed_statistic(
    xs: &SampleSet,
    ys: &SampleSet,
    nu: f64,
    ctl: &SeriesControl,
) -> Result<StatisticValue> {
    statistic(xs, ys, nu, ctl)
}
