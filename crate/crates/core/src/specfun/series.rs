//! Hypergeometric `0F1` series of matrix argument and the Bessel functions
//! built on them.
//!
//! Both series are summed layer by layer over partitions of equal weight:
//!
//! ```text
//! 0F1(b; X)    = Σ_k Σ_{κ⊢k} C_κ(X) / ([b]_κ k!)
//! 0F1(b; X, Y) = Σ_k Σ_{κ⊢k} C_κ(X) C_κ(Y) / ([b]_κ k! C_κ(I_m))
//! ```
//!
//! Gamma-type factors are carried in log space; layers accumulate in linear
//! space against a single running scale so spectra far beyond unit size do
//! not overflow. A layer is "small" when it is below `rel_tol` relative to
//! the partial sum; evaluation stops after `consecutive_small_layers` of
//! them in a row, or flags non-convergence at `max_degree`.

use super::gamma::{gen_pochhammer_ln, ln_factorial};
use super::zonal::{coeff_layer, identity_layer, ZonalTable};
use crate::spectral::SpectralMatrix;
use crate::{Error, Result};

/// Truncation policy for the zonal series.
#[derive(Debug, Clone)]
pub struct SeriesControl {
    /// Highest partition weight summed before giving up.
    pub max_degree: usize,
    /// Relative size under which a layer counts as small.
    pub rel_tol: f64,
    /// Number of consecutive small layers required to stop.
    pub consecutive_small_layers: usize,
}

impl Default for SeriesControl {
    fn default() -> Self {
        SeriesControl {
            max_degree: 120,
            rel_tol: 1e-12,
            consecutive_small_layers: 2,
        }
    }
}

impl SeriesControl {
    pub fn validate(&self) -> Result<()> {
        if self.max_degree < 1 {
            return Err(Error::InvalidParameter("max_degree must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidParameter(
                "rel_tol must lie strictly between 0 and 1".into(),
            ));
        }
        Ok(())
    }
}

/// A truncated series value with convergence diagnostics.
#[derive(Debug, Clone)]
pub struct SeriesValue {
    pub value: f64,
    pub achieved_degree: usize,
    pub converged: bool,
    pub last_layer_ratio: f64,
}

/// Same diagnostics with the value kept as log-magnitude and sign, for
/// callers that combine the series with exponential prefactors.
#[derive(Debug, Clone)]
pub struct LnSeriesValue {
    pub ln_abs: f64,
    pub sign: f64,
    pub achieved_degree: usize,
    pub converged: bool,
    pub last_layer_ratio: f64,
}

impl LnSeriesValue {
    pub fn to_linear(&self) -> SeriesValue {
        SeriesValue {
            value: self.sign * self.ln_abs.exp(),
            achieved_degree: self.achieved_degree,
            converged: self.converged,
            last_layer_ratio: self.last_layer_ratio,
        }
    }
}

/// Signed accumulator for `value = mantissa * exp(scale)`.
struct ScaledSum {
    scale: f64,
    mantissa: f64,
}

impl ScaledSum {
    fn zero() -> Self {
        ScaledSum {
            scale: 0.0,
            mantissa: 0.0,
        }
    }

    fn add(&mut self, ln_abs: f64, sign: f64) {
        if sign == 0.0 || ln_abs == f64::NEG_INFINITY {
            return;
        }
        if ln_abs > self.scale + 40.0 {
            self.mantissa *= (self.scale - ln_abs).exp();
            self.scale = ln_abs;
        }
        self.mantissa += sign * (ln_abs - self.scale).exp();
        let mag = self.mantissa.abs();
        if mag != 0.0 && !(1e-100..=1e100).contains(&mag) {
            self.scale += mag.ln();
            self.mantissa = self.mantissa.signum();
        }
    }

    fn ln_abs(&self) -> f64 {
        if self.mantissa == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.scale + self.mantissa.abs().ln()
        }
    }

    fn sign(&self) -> f64 {
        if self.mantissa == 0.0 {
            0.0
        } else {
            self.mantissa.signum()
        }
    }
}

/// Per-layer denominator data for a fixed `(b, m)` pair. The linear
/// weights `1 / ([b]_κ (C_κ(I_m)))` drive the fast path (factorials live in
/// the layer prefactor); the log-offset weights `exp(min_d - d_κ)` with
/// `d_κ = ln [b]_κ (+ ln C_κ(I_m))` drive the scaled path for spectra whose
/// series leaves f64 range. Layers depend only on `(b, m)`, are frozen once
/// built, and are shared process-wide.
struct DenomLayer {
    weights_lin: Vec<f64>,
    weights: Vec<f64>,
    min_d: f64,
    ln_factorial: f64,
}

type DenomKey = (u64, usize, bool);

static DENOM_CACHE: std::sync::OnceLock<
    std::sync::Mutex<std::collections::HashMap<DenomKey, Vec<std::sync::Arc<DenomLayer>>>>,
> = std::sync::OnceLock::new();

/// Evaluation workspace for one `(b, m, control)` context. Owns the
/// identity-spectrum table and denominator layers; not shareable across
/// threads, build one per worker.
pub(crate) struct Workspace {
    b: f64,
    m: usize,
    ctl: SeriesControl,
    single: Vec<std::sync::Arc<DenomLayer>>,
    double: Vec<std::sync::Arc<DenomLayer>>,
}

impl Workspace {
    pub fn new(b: f64, m: usize, ctl: &SeriesControl) -> Result<Self> {
        ctl.validate()?;
        if m == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if b <= (m as f64 - 1.0) / 2.0 {
            return Err(Error::InvalidParameter(format!(
                "series parameter b = {b} must exceed (m-1)/2 = {}",
                (m as f64 - 1.0) / 2.0
            )));
        }
        Ok(Workspace {
            b,
            m,
            ctl: ctl.clone(),
            single: Vec::new(),
            double: Vec::new(),
        })
    }

    /// Extend the local denominator view to layer `k`, pulling shared
    /// layers from the process-wide cache (building them there on first
    /// touch).
    fn denom_layer(&mut self, k: usize, with_identity: bool) -> Result<()> {
        let local = if with_identity {
            &mut self.double
        } else {
            &mut self.single
        };
        if local.len() > k {
            return Ok(());
        }
        let cache = DENOM_CACHE.get_or_init(Default::default);
        let mut map = cache.lock().expect("series denominator cache poisoned");
        let shared = map
            .entry((self.b.to_bits(), self.m, with_identity))
            .or_default();
        while shared.len() <= k {
            let next = shared.len();
            let coeff = coeff_layer(next, self.m);
            let ones_layer = if with_identity {
                Some(identity_layer(self.m, next))
            } else {
                None
            };
            let mut d: Vec<f64> = Vec::with_capacity(coeff.len());
            let mut d_lin: Vec<f64> = Vec::with_capacity(coeff.len());
            for (i, kappa) in coeff.parts.iter().enumerate() {
                let mut v = gen_pochhammer_ln(self.b, kappa)?;
                let mut lin = super::gamma::gen_pochhammer(self.b, kappa);
                if let Some(ones) = &ones_layer {
                    v += ones[i].ln();
                    lin *= ones[i];
                }
                d.push(v);
                // An overflowing denominator means a term of size at most
                // ~1e-230 against a series that is at least 1; drop it.
                d_lin.push(if lin.is_finite() { 1.0 / lin } else { 0.0 });
            }
            let min_d = d.iter().cloned().fold(f64::INFINITY, f64::min);
            shared.push(std::sync::Arc::new(DenomLayer {
                weights_lin: d_lin,
                weights: d.iter().map(|&x| (min_d - x).exp()).collect(),
                min_d,
                ln_factorial: ln_factorial(next),
            }));
        }
        local.extend_from_slice(&shared[local.len()..=k]);
        Ok(())
    }

    /// One-matrix-argument series at the spectrum behind `table`.
    pub fn eval_single(&mut self, table: &ZonalTable) -> Result<SeriesValue> {
        self.check_dim(table.dim())?;
        match self.sum_linear(table, None)? {
            Some(v) => Ok(v),
            None => Ok(self.sum_scaled(table, None)?.to_linear()),
        }
    }

    /// Two-matrix-argument series; `x` and `y` may alias.
    pub fn eval_double(&mut self, x: &ZonalTable, y: &ZonalTable) -> Result<SeriesValue> {
        self.check_double(x, y)?;
        match self.sum_linear(x, Some(y))? {
            Some(v) => Ok(v),
            None => Ok(self.sum_scaled(x, Some(y))?.to_linear()),
        }
    }

    /// As [`eval_double`](Self::eval_double) but keeping the value in
    /// log-magnitude/sign form, for callers combining it with exponential
    /// prefactors that would overflow linearly.
    pub fn eval_double_ln(&mut self, x: &ZonalTable, y: &ZonalTable) -> Result<LnSeriesValue> {
        self.check_double(x, y)?;
        match self.sum_linear(x, Some(y))? {
            Some(v) => Ok(LnSeriesValue {
                ln_abs: if v.value == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    v.value.abs().ln()
                },
                sign: if v.value == 0.0 { 0.0 } else { v.value.signum() },
                achieved_degree: v.achieved_degree,
                converged: v.converged,
                last_layer_ratio: v.last_layer_ratio,
            }),
            None => self.sum_scaled(x, Some(y)),
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.m {
            return Err(Error::DimensionMismatch(format!(
                "workspace dimension {} vs spectrum dimension {dim}",
                self.m
            )));
        }
        Ok(())
    }

    fn check_double(&self, x: &ZonalTable, y: &ZonalTable) -> Result<()> {
        self.check_dim(x.dim())?;
        if x.dim() != y.dim() {
            return Err(Error::DimensionMismatch(format!(
                "spectra of dimension {} and {}",
                x.dim(),
                y.dim()
            )));
        }
        Ok(())
    }

    /// Fast path: plain f64 accumulation with compensated summation.
    /// Returns None when a prefactor or partial sum leaves f64 range, in
    /// which case the scaled path takes over.
    fn sum_linear(
        &mut self,
        x: &ZonalTable,
        y: Option<&ZonalTable>,
    ) -> Result<Option<SeriesValue>> {
        let scale = match y {
            Some(y) => x.scale() * y.scale(),
            None => x.scale(),
        };
        let with_identity = y.is_some();
        let mut pref = 1.0f64; // scale^k / k!
        let mut sum = 0.0f64;
        let mut carry = 0.0f64;
        let mut conv = Convergence::new(&self.ctl);
        for k in 0..=self.ctl.max_degree {
            self.denom_layer(k, with_identity)?;
            if k > 0 {
                pref *= scale / k as f64;
            }
            let weights = if with_identity {
                &self.double[k].weights_lin
            } else {
                &self.single[k].weights_lin
            };
            let cx = x.layer(k);
            let layer: f64 = match y {
                Some(y) => {
                    let cy = y.layer(k);
                    cx.iter()
                        .zip(cy.iter())
                        .zip(weights)
                        .map(|((a, b), w)| a * b * w)
                        .sum()
                }
                None => cx.iter().zip(weights).map(|(a, w)| a * w).sum(),
            };
            let contribution = layer * pref;
            if !contribution.is_finite() || !pref.is_finite() || sum.abs() > 1e290 {
                return Ok(None);
            }
            let adjusted = contribution - carry;
            let t = sum + adjusted;
            carry = (t - sum) - adjusted;
            sum = t;
            if conv.layer_done(k, contribution.abs(), sum.abs()) {
                break;
            }
        }
        Ok(Some(SeriesValue {
            value: sum,
            achieved_degree: conv.degree,
            converged: conv.converged,
            last_layer_ratio: conv.last_ratio,
        }))
    }

    /// Slow path: layers combined as log-magnitude/sign against a running
    /// scale, immune to overflow.
    fn sum_scaled(&mut self, x: &ZonalTable, y: Option<&ZonalTable>) -> Result<LnSeriesValue> {
        let ln_scale = match y {
            Some(y) => x.ln_scale() + y.ln_scale(),
            None => x.ln_scale(),
        };
        let with_identity = y.is_some();
        let mut acc = ScaledSum::zero();
        let mut conv = Convergence::new(&self.ctl);
        for k in 0..=self.ctl.max_degree {
            self.denom_layer(k, with_identity)?;
            let denom = if with_identity {
                &self.double[k]
            } else {
                &self.single[k]
            };
            let cx = x.layer(k);
            let layer: f64 = match y {
                Some(y) => {
                    let cy = y.layer(k);
                    cx.iter()
                        .zip(cy.iter())
                        .zip(&denom.weights)
                        .map(|((a, b), w)| a * b * w)
                        .sum()
                }
                None => cx.iter().zip(&denom.weights).map(|(a, w)| a * w).sum(),
            };
            let (ln_abs, sign) = if layer == 0.0 {
                (f64::NEG_INFINITY, 0.0)
            } else {
                (
                    layer.abs().ln() + k as f64 * ln_scale
                        - denom.min_d
                        - denom.ln_factorial,
                    layer.signum(),
                )
            };
            acc.add(ln_abs, sign);
            if conv.layer_done_ln(k, ln_abs, acc.ln_abs()) {
                break;
            }
        }
        Ok(LnSeriesValue {
            ln_abs: acc.ln_abs(),
            sign: acc.sign(),
            achieved_degree: conv.degree,
            converged: conv.converged,
            last_layer_ratio: conv.last_ratio,
        })
    }
}

/// Shared stopping rule: `consecutive_small_layers` layers in a row below
/// `rel_tol` of the partial sum.
struct Convergence {
    rel_tol: f64,
    needed: usize,
    small_run: usize,
    pub degree: usize,
    pub converged: bool,
    pub last_ratio: f64,
}

impl Convergence {
    fn new(ctl: &SeriesControl) -> Self {
        Convergence {
            rel_tol: ctl.rel_tol,
            needed: ctl.consecutive_small_layers,
            small_run: 0,
            degree: 0,
            converged: false,
            last_ratio: f64::INFINITY,
        }
    }

    fn layer_done(&mut self, k: usize, layer_abs: f64, sum_abs: f64) -> bool {
        self.degree = k;
        if k == 0 {
            return false;
        }
        self.last_ratio = if sum_abs == 0.0 {
            if layer_abs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            layer_abs / sum_abs
        };
        self.update()
    }

    fn layer_done_ln(&mut self, k: usize, layer_ln: f64, sum_ln: f64) -> bool {
        self.degree = k;
        if k == 0 {
            return false;
        }
        self.last_ratio = (layer_ln - sum_ln).exp();
        self.update()
    }

    fn update(&mut self) -> bool {
        if self.last_ratio <= self.rel_tol {
            self.small_run += 1;
            if self.small_run >= self.needed {
                self.converged = true;
                return true;
            }
        } else {
            self.small_run = 0;
        }
        false
    }
}

/// `0F1(b; X)` at a spectrum of any sign (the series is entire).
/// Requires `b > (m-1)/2` so no Pochhammer denominator vanishes.
pub fn hyp0f1_single(b: f64, spectrum: &[f64], ctl: &SeriesControl) -> Result<SeriesValue> {
    if spectrum.is_empty() {
        return Ok(constant_one());
    }
    let mut ws = Workspace::new(b, spectrum.len(), ctl)?;
    let table = ZonalTable::new(spectrum);
    ws.eval_single(&table)
}

/// `0F1(b; X, Y)` for spectra of a common dimension.
pub fn hyp0f1_double(
    b: f64,
    x: &[f64],
    y: &[f64],
    ctl: &SeriesControl,
) -> Result<SeriesValue> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "spectra of dimension {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Ok(constant_one());
    }
    let mut ws = Workspace::new(b, x.len(), ctl)?;
    let tx = ZonalTable::new(x);
    let ty = ZonalTable::new(y);
    ws.eval_double(&tx, &ty)
}

fn constant_one() -> SeriesValue {
    SeriesValue {
        value: 1.0,
        achieved_degree: 0,
        converged: true,
        last_layer_ratio: 0.0,
    }
}

/// Order parameter check shared by both Bessel functions.
fn check_order(nu: f64, m: usize) -> Result<f64> {
    if nu <= (m as f64 - 2.0) / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "order nu = {nu} must exceed (m-2)/2 = {} in dimension {m}",
            (m as f64 - 2.0) / 2.0
        )));
    }
    Ok(nu + (m as f64 + 1.0) / 2.0)
}

/// Bessel function of the first kind of matrix argument, normalized so
/// `J_ν(0) = 1`; computed as `0F1(ν + (m+1)/2; -T)`.
pub fn bessel_j(nu: f64, t: &SpectralMatrix, ctl: &SeriesControl) -> Result<SeriesValue> {
    let b = check_order(nu, t.dim())?;
    let negated: Vec<f64> = t.eigenvalues().iter().map(|x| -x).collect();
    hyp0f1_single(b, &negated, ctl)
}

/// Two-matrix-argument Bessel function `J_ν(S, T) = 0F1(b; -S, T)` with
/// `b = ν + (m+1)/2`; bounded by 1 in modulus when both spectra are
/// positive definite.
pub fn bessel_j2(nu: f64, s: &[f64], t: &[f64], ctl: &SeriesControl) -> Result<SeriesValue> {
    if s.len() != t.len() {
        return Err(Error::DimensionMismatch(format!(
            "spectra of dimension {} and {}",
            s.len(),
            t.len()
        )));
    }
    let b = check_order(nu, s.len())?;
    let negated: Vec<f64> = s.iter().map(|x| -x).collect();
    hyp0f1_double(b, &negated, t, ctl)
}
