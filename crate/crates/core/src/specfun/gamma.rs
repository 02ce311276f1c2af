//! Multivariate gamma function and generalized Pochhammer symbols.

use statrs::function::gamma::ln_gamma;

use super::partition::Partition;
use crate::{Error, Result};

const LN_PI: f64 = 1.1447298858494002;

/// Natural log of the multivariate gamma function
/// `Γ_m(a) = π^{m(m-1)/4} ∏_{i=1..m} Γ(a - (i-1)/2)`.
///
/// Errors when any scalar gamma factor sits at a pole or has a non-positive
/// argument (the log would not be real there).
pub fn mv_gamma_ln(m: usize, a: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("dimension m must be >= 1".into()));
    }
    let mut sum = LN_PI * (m * (m - 1)) as f64 / 4.0;
    for i in 0..m {
        let arg = a - i as f64 / 2.0;
        if arg <= 0.0 {
            return Err(Error::GammaPole(format!(
                "Gamma({arg}) in Gamma_{m}({a}) is at a pole or negative"
            )));
        }
        sum += ln_gamma(arg);
    }
    Ok(sum)
}

/// Generalized Pochhammer symbol `[a]_κ = ∏_i (a - (i-1)/2)_{κ_i}` evaluated
/// directly; zeros are legitimate values. The empty partition gives 1.
pub fn gen_pochhammer(a: f64, kappa: &Partition) -> f64 {
    let mut prod = 1.0;
    for (i, &part) in kappa.parts().iter().enumerate() {
        let base = a - i as f64 / 2.0;
        for j in 0..part {
            prod *= base + j as f64;
        }
    }
    prod
}

/// Log of `[a]_κ`, valid when every factor is positive, which the series
/// precondition `a > (m-1)/2` guarantees for partitions of length <= m.
pub fn gen_pochhammer_ln(a: f64, kappa: &Partition) -> Result<f64> {
    let mut sum = 0.0;
    for (i, &part) in kappa.parts().iter().enumerate() {
        let base = a - i as f64 / 2.0;
        if base <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "pochhammer base {base} <= 0 for [{a}]_{kappa}; \
                 series parameter below (m-1)/2"
            )));
        }
        sum += ln_gamma(base + part as f64) - ln_gamma(base);
    }
    Ok(sum)
}

/// Log-factorial; exact factorial values below the f64 integer limit, the
/// gamma function beyond.
pub(crate) fn ln_factorial(k: usize) -> f64 {
    if k < 2 {
        return 0.0;
    }
    if k <= 22 {
        let mut f = 1.0f64;
        for i in 2..=k {
            f *= i as f64;
        }
        return f.ln();
    }
    ln_gamma(k as f64 + 1.0)
}
