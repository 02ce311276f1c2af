//! Zonal polynomial evaluation.
//!
//! A zonal polynomial is expanded in monomial symmetric functions,
//! `C_κ = Σ_{λ ⊴ κ} c_{κλ} m_λ`, with coefficients obtained from the
//! classical recurrence over raising moves and the leading coefficient from
//! the α = 2 Jack hook products. Coefficients depend only on the weight and
//! the number of variables, so layers (all partitions of one weight) are
//! computed once per process and shared; the series consume whole layers,
//! so per-spectrum values are cached layer by layer as well.
//!
//! The normalization satisfies `Σ_{κ ⊢ k} C_κ(X) = (tr X)^k`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::{Arc, Mutex, OnceLock};

use statrs::function::gamma::ln_gamma;

use super::partition::{partitions, Partition};

/// Coefficients of every zonal polynomial of one weight in at most
/// `max_length` variables. `rows[i][j]` is the coefficient of the monomial
/// symmetric function of `parts[j]` inside `C_{parts[i]}`; it is zero unless
/// `parts[j]` is dominated by `parts[i]`.
pub(crate) struct CoeffLayer {
    pub parts: Vec<Partition>,
    /// Sparse rows over the dominance ideal of each partition: pairs of
    /// (monomial index, coefficient).
    rows: Vec<Vec<(u32, f64)>>,
}

impl CoeffLayer {
    fn build(k: usize, max_length: usize) -> Self {
        let parts = partitions(k, max_length);
        let n = parts.len();
        let index: HashMap<&[usize], usize> = parts
            .iter()
            .enumerate()
            .map(|(i, p)| (p.parts(), i))
            .collect();
        let rho: Vec<f64> = parts.iter().map(rho_kappa).collect();

        // Raising moves of each partition, shared across every kappa row:
        // (target index, (λ_i + t) - (λ_j - t)). Reverse-lexicographic
        // layout puts every target at a smaller index than its source.
        let mut scratch: Vec<usize> = Vec::new();
        let moves: Vec<Vec<(usize, f64)>> = parts
            .iter()
            .map(|p| {
                let lam = p.parts();
                let mut out = Vec::new();
                for j in 1..lam.len() {
                    for i in 0..j {
                        for t in 1..=lam[j] {
                            scratch.clear();
                            scratch.extend_from_slice(lam);
                            scratch[i] += t;
                            scratch[j] -= t;
                            scratch.retain(|&q| q > 0);
                            scratch.sort_unstable_by(|x, y| y.cmp(x));
                            if let Some(&mu) = index.get(scratch.as_slice()) {
                                out.push((
                                    mu,
                                    (lam[i] + t) as f64 - (lam[j] - t) as f64,
                                ));
                            }
                        }
                    }
                }
                out
            })
            .collect();

        let mut dense = vec![0.0f64; n];
        let mut rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
        for a in 0..n {
            for v in dense.iter_mut() {
                *v = 0.0;
            }
            dense[a] = leading_coefficient(&parts[a]);
            let mut row = vec![(a as u32, dense[a])];
            for b in (a + 1)..n {
                if !parts[b].dominated_by(&parts[a]) {
                    continue;
                }
                // dense[mu] is zero for partitions outside the dominance
                // ideal, which drops those moves.
                let sum: f64 = moves[b]
                    .iter()
                    .map(|&(mu, coeff)| coeff * dense[mu])
                    .sum();
                let c = sum / (rho[a] - rho[b]);
                dense[b] = c;
                row.push((b as u32, c));
            }
            rows.push(row);
        }
        CoeffLayer { parts, rows }
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    fn position(&self, kappa: &Partition) -> Option<usize> {
        self.parts.iter().position(|p| p == kappa)
    }

    /// C values for every partition of the layer at the given spectrum.
    fn evaluate_all(&self, eigenvalues: &[f64]) -> Vec<f64> {
        let monos = monomial_values(&self.parts, eigenvalues);
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, c)| c * monos[j as usize]).sum())
            .collect()
    }
}

/// `ρ_κ = Σ_i κ_i (κ_i - i)`, strictly monotone along dominance, which keeps
/// the recurrence denominators nonzero.
fn rho_kappa(kappa: &Partition) -> f64 {
    kappa
        .parts()
        .iter()
        .enumerate()
        .map(|(i, &p)| (p * p) as f64 - (p * (i + 1)) as f64)
        .sum()
}

/// Coefficient of the leading monomial `m_κ` in `C_κ`:
/// `2^k k! / ∏_{s∈κ} (2 (arm(s)+1) + leg(s))`, evaluated in log space.
fn leading_coefficient(kappa: &Partition) -> f64 {
    let k = kappa.weight();
    if k == 0 {
        return 1.0;
    }
    // Single-row hooks are 2(κ_1 - j + 1), so the product telescopes against
    // 2^k k! exactly; returning 1 here keeps the one-dimensional series free
    // of per-degree rounding noise.
    if kappa.len() == 1 {
        return 1.0;
    }
    let mut ln = k as f64 * std::f64::consts::LN_2 + ln_gamma(k as f64 + 1.0);
    for (i, &part) in kappa.parts().iter().enumerate() {
        for j in 0..part {
            let arm = part - j - 1;
            let leg = kappa.conjugate_part(j) - i - 1;
            ln -= ((2 * (arm + 1) + leg) as f64).ln();
        }
    }
    ln.exp()
}

/// Monomial symmetric functions `m_λ` of all layer partitions at one point,
/// summed over distinct permutations of the exponent vector. Powers are
/// shared across the layer, and the distinct-permutation patterns for up to
/// three variables are unrolled (the series loops live there).
fn monomial_values(parts: &[Partition], eigenvalues: &[f64]) -> Vec<f64> {
    let m = eigenvalues.len();
    let weight = parts.first().map_or(0, |p| p.weight());
    // pows[i * (weight + 1) + e] = eigenvalue_i ^ e
    let mut pows = vec![1.0f64; m * (weight + 1)];
    for (i, &x) in eigenvalues.iter().enumerate() {
        for e in 1..=weight {
            pows[i * (weight + 1) + e] = pows[i * (weight + 1) + e - 1] * x;
        }
    }
    let pw = |i: usize, e: usize| pows[i * (weight + 1) + e];

    parts
        .iter()
        .map(|p| {
            if p.len() > m {
                return 0.0;
            }
            match (m, p.parts()) {
                (_, []) => 1.0,
                (1, &[a]) => pw(0, a),
                (2, &[a]) => pw(0, a) + pw(1, a),
                (2, &[a, b]) if a == b => pw(0, a) * pw(1, a),
                (2, &[a, b]) => pw(0, a) * pw(1, b) + pw(0, b) * pw(1, a),
                (3, &[a]) => pw(0, a) + pw(1, a) + pw(2, a),
                (3, &[a, b]) if a == b => {
                    pw(0, a) * pw(1, a) + pw(0, a) * pw(2, a) + pw(1, a) * pw(2, a)
                }
                (3, &[a, b]) => {
                    pw(0, a) * pw(1, b) + pw(0, b) * pw(1, a)
                        + pw(0, a) * pw(2, b)
                        + pw(0, b) * pw(2, a)
                        + pw(1, a) * pw(2, b)
                        + pw(1, b) * pw(2, a)
                }
                (3, &[a, _, c]) if a == c => pw(0, a) * pw(1, a) * pw(2, a),
                (3, &[a, b, c]) if a == b => {
                    // pattern (a, a, c)
                    pw(0, a) * pw(1, a) * pw(2, c)
                        + pw(0, a) * pw(2, a) * pw(1, c)
                        + pw(1, a) * pw(2, a) * pw(0, c)
                }
                (3, &[a, b, c]) if b == c => {
                    // pattern (a, b, b)
                    pw(1, b) * pw(2, b) * pw(0, a)
                        + pw(0, b) * pw(2, b) * pw(1, a)
                        + pw(0, b) * pw(1, b) * pw(2, a)
                }
                (3, &[a, b, c]) => {
                    pw(0, a) * (pw(1, b) * pw(2, c) + pw(2, b) * pw(1, c))
                        + pw(1, a) * (pw(0, b) * pw(2, c) + pw(2, b) * pw(0, c))
                        + pw(2, a) * (pw(0, b) * pw(1, c) + pw(1, b) * pw(0, c))
                }
                _ => monomial_general(p, eigenvalues),
            }
        })
        .collect()
}

/// Fallback for more than three variables: iterate distinct permutations
/// of the exponent vector.
fn monomial_general(p: &Partition, eigenvalues: &[f64]) -> f64 {
    let m = eigenvalues.len();
    let mut exps = vec![0usize; m];
    for (i, e) in exps.iter_mut().enumerate() {
        *e = p.part(i);
    }
    exps.sort_unstable();
    let mut total = 0.0;
    loop {
        let mut prod = 1.0;
        for (x, &e) in eigenvalues.iter().zip(exps.iter()) {
            if e > 0 {
                prod *= x.powi(e as i32);
            }
        }
        total += prod;
        if !next_permutation(&mut exps) {
            break;
        }
    }
    total
}

/// Standard in-place next lexicographic permutation; returns false once the
/// sequence is descending. Visits each distinct arrangement of a multiset
/// exactly once when started from the ascending order.
fn next_permutation(seq: &mut [usize]) -> bool {
    if seq.len() < 2 {
        return false;
    }
    let mut i = seq.len() - 1;
    while i > 0 && seq[i - 1] >= seq[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = seq.len() - 1;
    while seq[j] <= seq[i - 1] {
        j -= 1;
    }
    seq.swap(i - 1, j);
    seq[i..].reverse();
    true
}

static COEFF_CACHE: OnceLock<Mutex<HashMap<usize, Vec<Arc<CoeffLayer>>>>> = OnceLock::new();

/// Shared coefficient layer for weight `k` in at most `max_length` variables.
/// Layers are immutable once built and shared across threads.
pub(crate) fn coeff_layer(k: usize, max_length: usize) -> Arc<CoeffLayer> {
    let cache = COEFF_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("zonal coefficient cache poisoned");
    let layers = map.entry(max_length).or_default();
    while layers.len() <= k {
        let next = layers.len();
        layers.push(Arc::new(CoeffLayer::build(next, max_length)));
    }
    layers[k].clone()
}

static ONES_CACHE: OnceLock<Mutex<HashMap<usize, Vec<Arc<[f64]>>>>> = OnceLock::new();

/// `C_κ(I_m)` for every partition of weight `k`, in layer order. These are
/// universal constants of the two-matrix series, cached process-wide.
pub(crate) fn identity_layer(m: usize, k: usize) -> Arc<[f64]> {
    let cache = ONES_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("identity zonal cache poisoned");
    let layers = map.entry(m).or_default();
    while layers.len() <= k {
        let next = layers.len();
        let ones = vec![1.0; m];
        layers.push(coeff_layer(next, m).evaluate_all(&ones).into());
    }
    layers[k].clone()
}

/// Zonal polynomial `C_κ` at a spectrum, in the normalization that sums to
/// `(tr X)^k` over all partitions of `k`. Partitions longer than the
/// spectrum give exactly zero.
pub fn zonal(kappa: &Partition, eigenvalues: &[f64]) -> f64 {
    if kappa.is_empty() {
        return 1.0;
    }
    if kappa.len() > eigenvalues.len() {
        return 0.0;
    }
    let layer = coeff_layer(kappa.weight(), eigenvalues.len());
    let pos = layer
        .position(kappa)
        .expect("partition within length bound is always in its layer");
    let monos = monomial_values(&layer.parts, eigenvalues);
    layer.rows[pos]
        .iter()
        .map(|&(j, c)| c * monos[j as usize])
        .sum()
}

/// Per-spectrum cache of zonal values, extended layer by layer as a series
/// evaluation deepens. The spectrum is stored rescaled so monomial values
/// stay inside f64 range; `C_κ(X) = scale^k C_κ(X / scale)`.
///
/// The cache is deliberately not thread-safe: each evaluation workspace owns
/// its tables (shared tables would need freezing first).
pub(crate) struct ZonalTable {
    scaled: Vec<f64>,
    scale: f64,
    layers: RefCell<Vec<Rc<[f64]>>>,
}

impl ZonalTable {
    pub fn new(eigenvalues: &[f64]) -> Self {
        let scale = eigenvalues
            .iter()
            .fold(0.0f64, |acc, &x| acc.max(x.abs()))
            .max(1e-300);
        ZonalTable {
            scaled: eigenvalues.iter().map(|&x| x / scale).collect(),
            scale,
            layers: RefCell::new(Vec::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.scaled.len()
    }

    /// Layer values refer to the spectrum divided by this scale;
    /// `C_κ(X) = scale^k C_κ(X / scale)`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn ln_scale(&self) -> f64 {
        self.scale.ln()
    }

    /// Zonal values of the rescaled spectrum for every partition of weight
    /// `k` (layer order matches `coeff_layer(k, dim)`).
    pub fn layer(&self, k: usize) -> Rc<[f64]> {
        let mut layers = self.layers.borrow_mut();
        while layers.len() <= k {
            let next = layers.len();
            let coeff = coeff_layer(next, self.dim().max(1));
            layers.push(coeff.evaluate_all(&self.scaled).into());
        }
        layers[k].clone()
    }
}
