//! Regenerates the bundled synthetic fixtures. Usage:
//!
//! ```text
//! cargo run -p spdtest --example make_fixtures -- data/
//! ```
//!
//! Price fixtures are 59-day hourly two-asset series (59*24 + 1 = 1417
//! closes, so the returns cut into exactly 59 daily blocks, split 31 + 28
//! in the examples). The two-regime series multiplies return volatility by
//! 5 from block 31 onward; the single-regime series has no shift. Matrix
//! fixtures are 20 draws each from a Wishart and a uniform-vector
//! covariance population.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use spdtest::sampling::DistributionSpec;

const HOURS: usize = 59 * 24 + 1;
const REGIME_SPLIT_RETURN: usize = 31 * 24;
const EPOCH_START: i64 = 1_546_300_800; // 2019-01-01T00:00:00Z
const VOL_A: f64 = 0.004;
const VOL_B: f64 = 0.005;
const CORRELATION: f64 = 0.6;

fn price_series(path: &Path, seed: u64, vol_boost_after_split: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log_a = 3700.0f64.ln();
    let mut log_b = 120.0f64.ln();
    let mut csv = String::from("time,btc,eth\n");
    for t in 0..HOURS {
        let ts = EPOCH_START + 3600 * t as i64;
        let _ = writeln!(csv, "{ts},{:.6},{:.6}", log_a.exp(), log_b.exp());
        if t + 1 < HOURS {
            let boost = if t >= REGIME_SPLIT_RETURN {
                vol_boost_after_split
            } else {
                1.0
            };
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            log_a += VOL_A * boost * z1;
            log_b += VOL_B
                * boost
                * (CORRELATION * z1 + (1.0 - CORRELATION * CORRELATION).sqrt() * z2);
        }
    }
    std::fs::write(path, csv).expect("write price fixture");
}

fn matrix_file(path: &Path, spec: &str, n: usize, seed: u64) {
    let spec: DistributionSpec = spec.parse().expect("fixture spec");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::new();
    for i in 0..n {
        let x = spec.sample(&mut rng).expect("fixture draw");
        let m = x.dim();
        let _ = write!(csv, "{i},{m}");
        for r in 0..m {
            for c in r..m {
                let _ = write!(csv, ",{:.17e}", x.entries()[(r, c)]);
            }
        }
        csv.push('\n');
    }
    std::fs::write(path, csv).expect("write matrix fixture");
}

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "data".into());
    let dir = Path::new(&dir);
    std::fs::create_dir_all(dir).expect("fixture directory");
    price_series(&dir.join("synthetic_single_regime.csv"), 2019, 1.0);
    price_series(&dir.join("synthetic_two_regime.csv"), 2021, 5.0);
    matrix_file(&dir.join("wishart_m2_n20.csv"), "W(d=2,a=2.5,sigma=I)", 20, 41);
    matrix_file(&dir.join("cmu_m2_n20.csv"), "CMU(d=2,nvec=3)", 20, 42);
    println!("fixtures written to {}", dir.display());
}
