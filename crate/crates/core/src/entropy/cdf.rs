//! 16-bit cumulative frequency tables for the range coder.

use std::sync::OnceLock;

use super::gaussian_bin;
use crate::error::{Error, Result};

pub const PRECISION_BITS: u32 = 16;
pub const TOTAL: u32 = 1 << PRECISION_BITS;
/// Per-side tail mass left outside a table's alphabet; the two sides sum
/// to less than `2^-17`.
pub const TAIL_MASS: f64 = 1.0 / (1u64 << 18) as f64;

pub const SCALE_BINS: usize = 64;
pub const SCALE_MIN: f64 = 1e-6;
pub const SCALE_MAX: f64 = 64.0;

/// Frequencies for the contiguous alphabet `min_sym ..= min_sym + n - 1`.
/// `cum` has `n + 1` strictly increasing entries from 0 to `TOTAL`.
/// Symbols outside the alphabet are coded as the nearest end symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CdfTable {
    pub min_sym: i32,
    pub cum: Vec<u32>,
}

impl CdfTable {
    /// Quantizes a probability vector to frequencies that are each at least
    /// one and sum to `TOTAL` exactly.
    pub fn from_pmf(min_sym: i32, pmf: &[f64]) -> Result<Self> {
        let n = pmf.len();
        if n == 0 || n > TOTAL as usize {
            return Err(Error::Invalid(format!("alphabet of {n} symbols")));
        }
        if pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::NonFinite("pmf".into()));
        }
        let mass: f64 = pmf.iter().sum();
        let spare = (TOTAL as usize - n) as f64;
        let scaled: Vec<f64> =
            pmf.iter().map(|p| if mass > 0.0 { p / mass * spare } else { spare / n as f64 }).collect();
        let mut freq: Vec<u32> = scaled.iter().map(|s| 1 + s.floor() as u32).collect();
        let assigned: u32 = freq.iter().sum();
        let mut rest = TOTAL - assigned;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let fa = scaled[a] - scaled[a].floor();
            let fb = scaled[b] - scaled[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if rest == 0 {
                break;
            }
            freq[i] += 1;
            rest -= 1;
        }
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0);
        for f in freq {
            cum.push(cum.last().unwrap() + f);
        }
        Ok(CdfTable { min_sym, cum })
    }

    pub fn len(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_sym(&self) -> i32 {
        self.min_sym + self.len() as i32 - 1
    }

    pub fn freq(&self, index: usize) -> u32 {
        self.cum[index + 1] - self.cum[index]
    }

    /// Alphabet index of `sym`, clamped to the table's ends.
    pub fn index_of(&self, sym: i32) -> usize {
        (sym.clamp(self.min_sym, self.max_sym()) - self.min_sym) as usize
    }

    pub fn clamp(&self, sym: i32) -> i32 {
        sym.clamp(self.min_sym, self.max_sym())
    }

    pub fn probability(&self, sym: i32) -> f64 {
        self.freq(self.index_of(sym)) as f64 / TOTAL as f64
    }

    /// Builds a table for the integer distribution given by `cdf`, where
    /// `cdf(x)` is the probability of a value below `x`. The alphabet is
    /// clipped where each tail holds less than [`TAIL_MASS`]; the end bins
    /// absorb the clipped tails.
    pub fn from_cdf(cdf: impl Fn(f64) -> f64, search: i32) -> Result<Self> {
        let mut lo = -search;
        while lo < search && cdf(lo as f64 + 0.5) < TAIL_MASS {
            lo += 1;
        }
        let mut hi = search;
        while hi > lo && 1.0 - cdf(hi as f64 - 0.5) < TAIL_MASS {
            hi -= 1;
        }
        let pmf: Vec<f64> = (lo..=hi)
            .map(|s| {
                let upper = if s == hi { 1.0 } else { cdf(s as f64 + 0.5) };
                let lower = if s == lo { 0.0 } else { cdf(s as f64 - 0.5) };
                (upper - lower).max(0.0)
            })
            .collect();
        CdfTable::from_pmf(lo, &pmf)
    }
}

/// Center of scale bin `j`: log-spaced over `[SCALE_MIN, SCALE_MAX]`.
pub fn scale_of_bin(j: usize) -> f64 {
    let step = (SCALE_MAX / SCALE_MIN).ln() / (SCALE_BINS - 1) as f64;
    (SCALE_MIN.ln() + j as f64 * step).exp()
}

/// Nearest scale bin in log space.
pub fn scale_bin(sigma: f64) -> usize {
    let step = (SCALE_MAX / SCALE_MIN).ln() / (SCALE_BINS - 1) as f64;
    let t = ((sigma.max(SCALE_MIN).ln() - SCALE_MIN.ln()) / step).round();
    (t.max(0.0) as usize).min(SCALE_BINS - 1)
}

/// The 64 Gaussian tables, built once.
pub fn gaussian_tables() -> &'static [CdfTable] {
    static TABLES: OnceLock<Vec<CdfTable>> = OnceLock::new();
    TABLES.get_or_init(|| {
        (0..SCALE_BINS)
            .map(|j| {
                let s = scale_of_bin(j);
                let half = (s * 6.0).ceil() as i32 + 1;
                gaussian_table(s, half)
            })
            .collect()
    })
}

fn gaussian_table(s: f64, half: i32) -> CdfTable {
    // Bin masses from the accurate lower-tail routine; tails are folded into
    // the end symbols.
    let mass = |v: i32| gaussian_bin(v as f64, s).0;
    let tail_below = |v: i32| super::phi((v as f64 - 0.5) / s);
    let mut hi = 0;
    while hi < half && tail_below(-hi) >= TAIL_MASS {
        hi += 1;
    }
    let lo = -hi;
    let pmf: Vec<f64> = (lo..=hi)
        .map(|v| if v == lo || v == hi { mass(v) + tail_below(-hi) } else { mass(v) })
        .collect();
    CdfTable::from_pmf(lo, &pmf).expect("gaussian pmf is valid")
}
