//! Numeric kernels shared by every bound engine.
//!
//! Everything here works on the unit interval with integer Beta/Dirichlet
//! parameters, which is all the stopping rules ever need. Densities are
//! evaluated in log space on top of a lazily grown table of `ln Γ(n)`.

use std::sync::OnceLock;

use thiserror::Error;

/// Default absolute tolerance for the bisection searches on `[0, 1]`.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Iteration cap for every bisection in this module.
pub const MAX_BISECTION_ITERS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("kl_bernoulli: q = {0} must lie strictly inside (0, 1)")]
    KlDomain(f64),
    #[error("dimension mismatch: x has {x} entries, counts has {counts}")]
    DimensionMismatch { x: usize, counts: usize },
    #[error("x is not a simplex point (sum = {0})")]
    NotOnSimplex(f64),
    #[error("level {level} exceeds the maximum density {max} of Beta({a}, {b}); the level set is empty")]
    EmptyLevelSet { a: u64, b: u64, level: f64, max: f64 },
}

/// A closed sub-interval of `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };

    /// Builds `[lo, hi]` clipped to the unit interval.
    pub fn clipped(lo: f64, hi: f64) -> Self {
        let lo = lo.clamp(0.0, 1.0);
        let hi = hi.clamp(0.0, 1.0);
        debug_assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

const CHUNK_BITS: usize = 16;
const CHUNK: usize = 1 << CHUNK_BITS;
const MAX_CHUNKS: usize = 1 << 14;

/// Lazily extended table of `ln Γ(n)` for positive integers `n`.
///
/// Storage is split into fixed-size chunks, each initialised exactly once
/// behind a [`OnceLock`]. Readers never observe a partially written chunk,
/// and growth of a given chunk is serialised by the lock. Arguments past the
/// last chunk (about 10⁹) fall back to a Stirling series.
pub struct LogGammaTable {
    chunks: Box<[OnceLock<Box<[f64]>>]>,
}

impl Default for LogGammaTable {
    fn default() -> Self {
        Self::new()
    }
}

impl LogGammaTable {
    pub fn new() -> Self {
        let chunks = (0..MAX_CHUNKS).map(|_| OnceLock::new()).collect();
        LogGammaTable { chunks }
    }

    /// Number of entries materialised so far (a multiple of the chunk size).
    pub fn capacity(&self) -> usize {
        self.chunks.iter().take_while(|c| c.get().is_some()).count() * CHUNK
    }

    /// `ln Γ(n) = ln (n-1)!` for `n ≥ 1`.
    pub fn ln_gamma(&self, n: u64) -> f64 {
        assert!(n >= 1, "ln_gamma_int requires n >= 1");
        let pos = (n - 1) as usize;
        let chunk = pos >> CHUNK_BITS;
        if chunk >= MAX_CHUNKS {
            return stirling_ln_gamma(n as f64);
        }
        self.chunk(chunk)[pos & (CHUNK - 1)]
    }

    fn chunk(&self, index: usize) -> &[f64] {
        if let Some(c) = self.chunks[index].get() {
            return c;
        }
        // Chunk i continues the running sum of chunk i-1.
        let start = if index == 0 {
            0.0
        } else {
            let prev = self.chunk(index - 1);
            let last_n = (index * CHUNK) as f64;
            prev[CHUNK - 1] + last_n.ln()
        };
        self.chunks[index].get_or_init(|| {
            let mut values = Vec::with_capacity(CHUNK);
            let mut acc = start;
            let first_n = index * CHUNK + 1;
            for offset in 0..CHUNK {
                let n = first_n + offset;
                if offset > 0 {
                    acc += ((n - 1) as f64).ln();
                }
                // Γ(1) = Γ(2) = 1 exactly.
                values.push(if n <= 2 { 0.0 } else { acc });
            }
            values.into_boxed_slice()
        })
    }
}

fn stirling_ln_gamma(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

fn shared_table() -> &'static LogGammaTable {
    static TABLE: OnceLock<LogGammaTable> = OnceLock::new();
    TABLE.get_or_init(LogGammaTable::new)
}

/// `ln Γ(n)` for integer `n ≥ 1`, backed by the process-wide table.
#[inline]
pub fn ln_gamma_int(n: u64) -> f64 {
    shared_table().ln_gamma(n)
}

/// `ln B(a, b)` for positive integers.
#[inline]
pub fn ln_beta_int(a: u64, b: u64) -> f64 {
    ln_gamma_int(a) + ln_gamma_int(b) - ln_gamma_int(a + b)
}

/// `k · ln x` with the convention `0 · ln 0 = 0`.
#[inline]
fn xlogy(k: f64, x: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * x.ln()
    }
}

/// Log density of `Beta(a, b)` at `x`.
#[inline]
pub fn ln_beta_pdf(x: f64, a: u64, b: u64) -> f64 {
    debug_assert!(a >= 1 && b >= 1);
    xlogy((a - 1) as f64, x) + xlogy((b - 1) as f64, 1.0 - x) - ln_beta_int(a, b)
}

/// Density of `Beta(a, b)` at `x`, with `0^0 = 1`.
pub fn beta_pdf(x: f64, a: u64, b: u64) -> f64 {
    ln_beta_pdf(x, a, b).exp()
}

/// `ln Beta(1/2; a, b)`: the PPR statistic at one half, one table lookup per term.
#[inline]
pub fn ln_beta_pdf_half(a: u64, b: u64) -> f64 {
    -((a + b - 2) as f64) * std::f64::consts::LN_2 - ln_beta_int(a, b)
}

/// Log density of `Dirichlet(counts + 1)` at the simplex point `x`.
pub fn dirichlet_logpdf(x: &[f64], counts: &[u64]) -> Result<f64, NumericsError> {
    if x.len() != counts.len() {
        return Err(NumericsError::DimensionMismatch { x: x.len(), counts: counts.len() });
    }
    let sum: f64 = x.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || x.iter().any(|&v| v < 0.0) {
        return Err(NumericsError::NotOnSimplex(sum));
    }
    let k = counts.len() as u64;
    let total: u64 = counts.iter().sum();
    let mut acc = ln_gamma_int(total + k);
    for (&xi, &si) in x.iter().zip(counts) {
        acc += xlogy(si as f64, xi) - ln_gamma_int(si + 1);
    }
    Ok(acc)
}

/// Bernoulli KL divergence `D(p || q)`, with `0 · ln 0 = 0`.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64, NumericsError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(NumericsError::KlDomain(q));
    }
    Ok(kl_inner(p, q))
}

#[inline]
fn kl_inner(p: f64, q: f64) -> f64 {
    let a = if p > 0.0 { p * (p / q).ln() } else { 0.0 };
    let b = if p < 1.0 { (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln() } else { 0.0 };
    (a + b).max(0.0)
}

// Closest representable probes to the open endpoints of (0, 1).
const EDGE: f64 = 1e-15;

/// Smallest `q ∈ [0, p_hat]` with `t · D(p_hat || q) ≤ beta`.
///
/// The returned point sits on the violating side of the bisection bracket,
/// so it errs low by at most `tol` and never above the exact bound.
pub fn invert_kl_lower(p_hat: f64, t: u64, beta: f64, tol: f64) -> f64 {
    let t = t as f64;
    if p_hat <= 0.0 {
        return 0.0;
    }
    if beta <= 0.0 {
        return p_hat;
    }
    if t * kl_inner(p_hat, EDGE) <= beta {
        return 0.0;
    }
    // lo violates the budget, hi satisfies it.
    let (mut lo, mut hi) = (EDGE, p_hat);
    for _ in 0..MAX_BISECTION_ITERS {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if t * kl_inner(p_hat, mid) <= beta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Largest `q ∈ [p_hat, 1]` with `t · D(p_hat || q) ≤ beta`.
pub fn invert_kl_upper(p_hat: f64, t: u64, beta: f64, tol: f64) -> f64 {
    let t = t as f64;
    if p_hat >= 1.0 {
        return 1.0;
    }
    if beta <= 0.0 {
        return p_hat;
    }
    if t * kl_inner(p_hat, 1.0 - EDGE) <= beta {
        return 1.0;
    }
    let (mut lo, mut hi) = (p_hat, 1.0 - EDGE);
    for _ in 0..MAX_BISECTION_ITERS {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if t * kl_inner(p_hat, mid) <= beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Mode of `Beta(a, b)` for integer parameters, taking the endpoint when a
/// parameter equals one.
pub fn beta_mode(a: u64, b: u64) -> f64 {
    match (a, b) {
        (1, 1) => 0.5,
        (1, _) => 0.0,
        (_, 1) => 1.0,
        _ => (a - 1) as f64 / (a + b - 2) as f64,
    }
}

/// Leftmost and rightmost solutions of `Beta(x; a, b) = level`.
///
/// The search splits at the closed-form mode and bisects each monotone flank.
/// When the density at an endpoint still exceeds `level` (possible only when
/// `a = 1` or `b = 1`) that endpoint is returned. Each reported crossing sits
/// on the low-density side of its bracket, so the interval can only err wide.
pub fn posterior_level_crossings(a: u64, b: u64, level: f64, tol: f64) -> Result<Interval, NumericsError> {
    assert!(a >= 1 && b >= 1, "Beta parameters must be positive");
    let mode = beta_mode(a, b);
    let ln_level = level.ln();
    let ln_max = ln_beta_pdf(mode, a, b);
    if ln_level > ln_max + 1e-12 * ln_max.abs().max(1.0) {
        return Err(NumericsError::EmptyLevelSet { a, b, level, max: ln_max.exp() });
    }
    if a == 1 && b == 1 {
        return Ok(Interval::UNIT);
    }
    let above = |x: f64| ln_beta_pdf(x, a, b) > ln_level;

    let lo = if mode == 0.0 || above(0.0) {
        0.0
    } else {
        // 0 is below the level, mode is at or above it.
        let (mut out, mut inside) = (0.0, mode);
        for _ in 0..MAX_BISECTION_ITERS {
            if inside - out <= tol {
                break;
            }
            let mid = 0.5 * (out + inside);
            if above(mid) {
                inside = mid;
            } else {
                out = mid;
            }
        }
        out
    };
    let hi = if mode == 1.0 || above(1.0) {
        1.0
    } else {
        let (mut inside, mut out) = (mode, 1.0);
        for _ in 0..MAX_BISECTION_ITERS {
            if out - inside <= tol {
                break;
            }
            let mid = 0.5 * (inside + out);
            if above(mid) {
                inside = mid;
            } else {
                out = mid;
            }
        }
        out
    };
    Ok(Interval { lo, hi })
}
