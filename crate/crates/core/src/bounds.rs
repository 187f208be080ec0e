//! Confidence-bound engines for a Bernoulli parameter.
//!
//! Each engine maps `(successes, total)` at a fixed mistake probability to an
//! [`Interval`]. Stopping rules pick the mistake probability (δ/(K−1) for
//! pairwise tests, δ/K for one-vs-rest) and then only ever call
//! [`BoundEngine::bounds`].

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::numerics::{invert_kl_lower, invert_kl_upper, posterior_level_crossings, Interval, DEFAULT_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("mistake probability {0} must lie strictly inside (0, 1)")]
    Alpha(f64),
    #[error("no root gamma > 1 of 2e^2 gamma e^-gamma = {0} in (1, 200]")]
    NoGammaRoot(f64),
    #[error("unknown bound engine {0:?}; expected ppr, lucb, kl-lucb, kl-sn or a1")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    Ppr,
    HoeffdingLucb,
    KlLucb,
    KlSn,
    A1Bernstein,
}

impl BoundKind {
    pub const ALL: [BoundKind; 5] =
        [BoundKind::Ppr, BoundKind::HoeffdingLucb, BoundKind::KlLucb, BoundKind::KlSn, BoundKind::A1Bernstein];

    pub fn token(self) -> &'static str {
        match self {
            BoundKind::Ppr => "ppr",
            BoundKind::HoeffdingLucb => "lucb",
            BoundKind::KlLucb => "kl-lucb",
            BoundKind::KlSn => "kl-sn",
            BoundKind::A1Bernstein => "a1",
        }
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for BoundKind {
    type Err = BoundsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BoundKind::ALL.into_iter().find(|k| k.token() == s).ok_or_else(|| BoundsError::UnknownKind(s.to_string()))
    }
}

/// Exploration rate `β(t, α)` for the LUCB family and for KL-SN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExplorationRate {
    /// `ln(405.5 · t^1.1 / α)`.
    Lucb { alpha: f64 },
    /// `γ(1 + ln γ)/((γ − 1) ln γ) · ln ln t + γ`, defined for `t ≥ 3`.
    KlSn { gamma: f64 },
}

impl ExplorationRate {
    pub fn lucb(alpha: f64) -> Self {
        ExplorationRate::Lucb { alpha }
    }

    pub fn kl_sn(alpha: f64) -> Result<Self, BoundsError> {
        Ok(ExplorationRate::KlSn { gamma: kl_sn_gamma(alpha)? })
    }

    /// Smallest `t` at which the rate is defined.
    pub fn t_min(&self) -> u64 {
        match self {
            ExplorationRate::Lucb { .. } => 1,
            ExplorationRate::KlSn { .. } => 3,
        }
    }

    pub fn beta(&self, t: u64) -> f64 {
        let t = t as f64;
        match *self {
            ExplorationRate::Lucb { alpha } => (405.5 * t.powf(1.1) / alpha).ln(),
            ExplorationRate::KlSn { gamma } => {
                let lg = gamma.ln();
                gamma * (1.0 + lg) / ((gamma - 1.0) * lg) * t.ln().ln() + gamma
            }
        }
    }
}

/// A confidence-bound engine at one mistake probability.
///
/// Constants that depend only on `alpha` (the KL-SN γ) are computed at
/// construction, so an engine is immutable and freely shared across threads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEngine {
    kind: BoundKind,
    alpha: f64,
    rate: Option<ExplorationRate>,
}

impl BoundEngine {
    pub fn new(kind: BoundKind, alpha: f64) -> Result<Self, BoundsError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(BoundsError::Alpha(alpha));
        }
        let rate = match kind {
            BoundKind::HoeffdingLucb | BoundKind::KlLucb => Some(ExplorationRate::lucb(alpha)),
            BoundKind::KlSn => Some(ExplorationRate::kl_sn(alpha)?),
            BoundKind::Ppr | BoundKind::A1Bernstein => None,
        };
        Ok(BoundEngine { kind, alpha, rate })
    }

    pub fn kind(&self) -> BoundKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Interval for the success probability after `s` successes in `t` trials.
    pub fn bounds(&self, s: u64, t: u64) -> Interval {
        debug_assert!(s <= t);
        match self.kind {
            BoundKind::Ppr => ppr_bounds(s, t, self.alpha),
            BoundKind::A1Bernstein => a1_bounds(s, t, self.alpha),
            BoundKind::HoeffdingLucb => hoeffding_with_rate(s, t, self.rate.expect("rate")),
            BoundKind::KlLucb | BoundKind::KlSn => kl_with_rate(s, t, self.rate.expect("rate")),
        }
    }
}

pub fn hoeffding_lucb_bounds(s: u64, t: u64, alpha: f64) -> Interval {
    hoeffding_with_rate(s, t, ExplorationRate::lucb(alpha))
}

fn hoeffding_with_rate(s: u64, t: u64, rate: ExplorationRate) -> Interval {
    if t == 0 {
        return Interval::UNIT;
    }
    let p_hat = s as f64 / t as f64;
    let half = (rate.beta(t) / (2.0 * t as f64)).sqrt();
    Interval::clipped(p_hat - half, p_hat + half)
}

pub fn kl_lucb_bounds(s: u64, t: u64, alpha: f64) -> Interval {
    kl_with_rate(s, t, ExplorationRate::lucb(alpha))
}

pub fn kl_sn_bounds(s: u64, t: u64, alpha: f64) -> Result<Interval, BoundsError> {
    Ok(kl_with_rate(s, t, ExplorationRate::kl_sn(alpha)?))
}

fn kl_with_rate(s: u64, t: u64, rate: ExplorationRate) -> Interval {
    if t < rate.t_min() {
        return Interval::UNIT;
    }
    let p_hat = s as f64 / t as f64;
    let beta = rate.beta(t);
    Interval { lo: invert_kl_lower(p_hat, t, beta, DEFAULT_TOL), hi: invert_kl_upper(p_hat, t, beta, DEFAULT_TOL) }
}

/// Root `γ > 1` of `2e²γe^{−γ} = α`.
pub fn kl_sn_gamma(alpha: f64) -> Result<f64, BoundsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BoundsError::Alpha(alpha));
    }
    // Log form: g(γ) = ln 2 + 2 + ln γ − γ − ln α, strictly decreasing for γ > 1.
    let target = alpha.ln();
    let g = |gamma: f64| std::f64::consts::LN_2 + 2.0 + gamma.ln() - gamma - target;
    let (mut lo, mut hi) = (1.0 + 1e-9, 200.0);
    if g(lo) < 0.0 || g(hi) > 0.0 {
        return Err(BoundsError::NoGammaRoot(alpha));
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Empirical-Bernstein interval for 0/1 samples.
pub fn a1_bounds(s: u64, t: u64, alpha: f64) -> Interval {
    if t < 2 {
        return Interval::UNIT;
    }
    let (sf, tf) = (s as f64, t as f64);
    let p_hat = sf / tf;
    let var = sf * (tf - sf) / (tf * (tf - 1.0));
    let log_term = (4.0 * tf * tf / alpha).ln();
    let half = (2.0 * var * log_term / tf).sqrt() + 7.0 * log_term / (3.0 * (tf - 1.0));
    Interval::clipped(p_hat - half, p_hat + half)
}

/// Level set `{p : Beta(p; s+1, t−s+1) > α}` of the uniform-prior posterior.
pub fn ppr_bounds(s: u64, t: u64, alpha: f64) -> Interval {
    posterior_level_crossings(s + 1, t - s + 1, alpha, DEFAULT_TOL)
        .expect("a density integrating to one exceeds any level below one somewhere")
}
