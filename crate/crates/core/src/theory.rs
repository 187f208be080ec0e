//! Closed-form sample-complexity calculators and numeric checks of the
//! inequalities behind them.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::numerics::{ln_beta_int, ln_beta_pdf_half, ln_gamma_int};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("need 1 >= p1 > p2 >= 0, got p1 = {p1}, p2 = {p2}")]
    Gap { p1: f64, p2: f64 },
    #[error("p1 = {0} must lie in (1/2, 1]")]
    BernoulliP1(f64),
    #[error("delta = {0} must lie strictly inside (0, 1)")]
    Delta(f64),
    #[error("need K >= 2, got {0}")]
    K(usize),
}

fn check_gap(p1: f64, p2: f64) -> Result<(), TheoryError> {
    if p1 <= 1.0 && p2 >= 0.0 && p1 > p2 {
        Ok(())
    } else {
        Err(TheoryError::Gap { p1, p2 })
    }
}

fn check_delta(delta: f64) -> Result<(), TheoryError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(TheoryError::Delta(delta))
    }
}

fn check_k(k: usize) -> Result<(), TheoryError> {
    if k >= 2 {
        Ok(())
    } else {
        Err(TheoryError::K(k))
    }
}

/// Expected-sample lower bound for any δ-correct rule.
pub fn lower_bound(p1: f64, p2: f64, delta: f64) -> Result<f64, TheoryError> {
    check_gap(p1, p2)?;
    check_delta(delta)?;
    Ok(p1 / (p1 - p2).powi(2) * (1.0 / (2.4 * delta)).ln())
}

/// High-probability upper bound for the empirical-Bernstein rule.
pub fn a1_upper_bound(p1: f64, p2: f64, k: usize, delta: f64) -> Result<f64, TheoryError> {
    check_gap(p1, p2)?;
    check_delta(delta)?;
    check_k(k)?;
    const C: f64 = 592.0 / 3.0;
    let h = p1 / (p1 - p2).powi(2);
    Ok(C * h * (C * (k as f64 / delta).sqrt() * h).ln())
}

/// High-probability upper bound for PPR on a Bernoulli with mean `p1 > 1/2`.
pub fn ppr_bernoulli_upper(p1: f64, delta: f64) -> Result<f64, TheoryError> {
    if !(p1 > 0.5 && p1 <= 1.0) {
        return Err(TheoryError::BernoulliP1(p1));
    }
    check_delta(delta)?;
    let gap2 = (p1 - 0.5).powi(2);
    Ok(20.775 * p1 / gap2 * (2.49 / (gap2 * delta)).ln())
}

/// High-probability upper bound for PPR-1v1.
pub fn ppr_1v1_upper(p1: f64, p2: f64, k: usize, delta: f64) -> Result<f64, TheoryError> {
    check_gap(p1, p2)?;
    check_delta(delta)?;
    check_k(k)?;
    let gap = p1 - p2;
    Ok(194.07 * p1 / (gap * gap) * ((79.68 * (k - 1) as f64 / delta).sqrt() * p1 / gap).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub p1: f64,
    pub p2: f64,
    pub k: usize,
    pub delta: f64,
    pub lower: f64,
    pub a1_upper: f64,
    /// Only defined for two values with `p1 > 1/2`.
    pub ppr_bernoulli_upper: Option<f64>,
    pub ppr_1v1_upper: f64,
}

impl BoundReport {
    pub fn new(p1: f64, p2: f64, k: usize, delta: f64) -> Result<Self, TheoryError> {
        let bernoulli = if k == 2 && p1 > 0.5 { Some(ppr_bernoulli_upper(p1, delta)?) } else { None };
        Ok(BoundReport {
            p1,
            p2,
            k,
            delta,
            lower: lower_bound(p1, p2, delta)?,
            a1_upper: a1_upper_bound(p1, p2, k, delta)?,
            ppr_bernoulli_upper: bernoulli,
            ppr_1v1_upper: ppr_1v1_upper(p1, p2, k, delta)?,
        })
    }

    pub const CSV_HEADER: &'static str = "p1,p2,k,delta,lower,a1_upper,ppr_bernoulli_upper,ppr_1v1_upper";

    pub fn csv_row(&self) -> String {
        let bern = self.ppr_bernoulli_upper.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.p1, self.p2, self.k, self.delta, self.lower, self.a1_upper, bern, self.ppr_1v1_upper
        )
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p1 = {}, p2 = {}, K = {}, delta = {}", self.p1, self.p2, self.k, self.delta)?;
        writeln!(f, "lower bound          {:>14.2}", self.lower)?;
        writeln!(f, "A1 upper bound       {:>14.2}", self.a1_upper)?;
        match self.ppr_bernoulli_upper {
            Some(v) => writeln!(f, "PPR-Bernoulli upper  {v:>14.2}")?,
            None => writeln!(f, "PPR-Bernoulli upper  {:>14}", "n/a")?,
        }
        write!(f, "PPR-1v1 upper bound  {:>14.2}", self.ppr_1v1_upper)
    }
}

/// Checks the constant chain `u < (1 − l)(p1 + pj)t*` for one competitor `pj`.
pub fn verify_thm3_margin(p1: f64, p2: f64, pj: f64, k: usize, delta: f64) -> bool {
    let Ok(t_star) = ppr_1v1_upper(p1, p2, k, delta) else {
        return false;
    };
    let pair = p1 + pj;
    let q1 = p1 / pair;
    let delta_prime = delta / (2.0 * (k - 1) as f64);
    let Ok(u) = ppr_bernoulli_upper(q1, delta_prime) else {
        return false;
    };
    let l = (2.0 * (1.0 / delta_prime).ln() / (pair * t_star)).sqrt();
    u < (1.0 - l) * pair * t_star
}

/// Right-hand factor of the beta-function inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConjectureForm {
    /// `F = 1`, which implies the `K`-factor form for every `K`.
    #[default]
    Strong,
    /// `F = (K − 1)/K`.
    KFactor(usize),
}

impl ConjectureForm {
    fn ln_factor(self) -> f64 {
        match self {
            ConjectureForm::Strong => 0.0,
            ConjectureForm::KFactor(k) => ((k - 1) as f64 / k as f64).ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConjectureFailure {
    pub x: u64,
    pub y: u64,
    pub f: u64,
    /// Left side minus right side, in log space.
    pub margin: f64,
}

/// The crossing point `θ*` solving `θ/(1−θ) = [x!(y+f)!/(y!(x+f)!)]^{1/(x−y)}`.
pub fn conjecture_theta_star(x: u64, y: u64, f: u64) -> f64 {
    assert!(x > y, "need x > y");
    let lf = |n: u64| ln_gamma_int(n + 1);
    let log_odds = (lf(x) + lf(y + f) - lf(y) - lf(x + f)) / (x - y) as f64;
    1.0 / (1.0 + (-log_odds).exp())
}

/// Log-space margin of the inequality at one triple; non-negative means it holds.
pub fn conjecture_margin(x: u64, y: u64, f: u64, form: ConjectureForm) -> f64 {
    let theta = conjecture_theta_star(x, y, f);
    let lhs = x as f64 * theta.ln() + (y + f) as f64 * (1.0 - theta).ln() - ln_beta_int(x + 1, y + f + 1);
    let rhs = form.ln_factor() - (x + y) as f64 * std::f64::consts::LN_2 - ln_beta_int(x + 1, y + 1);
    lhs - rhs
}

/// Sweeps `1 ≤ y < x ≤ x_max`, `y ≤ y_max`, `1 ≤ f ≤ f_max` and returns every
/// triple where the inequality fails.
pub fn verify_1v1_1vr_conjecture(x_max: u64, y_max: u64, f_max: u64, form: ConjectureForm) -> Vec<ConjectureFailure> {
    let mut failures: Vec<ConjectureFailure> = (2..=x_max)
        .into_par_iter()
        .flat_map_iter(|x| {
            (1..x.min(y_max + 1)).flat_map(move |y| {
                (1..=f_max).filter_map(move |f| {
                    let margin = conjecture_margin(x, y, f, form);
                    (margin < 0.0).then_some(ConjectureFailure { x, y, f, margin })
                })
            })
        })
        .collect();
    failures.sort_by_key(|c| (c.x, c.y, c.f));
    failures
}

/// Checks `Beta(1/2; a, b+1) ≥ Beta(1/2; a, b)` for all `1 ≤ b ≤ a`, within
/// the given limits.
pub fn verify_beta_monotonicity(a_max: u64, b_max: u64) -> bool {
    (1..=a_max).all(|a| {
        (1..=a.min(b_max)).all(|b| {
            let gain = ln_beta_pdf_half(a, b + 1) - ln_beta_pdf_half(a, b);
            // The exact ratio is (a+b)/(2b) ≥ 1; allow rounding at equality.
            gain >= -1e-12
        })
    })
}
