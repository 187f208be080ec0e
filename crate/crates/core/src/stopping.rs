//! δ-correct stopping rules for mode estimation.
//!
//! Every rule reads a [`TallyState`] (or, for the adaptive rule, its own
//! discovery-ordered counts) and answers [`Verdict::Continue`] or
//! [`Verdict::Declare`] with the index currently in first place.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{BoundEngine, BoundKind, BoundsError};
use crate::instances::{DiscreteInstance, PairTally, SeededStream, TallyState};
use crate::numerics::{ln_beta_pdf_half, ln_gamma_int};

/// Default hard cap on samples drawn by a single trial.
pub const DEFAULT_SAMPLE_CAP: u64 = 1_000_000_000;

/// `6/π²`, the normaliser of `Σ 1/i²`.
pub const ADAPTIVE_K: f64 = 6.0 / (PI * PI);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Continue,
    Declare(usize),
}

impl Verdict {
    pub fn declared(self) -> Option<usize> {
        match self {
            Verdict::Continue => None,
            Verdict::Declare(i) => Some(i),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoppingError {
    #[error("unknown rule {0:?}; expected ppr-1v1, ppr-1vr, ppr-md, ppr-adaptive, <engine>-1v1 or <engine>-1vr")]
    UnknownRule(String),
    #[error("delta = {0} must lie strictly inside (0, 1)")]
    Delta(f64),
    #[error("check_every must be at least 1")]
    CheckEvery,
    #[error("rule {rule} did not stop within {cap} samples")]
    SampleCap { rule: String, cap: u64 },
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

fn check_delta(delta: f64) -> Result<(), StoppingError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(StoppingError::Delta(delta))
    }
}

/// PPR-1v1: declare first iff `Beta(1/2; s_first+1, s_second+1) ≤ δ/(K−1)`.
pub fn ppr_1v1_check(tally: &TallyState, k: usize, delta: f64) -> Verdict {
    ppr_1v1_ln(tally, (delta / (k - 1) as f64).ln())
}

#[inline]
fn ppr_1v1_ln(tally: &TallyState, ln_threshold: f64) -> Verdict {
    let (f, s) = (tally.first(), tally.second());
    let (a, b) = (tally.count(f), tally.count(s));
    if a > b && ln_beta_pdf_half(a + 1, b + 1) <= ln_threshold {
        Verdict::Declare(f)
    } else {
        Verdict::Continue
    }
}

/// Pairwise template over any engine at mistake probability δ/(K−1).
#[derive(Debug, Clone, Copy)]
pub struct OneVsOne {
    engine: BoundEngine,
}

impl OneVsOne {
    pub fn new(kind: BoundKind, k: usize, delta: f64) -> Result<Self, StoppingError> {
        check_delta(delta)?;
        Ok(OneVsOne { engine: BoundEngine::new(kind, delta / (k - 1) as f64)? })
    }

    /// Declares first iff the `(first, j)` pair interval lies strictly above
    /// one half for every `j ≠ first`.
    pub fn check(&self, tally: &TallyState) -> Verdict {
        let f = tally.first();
        let sf = tally.count(f);
        if sf == tally.count(tally.second()) {
            return Verdict::Continue;
        }
        let passes = |sj: u64| self.engine.bounds(sf, sf + sj).lo > 0.5;
        // The runner-up is the likeliest blocker; many values share counts.
        if !passes(tally.count(tally.second())) {
            return Verdict::Continue;
        }
        let mut cleared = vec![tally.count(tally.second())];
        for (j, &sj) in tally.counts().iter().enumerate() {
            if j == f || cleared.contains(&sj) {
                continue;
            }
            if !passes(sj) {
                return Verdict::Continue;
            }
            cleared.push(sj);
        }
        Verdict::Declare(f)
    }
}

/// One-vs-rest template at mistake probability δ/K per value.
#[derive(Debug, Clone, Copy)]
pub struct OneVsRest {
    engine: BoundEngine,
}

impl OneVsRest {
    pub fn new(kind: BoundKind, k: usize, delta: f64) -> Result<Self, StoppingError> {
        check_delta(delta)?;
        Ok(OneVsRest { engine: BoundEngine::new(kind, delta / k as f64)? })
    }

    pub fn engine(&self) -> &BoundEngine {
        &self.engine
    }

    /// Declares first iff `LCB_first ≥ UCB_j` for every `j ≠ first`.
    pub fn check(&self, tally: &TallyState) -> Verdict {
        let t = tally.total();
        let f = tally.first();
        if t == 0 || tally.count(f) == tally.count(tally.second()) {
            return Verdict::Continue;
        }
        let lcb = self.engine.bounds(tally.count(f), t).lo;
        let below = |sj: u64| self.engine.bounds(sj, t).hi <= lcb;
        if !below(tally.count(tally.second())) {
            return Verdict::Continue;
        }
        let mut cleared = vec![tally.count(tally.second())];
        for (j, &sj) in tally.counts().iter().enumerate() {
            if j == f || cleared.contains(&sj) {
                continue;
            }
            if !below(sj) {
                return Verdict::Continue;
            }
            cleared.push(sj);
        }
        Verdict::Declare(f)
    }
}

#[inline]
fn xlnx_ratio(s: u64, num: f64, den: f64) -> f64 {
    if s == 0 {
        0.0
    } else {
        s as f64 * (num / den).ln()
    }
}

/// Log of the Dirichlet-posterior stopping quantity for the pair `(f, j)`,
/// evaluated at the maximiser over the slice `x_f = x_j`.
pub fn ppr_md_statistic(counts: &[u64], f: usize, j: usize) -> f64 {
    let k = counts.len() as u64;
    let t: u64 = counts.iter().sum();
    let tf = t as f64;
    let mut acc = ln_gamma_int(t + k);
    for (i, &s) in counts.iter().enumerate() {
        acc -= ln_gamma_int(s + 1);
        if i != f && i != j {
            acc += xlnx_ratio(s, s as f64, tf);
        }
    }
    let pooled = (counts[f] + counts[j]) as f64;
    acc + xlnx_ratio(counts[f], pooled, 2.0 * tf) + xlnx_ratio(counts[j], pooled, 2.0 * tf)
}

/// The slice maximiser `x*` for the pair `(f, j)`.
pub fn ppr_md_maximizer(counts: &[u64], f: usize, j: usize) -> Vec<f64> {
    let t: u64 = counts.iter().sum();
    let tf = t as f64;
    let mut x: Vec<f64> = counts.iter().map(|&s| s as f64 / tf).collect();
    let pooled = (counts[f] + counts[j]) as f64 / (2.0 * tf);
    x[f] = pooled;
    x[j] = pooled;
    x
}

/// PPR-MD: declare first iff the slice maximum of the posterior stays at or
/// below `δ/(K−1)!` against every other value.
pub fn ppr_md_check(tally: &TallyState, k: usize, delta: f64) -> Verdict {
    ppr_md_ln(tally, delta.ln() - ln_gamma_int(k as u64))
}

fn ppr_md_ln(tally: &TallyState, ln_threshold: f64) -> Verdict {
    if tally.total() == 0 {
        return Verdict::Continue;
    }
    let f = tally.first();
    let counts = tally.counts();
    if counts[f] == counts[tally.second()] {
        return Verdict::Continue;
    }
    let t = tally.total() as f64;
    let k = counts.len() as u64;
    // Terms outside the pair are shared by every j.
    let mut base = ln_gamma_int(tally.total() + k);
    for &s in counts {
        base += xlnx_ratio(s, s as f64, t) - ln_gamma_int(s + 1);
    }
    let sf = counts[f];
    for (j, &sj) in counts.iter().enumerate() {
        if j == f {
            continue;
        }
        let pooled = (sf + sj) as f64;
        let adjust = xlnx_ratio(sf, pooled, 2.0 * t) + xlnx_ratio(sj, pooled, 2.0 * t)
            - xlnx_ratio(sf, sf as f64, t)
            - xlnx_ratio(sj, sj as f64, t);
        if base + adjust > ln_threshold {
            return Verdict::Continue;
        }
    }
    Verdict::Declare(f)
}

/// PPR-Adaptive state for an unknown, unbounded support.
///
/// Answers get slots in order of first appearance. When the `n`-th pairwise
/// test is created it receives budget `kδ/n²` with `k = 6/π²`; a new answer
/// pairs with every earlier answer, earliest first. Pair tallies are the
/// head-to-head counts of the two answers and are read off the per-slot
/// counts.
#[derive(Debug, Clone)]
pub struct AdaptiveState {
    delta: f64,
    answers: Vec<usize>,
    slot_of: HashMap<usize, usize>,
    counts: Vec<u64>,
    /// `ln_budgets[j][i]` for slots `i < j`.
    ln_budgets: Vec<Vec<f64>>,
    tests_created: u64,
    leader: usize,
}

impl AdaptiveState {
    pub fn new(delta: f64) -> Self {
        AdaptiveState {
            delta,
            answers: Vec::new(),
            slot_of: HashMap::new(),
            counts: Vec::new(),
            ln_budgets: Vec::new(),
            tests_created: 0,
            leader: 0,
        }
    }

    /// Answers in order of discovery.
    pub fn answers(&self) -> &[usize] {
        &self.answers
    }

    pub fn count_of(&self, answer: usize) -> u64 {
        self.slot_of.get(&answer).map_or(0, |&s| self.counts[s])
    }

    /// Number of pairwise tests created so far.
    pub fn tests_created(&self) -> u64 {
        self.tests_created
    }

    /// Budget of the test between two discovered answers.
    pub fn budget(&self, a: usize, b: usize) -> Option<f64> {
        let (sa, sb) = (*self.slot_of.get(&a)?, *self.slot_of.get(&b)?);
        if sa == sb {
            return None;
        }
        Some(self.ln_budgets[sa.max(sb)][sa.min(sb)].exp())
    }

    /// Sum of all budgets handed out so far.
    pub fn assigned_budget(&self) -> f64 {
        (1..=self.tests_created).map(|n| ADAPTIVE_K * self.delta / (n * n) as f64).sum()
    }

    pub fn pair(&self, a: usize, b: usize) -> PairTally {
        PairTally { wins_i: self.count_of(a), wins_j: self.count_of(b) }
    }

    pub fn observe(&mut self, answer: usize) {
        let slot = match self.slot_of.get(&answer) {
            Some(&s) => s,
            None => {
                let s = self.answers.len();
                let row = (0..s)
                    .map(|_| {
                        self.tests_created += 1;
                        let n = self.tests_created as f64;
                        (ADAPTIVE_K * self.delta / (n * n)).ln()
                    })
                    .collect();
                self.answers.push(answer);
                self.slot_of.insert(answer, s);
                self.counts.push(0);
                self.ln_budgets.push(row);
                s
            }
        };
        self.counts[slot] += 1;
        if self.counts[slot] > self.counts[self.leader] {
            self.leader = slot;
        }
    }

    /// Declares the leading answer once it wins its test against every other
    /// discovered answer. A lone answer never declares.
    pub fn check(&self) -> Verdict {
        if self.answers.len() < 2 {
            return Verdict::Continue;
        }
        let l = self.leader;
        let cl = self.counts[l];
        for (o, &co) in self.counts.iter().enumerate() {
            if o == l {
                continue;
            }
            let ln_budget = self.ln_budgets[l.max(o)][l.min(o)];
            if cl <= co || ln_beta_pdf_half(cl + 1, co + 1) > ln_budget {
                return Verdict::Continue;
            }
        }
        Verdict::Declare(self.answers[l])
    }
}

/// A stopping rule as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RuleConfig {
    /// Closed-form PPR pairwise rule against the runner-up.
    Ppr1v1,
    PprMd,
    PprAdaptive,
    OneVsOne(BoundKind),
    OneVsRest(BoundKind),
}

impl RuleConfig {
    pub fn engine(&self) -> BoundKind {
        match self {
            RuleConfig::OneVsOne(k) | RuleConfig::OneVsRest(k) => *k,
            _ => BoundKind::Ppr,
        }
    }

    pub fn scheme(&self) -> &'static str {
        match self {
            RuleConfig::Ppr1v1 | RuleConfig::OneVsOne(_) => "1v1",
            RuleConfig::OneVsRest(_) => "1vr",
            RuleConfig::PprMd => "md",
            RuleConfig::PprAdaptive => "adaptive",
        }
    }

    pub fn build(&self, k: usize, delta: f64) -> Result<RuleState, StoppingError> {
        check_delta(delta)?;
        let tally = TallyState::new(k);
        let kind = match *self {
            RuleConfig::Ppr1v1 => RuleKind::Ppr1v1 { ln_threshold: (delta / (k - 1) as f64).ln() },
            RuleConfig::PprMd => RuleKind::Md { ln_threshold: delta.ln() - ln_gamma_int(k as u64) },
            RuleConfig::PprAdaptive => RuleKind::Adaptive(AdaptiveState::new(delta)),
            RuleConfig::OneVsOne(e) => RuleKind::OneVsOne(OneVsOne::new(e, k, delta)?),
            RuleConfig::OneVsRest(e) => RuleKind::OneVsRest(OneVsRest::new(e, k, delta)?),
        };
        Ok(RuleState { tally, kind })
    }
}

impl fmt::Display for RuleConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleConfig::Ppr1v1 => f.write_str("ppr-1v1"),
            RuleConfig::PprMd => f.write_str("ppr-md"),
            RuleConfig::PprAdaptive => f.write_str("ppr-adaptive"),
            RuleConfig::OneVsOne(k) => write!(f, "{k}-1v1"),
            RuleConfig::OneVsRest(k) => write!(f, "{k}-1vr"),
        }
    }
}

impl FromStr for RuleConfig {
    type Err = StoppingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ppr-1v1" => return Ok(RuleConfig::Ppr1v1),
            "ppr-md" => return Ok(RuleConfig::PprMd),
            "ppr-adaptive" => return Ok(RuleConfig::PprAdaptive),
            _ => {}
        }
        let unknown = || StoppingError::UnknownRule(s.to_string());
        let (engine, scheme) = s.rsplit_once('-').ok_or_else(unknown)?;
        let engine: BoundKind = engine.parse().map_err(|_| unknown())?;
        match scheme {
            "1v1" => Ok(RuleConfig::OneVsOne(engine)),
            "1vr" => Ok(RuleConfig::OneVsRest(engine)),
            _ => Err(unknown()),
        }
    }
}

impl TryFrom<String> for RuleConfig {
    type Error = StoppingError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<RuleConfig> for String {
    fn from(r: RuleConfig) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone)]
enum RuleKind {
    Ppr1v1 { ln_threshold: f64 },
    Md { ln_threshold: f64 },
    Adaptive(AdaptiveState),
    OneVsOne(OneVsOne),
    OneVsRest(OneVsRest),
}

/// A rule bound to its support size and δ, together with the tally it reads.
#[derive(Debug, Clone)]
pub struct RuleState {
    tally: TallyState,
    kind: RuleKind,
}

impl RuleState {
    pub fn tally(&self) -> &TallyState {
        &self.tally
    }

    #[inline]
    pub fn observe(&mut self, idx: usize) {
        self.tally.update(idx);
        if let RuleKind::Adaptive(a) = &mut self.kind {
            a.observe(idx);
        }
    }

    pub fn check(&self) -> Verdict {
        match &self.kind {
            RuleKind::Ppr1v1 { ln_threshold } => ppr_1v1_ln(&self.tally, *ln_threshold),
            RuleKind::Md { ln_threshold } => ppr_md_ln(&self.tally, *ln_threshold),
            RuleKind::Adaptive(a) => a.check(),
            RuleKind::OneVsOne(r) => r.check(&self.tally),
            RuleKind::OneVsRest(r) => r.check(&self.tally),
        }
    }
}

/// Knobs for [`run_mode_estimation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub check_every: u64,
    pub max_samples: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { check_every: 1, max_samples: DEFAULT_SAMPLE_CAP }
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub trial: u64,
    pub samples: u64,
    pub declared: usize,
    pub truth: usize,
    pub correct: bool,
}

/// Draws from `instance` until `rule` declares.
pub fn run_mode_estimation(
    instance: &DiscreteInstance,
    rule: RuleConfig,
    delta: f64,
    stream: SeededStream,
    opts: RunOptions,
) -> Result<TrialRecord, StoppingError> {
    if opts.check_every == 0 {
        return Err(StoppingError::CheckEvery);
    }
    let mut state = rule.build(instance.k(), delta)?;
    let mut rng = stream.rng();
    let mut samples = 0u64;
    loop {
        if samples >= opts.max_samples {
            return Err(StoppingError::SampleCap { rule: rule.to_string(), cap: opts.max_samples });
        }
        state.observe(instance.sample(&mut rng));
        samples += 1;
        if !samples.is_multiple_of(opts.check_every) {
            continue;
        }
        if let Verdict::Declare(declared) = state.check() {
            debug_assert_eq!(declared, state.tally().first());
            return Ok(TrialRecord {
                seed: stream.master_seed,
                trial: stream.stream_index,
                samples,
                declared,
                truth: instance.true_mode(),
                correct: declared == instance.true_mode(),
            });
        }
    }
}
