//! Byzantine answer verification: a node pool polled in batches, Wald's SPRT
//! with an assumed Byzantine bound, and PPR rules that need no such bound.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::mean_stderr;
use crate::instances::{derive_stream, SeededStream};
use crate::stopping::{RuleConfig, StoppingError, Verdict};

/// Index of the correct answer; wrong answers are `1..K`.
pub const CORRECT: usize = 0;

#[derive(Debug, Error)]
pub enum BlockchainError {
    #[error("f_max = {0} must lie in (0, 1/2)")]
    FMax(f64),
    #[error("Byzantine fraction f = {0} must lie in [0, 1/2)")]
    Fraction(f64),
    #[error("batch size m = {m} must satisfy 1 <= m <= N = {n}")]
    Batch { m: usize, n: usize },
    #[error("spread answer model needs K >= 2, got {0}")]
    Answers(usize),
    #[error("unknown policy {0:?}; expected sprt, ppr-1v1, ppr-1vr or ppr-adaptive")]
    UnknownPolicy(String),
    #[error("{policy} did not stop within {cap} samples")]
    SampleCap { policy: Policy, cap: u64 },
    #[error(transparent)]
    Stopping(#[from] StoppingError),
    #[error("writing {path}: {source}")]
    Csv { path: String, source: csv::Error },
}

/// How Byzantine nodes answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerModel {
    /// Every Byzantine node reports answer 1 (K = 2).
    SingleWrongAnswer,
    /// Byzantine nodes report answers `1..K` round-robin, so the K − 1 wrong
    /// answers are equally common.
    SpreadWrongAnswers { k: usize },
}

impl AnswerModel {
    /// Answers for `k = 2` or more; two answers collapse to the single model.
    pub fn for_k(k: usize) -> Result<Self, BlockchainError> {
        match k {
            0 | 1 => Err(BlockchainError::Answers(k)),
            2 => Ok(AnswerModel::SingleWrongAnswer),
            _ => Ok(AnswerModel::SpreadWrongAnswers { k }),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            AnswerModel::SingleWrongAnswer => 2,
            AnswerModel::SpreadWrongAnswers { k } => *k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodePool {
    n: usize,
    f: f64,
    m: usize,
    model: AnswerModel,
    byzantine: usize,
}

impl NodePool {
    pub fn new(n: usize, f: f64, m: usize, model: AnswerModel) -> Result<Self, BlockchainError> {
        if !(0.0..0.5).contains(&f) {
            return Err(BlockchainError::Fraction(f));
        }
        if m == 0 || m > n {
            return Err(BlockchainError::Batch { m, n });
        }
        if model.k() < 2 {
            return Err(BlockchainError::Answers(model.k()));
        }
        let byzantine = (f * n as f64).floor() as usize;
        Ok(NodePool { n, f, m, model, byzantine })
    }

    /// Same pool with a different true Byzantine fraction.
    pub fn with_f(&self, f: f64) -> Result<Self, BlockchainError> {
        NodePool::new(self.n, f, self.m, self.model)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.model.k()
    }

    pub fn model(&self) -> AnswerModel {
        self.model
    }

    pub fn byzantine(&self) -> usize {
        self.byzantine
    }

    /// Answer reported by node `node`. Nodes `0..byzantine` are Byzantine.
    #[inline]
    pub fn answer(&self, node: usize) -> usize {
        if node >= self.byzantine {
            return CORRECT;
        }
        match self.model {
            AnswerModel::SingleWrongAnswer => 1,
            AnswerModel::SpreadWrongAnswers { k } => 1 + node % (k - 1),
        }
    }
}

/// Polls `m` distinct nodes and returns the report count per answer.
pub fn draw_batch<R: Rng + ?Sized>(pool: &NodePool, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; pool.k()];
    for node in index::sample(rng, pool.n, pool.m) {
        counts[pool.answer(node)] += 1;
    }
    counts
}

/// Decision boundary `ln((1−δ)/δ) · 2q(1−q)N(1−f_max)f_max/(1−2f_max)`, `q = m/N`.
pub fn sprt_threshold(delta: f64, n: usize, m: usize, f_max: f64) -> Result<f64, BlockchainError> {
    if !(f_max > 0.0 && f_max < 0.5) {
        return Err(BlockchainError::FMax(f_max));
    }
    if m == 0 || m > n {
        return Err(BlockchainError::Batch { m, n });
    }
    let q = m as f64 / n as f64;
    let nf = n as f64;
    Ok(((1.0 - delta) / delta).ln() * 2.0 * q * (1.0 - q) * nf * (1.0 - f_max) * f_max / (1.0 - 2.0 * f_max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SprtState {
    /// `l_i = Σ_t (2c_{i,t} − m)·m`, exact in integers.
    pub l: Vec<i64>,
    pub threshold: f64,
    pub steps: u64,
}

impl SprtState {
    pub fn new(k: usize, threshold: f64) -> Self {
        SprtState { l: vec![0; k], threshold, steps: 0 }
    }

    /// Folds one batch into the statistics and declares the lowest-index
    /// answer whose statistic exceeds the threshold.
    pub fn step(&mut self, counts: &[u64]) -> Verdict {
        let m: u64 = counts.iter().sum();
        let m = m as i64;
        for (l, &c) in self.l.iter_mut().zip(counts) {
            *l += (2 * c as i64 - m) * m;
        }
        self.steps += 1;
        match self.l.iter().position(|&l| l as f64 > self.threshold) {
            Some(i) => Verdict::Declare(i),
            None => Verdict::Continue,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Policy {
    Sprt,
    Ppr1v1,
    Ppr1vr,
    PprAdaptive,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Sprt, Policy::Ppr1v1, Policy::Ppr1vr, Policy::PprAdaptive];

    pub fn token(self) -> &'static str {
        match self {
            Policy::Sprt => "sprt",
            Policy::Ppr1v1 => "ppr-1v1",
            Policy::Ppr1vr => "ppr-1vr",
            Policy::PprAdaptive => "ppr-adaptive",
        }
    }

    fn rule(self) -> Option<RuleConfig> {
        match self {
            Policy::Sprt => None,
            Policy::Ppr1v1 => Some(RuleConfig::Ppr1v1),
            Policy::Ppr1vr => Some(RuleConfig::OneVsRest(crate::bounds::BoundKind::Ppr)),
            Policy::PprAdaptive => Some(RuleConfig::PprAdaptive),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Policy {
    type Err = BlockchainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL.into_iter().find(|p| p.token() == s).ok_or_else(|| BlockchainError::UnknownPolicy(s.to_string()))
    }
}

impl TryFrom<String> for Policy {
    type Error = BlockchainError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Policy> for String {
    fn from(p: Policy) -> String {
        p.token().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VerificationRecord {
    pub samples: u64,
    pub declared: usize,
    pub correct: bool,
}

/// Polls batches until `policy` declares. Every node report counts as one
/// sample; PPR policies ignore `f_max`.
pub fn run_verification(
    pool: &NodePool,
    policy: Policy,
    delta: f64,
    f_max: f64,
    stream: SeededStream,
    max_samples: u64,
) -> Result<VerificationRecord, BlockchainError> {
    let mut rng = stream.rng();
    let m = pool.m() as u64;
    let mut samples = 0;
    let finish = |samples, declared| VerificationRecord { samples, declared, correct: declared == CORRECT };
    match policy.rule() {
        None => {
            let mut sprt = SprtState::new(pool.k(), sprt_threshold(delta, pool.n(), pool.m(), f_max)?);
            while samples < max_samples {
                let counts = draw_batch(pool, &mut rng);
                samples += m;
                if let Verdict::Declare(i) = sprt.step(&counts) {
                    return Ok(finish(samples, i));
                }
            }
        }
        Some(rule) => {
            let mut state = rule.build(pool.k(), delta)?;
            while samples < max_samples {
                for node in index::sample(&mut rng, pool.n, pool.m) {
                    state.observe(pool.answer(node));
                }
                samples += m;
                if let Verdict::Declare(i) = state.check() {
                    return Ok(finish(samples, i));
                }
            }
        }
    }
    Err(BlockchainError::SampleCap { policy, cap: max_samples })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub f: f64,
    pub policy: Policy,
    pub runs: u64,
    pub mean_samples: f64,
    pub stderr_samples: f64,
    pub error_rate: f64,
}

/// Parameters shared by every cell of an f sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub pool: NodePool,
    pub delta: f64,
    pub f_max: f64,
    pub runs: u64,
    pub master_seed: u64,
    /// Per-run sample cap; a run hitting it fails the sweep.
    pub max_samples: u64,
}

/// Runs every `(f, policy)` cell. Run `r` at the `i`-th f value uses stream
/// `(i << 32) | r` for every policy, so policies see the same node draws.
pub fn sweep_f(cfg: &SweepConfig, fs: &[f64], policies: &[Policy]) -> Result<Vec<SweepRow>, BlockchainError> {
    let mut rows = Vec::with_capacity(fs.len() * policies.len());
    for (fi, &f) in fs.iter().enumerate() {
        let pool = cfg.pool.with_f(f)?;
        for &policy in policies {
            let records = (0..cfg.runs)
                .into_par_iter()
                .map(|r| {
                    let stream = derive_stream(cfg.master_seed, ((fi as u64) << 32) | r);
                    run_verification(&pool, policy, cfg.delta, cfg.f_max, stream, cfg.max_samples)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let samples: Vec<f64> = records.iter().map(|r| r.samples as f64).collect();
            let (mean, se) = mean_stderr(&samples);
            let errors = records.iter().filter(|r| !r.correct).count();
            rows.push(SweepRow {
                f,
                policy,
                runs: cfg.runs,
                mean_samples: mean,
                stderr_samples: se,
                error_rate: errors as f64 / cfg.runs as f64,
            });
        }
    }
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: [&str; 6] = ["f", "policy", "runs", "mean_samples", "stderr_samples", "error_rate"];

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), BlockchainError> {
    let wrap = |source| BlockchainError::Csv { path: path.display().to_string(), source };
    let file = std::fs::File::create(path).map_err(|e| wrap(e.into()))?;
    write_sweep(file, rows).map_err(wrap)
}

/// Sweep CSV to any writer.
pub fn write_sweep<W: std::io::Write>(out: W, rows: &[SweepRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.f.to_string(),
            r.policy.to_string(),
            r.runs.to_string(),
            r.mean_samples.to_string(),
            r.stderr_samples.to_string(),
            r.error_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
