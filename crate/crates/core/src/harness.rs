//! Replicated experiments with deterministic parallelism and plain-text output.
//!
//! Trial `i` of an experiment always draws from `derive_stream(seed, i)`, and
//! results are collected in trial order, so outputs do not depend on the
//! number of worker threads.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::BoundKind;
use crate::instances::{derive_stream, DiscreteInstance};
use crate::stopping::{run_mode_estimation, RuleConfig, RunOptions, StoppingError, TrialRecord, DEFAULT_SAMPLE_CAP};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error(transparent)]
    Stopping(#[from] StoppingError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
}

/// Where an experiment writes its records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub jsonl: PathBuf,
    pub csv: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub suite: String,
    pub instance_label: String,
    pub instance: DiscreteInstance,
    pub rule: RuleConfig,
    pub delta: f64,
    pub replications: u64,
    pub master_seed: u64,
    pub check_every: u64,
    pub output: Option<OutputPaths>,
}

impl ExperimentSpec {
    pub fn new(
        instance_label: &str,
        instance: DiscreteInstance,
        rule: RuleConfig,
        delta: f64,
        replications: u64,
    ) -> Self {
        ExperimentSpec {
            suite: "mode-sim".to_string(),
            instance_label: instance_label.to_string(),
            instance,
            rule,
            delta,
            replications,
            master_seed: 0,
            check_every: 1,
            output: None,
        }
    }

    pub fn seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn suite(mut self, suite: &str) -> Self {
        self.suite = suite.to_string();
        self
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.replications == 0 {
            return Err(HarnessError::Spec("replications must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(HarnessError::Spec(format!("delta = {} must lie in (0, 1)", self.delta)));
        }
        if self.check_every == 0 {
            return Err(HarnessError::Spec("check interval must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub suite: String,
    pub instance: String,
    pub rule: String,
    pub scheme: String,
    pub delta: f64,
    pub n: u64,
    pub mean_samples: f64,
    pub stderr_samples: f64,
    pub mistake_rate: f64,
}

/// Sample mean and standard error (unbiased sd over √n); the error is 0 for
/// a single value.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty(), "mean of no values");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregates trial records under the given labels.
pub fn summarize(suite: &str, instance: &str, rule: RuleConfig, delta: f64, records: &[TrialRecord]) -> SummaryRow {
    let samples: Vec<f64> = records.iter().map(|r| r.samples as f64).collect();
    let (mean, se) = mean_stderr(&samples);
    let mistakes = records.iter().filter(|r| !r.correct).count();
    SummaryRow {
        suite: suite.to_string(),
        instance: instance.to_string(),
        rule: rule.engine().to_string(),
        scheme: rule.scheme().to_string(),
        delta,
        n: records.len() as u64,
        mean_samples: mean,
        stderr_samples: se,
        mistake_rate: mistakes as f64 / records.len() as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub summary: SummaryRow,
    pub records: Vec<TrialRecord>,
}

/// Runs the replications of `spec` and writes its outputs, if any.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    spec.validate()?;
    let opts = RunOptions { check_every: spec.check_every, max_samples: DEFAULT_SAMPLE_CAP };
    let records = (0..spec.replications)
        .into_par_iter()
        .map(|i| run_mode_estimation(&spec.instance, spec.rule, spec.delta, derive_stream(spec.master_seed, i), opts))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(&spec.suite, &spec.instance_label, spec.rule, spec.delta, &records);
    if let Some(out) = &spec.output {
        write_jsonl(&out.jsonl, &records)?;
        write_summary_csv(&out.csv, std::slice::from_ref(&summary))?;
    }
    Ok(ExperimentResult { summary, records })
}

/// Runs every rule on the same streams of one instance.
pub fn run_rules(
    suite: &str,
    label: &str,
    instance: &DiscreteInstance,
    rules: &[RuleConfig],
    delta: f64,
    reps: u64,
    seed: u64,
) -> Result<Vec<ExperimentResult>, HarnessError> {
    rules
        .iter()
        .map(|&rule| {
            let spec = ExperimentSpec::new(label, instance.clone(), rule, delta, reps).seed(seed).suite(suite);
            run_experiment(&spec)
        })
        .collect()
}

/// Which axis a Bernoulli comparison sweeps.
#[derive(Debug, Clone, PartialEq)]
pub enum Figure1Sweep {
    /// Vary `p1` at a fixed δ.
    P1 { values: Vec<f64>, delta: f64 },
    /// Vary δ at a fixed `p1`.
    Delta { values: Vec<f64>, p1: f64 },
}

/// The five engines in Bernoulli mode, ordered as in the comparison.
pub fn figure1_rules() -> [RuleConfig; 5] {
    [
        RuleConfig::Ppr1v1,
        RuleConfig::OneVsOne(BoundKind::KlSn),
        RuleConfig::OneVsOne(BoundKind::KlLucb),
        RuleConfig::OneVsOne(BoundKind::HoeffdingLucb),
        RuleConfig::OneVsOne(BoundKind::A1Bernstein),
    ]
}

/// Two-valued runs of all five engines over the sweep, on shared streams.
pub fn figure1_sweep(sweep: &Figure1Sweep, reps: u64, seed: u64) -> Result<Vec<SummaryRow>, HarnessError> {
    let cells: Vec<(f64, f64)> = match sweep {
        Figure1Sweep::P1 { values, delta } => values.iter().map(|&p| (p, *delta)).collect(),
        Figure1Sweep::Delta { values, p1 } => values.iter().map(|&d| (*p1, d)).collect(),
    };
    let mut rows = Vec::new();
    for (p1, delta) in cells {
        let inst = DiscreteInstance::new(vec![p1, 1.0 - p1]).map_err(|e| HarnessError::Spec(e.to_string()))?;
        let label = format!("p1={p1}");
        for r in run_rules("figure1", &label, &inst, &figure1_rules(), delta, reps, seed)? {
            rows.push(r.summary);
        }
    }
    Ok(rows)
}

fn repeat(head: &[f64], value: f64, times: usize) -> Vec<f64> {
    let mut v = head.to_vec();
    v.extend(std::iter::repeat_n(value, times));
    v
}

/// The six benchmark instances.
pub fn table1_instances() -> Vec<(&'static str, DiscreteInstance)> {
    let raw = [
        ("P1", vec![0.5, 0.25, 0.25]),
        ("P2", repeat(&[0.4], 0.2, 3)),
        ("P3", repeat(&[0.2], 0.1, 8)),
        ("P4", repeat(&[0.1], 0.05, 18)),
        ("P5", repeat(&[0.35, 0.33, 0.12], 0.1, 2)),
        ("P6", repeat(&[0.35, 0.33], 0.04, 8)),
    ];
    raw.into_iter().map(|(name, p)| (name, DiscreteInstance::new(p).expect("benchmark instance is valid"))).collect()
}

pub fn table1_rules() -> Vec<RuleConfig> {
    let mut rules = Vec::new();
    for kind in [BoundKind::Ppr, BoundKind::KlSn, BoundKind::A1Bernstein] {
        rules.push(if kind == BoundKind::Ppr { RuleConfig::Ppr1v1 } else { RuleConfig::OneVsOne(kind) });
        rules.push(RuleConfig::OneVsRest(kind));
    }
    rules
}

/// Replications used when `fast` is set.
pub const FAST_REPS: u64 = 20;

/// Three engines in both schemes on every benchmark instance at δ = 0.01.
pub fn table1_suite(reps: u64, fast: bool, seed: u64) -> Result<Vec<SummaryRow>, HarnessError> {
    let reps = if fast { reps.min(FAST_REPS) } else { reps };
    let mut rows = Vec::new();
    for (name, inst) in table1_instances() {
        for r in run_rules("table1", name, &inst, &table1_rules(), 0.01, reps, seed)? {
            rows.push(r.summary);
        }
    }
    Ok(rows)
}

pub const SUMMARY_CSV_HEADER: [&str; 9] =
    ["suite", "instance", "rule", "scheme", "delta", "n", "mean_samples", "stderr_samples", "mistake_rate"];

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let file =
        std::fs::File::create(path).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
    write_summary(file, rows).map_err(|source| HarnessError::Csv { path: path.display().to_string(), source })
}

/// Summary CSV to any writer.
pub fn write_summary<W: std::io::Write>(out: W, rows: &[SummaryRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.suite.clone(),
            r.instance.clone(),
            r.rule.clone(),
            r.scheme.clone(),
            r.delta.to_string(),
            r.n.to_string(),
            r.mean_samples.to_string(),
            r.stderr_samples.to_string(),
            r.mistake_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonlRecord {
    seed: u64,
    trial: u64,
    samples: u64,
    declared: usize,
    truth: usize,
    correct: bool,
}

/// One JSON object per trial, in trial order.
pub fn write_jsonl(path: &Path, records: &[TrialRecord]) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        let line = JsonlRecord {
            seed: r.seed,
            trial: r.trial,
            samples: r.samples,
            declared: r.declared,
            truth: r.truth,
            correct: r.correct,
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads records written by [`write_jsonl`].
pub fn read_jsonl(path: &Path) -> Result<Vec<TrialRecord>, HarnessError> {
    let io = |source| HarnessError::Io { path: path.display().to_string(), source };
    let text = std::fs::read_to_string(path).map_err(io)?;
    text.lines().map(|l| serde_json::from_str(l).map_err(|e| io(e.into()))).collect()
}
