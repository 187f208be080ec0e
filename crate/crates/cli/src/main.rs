use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ppr_mode::blockchain::{self, AnswerModel, NodePool, Policy, SweepConfig};
use ppr_mode::elections::{self, DcbForm, ElectionOptions, SelectionPolicy};
use ppr_mode::harness::{self, ExperimentSpec, Figure1Sweep, OutputPaths, SummaryRow};
use ppr_mode::instances::DiscreteInstance;
use ppr_mode::stopping::{RuleConfig, DEFAULT_SAMPLE_CAP};
use ppr_mode::theory::{self, BoundReport, ConjectureForm};

#[derive(Parser)]
#[command(name = "ppr-mode", version, about = "Sequential mode estimation: simulators and calculators")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed; trial i uses stream i of this seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Replications per configuration.
    #[arg(long, global = true)]
    reps: Option<u64>,
    /// Output CSV path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap replications for quick runs.
    #[arg(long, global = true)]
    fast: bool,
}

impl Global {
    fn reps(&self, default: u64) -> u64 {
        let reps = self.reps.unwrap_or(default);
        if self.fast {
            reps.min(harness::FAST_REPS)
        } else {
            reps
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Replicated mode estimation on one instance.
    ModeSim {
        /// Comma-separated probabilities, e.g. 0.5,0.25,0.25.
        #[arg(long)]
        probs: DiscreteInstance,
        #[arg(long, default_value = "ppr-1v1")]
        rule: RuleConfig,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        /// Run the stopping check every this many samples.
        #[arg(long, default_value_t = 1)]
        check_every: u64,
    },
    /// Bernoulli comparison of PPR against the baseline engines.
    Figure1 {
        #[arg(long, value_enum, default_value_t = Axis::P1)]
        sweep: Axis,
        /// Swept values; defaults depend on the axis.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Fixed δ for the p1 sweep.
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        /// Fixed p1 for the δ sweep.
        #[arg(long, default_value_t = 0.6)]
        p1: f64,
    },
    /// The six benchmark instances under three engines and both schemes.
    Table1,
    /// Closed-form sample-complexity bounds.
    Bounds {
        #[arg(long)]
        p1: f64,
        #[arg(long)]
        p2: f64,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
    },
    /// Numeric checks of the supporting inequalities.
    Verify {
        #[command(subcommand)]
        check: VerifyCommand,
    },
    /// Indirect-election winner forecasting.
    ElectionSim {
        /// `constituency,party,votes` CSV; the bundled synthetic election when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "dcb")]
        policy: SelectionPolicy,
        #[arg(long, default_value = "ppr-1v1")]
        rule: RuleConfig,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        #[arg(long, default_value_t = elections::DEFAULT_BATCH)]
        batch: u64,
        /// Number of seeds; overrides --reps.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, default_value = "verbatim")]
        dcb_form: DcbForm,
    },
    /// Byzantine verification sweep over the true faulty fraction.
    BlockchainSim {
        #[arg(long, default_value_t = 1600)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        m: usize,
        #[arg(long, default_value_t = 0.005)]
        delta: f64,
        #[arg(long, default_value_t = 0.1)]
        fmax: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.15,0.2,0.25,0.3")]
        f: Vec<f64>,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_value = "sprt,ppr-1v1,ppr-1vr,ppr-adaptive")]
        policy: Vec<Policy>,
        /// Runs per cell; overrides --reps.
        #[arg(long)]
        runs: Option<u64>,
        /// Per-run sample cap.
        #[arg(long, default_value_t = DEFAULT_SAMPLE_CAP)]
        max_samples: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    P1,
    Delta,
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Beta-function inequality behind the 1v1-before-1vr ordering.
    Conjecture {
        #[arg(long, default_value_t = 30)]
        x_max: u64,
        #[arg(long, default_value_t = 30)]
        y_max: u64,
        #[arg(long, default_value_t = 30)]
        f_max: u64,
        /// Use the (K − 1)/K factor instead of the strong form.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Monotonicity of the Beta density at one half.
    Monotonic {
        #[arg(long, default_value_t = 200)]
        a_max: u64,
        #[arg(long, default_value_t = 200)]
        b_max: u64,
    },
    /// Constant chain of the 1v1 upper bound for one competitor.
    Thm3Margin {
        #[arg(long)]
        p1: f64,
        #[arg(long)]
        p2: f64,
        #[arg(long)]
        pj: f64,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::ModeSim { probs, rule, delta, check_every } => {
            let mut spec = ExperimentSpec::new(&probs.to_string(), probs, rule, delta, g.reps(100)).seed(g.seed);
            spec.check_every = check_every;
            spec.output =
                g.out.as_ref().map(|csv| OutputPaths { jsonl: csv.with_extension("jsonl"), csv: csv.clone() });
            let res = harness::run_experiment(&spec)?;
            if spec.output.is_none() {
                print_summary(&[res.summary])?;
            }
        }
        Command::Figure1 { sweep, values, delta, p1 } => {
            let sweep = match sweep {
                Axis::P1 => Figure1Sweep::P1 {
                    values: or_default(values, &[0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95]),
                    delta,
                },
                Axis::Delta => Figure1Sweep::Delta { values: or_default(values, &[0.1, 0.05, 0.01, 0.005, 0.001]), p1 },
            };
            let rows = harness::figure1_sweep(&sweep, g.reps(100), g.seed)?;
            emit_summary(g.out.as_deref(), &rows)?;
        }
        Command::Table1 => {
            let rows = harness::table1_suite(g.reps.unwrap_or(100), g.fast, g.seed)?;
            emit_summary(g.out.as_deref(), &rows)?;
        }
        Command::Bounds { p1, p2, k, delta } => {
            let report = BoundReport::new(p1, p2, k, delta)?;
            println!("{report}");
            println!();
            println!("{}", BoundReport::CSV_HEADER);
            println!("{}", report.csv_row());
        }
        Command::Verify { check } => verify(check)?,
        Command::ElectionSim { data, policy, rule, delta, batch, seeds, dcb_form } => {
            let instance = match &data {
                Some(path) => elections::load_election_csv(path)?,
                None => elections::synthetic_instance(),
            };
            let seeds = seeds.unwrap_or_else(|| g.reps(10));
            let opts = ElectionOptions { batch, dcb_form, ..Default::default() };
            let records = elections::run_election_seeds(&instance, policy, rule, delta, seeds, g.seed, &opts)?;
            match &g.out {
                Some(path) => elections::write_election_csv(path, &records)?,
                None => elections::write_elections(std::io::stdout().lock(), &records)?,
            }
        }
        Command::BlockchainSim { n, m, delta, fmax, f, k, policy, runs, max_samples } => {
            let model = AnswerModel::for_k(k)?;
            let pool = NodePool::new(n, 0.0, m, model)?;
            let runs = runs.unwrap_or_else(|| g.reps(5000));
            let cfg = SweepConfig { pool, delta, f_max: fmax, runs, master_seed: g.seed, max_samples };
            let rows = blockchain::sweep_f(&cfg, &f, &policy)?;
            match &g.out {
                Some(path) => blockchain::write_sweep_csv(path, &rows)?,
                None => blockchain::write_sweep(std::io::stdout().lock(), &rows)?,
            }
        }
    }
    Ok(())
}

fn verify(check: VerifyCommand) -> Result<()> {
    match check {
        VerifyCommand::Conjecture { x_max, y_max, f_max, k } => {
            let form = match k {
                Some(k) if k >= 2 => ConjectureForm::KFactor(k),
                Some(k) => bail!("--k must be at least 2, got {k}"),
                None => ConjectureForm::Strong,
            };
            let failures = theory::verify_1v1_1vr_conjecture(x_max, y_max, f_max, form);
            for fail in &failures {
                println!("x={} y={} f={} margin={:e}", fail.x, fail.y, fail.f, fail.margin);
            }
            if !failures.is_empty() {
                bail!("{} grid points violate the inequality", failures.len());
            }
            println!("holds for 1 <= y < x <= {x_max}, y <= {y_max}, 1 <= f <= {f_max}");
        }
        VerifyCommand::Monotonic { a_max, b_max } => {
            if !theory::verify_beta_monotonicity(a_max, b_max) {
                bail!("monotonicity fails below a = {a_max}, b = {b_max}");
            }
            println!("monotone for 1 <= b <= a, a <= {a_max}, b <= {b_max}");
        }
        VerifyCommand::Thm3Margin { p1, p2, pj, k, delta } => {
            if !theory::verify_thm3_margin(p1, p2, pj, k, delta) {
                bail!("margin inequality fails at p1={p1} p2={p2} pj={pj} k={k} delta={delta}");
            }
            println!("margin inequality holds");
        }
    }
    Ok(())
}

fn or_default(values: Vec<f64>, default: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        default.to_vec()
    } else {
        values
    }
}

fn emit_summary(out: Option<&Path>, rows: &[SummaryRow]) -> Result<()> {
    match out {
        Some(path) => harness::write_summary_csv(path, rows)?,
        None => print_summary(rows)?,
    }
    Ok(())
}

fn print_summary(rows: &[SummaryRow]) -> Result<()> {
    harness::write_summary(std::io::stdout().lock(), rows)?;
    Ok(())
}
