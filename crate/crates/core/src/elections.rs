//! Indirect-election winner forecasting.
//!
//! Each constituency is a mode-estimation problem over the parties contesting
//! it. A polling policy (round-robin or DCB) chooses which constituencies to
//! sample; a constituency resolves when its stopping rule declares, and the
//! election ends once one party's guaranteed seats exceed every other party's
//! possible seats.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::{BoundEngine, BoundKind};
use crate::instances::{derive_stream, DiscreteInstance, SeededStream, TrialRng};
use crate::stopping::{RuleConfig, RuleState, StoppingError, Verdict, DEFAULT_SAMPLE_CAP};

/// Voter samples drawn per selected constituency per step.
pub const DEFAULT_BATCH: u64 = 200;

#[derive(Debug, Error)]
pub enum ElectionError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("the file has no constituencies")]
    Empty,
    #[error("constituency {0:?} has a tie for the most votes")]
    TiedConstituency(String),
    #[error("constituency {0:?} has no votes")]
    NoVotes(String),
    #[error("parties {0:?} tie for the most seats; the election has no unique winner")]
    SeatTie(Vec<String>),
    #[error("rule {0} has no confidence bounds; use <engine>-1v1 or <engine>-1vr")]
    UnsupportedRule(RuleConfig),
    #[error("unknown policy {0:?}; expected rr or dcb")]
    UnknownPolicy(String),
    #[error("unknown DCB form {0:?}; expected verbatim or swapped")]
    UnknownDcbForm(String),
    #[error("batch size must be at least 1")]
    Batch,
    #[error("election did not finish within {0} samples")]
    SampleCap(u64),
    #[error("every constituency resolved without a winner")]
    Undecided,
    #[error(transparent)]
    Stopping(#[from] StoppingError),
    #[error("writing {path}: {source}")]
    Csv { path: String, source: csv::Error },
}

/// One constituency, restricted to the parties listed for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Constituency {
    pub id: String,
    /// Global party indices, ascending.
    pub parties: Vec<usize>,
    /// Votes per listed party, aligned with `parties`.
    pub votes: Vec<u64>,
    /// Global index of the party with the most votes.
    pub winner: usize,
    dist: DiscreteInstance,
}

impl Constituency {
    pub fn distribution(&self) -> &DiscreteInstance {
        &self.dist
    }

    fn local(&self, party: usize) -> Option<usize> {
        self.parties.binary_search(&party).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectionInstance {
    /// Party names in order of first appearance.
    pub parties: Vec<String>,
    /// Constituencies in order of first appearance; this order is the id order.
    pub constituencies: Vec<Constituency>,
}

impl ElectionInstance {
    /// Builds an instance from `(constituency, party, votes)` rows; repeated
    /// pairs are summed.
    pub fn from_rows<'a, I>(rows: I) -> Result<Self, ElectionError>
    where
        I: IntoIterator<Item = (&'a str, &'a str, u64)>,
    {
        let mut parties = Vec::new();
        let mut party_ix: HashMap<String, usize> = HashMap::new();
        let mut order: Vec<String> = Vec::new();
        let mut tallies: HashMap<String, HashMap<usize, u64>> = HashMap::new();
        for (c, p, v) in rows {
            let pi = *party_ix.entry(p.to_string()).or_insert_with(|| {
                parties.push(p.to_string());
                parties.len() - 1
            });
            let entry = tallies.entry(c.to_string()).or_insert_with(|| {
                order.push(c.to_string());
                HashMap::new()
            });
            *entry.entry(pi).or_insert(0) += v;
        }
        if order.is_empty() {
            return Err(ElectionError::Empty);
        }
        let mut constituencies = Vec::with_capacity(order.len());
        for id in order {
            let mut rows: Vec<(usize, u64)> = tallies.remove(&id).expect("seen").into_iter().collect();
            rows.sort_unstable();
            if rows.len() == 1 {
                // An uncontested seat still needs a second value to test against.
                let absent = (0..).find(|p| *p != rows[0].0).expect("some index");
                rows.push((absent, 0));
                rows.sort_unstable();
            }
            let total: u64 = rows.iter().map(|r| r.1).sum();
            if total == 0 {
                return Err(ElectionError::NoVotes(id));
            }
            let max = rows.iter().map(|r| r.1).max().expect("non-empty");
            if rows.iter().filter(|r| r.1 == max).count() > 1 {
                return Err(ElectionError::TiedConstituency(id));
            }
            let winner = rows.iter().find(|r| r.1 == max).expect("max exists").0;
            let probs = rows.iter().map(|r| r.1 as f64 / total as f64).collect();
            let labels = rows.iter().map(|r| parties.get(r.0).cloned().unwrap_or_default()).collect();
            let dist = DiscreteInstance::with_labels(labels, probs)
                .map_err(|_| ElectionError::TiedConstituency(id.clone()))?;
            constituencies.push(Constituency {
                id,
                parties: rows.iter().map(|r| r.0).collect(),
                votes: rows.iter().map(|r| r.1).collect(),
                winner,
                dist,
            });
        }
        // A padded party index may point past the registry when only one
        // party exists at all.
        let needed = constituencies.iter().flat_map(|c| c.parties.iter()).max().map_or(0, |m| m + 1);
        while parties.len() < needed.max(2) {
            parties.push(format!("<none-{}>", parties.len()));
        }
        let inst = ElectionInstance { parties, constituencies };
        let seats = inst.seat_counts();
        let top = *seats.iter().max().expect("parties");
        let tied: Vec<String> =
            seats.iter().enumerate().filter(|(_, &s)| s == top).map(|(i, _)| inst.parties[i].clone()).collect();
        if tied.len() > 1 {
            return Err(ElectionError::SeatTie(tied));
        }
        Ok(inst)
    }

    pub fn k(&self) -> usize {
        self.parties.len()
    }

    pub fn c(&self) -> usize {
        self.constituencies.len()
    }

    /// True seats won per party.
    pub fn seat_counts(&self) -> Vec<u64> {
        let mut seats = vec![0; self.k()];
        for c in &self.constituencies {
            seats[c.winner] += 1;
        }
        seats
    }

    /// Party with the strict maximum of true seats.
    pub fn true_winner(&self) -> usize {
        let seats = self.seat_counts();
        let top = *seats.iter().max().expect("parties");
        seats.iter().position(|&s| s == top).expect("max exists")
    }
}

/// Bundled 50-constituency, six-party synthetic election.
pub const SYNTHETIC_CSV: &str = include_str!("../data/synthetic50.csv");

pub fn synthetic_instance() -> ElectionInstance {
    read_election_csv(SYNTHETIC_CSV.as_bytes()).expect("bundled data is valid")
}

/// Reads a `constituency,party,votes` CSV.
pub fn load_election_csv(path: &Path) -> Result<ElectionInstance, ElectionError> {
    let file =
        std::fs::File::open(path).map_err(|source| ElectionError::Io { path: path.display().to_string(), source })?;
    read_election_csv(file)
}

pub fn read_election_csv<R: std::io::Read>(reader: R) -> Result<ElectionInstance, ElectionError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| ElectionError::Parse { line: 1, msg: e.to_string() })?.clone();
    let want = ["constituency", "party", "votes"];
    if header.len() != 3 || header.iter().zip(want).any(|(h, w)| h != w) {
        return Err(ElectionError::Parse {
            line: 1,
            msg: format!("expected header constituency,party,votes, got {header:?}"),
        });
    }
    let mut rows: Vec<(String, String, u64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            ElectionError::Parse { line, msg: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(ElectionError::Parse { line, msg: format!("expected 3 fields, got {}", rec.len()) });
        }
        let votes = rec[2]
            .parse::<u64>()
            .map_err(|e| ElectionError::Parse { line, msg: format!("votes {:?}: {e}", &rec[2]) })?;
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(ElectionError::Parse { line, msg: "empty constituency or party".into() });
        }
        rows.push((rec[0].to_string(), rec[1].to_string(), votes));
    }
    ElectionInstance::from_rows(rows.iter().map(|(c, p, v)| (c.as_str(), p.as_str(), *v)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectionPolicy {
    RoundRobin,
    Dcb,
}

impl SelectionPolicy {
    pub fn token(self) -> &'static str {
        match self {
            SelectionPolicy::RoundRobin => "rr",
            SelectionPolicy::Dcb => "dcb",
        }
    }
}

impl fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for SelectionPolicy {
    type Err = ElectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rr" => Ok(SelectionPolicy::RoundRobin),
            "dcb" => Ok(SelectionPolicy::Dcb),
            _ => Err(ElectionError::UnknownPolicy(s.to_string())),
        }
    }
}

/// Whether DCB compares parties pairwise or each party against the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    OneVsOne,
    OneVsRest,
}

impl Scheme {
    fn of(rule: RuleConfig) -> Result<Self, ElectionError> {
        match rule {
            RuleConfig::Ppr1v1 | RuleConfig::OneVsOne(_) => Ok(Scheme::OneVsOne),
            RuleConfig::OneVsRest(_) => Ok(Scheme::OneVsRest),
            RuleConfig::PprMd | RuleConfig::PprAdaptive => Err(ElectionError::UnsupportedRule(rule)),
        }
    }
}

/// Reading of the 1v1 DCB scores. `Verbatim` subtracts the lower bound of
/// the same ordered pair (`UCB(c,a,j) − LCB(c,a,j)`, an interval width);
/// `Swapped` subtracts the reversed pair (`UCB(c,a,j) − LCB(c,j,a)`), the
/// pairwise analogue of the 1vr score. 1vr scores are unaffected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DcbForm {
    #[default]
    Verbatim,
    Swapped,
}

impl DcbForm {
    pub fn token(self) -> &'static str {
        match self {
            DcbForm::Verbatim => "verbatim",
            DcbForm::Swapped => "swapped",
        }
    }
}

impl fmt::Display for DcbForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for DcbForm {
    type Err = ElectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "verbatim" => Ok(DcbForm::Verbatim),
            "swapped" => Ok(DcbForm::Swapped),
            _ => Err(ElectionError::UnknownDcbForm(s.to_string())),
        }
    }
}

/// Per-constituency confidence bounds, refreshed only after the constituency
/// is sampled. They drive both DCB scores and party elimination.
#[derive(Debug, Clone)]
enum BoundCache {
    /// Bounds on `i` beating `j`, row-major over local indices.
    Pairs { lcb: Vec<f64>, ucb: Vec<f64> },
    /// Per-party `(LCB, UCB)` against the rest.
    Marginals { lcb: Vec<f64>, ucb: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Seat {
    rule: RuleState,
    engine: BoundEngine,
    /// Global index of the declared winner.
    resolved: Option<usize>,
    /// Local index of the current sample leader, if sampled and unresolved.
    leader: Option<usize>,
    /// Local parties whose bounds have separated below a rival's.
    out: Vec<bool>,
    cache: BoundCache,
}

impl Seat {
    fn refresh(&mut self) {
        let counts = self.rule.tally().counts();
        let k = counts.len();
        match &mut self.cache {
            BoundCache::Pairs { lcb, ucb } => {
                for i in 0..k {
                    for j in (0..k).filter(|&j| j != i) {
                        let iv = self.engine.bounds(counts[i], counts[i] + counts[j]);
                        lcb[i * k + j] = iv.lo;
                        ucb[i * k + j] = iv.hi;
                    }
                }
            }
            BoundCache::Marginals { lcb, ucb } => {
                let t = self.rule.tally().total();
                for i in 0..k {
                    let iv = self.engine.bounds(counts[i], t);
                    lcb[i] = iv.lo;
                    ucb[i] = iv.hi;
                }
            }
        }
    }

    /// Whether some rival's bounds have separated above local party `i`.
    fn beaten(&self, i: usize) -> bool {
        match &self.cache {
            BoundCache::Pairs { lcb, .. } => {
                let k = self.out.len();
                (0..k).any(|j| j != i && lcb[j * k + i] > 0.5)
            }
            BoundCache::Marginals { lcb, ucb } => (0..lcb.len()).any(|j| j != i && lcb[j] >= ucb[i]),
        }
    }
}

/// Aggregate wins, losses and leads, plus the per-constituency rule states.
#[derive(Debug, Clone)]
pub struct AggregateState {
    wins: Vec<u64>,
    losses: Vec<u64>,
    leads: Vec<u64>,
    seats: Vec<Seat>,
    scheme: Scheme,
    dcb_form: DcbForm,
    samples: u64,
    resolved: usize,
    rr_cursor: usize,
}

impl AggregateState {
    /// Fresh state; each constituency gets mistake probability `delta / C`.
    pub fn new(instance: &ElectionInstance, rule: RuleConfig, delta: f64) -> Result<Self, ElectionError> {
        let scheme = Scheme::of(rule)?;
        let per_seat = delta / instance.c() as f64;
        let engine_kind = rule.engine();
        let seats = instance
            .constituencies
            .iter()
            .map(|c| {
                let k = c.parties.len();
                let alpha = match scheme {
                    Scheme::OneVsOne => per_seat / (k - 1) as f64,
                    Scheme::OneVsRest => per_seat / k as f64,
                };
                let cache = match scheme {
                    Scheme::OneVsOne => BoundCache::Pairs { lcb: vec![0.0; k * k], ucb: vec![1.0; k * k] },
                    Scheme::OneVsRest => BoundCache::Marginals { lcb: vec![0.0; k], ucb: vec![1.0; k] },
                };
                Ok(Seat {
                    rule: rule.build(k, per_seat)?,
                    engine: BoundEngine::new(engine_kind, alpha).map_err(StoppingError::from)?,
                    resolved: None,
                    leader: None,
                    out: vec![false; k],
                    cache,
                })
            })
            .collect::<Result<Vec<_>, ElectionError>>()?;
        let k = instance.k();
        // A party not on a constituency's list has already lost it.
        let mut losses = vec![instance.c() as u64; k];
        for c in &instance.constituencies {
            for &p in &c.parties {
                losses[p] -= 1;
            }
        }
        Ok(AggregateState {
            wins: vec![0; k],
            losses,
            leads: vec![0; k],
            seats,
            scheme,
            dcb_form: DcbForm::Verbatim,
            samples: 0,
            resolved: 0,
            rr_cursor: 0,
        })
    }

    pub fn with_dcb_form(mut self, form: DcbForm) -> Self {
        self.dcb_form = form;
        self
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn wins(&self) -> &[u64] {
        &self.wins
    }

    pub fn losses(&self) -> &[u64] {
        &self.losses
    }

    pub fn leads(&self) -> &[u64] {
        &self.leads
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn seats_resolved(&self) -> usize {
        self.resolved
    }

    pub fn c(&self) -> usize {
        self.seats.len()
    }

    pub fn lcb(&self, party: usize) -> u64 {
        self.wins[party]
    }

    pub fn ucb(&self, party: usize) -> u64 {
        self.c() as u64 - self.losses[party]
    }

    pub fn is_open(&self, c: usize) -> bool {
        self.seats[c].resolved.is_none()
    }

    /// Whether `party` has neither won nor lost constituency `c`.
    pub fn in_contention(&self, instance: &ElectionInstance, c: usize, party: usize) -> bool {
        let seat = &self.seats[c];
        seat.resolved.is_none() && instance.constituencies[c].local(party).is_some_and(|p| !seat.out[p])
    }

    /// Declared winner of constituency `c`, if resolved.
    pub fn resolved_winner(&self, c: usize) -> Option<usize> {
        self.seats[c].resolved
    }

    /// Sample counts in constituency `c`, aligned with its party list.
    pub fn counts(&self, c: usize) -> &[u64] {
        self.seats[c].rule.tally().counts()
    }
}

/// Next open constituency in id order, cycling.
pub fn rr_select(state: &mut AggregateState) -> Option<usize> {
    let c = state.c();
    let pick = (0..c).map(|o| (state.rr_cursor + o) % c).find(|&i| state.is_open(i))?;
    state.rr_cursor = (pick + 1) % c;
    Some(pick)
}

fn argmax_lowest<I: Iterator<Item = (usize, f64)>>(it: I) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in it {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// The two contender parties `(a, b)`.
pub fn dcb_contenders(state: &AggregateState) -> (usize, usize) {
    let k = state.wins.len();
    let a = argmax_lowest((0..k).map(|i| (i, (state.wins[i] + state.leads[i]) as f64))).expect("parties");
    let b = argmax_lowest((0..k).filter(|&i| i != a).map(|i| (i, state.ucb(i) as f64))).expect("two parties");
    (a, b)
}

/// DCB constituency picks `(c1, c2)` for the contender of each slot; a slot
/// with no constituency left in contention falls back to round-robin.
pub fn dcb_select(state: &mut AggregateState, instance: &ElectionInstance) -> Option<(usize, usize)> {
    let (a, b) = dcb_contenders(state);
    let form = state.dcb_form;
    let score = |c: usize, party: usize, first: bool| -> Option<f64> {
        let seat = &state.seats[c];
        if !state.in_contention(instance, c, party) {
            return None;
        }
        let p = instance.constituencies[c].local(party)?;
        let k = instance.constituencies[c].parties.len();
        let others = (0..k).filter(move |&j| j != p);
        Some(match (&seat.cache, first) {
            (BoundCache::Pairs { lcb, ucb }, true) => {
                let lo = |j: usize| match form {
                    DcbForm::Verbatim => lcb[p * k + j],
                    DcbForm::Swapped => lcb[j * k + p],
                };
                others.map(|j| ucb[p * k + j] - lo(j)).fold(f64::INFINITY, f64::min)
            }
            (BoundCache::Pairs { lcb, ucb }, false) => {
                let lo = |j: usize| match form {
                    DcbForm::Verbatim => lcb[j * k + p],
                    DcbForm::Swapped => lcb[p * k + j],
                };
                others.map(|j| ucb[j * k + p] - lo(j)).fold(f64::NEG_INFINITY, f64::max)
            }
            (BoundCache::Marginals { lcb, ucb }, true) => others.map(|j| ucb[p] - lcb[j]).fold(f64::INFINITY, f64::min),
            (BoundCache::Marginals { lcb, ucb }, false) => {
                others.map(|j| ucb[j] - lcb[p]).fold(f64::NEG_INFINITY, f64::max)
            }
        })
    };
    let pick = |party: usize, first: bool| {
        argmax_lowest((0..state.c()).filter_map(|c| score(c, party, first).map(|v| (c, v))))
    };
    let c1 = pick(a, true);
    let c2 = pick(b, false);
    let c1 = match c1 {
        Some(c) => c,
        None => rr_select(state)?,
    };
    let c2 = match c2 {
        Some(c) => c,
        None => rr_select(state)?,
    };
    Some((c1, c2))
}

/// Declares party `i` once `wins_i > C − losses_j` for every `j ≠ i`.
pub fn aggregate_check(state: &AggregateState) -> Verdict {
    let k = state.wins.len();
    // Only the party with the most wins can pass.
    let i = argmax_lowest((0..k).map(|i| (i, state.wins[i] as f64))).expect("parties");
    if (0..k).filter(|&j| j != i).all(|j| state.wins[i] > state.ucb(j)) {
        Verdict::Declare(i)
    } else {
        Verdict::Continue
    }
}

fn sample_seat(state: &mut AggregateState, instance: &ElectionInstance, c: usize, batch: u64, rng: &mut TrialRng) {
    let con = &instance.constituencies[c];
    let seat = &mut state.seats[c];
    for _ in 0..batch {
        seat.rule.observe(con.dist.sample(rng));
    }
    state.samples += batch;
    let old_leader = seat.leader.take();
    if let Some(l) = old_leader {
        state.leads[con.parties[l]] -= 1;
    }
    match seat.rule.check() {
        Verdict::Declare(local) => {
            let winner = con.parties[local];
            seat.resolved = Some(winner);
            state.resolved += 1;
            state.wins[winner] += 1;
            for j in 0..seat.out.len() {
                if j != local && !seat.out[j] {
                    seat.out[j] = true;
                    state.losses[con.parties[j]] += 1;
                }
            }
        }
        Verdict::Continue => {
            let leader = seat.rule.tally().first();
            seat.leader = Some(leader);
            state.leads[con.parties[leader]] += 1;
            seat.refresh();
            for j in 0..seat.out.len() {
                if !seat.out[j] && seat.beaten(j) {
                    seat.out[j] = true;
                    state.losses[con.parties[j]] += 1;
                }
            }
        }
    }
}

/// One polling step: sample `batch` voters from each selected constituency.
/// When both DCB picks coincide the constituency is sampled once.
pub fn election_step(
    state: &mut AggregateState,
    instance: &ElectionInstance,
    policy: SelectionPolicy,
    batch: u64,
    rng: &mut TrialRng,
) -> Verdict {
    match policy {
        SelectionPolicy::RoundRobin => {
            if let Some(c) = rr_select(state) {
                sample_seat(state, instance, c, batch, rng);
            }
        }
        SelectionPolicy::Dcb => {
            if let Some((c1, c2)) = dcb_select(state, instance) {
                sample_seat(state, instance, c1, batch, rng);
                if c2 != c1 && state.is_open(c2) {
                    sample_seat(state, instance, c2, batch, rng);
                }
            }
        }
    }
    aggregate_check(state)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElectionRecord {
    pub policy: String,
    pub rule: String,
    pub scheme: String,
    pub delta: f64,
    pub seed: u64,
    pub samples: u64,
    pub winner: String,
    pub seats_resolved: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectionOptions {
    pub batch: u64,
    pub max_samples: u64,
    pub dcb_form: DcbForm,
}

impl Default for ElectionOptions {
    fn default() -> Self {
        ElectionOptions { batch: DEFAULT_BATCH, max_samples: DEFAULT_SAMPLE_CAP, dcb_form: DcbForm::Verbatim }
    }
}

/// Polls until an overall winner is declared.
pub fn run_election(
    instance: &ElectionInstance,
    policy: SelectionPolicy,
    rule: RuleConfig,
    delta: f64,
    stream: SeededStream,
    opts: &ElectionOptions,
) -> Result<ElectionRecord, ElectionError> {
    if opts.batch == 0 {
        return Err(ElectionError::Batch);
    }
    let mut state = AggregateState::new(instance, rule, delta)?.with_dcb_form(opts.dcb_form);
    let mut rng = stream.rng();
    loop {
        if state.samples >= opts.max_samples {
            return Err(ElectionError::SampleCap(opts.max_samples));
        }
        if state.resolved == state.c() {
            return Err(ElectionError::Undecided);
        }
        if let Verdict::Declare(w) = election_step(&mut state, instance, policy, opts.batch, &mut rng) {
            return Ok(ElectionRecord {
                policy: policy.to_string(),
                rule: rule.engine().to_string(),
                scheme: rule.scheme().to_string(),
                delta,
                seed: stream.stream_index,
                samples: state.samples,
                winner: instance.parties[w].clone(),
                seats_resolved: state.resolved,
                correct: w == instance.true_winner(),
            });
        }
    }
}

/// Runs seeds `0..seeds` of one configuration in parallel, in seed order.
pub fn run_election_seeds(
    instance: &ElectionInstance,
    policy: SelectionPolicy,
    rule: RuleConfig,
    delta: f64,
    seeds: u64,
    master_seed: u64,
    opts: &ElectionOptions,
) -> Result<Vec<ElectionRecord>, ElectionError> {
    (0..seeds)
        .into_par_iter()
        .map(|s| run_election(instance, policy, rule, delta, derive_stream(master_seed, s), opts))
        .collect()
}

pub const ELECTION_CSV_HEADER: [&str; 9] =
    ["policy", "rule", "scheme", "delta", "seed", "samples", "winner", "seats_resolved", "correct"];

pub fn write_election_csv(path: &Path, records: &[ElectionRecord]) -> Result<(), ElectionError> {
    let wrap = |source| ElectionError::Csv { path: path.display().to_string(), source };
    let file = std::fs::File::create(path).map_err(|e| wrap(e.into()))?;
    write_elections(file, records).map_err(wrap)
}

/// Election records as CSV to any writer.
pub fn write_elections<W: std::io::Write>(out: W, records: &[ElectionRecord]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(ELECTION_CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// The engine-backed rules usable in elections.
pub fn election_rules() -> Vec<RuleConfig> {
    let mut rules = Vec::new();
    for kind in [BoundKind::Ppr, BoundKind::KlSn, BoundKind::A1Bernstein] {
        rules.push(if kind == BoundKind::Ppr { RuleConfig::Ppr1v1 } else { RuleConfig::OneVsOne(kind) });
        rules.push(RuleConfig::OneVsRest(kind));
    }
    rules
}
