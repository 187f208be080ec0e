//! Problem instances, seeded sampling and O(1) tally maintenance.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// The generator every trial draws from.
pub type TrialRng = ChaCha8Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("an instance needs at least two values, got {0}")]
    TooFewValues(usize),
    #[error("probability {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalised(f64),
    #[error("the maximum probability {0} is shared by several values; a unique mode is required")]
    TiedMode(f64),
    #[error("{labels} labels for {probs} probabilities")]
    LabelCount { labels: usize, probs: usize },
    #[error("cannot parse probability list: {0}")]
    Parse(String),
}

/// A K-valued distribution with a unique mode.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteInstance {
    labels: Vec<String>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
    true_mode: usize,
}

impl DiscreteInstance {
    /// Builds an instance labelled `v1..vK`.
    pub fn new(probs: Vec<f64>) -> Result<Self, InstanceError> {
        let labels = (1..=probs.len()).map(|i| format!("v{i}")).collect();
        Self::with_labels(labels, probs)
    }

    pub fn with_labels(labels: Vec<String>, probs: Vec<f64>) -> Result<Self, InstanceError> {
        if probs.len() < 2 {
            return Err(InstanceError::TooFewValues(probs.len()));
        }
        if labels.len() != probs.len() {
            return Err(InstanceError::LabelCount { labels: labels.len(), probs: probs.len() });
        }
        for (index, &value) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(InstanceError::OutOfRange { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(InstanceError::NotNormalised(sum));
        }
        let max = probs.iter().cloned().fold(f64::MIN, f64::max);
        if probs.iter().filter(|&&p| p == max).count() > 1 {
            return Err(InstanceError::TiedMode(max));
        }
        let true_mode = probs.iter().position(|&p| p == max).expect("non-empty");

        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cdf.push(acc);
        }
        // Pin the tail to exactly 1 from the last value with positive mass on,
        // so rounding can never route a draw to a zero-probability value.
        let last_positive = probs.iter().rposition(|&p| p > 0.0).expect("some mass");
        for c in &mut cdf[last_positive..] {
            *c = 1.0;
        }
        Ok(DiscreteInstance { labels, probs, cdf, true_mode })
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn true_mode(&self) -> usize {
        self.true_mode
    }

    /// The two largest probabilities `(p1, p2)`.
    pub fn top_two(&self) -> (f64, f64) {
        let p1 = self.probs[self.true_mode];
        let p2 = self
            .probs
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != self.true_mode)
            .map(|(_, &p)| p)
            .fold(f64::MIN, f64::max);
        (p1, p2)
    }

    /// Inverse-CDF draw of a value index.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c <= u)
    }
}

impl FromStr for DiscreteInstance {
    type Err = InstanceError;

    /// Parses a comma-separated probability list such as `0.5,0.25,0.25`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let probs = s
            .split(',')
            .map(|tok| tok.trim().parse::<f64>().map_err(|e| InstanceError::Parse(format!("{tok:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        DiscreteInstance::new(probs)
    }
}

impl fmt::Display for DiscreteInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.probs.iter().map(|p| format!("{p}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Per-value counts with the two leading indices kept current in O(1).
///
/// Ties between counts always resolve toward the lower index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TallyState {
    counts: Vec<u64>,
    total: u64,
    first: usize,
    second: usize,
}

impl TallyState {
    pub fn new(k: usize) -> Self {
        assert!(k >= 2, "a tally needs at least two values");
        TallyState { counts: vec![0; k], total: 0, first: 0, second: 1 }
    }

    /// Rebuilds a tally from explicit counts with a full scan.
    pub fn from_counts(counts: Vec<u64>) -> Self {
        assert!(counts.len() >= 2, "a tally needs at least two values");
        let (first, second) = leading_pair(&counts);
        let total = counts.iter().sum();
        TallyState { counts, total, first, second }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn second(&self) -> usize {
        self.second
    }

    /// Records one observation of value `idx`.
    #[inline]
    pub fn update(&mut self, idx: usize) {
        self.counts[idx] += 1;
        self.total += 1;
        if idx == self.first {
            return;
        }
        if idx != self.second && beats(&self.counts, idx, self.second) {
            self.second = idx;
        }
        if self.second == idx && beats(&self.counts, idx, self.first) {
            std::mem::swap(&mut self.first, &mut self.second);
        }
    }
}

#[inline]
fn beats(counts: &[u64], i: usize, j: usize) -> bool {
    counts[i] > counts[j] || (counts[i] == counts[j] && i < j)
}

/// Full-scan `(first, second)` with lowest-index tie-breaking.
pub fn leading_pair(counts: &[u64]) -> (usize, usize) {
    let mut first = 0;
    for i in 1..counts.len() {
        if beats(counts, i, first) {
            first = i;
        }
    }
    let mut second = if first == 0 { 1 } else { 0 };
    for i in 0..counts.len() {
        if i != first && beats(counts, i, second) {
            second = i;
        }
    }
    (first, second)
}

/// Head-to-head counts for an ordered pair of values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairTally {
    pub wins_i: u64,
    pub wins_j: u64,
}

impl PairTally {
    pub fn pair_total(&self) -> u64 {
        self.wins_i + self.wins_j
    }
}

/// Coordinates of one reproducible random stream.
///
/// The stream is ChaCha8 keyed by a SplitMix64 expansion of `master_seed`,
/// with `stream_index` selecting the ChaCha stream (nonce). Identical
/// coordinates give bit-identical draws on every platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeededStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl SeededStream {
    pub fn rng(&self) -> TrialRng {
        let mut key = [0u8; 32];
        let mut state = self.master_seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_index);
        rng
    }
}

pub fn derive_stream(master_seed: u64, index: u64) -> SeededStream {
    SeededStream { master_seed, stream_index: index }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngCore;

    #[test]
    fn rejects_invalid_instances() {
        assert_eq!(DiscreteInstance::new(vec![1.0]), Err(InstanceError::TooFewValues(1)));
        assert!(matches!(DiscreteInstance::new(vec![0.5, 0.5]), Err(InstanceError::TiedMode(_))));
        assert!(matches!(DiscreteInstance::new(vec![0.5, 0.4]), Err(InstanceError::NotNormalised(_))));
        assert!(matches!(DiscreteInstance::new(vec![1.2, -0.2]), Err(InstanceError::OutOfRange { index: 0, .. })));
        assert!("0.5,abc".parse::<DiscreteInstance>().is_err());
    }

    #[test]
    fn parses_probability_lists() {
        let inst: DiscreteInstance = "0.5, 0.25,0.25".parse().unwrap();
        assert_eq!(inst.k(), 3);
        assert_eq!(inst.true_mode(), 0);
        assert_eq!(inst.top_two(), (0.5, 0.25));
        assert_eq!(inst.to_string(), "0.5,0.25,0.25");
    }

    #[test]
    fn degenerate_mass_is_always_drawn() {
        let mut rng = derive_stream(7, 0).rng();
        let a = DiscreteInstance::new(vec![1.0, 0.0]).unwrap();
        let b = DiscreteInstance::new(vec![0.0, 0.0, 1.0]).unwrap();
        for _ in 0..10_000 {
            assert_eq!(a.sample(&mut rng), 0);
            assert_eq!(b.sample(&mut rng), 2);
        }
    }

    #[test]
    fn sample_frequencies_pass_chi_square() {
        let inst = DiscreteInstance::new(vec![0.5, 0.25, 0.25]).unwrap();
        let mut rng = derive_stream(11, 3).rng();
        let n = 100_000;
        let mut obs = [0u64; 3];
        for _ in 0..n {
            obs[inst.sample(&mut rng)] += 1;
        }
        let chi2: f64 = obs
            .iter()
            .zip(inst.probs())
            .map(|(&o, &p)| {
                let e = p * n as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        // chi-square(2 dof) upper 1e-3 quantile: -2 ln(1e-3).
        assert!(chi2 < -2.0 * 1e-3f64.ln(), "chi2 = {chi2}");
    }

    #[test]
    fn tally_examples() {
        let mut t = TallyState::from_counts(vec![2, 1, 0]);
        t.update(1);
        assert_eq!(t.counts(), &[2, 2, 0]);
        assert_eq!((t.first(), t.second()), (0, 1));

        let mut t = TallyState::new(2);
        t.update(1);
        assert_eq!((t.first(), t.second()), (1, 0));
        assert_eq!(t.total(), 1);
    }

    #[test]
    fn tally_tracks_full_scan_over_long_sequence() {
        let mut rng = derive_stream(5, 5).rng();
        let inst = DiscreteInstance::new(vec![0.3, 0.29, 0.2, 0.11, 0.1]).unwrap();
        let mut t = TallyState::new(5);
        for _ in 0..10_000 {
            t.update(inst.sample(&mut rng));
            assert_eq!((t.first(), t.second()), leading_pair(t.counts()));
        }
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let draws = |s: SeededStream| {
            let mut rng = s.rng();
            (0..1000).map(|_| rng.next_u64()).collect::<Vec<_>>()
        };
        assert_eq!(draws(derive_stream(42, 3)), draws(derive_stream(42, 3)));
        let mut differing = 0;
        for seed in 0..64u64 {
            let a = derive_stream(seed, 9).rng().next_u64();
            let b = derive_stream(seed, 10).rng().next_u64();
            differing += (a != b) as u32;
        }
        assert!(differing >= 1);
        assert_ne!(draws(derive_stream(42, 3)), draws(derive_stream(43, 3)));
    }

    #[test]
    fn neighbouring_streams_are_uncorrelated() {
        let n = 20_000;
        let mut a = derive_stream(1, 0).rng();
        let mut b = derive_stream(1, 1).rng();
        let xs: Vec<f64> = (0..n).map(|_| rand::Rng::gen::<f64>(&mut a)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rand::Rng::gen::<f64>(&mut b)).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n as f64;
        let corr = cov / (1.0 / 12.0);
        assert!(corr.abs() < 5.0 / (n as f64).sqrt(), "corr = {corr}");
    }

    proptest! {
        #[test]
        fn tally_matches_full_scan_for_any_order(seq in proptest::collection::vec(0usize..6, 0..300)) {
            let mut t = TallyState::new(6);
            for &i in &seq {
                t.update(i);
                prop_assert_eq!((t.first(), t.second()), leading_pair(t.counts()));
            }
            let mut rev = TallyState::new(6);
            for &i in seq.iter().rev() {
                rev.update(i);
            }
            prop_assert_eq!((rev.first(), rev.second()), (t.first(), t.second()));
        }

        #[test]
        fn sample_never_hits_zero_mass(seed in any::<u64>(), zero in 0usize..4) {
            let mut probs = vec![0.4, 0.3, 0.2, 0.1];
            let moved = probs[zero];
            probs[zero] = 0.0;
            probs[(zero + 1) % 4] += moved;
            if let Ok(inst) = DiscreteInstance::new(probs) {
                let mut rng = derive_stream(seed, 0).rng();
                for _ in 0..500 {
                    prop_assert_ne!(inst.sample(&mut rng), zero);
                }
            }
        }
    }
}
