//! Pseudorandom time-spread patterns.
//!
//! Patterns never contain three equal bits in a row. Sets of patterns are
//! built so that their pairwise Hamming distances cover `(0, L)` roughly
//! evenly instead of clustering around `L / 2`.

use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits;
use crate::error::{Error, Result};

/// Longest permitted run of equal bits.
pub const MAX_RUN: usize = 2;

/// Binary sequence used as a spread-echo key.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Pattern(Vec<bool>);

impl fmt::Debug for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pattern(L={}, {})", self.0.len(), self.to_hex())
    }
}

impl Pattern {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "pattern length must be >= 2, got {}",
                bits.len()
            )));
        }
        Ok(Self(bits))
    }

    /// Builds a pattern from `0`/`1` bytes.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidArgument(format!("bit value {other} not in {{0,1}}"))),
            })
            .collect::<Result<Vec<_>>>()
            .and_then(Self::new)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// The `2p - 1` correlation template.
    pub fn template(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect()
    }

    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|b| !b).collect())
    }

    pub fn longest_run(&self) -> usize {
        longest_run(&self.0)
    }

    pub fn is_run_valid(&self) -> bool {
        self.longest_run() <= MAX_RUN
    }

    /// MSB-first hex; the final nibble is zero-padded when `L % 4 != 0`.
    pub fn to_hex(&self) -> String {
        bits::to_hex(&self.0)
    }

    /// Parses `length` bits from MSB-first hex.
    pub fn from_hex(hex: &str, length: usize) -> Result<Self> {
        Self::new(bits::from_hex(hex, length)?)
    }
}

fn longest_run(bits: &[bool]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for (i, &b) in bits.iter().enumerate() {
        run = if i > 0 && bits[i - 1] == b { run + 1 } else { 1 };
        best = best.max(run);
    }
    best
}

/// Count of differing positions.
pub fn hamming(a: &Pattern, b: &Pattern) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.0.iter().zip(&b.0).filter(|(x, y)| x != y).count())
}

/// Seeded pattern of `length` bits with no run longer than [`MAX_RUN`].
pub fn generate_pattern(length: usize, seed: u64) -> Result<Pattern> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_with(length, &mut rng)
}

fn generate_with(length: usize, rng: &mut impl Rng) -> Result<Pattern> {
    if length < 2 {
        return Err(Error::InvalidArgument(format!(
            "pattern length must be >= 2, got {length}"
        )));
    }
    let mut bits: Vec<bool> = Vec::with_capacity(length);
    for n in 0..length {
        let drawn: bool = rng.random();
        // A third equal bit is rejected and replaced by its complement.
        let bit = if n >= MAX_RUN && bits[n - 1] == bits[n - 2] {
            !bits[n - 1]
        } else {
            drawn
        };
        bits.push(bit);
    }
    Pattern::new(bits)
}

/// Flips the middle bit of every run longer than [`MAX_RUN`] until none remain.
pub fn repair_runs(pattern: &mut Pattern) {
    let bits = &mut pattern.0;
    loop {
        let mut changed = false;
        let mut start = 0;
        while start < bits.len() {
            let mut end = start;
            while end < bits.len() && bits[end] == bits[start] {
                end += 1;
            }
            let run = end - start;
            if run > MAX_RUN {
                bits[start + run / 2] = !bits[start + run / 2];
                changed = true;
            }
            start = end;
        }
        if !changed {
            return;
        }
    }
}

/// Inverts exactly `k` distinct, uniformly chosen positions.
///
/// The result is a corrupted copy, so the run constraint is not re-applied.
pub fn flip_bits(pattern: &Pattern, k: usize, seed: u64) -> Result<Pattern> {
    if k > pattern.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot flip {k} bits of a {}-bit pattern",
            pattern.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits = pattern.0.clone();
    for i in index::sample(&mut rng, pattern.len(), k) {
        bits[i] = !bits[i];
    }
    Ok(Pattern(bits))
}

/// Acceptance thresholds for a pattern set's distance spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadCriteria {
    /// Largest allowed gap between neighbouring sorted distances, with 0 and L included.
    pub max_gap: f64,
    /// Smallest allowed pairwise distance.
    pub min_distance: f64,
    pub max_attempts: usize,
}

impl SpreadCriteria {
    pub fn for_set(count: usize, length: usize) -> Self {
        Self {
            max_gap: 2.0 * length as f64 / count as f64,
            min_distance: length as f64 / (2.0 * count as f64),
            max_attempts: 1000,
        }
    }
}

/// A family of spread patterns with its pairwise distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    pub patterns: Vec<Pattern>,
    pub seed: u64,
    pub distance_matrix: Vec<Vec<usize>>,
    /// False when the retry budget ran out; the set is then the best one seen.
    pub criteria_met: bool,
    pub attempts: usize,
}

impl PatternSet {
    pub fn count(&self) -> usize {
        self.patterns.len()
    }

    pub fn length(&self) -> usize {
        self.patterns.first().map_or(0, Pattern::len)
    }

    /// Upper-triangle distances in row-major order.
    pub fn pairwise_distances(&self) -> Vec<usize> {
        let n = self.count();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| self.distance_matrix[i][j])
            .collect()
    }

    /// Largest gap between sorted distances, counting 0 and L as endpoints.
    pub fn max_sorted_gap(&self) -> usize {
        max_gap(&self.pairwise_distances(), self.length())
    }

    /// Checks run validity, matrix consistency and the spread criteria.
    pub fn validate(&self, criteria: &SpreadCriteria) -> Result<()> {
        if self.count() < 2 {
            return Err(Error::InvalidArgument("a pattern set needs at least 2 patterns".into()));
        }
        let l = self.length();
        for (i, p) in self.patterns.iter().enumerate() {
            if p.len() != l {
                return Err(Error::LengthMismatch {
                    left: l,
                    right: p.len(),
                });
            }
            if !p.is_run_valid() {
                return Err(Error::InvalidArgument(format!(
                    "pattern {i} has a run of {} equal bits",
                    p.longest_run()
                )));
            }
        }
        if self.distance_matrix != distance_matrix(&self.patterns)? {
            return Err(Error::InvalidArgument("distance matrix does not match patterns".into()));
        }
        let distances = self.pairwise_distances();
        let min = distances.iter().copied().min().unwrap_or(0);
        if (min as f64) < criteria.min_distance {
            return Err(Error::InvalidArgument(format!(
                "minimum pairwise distance {min} below {}",
                criteria.min_distance
            )));
        }
        let gap = max_gap(&distances, l);
        if gap as f64 > criteria.max_gap {
            return Err(Error::InvalidArgument(format!(
                "sorted distance gap {gap} exceeds {}",
                criteria.max_gap
            )));
        }
        Ok(())
    }
}

fn max_gap(distances: &[usize], length: usize) -> usize {
    let mut sorted = Vec::with_capacity(distances.len() + 2);
    sorted.push(0);
    sorted.extend_from_slice(distances);
    sorted.push(length);
    sorted.sort_unstable();
    sorted.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
}

pub fn distance_matrix(patterns: &[Pattern]) -> Result<Vec<Vec<usize>>> {
    let n = patterns.len();
    let mut m = vec![vec![0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = hamming(&patterns[i], &patterns[j])?;
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    Ok(m)
}

/// [`generate_pattern_set_with`] using the default criteria.
pub fn generate_pattern_set(count: usize, length: usize, seed: u64) -> Result<PatternSet> {
    generate_pattern_set_with(count, length, seed, &SpreadCriteria::for_set(count, length))
}

/// Builds `count` patterns as flipped copies of a base pattern.
///
/// Each attempt draws sorted flip fractions in `[0, 1]`, flips that share of
/// the base pattern's positions and repairs runs. Attempts repeat until the
/// realised distances meet `criteria`; after the budget is spent the
/// attempt with the smallest gap is returned with `criteria_met == false`.
pub fn generate_pattern_set_with(
    count: usize,
    length: usize,
    seed: u64,
    criteria: &SpreadCriteria,
) -> Result<PatternSet> {
    if count < 2 {
        return Err(Error::InvalidArgument(format!(
            "a pattern set needs at least 2 patterns, got {count}"
        )));
    }
    if length < 2 {
        return Err(Error::InvalidArgument(format!(
            "pattern length must be >= 2, got {length}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, PatternSet)> = None;
    for attempt in 1..=criteria.max_attempts.max(1) {
        let base = generate_with(length, &mut rng)?;
        let mut fractions: Vec<f64> = (1..count).map(|_| rng.random::<f64>()).collect();
        fractions.sort_by(f64::total_cmp);
        let mut patterns = vec![base.clone()];
        for f in fractions {
            let k = (f * length as f64).round() as usize;
            let mut p = base.clone();
            for i in index::sample(&mut rng, length, k) {
                p.0[i] = !p.0[i];
            }
            repair_runs(&mut p);
            patterns.push(p);
        }
        let distance_matrix = distance_matrix(&patterns)?;
        let set = PatternSet {
            patterns,
            seed,
            distance_matrix,
            criteria_met: false,
            attempts: attempt,
        };
        let distances = set.pairwise_distances();
        let min = distances.iter().copied().min().unwrap_or(0) as f64;
        let gap = max_gap(&distances, length) as f64;
        if gap <= criteria.max_gap && min >= criteria.min_distance {
            return Ok(PatternSet {
                criteria_met: true,
                ..set
            });
        }
        // Rank failures by how far they miss both thresholds.
        let miss = (gap - criteria.max_gap).max(0.0) + (criteria.min_distance - min).max(0.0);
        if best.as_ref().is_none_or(|(m, _)| miss < *m) {
            best = Some((miss, set));
        }
    }
    let (_, set) = best.expect("at least one attempt");
    log::warn!(
        "pattern set (count={count}, L={length}, seed={seed}) missed the spread criteria after {} attempts",
        criteria.max_attempts
    );
    Ok(PatternSet {
        attempts: criteria.max_attempts,
        ..set
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn short_patterns_are_run_valid() {
        for seed in 0..200 {
            let p = generate_pattern(4, seed).unwrap();
            let s: String = p.bits().iter().map(|&b| if b { '1' } else { '0' }).collect();
            assert!(s != "0001" && s != "1110" && !s.contains("000") && !s.contains("111"));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_pattern(1024, 5).unwrap(), generate_pattern(1024, 5).unwrap());
        assert_ne!(generate_pattern(1024, 5).unwrap(), generate_pattern(1024, 6).unwrap());
    }

    #[test]
    fn ones_density_over_seeds() {
        let mut total = 0;
        for seed in 0..100 {
            let p = generate_pattern(1024, seed).unwrap();
            assert!(p.is_run_valid());
            let density = p.ones() as f64 / 1024.0;
            assert!((0.4..=0.6).contains(&density), "seed {seed}: {density}");
            total += p.ones();
        }
        let mean = total as f64 / 100.0;
        assert!((460.0..=564.0).contains(&mean), "{mean}");
    }

    #[test]
    fn rejects_tiny_length() {
        assert!(generate_pattern(1, 0).is_err());
        assert!(generate_pattern_set(1, 1024, 0).is_err());
    }

    #[test]
    fn flip_extremes() {
        let p = generate_pattern(1024, 3).unwrap();
        assert_eq!(flip_bits(&p, 0, 9).unwrap(), p);
        assert_eq!(flip_bits(&p, 1024, 9).unwrap(), p.complement());
        assert_eq!(hamming(&p, &flip_bits(&p, 512, 9).unwrap()).unwrap(), 512);
        assert!(flip_bits(&p, 1025, 9).is_err());
    }

    #[test]
    fn hamming_basics() {
        let p = generate_pattern(64, 1).unwrap();
        assert_eq!(hamming(&p, &p).unwrap(), 0);
        assert_eq!(hamming(&p, &p.complement()).unwrap(), 64);
        assert!(hamming(&p, &generate_pattern(65, 1).unwrap()).is_err());
    }

    #[test]
    fn repair_breaks_long_runs() {
        let mut p = Pattern::from_bits(&[1, 1, 1, 1, 1, 1, 0, 0, 0, 1]).unwrap();
        repair_runs(&mut p);
        assert!(p.is_run_valid());
    }

    #[test]
    fn pair_set_meets_min_distance() {
        let set = generate_pattern_set(2, 1024, 4).unwrap();
        let d = set.distance_matrix[0][1];
        assert_eq!(set.distance_matrix, vec![vec![0, d], vec![d, 0]]);
        assert!(d >= 64);
    }

    #[test]
    fn duplicated_pattern_fails_validation() {
        let p = generate_pattern(1024, 8).unwrap();
        let set = PatternSet {
            patterns: vec![p.clone(), p.clone()],
            seed: 0,
            distance_matrix: vec![vec![0, 0], vec![0, 0]],
            criteria_met: false,
            attempts: 0,
        };
        assert!(set.validate(&SpreadCriteria::for_set(2, 1024)).is_err());
    }

    #[test]
    fn hex_with_padding() {
        let p = Pattern::from_bits(&[1, 0, 1, 1, 0, 1]).unwrap();
        assert_eq!(p.to_hex(), "b4");
        assert_eq!(Pattern::from_hex("b4", 6).unwrap(), p);
        assert!(Pattern::from_hex("b5", 6).is_err());
        assert!(Pattern::from_hex("b4", 9).is_err());
        assert!(Pattern::from_hex("z4", 6).is_err());
    }

    proptest! {
        #[test]
        fn hex_round_trip(bits in proptest::collection::vec(any::<bool>(), 2..300)) {
            let p = Pattern::new(bits).unwrap();
            prop_assert_eq!(Pattern::from_hex(&p.to_hex(), p.len()).unwrap(), p);
        }

        #[test]
        fn generated_patterns_valid(len in 2usize..2000, seed in any::<u64>()) {
            prop_assert!(generate_pattern(len, seed).unwrap().is_run_valid());
        }

        #[test]
        fn repair_always_converges(bits in proptest::collection::vec(any::<bool>(), 2..500)) {
            let mut p = Pattern::new(bits).unwrap();
            repair_runs(&mut p);
            prop_assert!(p.is_run_valid());
        }
    }
}
