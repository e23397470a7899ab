//! Unit sequences, run-length form and unit-based speed adaptation.
//!
//! A speech-unit sequence factors into a *skeleton* of distinct consecutive
//! pronunciations and the number of times each one repeats. The ratio of
//! skeleton length to raw length, `r = L̂ / L`, is the unit speed: higher means
//! fewer repetitions per pronunciation, i.e. faster speech. Speed adaptation
//! rescales repetition counts of a target sequence so its unit speed follows a
//! source speed while leaving the skeleton untouched.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed-ratio magnitude above which [`adapt_speed`] logs a warning.
pub const EXTREME_SPEED_RATIO: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnitSequence {
    units: Vec<u32>,
    vocab_size: u32,
}

impl UnitSequence {
    pub fn new(units: Vec<u32>, vocab_size: u32) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::config("vocab_size must be positive"));
        }
        if let Some(&unit) = units.iter().find(|&&u| u >= vocab_size) {
            return Err(Error::UnitOutOfRange { unit, vocab_size });
        }
        Ok(Self { units, vocab_size })
    }

    pub fn units(&self) -> &[u32] {
        &self.units
    }

    pub fn into_units(self) -> Vec<u32> {
        self.units
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Number of runs, `L̂`.
    pub fn dedup_len(&self) -> usize {
        if self.units.is_empty() {
            return 0;
        }
        1 + self.units.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Run {
    pub symbol: u32,
    pub count: u32,
}

/// Run-length factorization of a unit sequence. Adjacent symbols differ and
/// every count is at least one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize)]
pub struct RunLengthForm {
    runs: Vec<Run>,
}

impl RunLengthForm {
    pub fn new(runs: Vec<Run>) -> Result<Self> {
        for (index, run) in runs.iter().enumerate() {
            if run.count == 0 {
                return Err(Error::InvalidRuns {
                    index,
                    reason: "zero count",
                });
            }
            if index > 0 && runs[index - 1].symbol == run.symbol {
                return Err(Error::InvalidRuns {
                    index,
                    reason: "symbol equals the previous run's symbol",
                });
            }
        }
        Ok(Self { runs })
    }

    pub fn from_pairs(pairs: &[(u32, u32)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(symbol, count)| Run { symbol, count })
                .collect(),
        )
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn total_len(&self) -> usize {
        self.runs.iter().map(|r| r.count as usize).sum()
    }

    pub fn symbols(&self) -> Vec<u32> {
        self.runs.iter().map(|r| r.symbol).collect()
    }

    pub fn counts(&self) -> Vec<u32> {
        self.runs.iter().map(|r| r.count).collect()
    }

    pub fn as_pairs(&self) -> Vec<(u32, u32)> {
        self.runs.iter().map(|r| (r.symbol, r.count)).collect()
    }

    /// Run index covering each position of the expanded sequence.
    pub fn run_index_per_position(&self) -> Vec<usize> {
        self.runs
            .iter()
            .enumerate()
            .flat_map(|(j, r)| std::iter::repeat_n(j, r.count as usize))
            .collect()
    }
}

impl<'de> Deserialize<'de> for RunLengthForm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            runs: Vec<Run>,
        }
        let raw = Raw::deserialize(d)?;
        RunLengthForm::new(raw.runs).map_err(serde::de::Error::custom)
    }
}

pub fn to_runs(seq: &UnitSequence) -> RunLengthForm {
    let mut runs: Vec<Run> = Vec::new();
    for &u in seq.units() {
        match runs.last_mut() {
            Some(last) if last.symbol == u => last.count += 1,
            _ => runs.push(Run {
                symbol: u,
                count: 1,
            }),
        }
    }
    RunLengthForm { runs }
}

pub fn from_runs(runs: &RunLengthForm, vocab_size: u32) -> Result<UnitSequence> {
    let mut units = Vec::with_capacity(runs.total_len());
    for r in runs.runs() {
        units.extend(std::iter::repeat_n(r.symbol, r.count as usize));
    }
    UnitSequence::new(units, vocab_size)
}

/// Collapses adjacent repeats into the skeleton.
pub fn dedup(seq: &UnitSequence) -> UnitSequence {
    let mut units = seq.units().to_vec();
    units.dedup();
    UnitSequence {
        units,
        vocab_size: seq.vocab_size(),
    }
}

/// Unit speed `L̂ / L` kept as an exact ratio of two lengths.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpeedEstimate {
    dedup_len: u64,
    len: u64,
}

impl SpeedEstimate {
    pub fn new(dedup_len: u64, len: u64) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptySequence);
        }
        if dedup_len == 0 || dedup_len > len {
            return Err(Error::config(format!(
                "speed {dedup_len}/{len} is outside (0, 1]"
            )));
        }
        Ok(Self { dedup_len, len })
    }

    pub fn numerator(&self) -> u64 {
        self.dedup_len
    }

    pub fn denominator(&self) -> u64 {
        self.len
    }

    pub fn as_f64(&self) -> f64 {
        self.dedup_len as f64 / self.len as f64
    }

    /// Exact `|self - other|` as a (numerator, denominator) pair.
    pub fn abs_diff(&self, other: &SpeedEstimate) -> (u128, u128) {
        let a = self.dedup_len as u128 * other.len as u128;
        let b = other.dedup_len as u128 * self.len as u128;
        (a.abs_diff(b), self.len as u128 * other.len as u128)
    }
}

impl PartialEq for SpeedEstimate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SpeedEstimate {}

impl PartialOrd for SpeedEstimate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SpeedEstimate {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.dedup_len as u128 * other.len as u128)
            .cmp(&(other.dedup_len as u128 * self.len as u128))
    }
}

impl fmt::Display for SpeedEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.dedup_len, self.len)
    }
}

/// Compares two non-negative fractions `a.0/a.1` and `b.0/b.1`.
pub(crate) fn cmp_frac(a: (u128, u128), b: (u128, u128)) -> Ordering {
    (a.0 * b.1).cmp(&(b.0 * a.1))
}

pub fn unit_speed(seq: &UnitSequence) -> Result<SpeedEstimate> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    SpeedEstimate::new(seq.dedup_len() as u64, seq.len() as u64)
}

/// Output length for a skeleton of `skeleton_len` symbols adapted to `r_src`:
/// the integer `L'` minimizing `|skeleton_len / L' - r_src|`. The minimizer is
/// the floor or ceiling of `skeleton_len / r_src`; on an exact tie the shorter
/// length wins.
pub fn adapted_length(skeleton_len: usize, r_src: &SpeedEstimate) -> usize {
    let m = skeleton_len as u128;
    let (ds, ls) = (r_src.numerator() as u128, r_src.denominator() as u128);
    // m / r_src = m * ls / ds >= m since r_src <= 1
    let floor = (m * ls / ds).max(m);
    let ceil = (m * ls).div_ceil(ds).max(m);
    if floor == ceil {
        return floor as usize;
    }
    let dev = |len: u128| -> (u128, u128) {
        let a = m * ls;
        let b = ds * len;
        (a.abs_diff(b), len * ls)
    };
    match cmp_frac(dev(ceil), dev(floor)) {
        Ordering::Less => ceil as usize,
        _ => floor as usize,
    }
}

/// Rescales the repetition counts of `target` so its unit speed tracks `r_src`
/// while keeping its skeleton.
///
/// The output length is [`adapted_length`]. Each run's ideal count is
/// `k_i * r_tgt / r_src`; counts start at the floor of the ideal (at least one)
/// and the remaining length is handed out by largest remainder, earliest run
/// first. If the one-unit floor overshoots the length, units are taken back
/// from multi-unit runs with the smallest remainder, latest run first. All
/// arithmetic is exact.
pub fn adapt_speed(target: &UnitSequence, r_src: &SpeedEstimate) -> Result<UnitSequence> {
    let r_tgt = unit_speed(target)?;
    if is_extreme_ratio(r_src, &r_tgt) {
        log::warn!(
            "extreme speed ratio {:.3} (source {r_src}, target {r_tgt})",
            r_src.as_f64() / r_tgt.as_f64()
        );
    }
    adapt_speed_quiet(target, r_src)
}

/// True when `r_src / r_tgt` lies outside `[1/4, 4]`.
pub fn is_extreme_ratio(r_src: &SpeedEstimate, r_tgt: &SpeedEstimate) -> bool {
    let ratio = r_src.as_f64() / r_tgt.as_f64();
    !(1.0 / EXTREME_SPEED_RATIO..=EXTREME_SPEED_RATIO).contains(&ratio)
}

pub(crate) fn adapt_speed_quiet(
    target: &UnitSequence,
    r_src: &SpeedEstimate,
) -> Result<UnitSequence> {
    let r_tgt = unit_speed(target)?;
    if r_tgt == *r_src {
        return Ok(target.clone());
    }

    let runs = to_runs(target);
    let m = runs.len();
    let out_len = adapted_length(m, r_src) as i128;

    // ideal_i = c_i * (m / L) * (ls / ds) = numer_i / denom
    let denom = target.len() as i128 * r_src.numerator() as i128;
    let scale = m as i128 * r_src.denominator() as i128;
    let numer: Vec<i128> = runs
        .runs()
        .iter()
        .map(|r| r.count as i128 * scale)
        .collect();

    let mut counts: Vec<i128> = numer.iter().map(|&q| (q / denom).max(1)).collect();
    // remainder numerators, ideal - count, in units of 1/denom
    let mut rem: Vec<i128> = numer
        .iter()
        .zip(&counts)
        .map(|(&q, &k)| q - k * denom)
        .collect();
    let mut total: i128 = counts.iter().sum();

    while total < out_len {
        let mut best = 0;
        for i in 1..m {
            if rem[i] > rem[best] {
                best = i;
            }
        }
        counts[best] += 1;
        rem[best] -= denom;
        total += 1;
    }
    while total > out_len {
        let mut best: Option<usize> = None;
        for i in 0..m {
            if counts[i] >= 2 && best.is_none_or(|b| rem[i] <= rem[b]) {
                best = Some(i);
            }
        }
        let b = best.expect("output length is at least the skeleton length");
        counts[b] -= 1;
        rem[b] += denom;
        total -= 1;
    }

    let adapted = RunLengthForm {
        runs: runs
            .runs()
            .iter()
            .zip(&counts)
            .map(|(r, &k)| Run {
                symbol: r.symbol,
                count: k as u32,
            })
            .collect(),
    };
    from_runs(&adapted, target.vocab_size())
}
