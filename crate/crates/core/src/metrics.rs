//! Dubbing compliance metrics.
//!
//! Duration compliance (DC@p) and speed compliance (SC@p) are the fraction of
//! pairs whose generated/source ratio lies within `±p` of one. Speeds use the
//! unit-speed proxy (dedup ratio) rather than syllable rates.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thresholds reported by [`report`].
pub const REPORT_THRESHOLDS: [f64; 2] = [0.2, 0.4];

#[derive(Debug, Clone, PartialEq)]
pub struct PairedMeasures {
    src: Vec<f64>,
    gen: Vec<f64>,
}

impl PairedMeasures {
    pub fn new(src: Vec<f64>, gen: Vec<f64>) -> Result<Self> {
        if src.len() != gen.len() {
            return Err(Error::LengthMismatch {
                expected: src.len(),
                actual: gen.len(),
            });
        }
        if src.is_empty() {
            return Err(Error::Empty("paired measures"));
        }
        if src
            .iter()
            .chain(&gen)
            .any(|&v| !(v > 0.0) || !v.is_finite())
        {
            return Err(Error::config("paired measures must be positive and finite"));
        }
        Ok(Self { src, gen })
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn src(&self) -> &[f64] {
        &self.src
    }

    pub fn gen(&self) -> &[f64] {
        &self.gen
    }
}

/// Fraction of pairs with `|gen / src - 1| <= p`.
pub fn compliance(pairs: &PairedMeasures, p: f64) -> Result<f64> {
    if !(p >= 0.0) {
        return Err(Error::config(format!(
            "compliance threshold {p} must be non-negative"
        )));
    }
    let hits = pairs
        .src
        .iter()
        .zip(&pairs.gen)
        .filter(|(&s, &g)| (g / s - 1.0).abs() <= p)
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Pearson product-moment correlation between source and generated values.
pub fn speed_correlation(pairs: &PairedMeasures) -> Result<f64> {
    pearson(&pairs.src, &pairs.gen)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Undefined("correlation of fewer than two pairs"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation of a constant series"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    /// Mean of the in-range values, approximated by bin midpoints.
    pub fn mean(&self) -> Option<f64> {
        let n: u64 = self.counts.iter().sum();
        if n == 0 {
            return None;
        }
        let s: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 * 0.5 * (self.edges[i] + self.edges[i + 1]))
            .sum();
        Some(s / n as f64)
    }

    /// `bin_lo,bin_hi,count`; underflow and overflow rows use infinite bounds.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        let lo = self.edges[0];
        let hi = self.edges[self.edges.len() - 1];
        let _ = writeln!(out, "-inf,{lo},{}", self.underflow);
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{c}", self.edges[i], self.edges[i + 1]);
        }
        let _ = writeln!(out, "{hi},inf,{}", self.overflow);
        out
    }
}

/// Uniform bins over `[lo, hi]`; `hi` itself falls in the last bin.
pub fn speed_histogram(values: &[f64], bin_count: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if bin_count < 1 {
        return Err(Error::config("bin_count must be at least 1"));
    }
    if !(lo < hi) {
        return Err(Error::config(format!(
            "histogram range [{lo}, {hi}] is empty"
        )));
    }
    let width = (hi - lo) / bin_count as f64;
    let edges = (0..=bin_count)
        .map(|i| {
            if i == bin_count {
                hi
            } else {
                lo + width * i as f64
            }
        })
        .collect();
    let mut h = Histogram {
        edges,
        counts: vec![0; bin_count],
        underflow: 0,
        overflow: 0,
    };
    for &v in values {
        if v < lo {
            h.underflow += 1;
        } else if v > hi || v.is_nan() {
            h.overflow += 1;
        } else {
            let b = (((v - lo) / width).floor() as usize).min(bin_count - 1);
            h.counts[b] += 1;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub n: usize,
    /// Threshold (formatted) to duration compliance.
    pub dc: BTreeMap<String, f64>,
    pub sc: BTreeMap<String, f64>,
    /// `None` when the correlation is undefined (constant series).
    pub speed_corr: Option<f64>,
    pub speed_corr_undefined: bool,
}

impl ComplianceReport {
    /// `threshold,dc,sc`, one row per threshold.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,dc,sc\n");
        for (k, dc) in &self.dc {
            let _ = writeln!(out, "{k},{dc},{}", self.sc[k]);
        }
        out
    }
}

/// Aggregates duration and speed compliance at the report thresholds plus the
/// speed correlation.
pub fn report(durations: &PairedMeasures, speeds: &PairedMeasures) -> Result<ComplianceReport> {
    if durations.len() != speeds.len() {
        return Err(Error::LengthMismatch {
            expected: durations.len(),
            actual: speeds.len(),
        });
    }
    let mut dc = BTreeMap::new();
    let mut sc = BTreeMap::new();
    for p in REPORT_THRESHOLDS {
        dc.insert(format!("{p:.1}"), compliance(durations, p)?);
        sc.insert(format!("{p:.1}"), compliance(speeds, p)?);
    }
    let corr = match speed_correlation(speeds) {
        Ok(c) => Some(c),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ComplianceReport {
        n: durations.len(),
        dc,
        sc,
        speed_corr: corr,
        speed_corr_undefined: corr.is_none(),
    })
}
