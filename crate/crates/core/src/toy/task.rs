use rand::Rng as _;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{self, Rng};
use crate::units::{
    adapt_speed_quiet, dedup, from_runs, is_extreme_ratio, unit_speed, Run, RunLengthForm,
    UnitSequence,
};

/// Synthetic bilingual unit task: a source skeleton is translated symbol by
/// symbol into a target skeleton, and both sides draw independent geometric
/// run lengths, so source and target speaking rates are unrelated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTaskSpec {
    pub v_src: u32,
    pub v_tgt: u32,
    /// `mapping[s]` is the target symbol for source symbol `s`.
    pub mapping: Vec<u32>,
    pub skeleton_len_range: [usize; 2],
    pub mean_run_src: f64,
    pub mean_run_tgt: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for ToyTaskSpec {
    fn default() -> Self {
        Self::standard()
    }
}

impl ToyTaskSpec {
    /// The task used by the ablation harness: slow source speech (mean run
    /// 3), fast target speech (mean run 1.5), sequences short enough for the
    /// exact oracle.
    pub fn standard() -> Self {
        Self {
            v_src: 6,
            v_tgt: 8,
            mapping: vec![1, 4, 7, 2, 5, 0],
            skeleton_len_range: [2, 6],
            mean_run_src: 3.0,
            mean_run_tgt: 1.5,
            max_len: 24,
            seed: 0,
        }
    }

    /// Identity mapping with unit runs: target equals source.
    pub fn copy_task(vocab: u32, skeleton_len_range: [usize; 2]) -> Self {
        Self {
            v_src: vocab,
            v_tgt: vocab,
            mapping: (0..vocab).collect(),
            skeleton_len_range,
            mean_run_src: 1.0,
            mean_run_tgt: 1.0,
            max_len: skeleton_len_range[1],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_src == 0 || self.v_tgt == 0 {
            return Err(Error::config("vocabulary sizes must be positive"));
        }
        if self.mapping.len() != self.v_src as usize {
            return Err(Error::config(format!(
                "mapping has {} entries for a source vocabulary of {}",
                self.mapping.len(),
                self.v_src
            )));
        }
        let mut seen = vec![false; self.v_tgt as usize];
        for (s, &t) in self.mapping.iter().enumerate() {
            if t >= self.v_tgt {
                return Err(Error::config(format!(
                    "mapping sends {s} to {t}, outside the target vocabulary"
                )));
            }
            if std::mem::replace(&mut seen[t as usize], true) {
                return Err(Error::config(format!(
                    "mapping is not injective at target {t}"
                )));
            }
        }
        let [lo, hi] = self.skeleton_len_range;
        if lo < 1 || lo > hi {
            return Err(Error::config(format!(
                "invalid skeleton length range [{lo}, {hi}]"
            )));
        }
        if hi > 1 && self.v_src < 2 {
            return Err(Error::config(
                "skeletons longer than one symbol need at least two source symbols",
            ));
        }
        if !(self.mean_run_src >= 1.0) || !(self.mean_run_tgt >= 1.0) {
            return Err(Error::config("mean run lengths must be at least 1"));
        }
        if self.max_len < 1 {
            return Err(Error::config("max_len must be positive"));
        }
        Ok(())
    }

    pub fn map_symbol(&self, s: u32) -> u32 {
        self.mapping[s as usize]
    }

    /// Target skeleton for a source skeleton.
    pub fn map_skeleton(&self, src_skeleton: &[u32]) -> Vec<u32> {
        src_skeleton.iter().map(|&s| self.map_symbol(s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelPair {
    pub id: String,
    pub src: UnitSequence,
    pub tgt: UnitSequence,
    pub tgt_adapted: Option<UnitSequence>,
}

impl ParallelPair {
    /// The sequence a denoiser is trained on: the adapted target when present.
    pub fn training_target(&self) -> &UnitSequence {
        self.tgt_adapted.as_ref().unwrap_or(&self.tgt)
    }
}

fn draw_runs(rng: &mut Rng, mean: f64, n: usize) -> Vec<u32> {
    // failures before the first success, shifted to support >= 1
    let geo = Geometric::new(1.0 / mean).expect("mean >= 1 gives p in (0, 1]");
    (0..n)
        .map(|_| (1 + geo.sample(rng)).min(u32::MAX as u64) as u32)
        .collect()
}

/// Draws one parallel pair; deterministic in `(spec.seed, pair_seed)`.
///
/// Trailing skeleton symbols are dropped from both sides together until both
/// fit in `max_len`, so the target skeleton stays the mapped source skeleton.
/// A single remaining run longer than `max_len` is shortened to fit.
pub fn generate_pair(spec: &ToyTaskSpec, pair_seed: u64) -> Result<ParallelPair> {
    spec.validate()?;
    let mut rng = rng::stream_rng(spec.seed, pair_seed);
    let [lo, hi] = spec.skeleton_len_range;
    let m = rng.gen_range(lo..=hi);

    let mut skeleton = Vec::with_capacity(m);
    for j in 0..m {
        let s = if j == 0 {
            rng.gen_range(0..spec.v_src)
        } else {
            let prev = skeleton[j - 1];
            let s = rng.gen_range(0..spec.v_src - 1);
            if s >= prev {
                s + 1
            } else {
                s
            }
        };
        skeleton.push(s);
    }
    let mut src_counts = draw_runs(&mut rng, spec.mean_run_src, m);
    let mut tgt_counts = draw_runs(&mut rng, spec.mean_run_tgt, m);

    let mut keep = m;
    let total = |c: &[u32], k: usize| c[..k].iter().map(|&x| x as usize).sum::<usize>();
    while keep > 1
        && (total(&src_counts, keep) > spec.max_len || total(&tgt_counts, keep) > spec.max_len)
    {
        keep -= 1;
    }
    skeleton.truncate(keep);
    src_counts.truncate(keep);
    tgt_counts.truncate(keep);
    for c in src_counts.iter_mut().chain(tgt_counts.iter_mut()) {
        *c = (*c).min(spec.max_len as u32);
    }

    let runs = |symbols: &[u32], counts: &[u32]| {
        RunLengthForm::new(
            symbols
                .iter()
                .zip(counts)
                .map(|(&symbol, &count)| Run { symbol, count })
                .collect(),
        )
    };
    let src = from_runs(&runs(&skeleton, &src_counts)?, spec.v_src)?;
    let tgt = from_runs(
        &runs(&spec.map_skeleton(&skeleton), &tgt_counts)?,
        spec.v_tgt,
    )?;
    Ok(ParallelPair {
        id: format!("pair-{pair_seed:06}"),
        src,
        tgt,
        tgt_adapted: None,
    })
}

/// Generates `n` pairs with pair seeds `offset..offset + n`.
pub fn generate_corpus_from(
    spec: &ToyTaskSpec,
    n: usize,
    offset: u64,
) -> Result<Vec<ParallelPair>> {
    spec.validate()?;
    par::try_map_range(n, |i| generate_pair(spec, offset + i as u64))
}

pub fn generate_corpus(spec: &ToyTaskSpec, n: usize) -> Result<Vec<ParallelPair>> {
    generate_corpus_from(spec, n, 0)
}

/// Fills `tgt_adapted`: the target rescaled to the source unit speed when
/// `adaptation_on`, a copy of the target otherwise.
/// Extreme speed ratios are reported in one warning for the whole corpus.
pub fn adapt_corpus(corpus: &[ParallelPair], adaptation_on: bool) -> Result<Vec<ParallelPair>> {
    let adapted = par::try_map_slice(corpus, |_, pair| {
        let (adapted, extreme) = if adaptation_on {
            let r_src = unit_speed(&pair.src)?;
            let extreme = is_extreme_ratio(&r_src, &unit_speed(&pair.tgt)?);
            (adapt_speed_quiet(&pair.tgt, &r_src)?, extreme)
        } else {
            (pair.tgt.clone(), false)
        };
        debug_assert_eq!(dedup(&adapted), dedup(&pair.tgt));
        let pair = ParallelPair {
            tgt_adapted: Some(adapted),
            ..pair.clone()
        };
        Ok((pair, extreme))
    })?;
    let extreme = adapted.iter().filter(|(_, e)| *e).count();
    if extreme > 0 {
        log::warn!(
            "{extreme} of {} pairs have a source/target speed ratio outside [1/4, 4]",
            corpus.len()
        );
    }
    Ok(adapted.into_iter().map(|(p, _)| p).collect())
}
