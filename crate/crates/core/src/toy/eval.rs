use serde::{Deserialize, Serialize};

use crate::diffusion::{sample, Denoiser, SamplerConfig, SourceContext};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::derive_seed;
use crate::units::{dedup, UnitSequence};

use super::oracle::oracle_log_likelihood;
use super::task::{ParallelPair, ToyTaskSpec};

/// Levenshtein distance.
pub fn edit_distance(a: &[u32], b: &[u32]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + (x != y) as usize)
                .min(prev[j + 1] + 1)
                .min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - edit(dedup(output), reference) / max(len)`.
pub fn skeleton_accuracy(output: &UnitSequence, reference_skeleton: &[u32]) -> f64 {
    let out = dedup(output);
    let denom = out.len().max(reference_skeleton.len());
    if denom == 0 {
        return 1.0;
    }
    1.0 - edit_distance(out.units(), reference_skeleton) as f64 / denom as f64
}

/// Translates every pair at `target_len = len(src)`. Pair `i` samples with
/// seed `derive_seed(cfg.seed, i)`.
pub fn translate_corpus<D: Denoiser + ?Sized>(
    denoiser: &D,
    corpus: &[ParallelPair],
    cfg: &SamplerConfig,
) -> Result<Vec<UnitSequence>> {
    cfg.validate()?;
    par::try_map_slice(corpus, |i, pair| {
        let ctx = SourceContext::new(pair.src.clone())?;
        let pair_cfg = cfg.with_seed(derive_seed(cfg.seed, i as u64));
        sample(denoiser, &ctx, pair.src.len(), &pair_cfg)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfeRow {
    pub nfe: usize,
    pub skeleton_accuracy: f64,
    /// Fraction of outputs whose skeleton equals the reference skeleton.
    pub exact_match: f64,
    /// Mean oracle log-likelihood over outputs the oracle deems possible.
    pub mean_oracle_loglik: Option<f64>,
    /// Fraction of outputs the oracle deems possible.
    pub valid_fraction: f64,
}

/// Samples every pair at `len(src)` for each NFE in the grid and scores the
/// skeleton against the mapped source skeleton.
pub fn evaluate_translation<D: Denoiser + ?Sized>(
    denoiser: &D,
    corpus: &[ParallelPair],
    spec: &ToyTaskSpec,
    nfe_grid: &[usize],
    cfg: &SamplerConfig,
) -> Result<Vec<NfeRow>> {
    if nfe_grid.is_empty() {
        return Err(Error::Empty("NFE grid"));
    }
    if corpus.is_empty() {
        return Err(Error::Empty("evaluation corpus"));
    }
    nfe_grid
        .iter()
        .map(|&nfe| {
            let outputs = translate_corpus(denoiser, corpus, &cfg.with_nfe(nfe))?;
            let n = corpus.len() as f64;
            let (mut acc, mut exact, mut ll, mut valid) = (0.0, 0usize, 0.0, 0usize);
            for (pair, out) in corpus.iter().zip(&outputs) {
                let reference = spec.map_skeleton(dedup(&pair.src).units());
                acc += skeleton_accuracy(out, &reference);
                exact += (dedup(out).units() == reference.as_slice()) as usize;
                if let Some(l) = oracle_log_likelihood(out.units(), &reference) {
                    ll += l;
                    valid += 1;
                }
            }
            Ok(NfeRow {
                nfe,
                skeleton_accuracy: acc / n,
                exact_match: exact as f64 / n,
                mean_oracle_loglik: (valid > 0).then(|| ll / valid as f64),
                valid_fraction: valid as f64 / n,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationRow {
    pub ratio: f64,
    pub mean_len: f64,
    /// Mean of `dedup_len(output) / len(reference skeleton)`.
    pub mean_relative_dedup_len: f64,
}

/// Samples every pair at `round(len(src) · ratio)` for each ratio. Pair `i`
/// uses the same seed at every ratio.
pub fn duration_sweep_corpus<D: Denoiser + ?Sized>(
    denoiser: &D,
    corpus: &[ParallelPair],
    ratios: &[f64],
    cfg: &SamplerConfig,
) -> Result<Vec<DurationRow>> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("evaluation corpus"));
    }
    let per_pair = par::try_map_slice(corpus, |i, pair| {
        let ctx = SourceContext::new(pair.src.clone())?;
        let pair_cfg = cfg.with_seed(derive_seed(cfg.seed, i as u64));
        let outs =
            crate::diffusion::duration_sweep(denoiser, &ctx, pair.src.len(), ratios, &pair_cfg)?;
        let reference_len = ctx.src_skeleton.len() as f64;
        Ok(outs
            .iter()
            .map(|o| (o.len() as f64, o.dedup_len() as f64 / reference_len))
            .collect::<Vec<_>>())
    })?;
    let n = corpus.len() as f64;
    Ok(ratios
        .iter()
        .enumerate()
        .map(|(r, &ratio)| DurationRow {
            ratio,
            mean_len: per_pair.iter().map(|p| p[r].0).sum::<f64>() / n,
            mean_relative_dedup_len: per_pair.iter().map(|p| p[r].1).sum::<f64>() / n,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edit_distance_basics() {
        assert_eq!(edit_distance(&[], &[]), 0);
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 2, 3]), 0);
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 3]), 1);
        assert_eq!(edit_distance(&[1, 2], &[3, 4, 5]), 3);
        assert_eq!(edit_distance(&[4, 1, 2], &[1, 2, 4]), 2);
    }

    #[test]
    fn accuracy_of_perfect_and_wrong_skeletons() {
        let out = UnitSequence::new(vec![1, 1, 2, 2, 3], 4).unwrap();
        assert_eq!(skeleton_accuracy(&out, &[1, 2, 3]), 1.0);
        assert_eq!(skeleton_accuracy(&out, &[0, 0, 0]), 0.0);
        assert!((skeleton_accuracy(&out, &[1, 2]) - 2.0 / 3.0).abs() < 1e-12);
    }
}
