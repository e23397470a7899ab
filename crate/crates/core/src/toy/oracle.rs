//! Exact posterior over target sequences of a fixed length.
//!
//! Under the toy model the target is its skeleton `d_1..d_m` expanded with
//! i.i.d. geometric run lengths. The joint weight of a composition
//! `k_1 + .. + k_m = N` is `p^m (1-p)^(N-m)`, the same for every composition,
//! so conditioning on the total length leaves a uniform distribution over
//! compositions. Posterior marginals are therefore ratios of composition
//! counts, computed here by a forward/backward pass over run boundaries.

use crate::diffusion::{Denoiser, DiffusionState, Predictions, SourceContext};
use crate::error::{Error, Result};

use super::task::ToyTaskSpec;

/// Largest target length the oracle accepts.
pub const MAX_ORACLE_LEN: usize = 24;

/// Posterior marginals as exact counts: `counts[i][v] / total` is the
/// probability that position `i` holds unit `v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactPosterior {
    pub total: u128,
    pub counts: Vec<Vec<u128>>,
}

impl ExactPosterior {
    pub fn probabilities(&self, i: usize) -> Vec<f64> {
        let total = self.total as f64;
        self.counts[i].iter().map(|&c| c as f64 / total).collect()
    }
}

/// Forward/backward placement counts. `fwd[j][a]`: ways runs `0..j` exactly
/// cover positions `0..a`; `bwd[j][b]`: ways runs `j..m` cover `b..n`.
struct Tables {
    fwd: Vec<Vec<u128>>,
    bwd: Vec<Vec<u128>>,
    /// `conflicts[j][i]`: visible positions before `i` that disagree with run `j`.
    conflicts: Vec<Vec<usize>>,
}

impl Tables {
    fn build(tokens: &[Option<u32>], skeleton: &[u32]) -> Self {
        let n = tokens.len();
        let m = skeleton.len();
        let conflicts: Vec<Vec<usize>> = skeleton
            .iter()
            .map(|&d| {
                let mut acc = vec![0usize; n + 1];
                for i in 0..n {
                    acc[i + 1] = acc[i] + matches!(tokens[i], Some(u) if u != d) as usize;
                }
                acc
            })
            .collect();
        let mut t = Tables {
            fwd: vec![vec![0; n + 1]; m + 1],
            bwd: vec![vec![0; n + 1]; m + 1],
            conflicts,
        };
        t.fwd[0][0] = 1;
        for j in 0..m {
            for a in 0..n {
                let f = t.fwd[j][a];
                if f == 0 {
                    continue;
                }
                for b in a + 1..=n {
                    if !t.fits(j, a, b) {
                        break;
                    }
                    t.fwd[j + 1][b] += f;
                }
            }
        }
        t.bwd[m][n] = 1;
        for j in (0..m).rev() {
            for b in (1..=n).rev() {
                let w = t.bwd[j + 1][b];
                if w == 0 {
                    continue;
                }
                for a in (0..b).rev() {
                    if !t.fits(j, a, b) {
                        break;
                    }
                    t.bwd[j][a] += w;
                }
            }
        }
        t
    }

    /// Run `j` may cover positions `a..b`.
    fn fits(&self, j: usize, a: usize, b: usize) -> bool {
        self.conflicts[j][b] == self.conflicts[j][a]
    }

    fn total(&self) -> u128 {
        self.fwd[self.fwd.len() - 1][self.conflicts[0].len() - 1]
    }
}

fn first_contradiction(tokens: &[Option<u32>], skeleton: &[u32]) -> usize {
    let mut partial: Vec<Option<u32>> = vec![None; tokens.len()];
    for (i, tok) in tokens.iter().enumerate() {
        if tok.is_some() {
            partial[i] = *tok;
            if Tables::build(&partial, skeleton).total() == 0 {
                return i;
            }
        }
    }
    tokens.len().saturating_sub(1)
}

/// Exact posterior marginals for every position given the visible tokens and
/// the target skeleton.
pub fn exact_posterior(
    tokens: &[Option<u32>],
    skeleton: &[u32],
    vocab_size: u32,
) -> Result<ExactPosterior> {
    let n = tokens.len();
    let m = skeleton.len();
    if n == 0 || m == 0 {
        return Err(Error::Empty("oracle query"));
    }
    if n > MAX_ORACLE_LEN {
        return Err(Error::config(format!(
            "target length {n} exceeds the oracle bound {MAX_ORACLE_LEN}"
        )));
    }
    if n < m {
        return Err(Error::config(format!(
            "target length {n} is shorter than the skeleton ({m} runs)"
        )));
    }
    if let Some(&u) = skeleton.iter().find(|&&u| u >= vocab_size) {
        return Err(Error::UnitOutOfRange {
            unit: u,
            vocab_size,
        });
    }
    let t = Tables::build(tokens, skeleton);
    let total = t.total();
    if total == 0 {
        return Err(Error::Contradiction {
            position: first_contradiction(tokens, skeleton),
        });
    }
    let mut counts = vec![vec![0u128; vocab_size as usize]; n];
    // difference array over positions: placements in which run j spans a..b
    for (j, &d) in skeleton.iter().enumerate() {
        let mut diff = vec![0i128; n + 1];
        for a in 0..n {
            let f = t.fwd[j][a];
            if f == 0 {
                continue;
            }
            for b in a + 1..=n {
                if !t.fits(j, a, b) {
                    break;
                }
                let w = f * t.bwd[j + 1][b];
                if w != 0 {
                    diff[a] += w as i128;
                    diff[b] -= w as i128;
                }
            }
        }
        let mut acc = 0i128;
        for i in 0..n {
            acc += diff[i];
            counts[i][d as usize] += acc as u128;
        }
    }
    Ok(ExactPosterior { total, counts })
}

/// Oracle posterior for the masked positions of `state`.
pub fn oracle_posterior(
    state: &DiffusionState,
    ctx: &SourceContext,
    spec: &ToyTaskSpec,
) -> Result<Predictions> {
    let skeleton = spec.map_skeleton(ctx.src_skeleton.units());
    let post = exact_posterior(state.tokens(), &skeleton, spec.v_tgt)?;
    let mut preds = Predictions::with_len(state.target_len());
    for i in state.masked_positions() {
        preds.insert(i, post.probabilities(i));
    }
    Ok(preds)
}

/// Number of full sequences of length `n` with an `m`-run skeleton: C(n-1, m-1).
pub fn composition_count(n: usize, m: usize) -> u128 {
    if m == 0 || n < m {
        return 0;
    }
    let (n, k) = ((n - 1) as u128, (m - 1) as u128);
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Log-probability of a complete output under the oracle joint given the
/// target skeleton, `None` if the output is impossible.
pub fn oracle_log_likelihood(output: &[u32], skeleton: &[u32]) -> Option<f64> {
    let mut dedup = output.to_vec();
    dedup.dedup();
    (dedup == skeleton).then(|| -(composition_count(output.len(), skeleton.len()) as f64).ln())
}

/// Exact-conditional denoiser for the toy task.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    pub spec: ToyTaskSpec,
}

impl OracleDenoiser {
    pub fn new(spec: ToyTaskSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }
}

impl Denoiser for OracleDenoiser {
    fn vocab_size(&self) -> u32 {
        self.spec.v_tgt
    }

    fn src_vocab_size(&self) -> u32 {
        self.spec.v_src
    }

    fn predict(&self, state: &DiffusionState, ctx: &SourceContext) -> Result<Predictions> {
        oracle_posterior(state, ctx, &self.spec)
    }
}
