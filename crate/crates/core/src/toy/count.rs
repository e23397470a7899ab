//! Count-based denoiser trained with the masked diffusion objective.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::distributions::Open01;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    forward_mask_with, masked_ce_loss, scoring_set, Denoiser, DiffusionState, LossStrategy,
    MaskSchedule, Predictions, SourceContext,
};
use crate::error::{Error, Result};
use crate::par;
use crate::rng;

use super::oracle::{exact_posterior, MAX_ORACLE_LEN};
use super::task::{ParallelPair, ToyTaskSpec};

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

/// What a position sees of one neighbouring slot in the noisy sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Boundary,
    Mask,
    Unit(u32),
}

impl Slot {
    fn of(token: Option<u32>) -> Self {
        token.map_or(Slot::Mask, Slot::Unit)
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Boundary => f.write_str("B"),
            Slot::Mask => f.write_str("M"),
            Slot::Unit(u) => write!(f, "{u}"),
        }
    }
}

impl FromStr for Slot {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B" => Ok(Slot::Boundary),
            "M" => Ok(Slot::Mask),
            _ => s
                .parse()
                .map(Slot::Unit)
                .map_err(|_| Error::config(format!("bad slot '{s}'"))),
        }
    }
}

/// Feature tuple a count cell is keyed by: the source skeleton symbol aligned
/// to the position, the left neighbour slot, the position's own slot in the
/// noisy input, and the quantized timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountKey {
    pub src_symbol: u32,
    pub left: Slot,
    pub this: Slot,
    pub t_bin: u32,
}

impl fmt::Display for CountKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "s{}|l{}|x{}|t{}",
            self.src_symbol, self.left, self.this, self.t_bin
        )
    }
}

impl FromStr for CountKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("bad count key '{s}'"));
        let mut parts = s.split('|');
        let mut field = |prefix: char| -> Result<&str> {
            parts
                .next()
                .and_then(|p| p.strip_prefix(prefix))
                .ok_or_else(bad)
        };
        let src_symbol = field('s')?.parse().map_err(|_| bad())?;
        let left = field('l')?.parse()?;
        let this = field('x')?.parse()?;
        let t_bin = field('t')?.parse().map_err(|_| bad())?;
        Ok(CountKey {
            src_symbol,
            left,
            this,
            t_bin,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountDenoiser {
    v_src: u32,
    v_tgt: u32,
    smoothing_alpha: f64,
    t_bins: u32,
    counts: BTreeMap<CountKey, Vec<u64>>,
}

impl CountDenoiser {
    pub fn new(v_src: u32, v_tgt: u32, smoothing_alpha: f64, t_bins: u32) -> Result<Self> {
        if !(smoothing_alpha > 0.0) || !smoothing_alpha.is_finite() {
            return Err(Error::config("smoothing_alpha must be positive"));
        }
        if t_bins == 0 {
            return Err(Error::config("t_bins must be positive"));
        }
        if v_src == 0 || v_tgt == 0 {
            return Err(Error::config("vocabulary sizes must be positive"));
        }
        Ok(Self {
            v_src,
            v_tgt,
            smoothing_alpha,
            t_bins,
            counts: BTreeMap::new(),
        })
    }

    pub fn t_bins(&self) -> u32 {
        self.t_bins
    }

    pub fn smoothing_alpha(&self) -> f64 {
        self.smoothing_alpha
    }

    pub fn counts(&self) -> &BTreeMap<CountKey, Vec<u64>> {
        &self.counts
    }

    pub fn t_bin(&self, t: f64) -> u32 {
        ((t * self.t_bins as f64).floor() as u32).min(self.t_bins - 1)
    }

    /// Features of position `i`. The position is aligned to source skeleton
    /// index `floor(i · m / N)`.
    pub fn key(&self, state: &DiffusionState, ctx: &SourceContext, i: usize) -> CountKey {
        let skeleton = ctx.src_skeleton.units();
        let n = state.target_len();
        let j = i * skeleton.len() / n;
        CountKey {
            src_symbol: skeleton[j],
            left: if i == 0 {
                Slot::Boundary
            } else {
                Slot::of(state.tokens()[i - 1])
            },
            this: Slot::of(state.tokens()[i]),
            t_bin: self.t_bin(state.t()),
        }
    }

    /// Additively smoothed distribution for a key; uniform for unseen keys.
    pub fn distribution(&self, key: &CountKey) -> Vec<f64> {
        let v = self.v_tgt as usize;
        let alpha = self.smoothing_alpha;
        match self.counts.get(key) {
            Some(c) => {
                let total = c.iter().sum::<u64>() as f64 + alpha * v as f64;
                c.iter().map(|&x| (x as f64 + alpha) / total).collect()
            }
            None => vec![1.0 / v as f64; v],
        }
    }

    /// Predictions at arbitrary positions (masked or not).
    pub fn predict_positions(
        &self,
        state: &DiffusionState,
        ctx: &SourceContext,
        positions: &[usize],
    ) -> Predictions {
        let mut preds = Predictions::with_len(state.target_len());
        for &i in positions {
            preds.insert(i, self.distribution(&self.key(state, ctx, i)));
        }
        preds
    }

    fn observe(&mut self, key: CountKey, unit: u32) {
        let v = self.v_tgt as usize;
        self.counts.entry(key).or_insert_with(|| vec![0; v])[unit as usize] += 1;
    }

    pub fn to_artifact(&self) -> CountArtifact {
        CountArtifact {
            format_version: ARTIFACT_FORMAT_VERSION,
            v_src: self.v_src,
            v_tgt: self.v_tgt,
            smoothing_alpha: self.smoothing_alpha,
            t_bins: self.t_bins,
            counts: self
                .counts
                .iter()
                .map(|(k, c)| (k.to_string(), c.clone()))
                .collect(),
        }
    }

    pub fn from_artifact(artifact: CountArtifact) -> Result<Self> {
        if artifact.format_version != ARTIFACT_FORMAT_VERSION {
            return Err(Error::config(format!(
                "unsupported model format version {}",
                artifact.format_version
            )));
        }
        let mut model = Self::new(
            artifact.v_src,
            artifact.v_tgt,
            artifact.smoothing_alpha,
            artifact.t_bins,
        )?;
        for (k, c) in artifact.counts {
            if c.len() != artifact.v_tgt as usize {
                return Err(Error::DimensionMismatch {
                    expected: artifact.v_tgt as usize,
                    actual: c.len(),
                });
            }
            model.counts.insert(k.parse()?, c);
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_artifact())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_artifact(serde_json::from_str(s)?)
    }
}

/// Serialized form of a [`CountDenoiser`]; keys are sorted, counts are integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountArtifact {
    pub format_version: u32,
    pub v_src: u32,
    pub v_tgt: u32,
    pub smoothing_alpha: f64,
    pub t_bins: u32,
    pub counts: BTreeMap<String, Vec<u64>>,
}

impl Denoiser for CountDenoiser {
    fn vocab_size(&self) -> u32 {
        self.v_tgt
    }

    fn src_vocab_size(&self) -> u32 {
        self.v_src
    }

    fn predict(&self, state: &DiffusionState, ctx: &SourceContext) -> Result<Predictions> {
        Ok(self.predict_positions(state, ctx, &state.masked_positions()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub schedule: MaskSchedule,
    pub strategy: LossStrategy,
    pub label_smoothing: f64,
    pub seed: u64,
    pub t_bins: u32,
    pub smoothing_alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 50_000,
            schedule: MaskSchedule::Linear,
            strategy: LossStrategy::MaskedOnly,
            label_smoothing: 0.01,
            seed: 0,
            t_bins: 4,
            smoothing_alpha: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CountDenoiser,
    /// Mean training loss over consecutive windows of `trace_window` steps.
    pub loss_trace: Vec<f64>,
    pub trace_window: usize,
}

fn check_corpus(corpus: &[ParallelPair]) -> Result<(u32, u32)> {
    let first = corpus.first().ok_or(Error::Empty("training corpus"))?;
    let (v_src, v_tgt) = (first.src.vocab_size(), first.tgt.vocab_size());
    for p in corpus {
        if p.src.vocab_size() != v_src || p.training_target().vocab_size() != v_tgt {
            return Err(Error::VocabMismatch(format!(
                "pair {} does not share vocabularies ({v_src}, {v_tgt})",
                p.id
            )));
        }
    }
    Ok((v_src, v_tgt))
}

/// Fits a [`CountDenoiser`].
///
/// Every step draws a pair and `t ~ U(0, 1)`, masks the training target with
/// the schedule, scores the loss of the current model on the positions the
/// strategy selects, then adds those positions to the counts.
pub fn train_count_denoiser(corpus: &[ParallelPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (v_src, v_tgt) = check_corpus(corpus)?;
    cfg.schedule.validate()?;
    let mut model = CountDenoiser::new(v_src, v_tgt, cfg.smoothing_alpha, cfg.t_bins)?;
    let contexts = corpus
        .iter()
        .map(|p| SourceContext::new(p.src.clone()))
        .collect::<Result<Vec<_>>>()?;

    let trace_window = (cfg.steps / 100).max(1);
    let mut loss_trace = Vec::new();
    let (mut window_sum, mut window_n) = (0.0, 0usize);

    for step in 0..cfg.steps {
        let mut rng = rng::stream_rng(cfg.seed, step as u64);
        let idx = rng.gen_range(0..corpus.len());
        let t: f64 = rng.sample(Open01);
        let truth = corpus[idx].training_target();
        let ctx = &contexts[idx];
        let state = forward_mask_with(truth, t, cfg.schedule, &mut rng)?;
        let positions = scoring_set(cfg.strategy, &state, truth)?;

        let preds = model.predict_positions(&state, ctx, &positions);
        let out = masked_ce_loss(&preds, truth, &state, cfg.strategy, cfg.label_smoothing)?;
        if !out.empty_mask {
            window_sum += out.loss;
            window_n += 1;
        }
        for &i in &positions {
            let key = model.key(&state, ctx, i);
            model.observe(key, truth.units()[i]);
        }
        if (step + 1) % trace_window == 0 {
            if window_n > 0 {
                loss_trace.push(window_sum / window_n as f64);
            }
            window_sum = 0.0;
            window_n = 0;
        }
    }
    Ok(TrainOutcome {
        model,
        loss_trace,
        trace_window,
    })
}

/// Mean cross-entropy from the oracle posterior to the model's predictions at
/// masked positions of freshly masked held-out targets. Pairs longer than the
/// oracle bound are skipped.
pub fn held_out_oracle_ce<D: Denoiser + ?Sized>(
    model: &D,
    pairs: &[ParallelPair],
    spec: &ToyTaskSpec,
    schedule: MaskSchedule,
    states_per_pair: usize,
    seed: u64,
) -> Result<f64> {
    let per_pair = par::try_map_slice(pairs, |idx, pair| {
        let truth = pair.training_target();
        if truth.len() > MAX_ORACLE_LEN {
            return Ok((0.0, 0usize));
        }
        let ctx = SourceContext::new(pair.src.clone())?;
        let skeleton = spec.map_skeleton(ctx.src_skeleton.units());
        let (mut sum, mut n) = (0.0, 0usize);
        for s in 0..states_per_pair {
            let mut rng = rng::stream_rng(seed, (idx * states_per_pair + s) as u64);
            let t: f64 = rng.sample(Open01);
            let state = forward_mask_with(truth, t, schedule, &mut rng)?;
            if state.masked_count() == 0 {
                continue;
            }
            let post = exact_posterior(state.tokens(), &skeleton, spec.v_tgt)?;
            let preds = model.predict(&state, &ctx)?;
            for i in state.masked_positions() {
                let q = preds.get(i).ok_or(Error::MissingPrediction(i))?;
                let p = post.probabilities(i);
                sum -= p
                    .iter()
                    .zip(q)
                    .filter(|(&p, _)| p > 0.0)
                    .map(|(&p, &q)| p * q.ln())
                    .sum::<f64>();
                n += 1;
            }
        }
        Ok((sum, n))
    })?;
    let (sum, n) = per_pair
        .iter()
        .fold((0.0, 0usize), |(s, n), &(ps, pn)| (s + ps, n + pn));
    if n == 0 {
        return Err(Error::Empty("held-out masked positions"));
    }
    Ok(sum / n as f64)
}
