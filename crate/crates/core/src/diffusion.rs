//! Absorbing-mask discrete diffusion over unit sequences.
//!
//! The forward process replaces each unit by `MASK` independently with
//! probability `γ(t)`. A [`Denoiser`] predicts categorical distributions for
//! masked positions; the [`sample`] loop starts from an all-masked sequence of
//! a caller-chosen length and commits units over `nfe` denoiser calls, so the
//! output length is fixed up front.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::units::{dedup, to_runs, unit_speed, SpeedEstimate, UnitSequence};

/// Round half to even, used for every rounded length and mask count.
pub fn round_count(x: f64) -> usize {
    x.round_ties_even().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSchedule {
    #[default]
    Linear,
    Cosine,
    Fixed(f64),
}

impl MaskSchedule {
    /// Mask probability at timestep `t ∈ [0, 1]`.
    pub fn gamma(&self, t: f64) -> f64 {
        match *self {
            MaskSchedule::Linear => t,
            MaskSchedule::Cosine => 1.0 - (FRAC_PI_2 * t).cos(),
            MaskSchedule::Fixed(rho) => rho,
        }
        .clamp(0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MaskSchedule::Fixed(rho) if !(0.0..=1.0).contains(&rho) => Err(Error::config(format!(
                "fixed mask ratio {rho} is outside [0, 1]"
            ))),
            _ => Ok(()),
        }
    }
}

/// Information a denoiser conditions on: the source units and what derives
/// from them.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceContext {
    pub src_units: UnitSequence,
    pub src_speed: SpeedEstimate,
    pub src_skeleton: UnitSequence,
}

impl SourceContext {
    pub fn new(src_units: UnitSequence) -> Result<Self> {
        let src_speed = unit_speed(&src_units)?;
        let src_skeleton = dedup(&src_units);
        Ok(Self {
            src_units,
            src_speed,
            src_skeleton,
        })
    }

    pub fn vocab_size(&self) -> u32 {
        self.src_units.vocab_size()
    }
}

/// A partially masked sequence; `None` is the absorbing `MASK` token.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    tokens: Vec<Option<u32>>,
    t: f64,
}

impl DiffusionState {
    pub fn new(tokens: Vec<Option<u32>>, t: f64) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Empty("diffusion state"));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::config(format!("timestep {t} is outside [0, 1]")));
        }
        Ok(Self { tokens, t })
    }

    pub fn fully_masked(target_len: usize) -> Result<Self> {
        Self::new(vec![None; target_len], 1.0)
    }

    pub fn tokens(&self) -> &[Option<u32>] {
        &self.tokens
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn target_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_masked(&self, i: usize) -> bool {
        self.tokens[i].is_none()
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        (0..self.tokens.len())
            .filter(|&i| self.is_masked(i))
            .collect()
    }

    pub fn masked_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_none()).count()
    }

    pub fn set(&mut self, i: usize, token: Option<u32>) {
        self.tokens[i] = token;
    }

    pub fn set_t(&mut self, t: f64) {
        self.t = t;
    }
}

/// Per-position categorical distributions, `None` where nothing is predicted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predictions {
    dists: Vec<Option<Vec<f64>>>,
}

impl Predictions {
    pub fn with_len(len: usize) -> Self {
        Self {
            dists: vec![None; len],
        }
    }

    pub fn insert(&mut self, pos: usize, dist: Vec<f64>) {
        self.dists[pos] = Some(dist);
    }

    pub fn get(&self, pos: usize) -> Option<&[f64]> {
        self.dists.get(pos).and_then(|d| d.as_deref())
    }

    pub fn len(&self) -> usize {
        self.dists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dists.is_empty()
    }

    pub fn covered_positions(&self) -> Vec<usize> {
        (0..self.dists.len())
            .filter(|&i| self.dists[i].is_some())
            .collect()
    }
}

/// Maps a partially masked state and its source context to distributions over
/// target units for every masked position. Implementations are read-only after
/// construction and deterministic; randomness lives in the sampler.
pub trait Denoiser: Sync {
    /// Size of the target vocabulary predicted over.
    fn vocab_size(&self) -> u32;

    /// Size of the source vocabulary the denoiser conditions on.
    fn src_vocab_size(&self) -> u32;

    fn predict(&self, state: &DiffusionState, ctx: &SourceContext) -> Result<Predictions>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn vocab_size(&self) -> u32 {
        (**self).vocab_size()
    }

    fn src_vocab_size(&self) -> u32 {
        (**self).src_vocab_size()
    }

    fn predict(&self, state: &DiffusionState, ctx: &SourceContext) -> Result<Predictions> {
        (**self).predict(state, ctx)
    }
}

/// Masks each position of `seq` independently with probability `γ(t)`.
pub fn forward_mask(
    seq: &UnitSequence,
    t: f64,
    schedule: MaskSchedule,
    seed: u64,
) -> Result<DiffusionState> {
    forward_mask_with(seq, t, schedule, &mut rng::rng_from_seed(seed))
}

pub fn forward_mask_with(
    seq: &UnitSequence,
    t: f64,
    schedule: MaskSchedule,
    rng: &mut Rng,
) -> Result<DiffusionState> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::config(format!("timestep {t} is outside [0, 1]")));
    }
    let gamma = schedule.gamma(t);
    let tokens = seq
        .units()
        .iter()
        .map(|&u| {
            if rng.gen::<f64>() < gamma {
                None
            } else {
                Some(u)
            }
        })
        .collect();
    DiffusionState::new(tokens, t)
}

/// Masked positions whose run in `truth` still has a visible member. Predicting
/// these is trivial: the neighbouring visible copy gives the answer away.
pub fn classify_trivial(state: &DiffusionState, truth: &UnitSequence) -> Result<BTreeSet<usize>> {
    if truth.len() != state.target_len() {
        return Err(Error::LengthMismatch {
            expected: state.target_len(),
            actual: truth.len(),
        });
    }
    let runs = to_runs(truth);
    let run_of = runs.run_index_per_position();
    let mut run_has_visible = vec![false; runs.len()];
    for (i, &j) in run_of.iter().enumerate() {
        if !state.is_masked(i) {
            run_has_visible[j] = true;
        }
    }
    Ok((0..truth.len())
        .filter(|&i| state.is_masked(i) && run_has_visible[run_of[i]])
        .collect())
}

/// Which positions the masked cross-entropy scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossStrategy {
    /// Every position, masked or not.
    All,
    /// Only masked positions.
    #[default]
    MaskedOnly,
    /// Masked positions minus the trivial ones (see [`classify_trivial`]).
    MaskedNonTrivial,
}

/// Positions scored under `strategy`, ascending.
pub fn scoring_set(
    strategy: LossStrategy,
    state: &DiffusionState,
    truth: &UnitSequence,
) -> Result<Vec<usize>> {
    if truth.len() != state.target_len() {
        return Err(Error::LengthMismatch {
            expected: state.target_len(),
            actual: truth.len(),
        });
    }
    Ok(match strategy {
        LossStrategy::All => (0..truth.len()).collect(),
        LossStrategy::MaskedOnly => state.masked_positions(),
        LossStrategy::MaskedNonTrivial => {
            let trivial = classify_trivial(state, truth)?;
            state
                .masked_positions()
                .into_iter()
                .filter(|i| !trivial.contains(i))
                .collect()
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Mean smoothed cross-entropy over the scoring set; 0 when it is empty.
    pub loss: f64,
    pub per_position: Vec<(usize, f64)>,
    /// Set when the scoring set was empty, so the step carries no signal.
    pub empty_mask: bool,
}

/// Cross-entropy of `dist` against a label-smoothed one-hot target: `1 - ε` on
/// `truth`, `ε / (V - 1)` on every other unit.
pub fn smoothed_cross_entropy(dist: &[f64], truth: u32, label_smoothing: f64) -> f64 {
    let v = dist.len();
    let off = if v > 1 {
        label_smoothing / (v - 1) as f64
    } else {
        0.0
    };
    let mut ce = 0.0;
    for (u, &p) in dist.iter().enumerate() {
        let w = if u == truth as usize {
            1.0 - label_smoothing
        } else {
            off
        };
        if w > 0.0 {
            ce -= w * p.ln();
        }
    }
    ce
}

/// The masked diffusion objective for one state: smoothed cross-entropy
/// averaged over the positions the strategy scores.
pub fn masked_ce_loss(
    predictions: &Predictions,
    truth: &UnitSequence,
    state: &DiffusionState,
    strategy: LossStrategy,
    label_smoothing: f64,
) -> Result<LossOutput> {
    if !(0.0..1.0).contains(&label_smoothing) {
        return Err(Error::config(format!(
            "label smoothing {label_smoothing} is outside [0, 1)"
        )));
    }
    let positions = scoring_set(strategy, state, truth)?;
    if positions.is_empty() {
        return Ok(LossOutput {
            loss: 0.0,
            per_position: Vec::new(),
            empty_mask: true,
        });
    }
    let mut per_position = Vec::with_capacity(positions.len());
    for &i in &positions {
        let dist = predictions.get(i).ok_or(Error::MissingPrediction(i))?;
        if dist.len() != truth.vocab_size() as usize {
            return Err(Error::DimensionMismatch {
                expected: truth.vocab_size() as usize,
                actual: dist.len(),
            });
        }
        per_position.push((
            i,
            smoothed_cross_entropy(dist, truth.units()[i], label_smoothing),
        ));
    }
    let loss = per_position.iter().map(|(_, l)| l).sum::<f64>() / positions.len() as f64;
    Ok(LossOutput {
        loss,
        per_position,
        empty_mask: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmaskRule {
    /// Commit the most confident draws first.
    Confidence,
    /// Commit a uniformly random subset of the draws.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub nfe: usize,
    pub unmask_rule: UnmaskRule,
    pub temperature: f64,
    pub seed: u64,
    pub schedule: MaskSchedule,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            nfe: 16,
            unmask_rule: UnmaskRule::Confidence,
            temperature: 1.0,
            seed: 0,
            schedule: MaskSchedule::Linear,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nfe < 1 {
            return Err(Error::config("nfe must be at least 1"));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::config(format!(
                "temperature {} must be a finite non-negative number",
                self.temperature
            )));
        }
        self.schedule.validate()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_nfe(mut self, nfe: usize) -> Self {
        self.nfe = nfe;
        self
    }
}

/// Number of positions left masked after sampler step `k` of `nfe`.
pub fn remaining_masked(target_len: usize, k: usize, nfe: usize, schedule: MaskSchedule) -> usize {
    if k >= nfe {
        return 0;
    }
    let t = (nfe - k) as f64 / nfe as f64;
    round_count(target_len as f64 * schedule.gamma(t)).min(target_len)
}

/// Draws a unit from `dist` sharpened by `1/temperature`; temperature 0 is the
/// argmax with ties to the lowest unit id.
fn draw_unit(dist: &[f64], temperature: f64, rng: &mut Rng) -> u32 {
    if temperature == 0.0 {
        let mut best = 0;
        for (u, &p) in dist.iter().enumerate() {
            if p > dist[best] {
                best = u;
            }
        }
        return best as u32;
    }
    let weights: Vec<f64> = if temperature == 1.0 {
        dist.to_vec()
    } else {
        dist.iter()
            .map(|&p| p.max(0.0).powf(1.0 / temperature))
            .collect()
    };
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    let mut last_positive = 0;
    for (u, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = u;
            if x < w {
                return u as u32;
            }
            x -= w;
        }
    }
    last_positive as u32
}

/// Generates exactly `target_len` units by iterative unmasking.
///
/// Starting from an all-masked state at `t = 1`, step `k` evaluates the
/// denoiser at `t_{k-1}`, draws a unit for every masked position and commits
/// enough of them that `round(target_len · γ(1 - k/nfe))` positions stay
/// masked (none after the last step).
pub fn sample<D: Denoiser + ?Sized>(
    denoiser: &D,
    ctx: &SourceContext,
    target_len: usize,
    cfg: &SamplerConfig,
) -> Result<UnitSequence> {
    sample_traced(denoiser, ctx, target_len, cfg, |_| {})
}

/// [`sample`] with a callback observing the state after every step.
pub fn sample_traced<D: Denoiser + ?Sized>(
    denoiser: &D,
    ctx: &SourceContext,
    target_len: usize,
    cfg: &SamplerConfig,
    mut on_step: impl FnMut(&DiffusionState),
) -> Result<UnitSequence> {
    cfg.validate()?;
    if target_len == 0 {
        return Err(Error::config("target length must be at least 1"));
    }
    if denoiser.src_vocab_size() != ctx.vocab_size() {
        return Err(Error::VocabMismatch(format!(
            "denoiser expects source vocabulary {}, context has {}",
            denoiser.src_vocab_size(),
            ctx.vocab_size()
        )));
    }
    let vocab = denoiser.vocab_size();
    let mut rng = rng::rng_from_seed(cfg.seed);
    let mut state = DiffusionState::fully_masked(target_len)?;
    let mut masked = target_len;

    for k in 1..=cfg.nfe {
        let t_next = (cfg.nfe - k) as f64 / cfg.nfe as f64;
        let remain = remaining_masked(target_len, k, cfg.nfe, cfg.schedule).min(masked);
        let preds = denoiser.predict(&state, ctx)?;

        let positions = state.masked_positions();
        let mut draws = Vec::with_capacity(positions.len());
        for &i in &positions {
            let dist = preds.get(i).ok_or(Error::MissingPrediction(i))?;
            if dist.len() != vocab as usize {
                return Err(Error::DimensionMismatch {
                    expected: vocab as usize,
                    actual: dist.len(),
                });
            }
            let unit = draw_unit(dist, cfg.temperature, &mut rng);
            draws.push((i, unit, dist[unit as usize]));
        }

        let commit = masked - remain;
        let chosen: Vec<usize> = match cfg.unmask_rule {
            UnmaskRule::Confidence => {
                let mut order: Vec<usize> = (0..draws.len()).collect();
                order.sort_by(|&a, &b| draws[b].2.total_cmp(&draws[a].2).then(a.cmp(&b)));
                order.truncate(commit);
                order
            }
            UnmaskRule::Random => index::sample(&mut rng, draws.len(), commit).into_vec(),
        };
        for d in chosen {
            let (i, unit, _) = draws[d];
            state.set(i, Some(unit));
        }
        masked = remain;
        state.set_t(t_next);
        on_step(&state);
    }

    let units = state
        .tokens()
        .iter()
        .map(|t| t.expect("all positions committed after the final step"))
        .collect();
    UnitSequence::new(units, vocab)
}

/// Samples once per duration ratio at length `round(base_len · ratio)`.
pub fn duration_sweep<D: Denoiser + ?Sized>(
    denoiser: &D,
    ctx: &SourceContext,
    base_len: usize,
    ratios: &[f64],
    cfg: &SamplerConfig,
) -> Result<Vec<UnitSequence>> {
    let lengths = ratios
        .iter()
        .map(|&r| {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::config(format!(
                    "duration ratio {r} must be positive"
                )));
            }
            match round_count(base_len as f64 * r) {
                0 => Err(Error::config(format!(
                    "duration ratio {r} rounds base length {base_len} to zero"
                ))),
                n => Ok(n),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    lengths
        .into_iter()
        .map(|n| sample(denoiser, ctx, n, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(units: &[u32], v: u32) -> UnitSequence {
        UnitSequence::new(units.to_vec(), v).unwrap()
    }

    fn state(tokens: &[Option<u32>]) -> DiffusionState {
        DiffusionState::new(tokens.to_vec(), 0.5).unwrap()
    }

    /// Always predicts the same distribution.
    struct Fixed {
        dist: Vec<f64>,
    }

    impl Denoiser for Fixed {
        fn vocab_size(&self) -> u32 {
            self.dist.len() as u32
        }
        fn src_vocab_size(&self) -> u32 {
            4
        }
        fn predict(&self, state: &DiffusionState, _: &SourceContext) -> Result<Predictions> {
            let mut p = Predictions::with_len(state.target_len());
            for i in state.masked_positions() {
                p.insert(i, self.dist.clone());
            }
            Ok(p)
        }
    }

    fn ctx() -> SourceContext {
        SourceContext::new(seq(&[0, 1, 2, 3], 4)).unwrap()
    }

    #[test]
    fn schedules() {
        for s in [MaskSchedule::Linear, MaskSchedule::Cosine] {
            assert_eq!(s.gamma(0.0), 0.0);
            assert!((s.gamma(1.0) - 1.0).abs() < 1e-15);
            let mut prev = -1.0;
            for k in 0..=100 {
                let g = s.gamma(k as f64 / 100.0);
                assert!(g > prev);
                prev = g;
            }
        }
        assert_eq!(MaskSchedule::Fixed(0.5).gamma(0.1), 0.5);
        assert!(MaskSchedule::Fixed(1.5).validate().is_err());
    }

    #[test]
    fn schedule_json_forms() {
        let s: MaskSchedule = serde_json::from_str(r#"{"fixed":0.5}"#).unwrap();
        assert_eq!(s, MaskSchedule::Fixed(0.5));
        let s: MaskSchedule = serde_json::from_str(r#""cosine""#).unwrap();
        assert_eq!(s, MaskSchedule::Cosine);
        let cfg: SamplerConfig = serde_json::from_str(
            r#"{"nfe":4,"unmask_rule":"random","temperature":0.5,"seed":9,"schedule":"linear"}"#,
        )
        .unwrap();
        assert_eq!(cfg.nfe, 4);
        assert_eq!(cfg.unmask_rule, UnmaskRule::Random);
    }

    #[test]
    fn forward_mask_endpoints() {
        let s = seq(&[1, 2, 3, 3, 0, 1], 4);
        assert_eq!(
            forward_mask(&s, 0.0, MaskSchedule::Linear, 1)
                .unwrap()
                .masked_count(),
            0
        );
        assert_eq!(
            forward_mask(&s, 1.0, MaskSchedule::Linear, 1)
                .unwrap()
                .masked_count(),
            6
        );
        assert!(forward_mask(&s, 1.5, MaskSchedule::Linear, 1).is_err());
    }

    #[test]
    fn forward_mask_rate_and_reproducibility() {
        let s = seq(&vec![1; 10_000], 4);
        let a = forward_mask(&s, 0.3, MaskSchedule::Linear, 42).unwrap();
        let frac = a.masked_count() as f64 / 10_000.0;
        assert!((0.28..=0.32).contains(&frac), "{frac}");
        assert_eq!(a, forward_mask(&s, 0.3, MaskSchedule::Linear, 42).unwrap());
    }

    #[test]
    fn trivial_positions() {
        let truth = seq(&[1, 1, 2], 4);
        let st = state(&[None, Some(1), Some(2)]);
        assert_eq!(classify_trivial(&st, &truth).unwrap(), BTreeSet::from([0]));
        let st = state(&[None, None, None]);
        assert!(classify_trivial(&st, &truth).unwrap().is_empty());
        let truth = seq(&[1, 2, 3], 4);
        for mask in 0..8u32 {
            let toks: Vec<_> = (0..3)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        None
                    } else {
                        Some(truth.units()[i])
                    }
                })
                .collect();
            assert!(classify_trivial(&state(&toks), &truth).unwrap().is_empty());
        }
        assert!(matches!(
            classify_trivial(&state(&[None, None]), &truth),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn loss_examples() {
        let truth = seq(&[0, 1, 2], 4);
        let st = state(&[None, Some(1), None]);
        let mut one_hot = Predictions::with_len(3);
        one_hot.insert(0, vec![1.0, 0.0, 0.0, 0.0]);
        one_hot.insert(2, vec![0.0, 0.0, 1.0, 0.0]);
        let out = masked_ce_loss(&one_hot, &truth, &st, LossStrategy::MaskedOnly, 0.0).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(!out.empty_mask);

        let mut uniform = Predictions::with_len(3);
        for i in 0..3 {
            uniform.insert(i, vec![0.25; 4]);
        }
        for strategy in [LossStrategy::All, LossStrategy::MaskedOnly] {
            let out = masked_ce_loss(&uniform, &truth, &st, strategy, 0.0).unwrap();
            assert!((out.loss - 4f64.ln()).abs() < 1e-12);
        }

        let st = state(&[None, Some(1), Some(2)]);
        let mut p = Predictions::with_len(3);
        p.insert(0, vec![0.7, 0.1, 0.1, 0.1]);
        let out = masked_ce_loss(&p, &truth, &st, LossStrategy::MaskedOnly, 0.01).unwrap();
        let expected = -(0.99 * 0.7f64.ln() + 3.0 * (0.01 / 3.0) * 0.1f64.ln());
        assert!((out.loss - expected).abs() < 1e-12);
        assert_eq!(out.per_position.len(), 1);
    }

    #[test]
    fn empty_scoring_set_is_flagged() {
        let truth = seq(&[0, 1], 4);
        let st = state(&[Some(0), Some(1)]);
        let out = masked_ce_loss(
            &Predictions::with_len(2),
            &truth,
            &st,
            LossStrategy::MaskedOnly,
            0.01,
        )
        .unwrap();
        assert!(out.empty_mask);
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn missing_prediction_is_an_error() {
        let truth = seq(&[0, 1], 4);
        let st = state(&[None, Some(1)]);
        assert!(matches!(
            masked_ce_loss(
                &Predictions::with_len(2),
                &truth,
                &st,
                LossStrategy::All,
                0.0
            ),
            Err(Error::MissingPrediction(0))
        ));
    }

    #[test]
    fn strategy_sets_nest() {
        let truth = seq(&[0, 0, 1, 1, 1, 2, 3, 3], 4);
        for seed in 0..50 {
            let st = forward_mask(&truth, 0.6, MaskSchedule::Linear, seed).unwrap();
            let all = scoring_set(LossStrategy::All, &st, &truth).unwrap();
            let masked = scoring_set(LossStrategy::MaskedOnly, &st, &truth).unwrap();
            let nontrivial = scoring_set(LossStrategy::MaskedNonTrivial, &st, &truth).unwrap();
            assert!(nontrivial.iter().all(|i| masked.contains(i)));
            assert!(masked.iter().all(|i| all.contains(i)));
        }
    }

    #[test]
    fn sampler_length_and_mask_counts() {
        let d = Fixed {
            dist: vec![0.1, 0.2, 0.3, 0.4],
        };
        for schedule in [
            MaskSchedule::Linear,
            MaskSchedule::Cosine,
            MaskSchedule::Fixed(0.5),
        ] {
            for rule in [UnmaskRule::Confidence, UnmaskRule::Random] {
                for nfe in [1, 3, 7, 20] {
                    let cfg = SamplerConfig {
                        nfe,
                        unmask_rule: rule,
                        temperature: 1.0,
                        seed: 3,
                        schedule,
                    };
                    let mut counts = Vec::new();
                    let out =
                        sample_traced(&d, &ctx(), 11, &cfg, |s| counts.push(s.masked_count()))
                            .unwrap();
                    assert_eq!(out.len(), 11);
                    assert_eq!(counts.len(), nfe);
                    assert_eq!(*counts.last().unwrap(), 0);
                    assert!(counts.windows(2).all(|w| w[0] >= w[1]));
                    if schedule != MaskSchedule::Fixed(0.5) {
                        for (k, &c) in counts.iter().enumerate() {
                            assert_eq!(c, remaining_masked(11, k + 1, nfe, schedule));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sampler_is_deterministic_and_validates() {
        let d = Fixed {
            dist: vec![0.25; 4],
        };
        let cfg = SamplerConfig::default().with_seed(11);
        let a = sample(&d, &ctx(), 20, &cfg).unwrap();
        assert_eq!(a, sample(&d, &ctx(), 20, &cfg).unwrap());
        assert_ne!(a, sample(&d, &ctx(), 20, &cfg.with_seed(12)).unwrap());
        assert!(sample(&d, &ctx(), 20, &cfg.with_nfe(0)).is_err());
        assert!(sample(&d, &ctx(), 0, &cfg).is_err());
    }

    #[test]
    fn zero_temperature_is_argmax() {
        let d = Fixed {
            dist: vec![0.3, 0.3, 0.4, 0.0],
        };
        let cfg = SamplerConfig {
            temperature: 0.0,
            ..SamplerConfig::default()
        };
        assert_eq!(sample(&d, &ctx(), 5, &cfg).unwrap().units(), &[2; 5]);
        let d = Fixed {
            dist: vec![0.1, 0.45, 0.45, 0.0],
        };
        assert_eq!(sample(&d, &ctx(), 3, &cfg).unwrap().units(), &[1; 3]);
    }

    #[test]
    fn duration_sweep_lengths() {
        let d = Fixed {
            dist: vec![0.25; 4],
        };
        let cfg = SamplerConfig::default();
        let outs = duration_sweep(&d, &ctx(), 100, &[0.8, 0.9, 1.0, 1.1, 1.2], &cfg).unwrap();
        let lens: Vec<_> = outs.iter().map(|s| s.len()).collect();
        assert_eq!(lens, vec![80, 90, 100, 110, 120]);
        assert_eq!(
            duration_sweep(&d, &ctx(), 7, &[1.0], &cfg).unwrap()[0].len(),
            7
        );
        assert_eq!(
            duration_sweep(&d, &ctx(), 3, &[0.5], &cfg).unwrap()[0].len(),
            2
        );
        assert!(duration_sweep(&d, &ctx(), 3, &[0.1], &cfg).is_err());
        assert!(duration_sweep(&d, &ctx(), 3, &[-1.0], &cfg).is_err());
    }
}
