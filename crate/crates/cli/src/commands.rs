use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;
use unitdub::diffusion::{sample, Denoiser, DiffusionState, Predictions, SamplerConfig};
use unitdub::flow::{run_gaussian_suite, FlowSuiteReport};
use unitdub::io::{read_corpus, read_jsonl, write_corpus, write_jsonl, UnitRecord};
use unitdub::metrics::{self, ComplianceReport, Histogram, PairedMeasures};
use unitdub::par;
use unitdub::rng::derive_seed;
use unitdub::toy::{
    adapt_corpus, duration_sweep_corpus, evaluate_translation, generate_corpus,
    train_count_denoiser, CountDenoiser, OracleDenoiser, ParallelPair, SourceContext,
};
use unitdub::units::unit_speed;
use unitdub::UnitSequence;

use crate::config::RunConfig;
use crate::exit::{CliError, CliResult};
use crate::manifest::{Outputs, RunManifest};

/// Shared state for one invocation.
pub struct Ctx {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
}

impl Ctx {
    fn out(&self, name: &Path) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NfeChoice {
    Fixed(usize),
    /// One step per target position.
    Len,
}

impl std::str::FromStr for NfeChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "len" => Ok(NfeChoice::Len),
            _ => match s.parse::<usize>() {
                Ok(n) if n >= 1 => Ok(NfeChoice::Fixed(n)),
                _ => Err(format!("expected a positive integer or \"len\", got {s:?}")),
            },
        }
    }
}

/// A count model loaded from disk or the exact oracle.
pub enum LoadedDenoiser {
    Count(CountDenoiser),
    Oracle(OracleDenoiser),
}

impl Denoiser for LoadedDenoiser {
    fn vocab_size(&self) -> u32 {
        match self {
            LoadedDenoiser::Count(d) => d.vocab_size(),
            LoadedDenoiser::Oracle(d) => d.vocab_size(),
        }
    }

    fn src_vocab_size(&self) -> u32 {
        match self {
            LoadedDenoiser::Count(d) => d.src_vocab_size(),
            LoadedDenoiser::Oracle(d) => d.src_vocab_size(),
        }
    }

    fn predict(&self, state: &DiffusionState, ctx: &SourceContext) -> unitdub::Result<Predictions> {
        match self {
            LoadedDenoiser::Count(d) => d.predict(state, ctx),
            LoadedDenoiser::Oracle(d) => d.predict(state, ctx),
        }
    }
}

struct Corpus {
    pairs: Vec<ParallelPair>,
    v_src: u32,
    v_tgt: u32,
}

fn load_corpus(path: &Path) -> CliResult<Corpus> {
    let file = File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let pairs =
        read_corpus(BufReader::new(file)).map_err(|e| CliError::from(e).context(path.display()))?;
    let (v_src, v_tgt) = pairs
        .first()
        .map(|p| (p.src.vocab_size(), p.tgt.vocab_size()))
        .unwrap_or((0, 0));
    for (i, p) in pairs.iter().enumerate() {
        if p.src.vocab_size() != v_src || p.tgt.vocab_size() != v_tgt {
            return Err(CliError::data(format!(
                "{}: line {}: vocabularies ({}, {}) differ from the first record ({v_src}, {v_tgt})",
                path.display(),
                i + 1,
                p.src.vocab_size(),
                p.tgt.vocab_size()
            )));
        }
    }
    Ok(Corpus {
        pairs,
        v_src,
        v_tgt,
    })
}

fn load_denoiser(ctx: &Ctx, model: Option<&Path>, oracle: bool) -> CliResult<LoadedDenoiser> {
    match (model, oracle) {
        (_, true) => Ok(LoadedDenoiser::Oracle(OracleDenoiser::new(
            ctx.cfg.task.clone(),
        )?)),
        (Some(path), false) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            let model = CountDenoiser::from_json(&text)
                .map_err(|e| CliError::from(e).context(path.display()))?;
            Ok(LoadedDenoiser::Count(model))
        }
        (None, false) => Err(CliError::config(
            "either --model or --denoiser oracle is required",
        )),
    }
}

fn check_vocab(denoiser: &dyn Denoiser, corpus: &Corpus) -> CliResult<()> {
    if corpus.pairs.is_empty() {
        return Ok(());
    }
    if denoiser.src_vocab_size() != corpus.v_src || denoiser.vocab_size() != corpus.v_tgt {
        return Err(CliError::data(format!(
            "vocabulary mismatch: denoiser is ({}, {}), corpus is ({}, {})",
            denoiser.src_vocab_size(),
            denoiser.vocab_size(),
            corpus.v_src,
            corpus.v_tgt
        )));
    }
    Ok(())
}

fn check_task_vocab(ctx: &Ctx, corpus: &Corpus) -> CliResult<()> {
    let task = &ctx.cfg.task;
    if !corpus.pairs.is_empty() && (corpus.v_src != task.v_src || corpus.v_tgt != task.v_tgt) {
        return Err(CliError::data(format!(
            "vocabulary mismatch: config task is ({}, {}), corpus is ({}, {})",
            task.v_src, task.v_tgt, corpus.v_src, corpus.v_tgt
        )));
    }
    Ok(())
}

fn jsonl_bytes<T: Serialize>(records: &[T]) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, records)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    Ok(buf)
}

fn fmt_corr(c: Option<f64>) -> String {
    c.map_or_else(|| "undefined".to_owned(), |c| format!("{c:.4}"))
}

fn speeds<'a>(seqs: impl Iterator<Item = &'a UnitSequence>) -> CliResult<Vec<f64>> {
    seqs.map(|s| Ok(unit_speed(s)?.as_f64())).collect()
}

fn correlation(src: &[f64], gen: &[f64]) -> CliResult<Option<f64>> {
    match metrics::pearson(src, gen) {
        Ok(c) => Ok(Some(c)),
        Err(unitdub::Error::Undefined(_)) | Err(unitdub::Error::Empty(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn gen_corpus(ctx: &Ctx, n_pairs: Option<usize>, output: &Path) -> CliResult<()> {
    let n = n_pairs.unwrap_or(ctx.cfg.corpus.n_pairs);
    let mut cfg = ctx.cfg.clone();
    cfg.corpus.n_pairs = n;
    let corpus = generate_corpus(&cfg.task, n)?;
    let mut buf = Vec::new();
    write_corpus(&mut buf, &corpus)?;
    let manifest = RunManifest::new("gen-corpus", &cfg);
    let mut outputs = Outputs::new(&manifest, &cfg, &[]);
    let path = ctx.out(output);
    outputs.artifact(path.clone(), buf);
    outputs.commit()?;
    println!("wrote {n} pairs to {}", path.display());
    Ok(())
}

pub fn adapt(ctx: &Ctx, input: &Path, output: &Path, on: bool) -> CliResult<()> {
    let corpus = load_corpus(input)?;
    let adapted = adapt_corpus(&corpus.pairs, on)?;
    let src = speeds(adapted.iter().map(|p| &p.src))?;
    let raw = speeds(adapted.iter().map(|p| &p.tgt))?;
    let adj = speeds(adapted.iter().map(|p| p.training_target()))?;
    let mut buf = Vec::new();
    write_corpus(&mut buf, &adapted)?;
    let manifest = RunManifest::new("adapt", &ctx.cfg);
    let mut outputs = Outputs::new(&manifest, &ctx.cfg, &[input]);
    let path = ctx.out(output);
    outputs.artifact(path.clone(), buf);
    outputs.commit()?;
    println!(
        "adapted {} pairs (adaptation {}) to {}",
        adapted.len(),
        if on { "on" } else { "off" },
        path.display()
    );
    println!(
        "speed correlation src/raw tgt:     {}",
        fmt_corr(correlation(&src, &raw)?)
    );
    println!(
        "speed correlation src/adapted tgt: {}",
        fmt_corr(correlation(&src, &adj)?)
    );
    Ok(())
}

pub fn train(ctx: &Ctx, corpus_path: &Path, output: &Path) -> CliResult<()> {
    let corpus = load_corpus(corpus_path)?;
    let outcome = train_count_denoiser(&corpus.pairs, &ctx.cfg.train)?;
    let json = outcome.model.to_json()?;
    let mut trace = String::from("window,mean_loss\n");
    for (i, l) in outcome.loss_trace.iter().enumerate() {
        let _ = writeln!(trace, "{i},{l}");
    }
    let manifest = RunManifest::new("train", &ctx.cfg);
    let mut outputs = Outputs::new(&manifest, &ctx.cfg, &[corpus_path]);
    let path = ctx.out(output);
    outputs.artifact(path.clone(), json.into_bytes());
    outputs.artifact(path.with_extension("loss.csv"), trace.into_bytes());
    outputs.commit()?;
    println!(
        "trained on {} pairs for {} steps; final window loss {}",
        corpus.pairs.len(),
        ctx.cfg.train.steps,
        outcome
            .loss_trace
            .last()
            .map_or_else(|| "n/a".to_owned(), |l| format!("{l:.4}"))
    );
    println!("model written to {}", path.display());
    Ok(())
}

pub struct TranslateArgs<'a> {
    pub corpus: &'a Path,
    pub model: Option<&'a Path>,
    pub oracle: bool,
    pub nfe: Option<NfeChoice>,
    pub sampler: SamplerConfig,
    pub output: &'a Path,
}

pub fn translate(ctx: &Ctx, args: TranslateArgs<'_>) -> CliResult<()> {
    let corpus = load_corpus(args.corpus)?;
    let denoiser = load_denoiser(ctx, args.model, args.oracle)?;
    check_vocab(&denoiser, &corpus)?;
    args.sampler.validate()?;
    let nfe = args.nfe.unwrap_or(NfeChoice::Fixed(args.sampler.nfe));
    let outs = par::try_map_slice(&corpus.pairs, |i, pair| {
        let src_ctx = SourceContext::new(pair.src.clone())?;
        let n = pair.src.len();
        let mut cfg = args
            .sampler
            .with_seed(derive_seed(args.sampler.seed, i as u64));
        cfg.nfe = match nfe {
            NfeChoice::Fixed(k) => k,
            NfeChoice::Len => n,
        };
        let out = sample(&denoiser, &src_ctx, n, &cfg)?;
        Ok(UnitRecord::new(pair.id.clone(), &out))
    })?;
    let mut cfg = ctx.cfg.clone();
    cfg.sampler = args.sampler;
    let manifest = RunManifest::new("translate", &cfg);
    let inputs: Vec<&Path> = [Some(args.corpus), args.model]
        .into_iter()
        .flatten()
        .collect();
    let mut outputs = Outputs::new(&manifest, &cfg, &inputs);
    let path = ctx.out(args.output);
    outputs.artifact(path.clone(), jsonl_bytes(&outs)?);
    outputs.commit()?;
    println!("translated {} pairs to {}", outs.len(), path.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalReport {
    manifest: RunManifest,
    compliance: ComplianceReport,
    mean_src_speed: f64,
    mean_gen_speed: f64,
}

fn histogram_csv(h: &Histogram) -> Vec<u8> {
    h.to_csv().into_bytes()
}

fn mean(xs: &[f64]) -> f64 {
    par::ordered_sum(xs) / xs.len() as f64
}

pub fn eval(ctx: &Ctx, outputs_path: &Path, corpus_path: &Path) -> CliResult<()> {
    let corpus = load_corpus(corpus_path)?;
    let file = File::open(outputs_path)
        .map_err(|e| CliError::data(format!("{}: {e}", outputs_path.display())))?;
    let records: Vec<UnitRecord> = read_jsonl(BufReader::new(file))
        .map_err(|e| CliError::from(e).context(outputs_path.display()))?;
    if records.len() != corpus.pairs.len() {
        return Err(CliError::data(format!(
            "{} has {} records but the corpus has {} pairs",
            outputs_path.display(),
            records.len(),
            corpus.pairs.len()
        )));
    }
    let mut generated = Vec::with_capacity(records.len());
    for (line, (rec, pair)) in records.iter().zip(&corpus.pairs).enumerate() {
        if rec.id != pair.id {
            return Err(CliError::data(format!(
                "{}: line {}: id {:?} does not match corpus id {:?}",
                outputs_path.display(),
                line + 1,
                rec.id,
                pair.id
            )));
        }
        if rec.vocab_size != corpus.v_tgt {
            return Err(CliError::data(format!(
                "{}: line {}: vocabulary {} differs from the corpus target vocabulary {}",
                outputs_path.display(),
                line + 1,
                rec.vocab_size,
                corpus.v_tgt
            )));
        }
        generated.push(rec.to_sequence().map_err(|e| {
            CliError::from(e).context(format!("{}: line {}", outputs_path.display(), line + 1))
        })?);
    }
    if generated.is_empty() {
        return Err(CliError::data("nothing to evaluate: the corpus is empty"));
    }

    let src_len = corpus.pairs.iter().map(|p| p.src.len() as f64).collect();
    let gen_len = generated.iter().map(|s| s.len() as f64).collect();
    let durations = PairedMeasures::new(src_len, gen_len)?;
    let src_speed = speeds(corpus.pairs.iter().map(|p| &p.src))?;
    let gen_speed = speeds(generated.iter())?;
    let speed_pairs = PairedMeasures::new(src_speed.clone(), gen_speed.clone())?;
    let compliance = metrics::report(&durations, &speed_pairs)?;

    let e = &ctx.cfg.eval;
    let range = (e.histogram_range[0], e.histogram_range[1]);
    let hist_src = metrics::speed_histogram(&src_speed, e.histogram_bins, range)?;
    let hist_gen = metrics::speed_histogram(&gen_speed, e.histogram_bins, range)?;

    let manifest = RunManifest::new("eval", &ctx.cfg);
    let report = EvalReport {
        manifest: manifest.clone(),
        compliance: compliance.clone(),
        mean_src_speed: mean(&src_speed),
        mean_gen_speed: mean(&gen_speed),
    };
    let mut outputs = Outputs::new(&manifest, &ctx.cfg, &[outputs_path, corpus_path]);
    outputs.report(ctx.out(Path::new("report.json")), json_bytes(&report)?);
    outputs.artifact(
        ctx.out(Path::new("report.csv")),
        compliance.to_csv().into_bytes(),
    );
    outputs.artifact(
        ctx.out(Path::new("speed_hist_src.csv")),
        histogram_csv(&hist_src),
    );
    outputs.artifact(
        ctx.out(Path::new("speed_hist_gen.csv")),
        histogram_csv(&hist_gen),
    );
    outputs.commit()?;

    println!("pairs: {}", compliance.n);
    for (k, v) in &compliance.dc {
        println!("DC@{k}: {v:.3}");
    }
    for (k, v) in &compliance.sc {
        println!("SC@{k}: {v:.3}");
    }
    println!("speed correlation: {}", fmt_corr(compliance.speed_corr));
    println!(
        "report written to {}",
        ctx.out(Path::new("report.json")).display()
    );
    Ok(())
}

pub fn nfe_sweep(
    ctx: &Ctx,
    model: Option<&Path>,
    oracle: bool,
    corpus_path: &Path,
    grid: Option<Vec<usize>>,
    output: &Path,
) -> CliResult<()> {
    let corpus = load_corpus(corpus_path)?;
    check_task_vocab(ctx, &corpus)?;
    let denoiser = load_denoiser(ctx, model, oracle)?;
    check_vocab(&denoiser, &corpus)?;
    let mut cfg = ctx.cfg.clone();
    if let Some(g) = grid {
        cfg.eval.nfe_grid = g;
    }
    cfg.validate()?;
    let rows = evaluate_translation(
        &denoiser,
        &corpus.pairs,
        &cfg.task,
        &cfg.eval.nfe_grid,
        &cfg.sampler,
    )?;
    let mut csv =
        String::from("nfe,skeleton_accuracy,exact_match,mean_oracle_loglik,valid_fraction\n");
    for r in &rows {
        let ll = r
            .mean_oracle_loglik
            .map_or_else(String::new, |l| l.to_string());
        let _ = writeln!(
            csv,
            "{},{},{},{ll},{}",
            r.nfe, r.skeleton_accuracy, r.exact_match, r.valid_fraction
        );
    }
    let manifest = RunManifest::new("nfe-sweep", &cfg);
    let inputs: Vec<&Path> = [Some(corpus_path), model].into_iter().flatten().collect();
    let mut outputs = Outputs::new(&manifest, &cfg, &inputs);
    outputs.artifact(ctx.out(output), csv.clone().into_bytes());
    outputs.commit()?;
    print!("{csv}");
    Ok(())
}

pub fn duration_sweep(
    ctx: &Ctx,
    model: Option<&Path>,
    oracle: bool,
    corpus_path: &Path,
    ratios: Option<Vec<f64>>,
    output: &Path,
) -> CliResult<()> {
    let corpus = load_corpus(corpus_path)?;
    let denoiser = load_denoiser(ctx, model, oracle)?;
    check_vocab(&denoiser, &corpus)?;
    let mut cfg = ctx.cfg.clone();
    if let Some(r) = ratios {
        cfg.eval.duration_ratios = r;
    }
    cfg.validate()?;
    let rows = duration_sweep_corpus(
        &denoiser,
        &corpus.pairs,
        &cfg.eval.duration_ratios,
        &cfg.sampler,
    )?;
    let mut csv = String::from("ratio,mean_len,mean_relative_dedup_len\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{}",
            r.ratio, r.mean_len, r.mean_relative_dedup_len
        );
    }
    let manifest = RunManifest::new("duration-sweep", &cfg);
    let inputs: Vec<&Path> = [Some(corpus_path), model].into_iter().flatten().collect();
    let mut outputs = Outputs::new(&manifest, &cfg, &inputs);
    outputs.artifact(ctx.out(output), csv.clone().into_bytes());
    outputs.commit()?;
    print!("{csv}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct FlowReport {
    manifest: RunManifest,
    #[serde(flatten)]
    suite: FlowSuiteReport,
}

pub fn flow_test(ctx: &Ctx, output: &Path) -> CliResult<()> {
    let suite = run_gaussian_suite(&ctx.cfg.flow)?;
    let passed = suite.passed;
    println!("field max relative error: {:.5}", suite.field_max_rel_err);
    println!(
        "loss {:.5} vs analytic residual {:.5} (relative error {:.5})",
        suite.fitted_loss, suite.analytic_residual, suite.loss_rel_err
    );
    println!(
        "euler mean relative error {:.5}, variance relative error {:.5}",
        suite.mean_rel_err, suite.var_rel_err
    );
    let manifest = RunManifest::new("flow-test", &ctx.cfg);
    let report = FlowReport {
        manifest: manifest.clone(),
        suite,
    };
    let mut outputs = Outputs::new(&manifest, &ctx.cfg, &[]);
    outputs.report(ctx.out(output), json_bytes(&report)?);
    outputs.commit()?;
    if passed {
        println!("flow suite: PASS");
        Ok(())
    } else {
        Err(CliError::internal("flow suite: FAIL"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nfe_choice_parses() {
        assert_eq!("len".parse::<NfeChoice>(), Ok(NfeChoice::Len));
        assert_eq!("8".parse::<NfeChoice>(), Ok(NfeChoice::Fixed(8)));
        assert!("0".parse::<NfeChoice>().is_err());
        assert!("x".parse::<NfeChoice>().is_err());
    }
}
