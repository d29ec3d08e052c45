//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;

use edlm_core::checkpoint::{ModelPayload, TrainingMeta};
use edlm_core::corpus::{chunk, corpus_digest, ingest_corpus, read_corpus_text, VocabPolicy};
use edlm_core::eval::{corpus_metrics, generative_metrics, BoundForm, EssForm, EvalConfig, TimeSampling};
use edlm_core::models::DenoiserTrainConfig;
use edlm_core::nce::{energy_gap, heldout_batches, nce_train, NceTrainConfig};
use edlm_core::sampler::{sample_base, sample_edlm_traced};
use edlm_core::{
    ar_fit, Checkpoint, EnergyKind, EnergyModel, FactorizedDenoiser, NceEnergy, NoiseSchedule, SamplerConfig,
    SeedTree, TokenSeq, Vocabulary,
};

use crate::args::{
    required, BenchArgs, Cli, Command, Common, EvalArgs, FileConfig, FitArArgs, Merge, SampleArgs, TrainDenoiserArgs,
    TrainNceArgs, VerifyArgs,
};
use crate::output::{num, opt_num, write_csv, Provenance};
use crate::verify;

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let common = cli.common.merge(file.common());
    match cli.command {
        Command::FitAr(a) => fit_ar(&common, a.merge(file.fit_ar)).map(|_| 0),
        Command::TrainDenoiser(a) => train_denoiser(&common, a.merge(file.train_denoiser)).map(|_| 0),
        Command::TrainNce(a) => train_nce(&common, a.merge(file.train_nce)).map(|_| 0),
        Command::Sample(a) => sample(&common, a.merge(file.sample)).map(|_| 0),
        Command::Eval(a) => eval(&common, a.merge(file.eval)).map(|_| 0),
        Command::Bench(a) => bench(&common, a.merge(file.bench)).map(|_| 0),
        Command::Verify(a) => run_verify(&common, a.merge(file.verify)),
    }
}

struct Shared {
    seed: u64,
    schedule: NoiseSchedule,
}

impl Shared {
    fn resolve(c: &Common) -> Result<Self> {
        let mut schedule = NoiseSchedule::parse(c.schedule.as_deref().unwrap_or("linear"))?;
        if let Some(eps) = c.eps {
            schedule = schedule.with_eps(eps)?;
        }
        Ok(Self {
            seed: c.seed.unwrap_or(0),
            schedule,
        })
    }

    fn schedule_json(&self) -> serde_json::Value {
        json!({ "kind": self.schedule.describe(), "eps": self.schedule.eps })
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn opt_path(p: &Option<PathBuf>) -> serde_json::Value {
    p.as_deref().map(path_str).into()
}

fn load_checkpoint(path: &Path, what: &str) -> Result<Checkpoint> {
    ensure!(path.exists(), "config error: {what} checkpoint {} does not exist", path.display());
    Ok(Checkpoint::load(path)?)
}

fn same_vocabulary(a: &Vocabulary, b: &Vocabulary, what: &str) -> Result<()> {
    ensure!(a == b, "config error: {what} was trained on a different vocabulary than the denoiser");
    Ok(())
}

fn load_energy(kind: EnergyKind, path: Option<&Path>, vocab: &Vocabulary) -> Result<EnergyModel> {
    if kind == EnergyKind::None {
        return Ok(EnergyModel::Zero);
    }
    let path = path.with_context(|| format!("config error: --energy {} needs --energy-model", kind.as_str()))?;
    let ck = load_checkpoint(path, "energy")?;
    same_vocabulary(&ck.vocabulary, vocab, "the energy model")?;
    Ok(match kind {
        EnergyKind::Ar => EnergyModel::Ar(Arc::new(ck.ngram()?)),
        EnergyKind::CoAr => EnergyModel::CoAr(Arc::new(ck.ngram()?)),
        EnergyKind::Nce => EnergyModel::Nce(ck.nce()?.clone()),
        EnergyKind::None => unreachable!(),
    })
}

fn meta(shared: &Shared, steps: usize, digest: String, seq_len: Option<usize>, prov: &Provenance) -> TrainingMeta {
    TrainingMeta {
        steps,
        seed: shared.seed,
        corpus_digest: digest,
        schedule: Some(shared.schedule),
        seq_len,
        config_digest: Some(prov.config_digest.clone()),
        config: Some(prov.config.clone()),
    }
}

fn save(ck: &Checkpoint, out: &Path) -> Result<()> {
    ck.save(out).with_context(|| format!("cannot write checkpoint {}", out.display()))
}

fn fit_ar(common: &Common, a: FitArArgs) -> Result<()> {
    let shared = Shared::resolve(common)?;
    let corpus = required(a.corpus, "corpus")?;
    let out = required(a.out, "out")?;
    let vocab_name = a.vocab.unwrap_or_else(|| "text8".into());
    let order = a.order.unwrap_or(3);
    let smoothing = a.smoothing.unwrap_or(0.1);
    let prov = Provenance::new(
        "fit-ar",
        shared.seed,
        json!({
            "corpus": path_str(&corpus), "vocab": vocab_name, "order": order,
            "smoothing": smoothing, "out": path_str(&out),
        }),
    );
    let (tokens, vocab) = ingest_corpus(&corpus, VocabPolicy::parse(&vocab_name)?)?;
    let model = ar_fit(&tokens, vocab.size(), order, smoothing)?;
    let mut m = meta(&shared, 0, corpus_digest(&tokens), None, &prov);
    m.schedule = None;
    let ck = Checkpoint::new(vocab, m, ModelPayload::NGram { counts: model.counts().clone() });
    save(&ck, &out)?;
    eprintln!(
        "fit-ar: order {order} on {} tokens, {} contexts -> {}",
        tokens.len(),
        model.counts().contexts.len(),
        out.display()
    );
    Ok(())
}

fn train_denoiser(common: &Common, a: TrainDenoiserArgs) -> Result<()> {
    let shared = Shared::resolve(common)?;
    let corpus = required(a.corpus, "corpus")?;
    let out = required(a.out, "out")?;
    let vocab_name = a.vocab.unwrap_or_else(|| "text8".into());
    let seq_len = a.seq_len.unwrap_or(64);
    let defaults = DenoiserTrainConfig::default();
    let cfg = DenoiserTrainConfig {
        steps: a.steps.unwrap_or(defaults.steps),
        lr: a.lr.unwrap_or(defaults.lr),
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
    };
    let radius = a.context_radius.unwrap_or(edlm_core::models::DEFAULT_CONTEXT_RADIUS);
    let prov = Provenance::new(
        "train-denoiser",
        shared.seed,
        json!({
            "corpus": path_str(&corpus), "vocab": vocab_name, "seq-len": seq_len,
            "steps": cfg.steps, "lr": cfg.lr, "batch-size": cfg.batch_size,
            "context-radius": radius, "schedule": shared.schedule_json(),
            "out": path_str(&out), "log": opt_path(&a.log),
        }),
    );
    let (tokens, vocab) = ingest_corpus(&corpus, VocabPolicy::parse(&vocab_name)?)?;
    let docs = chunk(&tokens, seq_len, vocab.size())?;
    ensure!(!docs.is_empty(), "data error: corpus is shorter than one chunk of {seq_len} characters");
    let mut model = FactorizedDenoiser::new(vocab.size(), radius)?;
    let mut rng = SeedTree::new(shared.seed).stream("train-denoiser");
    let report = model.train(&docs, &shared.schedule, &cfg, &mut rng)?;
    if let Some(log) = &a.log {
        let rows: Vec<Vec<String>> = report
            .losses
            .iter()
            .enumerate()
            .map(|(i, l)| vec![(i + 1).to_string(), num(*l)])
            .collect();
        write_csv(log, &["step", "loss"], &rows, &prov)?;
    }
    let ck = Checkpoint::new(
        vocab,
        meta(&shared, cfg.steps, corpus_digest(&tokens), Some(seq_len), &prov),
        ModelPayload::Denoiser { denoiser: model },
    );
    save(&ck, &out)?;
    let tail = &report.losses[report.losses.len().saturating_sub(100)..];
    let mean_tail = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
    eprintln!(
        "train-denoiser: {} steps on {} chunks, final loss {:.4} nats/token -> {}",
        cfg.steps,
        docs.len(),
        mean_tail,
        out.display()
    );
    Ok(())
}

/// Reads a text file and encodes it with an existing vocabulary.
fn encode_with(path: &Path, vocab: &Vocabulary) -> Result<Vec<u32>> {
    let text = read_corpus_text(path)?;
    Ok(vocab.encode(&text)?)
}

fn train_nce(common: &Common, a: TrainNceArgs) -> Result<()> {
    let shared = Shared::resolve(common)?;
    let corpus = required(a.corpus, "corpus")?;
    let model_path = required(a.model, "model")?;
    let out = required(a.out, "out")?;
    let ck = load_checkpoint(&model_path, "denoiser")?;
    let denoiser = ck.denoiser()?;
    let seq_len = a.seq_len.or(ck.meta.seq_len).unwrap_or(64);
    let defaults = NceTrainConfig::default();
    let cfg = NceTrainConfig {
        steps: a.steps.unwrap_or(defaults.steps),
        lr: a.lr.unwrap_or(defaults.lr),
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        eval_every: a.eval_every.unwrap_or(defaults.eval_every),
    };
    let fraction = a.heldout_fraction.unwrap_or(0.1);
    ensure!((0.0..1.0).contains(&fraction), "config error: --heldout-fraction must lie in [0, 1)");
    let pairs = a.heldout_pairs.unwrap_or(500);
    let prov = Provenance::new(
        "train-nce",
        shared.seed,
        json!({
            "corpus": path_str(&corpus), "model": path_str(&model_path), "seq-len": seq_len,
            "steps": cfg.steps, "lr": cfg.lr, "batch-size": cfg.batch_size, "eval-every": cfg.eval_every,
            "heldout-fraction": fraction, "heldout-pairs": pairs, "schedule": shared.schedule_json(),
            "out": path_str(&out), "log": opt_path(&a.log),
        }),
    );
    let tokens = encode_with(&corpus, &ck.vocabulary)?;
    let docs = chunk(&tokens, seq_len, ck.vocabulary.size())?;
    ensure!(!docs.is_empty(), "data error: corpus is shorter than one chunk of {seq_len} characters");
    let n_held = if docs.len() >= 2 {
        ((docs.len() as f64 * fraction).round() as usize).min(docs.len() - 1)
    } else {
        0
    };
    let (train, held) = docs.split_at(docs.len() - n_held);
    let tree = SeedTree::new(shared.seed);
    let heldout = if held.is_empty() || pairs == 0 {
        Vec::new()
    } else {
        heldout_batches(held, denoiser, &shared.schedule, pairs, &mut tree.stream("train-nce/heldout"))?
    };
    let mut energy = NceEnergy::new(ck.vocabulary.size())?;
    let report = nce_train(
        &mut energy,
        denoiser,
        train,
        &heldout,
        &shared.schedule,
        &cfg,
        &mut tree.stream("train-nce"),
    )?;
    if let Some(log) = &a.log {
        let rows: Vec<Vec<String>> = report
            .trace
            .iter()
            .map(|s| vec![s.step.to_string(), num(s.loss), opt_num(s.heldout_loss)])
            .collect();
        write_csv(log, &["step", "loss", "heldout_loss"], &rows, &prov)?;
    }
    if !heldout.is_empty() {
        let g = energy_gap(&energy, &heldout)?;
        eprintln!(
            "train-nce: held-out loss {:.4}, energy gap {:.4} +- {:.4} (negatives minus positives)",
            report.final_heldout_loss().unwrap_or(f64::NAN),
            g.gap,
            g.standard_error
        );
    }
    let out_ck = Checkpoint::new(
        ck.vocabulary.clone(),
        meta(&shared, cfg.steps, corpus_digest(&tokens), Some(seq_len), &prov),
        ModelPayload::Nce { energy },
    );
    save(&out_ck, &out)?;
    eprintln!("train-nce: {} steps -> {}", cfg.steps, out.display());
    Ok(())
}

/// Loaded denoiser plus energy, shared by sample, eval and bench.
struct Models {
    vocab: Vocabulary,
    denoiser: FactorizedDenoiser,
    seq_len: Option<usize>,
    energy: EnergyModel,
}

fn load_models(model: &Path, energy: &str, energy_model: Option<&Path>) -> Result<Models> {
    let ck = load_checkpoint(model, "denoiser")?;
    let kind = EnergyKind::parse(energy)?;
    let energy = load_energy(kind, energy_model, &ck.vocabulary)?;
    Ok(Models {
        denoiser: ck.denoiser()?.clone(),
        seq_len: ck.meta.seq_len,
        vocab: ck.vocabulary,
        energy,
    })
}

struct Drawn {
    sample: TokenSeq,
    importance_steps: usize,
    mean_ess: Option<f64>,
}

fn draw_samples(m: &Models, cfg: &SamplerConfig, schedule: &NoiseSchedule, ess: EssForm, seeds: &SeedTree, name: &str, count: usize) -> Result<Vec<Drawn>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.indexed(name, i as u64);
            if matches!(m.energy, EnergyModel::Zero) {
                let sample = sample_base(&m.denoiser, cfg, schedule, &mut rng)?;
                return Ok(Drawn {
                    sample,
                    importance_steps: 0,
                    mean_ess: None,
                });
            }
            let trace = sample_edlm_traced(&m.denoiser, &m.energy, cfg, schedule, &mut rng)?;
            Ok(Drawn {
                importance_steps: trace.steps.iter().filter(|s| s.ess.is_some()).count(),
                mean_ess: trace.mean_ess_as(ess)?,
                sample: trace.sample,
            })
        })
        .collect()
}

fn sample(common: &Common, a: SampleArgs) -> Result<()> {
    let shared = Shared::resolve(common)?;
    let model = required(a.model, "model")?;
    let out = required(a.out, "out")?;
    let energy = a.energy.unwrap_or_else(|| "none".into());
    let m = load_models(&model, &energy, a.energy_model.as_deref())?;
    let seq_len = a.seq_len.or(m.seq_len).unwrap_or(64);
    let cfg = SamplerConfig::new(seq_len, a.steps.unwrap_or(32), a.k.unwrap_or(16), a.window.unwrap_or(1.0));
    cfg.validate()?;
    let count = a.count.unwrap_or(16);
    let ess_name = a.ess.unwrap_or_else(|| "standard".into());
    let ess = EssForm::parse(&ess_name)?;
    let prov = Provenance::new(
        "sample",
        shared.seed,
        json!({
            "model": path_str(&model), "energy": energy, "energy-model": opt_path(&a.energy_model),
            "steps": cfg.num_steps, "k": cfg.k, "window": cfg.window, "count": count, "seq-len": seq_len,
            "ess": ess_name, "schedule": shared.schedule_json(),
            "out": path_str(&out), "trace": opt_path(&a.trace),
        }),
    );
    let drawn = draw_samples(&m, &cfg, &shared.schedule, ess, &SeedTree::new(shared.seed), "sample", count)?;
    let mut text = String::new();
    for d in &drawn {
        text.push_str(&m.vocab.decode(d.sample.tokens())?);
        text.push('\n');
    }
    fs::write(&out, text).with_context(|| format!("cannot write {}", out.display()))?;
    prov.write_sidecar(&out)?;
    if let Some(trace) = &a.trace {
        let rows: Vec<Vec<String>> = drawn
            .iter()
            .enumerate()
            .map(|(i, d)| vec![i.to_string(), d.importance_steps.to_string(), opt_num(d.mean_ess)])
            .collect();
        write_csv(trace, &["sample", "importance_steps", "mean_ess"], &rows, &prov)?;
    }
    eprintln!("sample: {count} sequences of length {seq_len} -> {}", out.display());
    Ok(())
}

/// Reads a sample file, one sequence per line.
fn read_samples(path: &Path, vocab: &Vocabulary) -> Result<Vec<TokenSeq>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read samples {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let ids = vocab.encode(l).with_context(|| format!("sample line {}", i + 1))?;
            Ok(TokenSeq::new(ids, vocab.size())?)
        })
        .collect()
}

fn load_oracle(path: &Path, vocab: &Vocabulary) -> Result<edlm_core::NGramModel> {
    let ck = load_checkpoint(path, "oracle")?;
    same_vocabulary(&ck.vocabulary, vocab, "the oracle")?;
    Ok(ck.ngram()?)
}

const METRIC_COLUMNS: [&str; 8] = ["unit", "tokens", "nelbo", "bpc", "ppl", "gen_ppl", "entropy", "ess"];

fn eval(common: &Common, a: EvalArgs) -> Result<()> {
    let shared = Shared::resolve(common)?;
    let model = required(a.model, "model")?;
    let corpus = required(a.corpus, "corpus")?;
    let out = required(a.out, "out")?;
    let energy = a.energy.unwrap_or_else(|| "none".into());
    let m = load_models(&model, &energy, a.energy_model.as_deref())?;
    let seq_len = a.seq_len.or(m.seq_len).unwrap_or(64);
    let bounds_n = a.bounds_n.unwrap_or(64);
    let mc = a.mc_samples.unwrap_or(32);
    let sampling_name = a.time_sampling.unwrap_or_else(|| "stratified".into());
    let sampling = match sampling_name.as_str() {
        "stratified" => TimeSampling::Stratified,
        "uniform" => TimeSampling::Uniform,
        other => bail!("config error: unknown time sampling '{other}' (stratified|uniform)"),
    };
    let form = match a.discrete_steps {
        Some(steps) => BoundForm::Discrete { steps },
        None => BoundForm::Continuous {
            mc_samples: mc,
            sampling,
        },
    };
    ensure!(
        a.samples.is_some() == a.oracle.is_some(),
        "config error: --samples and --oracle go together"
    );
    let prov = Provenance::new(
        "eval",
        shared.seed,
        json!({
            "model": path_str(&model), "energy": energy, "energy-model": opt_path(&a.energy_model),
            "corpus": path_str(&corpus), "seq-len": seq_len, "max-docs": a.max_docs,
            "bounds-n": bounds_n, "bound": form, "schedule": shared.schedule_json(),
            "samples": opt_path(&a.samples), "oracle": opt_path(&a.oracle), "out": path_str(&out),
        }),
    );
    let tokens = encode_with(&corpus, &m.vocab)?;
    let mut docs = chunk(&tokens, seq_len, m.vocab.size())?;
    if let Some(max) = a.max_docs {
        docs.truncate(max);
    }
    let cfg = EvalConfig {
        form,
        partition_n: bounds_n,
    };
    let mut rows = corpus_metrics(&m.energy, &m.denoiser, &docs, &shared.schedule, &cfg, &SeedTree::new(shared.seed))?;
    if let (Some(samples), Some(oracle)) = (&a.samples, &a.oracle) {
        let oracle = load_oracle(oracle, &m.vocab)?;
        let seqs = read_samples(samples, &m.vocab)?;
        let g = generative_metrics(&seqs, &oracle)?;
        let all = rows.last_mut().expect("aggregate row");
        all.gen_ppl = Some(g.gen_ppl);
        all.entropy = Some(g.entropy);
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.unit.clone(),
                r.tokens.to_string(),
                num(r.nelbo),
                num(r.bpc),
                num(r.ppl),
                opt_num(r.gen_ppl),
                opt_num(r.entropy),
                opt_num(r.ess),
            ]
        })
        .collect();
    write_csv(&out, &METRIC_COLUMNS, &table, &prov)?;
    let all = rows.last().expect("aggregate row");
    eprintln!(
        "eval: {} chunks, {:.4} nats/token, {:.4} bpc -> {}",
        docs.len(),
        all.nelbo,
        all.bpc,
        out.display()
    );
    Ok(())
}

/// Sweep definition read by `bench --grid`.
#[derive(Debug, Clone, Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Grid {
    pub steps: Vec<usize>,
    pub k: Vec<usize>,
    pub window: Vec<f64>,
    pub samples: usize,
    #[serde(default)]
    pub seq_len: Option<usize>,
}

impl Grid {
    pub fn load(path: &Path) -> Result<Self> {
        ensure!(path.exists(), "config error: grid file {} does not exist", path.display());
        let text = fs::read_to_string(path)?;
        let grid: Grid = toml::from_str(&text).with_context(|| format!("config error: bad grid file {}", path.display()))?;
        ensure!(
            !grid.steps.is_empty() && !grid.k.is_empty() && !grid.window.is_empty() && grid.samples > 0,
            "config error: grid needs nonempty steps, k and window and samples >= 1"
        );
        Ok(grid)
    }

    /// Cells in row order: steps outermost, then k, then window.
    pub fn cells(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for &n in &self.steps {
            for &k in &self.k {
                for &w in &self.window {
                    out.push((n, k, w));
                }
            }
        }
        out
    }
}

fn bench(common: &Common, a: BenchArgs) -> Result<()> {
    let shared = Shared::resolve(common)?;
    let grid_path = required(a.grid, "grid")?;
    let model = required(a.model, "model")?;
    let oracle_path = required(a.oracle, "oracle")?;
    let out = required(a.out, "out")?;
    let energy = a.energy.unwrap_or_else(|| "ar".into());
    let ess_name = a.ess.unwrap_or_else(|| "standard".into());
    let ess = EssForm::parse(&ess_name)?;
    let grid = Grid::load(&grid_path)?;
    let m = load_models(&model, &energy, a.energy_model.as_deref())?;
    let oracle = load_oracle(&oracle_path, &m.vocab)?;
    let seq_len = grid.seq_len.or(m.seq_len).unwrap_or(64);
    let prov = Provenance::new(
        "bench",
        shared.seed,
        json!({
            "grid": grid, "model": path_str(&model), "energy": energy,
            "energy-model": opt_path(&a.energy_model), "oracle": path_str(&oracle_path),
            "ess": ess_name, "seq-len": seq_len, "schedule": shared.schedule_json(),
            "out": path_str(&out), "timing": opt_path(&a.timing),
        }),
    );
    // every cell reuses the same per-sample streams
    let seeds = SeedTree::new(shared.seed);
    let mut rows = Vec::new();
    let mut timing = Vec::new();
    for (n, k, w) in grid.cells() {
        let cfg = SamplerConfig::new(seq_len, n, k, w);
        cfg.validate()?;
        let start = Instant::now();
        let drawn = draw_samples(&m, &cfg, &shared.schedule, ess, &seeds, "bench/sample", grid.samples)?;
        let seconds = start.elapsed().as_secs_f64();
        let samples: Vec<TokenSeq> = drawn.iter().map(|d| d.sample.clone()).collect();
        let g = generative_metrics(&samples, &oracle)?;
        // a cell without importance steps is the base sampler, whose ESS is 1
        let esses: Vec<f64> = drawn.iter().map(|d| d.mean_ess.unwrap_or(1.0)).collect();
        let mean_ess = esses.iter().sum::<f64>() / esses.len() as f64;
        rows.push(vec![
            n.to_string(),
            k.to_string(),
            num(w),
            grid.samples.to_string(),
            num(g.gen_ppl),
            num(g.mean_nll),
            num(g.nll_standard_error()),
            num(g.entropy),
            num(mean_ess),
        ]);
        timing.push(vec![n.to_string(), k.to_string(), num(w), format!("{seconds:.3}")]);
        eprintln!("bench: N={n} k={k} w={w} gen_ppl={:.4} entropy={:.4} ess={mean_ess:.3} ({seconds:.2}s)", g.gen_ppl, g.entropy);
    }
    write_csv(
        &out,
        &["steps", "k", "window", "samples", "gen_ppl", "mean_nll", "nll_se", "entropy", "ess"],
        &rows,
        &prov,
    )?;
    if let Some(path) = &a.timing {
        write_csv(path, &["steps", "k", "window", "wall_seconds"], &timing, &prov)?;
    }
    Ok(())
}

fn run_verify(common: &Common, a: VerifyArgs) -> Result<i32> {
    let shared = Shared::resolve(common)?;
    let report = verify::run_suite(shared.seed);
    let text = report.render();
    print!("{text}");
    if let Some(out) = &a.out {
        fs::write(out, &text).with_context(|| format!("cannot write {}", out.display()))?;
        let prov = Provenance::new("verify", shared.seed, json!({ "out": path_str(out) }));
        prov.write_sidecar(out)?;
    }
    Ok(if report.all_passed() { 0 } else { 1 })
}
