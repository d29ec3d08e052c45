//! Acceptance suite: ten criteria, one PASS/FAIL line each. Exits nonzero
//! if any criterion fails or exceeds its time budget.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use edlm_cli::verify::{
    ar_posterior_error, coar_nelbo_comparison, coar_normalization_error, nce_checks, partition_bracket,
    posterior_formula_error, sampler_reduction_mismatches,
};
use edlm_core::corpus::{chunk, synthetic_grammar_text, Vocabulary};
use edlm_core::eval::{generative_metrics, nelbo_continuous, nelbo_discrete, standard_error, TimeSampling};
use edlm_core::models::DenoiserTrainConfig;
use edlm_core::nce::{energy_gap, heldout_batches, nce_train, NceTrainConfig};
use edlm_core::oracle::{ChainAr, EnumeratedDistribution, MarginalOracleDenoiser};
use edlm_core::sampler::{sample_base, sample_edlm};
use edlm_core::{ar_fit, EnergyModel, FactorizedDenoiser, NceEnergy, NoiseSchedule, SamplerConfig, SeedTree, TokenSeq};

type Outcome = Result<String, String>;

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "oracle equivalence of the AR posterior", budget: secs(5), run: crit1 },
        Criterion { id: 2, name: "posterior formula", budget: secs(2), run: crit2 },
        Criterion { id: 3, name: "partition bound bracket", budget: secs(60), run: crit3 },
        Criterion { id: 4, name: "coAR self-normalization", budget: secs(30), run: crit4 },
        Criterion { id: 5, name: "sampler reductions", budget: secs(5), run: crit5 },
        Criterion { id: 6, name: "NCE correctness", budget: secs(180), run: crit6 },
        Criterion { id: 7, name: "EDLM-AR beats base sampling", budget: secs(600), run: crit7 },
        Criterion { id: 8, name: "ELBO tightness and schedule invariance", budget: secs(120), run: crit8 },
        Criterion { id: 9, name: "window monotonicity", budget: secs(300), run: crit9 },
        Criterion { id: 10, name: "CLI reproducibility", budget: secs(300), run: crit10 },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > c.budget => Err(format!("took {:.1}s, budget {}s", elapsed.as_secs_f64(), c.budget.as_secs())),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {:>2} {}: {detail} [{:.1}s]", c.id, c.name, elapsed.as_secs_f64()),
            Err(reason) => {
                failed += 1;
                println!("FAIL {:>2} {}: {reason} [{:.1}s]", c.id, c.name, elapsed.as_secs_f64());
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn crit1() -> Outcome {
    let worst = ar_posterior_error(&SeedTree::new(1))?;
    check(worst <= 1e-10, format!("max abs error {worst:.2e} over all 256 noisy inputs (tol 1e-10)"))
}

fn crit2() -> Outcome {
    let worst = posterior_formula_error(&SeedTree::new(2), 1000)?;
    check(worst <= 1e-12, format!("max abs error {worst:.2e} over 1000 tuples (tol 1e-12)"))
}

fn crit3() -> Outcome {
    partition_bracket(&SeedTree::new(3), 200).map(|s| s.to_string())
}

fn crit4() -> Outcome {
    let tree = SeedTree::new(4);
    let worst = coar_normalization_error(&tree)?;
    if worst > 1e-8 {
        return Err(format!("normalization error {worst:.3e} > 1e-8"));
    }
    let (mc, se, exact) = coar_nelbo_comparison(&tree, 20_000)?;
    check(
        (mc - exact).abs() <= 3.0 * se,
        format!("max |E[exp(-E)] - 1| {worst:.1e}; NELBO mc {mc:.5} vs exact {exact:.5} (se {se:.5})"),
    )
}

fn crit5() -> Outcome {
    let (k1, w0) = sampler_reduction_mismatches(&SeedTree::new(5), 100)?;
    check(
        k1 == 0 && w0 == 0,
        format!("{k1} k=1 and {w0} w=0 trajectories differ from base out of 100"),
    )
}

fn text8_chunks(text: &str, len: usize) -> Vec<TokenSeq> {
    let ids = Vocabulary::text8().encode(text).expect("grammar text is in the alphabet");
    chunk(&ids, len, 27).expect("positive length")
}

fn crit6() -> Outcome {
    let tree = SeedTree::new(6);
    let (loss0, rel) = nce_checks(&tree)?;
    if (loss0 - 2.0 * std::f64::consts::LN_2).abs() > 1e-12 {
        return Err(format!("loss at zero {loss0} != 2 ln 2"));
    }
    if rel > 1e-4 {
        return Err(format!("gradient relative error {rel:.3e} > 1e-4"));
    }
    let sched = NoiseSchedule::linear();
    let docs = text8_chunks(&synthetic_grammar_text(100_000, &mut tree.stream("train-text")), 32);
    let held_docs = text8_chunks(&synthetic_grammar_text(50_000, &mut tree.stream("held-text")), 32);
    let mut d = FactorizedDenoiser::new(27, 3).map_err(|e| e.to_string())?;
    let cfg = DenoiserTrainConfig { steps: 1000, lr: 0.5, batch_size: 16 };
    d.train(&docs, &sched, &cfg, &mut tree.stream("denoiser")).map_err(|e| e.to_string())?;
    // corrupt the proposal: flatten every logit towards uniform
    d.params_mut().iter_mut().for_each(|p| *p *= 0.25);
    let held = heldout_batches(&held_docs, &d, &sched, 1000, &mut tree.stream("held-pairs")).map_err(|e| e.to_string())?;
    let mut energy = NceEnergy::new(27).map_err(|e| e.to_string())?;
    let ncfg = NceTrainConfig { steps: 2000, lr: 0.5, batch_size: 16, eval_every: 500 };
    let report = nce_train(&mut energy, &d, &docs, &held, &sched, &ncfg, &mut tree.stream("nce")).map_err(|e| e.to_string())?;
    let g = energy_gap(&energy, &held).map_err(|e| e.to_string())?;
    let z = g.gap / g.standard_error;
    check(
        g.mean_positive < g.mean_negative && z >= 5.0,
        format!(
            "loss(0) = 2 ln 2, grad rel err {rel:.1e}; held-out E+ {:.4} < E- {:.4}, gap {:.2} se, held-out loss {:.4}",
            g.mean_positive,
            g.mean_negative,
            z,
            report.final_heldout_loss().unwrap_or(f64::NAN)
        ),
    )
}

fn crit7() -> Outcome {
    let tree = SeedTree::new(7);
    let vocab = Vocabulary::text8();
    let train = vocab.encode(&synthetic_grammar_text(200_000, &mut tree.stream("train-text"))).map_err(|e| e.to_string())?;
    let oracle_ids = vocab.encode(&synthetic_grammar_text(2_000_000, &mut tree.stream("oracle-text"))).map_err(|e| e.to_string())?;
    let docs = chunk(&train, 64, 27).map_err(|e| e.to_string())?;
    let sched = NoiseSchedule::linear();
    let mut d = FactorizedDenoiser::new(27, 3).map_err(|e| e.to_string())?;
    let cfg = DenoiserTrainConfig { steps: 4000, lr: 0.5, batch_size: 16 };
    d.train(&docs, &sched, &cfg, &mut tree.stream("denoiser")).map_err(|e| e.to_string())?;
    let energy = EnergyModel::Ar(Arc::new(ar_fit(&train, 27, 3, 0.1).map_err(|e| e.to_string())?));
    // an independent, higher-order model fitted on far more text scores the samples
    let oracle = ar_fit(&oracle_ids, 27, 6, 0.01).map_err(|e| e.to_string())?;
    let n = 5000u64;
    let base_cfg = SamplerConfig::new(64, 32, 1, 0.0);
    let edlm_cfg = SamplerConfig::new(64, 32, 16, 1.0);
    let base = (0..n)
        .into_par_iter()
        .map(|i| sample_base(&d, &base_cfg, &sched, &mut tree.indexed("base", i)))
        .collect::<edlm_core::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let edlm = (0..n)
        .into_par_iter()
        .map(|i| sample_edlm(&d, &energy, &edlm_cfg, &sched, &mut tree.indexed("edlm", i)))
        .collect::<edlm_core::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let gb = generative_metrics(&base, &oracle).map_err(|e| e.to_string())?;
    let ge = generative_metrics(&edlm, &oracle).map_err(|e| e.to_string())?;
    let joint = (gb.nll_standard_error().powi(2) + ge.nll_standard_error().powi(2)).sqrt();
    let sigmas = (gb.mean_nll - ge.mean_nll) / joint;
    let rel_entropy = (ge.entropy - gb.entropy).abs() / gb.entropy;
    check(
        sigmas > 3.0 && rel_entropy < 0.05,
        format!(
            "gen PPL base {:.3} vs EDLM {:.3} ({sigmas:.1} sigma on mean NLL); entropy {:.4} vs {:.4} ({:.2}% apart)",
            gb.gen_ppl,
            ge.gen_ppl,
            gb.entropy,
            ge.entropy,
            100.0 * rel_entropy
        ),
    )
}

fn crit8() -> Outcome {
    let tree = SeedTree::new(8);
    let docs = text8_chunks(&synthetic_grammar_text(200_000, &mut tree.stream("train-text")), 64);
    let held = text8_chunks(&synthetic_grammar_text(200_000, &mut tree.stream("held-text")), 64);
    let linear = NoiseSchedule::linear();
    let loglinear = NoiseSchedule::loglinear(2.0).map_err(|e| e.to_string())?;
    let mut d = FactorizedDenoiser::new(27, 3).map_err(|e| e.to_string())?;
    let cfg = DenoiserTrainConfig { steps: 4000, lr: 0.5, batch_size: 16 };
    d.train(&docs, &linear, &cfg, &mut tree.stream("denoiser")).map_err(|e| e.to_string())?;
    let evals = 2000;
    let per_token = |name: &str, f: &dyn Fn(&TokenSeq, &mut edlm_core::rng::StreamRng) -> edlm_core::Result<f64>| {
        let mut rng = tree.stream(name);
        (0..evals)
            .map(|i| {
                let doc = &held[i % held.len()];
                f(doc, &mut rng).map(|v| v / doc.len() as f64)
            })
            .collect::<edlm_core::Result<Vec<f64>>>()
            .map_err(|e| e.to_string())
    };
    let zero = EnergyModel::Zero;
    let cont = per_token("cont-linear", &|x, r| nelbo_continuous(&zero, &d, x, &linear, 8, 2, TimeSampling::Stratified, r))?;
    let cont2 = per_token("cont-loglinear", &|x, r| nelbo_continuous(&zero, &d, x, &loglinear, 8, 2, TimeSampling::Stratified, r))?;
    let disc = per_token("disc", &|x, r| nelbo_discrete(&zero, &d, x, &linear, 8, 2, r))?;
    let (c, c2, dd) = (mean(&cont), mean(&cont2), mean(&disc));
    let (sc, sc2, sd) = (standard_error(&cont), standard_error(&cont2), standard_error(&disc));
    let tight = (dd - c) / (sc * sc + sd * sd).sqrt();
    let invariant = (c - c2).abs() / (sc * sc + sc2 * sc2).sqrt();
    check(
        tight > 3.0 && invariant <= 3.0,
        format!(
            "continuous {c:.4} (se {sc:.4}) vs discrete T=8 {dd:.4} (se {sd:.4}): {tight:.1} sigma; \
             linear vs loglinear(2) {c:.4} vs {c2:.4}: {invariant:.2} sigma apart"
        ),
    )
}

fn crit9() -> Outcome {
    let tree = SeedTree::new(9);
    let chain = ChainAr { vocab_size: 2, follow: 0.9 };
    let target = EnumeratedDistribution::from_ar(&chain, 3).map_err(|e| e.to_string())?;
    let d = MarginalOracleDenoiser::new(target.clone());
    let energy = EnergyModel::Ar(Arc::new(chain));
    let sched = NoiseSchedule::linear();
    let windows = [0.0, 0.2, 0.5, 1.0];
    let n = 40_000u64;
    let mut tvs = Vec::new();
    for (wi, &w) in windows.iter().enumerate() {
        let cfg = SamplerConfig::new(3, 4, 16, w);
        let name = format!("window-{wi}");
        let samples = (0..n)
            .into_par_iter()
            .map(|i| sample_edlm(&d, &energy, &cfg, &sched, &mut tree.indexed(&name, i)))
            .collect::<edlm_core::Result<Vec<_>>>()
            .map_err(|e| e.to_string())?;
        let mut counts: HashMap<Vec<u32>, u64> = HashMap::new();
        for s in samples {
            *counts.entry(s.into_tokens()).or_default() += 1;
        }
        tvs.push((target.tv_to_counts(&counts), target.tv_standard_error(&counts)));
    }
    let mut ok = true;
    for pair in tvs.windows(2) {
        let ((a, sa), (b, sb)) = (pair[0], pair[1]);
        ok &= b <= a + 3.0 * (sa * sa + sb * sb).sqrt();
    }
    // the full window must be a real improvement over none
    let ((first, s0), (last, s1)) = (tvs[0], tvs[3]);
    ok &= last + 3.0 * (s0 * s0 + s1 * s1).sqrt() < first;
    let listing: Vec<String> = windows
        .iter()
        .zip(&tvs)
        .map(|(w, (tv, se))| format!("w={w}: {tv:.4}+-{se:.4}"))
        .collect();
    check(ok, format!("TV to target {}", listing.join(", ")))
}

fn edlm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_edlm"))
}

/// Runs `edlm args`, returning stdout; fails on a nonzero exit.
fn run_cli(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = edlm().current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("edlm {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn snapshot(dir: &Path, files: &[&str]) -> Result<Vec<(String, Vec<u8>)>, String> {
    files
        .iter()
        .map(|f| {
            let p: PathBuf = dir.join(f);
            std::fs::read(&p).map(|b| (f.to_string(), b)).map_err(|e| format!("{f}: {e}"))
        })
        .collect()
}

fn crit10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = dir.path();
    let tree = SeedTree::new(10);
    std::fs::write(p.join("train.txt"), synthetic_grammar_text(30_000, &mut tree.stream("train"))).map_err(|e| e.to_string())?;
    std::fs::write(p.join("test.txt"), synthetic_grammar_text(3_000, &mut tree.stream("test"))).map_err(|e| e.to_string())?;
    std::fs::write(p.join("grid.toml"), "steps = [8]\nk = [1, 2]\nwindow = [0.0, 1.0]\nsamples = 40\n").map_err(|e| e.to_string())?;
    std::fs::write(p.join("run.toml"), "seed = 11\n[train-denoiser]\nsteps = 300\nlr = 0.5\nseq-len = 32\n").map_err(|e| e.to_string())?;
    let commands: Vec<(Vec<&str>, Vec<&str>)> = vec![
        (vec!["fit-ar", "--corpus", "train.txt", "--order", "3", "--out", "ar.json"], vec!["ar.json"]),
        (vec!["fit-ar", "--corpus", "train.txt", "--order", "5", "--smoothing", "0.01", "--out", "oracle.json"], vec!["oracle.json"]),
        (
            vec!["--config", "run.toml", "train-denoiser", "--corpus", "train.txt", "--out", "den.json", "--log", "den.csv"],
            vec!["den.json", "den.csv", "den.csv.meta.json"],
        ),
        (
            vec!["--seed", "11", "train-nce", "--corpus", "train.txt", "--model", "den.json", "--steps", "200", "--out", "nce.json", "--log", "nce.csv"],
            vec!["nce.json", "nce.csv", "nce.csv.meta.json"],
        ),
        (
            vec![
                "--seed", "11", "sample", "--model", "den.json", "--energy", "ar", "--energy-model", "ar.json", "--steps", "8", "--k", "4",
                "--count", "20", "--out", "s.txt", "--trace", "trace.csv",
            ],
            vec!["s.txt", "s.txt.meta.json", "trace.csv", "trace.csv.meta.json"],
        ),
        (
            vec![
                "--seed", "11", "sample", "--model", "den.json", "--energy", "nce", "--energy-model", "nce.json", "--steps", "8", "--count",
                "10", "--out", "s_nce.txt",
            ],
            vec!["s_nce.txt", "s_nce.txt.meta.json"],
        ),
        (
            vec![
                "--seed", "11", "eval", "--model", "den.json", "--energy", "ar", "--energy-model", "ar.json", "--corpus", "test.txt",
                "--bounds-n", "16", "--mc-samples", "4", "--samples", "s.txt", "--oracle", "oracle.json", "--out", "eval.csv",
            ],
            vec!["eval.csv", "eval.csv.meta.json"],
        ),
        (
            vec![
                "--seed", "11", "bench", "--grid", "grid.toml", "--model", "den.json", "--energy", "coar", "--energy-model", "ar.json",
                "--oracle", "oracle.json", "--out", "bench.csv",
            ],
            vec!["bench.csv", "bench.csv.meta.json"],
        ),
        (vec!["--seed", "11", "verify", "--out", "verify.txt"], vec!["verify.txt", "verify.txt.meta.json"]),
    ];
    let mut checked = 0;
    for (args, files) in &commands {
        let out1 = run_cli(p, args)?;
        let snap1 = snapshot(p, files)?;
        let out2 = run_cli(p, args)?;
        let snap2 = snapshot(p, files)?;
        if out1 != out2 {
            return Err(format!("stdout of `{}` differs between runs", args.join(" ")));
        }
        for ((name, a), (_, b)) in snap1.iter().zip(&snap2) {
            if a != b {
                return Err(format!("{name} differs between runs of `{}`", args.join(" ")));
            }
            checked += 1;
        }
    }
    // the seed must actually matter
    let first = std::fs::read(p.join("s.txt")).map_err(|e| e.to_string())?;
    run_cli(
        p,
        &["--seed", "12", "sample", "--model", "den.json", "--energy", "ar", "--energy-model", "ar.json", "--steps", "8", "--k", "4", "--count", "20", "--out", "s12.txt"],
    )?;
    let other = std::fs::read(p.join("s12.txt")).map_err(|e| e.to_string())?;
    check(
        first != other,
        format!("{} commands rerun, {checked} output files byte-identical; a different seed changes the samples", commands.len()),
    )
}
