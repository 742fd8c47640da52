//! Command-line front end.

mod config;
pub mod matrix;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

pub use config::{render_config, resolve_config};
pub use matrix::{
    matrix_table, parse_variants, run_experiment_matrix, selected, strict_ordering, variant_config, MatrixRow, VARIANTS,
};

use crate::encoders::{gradcam, saliency_json, text_saliency};
use crate::evalkit::{evaluate, EvalReport};
use crate::fsutil::write_atomic;
use crate::synthgen::{example_at, gen_dataset, load_dataset, save_dataset, DatasetSplit, PairedExample};
use crate::textlab::{label_corpus, labels_csv, read_reports, Ruleset};
use crate::trainkit::{infer_image, load_checkpoint, metrics_csv, save_checkpoint, train_with, Checkpoint, ExperimentConfig};

pub const THREADS_ENV: &str = "EDEMAJOINT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "edemajoint", version, about = "Joint image-report training for edema severity grading")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label free-text reports with the keyword rules.
    Label {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "default")]
        rules: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic paired dataset.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a joint model.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate image-only inference on the test pool.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a Grad-CAM heatmap and token saliency for one example.
    Explain {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        example: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train and evaluate several variants on one dataset.
    Matrix {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_variant_list)]
        variants: VariantList,
        #[arg(long)]
        data: Option<PathBuf>,
        /// One seed or a comma-separated list.
        #[arg(long, value_parser = parse_seeds)]
        seed: Option<SeedList>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file and print it with defaults filled in.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone)]
struct VariantList(Vec<String>);

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

fn parse_variant_list(s: &str) -> Result<VariantList, String> {
    parse_variants(s).map(VariantList).map_err(|e| e.to_string())
}

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    s.split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|e| format!("bad seed `{p}`: {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(SeedList)
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 2 for usage errors, 1 for runtime failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Err(e) = configure_threads().and_then(|()| dispatch(cli.command)) {
        eprintln!("error: {e:#}");
        return 1;
    }
    0
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{raw}`"))?;
    // A pool may already exist when run is called more than once in-process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Label { input, rules, out } => label(&input, &rules, &out),
        Command::GenData { config, out, seed } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.data.seed = s;
            }
            let ds = gen_dataset(&cfg.data)?;
            save_dataset(&ds, &out)?;
            println!(
                "gen-data: {} labeled, {} unlabeled, {} test pairs ({}x{}) -> {}",
                ds.labeled.len(),
                ds.unlabeled.len(),
                ds.test.len(),
                cfg.data.image_size,
                cfg.data.image_size,
                out.display()
            );
            Ok(())
        }
        Command::Train { config, data, out, seed } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let ds = load_dataset(&data)?;
            train_command(&cfg, &ds, &out)
        }
        Command::Eval { ckpt, data, out } => {
            let checkpoint = load_checkpoint(&ckpt)?;
            let examples = eval_examples(&checkpoint, data.as_deref())?;
            let report = evaluate(&checkpoint, &examples)?;
            print!("{}", EvalReport::table(&[(ckpt.display().to_string(), report.clone())]));
            if let Some(out) = out {
                write_atomic(&out, report.to_json().as_bytes())?;
                println!("eval: report -> {}", out.display());
            }
            Ok(())
        }
        Command::Explain { ckpt, example, out, data } => explain(&ckpt, example, &out, data.as_deref()),
        Command::Matrix {
            config,
            variants,
            data,
            seed,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let ds = match data {
                Some(dir) => load_dataset(&dir)?,
                None => gen_dataset(&cfg.data)?,
            };
            let seeds = seed.map_or_else(|| vec![cfg.train.seed], |s| s.0);
            let rows = run_experiment_matrix(&cfg, &ds, &variants.0, &seeds, |name, seed, r| {
                println!(
                    "matrix: {name} seed {seed}: mean AUC {}, macro-F1 {:.4}",
                    r.mean_auc().map_or("-".into(), |v| format!("{v:.4}")),
                    r.macro_f1
                );
            })?;
            let mut table = matrix_table(&rows);
            if let Some(strict) = strict_ordering(&rows) {
                let word = if strict { "observed" } else { "not observed" };
                table += &format!("strict ordering ranking-dot-semi > ranking-dot > image-only: {word}\n");
            }
            print!("{table}");
            if let Some(out) = out {
                write_atomic(&out, table.as_bytes())?;
            }
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let cfg = load_config(Some(&config))?;
            print!("{}", render_config(&cfg));
            Ok(())
        }
    }
}

/// Reads and checks a config file; no path means all defaults.
pub fn load_config(path: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    resolve_config(&text).map_err(|errors| {
        let mut msg = format!("{} problem(s) in {}:", errors.len(), path.display());
        for e in errors {
            msg += &format!("\n  {e}");
        }
        anyhow::anyhow!(msg)
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn label(input: &Path, rules: &str, out: &Path) -> anyhow::Result<()> {
    let ruleset = Ruleset::from_arg(rules)?;
    let docs = read_reports(input)?;
    let labels = label_corpus(&docs, &ruleset);
    write_atomic(out, labels_csv(&labels).as_bytes())?;
    let summary_path = out.with_extension("summary.json");
    let summary = serde_json::to_string_pretty(&labels.summary)?;
    write_atomic(&summary_path, summary.as_bytes())?;
    let s = &labels.summary;
    println!(
        "label: {} documents, levels {:?}, {} unlabeled, {} failed -> {}",
        s.documents,
        s.per_level,
        s.unlabeled,
        s.failures.len(),
        out.display()
    );
    if let Some(first) = s.failures.first() {
        anyhow::bail!("{} documents failed, first {}: {}", s.failures.len(), first.id, first.error);
    }
    Ok(())
}

fn train_command(cfg: &ExperimentConfig, ds: &DatasetSplit, out: &Path) -> anyhow::Result<()> {
    let outcome = train_with(cfg, ds, |m| {
        let val = m.mean_auc().map_or_else(String::new, |a| format!(", validation mean AUC {a:.4}"));
        println!("train: epoch {} (phase {}) loss {:.6}{val}", m.epoch, m.phase, m.loss);
    })?;
    save_checkpoint(out, &outcome.checkpoint)?;
    if let Some(best) = &outcome.best {
        save_checkpoint(&sibling(out, ".best"), best)?;
    }
    let metrics_path = sibling(out, ".metrics.csv");
    write_atomic(&metrics_path, metrics_csv(&outcome.log).as_bytes())?;
    println!("train: checkpoint -> {}, metrics -> {}", out.display(), metrics_path.display());
    Ok(())
}

/// Test pool from `data`, or regenerated from the checkpoint's data config.
fn eval_examples(checkpoint: &Checkpoint, data: Option<&Path>) -> anyhow::Result<Vec<PairedExample>> {
    if let Some(dir) = data {
        let ds = load_dataset(dir)?;
        return Ok(if ds.test.is_empty() { ds.labeled } else { ds.test });
    }
    let dc = &checkpoint.config.data;
    if dc.n_test == 0 {
        bail!("the checkpoint's dataset has no test pool; pass --data");
    }
    let rules = Ruleset::default_rules();
    let start = dc.n_labeled + dc.n_unlabeled;
    (start..start + dc.n_test)
        .map(|i| Ok(example_at(dc, i, &rules, &checkpoint.vocabulary)?))
        .collect()
}

fn explain(ckpt: &Path, index: usize, out: &Path, data: Option<&Path>) -> anyhow::Result<()> {
    let checkpoint = load_checkpoint(ckpt)?;
    let example = match data {
        Some(dir) => {
            let ds = load_dataset(dir)?;
            let found = ds.all().nth(index).cloned();
            found.with_context(|| format!("example {index} not in {}", dir.display()))?
        }
        None => example_at(&checkpoint.config.data, index, &Ruleset::default_rules(), &checkpoint.vocabulary)?,
    };
    let model = &checkpoint.config.model;
    let probs = infer_image(&checkpoint, &example.image)?;
    let class = probs.argmax();
    let heatmap = gradcam(&example.image, &checkpoint.params, model, class as usize)?;
    let weights = text_saliency(&example.tokens, &checkpoint.params, model)?;
    let words = checkpoint.vocabulary.decode(&example.tokens[..weights.len()]);

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let pgm = out.join(format!("example_{index}.gradcam.pgm"));
    let json = out.join(format!("example_{index}.saliency.json"));
    write_atomic(&pgm, &heatmap.to_pgm())?;
    write_atomic(&json, saliency_json(&words, &weights).as_bytes())?;
    let top = weights
        .iter()
        .enumerate()
        .fold(0, |best, (i, w)| if *w > weights[best] { i } else { best });
    println!(
        "explain: example {index} predicted class {class}, top token `{}` -> {}, {}",
        words[top],
        pgm.display(),
        json.display()
    );
    Ok(())
}
