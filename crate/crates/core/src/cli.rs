//! The `textrec` command line: generate, train, evaluate, rank.
//!
//! Settings resolve in order: built-in defaults, the `--config` TOML file,
//! `TEXTREC_*` environment variables, command-line flags.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::data::{
    dataset_stats, encode_examples, generate_synthetic, read_dataset, write_dataset, DatasetStats, Vocabulary,
};
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::model::{Checkpoint, Model};
use crate::ranking::{aggregate_rank, format_ranking, parse_score_file};
use crate::training::{holdout_split, train, TrainOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "textrec", version, about = "Train and evaluate a text-based recommendation ranker")]
pub struct Cli {
    /// TOML run configuration (unknown keys are rejected).
    #[arg(long, global = true, env = "TEXTREC_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for data generation, initialization and training.
    #[arg(long, global = true, env = "TEXTREC_SEED")]
    pub seed: Option<u64>,
    /// Output directory (defaults to the configured data or run directory).
    #[arg(long, global = true, env = "TEXTREC_OUT")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic train/test split and its vocabulary.
    Generate,
    /// Train a model and keep the best checkpoint by validation MRR.
    Train(TrainArgs),
    /// Rank every test candidate and report MRR, NDCG@5/10 and HR@5/10.
    Evaluate(EvaluateArgs),
    /// Fuse the two scores in a score file and print the ranking.
    Rank(RankArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory with train.jsonl and vocab.txt.
    #[arg(long, env = "TEXTREC_DATA")]
    pub data: Option<PathBuf>,
    #[arg(long, env = "TEXTREC_OBJECTIVE", value_parser = ["joint", "disc_only", "ppl_only"])]
    pub objective: Option<String>,
    #[arg(long, env = "TEXTREC_MASK", value_parser = ["standard", "no_local", "no_global"])]
    pub mask: Option<String>,
    /// Number of updates (overrides train.total_steps).
    #[arg(long, env = "TEXTREC_STEPS")]
    pub steps: Option<u64>,
    /// Continue from a checkpoint that carries optimizer state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Suppress per-step log lines on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint to evaluate (defaults to best.ckpt in the run directory).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset directory with test.jsonl and vocab.txt.
    #[arg(long, env = "TEXTREC_DATA")]
    pub data: Option<PathBuf>,
    #[arg(long, env = "TEXTREC_SCORE", value_parser = ["fused", "disc", "ppl"])]
    pub score: Option<String>,
    #[arg(long, env = "TEXTREC_MASK", value_parser = ["standard", "no_local", "no_global"])]
    pub mask: Option<String>,
    /// Evaluate only the first N test examples.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Lines of `id s_d s_p`; `#` starts a comment line.
    pub score_file: PathBuf,
    /// Treat the scores as probabilities and skip softmax normalization.
    #[arg(long)]
    pub pre_normalized: bool,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    match cli.command {
        Command::Generate => {
            let out = cli.out.unwrap_or_else(|| cfg.paths.data_dir.clone());
            cmd_generate(&cfg, &out)
        }
        Command::Train(args) => {
            if let Some(o) = &args.objective {
                cfg.train.objective = o.parse()?;
            }
            if let Some(m) = &args.mask {
                cfg.train.mask = m.parse()?;
            }
            if args.steps.is_some() {
                cfg.train.total_steps = args.steps;
            }
            cfg.validate()?;
            let data = args.data.unwrap_or_else(|| cfg.paths.data_dir.clone());
            let out = cli.out.unwrap_or_else(|| cfg.paths.out_dir.clone());
            cmd_train(&cfg, &data, &out, args.resume.as_deref(), !args.quiet)
        }
        Command::Evaluate(args) => {
            if let Some(s) = &args.score {
                cfg.eval.score = s.parse()?;
            }
            if let Some(m) = &args.mask {
                cfg.train.mask = m.parse()?;
            }
            if args.limit.is_some() {
                cfg.eval.limit = args.limit;
            }
            let out = cli.out.unwrap_or_else(|| cfg.paths.out_dir.clone());
            let data = args.data.unwrap_or_else(|| cfg.paths.data_dir.clone());
            let ckpt = args.checkpoint.unwrap_or_else(|| out.join("best.ckpt"));
            cmd_evaluate(&cfg, &ckpt, &data, &out)
        }
        Command::Rank(args) => cmd_rank(&args.score_file, args.pre_normalized),
    }
}

pub fn stats_table(rows: &[(&str, DatasetStats)]) -> String {
    let mut s = format!(
        "{:<8} {:>9} {:>10} {:>12} {:>14} {:>15}\n",
        "split", "examples", "avg_turns", "avg_tokens", "avg_candidates", "avg_cand_tokens"
    );
    for (name, st) in rows {
        s.push_str(&format!(
            "{:<8} {:>9} {:>10.2} {:>12.2} {:>14.2} {:>15.2}\n",
            name, st.examples, st.avg_turns, st.avg_history_tokens, st.avg_candidates, st.avg_candidate_tokens
        ));
    }
    s
}

pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = generate_synthetic(&cfg.data)?;
    fs::create_dir_all(out)?;
    data.vocab.save(out.join("vocab.txt"))?;
    write_dataset(out.join("train.jsonl"), &data.train)?;
    write_dataset(out.join("test.jsonl"), &data.test)?;
    print!(
        "{}",
        stats_table(&[("train", dataset_stats(&data.train)), ("test", dataset_stats(&data.test))])
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn load_vocab(data: &Path, model_vocab: usize) -> Result<Vocabulary> {
    let vocab = Vocabulary::load(data.join("vocab.txt"))?;
    if vocab.len() > model_vocab {
        return Err(Error::Config(format!(
            "vocabulary has {} words but model.vocab_size is {model_vocab}",
            vocab.len()
        )));
    }
    Ok(vocab)
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path, resume: Option<&Path>, verbose: bool) -> Result<()> {
    let vocab = load_vocab(data, cfg.model.vocab_size)?;
    let examples = encode_examples(&read_dataset(data.join("train.jsonl"))?, &vocab, cfg.model.max_len)?;
    let (train_set, val_set) = holdout_split(&examples, cfg.train.val_examples)?;
    let (model, state) = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            if ckpt.config != cfg.model {
                return Err(Error::Config(format!(
                    "{} was trained with a different model configuration",
                    path.display()
                )));
            }
            let state = ckpt.training.clone();
            (ckpt.into_model()?, state)
        }
        None => (Model::new(cfg.model.clone(), cfg.train.seed)?, None),
    };
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml_string())?;
    let outcome = train(
        model,
        train_set,
        val_set,
        &cfg.train,
        TrainOptions {
            out_dir: Some(out.to_path_buf()),
            resume: state,
            verbose,
            stop_after: None,
        },
    )?;
    match outcome.best_val {
        Some(v) => println!("best validation MRR {:.4} at step {}", v.mrr, outcome.best_step),
        None => println!("trained {} steps (no validation split)", outcome.best_step),
    }
    println!("checkpoints in {}", out.display());
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: &Path, data: &Path, out: &Path) -> Result<()> {
    let model = Checkpoint::load(checkpoint)?.into_model()?;
    let vocab = load_vocab(data, model.config().vocab_size)?;
    let mut test = read_dataset(data.join("test.jsonl"))?;
    if let Some(n) = cfg.eval.limit {
        test.truncate(n);
    }
    let test = encode_examples(&test, &vocab, model.config().max_len)?;
    let report = evaluate(&model, &test, cfg.eval.score, cfg.train.mask)?;
    let label = cfg.eval.score.as_str();
    print!("{}", report.summary.to_table(label));
    fs::create_dir_all(out)?;
    let path = out.join("metrics.json");
    fs::write(&path, serde_json::to_string_pretty(&report.summary.to_json(label))?)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_rank(score_file: &Path, pre_normalized: bool) -> Result<()> {
    let text = fs::read_to_string(score_file)?;
    let rows = parse_score_file(&text, &score_file.display().to_string())?;
    let s_d: Vec<f64> = rows.iter().map(|r| r.s_d).collect();
    let s_p: Vec<f64> = rows.iter().map(|r| r.s_p).collect();
    let result = aggregate_rank(&s_d, &s_p, pre_normalized)?;
    let ids: Vec<String> = rows.into_iter().map(|r| r.id).collect();
    print!("{}", format_ranking(&ids, &result));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run(["textrec", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["textrec", "train", "--objective", "both"]), EXIT_USAGE);
        assert_eq!(run(["textrec", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_score_file_is_a_runtime_error() {
        assert_eq!(run(["textrec", "rank", "/nonexistent/scores.txt"]), EXIT_RUNTIME);
    }
}
