use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use textrec::data::read_dataset;
use textrec::metrics::random_mrr;

fn textrec() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_textrec"));
    for var in ["TEXTREC_CONFIG", "TEXTREC_SEED", "TEXTREC_OUT", "TEXTREC_DATA", "TEXTREC_SCORE", "TEXTREC_MASK"] {
        cmd.env_remove(var);
    }
    cmd
}

fn run(args: &[&str]) -> Output {
    textrec().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// Rank column of a `rank` table, in input order.
fn rank_column(out: &str) -> Vec<usize> {
    out.lines()
        .skip(1)
        .map(|l| l.split_whitespace().last().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn rank_reproduces_reference_rankings() {
    let o = run(&["rank", "--pre-normalized", &fixture("news_a.txt")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(rank_column(&stdout(&o)), vec![4, 3, 7, 1, 5, 9, 6, 8, 2]);
    let o = run(&["rank", "--pre-normalized", &fixture("news_b.txt")]);
    assert_eq!(rank_column(&stdout(&o)), vec![1, 10, 6, 8, 7, 4, 2, 5, 9, 3]);
}

#[test]
fn rank_prints_the_table_columns() {
    let o = run(&["rank", "--pre-normalized", &fixture("quote_c.txt")]);
    let out = stdout(&o);
    let header: Vec<&str> = out.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["id", "s_d_norm", "s_p_norm", "fused", "rank"]);
    let top = out.lines().skip(1).find(|l| l.split_whitespace().last() == Some("1")).unwrap();
    let cols: Vec<&str> = top.split_whitespace().collect();
    assert_eq!(&cols[..3], ["c1", "0.480000", "0.471000"]);
}

#[test]
fn rank_single_candidate() {
    let o = run(&["rank", &fixture("single.txt")]);
    assert!(o.status.success());
    assert_eq!(rank_column(&stdout(&o)), vec![1]);
}

#[test]
fn malformed_score_file_exits_two_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    fs::write(&path, "# scores\nc1 0.1 0.2\nc2 oops 0.3\n").unwrap();
    let o = run(&["rank", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one_and_help_documents_flags() {
    assert_eq!(run(&["train", "--objective", "both"]).status.code(), Some(1));
    assert_eq!(run(&["evaluate", "--score", "mean"]).status.code(), Some(1));
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    let expect = [
        ("generate", &["--config", "--seed", "--out"][..]),
        ("train", &["--objective", "--mask", "--steps", "--resume", "--data"][..]),
        ("evaluate", &["--score", "--mask", "--checkpoint", "--limit"][..]),
        ("rank", &["--pre-normalized"][..]),
    ];
    for (cmd, flags) in expect {
        let o = run(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        for f in flags {
            assert!(stdout(&o).contains(f), "{cmd} --help lacks {f}");
        }
    }
}

const TINY: &str = r#"
[model]
vocab_size = 64
d_model = 16
n_heads = 2
local_layers = 1
global_layers = 1
decoder_layers = 1
d_ff = 32
max_len = 40

[data]
n_topics = 4
vocab_size = 64
background_words = 8
min_turns = 2
max_turns = 4
min_tokens = 3
max_tokens = 6
candidates = 6
train_examples = 40
test_examples = 12

[train]
total_steps = 6
eval_every = 3
val_examples = 8
lr_peak = 0.001
"#;

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    fs::write(&path, TINY).unwrap();
    path
}

fn generate(config: &Path, out: &Path, seed: &str) -> Output {
    let o = run(&["generate", "--config", config.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    o
}

#[test]
fn generate_is_seed_deterministic_and_reports_true_stats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let out = stdout(&generate(&cfg, &a, "3"));
    generate(&cfg, &b, "3");
    generate(&cfg, &c, "4");
    for f in ["train.jsonl", "test.jsonl", "vocab.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("train.jsonl")).unwrap(), fs::read(c.join("train.jsonl")).unwrap());

    for split in ["train", "test"] {
        let ex = read_dataset(a.join(format!("{split}.jsonl"))).unwrap();
        let n = ex.len() as f64;
        let words = |s: &String| s.split(' ').filter(|w| !w.is_empty()).count();
        let turns = ex.iter().map(|e| e.history.len()).sum::<usize>() as f64 / n;
        let tokens = ex.iter().flat_map(|e| e.history.iter().map(words)).sum::<usize>() as f64 / n;
        let n_cands = ex.iter().map(|e| e.candidates.len()).sum::<usize>() as f64;
        let cand_tokens = ex.iter().flat_map(|e| e.candidates.iter().map(words)).sum::<usize>() as f64 / n_cands;
        let expected = [ex.len() as f64, turns, tokens, n_cands / n, cand_tokens];
        let row = out.lines().find(|l| l.starts_with(split)).unwrap();
        let printed: Vec<f64> = row.split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect();
        for (p, e) in printed.iter().zip(expected) {
            assert!((p - e).abs() <= 0.005 + 1e-9, "{split}: printed {p}, recount {e}");
        }
    }
}

fn metrics_mrr(dir: &Path) -> f64 {
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap();
    json["fraction"]["mrr"].as_f64().unwrap()
}

#[test]
fn train_then_evaluate_with_every_score_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    let run_dir = dir.path().join("run");
    generate(&cfg, &data, "0");
    let (c, d, r) = (cfg.to_str().unwrap(), data.to_str().unwrap(), run_dir.to_str().unwrap());

    let o = run(&["train", "--config", c, "--data", d, "--out", r, "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["best.ckpt", "last.ckpt", "train.log", "config.toml"] {
        assert!(run_dir.join(f).exists(), "{f} missing");
    }
    assert!(stdout(&o).contains("best validation MRR"));

    let mut seen = Vec::new();
    for score in ["fused", "disc", "ppl"] {
        let o = run(&["evaluate", "--config", c, "--data", d, "--out", r, "--score", score]);
        assert!(o.status.success(), "{}", stderr(&o));
        let out = stdout(&o);
        assert!(out.contains("MRR") && out.contains("NDCG@5") && out.contains("HR@10"));
        assert!(out.contains(score));
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(run_dir.join("metrics.json")).unwrap()).unwrap();
        assert_eq!(json["model"], score);
        seen.push(metrics_mrr(&run_dir));
    }
    assert!(seen.iter().all(|m| *m > 0.0 && *m <= 1.0));

    // Resuming continues the step counter.
    let o = run(&["train", "--config", c, "--data", d, "--out", r, "--quiet", "--steps", "9", "--resume", run_dir.join("last.ckpt").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let steps = textrec::training::read_log_steps(run_dir.join("train.log")).unwrap();
    assert_eq!(steps, (1..=9).collect::<Vec<_>>());
}

#[test]
fn ablation_flags_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    generate(&cfg, &data, "1");
    for (flag, value) in [
        ("--objective", "disc_only"),
        ("--objective", "ppl_only"),
        ("--mask", "no_local"),
        ("--mask", "no_global"),
    ] {
        let out = dir.path().join(value);
        let o = run(&["train", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet", flag, value]);
        assert!(o.status.success(), "{value}: {}", stderr(&o));
        let written = fs::read_to_string(out.join("config.toml")).unwrap();
        assert!(written.contains(&format!("\"{value}\"")), "{value} not recorded");
    }
}

#[test]
fn environment_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    generate(&cfg, &a, "7");
    let o = textrec()
        .args(["generate"])
        .env("TEXTREC_CONFIG", &cfg)
        .env("TEXTREC_SEED", "7")
        .env("TEXTREC_OUT", &b)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(a.join("train.jsonl")).unwrap(), fs::read(b.join("train.jsonl")).unwrap());
}

#[test]
fn unknown_config_keys_are_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[train]\nlearning_rate = 0.1\n").unwrap();
    let o = run(&["generate", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
}

#[test]
fn mismatched_vocabulary_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    generate(&cfg, &data, "0");
    // Default model config with a dataset whose vocabulary is replaced by a larger one.
    let words: Vec<String> = (0..700).map(|i| format!("w{i}")).collect();
    textrec::data::Vocabulary::from_words(&words).unwrap().save(data.join("vocab.txt")).unwrap();
    let o = run(&["train", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", dir.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("vocab"), "{}", stderr(&o));
}

#[test]
fn untrained_model_ranks_at_chance_on_the_default_task() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run_dir) = (dir.path().join("data"), dir.path().join("run"));
    let (d, r) = (data.to_str().unwrap(), run_dir.to_str().unwrap());
    assert!(run(&["generate", "--out", d]).status.success());
    let o = run(&["train", "--data", d, "--out", r, "--steps", "0", "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["evaluate", "--data", d, "--out", r]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mrr = metrics_mrr(&run_dir);
    let baseline = random_mrr(20);
    assert!((mrr - baseline).abs() <= 0.05, "untrained MRR {mrr}, chance {baseline}");
}
