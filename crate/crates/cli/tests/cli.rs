use std::borrow::BorrowMut;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn css(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_css"));
    cmd.arg("--config").arg(fixture("tiny.json")).args(args);
    cmd
}

fn run(mut cmd: impl BorrowMut<Command>) -> Output {
    cmd.borrow_mut().output().expect("binary runs")
}

fn ok(cmd: impl BorrowMut<Command>) -> Output {
    let out = run(cmd);
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_da(dir: &Path, name: &str, seed: &str) -> PathBuf {
    let out = dir.join(name);
    ok(css(&[
        "--seed",
        seed,
        "train-da",
        "--swda",
        s(&fixture("swda")),
        "--out",
        s(&out),
    ]));
    out
}

fn train_gen(dir: &Path, name: &str, mode: &str, da: Option<&Path>) -> PathBuf {
    let out = dir.join(name);
    let (lines, convs) = (
        fixture("cornell/movie_lines.txt"),
        fixture("cornell/movie_conversations.txt"),
    );
    let mut args = vec![
        "train-seq2seq",
        "--lines",
        s(&lines),
        "--conversations",
        s(&convs),
        "--mode",
        mode,
        "--out",
        s(&out),
    ];
    if let Some(d) = da {
        args.extend(["--da-ckpt", s(d)]);
    }
    ok(css(&args));
    out
}

#[test]
fn missing_mapping_file_exits_2_naming_it() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("no_such_map.tsv");
    let out = run(css(&[
        "train-da",
        "--swda",
        s(&fixture("swda")),
        "--mapping",
        s(&missing),
    ]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
}

#[test]
fn explicit_mapping_file_is_accepted() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("da.ckpt");
    ok(css(&[
        "train-da",
        "--swda",
        s(&fixture("swda")),
        "--mapping",
        s(&fixture("tag_map.tsv")),
        "--out",
        s(&out),
        "--epochs",
        "1",
    ]));
    let loss = std::fs::read_to_string(dir.path().join("da.ckpt.loss.csv")).unwrap();
    assert_eq!(loss.lines().next(), Some("epoch,split,loss,accuracy"));
    assert_eq!(loss.lines().count(), 3);
    assert!(dir.path().join("da.ckpt.confusion.csv").exists());
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"seed": 1, "da": {"embedding": 8}}"#).unwrap();
    let out = run(Command::new(env!("CARGO_BIN_EXE_css"))
        .arg("--config")
        .arg(&cfg)
        .args(["train-da", "--swda", s(&fixture("swda"))]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("embedding"));
}

#[test]
fn same_seed_gives_identical_checkpoints_and_loss_logs() {
    let dir = TempDir::new().unwrap();
    let a = train_da(dir.path(), "a.ckpt", "5");
    let b = train_da(dir.path(), "b.ckpt", "5");
    let c = train_da(dir.path(), "c.ckpt", "6");
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(
        read(&dir.path().join("a.ckpt.loss.csv")),
        read(&dir.path().join("b.ckpt.loss.csv"))
    );

    let g1 = train_gen(dir.path(), "g1.ckpt", "css", Some(&a));
    let g2 = train_gen(dir.path(), "g2.ckpt", "css", Some(&b));
    assert_eq!(read(&g1), read(&g2));
    assert_eq!(
        read(&dir.path().join("g1.ckpt.loss.csv")),
        read(&dir.path().join("g2.ckpt.loss.csv"))
    );
}

#[test]
fn css_training_without_context_model_is_rejected() {
    let out = run(css(&[
        "train-seq2seq",
        "--lines",
        s(&fixture("cornell/movie_lines.txt")),
        "--conversations",
        s(&fixture("cornell/movie_conversations.txt")),
        "--mode",
        "css",
    ]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--da-ckpt"));
}

#[test]
fn baseline2_trains_and_records_losses() {
    let dir = TempDir::new().unwrap();
    let ckpt = train_gen(dir.path(), "b2.ckpt", "baseline2", None);
    assert!(ckpt.exists());
    let loss = std::fs::read_to_string(dir.path().join("b2.ckpt.loss.csv")).unwrap();
    assert!(loss.starts_with("epoch,split,loss"));
    assert!(loss.lines().any(|l| l.contains("validation")));
}

#[test]
fn eval_writes_one_row_per_model_and_transcripts() {
    let dir = TempDir::new().unwrap();
    let da = train_da(dir.path(), "da.ckpt", "1");
    let css_ckpt = train_gen(dir.path(), "css.ckpt", "css", Some(&da));
    let b1 = train_gen(dir.path(), "b1.ckpt", "baseline1", None);
    // Six user turns in the transcript fixture.
    let scores = dir.path().join("scores.txt");
    std::fs::write(&scores, "0.5\n0.25\n1\n0\n0.75\n0.5\n").unwrap();
    let report = dir.path().join("report.csv");
    let tr = dir.path().join("transcripts");
    ok(css(&[
        "eval",
        "--transcripts",
        s(&fixture("transcripts.txt")),
        "--model",
        &format!("css={}", s(&css_ckpt)),
        "--model",
        &format!("b1={}", s(&b1)),
        "--da-ckpt",
        s(&da),
        "--specificity-scores",
        &format!("css={}", s(&scores)),
        "--out",
        s(&report),
        "--transcripts-out",
        s(&tr),
    ]));
    let text = std::fs::read_to_string(&report).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(
        rows[0],
        [
            "model",
            "median_len",
            "mean_len",
            "diversity",
            "mean_specificity"
        ]
    );
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][0], "css");
    assert_eq!(rows[1][4].parse::<f64>().unwrap(), 0.5);
    assert_eq!(rows[2][0], "b1");
    assert_eq!(rows[2][4], "");

    let filled = std::fs::read_to_string(tr.join("css.txt")).unwrap();
    let users = filled.lines().filter(|l| l.starts_with("user\t")).count();
    let bots = filled.lines().filter(|l| l.starts_with("bot\t")).count();
    assert_eq!((users, bots), (6, 6));
}

#[test]
fn eval_rejects_empty_transcripts() {
    let dir = TempDir::new().unwrap();
    let b1 = train_gen(dir.path(), "b1.ckpt", "baseline1", None);
    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "\n\n").unwrap();
    let out = run(css(&[
        "eval",
        "--transcripts",
        s(&empty),
        "--model",
        &format!("b1={}", s(&b1)),
    ]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn chat_talks_to_an_in_process_service() {
    let dir = TempDir::new().unwrap();
    let da = train_da(dir.path(), "da.ckpt", "1");
    let gen = train_gen(dir.path(), "css.ckpt", "css", Some(&da));
    let mut child = css(&[
        "chat",
        "--seq2seq",
        s(&gen),
        "--da-ckpt",
        s(&da),
        "--decode",
        "beam",
        "--beam-width",
        "2",
        "--chosen-beam",
        "1",
        "--debug",
    ])
    .stdin(Stdio::piped())
    .stdout(Stdio::piped())
    .stderr(Stdio::piped())
    .spawn()
    .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"how are you ?\n\n   \nwhat do you do ?\n/reset\ndo you like it ?\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    // Blank lines produce no reply.
    assert_eq!(text.lines().filter(|l| l.starts_with("bot> ")).count(), 3);
    assert_eq!(
        text.lines()
            .filter(|l| l.contains("conversation reset"))
            .count(),
        1
    );
    assert_eq!(
        text.lines()
            .filter(|l| l.trim_start().starts_with("act: "))
            .count(),
        3
    );
    let norms: Vec<f64> = text
        .lines()
        .filter_map(|l| l.trim().strip_prefix("context norm: "))
        .map(|v| v.parse().unwrap())
        .collect();
    // The first turn of a conversation has no preceding context, before
    // and after the reset.
    assert_eq!(norms.len(), 3);
    assert_eq!(norms[0], 0.0);
    assert!(norms[1] > 0.0);
    assert_eq!(norms[2], 0.0);
    let chosen = text
        .lines()
        .filter(|l| l.trim_start().starts_with("*[1]"))
        .count();
    assert_eq!(chosen, 3);
}

#[test]
fn chat_rejects_invalid_decode_flags() {
    let dir = TempDir::new().unwrap();
    let b1 = train_gen(dir.path(), "b1.ckpt", "baseline1", None);
    let out = run(css(&[
        "chat",
        "--seq2seq",
        s(&b1),
        "--beam-width",
        "2",
        "--chosen-beam",
        "3",
    ])
    .stdin(Stdio::null()));
    assert_eq!(out.status.code(), Some(2));
}
