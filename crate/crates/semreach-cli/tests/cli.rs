//! End-to-end tests driving the compiled binary.

use semreach::a3c::{flat_from_tensors, load_checkpoint, EvalRow};
use semreach::arena::trace_header;
use semreach::config::ExperimentConfig;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_semreach"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "{args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    out
}

/// A small fast setup: 2-link arm, 32px frames, narrow network.
fn small_config(train_overrides: &str) -> String {
    format!(
        "[env]\nn_links = 2\nimage_size = 32\n\n\
         [agent]\nconv1_channels = 4\nconv2_channels = 8\nfc_width = 32\nlstm_width = 32\n\n\
         [train]\nt_max = 8\n{train_overrides}\n\n\
         [run]\nseed = 3\neval_episodes = 4\n"
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn checkpoint_files(run: &Path) -> Vec<PathBuf> {
    let dir = run.join("checkpoints");
    if !dir.exists() {
        return Vec::new();
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "bin"))
        .collect();
    files.sort();
    files
}

fn best_row(run: &Path) -> EvalRow {
    let text = std::fs::read_to_string(run.join("best.txt")).unwrap();
    EvalRow::from_csv(text.lines().next().unwrap()).unwrap()
}

/// Trains a small run and returns its directory.
fn train_small(base: &Path, name: &str, train_overrides: &str) -> PathBuf {
    let cfg = write_config(base, &format!("{name}.toml"), &small_config(train_overrides));
    let run = base.join(name);
    run_ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    run
}

#[test]
fn smoke_train_writes_a_complete_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let run = train_small(
        dir.path(),
        "smoke",
        "total_steps = 5000\nn_workers = 2\neval_every = 2500\neval_episodes = 3",
    );

    let snapshot = ExperimentConfig::from_file(&run.join("config.toml")).unwrap();
    assert_eq!(snapshot.train.total_steps, 5000);
    assert_eq!(snapshot.run.out_dir.as_deref(), Some(run.as_path()));

    let log = std::fs::read_to_string(run.join("eval_log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some(EvalRow::csv_header()));
    assert!(lines.next().is_some(), "at least one interim evaluation");

    assert!(!checkpoint_files(&run).is_empty());
    let best = best_row(&run);
    assert!(run.join(&best.checkpoint).exists());
}

#[test]
fn single_worker_rerun_reproduces_the_eval_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "det.toml",
        &small_config("total_steps = 2000\nn_workers = 1\neval_every = 1000\neval_episodes = 2"),
    );
    for name in ["a", "b"] {
        run_ok(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join(name).to_str().unwrap(),
        ]);
    }
    let log_a = std::fs::read(dir.path().join("a/eval_log.csv")).unwrap();
    let log_b = std::fs::read(dir.path().join("b/eval_log.csv")).unwrap();
    assert_eq!(log_a, log_b);
    assert_eq!(
        std::fs::read(dir.path().join("a/best.txt")).unwrap(),
        std::fs::read(dir.path().join("b/best.txt")).unwrap()
    );
}

#[test]
fn interrupted_training_leaves_a_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let text = small_config(
        "total_steps = 10000000\nn_workers = 1\neval_every = 400\neval_episodes = 2",
    );
    let cfg_path = write_config(dir.path(), "long.toml", &text);
    let run = dir.path().join("long");
    let mut child = bin()
        .args([
            "train",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            run.to_str().unwrap(),
        ])
        .spawn()
        .unwrap();

    let deadline = Instant::now() + Duration::from_secs(120);
    while checkpoint_files(&run).len() < 2 {
        assert!(Instant::now() < deadline, "no checkpoints appeared in time");
        std::thread::sleep(Duration::from_millis(100));
    }
    child.kill().unwrap();
    child.wait().unwrap();

    // The newest fully-written checkpoint must load and fit the network.
    let latest = checkpoint_files(&run).pop().unwrap();
    let agent = ExperimentConfig::from_toml_str(&text)
        .unwrap()
        .to_agent_config();
    let ckpt = load_checkpoint(&latest, Some(agent.kge_dim)).unwrap();
    let flat = flat_from_tensors::<f32>(&agent.layout(), &ckpt).unwrap();
    let expected: usize = agent
        .layout()
        .iter()
        .map(|(_, shape)| shape.iter().product::<usize>())
        .sum();
    assert_eq!(flat.len(), expected);
}

#[test]
fn scripted_demo_succeeds_and_ends_early() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "demo.toml", "");
    let out = dir.path().join("demo");
    run_ok(&[
        "demo",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);

    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], trace_header(3));
    let steps = lines.len() - 1;
    assert!((1..50).contains(&steps), "oracle ends early, took {steps}");
    // Final row: done and success flags are the last two columns.
    assert!(lines.last().unwrap().ends_with(",1,1"));

    let frames: Vec<_> = std::fs::read_dir(out.join("frames"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(frames.len(), steps);
    let first = std::fs::read(out.join("frames/step_001.ppm")).unwrap();
    let header = b"P6\n64 64\n255\n";
    assert_eq!(&first[..header.len()], header);
    assert_eq!(first.len(), header.len() + 64 * 64 * 3);
}

#[test]
fn demo_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "demo.toml", "");
    let mut outputs = Vec::new();
    for (name, seed) in [("a", "7"), ("b", "7"), ("c", "8")] {
        let out = dir.path().join(name);
        run_ok(&[
            "demo",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        outputs.push((
            std::fs::read(out.join("trace.csv")).unwrap(),
            std::fs::read(out.join("frames/step_001.ppm")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_ne!(outputs[0].0, outputs[2].0);
}

#[test]
fn eval_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = train_small(
        dir.path(),
        "trained",
        "total_steps = 1500\nn_workers = 1\neval_every = 1500\neval_episodes = 2",
    );
    let best = best_row(&run);
    let out = dir.path().join("eval");
    run_ok(&[
        "eval",
        "--config",
        run.join("config.toml").to_str().unwrap(),
        "--checkpoint",
        run.join(&best.checkpoint).to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);

    let episodes = std::fs::read_to_string(out.join("eval_episodes.csv")).unwrap();
    // Header plus run.eval_episodes rows.
    assert_eq!(episodes.lines().count(), 1 + 4);
    let report = std::fs::read_to_string(out.join("eval_report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("episodes,accuracy,"));
    assert!(lines[1].starts_with("4,"));
}

#[test]
fn comparing_a_run_with_itself_gives_f_zero() {
    let dir = tempfile::tempdir().unwrap();
    let run = train_small(
        dir.path(),
        "cmp",
        "total_steps = 1500\nn_workers = 1\neval_every = 1500\neval_episodes = 2",
    );
    let out = dir.path().join("analysis");
    let output = run_ok(&[
        "compare",
        run.to_str().unwrap(),
        run.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let table = String::from_utf8(output.stdout).unwrap();
    assert!(table.contains("cmp"), "{table}");

    let csv = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "agent,accuracy,best_step,F,p");
    // Identical returns in both rows: F = 0, p = 1 exactly.
    assert!(lines[1].ends_with(",0,1"), "{}", lines[1]);
    assert!(lines[2].ends_with(",0,1"), "{}", lines[2]);
}

#[test]
fn compare_requires_a_best_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let fake = dir.path().join("fake");
    std::fs::create_dir_all(&fake).unwrap();
    std::fs::write(fake.join("config.toml"), small_config("")).unwrap();
    let out = run_err(&["compare", fake.to_str().unwrap(), fake.to_str().unwrap()]);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("best.txt"), "{stderr}");
}

#[test]
fn kg_inspect_prints_subgraph_and_sentence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "kg.toml", "[kge]\nmode = \"full\"\n");
    let out = run_ok(&["kg-inspect", "--config", cfg.to_str().unwrap()]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("mode: full"), "{stdout}");
    assert!(stdout.contains("graspable"));
    assert!(stdout.contains("sentence:"));
    assert!(stdout.contains("has color"));
    assert!(stdout.contains("embedding: 150 values"));

    let cfg = write_config(dir.path(), "bm.toml", "");
    let out = run_ok(&["kg-inspect", "--config", cfg.to_str().unwrap()]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("vision only"));
}

#[test]
fn bad_config_fails_with_a_single_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[train]\ngammma = 0.99\n");
    let out = run_err(&["train", "--config", cfg.to_str().unwrap(), "--out", "x"]);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error:"), "{stderr}");
    assert!(stderr.contains("gammma"), "{stderr}");
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
}

#[test]
fn eval_rejects_a_checkpoint_with_the_wrong_embedding_width() {
    let dir = tempfile::tempdir().unwrap();
    let run = train_small(
        dir.path(),
        "bm",
        "total_steps = 1500\nn_workers = 1\neval_every = 1500\neval_episodes = 2",
    );
    let best = best_row(&run);
    let semantic = write_config(
        dir.path(),
        "semantic.toml",
        &format!("{}\n[kge]\nmode = \"full\"\n", small_config("")),
    );
    let out = run_err(&[
        "eval",
        "--config",
        semantic.to_str().unwrap(),
        "--checkpoint",
        run.join(&best.checkpoint).to_str().unwrap(),
        "--out",
        dir.path().join("e").to_str().unwrap(),
    ]);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("kge_dim"), "{stderr}");
}
