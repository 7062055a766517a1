use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dytgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dytgraph")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(&o));
    String::from_utf8(o.stdout).unwrap()
}

const GENERATOR: &str = "communities = 3\nattributes = 24\nmonths = 16\nonset_rate = 0.05\n";
const MODEL: &str = "# small model\ndim = 6\nmax_epochs = 3\nbatch_size = 8\nlog_wall_time = false\n";

/// `generate` and `train` into `root/data` and `root/model`.
fn trained(root: &Path) {
    fs::write(root.join("gen.txt"), GENERATOR).unwrap();
    fs::write(root.join("model.txt"), MODEL).unwrap();
    let data = root.join("data");
    let model = root.join("model");
    ok(dytgraph(&["generate", "--config", path(&root.join("gen.txt")), "--out", path(&data), "--seed", "3"]));
    ok(dytgraph(&["train", "--data", path(&data), "--config", path(&root.join("model.txt")), "--out", path(&model)]));
}

#[test]
fn end_to_end_artifacts_are_complete_and_deterministic() {
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        trained(root);
        let (data, model, eval) = (root.join("data"), root.join("model"), root.join("eval"));
        let table = ok(dytgraph(&[
            "evaluate",
            "--data",
            path(&data),
            "--checkpoint",
            path(&model.join("model.ckpt")),
            "--out",
            path(&eval),
        ]));
        assert!(table.contains("macro"), "{table}");
        for (dir, files) in [
            (&data, &["interactions.csv", "annotations.csv", "resolved_config.txt"][..]),
            (&model, &["model.ckpt", "epoch_log.ndjson", "resolved_config.txt"][..]),
            (&eval, &["model_report.ndjson", "mom_report.ndjson", "report.txt", "resolved_config.txt"][..]),
        ] {
            for f in files {
                assert!(dir.join(f).is_file(), "{} missing", dir.join(f).display());
            }
        }
        let resolved = fs::read_to_string(model.join("resolved_config.txt")).unwrap();
        assert!(resolved.contains("dim = 6") && resolved.contains("seed = 42"), "{resolved}");
        let log = fs::read_to_string(model.join("epoch_log.ndjson")).unwrap();
        assert_eq!(log.lines().count(), 3);
        runs.push(
            ["data/interactions.csv", "model/epoch_log.ndjson", "model/model.ckpt", "eval/model_report.ndjson", "eval/mom_report.ndjson", "eval/report.txt"]
                .map(|f| fs::read(root.join(f)).unwrap()),
        );
    }
    assert!(runs[0] == runs[1], "artifacts differ between identical runs");
}

#[test]
fn predict_lists_top_n_per_community() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    trained(root);
    let out = root.join("pred");
    let stdout = ok(dytgraph(&[
        "predict",
        "--data",
        path(&root.join("data")),
        "--checkpoint",
        path(&root.join("model/model.ckpt")),
        "--top",
        "10",
        "--out",
        path(&out),
    ]));
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3);
    for line in &lines {
        let (_, tags) = line.split_once('\t').unwrap();
        assert_eq!(tags.split(',').count(), 10, "{line}");
    }
    let csv = fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 31);
    assert!(csv.lines().nth(1).unwrap().starts_with("17,"));
    assert!(out.join("resolved_config.txt").is_file());
}

#[test]
fn sweep_alpha_has_one_row_per_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("gen.txt"), GENERATOR).unwrap();
    fs::write(root.join("model.txt"), "dim = 4\nmax_epochs = 1\nbatch_size = 24\n").unwrap();
    ok(dytgraph(&["generate", "--config", path(&root.join("gen.txt")), "--out", path(&root.join("data"))]));
    let out = root.join("sweep");
    ok(dytgraph(&[
        "sweep-alpha",
        "--data",
        path(&root.join("data")),
        "--config",
        path(&root.join("model.txt")),
        "--out",
        path(&out),
    ]));
    let table = fs::read_to_string(out.join("sweep_alpha.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    let alphas: Vec<&str> = rows.iter().map(|r| r.split('\t').next().unwrap()).collect();
    assert_eq!(alphas, ["0", "0.25", "0.5", "0.75", "1"]);
    assert!(out.join("resolved_config.txt").is_file());
}

#[test]
fn train_with_grid_records_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("gen.txt"), GENERATOR).unwrap();
    ok(dytgraph(&["generate", "--config", path(&root.join("gen.txt")), "--out", path(&root.join("data"))]));
    let out = root.join("grid");
    ok(dytgraph(&[
        "train",
        "--data",
        path(&root.join("data")),
        "--grid",
        "--set",
        "dim=4",
        "--set",
        "max_epochs=1",
        "--set",
        "learning_rate_grid=0.001,0.01",
        "--set",
        "alpha_grid=0,1",
        "--out",
        path(&out),
    ]));
    assert_eq!(fs::read_to_string(out.join("grid.ndjson")).unwrap().lines().count(), 4);
    let resolved = fs::read_to_string(out.join("resolved_config.txt")).unwrap();
    assert!(resolved.contains("dim = 4"));
}

#[test]
fn ingest_filters_rare_attributes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.csv");
    fs::write(&input, "month,community,attribute,sales\n1,f,red,150\n1,m,red,10\n1,f,blue,5\n2,f,blue,99\n2,m,red,100\n").unwrap();
    let out = dir.path().join("data");
    let stdout = ok(dytgraph(&["ingest", "--input", path(&input), "--min-sales", "100", "--out", path(&out)]));
    assert!(stdout.contains("kept 1 of 2"), "{stdout}");
    let csv = fs::read_to_string(out.join("interactions.csv")).unwrap();
    assert!(!csv.contains("blue") && csv.contains("red"));
    assert!(fs::read_to_string(out.join("resolved_config.txt")).unwrap().contains("min_sales = 100"));
}

#[test]
fn failures_exit_with_their_class() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let usage = dytgraph(&["train", "--bogus"]);
    assert_eq!(usage.status.code(), Some(1));
    let usage = dytgraph(&["evaluate"]);
    assert_eq!(usage.status.code(), Some(1));

    let missing = root.join("nowhere/model.ckpt");
    fs::write(root.join("gen.txt"), GENERATOR).unwrap();
    ok(dytgraph(&["generate", "--config", path(&root.join("gen.txt")), "--out", path(&root.join("data"))]));
    let no_ckpt = dytgraph(&["evaluate", "--data", path(&root.join("data")), "--checkpoint", path(&missing), "--out", path(&root.join("e"))]);
    assert_eq!(no_ckpt.status.code(), Some(2));
    let msg = stderr(&no_ckpt);
    assert!(msg.contains("checkpoint") && msg.contains("model.ckpt"), "{msg}");
    assert_eq!(msg.lines().count(), 1, "{msg}");

    let no_data = dytgraph(&["train", "--data", path(&root.join("absent")), "--out", path(&root.join("m"))]);
    assert_eq!(no_data.status.code(), Some(2));
    assert!(stderr(&no_data).contains("interactions.csv"));

    fs::write(root.join("bad.txt"), "alpha = 3\n").unwrap();
    let bad = dytgraph(&["train", "--data", path(&root.join("data")), "--config", path(&root.join("bad.txt")), "--out", path(&root.join("m"))]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("alpha"));

    let short = dytgraph(&["generate", "--set", "months=12", "--out", path(&root.join("g"))]);
    assert_eq!(short.status.code(), Some(1));

    let input = root.join("short.csv");
    fs::write(&input, "month,community,attribute,sales\n1,f,red,1\n2,f,red,3\n").unwrap();
    ok(dytgraph(&["ingest", "--input", path(&input), "--out", path(&root.join("short"))]));
    let history = dytgraph(&["train", "--data", path(&root.join("short")), "--out", path(&root.join("m2"))]);
    assert_eq!(history.status.code(), Some(2));
    assert!(stderr(&history).contains("insufficient history"), "{}", stderr(&history));

    fs::write(root.join("huge.txt"), "dim = 4\nmax_epochs = 1\nlearning_rate = 1e308\n").unwrap();
    let numeric = dytgraph(&["train", "--data", path(&root.join("data")), "--config", path(&root.join("huge.txt")), "--out", path(&root.join("m3"))]);
    assert_eq!(numeric.status.code(), Some(3), "{}", stderr(&numeric));
}
