use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bcvnn"));
    c.env_remove("BCVNN_SEED");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .unwrap_or_else(|| panic!("{key} missing from {line:?}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// 27-row fitness table with distinct, deterministic values.
fn write_table(path: &Path) {
    let mut s = String::from("genome,accuracy,ece\n");
    for i in 0..27 {
        let modes: Vec<&str> = [i / 9, (i / 3) % 3, i % 3].iter().map(|&d| ["R", "I", "B"][d]).collect();
        let acc = 0.80 + ((i * 7) % 27) as f64 / 200.0;
        let ece = 0.01 + ((i * 5) % 27) as f64 / 500.0;
        s.push_str(&format!("{},{acc},{ece}\n", modes.join("-")));
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn search_with_table_matches_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.csv");
    write_table(&table);
    for objective in ["max-acc", "min-ece"] {
        let s = ok(&["search", "--table", p(&table), "--seed", "3", "--iterations", "30", "--objective", objective, "--out", p(&dir.path().join("s"))]);
        let e = ok(&["enumerate", "--table", p(&table), "--objective", objective, "--out", p(&dir.path().join("e"))]);
        assert_eq!(field(&s, "best"), field(&e, "best"), "{objective}");
        assert_eq!(field(&e, "configurations"), "27");
    }
    let s = ok(&["search", "--table", p(&table), "--seed", "1", "--max-dropout", "4", "--iterations", "30", "--out", p(&dir.path().join("c"))]);
    assert!(field(&s, "dropout_count").parse::<usize>().unwrap() <= 4);
    let history = std::fs::read_to_string(dir.path().join("c/history.csv")).unwrap();
    assert!(history.lines().nth(1).unwrap().starts_with("generation,genome,accuracy"));
    assert!(dir.path().join("c/pareto.csv").exists());
}

#[test]
fn estimate_both_schemes() {
    let net = configs().join("lenet.toml");
    let out = ok(&["estimate", "--network", p(&net), "--genome", "R-B-I", "--no-timestamp"]);
    let mut rdr = csv::Reader::from_reader(out.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let lat: Vec<&csv::StringRecord> = rows.iter().filter(|r| &r[2] == "latency-opt").collect();
    let res: Vec<&csv::StringRecord> = rows.iter().filter(|r| &r[2] == "resource-opt").collect();
    assert_eq!(lat.len(), res.len());
    assert_eq!(lat.len(), 13, "12 layers plus a total row");
    for (a, b) in lat.iter().zip(&res) {
        assert_eq!(&a[0], &b[0]);
        assert!(a[3].parse::<f64>().unwrap() <= b[3].parse::<f64>().unwrap());
        assert_eq!(&a[5], &b[5], "mac_ops must not depend on the scheme");
    }
    let only = ok(&["estimate", "--network", p(&net), "--scheme", "resource-opt", "--no-timestamp"]);
    assert!(!only.contains("latency-opt"));
}

#[test]
fn gendata_train_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run_cfg = configs().join("run.toml");
    let g = ok(&["gendata", "--config", p(&run_cfg), "--samples-per-class", "20", "--out", p(&data)]);
    assert_eq!(field(&g, "samples"), "80");

    // keep_rate = 1 network: every MC pass is identical.
    let net = dir.path().join("det.toml");
    let text = std::fs::read_to_string(configs().join("small.toml")).unwrap().replace("keep_rate = 0.8", "keep_rate = 1.0");
    std::fs::write(&net, text).unwrap();
    let train_out = dir.path().join("train");
    let t = ok(&["train", "--config", p(&run_cfg), "--network", p(&net), "--data", p(&data), "--epochs", "2", "--out", p(&train_out), "--no-timestamp"]);
    assert!(t.contains("checkpoint="));
    let trace = std::fs::read_to_string(train_out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3);
    assert!(trace.starts_with("epoch,loss,train_acc\n"));

    let pred = ok(&["predict", "--checkpoint", p(&train_out.join("checkpoint")), "--data", p(&data), "--seed", "1", "--samples", "5", "--no-timestamp"]);
    let mut rdr = csv::Reader::from_reader(pred.as_bytes());
    let mut inputs = 0;
    for r in rdr.records() {
        let r = r.unwrap();
        if &r[0] == "input" {
            inputs += 1;
            assert_eq!(r[4].parse::<f64>().unwrap(), 0.0);
        } else {
            assert_eq!(&r[0], "summary");
        }
    }
    assert_eq!(inputs, 80);
}

#[test]
fn outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run_cfg = configs().join("run.toml");
    let mut outputs = Vec::new();
    for k in 0..2 {
        let base = dir.path().join(format!("run{k}"));
        ok(&["gendata", "--config", p(&run_cfg), "--samples-per-class", "10", "--out", p(&base.join("data"))]);
        ok(&["train", "--config", p(&run_cfg), "--data", p(&base.join("data")), "--epochs", "1", "--out", p(&base.join("t")), "--no-timestamp"]);
        let pred = ok(&["predict", "--config", p(&run_cfg), "--checkpoint", p(&base.join("t/checkpoint")), "--data", p(&base.join("data")), "--no-timestamp"]);
        let files = ["data/inputs.bcvt", "data/labels.csv", "t/trace.csv", "t/checkpoint/layer000_kernel.bcvt", "t/checkpoint/manifest.toml"];
        let mut blob: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(base.join(f)).unwrap()).collect();
        blob.push(pred.into_bytes());
        outputs.push(blob);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn timestamp_line_is_optional() {
    let net = configs().join("small.toml");
    let with = ok(&["estimate", "--network", p(&net)]);
    assert!(with.starts_with("# generated_unix="));
    let without = ok(&["estimate", "--network", p(&net), "--no-timestamp"]);
    assert!(without.starts_with("layer_index,"));
    assert_eq!(with.lines().skip(1).collect::<Vec<_>>(), without.lines().collect::<Vec<_>>());
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = run(&["gendata", "--classes", "2", "--samples-per-class", "3", "--feature-shape", "4", "--out", p(&a)]);
    assert_eq!(out.status.code(), Some(2));
    let line = String::from_utf8(out.stderr).unwrap();
    assert!(line.starts_with("error kind=config message=\""), "{line}");
    assert_eq!(line.lines().count(), 1);

    let st = bin()
        .env("BCVNN_SEED", "5")
        .args(["gendata", "--classes", "2", "--samples-per-class", "3", "--feature-shape", "4", "--out", p(&a)])
        .output()
        .unwrap();
    assert!(st.status.success());
    ok(&["gendata", "--classes", "2", "--samples-per-class", "3", "--feature-shape", "4", "--seed", "5", "--out", p(&b)]);
    assert_eq!(std::fs::read(a.join("inputs.bcvt")).unwrap(), std::fs::read(b.join("inputs.bcvt")).unwrap());
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| run(args).status.code();

    assert_eq!(code(&["estimate", "--bogus-flag"]), Some(2));
    assert_eq!(code(&["estimate", "--network", "/nonexistent/net.toml"]), Some(2));
    assert_eq!(code(&["estimate", "--network", p(&configs().join("small.toml")), "--genome", "R-X"]), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 9\n").unwrap();
    assert_eq!(code(&["estimate", "--config", p(&bad), "--network", p(&configs().join("small.toml"))]), Some(2));
    std::fs::write(&bad, "schema_version = 1\nunknown_key = 3\n").unwrap();
    assert_eq!(code(&["estimate", "--config", p(&bad), "--network", p(&configs().join("small.toml"))]), Some(2));

    // Genome of the wrong length for a cached table is a runtime failure.
    let table = dir.path().join("t.csv");
    std::fs::write(&table, "genome,accuracy,ece\nR-B,0.9,0.1\n").unwrap();
    let out = run(&["search", "--table", p(&table), "--seed", "1", "--min-dropout", "9", "--iterations", "2", "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error kind=runtime"), "{err}");

    // Dataset whose shape does not fit the network.
    let data = dir.path().join("d");
    ok(&["gendata", "--classes", "4", "--samples-per-class", "2", "--feature-shape", "3", "--seed", "1", "--out", p(&data)]);
    let out = run(&["train", "--network", p(&configs().join("small.toml")), "--data", p(&data), "--seed", "1", "--out", p(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_documents_flags() {
    let help = ok(&["search", "--help"]);
    for flag in ["--table", "--seed", "--threads", "--no-timestamp", "--config", "--iterations", "--population", "--max-dropout", "--objective", "--out"] {
        assert!(help.contains(flag), "{flag} missing from search --help");
    }
    let help = ok(&["predict", "--help"]);
    for flag in ["--samples", "--seed", "--checkpoint"] {
        assert!(help.contains(flag));
    }
    let help = ok(&["estimate", "--help"]);
    assert!(help.contains("latency-opt") && help.contains("resource-opt") && help.contains("both"));
}
