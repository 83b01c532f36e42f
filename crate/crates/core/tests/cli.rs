use std::path::Path;
use std::process::{Command, Output};

fn ssdgm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssdgm"))
        .current_dir(dir)
        .args(args)
        .env_remove("SSDGM_SEED")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Config echo without the output location, which differs between runs.
fn echo_sans_out(dir: &Path, f: &str) -> String {
    String::from_utf8(read(dir, f))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("out="))
        .collect::<Vec<_>>()
        .join("\n")
}

fn read(dir: &Path, f: &str) -> Vec<u8> {
    std::fs::read(dir.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"))
}

const SMALL_MODEL: &[&str] = &["--epochs", "2", "--hidden", "8", "--d-z", "2", "--unlabeled-batch", "20"];

#[test]
fn gen_data_is_byte_identical_across_runs() {
    let d = tempfile::tempdir().unwrap();
    for stem in ["a/m", "b/m"] {
        let o = ssdgm(d.path(), &["gen-data", "--n", "10000", "--noise", "0.1", "--seed", "1", "--out", stem]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["m.labeled.csv", "m.unlabeled.csv", "m.test.csv", "m.train.csv"] {
        assert_eq!(read(&d.path().join("a"), f), read(&d.path().join("b"), f), "{f}");
    }
    assert_eq!(echo_sans_out(&d.path().join("a"), "m.echo"), echo_sans_out(&d.path().join("b"), "m.echo"));
    let labeled = String::from_utf8(read(&d.path().join("a"), "m.labeled.csv")).unwrap();
    assert_eq!(labeled.lines().count(), 7);
}

#[test]
fn seed_falls_back_to_environment() {
    let d = tempfile::tempdir().unwrap();
    let run = |env: Option<&str>, extra: &[&str], stem: &str| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_ssdgm"));
        c.current_dir(d.path()).args(["gen-data", "--n", "50", "--n-test", "10", "--out", stem]).args(extra);
        match env {
            Some(v) => c.env("SSDGM_SEED", v),
            None => c.env_remove("SSDGM_SEED"),
        };
        assert!(c.status().unwrap().success());
        std::fs::read(d.path().join(format!("{stem}.train.csv"))).unwrap()
    };
    let env5 = run(Some("5"), &[], "e5");
    assert_eq!(env5, run(None, &["--seed", "5"], "f5"));
    assert_ne!(env5, run(None, &[], "f0"));
    assert_eq!(run(Some("9"), &["--seed", "5"], "g5"), env5);
}

#[test]
fn train_without_labels_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("d.csv"), "x1,x2,label\n0.1,0.2,-1\n0.3,0.4,\n").unwrap();
    let o = ssdgm(d.path(), &["train", "--mode", "sslapd", "--data", "d.csv"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("empty labeled set"), "{}", stderr(&o));
}

#[test]
fn usage_errors_and_help() {
    let d = tempfile::tempdir().unwrap();
    let o = ssdgm(d.path(), &["frobnicate"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(code(&ssdgm(d.path(), &["train", "--data", "x.csv", "--bogus"])), 1);
    let o = ssdgm(d.path(), &["reproduce", "--labeled-per-class", "2", "--labeled-indices", "0,1"]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(e.contains("--labeled-per-class") && e.contains("--labeled-indices"), "{e}");
    assert_eq!(code(&ssdgm(d.path(), &["grid", "--checkpoint", "c"])), 1);

    for sub in ["gen-data", "train", "predict", "grid", "sample", "report", "reproduce"] {
        let o = ssdgm(d.path(), &[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("--seed"), "{sub}");
    }
    let help = String::from_utf8(ssdgm(d.path(), &["reproduce", "--help"]).stdout).unwrap();
    for default in ["[default: 128,128]", "[default: 5]", "[default: 0.1*Nl]", "[default: 10]"] {
        assert!(help.contains(default), "{default}");
    }
}

#[test]
fn numeric_failure_exits_two_and_keeps_last_good_checkpoint() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&ssdgm(d.path(), &["gen-data", "--n", "200", "--n-test", "20", "--out", "m"])), 0);
    let mut args = vec!["train", "--method", "sslpe", "--data", "m.train.csv", "--lr", "1e200", "--out", "run"];
    args.extend_from_slice(SMALL_MODEL);
    let o = ssdgm(d.path(), &args);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("numeric"));
    assert!(d.path().join("run/checkpoint").exists());
}

#[test]
fn train_predict_grid_sample_report_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert_eq!(code(&ssdgm(p, &["gen-data", "--n", "300", "--n-test", "50", "--seed", "2", "--out", "m"])), 0);
    let mut args = vec!["train", "--method", "sslapd", "--data", "m.train.csv", "--out", "run", "--seed", "2"];
    args.extend_from_slice(SMALL_MODEL);
    let o = ssdgm(p, &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["checkpoint", "history.csv", "config.echo"] {
        assert!(p.join("run").join(f).exists(), "{f}");
    }

    let o = ssdgm(p, &["predict", "--checkpoint", "run/checkpoint", "--input", "m.test.csv", "--out", "pred.csv", "--chains", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let pred = String::from_utf8(read(p, "pred.csv")).unwrap();
    assert!(pred.starts_with("x1,x2,p0,p1,argmax\n"));
    assert_eq!(pred.lines().count(), 51);

    let o = ssdgm(p, &["grid", "--checkpoint", "run/checkpoint", "--x1-range", "-2,3", "--x2-range", "-1,2", "--resolution", "4", "--out", "g.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let grid = String::from_utf8(read(p, "g.csv")).unwrap();
    assert!(grid.starts_with("x1,x2,p1,p1_std\n"));
    assert_eq!(grid.lines().count(), 17);

    assert_eq!(code(&ssdgm(p, &["sample", "--checkpoint", "run/checkpoint", "--n", "12", "--out", "s.csv"])), 0);
    assert_eq!(String::from_utf8(read(p, "s.csv")).unwrap().lines().count(), 13);

    let o = ssdgm(p, &["report", "--checkpoint", "run/checkpoint", "--test", "m.test.csv", "--out", "rep"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("SSLAPD"));
    let csv = String::from_utf8(read(&p.join("rep"), "report.csv")).unwrap();
    assert!(csv.starts_with("method,accuracy,avg_loglik,seconds,seed\nsslapd,"));
}

#[test]
fn config_file_and_echo_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert_eq!(code(&ssdgm(p, &["gen-data", "--n", "200", "--n-test", "20", "--out", "m"])), 0);
    std::fs::write(p.join("cfg"), "epochs=1\nhidden=8\nd-z=2\nunlabeled-batch=50\nseed=4\n").unwrap();
    let o = ssdgm(p, &["train", "--method", "sslpe", "--data", "m.train.csv", "--config", "cfg", "--seed", "6", "--out", "a"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let echo = String::from_utf8(read(&p.join("a"), "config.echo")).unwrap();
    assert!(echo.contains("\nseed=6\n") && echo.contains("\nepochs=1\n") && echo.contains("\nhidden=8\n"), "{echo}");

    // the echo alone reproduces the run
    let o = ssdgm(p, &["train", "--config", "a/config.echo", "--out", "b"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(&p.join("a"), "checkpoint"), read(&p.join("b"), "checkpoint"));
    assert_eq!(read(&p.join("a"), "history.csv"), read(&p.join("b"), "history.csv"));

    std::fs::write(p.join("bad"), "epochs\n").unwrap();
    assert_eq!(code(&ssdgm(p, &["train", "--data", "m.train.csv", "--config", "bad"])), 1);
}

#[test]
fn small_reproduce_is_deterministic_and_thread_independent() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let mut base = vec!["reproduce", "--n", "300", "--n-test", "100", "--resolution", "6", "--samples", "40", "--seed", "7"];
    base.extend_from_slice(SMALL_MODEL);
    for (out, threads) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let mut args = base.clone();
        args.extend_from_slice(&["--out", out, "--threads", threads]);
        let o = ssdgm(p, &args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let files = [
        "report.csv",
        "report.txt",
        "samples.csv",
        "history.dnn.csv",
        "history.sslpe.csv",
        "history.sslapd.csv",
        "grid.dnn.csv",
        "grid.sslpe.csv",
        "grid.sslapd.csv",
        "checkpoint.sslapd",
    ];
    for f in files {
        let a = read(&p.join("a"), f);
        assert_eq!(a, read(&p.join("b"), f), "{f}");
        assert_eq!(a, read(&p.join("c"), f), "{f} with 3 threads");
    }
    assert_eq!(echo_sans_out(&p.join("a"), "config.echo"), echo_sans_out(&p.join("b"), "config.echo"));
    assert!(p.join("a/timing.csv").exists());
    assert!(!p.join("a/FAILED").exists());
}

#[test]
fn failed_reproduce_leaves_marker() {
    let d = tempfile::tempdir().unwrap();
    let o = ssdgm(d.path(), &["reproduce", "--n", "10", "--n-test", "10", "--labeled-per-class", "50", "--out", "r"]);
    assert_eq!(code(&o), 1);
    assert!(d.path().join("r/FAILED").exists());
    assert!(d.path().join("r/config.echo").exists());
}
