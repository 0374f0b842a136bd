//! End-to-end pipeline checks through the compiled binary: simulate, fit,
//! call, evaluate on a small configuration, plus determinism, manifest
//! replay, and exit-code conventions.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_zibnp")
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("zibnp_cli_tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("ZIBNP_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn full_pipeline_small() {
    let dir = workdir("pipeline");
    let simdir = dir.join("sim");
    let fitdir = dir.join("fit");
    let calldir = dir.join("call");

    let out = run(&[
        "simulate",
        "--lambda0",
        "-0.1",
        "--n",
        "30",
        "--p",
        "60",
        "--seed",
        "7",
        "--out",
        simdir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    for f in [
        "counts.tsv",
        "covariates.tsv",
        "truth.json",
        "manifest.json",
    ] {
        assert!(simdir.join(f).exists(), "missing {f}");
    }

    let out = run(&[
        "fit",
        "--counts",
        simdir.join("counts.tsv").to_str().unwrap(),
        "--covariates",
        simdir.join("covariates.tsv").to_str().unwrap(),
        "--group",
        "group",
        "--iterations",
        "120",
        "--burn-in",
        "60",
        "--thin",
        "2",
        "--seed",
        "11",
        "--trace-csv",
        "--out",
        fitdir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    for f in [
        "trace_chain0.bin",
        "trace_chain0.meta.json",
        "trace_chain0.csv",
        "screen_report.tsv",
        "manifest.json",
    ] {
        assert!(fitdir.join(f).exists(), "missing {f}");
    }

    let out = run(&[
        "call",
        "--trace",
        fitdir.join("trace_chain0.bin").to_str().unwrap(),
        "--nominal-fdr",
        "0.05",
        "--out",
        calldir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(calldir.join("da_report.tsv").exists());
    assert!(calldir.join("da_summary.json").exists());

    let metrics = dir.join("metrics.csv");
    let svg = dir.join("roc.svg");
    let out = run(&[
        "evaluate",
        "--truth",
        simdir.join("truth.json").to_str().unwrap(),
        "--result",
        calldir.join("da_report.tsv").to_str().unwrap(),
        "--out",
        metrics.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("mean AUC"), "{text}");
    assert!(metrics.exists());
    assert!(String::from_utf8_lossy(&read(&svg)).starts_with("<svg"));
}

#[test]
fn simulate_is_deterministic() {
    let a = workdir("sim_det_a");
    let b = workdir("sim_det_b");
    for dir in [&a, &b] {
        let out = run(&[
            "simulate",
            "--lambda0",
            "-0.059",
            "--n",
            "20",
            "--p",
            "40",
            "--seed",
            "5",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_ok(&out);
    }
    for f in ["counts.tsv", "covariates.tsv", "truth.json"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f} differs");
    }
}

#[test]
fn fit_traces_deterministic_across_thread_caps() {
    let dir = workdir("fit_det");
    let simdir = dir.join("sim");
    assert_ok(&run(&[
        "simulate",
        "--lambda0",
        "-0.1",
        "--n",
        "20",
        "--p",
        "40",
        "--seed",
        "3",
        "--out",
        simdir.to_str().unwrap(),
    ]));
    let common = |outdir: &Path, threads: &str| {
        Command::new(bin())
            .args([
                "fit",
                "--counts",
                simdir.join("counts.tsv").to_str().unwrap(),
                "--covariates",
                simdir.join("covariates.tsv").to_str().unwrap(),
                "--group",
                "group",
                "--iterations",
                "40",
                "--burn-in",
                "20",
                "--seed",
                "21",
                "--chains",
                "2",
                "--out",
                outdir.to_str().unwrap(),
            ])
            .env("ZIBNP_THREADS", threads)
            .output()
            .unwrap()
    };
    let d1 = dir.join("run1");
    let d2 = dir.join("run2");
    assert_ok(&common(&d1, "1"));
    assert_ok(&common(&d2, "4"));
    for c in 0..2 {
        assert_eq!(
            read(&d1.join(format!("trace_chain{c}.bin"))),
            read(&d2.join(format!("trace_chain{c}.bin"))),
            "chain {c} differs across thread caps"
        );
    }
}

#[test]
fn manifest_replay_reproduces_outputs() {
    let dir = workdir("manifest_replay");
    let first = dir.join("first");
    assert_ok(&run(&[
        "simulate",
        "--lambda0",
        "-0.1",
        "--n",
        "20",
        "--p",
        "40",
        "--seed",
        "13",
        "--out",
        first.to_str().unwrap(),
    ]));
    let second = dir.join("second");
    assert_ok(&run(&[
        "simulate",
        "--manifest",
        first.join("manifest.json").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]));
    for f in ["counts.tsv", "covariates.tsv", "truth.json"] {
        assert_eq!(read(&first.join(f)), read(&second.join(f)), "{f} differs");
    }

    // fit replay
    let fit1 = dir.join("fit1");
    assert_ok(&run(&[
        "fit",
        "--counts",
        first.join("counts.tsv").to_str().unwrap(),
        "--covariates",
        first.join("covariates.tsv").to_str().unwrap(),
        "--group",
        "group",
        "--iterations",
        "30",
        "--burn-in",
        "10",
        "--seed",
        "2",
        "--out",
        fit1.to_str().unwrap(),
    ]));
    let fit2 = dir.join("fit2");
    assert_ok(&run(&[
        "fit",
        "--manifest",
        fit1.join("manifest.json").to_str().unwrap(),
        "--out",
        fit2.to_str().unwrap(),
    ]));
    assert_eq!(
        read(&fit1.join("trace_chain0.bin")),
        read(&fit2.join("trace_chain0.bin"))
    );
}

#[test]
fn missing_input_gives_exit_2() {
    let dir = workdir("exit2");
    let out = run(&[
        "fit",
        "--counts",
        dir.join("nope.tsv").to_str().unwrap(),
        "--covariates",
        dir.join("nope2.tsv").to_str().unwrap(),
        "--group",
        "group",
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nope.tsv"), "{err}");
}

#[test]
fn bad_config_gives_exit_3() {
    let dir = workdir("exit3");
    let simdir = dir.join("sim");
    assert_ok(&run(&[
        "simulate",
        "--lambda0",
        "-0.1",
        "--n",
        "20",
        "--p",
        "40",
        "--seed",
        "3",
        "--out",
        simdir.to_str().unwrap(),
    ]));
    let out = run(&[
        "fit",
        "--counts",
        simdir.join("counts.tsv").to_str().unwrap(),
        "--covariates",
        simdir.join("covariates.tsv").to_str().unwrap(),
        "--group",
        "group",
        "--iterations",
        "10",
        "--burn-in",
        "20",
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));

    // simulate with an odd sample count is a config error too
    let out = run(&[
        "simulate",
        "--lambda0",
        "-0.1",
        "--n",
        "21",
        "--p",
        "40",
        "--out",
        dir.join("odd").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_flag_rejected() {
    let out = run(&["simulate", "--definitely-not-a-flag", "1"]);
    assert!(!out.status.success());
}

#[test]
fn simulate_accepts_covariates_file() {
    let dir = workdir("cov_file");
    // 10 subject rows, two binary columns and one continuous
    let mut table = String::from("subject\tb1\tb2\tage\n");
    for i in 0..10 {
        table.push_str(&format!(
            "r{i}\t{}\t{}\t{}\n",
            i % 2,
            usize::from(i % 3 == 0),
            20 + i
        ));
    }
    let cov_path = dir.join("block.tsv");
    std::fs::write(&cov_path, table).unwrap();
    let out = run(&[
        "simulate",
        "--lambda0",
        "-0.1",
        "--n",
        "20",
        "--p",
        "40",
        "--seed",
        "2",
        "--covariates-file",
        cov_path.to_str().unwrap(),
        "--out",
        dir.join("sim").to_str().unwrap(),
    ]);
    assert_ok(&out);
    let covs = String::from_utf8_lossy(&read(&dir.join("sim/covariates.tsv"))).to_string();
    let lines: Vec<&str> = covs.lines().collect();
    assert_eq!(lines.len(), 21);
    // binary column passed through; rows repeat across the two groups
    let first = lines[1].split('\t').nth(2).unwrap();
    let twin = lines[11].split('\t').nth(2).unwrap();
    assert_eq!(first, twin);
}

#[test]
fn min_variance_reference_mode_runs() {
    let dir = workdir("minvar");
    let simdir = dir.join("sim");
    assert_ok(&run(&[
        "simulate",
        "--lambda0",
        "-0.1",
        "--n",
        "20",
        "--p",
        "40",
        "--seed",
        "19",
        "--out",
        simdir.to_str().unwrap(),
    ]));
    let fitdir = dir.join("fit");
    assert_ok(&run(&[
        "fit",
        "--counts",
        simdir.join("counts.tsv").to_str().unwrap(),
        "--covariates",
        simdir.join("covariates.tsv").to_str().unwrap(),
        "--group",
        "group",
        "--iterations",
        "30",
        "--burn-in",
        "10",
        "--seed",
        "4",
        "--reference-mode",
        "min-variance",
        "--out",
        fitdir.to_str().unwrap(),
    ]));
    let meta = String::from_utf8_lossy(&read(&fitdir.join("trace_chain0.meta.json"))).to_string();
    // the simulator's unit-count reference column is the minimum-variance taxon
    assert!(
        meta.contains("\"reference_taxon\": \"taxon_ref\""),
        "{meta}"
    );
}
