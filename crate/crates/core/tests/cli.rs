use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn gen(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["gen-synth", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    sph(&args)
}

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut subdirs: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    subdirs.sort();
    for sub in subdirs {
        let mut files: Vec<_> = fs::read_dir(&sub).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        for f in files {
            let rel = f.strip_prefix(dir).unwrap().display().to_string();
            out.push((rel, fs::read(&f).unwrap()));
        }
    }
    out
}

#[test]
fn gen_synth_is_byte_identical_and_refuses_non_empty_dirs() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = gen(&a, &["--noise", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(gen(&b, &["--noise", "20"]).status.success());
    let (fa, fb) = (files_under(&a), files_under(&b));
    assert_eq!(fa.len(), 400);
    assert_eq!(fa, fb);
    assert!(fa[0].0.starts_with("s01"));

    let again = gen(&a, &[]);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("not empty"));
}

#[test]
fn extract_orl_like_layout() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    assert!(gen(&data, &[]).status.success());

    let out = tmp.path().join("sph.csv");
    let o = sph(&[
        "extract",
        "--dataset",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# sph-descriptors v1"));
    let header = lines.next().unwrap();
    assert!(header.starts_with("label,path,dims,v0,"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 400);
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[2], "735");
        assert_eq!(fields.len(), 3 + 735);
    }
    assert!(rows[0].starts_with("0,s01/01.pgm,"));
    assert!(rows[399].starts_with("39,s40/10.pgm,"));

    let out = tmp.path().join("msph.csv");
    let o = sph(&[
        "extract",
        "--dataset",
        data.to_str().unwrap(),
        "--feature",
        "msph",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().skip(2).all(|l| l.split(',').nth(2) == Some("885")));
}

#[test]
fn missing_config_exits_2_and_names_the_path() {
    let o = sph(&["eval", "--config", "/no/such/dir/exp.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/dir/exp.toml"));
}

#[test]
fn bad_flag_values_exit_2() {
    assert_eq!(sph(&["eval", "--reducer", "svm"]).status.code(), Some(2));
    assert_eq!(sph(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(sph(&["eval"]).status.code(), Some(2));
}

#[test]
fn missing_dataset_is_a_runtime_failure() {
    let o = sph(&["eval", "--dataset", "/no/such/dataset"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_on_separable_data_and_fold_count_errors() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    assert!(gen(&data, &["--classes", "10", "--samples", "4", "--jitter", "0"]).status.success());
    let ds = data.to_str().unwrap();

    let o = sph(&["eval", "--dataset", ds, "--reducer", "pca", "--classifier", "nnc"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("fold 1: train 20, test 20"), "{text}");
    assert!(text.contains("fold 2: train 20, test 20"), "{text}");
    assert!(text.contains("accuracy: 100.00±0.00%"), "{text}");

    let o = sph(&["eval", "--dataset", ds, "--classifier", "crc", "--reducer", "lda"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("accuracy: 100.00±0.00%"));

    let o = sph(&["eval", "--dataset", ds, "--n", "5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("fewer than n = 5"));
}

#[test]
fn config_file_with_flag_override() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    assert!(gen(&data, &["--classes", "5", "--samples", "4", "--jitter", "0"]).status.success());
    let cfg = tmp.path().join("exp.toml");
    fs::write(
        &cfg,
        format!(
            "dataset = {:?}\nreducer = \"none\"\nprotocol = \"fixed-split\"\ntrain_count = 1\n",
            data.to_str().unwrap()
        ),
    )
    .unwrap();
    let results = tmp.path().join("results.csv");
    let o = sph(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--train-count",
        "2",
        "--out",
        results.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("fold 1: train 10, test 10"));
    let csv = fs::read_to_string(&results).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().contains("fixed-split(train=2)"));
}

#[test]
fn sweep_and_bench_commands() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    assert!(gen(&data, &["--classes", "4", "--samples", "4"]).status.success());
    let ds = data.to_str().unwrap();

    let out = tmp.path().join("sweep.csv");
    let o = sph(&["sweep", "--dataset", ds, "--grid", "cells", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(csv.starts_with("block_size,block_overlap,cell_size,cell_overlap,k,sph_dims,"));

    let o = sph(&["bench", "--dataset", ds, "--repetitions", "3", "--limit", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("machine: "));
    assert_eq!(text.lines().count(), 4);
    assert_eq!(sph(&["bench", "--dataset", ds, "--repetitions", "2"]).status.code(), Some(2));
}
