use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ecc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ecc"))
}

fn run(args: &[&str]) -> Output {
    ecc().args(args).output().expect("spawn ecc")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, extra: &[&str]) -> String {
    let out = dir.join(name);
    let mut args = vec!["gen", "-o", path(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    path(&out).to_owned()
}

#[test]
fn compute_writes_csv() {
    let dir = TempDir::new().unwrap();
    let raw = gen(dir.path(), "v.raw", &["--dims", "64", "64", "64", "--seed", "3"]);
    let csv = dir.path().join("v.csv");
    ok(&["compute", &raw, "--chunks", "4", "-o", path(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("threshold,euler_characteristic"));
    let last = lines.last().unwrap();
    assert!(last.ends_with(",1"), "final chi of a full cube is 1: {last}");
}

#[test]
fn compute_without_dims_fails() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("bare.raw");
    fs::write(&raw, [0u8; 64]).unwrap();
    let out = run(&["compute", path(&raw)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--dims"));
}

#[test]
fn chunk_count_does_not_change_output() {
    let dir = TempDir::new().unwrap();
    let raw = gen(dir.path(), "v.raw", &["--kind", "grf", "--dims", "40", "24", "24", "--sigma", "1.5"]);
    let one = ok(&["compute", &raw, "--chunks", "1"]).stdout;
    let seven = ok(&["compute", &raw, "--chunks", "7", "--workers", "2"]).stdout;
    let budget = ok(&["compute", &raw, "--memory-budget", "64K"]).stdout;
    assert!(!one.is_empty());
    assert_eq!(one, seven);
    assert_eq!(one, budget);
}

#[test]
fn gen_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let args = ["--kind", "grf", "--dims", "32", "32", "16", "--seed", "11"];
    let a = fs::read(gen(dir.path(), "a.raw", &args)).unwrap();
    let b = fs::read(gen(dir.path(), "b.raw", &args)).unwrap();
    assert_eq!(a, b);
    let other = fs::read(gen(dir.path(), "c.raw", &["--kind", "grf", "--dims", "32", "32", "16", "--seed", "12"])).unwrap();
    assert_ne!(a, other);
}

#[test]
fn grf_has_bounded_distinct_values() {
    let dir = TempDir::new().unwrap();
    let raw = gen(dir.path(), "g.raw", &["--kind", "grf", "--dims", "128", "128", "128", "--sigma", "4"]);
    let bytes = fs::read(&raw).unwrap();
    assert_eq!(bytes.len(), 4 * 128 * 128 * 128);
    let distinct: BTreeSet<u32> = bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    assert!(distinct.len() <= 1024, "{} distinct values", distinct.len());
    assert!(distinct.len() > 1);
}

#[test]
fn batch_processes_every_file() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    for i in 0..100 {
        let seed = i.to_string();
        gen(&input, &format!("img{i:03}.raw"), &["--dims", "128", "128", "--seed", &seed]);
    }
    let out_dir = dir.path().join("out");
    let out = ok(&["batch", path(&input), "--out-dir", path(&out_dir)]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 101);
    let curves = fs::read_dir(&out_dir).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv")
    });
    assert_eq!(curves.count(), 100);
    let summary = String::from_utf8(out.stderr).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("files") && l.ends_with("100")), "{summary}");
}

#[test]
fn batch_without_matches_warns() {
    let dir = TempDir::new().unwrap();
    let out = ok(&["batch", path(dir.path())]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn batch_continues_past_bad_files() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "a.raw", &["--dims", "8", "8"]);
    gen(dir.path(), "c.raw", &["--dims", "8", "8"]);
    fs::write(dir.path().join("b.raw"), [1u8; 10]).unwrap();
    let out = run(&["batch", path(dir.path())]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let bad = dir.path().join("b.raw");
    let line = stderr.lines().find(|l| l.contains("b.raw")).unwrap();
    assert!(!line.contains(&format!("{0}: {0}", bad.display())), "{line}");
    assert!(dir.path().join("a.csv").exists());
    assert!(dir.path().join("c.csv").exists());
}

#[test]
fn bench_rejects_zero_iterations() {
    let out = run(&["bench", "--iters", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_reports_timings() {
    let out = ok(&["bench", "--size", "32", "32", "--iters", "3"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for label in ["overall avg [ms]", "ECC exec avg [ms]", "Gaussian exec avg [ms]"] {
        assert!(text.contains(label), "{text}");
    }
}

#[test]
fn vcec_and_json_outputs() {
    let dir = TempDir::new().unwrap();
    let raw = gen(dir.path(), "v.raw", &["--dims", "16", "16", "--dtype", "u8"]);
    let vcec = dir.path().join("v.vcec");
    let json = ok(&["compute", &raw, "--format", "json", "--vcec-out", path(&vcec)]).stdout;
    let parsed: serde_json::Value = serde_json::from_slice(&json).unwrap();
    assert!(parsed.is_array() || parsed.is_object(), "{parsed}");
    let text = fs::read_to_string(&vcec).unwrap();
    let total: i64 = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<i64>().unwrap())
        .sum();
    assert_eq!(total, 1);
}
