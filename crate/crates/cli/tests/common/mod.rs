//! Helpers for driving the `kgeval` binary from tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kgeval::io::write_dataset;
use kgeval::synth::{freebase_like, SynthSpec};

pub const BIN: &str = env!("CARGO_BIN_EXE_kgeval");

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn kgeval<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(BIN).args(args).output().expect("kgeval runs")
}

pub fn describe(out: &Output) -> String {
    format!(
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

/// Runs `kgeval` and returns its stdout, or the full output on failure.
pub fn run_ok<I, S>(args: I) -> Result<String, String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(|a| a.as_ref().to_owned()).collect();
    let out = kgeval(&args);
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("kgeval {:?} failed: {}", args, describe(&out)))
    }
}

/// A small typed graph with mediators, written unsplit to `dir`.
pub fn write_small_graph(dir: &Path, seed: u64) {
    let spec = SynthSpec {
        domains: ["film", "music", "sports"].iter().map(|d| d.to_string()).collect(),
        entities_per_type: 10,
        clusters: 2,
        relations_per_domain: 3,
        triples_per_relation: 25,
        mediators_per_domain: 4,
        mediator_degree: (2, 4),
        seed,
    };
    write_dataset(dir, &freebase_like(&spec).unwrap()).unwrap();
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Binarizes, splits and labels the unsplit graph in `raw`, leaving the
/// dataset in `out`.
pub fn prepare(raw: &Path, work: &Path, out: &Path) -> Result<(), String> {
    let bin = work.join("binarized");
    run_ok(["transform", "binarize", "--data", s(raw), "--out", s(&bin)])?;
    run_ok(["transform", "split", "--data", s(&bin), "--seed", "1", "--out", s(out)])?;
    run_ok(["transform", "label", "--data", s(out)])?;
    Ok(())
}

pub fn write_config(path: &Path, body: &str) {
    std::fs::write(path, body).unwrap();
}

pub const TINY_CONFIG: &str = "dim = 16\ngamma = 6.0\nlearning_rate = 0.1\nneg_per_pos = 16\nbatch_size = 64\nsteps = 150\n";

/// Validates `report` against the bundled schema with Python's `jsonschema`.
/// Returns `None` when no such validator is installed.
pub fn validate_with_python(report: &Path) -> Option<Result<(), String>> {
    let schema = workspace_root().join("crates/core/schema/eval_report.schema.json");
    let script = "import json, sys, jsonschema\n\
                  jsonschema.validate(json.load(open(sys.argv[1])), json.load(open(sys.argv[2])))\n";
    let probe = Command::new("python3").args(["-c", "import jsonschema"]).output().ok()?;
    if !probe.status.success() {
        return None;
    }
    let out = Command::new("python3").arg("-c").arg(script).arg(report).arg(&schema).output().ok()?;
    Some(if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    })
}
