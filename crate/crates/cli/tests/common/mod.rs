#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use bkc_core::bintensor::{encode_kernel, BinaryKernel};
use serde_json::Value;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout)
            .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", self.stdout))
    }
}

pub fn bkc<I, S>(args: I) -> Run
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = Command::new(env!("CARGO_BIN_EXE_bkc"))
        .args(args)
        .output()
        .expect("spawn bkc");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Runs and asserts exit code 0.
pub fn ok<I, S>(args: I) -> Value
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let r = bkc(args);
    assert_eq!(r.code, 0, "stderr: {}\nstdout: {}", r.stderr, r.stdout);
    r.json()
}

pub fn p(path: &Path) -> String {
    path.display().to_string()
}

pub fn write_kernel(path: &Path, k: &BinaryKernel) {
    std::fs::write(path, encode_kernel(k)).unwrap();
}

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Synthesizes a small block fixture into `dir`.
pub fn synth_block(dir: &Path, block: usize, channels: usize, seed: u64) -> Value {
    ok([
        "synth",
        "--block",
        &block.to_string(),
        "--channels",
        &channels.to_string(),
        "--in-channels",
        "16",
        "--out-channels",
        "16",
        "--seed",
        &seed.to_string(),
        "-o",
        &p(dir),
    ])
}

pub fn read_kernel(path: &Path) -> BinaryKernel {
    bkc_core::bintensor::decode_kernel(&std::fs::read(path).unwrap()).unwrap()
}
