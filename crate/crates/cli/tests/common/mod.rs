#![allow(dead_code)]

use std::path::{Path, PathBuf};

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Run the CLI in-process with `stdin` as input.
pub fn cli(args: &[&str], stdin: &str) -> Output {
    let mut input = stdin.as_bytes();
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("fsdg").chain(args.iter().copied());
    let code = fsdg_cli::run(argv, &mut input, &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

pub fn ok(args: &[&str]) -> Output {
    let o = cli(args, "");
    assert_eq!(o.code, 0, "fsdg {args:?} failed:\n{}", o.stderr);
    o
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthesize the toy corpora into `dir`.
pub fn synth_toy(dir: &Path) {
    ok(&[
        "synth",
        "--spec",
        s(&fixture("toy_spec.json")),
        "--seed",
        "5",
        "--out",
        s(dir),
    ]);
}

/// Toy corpora plus pre-trained latent models in `dir/latent`.
pub fn pretrained_toy(dir: &Path) {
    synth_toy(dir);
    let cfg = fixture("tiny_config.json");
    let corpus = dir.join("transfer.jsonl");
    let out = dir.join("latent");
    ok(&[
        "pretrain",
        "--config",
        s(&cfg),
        "--corpus",
        s(&corpus),
        "--exclude",
        "navigate",
        "--out",
        s(&out),
    ]);
}

pub fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}
