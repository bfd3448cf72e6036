//! Every command, run twice from scratch in the same directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::common::{cli, fixture, s};
use crate::{outcome, Outcome};

fn snapshot(root: &Path, dir: &Path, into: &mut BTreeMap<PathBuf, Vec<u8>>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            snapshot(root, &p, into);
        } else {
            into.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
        }
    }
}

/// Run the whole command sequence in `dir`; returns (files, per-command
/// stdout+stderr, failed commands).
fn pipeline(dir: &Path) -> (BTreeMap<PathBuf, Vec<u8>>, Vec<String>, Vec<String>) {
    let cfg = fixture("tiny_config.json");
    let d = |x: &str| dir.join(x).to_str().unwrap().to_string();
    let kb = d("kb.json");
    std::fs::write(&kb, r#"[{"poi": "starbucks", "distance": "2 miles"}]"#).unwrap();
    let commands: Vec<(Vec<String>, &str)> = vec![
        (
            vec![
                "synth",
                "--spec",
                s(&fixture("toy_spec.json")),
                "--seed",
                "5",
                "--out",
                &d(""),
            ],
            "",
        ),
        (
            vec![
                "pretrain",
                "--config",
                s(&cfg),
                "--corpus",
                &d("transfer.jsonl"),
                "--exclude",
                "navigate",
                "--out",
                &d("latent"),
            ],
            "",
        ),
        (
            vec![
                "train",
                "--config",
                s(&cfg),
                "--source",
                &d("source.jsonl"),
                "--target",
                &d("navigate.train.jsonl"),
                "--p",
                "0.1",
                "--out",
                &d("gen"),
            ],
            "",
        ),
        (
            vec![
                "train",
                "--config",
                s(&cfg),
                "--source",
                &d("source.jsonl"),
                "--target",
                &d("navigate.train.jsonl"),
                "--p",
                "0.1",
                "--variant",
                "fsdg+laed",
                "--latent",
                &d("latent/di-vae.ckpt"),
                &d("latent/di-vst.ckpt"),
                "--out",
                &d("laed"),
            ],
            "",
        ),
        (
            vec![
                "eval",
                "--checkpoint",
                &d("laed/model.ckpt"),
                "--test",
                &d("navigate.test.jsonl"),
                "--lexicon",
                &d("navigate.lexicon.jsonl"),
                "--runs",
                "2",
                "--out",
                &d("eval_full"),
            ],
            "",
        ),
        (
            vec![
                "eval",
                "--checkpoint",
                &d("gen/model.ckpt"),
                "--test",
                &d("navigate.test.jsonl"),
                "--lexicon",
                &d("navigate.lexicon.jsonl"),
                "--mode",
                "fast",
                "--runs",
                "2",
                "--out",
                &d("eval_fast"),
            ],
            "",
        ),
        (
            vec![
                "inspect-latent",
                "--checkpoint",
                &d("latent/di-vst.ckpt"),
                "--corpus",
                &d("transfer.jsonl"),
                "--out",
                &d("inspect"),
            ],
            "",
        ),
        (
            vec![
                "chat",
                "--checkpoint",
                &d("laed/model.ckpt"),
                "--domain",
                "navigate",
                "--kb",
                &kb,
            ],
            "find a coffee shop\nthanks\n",
        ),
    ]
    .into_iter()
    .map(|(a, i)| (a.into_iter().map(String::from).collect::<Vec<_>>(), i))
    .collect();
    let mut streams = Vec::new();
    let mut failed = Vec::new();
    for (args, stdin) in &commands {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = cli(&refs, stdin);
        if o.code != 0 {
            failed.push(format!("{} exited {}", args[0], o.code));
        }
        streams.push(format!("{}\n{}\n{}", args[0], o.stdout, o.stderr));
    }
    let mut files = BTreeMap::new();
    snapshot(dir, dir, &mut files);
    (files, streams, failed)
}

pub fn criterion() -> Outcome {
    let base = tempfile::tempdir().unwrap();
    let dir = base.path().join("work");
    std::fs::create_dir_all(&dir).unwrap();
    let (a, sa, fa) = pipeline(&dir);
    std::fs::remove_dir_all(&dir).unwrap();
    std::fs::create_dir_all(&dir).unwrap();
    let (b, sb, fb) = pipeline(&dir);
    if !fa.is_empty() || !fb.is_empty() {
        return outcome(false, format!("commands failed: {fa:?} {fb:?}"));
    }
    let mut differ: Vec<String> = a
        .iter()
        .filter(|(k, v)| b.get(*k) != Some(v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    differ.extend(
        b.keys()
            .filter(|k| !a.contains_key(*k))
            .map(|k| k.display().to_string()),
    );
    let streams_differ = sa.iter().zip(&sb).filter(|(x, y)| x != y).count();
    let bytes: usize = a.values().map(Vec::len).sum();
    let kinds = |ext: &str| a.keys().filter(|k| k.to_string_lossy().ends_with(ext)).count();
    outcome(
        differ.is_empty() && streams_differ == 0,
        format!(
            "{} commands twice: {} files ({} checkpoints, {} logs, {} reports), {bytes} bytes; {} files and {streams_differ} output streams differ{}",
            sa.len(),
            a.len(),
            kinds(".ckpt"),
            kinds("log.jsonl"),
            kinds("report.json"),
            differ.len(),
            if differ.is_empty() { String::new() } else { format!(": {}", differ.join(", ")) }
        ),
    )
}
