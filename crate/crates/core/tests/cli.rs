//! End-to-end runs of the command-line front end on a small dataset.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;

use dre::cli::{run, CommandResult};
use dre::codebook::{load_codebook, RefineRules};

fn dre(args: &[&dyn AsRef<std::ffi::OsStr>]) -> CommandResult {
    let mut argv: Vec<OsString> = vec!["dre".into()];
    argv.extend(args.iter().map(|a| a.as_ref().to_os_string()));
    run(argv)
}

fn ok(r: CommandResult) -> String {
    assert_eq!(r.exit_code, 0, "stderr: {}", r.stderr);
    r.stdout
}

fn listing(dir: &Path) -> BTreeSet<String> {
    walk(dir, dir)
}

fn walk(root: &Path, dir: &Path) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        out.insert(p.strip_prefix(root).unwrap().display().to_string());
        if p.is_dir() {
            out.extend(walk(root, &p));
        }
    }
    out
}

#[test]
fn synth_train_eval_encode_prompt() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data = root.join("data");
    let cb = root.join("cb");
    let refined = root.join("cb-refined");
    let run_dir = root.join("run");
    let config = root.join("config.json");

    ok(dre(&[&"synth", &"--out", &data, &"--preset", &"small", &"--seed", &"2"]));
    let stats = ok(dre(&[&"ingest", &data]));
    assert!(stats.contains("nodes\t300"), "{stats}");
    ok(dre(&[&"codebook", &"gen", &"--out", &cb, &"--count", &"200", &"--dim", &"16", &"--mixed"]));
    let kept = ok(dre(&[&"codebook", &"refine", &"--codebook", &cb, &"--out", &refined]));
    let full = load_codebook(cb.join("vocab.tsv"), cb.join("embeddings.bin")).unwrap();
    let expect_kept = full.refine(&RefineRules::default()).unwrap().active_len();
    assert_eq!(kept, format!("kept {expect_kept} of 200 tokens\n"));
    let inspect = ok(dre(&[&"codebook", &"inspect", &"--codebook", &cb, &"--tokens", &"2"]));
    assert!(inspect.starts_with("codes\t200\ndim\t16\n"), "{inspect}");

    std::fs::write(&config, r#"{"epochs": 2, "dim": 16, "fanouts": [4, 4, 4], "edge_batch": 4}"#).unwrap();
    let before = listing(root);
    ok(dre(&[&"train", &"--config", &config, &"--data", &data, &"--codebook", &cb, &"--out", &run_dir]));
    let created: BTreeSet<String> = listing(root).difference(&before).cloned().collect();
    assert!(created.iter().all(|p| p.starts_with("run")), "{created:?}");
    for f in ["checkpoint.bin", "metrics.jsonl", "config.json"] {
        assert!(run_dir.join(f).is_file(), "{f}");
    }

    let ckpt = run_dir.join("checkpoint.bin");
    let acc = ok(dre(&[&"eval", &"--checkpoint", &ckpt, &"--data", &data, &"--codebook", &cb, &"--split", &"val"]));
    let value: f64 = acc.lines().find_map(|l| l.strip_prefix("accuracy\t")).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&value));

    // Token ids must resolve to entries that survive refinement.
    let allowed: BTreeSet<u32> = load_codebook(refined.join("vocab.tsv"), refined.join("embeddings.bin"))
        .unwrap()
        .token_ids()
        .iter()
        .copied()
        .collect();
    let lines = ok(dre(&[&"encode", &"--checkpoint", &ckpt, &"--data", &data, &"--codebook", &cb, &"--all"]));
    assert_eq!(lines.lines().count(), 300);
    for line in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let ids = v["token_ids"].as_array().unwrap();
        assert_eq!(ids.len(), 3);
        for id in ids.iter().flat_map(|view| view.as_array().unwrap()) {
            assert!(allowed.contains(&(id.as_u64().unwrap() as u32)));
        }
    }

    let prompt = ok(dre(&[&"prompt", &"--checkpoint", &ckpt, &"--data", &data, &"--codebook", &cb, &"--node", &"5"]));
    let rec: serde_json::Value = serde_json::from_str(prompt.trim()).unwrap();
    assert_eq!(rec["node"], 5);
    assert!(rec["prompt"].as_str().unwrap().ends_with("the node should be classified as:"));

    let csv = ok(dre(&[&"metrics", &"plot-data", &"--log", &run_dir.join("metrics.jsonl")]));
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("epoch,total_loss"));

    // Read-only commands leave their inputs untouched.
    let snapshot = std::fs::read(&ckpt).unwrap();
    ok(dre(&[&"eval", &"--checkpoint", &ckpt, &"--data", &data, &"--codebook", &cb]));
    assert_eq!(std::fs::read(&ckpt).unwrap(), snapshot);
}

#[test]
fn domain_errors_are_single_line() {
    let tmp = tempfile::tempdir().unwrap();
    let r = dre(&[&"ingest", &tmp.path().join("absent")]);
    assert_eq!(r.exit_code, 1);
    assert!(r.stderr.starts_with("error: ") && r.stderr.contains("absent"));
    assert_eq!(r.stderr.lines().count(), 1);

    let r = dre(&[&"synth", &"--out", &tmp.path().join("x"), &"--preset", &"huge"]);
    assert_eq!(r.exit_code, 1);
    assert!(r.stderr.contains("huge"));
}

#[test]
fn malformed_config_is_a_domain_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"epochs": 2, "learning_rate": 0.1}"#).unwrap();
    let r = dre(&[&"train", &"--config", &cfg, &"--data", &tmp.path(), &"--codebook", &tmp.path(), &"--out", &tmp.path().join("o")]);
    assert_eq!(r.exit_code, 1);
    assert!(r.stderr.contains("bad.json"), "{}", r.stderr);
}
