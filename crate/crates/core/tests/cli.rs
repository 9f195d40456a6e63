use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tbm_core::checkpoint::Checkpoint;
use tbm_core::data::{detokenize, load_fragments};

fn tbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbm"))
        .args(args)
        .output()
        .expect("run tbm")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path, n: usize, seed: u64) -> std::path::PathBuf {
    let corpus = dir.join("corpus.jsonl");
    let o = tbm(&[
        "synth",
        "--out",
        path(&corpus),
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    corpus
}

#[test]
fn synth_is_deterministic_and_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let oa = tbm(&["synth", "--out", path(&a), "--n", "100", "--seed", "1"]);
    let ob = tbm(&["synth", "--out", path(&b), "--n", "100", "--seed", "1"]);
    assert_eq!(oa.status.code(), Some(0));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(oa.stdout, ob.stdout);
    let out = stdout(&oa);
    let header: Vec<&str> = out.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["Dataset", "#Samples", "#Utterances", "#avg_length"]);
    let total: Vec<&str> = out
        .lines()
        .find(|l| l.starts_with("Total"))
        .unwrap()
        .split_whitespace()
        .collect();
    assert_eq!(total[1], "100");
    let avg: f64 = total[3].parse().unwrap();
    assert!((10.0..=17.0).contains(&avg), "average length {avg}");
}

#[test]
fn synth_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = tbm(&["synth", "--out", path(&dir.path().join("c.jsonl")), "--n", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = tbm(&["synth", "--out", path(&dir.path().join("missing/c.jsonl")), "--n", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing"));
    let o = tbm(&["synth", "--n", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(tbm(&["--help"]).status.code(), Some(0));
    assert_eq!(tbm(&["--version"]).status.code(), Some(0));
    assert_eq!(tbm(&["bogus"]).status.code(), Some(2));
}

#[test]
fn train_rejects_unknown_config_key() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 4, 1);
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "train.mu=0.1\ntrain.momentum=0.9\n").unwrap();
    let o = tbm(&[
        "train",
        "--corpus",
        path(&corpus),
        "--config",
        path(&cfg),
        "--out",
        path(&dir.path().join("m")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train.momentum"));
    let o = tbm(&[
        "train",
        "--corpus",
        path(&corpus),
        "--out",
        path(&dir.path().join("m")),
        "--ablation",
        "disable_all",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_records_ablation_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 4, 2);
    let out = dir.path().join("m");
    let o = tbm(&[
        "train",
        "--corpus",
        path(&corpus),
        "--out",
        path(&out),
        "--epochs",
        "2",
        "--ablation",
        "disable_copy",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let resolved = fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(resolved.lines().any(|l| l == "ablation.disable_copy=true"));
    assert!(resolved.lines().any(|l| l == "ablation.disable_role=false"));
    let ck = Checkpoint::load(out.join("best.ckpt")).unwrap();
    assert!(ck.model.config.ablation.disable_copy);
    assert_eq!(ck.config["ablation.disable_copy"], "true");

    let log = fs::read_to_string(out.join("train.log")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert!(lines[0].starts_with("# {"));
    assert_eq!(lines.len(), 3);
    for (k, line) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(' ').collect();
        assert_eq!(fields[0], format!("epoch={}", k + 1));
        assert!(fields[1].starts_with("train_nll="));
        assert!(fields[2].starts_with("dev_nll="));
    }
    for split in ["train", "dev", "test"] {
        let f = load_fragments(out.join(format!("fragments.{split}.jsonl"))).unwrap();
        assert_eq!(f.header.unwrap().config["ablation.disable_copy"], "true");
    }
}

#[test]
fn divergence_exits_3_and_keeps_last_good() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 4, 3);
    let out = dir.path().join("m");
    let o = tbm(&[
        "train",
        "--corpus",
        path(&corpus),
        "--out",
        path(&out),
        "--epochs",
        "3",
        "--set",
        "train.mu=1e300",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
    let ck = Checkpoint::load(out.join("last_good.ckpt")).unwrap();
    assert!(ck.model.params.values().iter().all(|t| t.is_finite()));
    assert!(!out.join("last_good.tmp").exists());
}

#[test]
fn eval_is_reproducible_and_beam_one_is_default() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 8, 4);
    let out = dir.path().join("m");
    assert!(
        tbm(&["train", "--corpus", path(&corpus), "--out", path(&out), "--epochs", "2"])
            .status
            .success()
    );
    let ckpt = out.join("best.ckpt");
    let mut reports = Vec::new();
    for (name, extra) in [("a", None), ("b", None), ("c", Some("1"))] {
        let dest = dir.path().join(name);
        let mut args = vec![
            "eval",
            "--model",
            path(&ckpt),
            "--corpus",
            path(&corpus),
            "--out",
            path(&dest),
        ];
        if let Some(b) = extra {
            args.extend(["--beam", b]);
        }
        let o = tbm(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let cols: Vec<String> = stdout(&o)
            .lines()
            .next()
            .unwrap()
            .split_whitespace()
            .map(String::from)
            .collect();
        assert_eq!(cols, ["Model", "R.-1", "R.-2", "R.-3", "R.-L", "BLEU"]);
        reports.push((
            fs::read(dest.join("report.test.json")).unwrap(),
            fs::read(dest.join("predictions.test.jsonl")).unwrap(),
        ));
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);

    let report: serde_json::Value = serde_json::from_slice(&reports[0].0).unwrap();
    assert_eq!(report["version"], 1);
    assert_eq!(report["split"], "test");
    assert!(report["config"]["train.seed"].is_string());
    let predictions = String::from_utf8(reports[0].1.clone()).unwrap();
    let mut lines = predictions.lines();
    let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["version"], 1);
    assert!(header["config"].is_object());
    let first: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert!(first["id"].is_string() && first["prediction"].is_array() && first["reference"].is_array());
    assert_eq!(lines.count() + 1, report["n"].as_u64().unwrap() as usize);
}

#[test]
fn eval_with_comparison_reports_p_values() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 8, 5);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(
        tbm(&["train", "--corpus", path(&corpus), "--out", path(&a), "--epochs", "2"])
            .status
            .success()
    );
    assert!(tbm(&[
        "train",
        "--corpus",
        path(&corpus),
        "--out",
        path(&b),
        "--epochs",
        "1",
        "--ablation",
        "disable_intent_nav"
    ])
    .status
    .success());
    let o = tbm(&[
        "eval",
        "--model",
        path(&a.join("best.ckpt")),
        "--corpus",
        path(&corpus),
        "--compare",
        path(&b.join("best.ckpt")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.join("report.test.json")).unwrap()).unwrap();
    for m in ["rouge1", "rouge2", "rouge3", "rougeL"] {
        let p = report["p_values"][m].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
    assert!(report["compare"]["rouge1"].is_number());
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn eval_rejects_foreign_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 8, 6);
    let out = dir.path().join("m");
    assert!(
        tbm(&["train", "--corpus", path(&corpus), "--out", path(&out), "--epochs", "1"])
            .status
            .success()
    );
    let other_dir = dir.path().join("other");
    fs::create_dir(&other_dir).unwrap();
    let other = synth(&other_dir, 30, 99);
    let o = tbm(&[
        "eval",
        "--model",
        path(&out.join("best.ckpt")),
        "--corpus",
        path(&other),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hash"));
}

#[test]
fn generate_rejects_short_context() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 4, 7);
    let out = dir.path().join("m");
    assert!(
        tbm(&["train", "--corpus", path(&corpus), "--out", path(&out), "--epochs", "1"])
            .status
            .success()
    );
    let turn = r#"{"role":"plaintiff","text":"I lent him money.","elements":[]}"#;
    let fragment = dir.path().join("short.jsonl");
    fs::write(&fragment, format!("{{\"context\":[{}]}}\n", [turn; 4].join(","))).unwrap();
    let o = tbm(&[
        "generate",
        "--model",
        path(&out.join("best.ckpt")),
        "--fragment",
        path(&fragment),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at least 5"));
}

#[test]
fn generate_reproduces_memorized_questions() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 14, 8);
    let out = dir.path().join("m");
    let o = tbm(&[
        "train",
        "--corpus",
        path(&corpus),
        "--out",
        path(&out),
        "--epochs",
        "80",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let model = out.join("last_good.ckpt");
    let train = fs::read_to_string(out.join("fragments.train.jsonl")).unwrap();
    let lines: Vec<&str> = train.lines().skip(1).take(50).collect();
    assert_eq!(lines.len(), 50);
    let targets = load_fragments(out.join("fragments.train.jsonl")).unwrap().fragments;
    let (mut exact, mut questions) = (0, 0);
    for (k, line) in lines.iter().enumerate() {
        let fragment = dir.path().join(format!("f{k}.jsonl"));
        fs::write(&fragment, format!("{line}\n")).unwrap();
        let o = tbm(&["generate", "--model", path(&model), "--fragment", path(&fragment)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let text = stdout(&o);
        assert_eq!(text.lines().count(), 1);
        let text = text.trim_end();
        if text.ends_with('?') {
            questions += 1;
        }
        if text == detokenize(targets[k].target().tokens()) {
            exact += 1;
        }
    }
    assert!(questions >= 45, "{questions}/50 end in `?`");
    assert!(exact >= 45, "{exact}/50 reproduced");
}
