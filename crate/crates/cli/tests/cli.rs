use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use vrfer::dataset::{
    load_image_observations, write_fea_jsonl, write_image_observations, DatasetBundle, EmotionLabel, FeaVector,
    LabeledSample, Split,
};
use vrfer::evaluation::parse_report;

fn vrfer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrfer")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = vrfer(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Percentage printed on the stdout line starting with `prefix`.
fn accuracy_line(out: &str, prefix: &str) -> f64 {
    let line = out
        .lines()
        .find(|l| l.starts_with(prefix))
        .unwrap_or_else(|| panic!("no `{prefix}` line in {out}"));
    line.rsplit(' ').next().unwrap().trim_end_matches('%').parse().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn file(&self, name: &str, contents: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, contents).unwrap();
        path
    }

    /// Synthetic data under `<name>/`.
    fn synth(&self, name: &str, mode: &str, per_class: (usize, usize, usize), seed: u64) -> PathBuf {
        let cfg = self.file(
            &format!("{name}.json"),
            &format!(
                r#"{{"per_class_train":{},"per_class_val":{},"per_class_test":{},"sigma":0.05,"mode":"{mode}","seed":{seed}}}"#,
                per_class.0, per_class.1, per_class.2
            ),
        );
        let dir = self.path(name);
        ok(&["synth", "--config", p(&cfg), "--out-dir", p(&dir)]);
        dir
    }
}

#[test]
fn help_documents_every_flag() {
    let expected: &[(&str, &[&str])] = &[
        ("synth", &["--config", "--out-dir"]),
        ("train", &["--data", "--model", "--config", "--out", "--history", "--report", "--format", "--preds"]),
        ("extract-features", &["--model", "--data", "--out"]),
        (
            "fuse",
            &["--strategy", "--fea-model", "--data", "--image-obs", "--config", "--out", "--report", "--preds"],
        ),
        ("evaluate", &["--model", "--data", "--image-obs", "--split", "--report", "--format", "--preds"]),
        ("compare", &["--preds-a", "--preds-b", "--labels", "--report", "--format"]),
        (
            "gridsearch",
            &["--spec", "--data", "--image-obs", "--fea-model", "--parallelism", "--out", "--model-out"],
        ),
    ];
    for (cmd, flags) in expected {
        let help = ok(&[cmd, "--help"]);
        for flag in *flags {
            assert!(help.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
    ok(&["--help"]);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(vrfer(&[]).status.code(), Some(2));
    assert_eq!(vrfer(&["bogus"]).status.code(), Some(2));
    assert_eq!(
        vrfer(&["train", "--data", "x", "--model", "svm", "--out", "y"]).status.code(),
        Some(2)
    );
    assert_eq!(vrfer(&["fuse", "--strategy", "median"]).status.code(), Some(2));
}

#[test]
fn synth_is_reproducible_and_summarized() {
    let ws = Workspace::new();
    let cfg = ws.file(
        "s.json",
        r#"{"per_class_train":4,"per_class_val":2,"per_class_test":3,"sigma":0.1,"mode":"easy","seed":5}"#,
    );
    let a = ws.path("a");
    let b = ws.path("b");
    let summary = ok(&["synth", "--config", p(&cfg), "--out-dir", p(&a)]);
    ok(&["synth", "--config", p(&cfg), "--out-dir", p(&b)]);
    for f in ["fea.jsonl", "image_obs.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let total = summary.lines().find(|l| l.starts_with("total")).unwrap();
    let counts: Vec<usize> = total.split_whitespace().skip(1).map(|t| t.parse().unwrap()).collect();
    assert_eq!(counts, [28, 14, 21, 63]);
    assert_eq!(fs::read_to_string(a.join("fea.jsonl")).unwrap().lines().count(), 63);
    assert_eq!(fs::read_to_string(a.join("image_obs.jsonl")).unwrap().lines().count(), 126);

    let bad = ws.file(
        "bad.json",
        r#"{"per_class_train":4,"per_class_val":2,"per_class_test":3,"sigma":-1,"mode":"easy"}"#,
    );
    let o = vrfer(&["synth", "--config", p(&bad), "--out-dir", p(&ws.path("c"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sigma"), "{}", stderr(&o));
    assert!(!ws.path("c").join("fea.jsonl").exists());
}

#[test]
fn train_extract_evaluate_on_separable_data() {
    let ws = Workspace::new();
    let d = ws.synth("easy", "easy", (30, 10, 10), 3);
    let data = d.join("fea.jsonl");
    let model = ws.path("mlp.json");
    let out = ok(&["train", "--data", p(&data), "--model", "mlp", "--out", p(&model)]);
    assert_eq!(accuracy_line(&out, "mlp test accuracy"), 100.0);
    assert!(ws.path("mlp.history.json").exists());

    let again = ws.path("mlp2.json");
    ok(&["train", "--data", p(&data), "--model", "mlp", "--out", p(&again)]);
    assert_eq!(fs::read(&model).unwrap(), fs::read(&again).unwrap());

    let lr_out = ok(&["train", "--data", p(&data), "--model", "logreg", "--out", p(&ws.path("lr.json"))]);
    assert!(accuracy_line(&lr_out, "logreg test accuracy") > 90.0);

    // Extraction: one line per sample, 128 nonnegative features, deterministic.
    let feats = ws.path("feats.jsonl");
    ok(&["extract-features", "--model", p(&model), "--data", p(&data), "--out", p(&feats)]);
    let text = fs::read_to_string(&feats).unwrap();
    assert_eq!(text.lines().count(), 7 * 50);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let f = v["features"].as_array().unwrap();
        assert_eq!(f.len(), 128);
        assert!(f.iter().all(|x| x.as_f64().unwrap() >= 0.0));
    }
    let feats2 = ws.path("feats2.jsonl");
    ok(&["extract-features", "--model", p(&model), "--data", p(&data), "--out", p(&feats2)]);
    assert_eq!(fs::read(&feats).unwrap(), fs::read(&feats2).unwrap());

    let bundle = vrfer::dataset::load_fea_dataset(&data).unwrap();
    let single = DatasetBundle::new(vec![bundle.samples()[0].clone()]).unwrap();
    let single_path = ws.file("one.jsonl", &write_fea_jsonl(&single).unwrap());
    ok(&["extract-features", "--model", p(&model), "--data", p(&single_path), "--out", p(&feats2)]);
    assert_eq!(fs::read_to_string(&feats2).unwrap().lines().count(), 1);

    let o = vrfer(&["extract-features", "--model", p(&ws.path("lr.json")), "--data", p(&data), "--out", p(&feats2)]);
    assert_eq!(o.status.code(), Some(1));

    // Evaluation in both formats.
    let report = ws.path("r.json");
    let out = ok(&["evaluate", "--model", p(&model), "--data", p(&data), "--report", p(&report)]);
    assert_eq!(accuracy_line(&out, "mlp test accuracy"), 100.0);
    let parsed = parse_report(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed.accuracy, 1.0);
    let md = ws.path("r.md");
    ok(&["evaluate", "--model", p(&model), "--data", p(&data), "--report", p(&md), "--format", "markdown"]);
    let md = fs::read_to_string(&md).unwrap();
    for label in EmotionLabel::ALL {
        assert!(md.contains(&format!("| {} |", label.title())), "{md}");
    }
    assert!(md.contains("Average"));
}

#[test]
fn training_failures_exit_1_without_output() {
    let ws = Workspace::new();
    let missing = ws.path("missing.jsonl");
    let out = ws.path("m.json");
    let o = vrfer(&["train", "--data", p(&missing), "--model", "mlp", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.jsonl"));
    assert!(!out.exists());

    let d = ws.synth("easy", "easy", (3, 2, 2), 1);
    let cfg = ws.file("t.json", r#"{"train":{"learning_rate":0}}"#);
    let o = vrfer(&["train", "--data", p(&d.join("fea.jsonl")), "--model", "mlp", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
    assert!(!out.exists());

    let cfg = ws.file("u.json", r#"{"train":{"epochs":3}}"#);
    let o = vrfer(&["train", "--data", p(&d.join("fea.jsonl")), "--model", "mlp", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fusion_workflow_on_complementary_data() {
    let ws = Workspace::new();
    let d = ws.synth("comp", "complementary", (30, 12, 12), 8);
    let data = d.join("fea.jsonl");
    let obs = d.join("image_obs.jsonl");
    let fea_model = ws.path("mlp.json");
    ok(&["train", "--data", p(&data), "--model", "mlp", "--out", p(&fea_model)]);

    let avg = ws.path("avg.json");
    let report = ws.path("avg_report.json");
    let out = ok(&[
        "fuse", "--strategy", "average", "--fea-model", p(&fea_model), "--data", p(&data), "--image-obs", p(&obs),
        "--out", p(&avg), "--report", p(&report),
    ]);
    assert!(report.exists());
    assert!(!ws.path("avg.history.json").exists());
    assert!(accuracy_line(&out, "late_fusion:average test accuracy") > 0.0);

    let ca = ws.path("ca.json");
    let preds = ws.path("ca_preds.jsonl");
    let out = ok(&[
        "fuse", "--strategy", "cross_attention", "--fea-model", p(&fea_model), "--data", p(&data), "--image-obs",
        p(&obs), "--out", p(&ca), "--preds", p(&preds),
    ]);
    let fused = accuracy_line(&out, "late_fusion:cross_attention test accuracy");
    let fea = accuracy_line(&out, "fea test accuracy");
    let img = accuracy_line(&out, "image test accuracy");
    assert!(fused > fea.max(img), "{out}");
    assert_eq!(fs::read_to_string(&preds).unwrap().lines().count(), 7 * 12 * 2);

    // The saved fusion model evaluates to the same accuracy.
    let out = ok(&[
        "evaluate", "--model", p(&ca), "--data", p(&data), "--image-obs", p(&obs), "--report", p(&ws.path("e.json")),
    ]);
    assert_eq!(accuracy_line(&out, "late_fusion:cross_attention test accuracy"), fused);
    let o = vrfer(&["evaluate", "--model", p(&ca), "--data", p(&data), "--report", p(&ws.path("e2.json"))]);
    assert_eq!(o.status.code(), Some(1));

    // Intermediate fusion without image features.
    let mut stripped = load_image_observations(&obs).unwrap();
    for o in &mut stripped {
        o.features = None;
    }
    let probs_only = ws.file("probs_only.jsonl", &write_image_observations(&stripped).unwrap());
    let out_path = ws.path("inter.json");
    let o = vrfer(&[
        "fuse", "--strategy", "intermediate", "--fea-model", p(&fea_model), "--data", p(&data), "--image-obs",
        p(&probs_only), "--out", p(&out_path),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("features"), "{}", stderr(&o));
    assert!(!out_path.exists());
}

fn labeled(id: usize, label: EmotionLabel) -> LabeledSample {
    LabeledSample {
        id: format!("x{id:04}"),
        participant: "p0".into(),
        split: Split::Test,
        label,
        fea: FeaVector::new(vec![0.5; vrfer::FEA_DIM]).unwrap(),
    }
}

fn pred_line(id: usize, pred: EmotionLabel) -> String {
    let mut probs = vec![0.0; 7];
    probs[pred.index()] = 1.0;
    serde_json::json!({"sample_id": format!("x{id:04}"), "pred": pred, "probs": probs}).to_string() + "\n"
}

#[test]
fn compare_reproduces_agreement_counts() {
    let ws = Workspace::new();
    let (both, only_a, only_b, neither) = (414, 128, 114, 100);
    let n = both + only_a + only_b + neither;
    let truth = EmotionLabel::Anger;
    let wrong = EmotionLabel::Fear;
    let bundle = DatasetBundle::new((0..n).map(|i| labeled(i, truth)).collect()).unwrap();
    let labels = ws.file("labels.jsonl", &write_fea_jsonl(&bundle).unwrap());
    let (mut a, mut b) = (String::new(), String::new());
    for i in 0..n {
        let a_ok = i < both + only_a;
        let b_ok = i < both || (both + only_a..both + only_a + only_b).contains(&i);
        a.push_str(&pred_line(i, if a_ok { truth } else { wrong }));
        b.push_str(&pred_line(i, if b_ok { truth } else { wrong }));
    }
    let pa = ws.file("a.jsonl", &a);
    let pb = ws.file("b.jsonl", &b);
    let report = ws.path("cmp.json");
    let out = ok(&["compare", "--preds-a", p(&pa), "--preds-b", p(&pb), "--labels", p(&labels), "--report", p(&report)]);
    assert!(out.contains("both correct 414, only a 128, only b 114, both wrong 100, total 756"), "{out}");
    assert_eq!(accuracy_line(&out, "oracle accuracy"), 86.77);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["agreement"]["total"], 756);

    let out = ok(&["compare", "--preds-a", p(&pa), "--preds-b", p(&pa), "--labels", p(&labels), "--report", p(&report)]);
    assert!(out.contains("both correct 542, only a 0, only b 0, both wrong 214, total 756"), "{out}");

    let short = ws.file("short.jsonl", &a.lines().take(10).map(|l| format!("{l}\n")).collect::<String>());
    let o = vrfer(&["compare", "--preds-a", p(&pa), "--preds-b", p(&short), "--labels", p(&labels), "--report", p(&ws.path("x.json"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!ws.path("x.json").exists());
}

#[test]
fn gridsearch_is_deterministic_across_parallelism() {
    let ws = Workspace::new();
    let d = ws.synth("g", "easy", (6, 3, 3), 4);
    let data = d.join("fea.jsonl");

    let one = ws.file("one.json", r#"{"model":"logreg","axes":{"learning_rate":[0.01]},"base_seed":3}"#);
    let out = ok(&["gridsearch", "--spec", p(&one), "--data", p(&data), "--out", p(&ws.path("one.jsonl"))]);
    assert!(out.starts_with("winner: candidate 0 {\"learning_rate\":0.01}"), "{out}");

    let spec = ws.file(
        "grid.json",
        r#"{"model":"mlp","axes":{"learning_rate":[0.001,0.01],"batch_size":[8,16,32],"max_epochs":[3,6]},"base_seed":7}"#,
    );
    let (r1, r4) = (ws.path("r1.jsonl"), ws.path("r4.jsonl"));
    let (m1, m4) = (ws.path("m1.json"), ws.path("m4.json"));
    ok(&["gridsearch", "--spec", p(&spec), "--data", p(&data), "--parallelism", "1", "--out", p(&r1), "--model-out", p(&m1)]);
    ok(&["gridsearch", "--spec", p(&spec), "--data", p(&data), "--parallelism", "4", "--out", p(&r4), "--model-out", p(&m4)]);
    let text = fs::read_to_string(&r1).unwrap();
    assert_eq!(text.lines().count(), 12);
    assert_eq!(text, fs::read_to_string(&r4).unwrap());
    assert_eq!(fs::read(&m1).unwrap(), fs::read(&m4).unwrap());

    let empty = ws.file("empty.json", r#"{"model":"mlp","axes":{"learning_rate":[]}}"#);
    let o = vrfer(&["gridsearch", "--spec", p(&empty), "--data", p(&data), "--out", p(&ws.path("e.jsonl"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("learning_rate"));
    assert!(!ws.path("e.jsonl").exists());
}
