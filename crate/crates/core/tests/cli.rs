use std::fs;
use std::path::Path;

use edemajoint::cli::run;
use edemajoint::trainkit::load_checkpoint;

const SMALL: &str = "
[data]
n_labeled = 12
n_unlabeled = 8
n_test = 8
seed = 4

[train]
phase1_epochs = 1
phase2_epochs = 1
seed = 4
";

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("edemajoint").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(cli(&[]), 2);
    assert_eq!(cli(&["frobnicate"]), 2);
    assert_eq!(cli(&["eval", "--ckpt", "x", "--bogus"]), 2);
    assert_eq!(cli(&["matrix", "--variants", "image-only,nonsense"]), 2);
}

#[test]
fn missing_checkpoint_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["eval", "--ckpt", s(&dir.path().join("none.ckpt"))]), 1);
}

#[test]
fn config_problems_are_reported_together() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[train]\nbatch_size = 0\ncolour = 3\n[extra]\nx = 1\n").unwrap();
    let err = edemajoint::cli::load_config(Some(&bad)).unwrap_err().to_string();
    assert!(err.starts_with("3 problem(s)"), "{err}");
    assert!(err.contains("train.colour"), "{err}");
    assert!(err.contains("[extra]"), "{err}");
    assert_eq!(cli(&["validate-config", "--config", s(&bad)]), 1);

    let good = dir.path().join("good.toml");
    fs::write(&good, SMALL).unwrap();
    assert_eq!(cli(&["validate-config", "--config", s(&good)]), 0);
}

#[test]
fn label_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("reports.jsonl");
    fs::write(
        &input,
        concat!(
            r#"{"id": "a", "text": "IMPRESSION: Mild cephalization."}"#,
            "\n",
            r#"{"id": "b", "text": "FINDINGS: No pulmonary edema."}"#,
            "\n",
            r#"{"id": "c", "text": "IMPRESSION: Lungs are clear."}"#,
            "\n",
        ),
    )
    .unwrap();
    let out = dir.path().join("labels.csv");
    assert_eq!(cli(&["label", "--in", s(&input), "--out", s(&out)]), 0);
    assert_eq!(fs::read_to_string(&out).unwrap(), "id,level,evidence_count\na,1,1\nb,0,1\nc,,0\n");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("labels.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["documents"], 3);
    assert_eq!(summary["unlabeled"], 1);
}

#[test]
fn label_failure_still_writes_output_but_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ok.txt"), "IMPRESSION: Severe pulmonary edema.").unwrap();
    fs::write(dir.path().join("empty.txt"), "   ").unwrap();
    let out = dir.path().join("out").join("labels.csv");
    fs::create_dir_all(out.parent().unwrap()).unwrap();
    assert_eq!(cli(&["label", "--in", s(dir.path()), "--out", s(&out)]), 1);
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.contains("ok,3,"), "{csv}");
    assert!(!csv.contains("empty"), "{csv}");
}

#[test]
fn gen_train_eval_explain_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let data = dir.path().join("data");
    let ckpt = dir.path().join("model.ckpt");
    assert_eq!(cli(&["gen-data", "--config", s(&cfg), "--out", s(&data)]), 0);
    for f in ["manifest.json", "images.bin", "records.jsonl"] {
        assert!(data.join(f).is_file(), "{f}");
    }
    assert_eq!(cli(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&ckpt)]), 0);
    let metrics = fs::read_to_string(dir.path().join("model.ckpt.metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3, "{metrics}");
    assert_eq!(load_checkpoint(&ckpt).unwrap().config.train.seed, 4);

    let report = dir.path().join("report.json");
    assert_eq!(cli(&["eval", "--ckpt", s(&ckpt), "--data", s(&data), "--out", s(&report)]), 0);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["n_examples"], 8);

    // Without --data the test pool comes back from the checkpoint's config.
    let regen = dir.path().join("regen.json");
    assert_eq!(cli(&["eval", "--ckpt", s(&ckpt), "--out", s(&regen)]), 0);
    assert_eq!(fs::read_to_string(&report).unwrap(), fs::read_to_string(&regen).unwrap());

    let expl = dir.path().join("explain");
    assert_eq!(cli(&["explain", "--ckpt", s(&ckpt), "--example", "0", "--out", s(&expl)]), 0);
    let pgm = fs::read(expl.join("example_0.gradcam.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n"));
    let sal: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(expl.join("example_0.saliency.json")).unwrap()).unwrap();
    let total: f64 = sal.as_array().unwrap().iter().map(|t| t["weight"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9, "{total}");
    assert_eq!(sal[0]["token"], "[bos]");

    assert_eq!(cli(&["explain", "--ckpt", s(&ckpt), "--example", "1000", "--out", s(&expl)]), 1);
}
