mod common;

use std::fs;

use common::*;
use stance_core::classify::read_predictions;

#[test]
fn smoke_run_is_byte_identical_across_runs() {
    let fx = tempfile::tempdir().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    smoke_run(fx.path(), a.path(), 11);
    smoke_run(fx.path(), b.path(), 11);

    let fa = trend_files(a.path());
    let fb = trend_files(b.path());
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "series/fig1.csv", "series/fig3.csv", "series/stance.csv", "series/groups.csv", "plot/fig4.csv",
        "plot/fig5.csv", "plot/s4.csv", "plot/s6.csv", "plot/s9.csv", "plot/s10.csv", "plot/s11.csv",
    ] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    assert_eq!(fa, fb);
    assert_eq!(
        fs::read(a.path().join("predictions/nb.csv")).unwrap(),
        fs::read(b.path().join("predictions/nb.csv")).unwrap()
    );
}

#[test]
fn smoke_run_outputs_are_sane() {
    let fx = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    smoke_run(fx.path(), data.path(), 3);

    let preds = read_predictions(fs::File::open(data.path().join("predictions/nb.csv")).unwrap()).unwrap();
    let sentences = fs::read_to_string(data.path().join("extract/sentences.jsonl")).unwrap();
    assert_eq!(preds.len(), sentences.lines().count());
    assert!(preds.len() >= 40, "only {} topical sentences", preds.len());

    // The mainstream gap months are present but flagged empty.
    let stance = fs::read_to_string(data.path().join("series/stance.csv")).unwrap();
    let gap: Vec<&str> = stance
        .lines()
        .filter(|l| l.starts_with("2019-11,") && l.contains(MAINSTREAM))
        .collect();
    assert!(!gap.is_empty());
    assert!(gap.iter().all(|l| l.ends_with("empty")), "{gap:?}");

    // Every artifact is accounted for by a manifest.
    let out = run_ok(&["--data-dir", data.path().to_str().unwrap(), "lint"]);
    assert!(out.contains("\"orphans\": []"), "{out}");
}

#[test]
fn eval_writes_report_files() {
    let fx = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    let labels = write_labels(fx.path());
    let d = data.path().to_str().unwrap();
    let out = run_ok(&["--data-dir", d, "eval", "--backend", "nb", "--k", "2", "--labels", labels.to_str().unwrap()]);
    assert!(out.contains("macro_f1"));
    for f in ["eval-nb.json", "eval-nb.csv", "confusion-nb.csv"] {
        assert!(data.path().join("reports").join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(data.path().join("reports/eval-nb.csv")).unwrap();
    assert!(csv.contains("macro avg"), "{csv}");
}
