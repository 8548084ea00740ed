use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_walker-activity"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "`{}` exited {:?}: {}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn simulate_featurize_train_predict_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--course", "exp1", "--participants", "2", "--seed", "3", "--out-dir", &s(&d.join("data"))]);
    for p in ["p01", "p02"] {
        ok(&[
            "featurize",
            "--input",
            &s(&d.join(format!("data/{p}/run1.csv"))),
            "--output",
            &s(&d.join(format!("{p}.features.csv"))),
        ]);
    }
    let features = std::fs::read_to_string(d.join("p01.features.csv")).unwrap();
    assert!(features.lines().next().unwrap().ends_with(",label"));

    ok(&[
        "train",
        "--input",
        &s(&d.join("p01.features.csv")),
        "--output",
        &s(&d.join("model.json")),
        "--labels",
        "exp1",
    ]);
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["format_version"], 1);
    assert_eq!(model["kind"], "hmm");

    ok(&[
        "predict",
        "--model",
        &s(&d.join("model.json")),
        "--input",
        &s(&d.join("p02.features.csv")),
        "--output",
        &s(&d.join("p02.pred.csv")),
    ]);
    let stdout = ok(&[
        "evaluate",
        "--predicted",
        &s(&d.join("p02.pred.csv")),
        "--actual",
        &s(&d.join("p02.features.csv")),
        "--labels",
        "exp1",
        "--out-dir",
        &s(&d.join("eval")),
    ]);
    assert!(stdout.contains("precision (CPT/AT)"), "{stdout}");
    for f in ["metrics.json", "confusion.csv", "window_sweep.csv"] {
        assert!(d.join("eval").join(f).is_file(), "missing {f}");
    }
    let sweep = std::fs::read_to_string(d.join("eval/window_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 12);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("eval/metrics.json")).unwrap()).unwrap();
    assert!(metrics["accuracy"].as_f64().unwrap() > 0.8, "{metrics}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("a.csv"), "t,label\n0,WF\n1,WF\n2,ST\n").unwrap();
    std::fs::write(d.join("b.csv"), "t,label\n0,WF\n1,ST\n").unwrap();
    let out = run(&[
        "evaluate",
        "--predicted",
        &s(&d.join("b.csv")),
        "--actual",
        &s(&d.join("a.csv")),
        "--out-dir",
        &s(&d.join("eval")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!d.join("eval/metrics.json").exists());

    assert_eq!(run(&["train", "--bins", "3"]).status.code(), Some(2));
    let out = run(&[
        "train",
        "--input",
        &s(&d.join("a.csv")),
        "--output",
        &s(&d.join("m.json")),
        "--burn-in",
        "500",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(run(&["predict", "--model", "/nonexistent", "--input", "x", "--output", "y"]).status.code(), Some(3));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--course", "exp2", "--participants", "2", "--seed", "5", "--out-dir", &s(&d.join("data"))]);
    std::fs::write(d.join("recipe.json"), r#"{"family": "hmm-ml", "bins": 7, "tau": 100.0}"#).unwrap();
    ok(&[
        "crossval",
        "--input",
        &s(&d.join("data")),
        "--labels",
        "exp2",
        "--config",
        &s(&d.join("recipe.json")),
        "--tau",
        "4000",
        "--out-dir",
        &s(&d.join("cv")),
    ]);
    let recipe: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("cv/recipe.json")).unwrap()).unwrap();
    assert_eq!(recipe["bins"], 7);
    assert_eq!(recipe["tau"], 4000.0);
    assert!(d.join("cv/folds/p01.json").is_file());
    assert!(d.join("cv/folds/p02.json").is_file());
}
