use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vortex::interchange::{load_manifest, read_vtd, VteWriter, VTE_VERSION_PLAIN};

fn vortex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vortex"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs `synth` into `dir` and returns the VTE and manifest paths.
fn synth(dir: &Path, extra: &[&str]) -> (PathBuf, PathBuf) {
    let mut args = vec!["synth", "-o", s(dir)];
    args.extend_from_slice(extra);
    let out = vortex(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let name = extra
        .iter()
        .position(|a| *a == "--name")
        .map_or("synthetic", |i| extra[i + 1]);
    (dir.join(format!("{name}.vte")), dir.join(format!("{name}.manifest.json")))
}

#[test]
fn empty_vte_gives_empty_vtd_and_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let vte = dir.path().join("empty.vte");
    VteWriter::create(&vte, VTE_VERSION_PLAIN).unwrap().finish().unwrap();
    let vtd = dir.path().join("empty.vtd");
    let out = vortex(&["encode", s(&vte), "-o", s(&vtd)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("no records"), "{}", stderr(&out));
    assert!(read_vtd(&vtd).unwrap().is_empty());
}

#[test]
fn soup_size_defaults_to_sixteen_and_reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (vte, manifest) = synth(dir.path(), &["--noise", "0.5"]);
    let encode = |name: &str, extra: &[&str]| {
        let path = dir.path().join(name);
        let mut args = vec!["encode", s(&vte), "-o", s(&path), "--manifest", s(&manifest)];
        args.extend_from_slice(extra);
        let out = vortex(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        std::fs::read(path).unwrap()
    };
    let default = encode("a.vtd", &[]);
    assert_eq!(default, encode("b.vtd", &["--m", "16"]));
    assert_eq!(default, encode("c.vtd", &["--threads", "1"]));
    assert_eq!(default, encode("d.vtd", &["--threads", "3"]));
    assert_ne!(default, encode("e.vtd", &["--m", "15"]));

    let records = read_vtd(dir.path().join("a.vtd")).unwrap();
    assert_eq!(records.len(), 40);
    assert!(records.iter().all(|r| r.label >= 0 && r.features.len() == 16));
}

#[test]
fn eval_report_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (vte, manifest) = synth(dir.path(), &["--noise", "2.0", "--folds", "4"]);
    let run = |threads: &str| {
        let out = vortex(&["eval", s(&vte), "--manifest", s(&manifest), "--threads", threads]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(v["classifier"], "svm");
        assert_eq!(v["extractor"], "vortex(m=16)");
        (v["fold_accuracies"].clone(), v["fold_hashes"].clone())
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn eval_on_descriptors_matches_eval_on_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let (vte, manifest) = synth(dir.path(), &["--noise", "2.0", "--folds", "3"]);
    let vtd = dir.path().join("x.vtd");
    assert_eq!(code(&vortex(&["encode", s(&vte), "-o", s(&vtd)])), 0);
    let accs = |input: &Path| {
        let out = vortex(&["eval", s(input), "--manifest", s(&manifest), "--classifier", "lda"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        v["fold_accuracies"].clone()
    };
    assert_eq!(accs(&vte), accs(&vtd));
}

#[test]
fn unknown_classifier_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (vte, manifest) = synth(dir.path(), &[]);
    let out = vortex(&["eval", s(&vte), "--manifest", s(&manifest), "--classifier", "forest"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("knn, lda, svm"), "{}", stderr(&out));
    let out = vortex(&["encode", s(&vte), "-o", "x.vtd", "--extractor", "sift"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&vortex(&["eval"])), 2);
    assert_eq!(code(&vortex(&["--help"])), 0);
}

#[test]
fn ablation_over_the_full_range() {
    let dir = tempfile::tempdir().unwrap();
    let (vte, manifest) = synth(
        dir.path(),
        &["--noise", "1.0", "--classes", "3", "--images-per-class", "6", "--train-per-class", "3", "--tokens", "8", "--dim", "6"],
    );
    let csv = dir.path().join("ablation.csv");
    let out = vortex(&["eval", s(&vte), "--manifest", s(&manifest), "--ablate-m", "1..31", "--csv", s(&csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let reports: Vec<serde_json::Value> = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(reports.len(), 31);
    for (i, r) in reports.iter().enumerate() {
        assert_eq!(r["config"]["m"], i + 1);
        assert_eq!(r["components"].as_array().unwrap().len(), 3);
    }
    let table = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().count(), 32);
    assert!(table.starts_with("dataset,extractor,m,classifier,mean_accuracy,std_accuracy\n"));

    let bad = vortex(&["eval", s(&vte), "--manifest", s(&manifest), "--ablate-m", "0..4"]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn compare_lists_all_extractors() {
    let dir = tempfile::tempdir().unwrap();
    let (vte, manifest) = synth(dir.path(), &["--no-cls"]);
    let out = vortex(&["eval", s(&vte), "--manifest", s(&manifest), "--compare"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("vortex") && text.contains("gap"));
    assert!(text.contains("CLS not stored"), "{text}");
}

#[test]
fn synth_class_count() {
    let dir = tempfile::tempdir().unwrap();
    let (_, manifest) = synth(dir.path(), &["-C", "24", "--name", "outex_like", "--dim", "4", "--tokens", "4"]);
    assert_eq!(load_manifest(&manifest).unwrap().num_classes(), 24);
    let out = vortex(&["synth", "-o", s(dir.path()), "-C", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("at least 2 classes"));
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (va, ma) = synth(a.path(), &["--seed", "9", "--noise", "0.3"]);
    let (vb, mb) = synth(b.path(), &["--seed", "9", "--noise", "0.3"]);
    assert_eq!(std::fs::read(va).unwrap(), std::fs::read(vb).unwrap());
    assert_eq!(std::fs::read(ma).unwrap(), std::fs::read(mb).unwrap());
}

#[test]
fn exit_codes_by_error_family() {
    let dir = tempfile::tempdir().unwrap();
    let (vte, manifest) = synth(dir.path(), &["--no-cls"]);
    let out_vtd = dir.path().join("o.vtd");

    // I/O
    let out = vortex(&["encode", "/definitely/missing.vte", "-o", s(&out_vtd)]);
    assert_eq!(code(&out), 3);

    // format
    let junk = dir.path().join("junk.vte");
    std::fs::write(&junk, b"not an embedding file").unwrap();
    assert_eq!(code(&vortex(&["encode", s(&junk), "-o", s(&out_vtd)])), 4);
    let truncated = dir.path().join("cut.vte");
    let bytes = std::fs::read(&vte).unwrap();
    std::fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(code(&vortex(&["encode", s(&truncated), "-o", s(&out_vtd)])), 4);

    // manifest
    let bad_manifest = dir.path().join("overlap.json");
    let text = std::fs::read_to_string(&manifest).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let first_train = v["folds"][0]["train_ids"][0].clone();
    v["folds"][0]["test_ids"].as_array_mut().unwrap().push(first_train);
    std::fs::write(&bad_manifest, v.to_string()).unwrap();
    assert_eq!(code(&vortex(&["eval", s(&vte), "--manifest", s(&bad_manifest)])), 5);

    // encoding: CLS requested but not stored
    let out = vortex(&["encode", s(&vte), "-o", s(&out_vtd), "--extractor", "cls"]);
    assert_eq!(code(&out), 6);
    assert!(stderr(&out).contains("CLS"));

    // classifier: a single labeled class cannot be fitted
    let one_class = dir.path().join("one.vtd");
    let records: Vec<_> = read_vtd({
        assert_eq!(code(&vortex(&["encode", s(&vte), "-o", s(&out_vtd), "--manifest", s(&manifest)])), 0);
        &out_vtd
    })
    .unwrap()
    .into_iter()
    .filter(|r| r.label == 0)
    .collect();
    vortex::interchange::write_vtd(&records, &one_class).unwrap();
    let out = vortex(&["fit", s(&one_class), "-o", s(&dir.path().join("m.vtm"))]);
    assert_eq!(code(&out), 7, "{}", stderr(&out));

    // usage: bad flag values
    assert_eq!(code(&vortex(&["encode", s(&vte), "-o", s(&out_vtd), "--seed-mode", "chaotic"])), 2);
    assert_eq!(code(&vortex(&["encode", s(&vte), "-o", s(&out_vtd), "--m", "0"])), 2);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let (vte, _) = synth(dir.path(), &[]);
    let cfg = dir.path().join("vortex.toml");
    std::fs::write(&cfg, "m = 4\nseed_mode = \"disjoint\"\n").unwrap();
    let encode = |name: &str, extra: &[&str]| {
        let path = dir.path().join(name);
        let mut args = vec!["encode", s(&vte), "-o", s(&path)];
        args.extend_from_slice(extra);
        let out = vortex(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        std::fs::read(path).unwrap()
    };
    let from_file = encode("a.vtd", &["--config", s(&cfg)]);
    let explicit = encode("b.vtd", &["--m", "4", "--seed-mode", "disjoint"]);
    assert_eq!(from_file, explicit);
    let overridden = encode("c.vtd", &["--config", s(&cfg), "--m", "16", "--seed-mode", "literal"]);
    assert_eq!(overridden, encode("d.vtd", &[]));

    std::fs::write(&cfg, "m = 4\nbogus = 1\n").unwrap();
    let out = vortex(&["encode", s(&vte), "-o", "x.vtd", "--config", s(&cfg)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn fit_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let (vte, manifest) = synth(dir.path(), &[]);
    let vtd = dir.path().join("d.vtd");
    let model = dir.path().join("svm.vtm");
    assert_eq!(code(&vortex(&["encode", s(&vte), "-o", s(&vtd), "--manifest", s(&manifest)])), 0);
    let out = vortex(&["fit", s(&vtd), "-o", s(&model), "--standardize"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = vortex(&["predict", s(&vtd), "--model", s(&model)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("image_id,label,predicted"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|r| r[1] == r[2]), "training data should be fitted exactly");

    let corrupt = dir.path().join("bad.vtm");
    std::fs::write(&corrupt, b"VTM\0garbage").unwrap();
    assert_eq!(code(&vortex(&["predict", s(&vtd), "--model", s(&corrupt)])), 4);
}
