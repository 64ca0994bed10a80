use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(rel)
}

fn ccdae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccdae"))
        .args(args)
        .env_remove("CCDAE_ENDPOINT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scenes() -> String {
    data("fixtures/scenes.json").display().to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn comparing_a_file_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let item = dir.path().join("item.txt");
    std::fs::write(&item, "a dog runs on the beach\n").unwrap();
    let out = dir.path().join("out");
    let o = ccdae(&[
        "--fixture",
        &scenes(),
        "--out",
        path(&out),
        "compare",
        path(&item),
        path(&item),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).trim(), "auc 0.000000");
    for f in ["curve.csv", "report.json", "explanations.txt"] {
        assert!(out.join(f).exists(), "{f} written");
    }
}

#[test]
fn golden_curve_is_reproduced() {
    let dir = tempfile::tempdir().unwrap();
    let o = ccdae(&[
        "--backend",
        "table",
        "--fixture",
        &scenes(),
        "--seed",
        "0",
        "--out",
        path(dir.path()),
        "compare",
        "a dog runs on the beach",
        "a puppy plays in the sand",
    ]);
    assert!(o.status.success(), "{o:?}");
    let got = std::fs::read(dir.path().join("curve.csv")).unwrap();
    let want = std::fs::read(data("golden/scenes_dog_puppy.csv")).unwrap();
    assert!(got == want, "curve differs from the golden file");
}

#[test]
fn missing_fixture_is_a_usage_error() {
    let o = ccdae(&["--fixture", "/no/such/fixture.json", "compare", "a", "b"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_backend_source_is_a_usage_error() {
    let o = ccdae(&["compare", "a", "b"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_context_is_reported() {
    let o = ccdae(&[
        "--fixture",
        &scenes(),
        "compare",
        "not in the table",
        "a dog runs on the beach",
    ]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
}

#[test]
fn empty_corpus_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("empty.txt");
    std::fs::write(&corpus, "").unwrap();
    let model = dir.path().join("m.model");
    let o = ccdae(&["--out", path(&model), "train-ngram", path(&corpus)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn trained_model_can_be_used_for_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("toy.model");
    let o = ccdae(&[
        "--out",
        path(&model),
        "train-ngram",
        path(&data("toy_corpus.txt")),
        "--order",
        "4",
    ]);
    assert!(o.status.success(), "{o:?}");
    let out = dir.path().join("out");
    let o = ccdae(&[
        "--model",
        path(&model),
        "--out",
        path(&out),
        "compare",
        "the chef bakes fresh bread",
        "the chef bakes fresh bread",
        "--samples",
        "5",
    ]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).trim(), "auc 0.000000");
}

#[test]
fn invalid_noise_rate_is_rejected() {
    let o = ccdae(&["ncd-demo", "--p", "0.7"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn small_ncd_demo_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = ccdae(&["--out", path(dir.path()), "ncd-demo", "--dims", "16,32"]);
    assert!(o.status.success(), "{o:?}");
    let csv = std::fs::read_to_string(dir.path().join("ncd.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn choice_bench_on_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let o = ccdae(&[
        "--fixture",
        &scenes(),
        "--out",
        path(dir.path()),
        "bench",
        "choice",
        path(&data("fixtures/scenes_choice.tsv")),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).trim(), "accuracy 1.0000");
    assert!(dir.path().join("choice.csv").exists());
}

#[test]
fn pairs_bench_on_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let o = ccdae(&[
        "--fixture",
        &scenes(),
        "--out",
        path(dir.path()),
        "bench",
        "pairs",
        path(&data("fixtures/scenes_pairs.tsv")),
        "--score",
        "traj",
    ]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).starts_with("rho_x100 "));
    assert!(dir.path().join("bench_report.json").exists());
}

#[test]
fn describe_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = ccdae(&[
        "--fixture",
        &scenes(),
        "--out",
        path(dir.path()),
        "describe",
        "a dog runs on the beach",
        "a cat sleeps on a sofa",
        "--atoms",
        "10",
        "--max-atoms",
        "1",
    ]);
    assert!(o.status.success(), "{o:?}");
    let csv = std::fs::read_to_string(dir.path().join("describe.csv")).unwrap();
    assert!(csv.starts_with("capacity,best_h_x1"));
}
