use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mugmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mugmatch")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = mugmatch(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn fail(args: &[&str]) -> String {
    let o = mugmatch(args);
    assert_eq!(o.status.code(), Some(1), "{args:?} should fail; stdout {}", stdout(&o));
    stderr(&o)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Four synthetic faces with moderate queries, under `dir/data`.
fn synth(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    ok(&["synth", "--out", s(&data), "--count", "4"]);
    data
}

fn enroll_all(data: &Path, gallery: &Path) {
    for i in 1..=4 {
        let id = format!("subject{i:02}");
        let img = data.join("gallery").join(format!("{id}.png"));
        ok(&["enroll", "--gallery", s(gallery), "--id", &id, s(&img)]);
    }
}

#[test]
fn enroll_fresh_duplicate_and_unreadable() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let gallery = dir.path().join("g");
    let img = data.join("gallery/subject01.png");
    let out = ok(&["enroll", "--gallery", s(&gallery), "--id", "alice", s(&img)]);
    assert!(out.contains("gallery size 1"), "{out}");
    assert!(out.contains("keypoints"));

    let err = fail(&["enroll", "--gallery", s(&gallery), "--id", "alice", s(&img)]);
    assert!(err.contains("alice"), "{err}");

    let missing = dir.path().join("no_such_face.png");
    let err = fail(&["enroll", "--gallery", s(&gallery), "--id", "bob", s(&missing)]);
    assert!(err.contains("no_such_face.png"), "{err}");
    assert!(stdout(&mugmatch(&["enroll", "--gallery", s(&gallery), "--id", "bob", s(&missing)])).is_empty());
}

#[test]
fn query_ranks_enrolled_image_first() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let gallery = dir.path().join("g");
    enroll_all(&data, &gallery);
    let probe = data.join("gallery/subject03.png");

    let out = ok(&["query", "--gallery", s(&gallery), "--format", "csv", s(&probe)]);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("1,subject03,"), "{out}");

    let out = ok(&["query", "--gallery", s(&gallery), "--top", "3", "--format", "csv", s(&probe)]);
    assert_eq!(out.lines().count(), 1 + 3);
    let out = ok(&["query", "--gallery", s(&gallery), "--top", "9", "--format", "csv", s(&probe)]);
    assert_eq!(out.lines().count(), 1 + 4);

    // eigenfaces need an explicit training step
    let err = fail(&["query", "--gallery", s(&gallery), "--method", "pca", s(&probe)]);
    assert!(err.contains("eigenface"), "{err}");
    ok(&["train", "--gallery", s(&gallery)]);
    let out = ok(&["query", "--gallery", s(&gallery), "--method", "pca", "--format", "csv", s(&probe)]);
    assert!(out.lines().nth(1).unwrap().starts_with("1,subject03,"), "{out}");

    let empty = dir.path().join("empty");
    fail(&["query", "--gallery", s(&empty), s(&probe)]);
}

#[test]
fn bench_self_query_desk_and_missing_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let gallery = dir.path().join("g");
    enroll_all(&data, &gallery);
    ok(&["train", "--gallery", s(&gallery)]);

    let manifest = data.join("self.tsv");
    let lines: String = (1..=4).map(|i| format!("subject{i:02}\tgallery/subject{i:02}.png\n")).collect();
    fs::write(&manifest, lines).unwrap();
    let out = ok(&["bench", "--gallery", s(&gallery), "--manifest", s(&manifest), "--format", "csv"]);
    assert_eq!(out, "method,identification_rate\nSIFT,100.00\nPCA,100.00\n");

    // the synthesized moderate queries also run through the same path
    let out = ok(&["bench", "--gallery", s(&gallery), "--manifest", s(&data.join("queries.tsv")), "--method", "sift"]);
    assert!(out.starts_with("invocation: "), "{out}");

    let reports = dir.path().join("reports");
    let out = ok(&["bench", "--desk", "--format", "csv", "--report-dir", s(&reports)]);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "method,identification_rate");
    assert!(rows[1].starts_with("SIFT,") && rows[2].starts_with("PCA,"), "{out}");
    let csv = fs::read_to_string(reports.join("sift_queries.csv")).unwrap();
    assert!(csv.starts_with("query_id,true_identity,rank,top1_id,top1_score\n"));
    assert_eq!(csv.lines().count(), 21);

    let err = fail(&["bench", "--gallery", s(&gallery), "--manifest", s(&dir.path().join("absent.tsv"))]);
    assert!(err.contains("absent.tsv"), "{err}");
}

#[test]
fn transform_presets_seeds_and_limits() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let src = data.join("gallery/subject02.png");

    let same = dir.path().join("same.png");
    ok(&["transform", "--preset", "none", s(&src), s(&same)]);
    assert_eq!(decode(&src), decode(&same));

    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    let out = ok(&["--seed", "77", "transform", s(&src), s(&a)]);
    assert!(out.contains("seed: 77"), "{out}");
    ok(&["--seed", "77", "transform", s(&src), s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(decode(&src), decode(&a));

    let c = dir.path().join("c.png");
    let err = fail(&["transform", "--preset", "none", "--occlude", "0.5", s(&src), s(&c)]);
    assert!(err.contains("0.5") || err.contains("0.25"), "{err}");
    assert!(!c.exists());
}

fn decode(p: &Path) -> Vec<f64> {
    let bytes = fs::read(p).unwrap();
    mugmatch::image::to_grayscale(&mugmatch::image::decode_image(&bytes).unwrap()).into_pixels()
}

#[test]
fn inspect_lists_keypoints() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let img = data.join("gallery/subject01.png");
    let out = ok(&["inspect", "--format", "csv", s(&img)]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("x,y,sigma,orientation,octave,response"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.len() == 6 && r[2] > 0.0));
}

#[test]
fn params_file_and_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let gallery = dir.path().join("g");
    enroll_all(&data, &gallery);
    let params = dir.path().join("run.params");
    fs::write(&params, "ratio=0.7\nalr_band=2\n").unwrap();
    let probe = data.join("gallery/subject04.png");
    let out = ok(&["--params", s(&params), "query", "--gallery", s(&gallery), "--format", "csv", s(&probe)]);
    assert!(out.lines().nth(1).unwrap().starts_with("1,subject04,"));

    fs::write(&params, "ratio=1.5\n").unwrap();
    fail(&["--params", s(&params), "query", "--gallery", s(&gallery), s(&probe)]);
    fail(&["query", "--gallery", s(&gallery), "--ratio", "0", s(&probe)]);
    assert!(mugmatch(&["--help"]).status.success());
}
