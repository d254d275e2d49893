//! The desk-scale benchmark, run end to end, plus the frozen-fixture format.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use mugmatch::desk::{desk_set, DESK_QUERY_SEED};
use mugmatch::eval::{run_benchmark, EvalReport, Method, Preset};
use mugmatch::gallery::GalleryIndex;
use mugmatch::matching::MatchConfig;

pub const RANKS_FIXTURE: &str = "desk_ranks.txt";

pub struct DeskRun {
    pub gallery: GalleryIndex,
    pub sift: EvalReport,
    pub pca: EvalReport,
    pub self_sift: EvalReport,
    pub self_pca: EvalReport,
    pub elapsed: Duration,
}

pub fn run_desk() -> DeskRun {
    let t = Instant::now();
    let set = desk_set(None, Preset::Moderate, DESK_QUERY_SEED).unwrap();
    let mut gallery = GalleryIndex::default();
    for (id, img) in &set.identities {
        gallery.enroll_gray(id, "", img, None).unwrap();
    }
    gallery.train_eigen(None).unwrap();
    let cfg = MatchConfig::default();
    let sift = run_benchmark(&gallery, &set.queries, Method::Sift, &cfg).unwrap();
    let pca = run_benchmark(&gallery, &set.queries, Method::Pca, &cfg).unwrap();

    let self_queries = mugmatch::desk::make_queries(&set.identities, Preset::None, 0).unwrap();
    let self_sift = run_benchmark(&gallery, &self_queries, Method::Sift, &cfg).unwrap();
    let self_pca = run_benchmark(&gallery, &self_queries, Method::Pca, &cfg).unwrap();
    DeskRun {
        gallery,
        sift,
        pca,
        self_sift,
        self_pca,
        elapsed: t.elapsed(),
    }
}

/// `method query rank` lines followed by `keypoints identity count` lines.
pub fn render_fixture(run: &DeskRun) -> String {
    let mut out = String::from("# per-query ranks and keypoint counts of the synthetic desk benchmark\n");
    for report in [&run.sift, &run.pca] {
        for q in &report.per_query {
            out.push_str(&format!("{} {} {}\n", report.method, q.query_id, q.rank));
        }
    }
    for r in &run.gallery.records {
        out.push_str(&format!("keypoints {} {}\n", r.identity_id, r.feature_set.len()));
    }
    out
}

pub fn parse_fixture(text: &str) -> BTreeMap<(String, String), usize> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            ((f[0].to_string(), f[1].to_string()), f[2].parse().unwrap())
        })
        .collect()
}

/// Compares against the committed fixture; `MUGMATCH_BLESS=1` rewrites it.
pub fn check_fixture(name: &str, actual: &str) -> Result<(), String> {
    let path = super::fixture(name);
    if std::env::var_os("MUGMATCH_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let (want, got) = (parse_fixture(&expected), parse_fixture(actual));
    let diffs: Vec<String> = want
        .iter()
        .filter(|(k, v)| got.get(*k) != Some(v))
        .map(|((a, b), v)| format!("{a} {b}: expected {v}, got {:?}", got.get(&(a.clone(), b.clone()))))
        .collect();
    if diffs.is_empty() && want.len() == got.len() {
        Ok(())
    } else {
        Err(format!("{} differences: {}", diffs.len(), diffs.join("; ")))
    }
}
