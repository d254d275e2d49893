//! Descriptor matching and gallery identification.
//!
//! A query keypoint matches a gallery keypoint when its nearest descriptor
//! is closer than a fixed fraction of the second nearest. Surviving matches
//! are then checked for spatial consistency with angle/line-ratio voting:
//! every pair of matches spans one segment in each image, and the length
//! ratio and angle difference of those two segments should agree across
//! all correct matches. Candidates are ranked by how many matches survive.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use thiserror::Error;

use crate::sift::{Descriptor, FeatureSet, Keypoint};

pub const DEFAULT_RATIO: f64 = 0.8;

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("gallery feature set is empty")]
    EmptyFeatureSet,
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("ratio {0} outside (0, 1]")]
    InvalidRatio(f64),
    #[error("invalid ALR parameters: {0}")]
    InvalidAlrParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub query_idx: usize,
    pub gallery_idx: usize,
    pub dist_best: f32,
    /// `f32::INFINITY` when the gallery holds a single descriptor.
    pub dist_second: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlrParams {
    pub ratio_bins: usize,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub angle_bins: usize,
    /// Bins either side of the dominant cell still counted as agreeing.
    pub inlier_band: usize,
    /// Fraction of a match's pairings that must agree for it to survive.
    pub min_pair_votes: f64,
}

impl Default for AlrParams {
    fn default() -> Self {
        Self {
            ratio_bins: 20,
            ratio_min: 0.25,
            ratio_max: 4.0,
            angle_bins: 24,
            inlier_band: 1,
            min_pair_votes: 0.5,
        }
    }
}

impl AlrParams {
    pub fn validate(&self) -> Result<(), MatchError> {
        let bad = |m: &str| Err(MatchError::InvalidAlrParams(m.to_string()));
        if self.ratio_bins < 1 || self.angle_bins < 1 {
            return bad("bin counts must be >= 1");
        }
        if !(self.ratio_min > 0.0 && self.ratio_max > self.ratio_min) {
            return bad("ratio range must satisfy 0 < min < max");
        }
        if !(self.min_pair_votes > 0.0 && self.min_pair_votes <= 1.0) {
            return bad("min_pair_votes must lie in (0, 1]");
        }
        Ok(())
    }

    /// Ratio bin edges `(lo, hi)` on the linear scale.
    pub fn ratio_bin_range(&self, bin: usize) -> (f64, f64) {
        let (lo, hi) = (self.ratio_min.ln(), self.ratio_max.ln());
        let w = (hi - lo) / self.ratio_bins as f64;
        ((lo + w * bin as f64).exp(), (lo + w * (bin + 1) as f64).exp())
    }

    /// Angle bin edges `(lo, hi)` in radians within `[-pi, pi)`.
    pub fn angle_bin_range(&self, bin: usize) -> (f64, f64) {
        let w = TAU / self.angle_bins as f64;
        (-PI + w * bin as f64, -PI + w * (bin + 1) as f64)
    }
}

/// Matching configuration shared by every candidate of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    pub ratio: f64,
    pub alr: AlrParams,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            ratio: DEFAULT_RATIO,
            alr: AlrParams::default(),
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(MatchError::InvalidRatio(self.ratio));
        }
        self.alr.validate()
    }
}

/// Index and distance of the nearest gallery descriptor, plus the distance
/// of the runner-up. Exhaustive scan; the first index wins ties.
pub fn nearest_two(query: &Descriptor, gallery: &FeatureSet) -> Result<(usize, f32, f32), MatchError> {
    if gallery.descriptors.is_empty() {
        return Err(MatchError::EmptyFeatureSet);
    }
    let mut best = (0usize, f32::INFINITY);
    let mut second = f32::INFINITY;
    for (i, d) in gallery.descriptors.iter().enumerate() {
        let dist = query.distance(d);
        if dist < best.1 {
            second = best.1;
            best = (i, dist);
        } else if dist < second {
            second = dist;
        }
    }
    Ok((best.0, best.1, second))
}

/// Strict ratio test: `best < fraction * second`.
pub fn passes_ratio(dist_best: f32, dist_second: f32, fraction: f64) -> bool {
    (dist_best as f64) < fraction * dist_second as f64
}

/// Ratio-test matches, at most one per gallery keypoint (the closer claim
/// wins; on equal distance the lower query index wins). Sorted by query index.
pub fn ratio_match(query: &FeatureSet, gallery: &FeatureSet, fraction: f64) -> Vec<MatchPair> {
    if query.is_empty() || gallery.is_empty() {
        return Vec::new();
    }
    let mut claims: Vec<Option<MatchPair>> = vec![None; gallery.len()];
    for (qi, qd) in query.descriptors.iter().enumerate() {
        let (gi, best, second) = nearest_two(qd, gallery).expect("gallery checked non-empty");
        if !passes_ratio(best, second, fraction) {
            continue;
        }
        let pair = MatchPair {
            query_idx: qi,
            gallery_idx: gi,
            dist_best: best,
            dist_second: second,
        };
        match &claims[gi] {
            Some(existing) if existing.dist_best <= best => {}
            _ => claims[gi] = Some(pair),
        }
    }
    let mut out: Vec<MatchPair> = claims.into_iter().flatten().collect();
    out.sort_by_key(|m| m.query_idx);
    out
}

/// Classification of one pair of matches in the ratio/angle histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairVote {
    /// Gallery segment has (near) zero length; ratio undefined.
    Skipped,
    /// Length ratio outside the histogram range.
    OutOfRange,
    Cell { ratio_bin: usize, angle_bin: usize },
}

const MIN_SEGMENT: f64 = 1e-9;

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_pi(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

pub fn pair_vote(q_i: &Keypoint, q_j: &Keypoint, g_i: &Keypoint, g_j: &Keypoint, params: &AlrParams) -> PairVote {
    let (qdx, qdy) = ((q_j.x - q_i.x) as f64, (q_j.y - q_i.y) as f64);
    let (gdx, gdy) = ((g_j.x - g_i.x) as f64, (g_j.y - g_i.y) as f64);
    let g_len = gdx.hypot(gdy);
    if g_len < MIN_SEGMENT {
        return PairVote::Skipped;
    }
    let ratio = qdx.hypot(qdy) / g_len;
    let (lo, hi) = (params.ratio_min.ln(), params.ratio_max.ln());
    let t = (ratio.ln() - lo) / (hi - lo);
    if !(0.0..1.0).contains(&t) {
        return PairVote::OutOfRange;
    }
    let ratio_bin = ((t * params.ratio_bins as f64) as usize).min(params.ratio_bins - 1);
    let delta = wrap_pi(qdy.atan2(qdx) - gdy.atan2(gdx));
    let angle_bin = (((delta + PI) / TAU * params.angle_bins as f64) as usize).min(params.angle_bins - 1);
    PairVote::Cell {
        ratio_bin,
        angle_bin,
    }
}

/// Votes of every unordered match pair `(i, j)`, `i < j`, in row-major
/// upper-triangle order.
pub fn pair_votes(matches: &[MatchPair], query: &FeatureSet, gallery: &FeatureSet, params: &AlrParams) -> Vec<PairVote> {
    let m = matches.len();
    let mut votes = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        let (qi, gi) = (
            &query.keypoints[matches[i].query_idx],
            &gallery.keypoints[matches[i].gallery_idx],
        );
        for mj in &matches[i + 1..] {
            votes.push(pair_vote(
                qi,
                &query.keypoints[mj.query_idx],
                gi,
                &gallery.keypoints[mj.gallery_idx],
                params,
            ));
        }
    }
    votes
}

/// 2-D vote histogram, indexed `[ratio_bin][angle_bin]`.
pub fn vote_histogram(votes: &[PairVote], params: &AlrParams) -> Vec<Vec<usize>> {
    let mut hist = vec![vec![0usize; params.angle_bins]; params.ratio_bins];
    for v in votes {
        if let PairVote::Cell {
            ratio_bin,
            angle_bin,
        } = *v
        {
            hist[ratio_bin][angle_bin] += 1;
        }
    }
    hist
}

/// Most-voted cell; the lowest `(ratio_bin, angle_bin)` wins ties. `None`
/// when no pair produced a vote.
pub fn dominant_cell(hist: &[Vec<usize>]) -> Option<(usize, usize)> {
    let mut best: Option<((usize, usize), usize)> = None;
    for (r, row) in hist.iter().enumerate() {
        for (a, &count) in row.iter().enumerate() {
            if count > 0 && best.is_none_or(|(_, c)| count > c) {
                best = Some(((r, a), count));
            }
        }
    }
    best.map(|(cell, _)| cell)
}

fn agrees(vote: PairVote, dominant: (usize, usize), params: &AlrParams) -> bool {
    match vote {
        PairVote::Cell {
            ratio_bin,
            angle_bin,
        } => {
            let band = params.inlier_band;
            let dr = ratio_bin.abs_diff(dominant.0);
            let da = angle_bin.abs_diff(dominant.1);
            let da = da.min(params.angle_bins - da);
            dr <= band && da <= band
        }
        _ => false,
    }
}

/// Keeps matches whose pairings mostly agree with the dominant ratio/angle
/// cell. Skipped pairings are excluded from a match's tally; out-of-range
/// ones count as disagreeing.
pub fn alr_filter(
    matches: &[MatchPair],
    query: &FeatureSet,
    gallery: &FeatureSet,
    params: &AlrParams,
) -> Vec<MatchPair> {
    let m = matches.len();
    if m < 2 {
        return matches.to_vec();
    }
    let votes = pair_votes(matches, query, gallery, params);
    let Some(dominant) = dominant_cell(&vote_histogram(&votes, params)) else {
        return Vec::new();
    };

    let mut counted = vec![0usize; m];
    let mut agreeing = vec![0usize; m];
    let mut k = 0;
    for i in 0..m {
        for j in i + 1..m {
            let v = votes[k];
            k += 1;
            if v == PairVote::Skipped {
                continue;
            }
            counted[i] += 1;
            counted[j] += 1;
            if agrees(v, dominant, params) {
                agreeing[i] += 1;
                agreeing[j] += 1;
            }
        }
    }
    matches
        .iter()
        .enumerate()
        .filter(|&(i, _)| {
            counted[i] > 0 && agreeing[i] as f64 >= params.min_pair_votes * counted[i] as f64
        })
        .map(|(_, p)| *p)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchScore {
    pub raw_matches: usize,
    pub inlier_matches: usize,
    pub inlier_pairs: Vec<MatchPair>,
}

pub fn score_candidate(query: &FeatureSet, gallery: &FeatureSet, config: &MatchConfig) -> MatchScore {
    let raw = ratio_match(query, gallery, config.ratio);
    let inliers = alr_filter(&raw, query, gallery, &config.alr);
    MatchScore {
        raw_matches: raw.len(),
        inlier_matches: inliers.len(),
        inlier_pairs: inliers,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub identity_id: String,
    pub enrollment_index: usize,
    pub raw_matches: usize,
    pub inlier_matches: usize,
    pub inlier_pairs: Vec<MatchPair>,
}

/// Scores every gallery entry and ranks by inlier count, then raw match
/// count, then enrollment order.
pub fn identify(
    query: &FeatureSet,
    gallery: &[(&str, &FeatureSet)],
    config: &MatchConfig,
) -> Result<Vec<ScoredCandidate>, MatchError> {
    if gallery.is_empty() {
        return Err(MatchError::EmptyGallery);
    }
    config.validate()?;
    let mut scored: Vec<ScoredCandidate> = gallery
        .par_iter()
        .enumerate()
        .map(|(idx, (id, fs))| {
            let s = score_candidate(query, fs, config);
            ScoredCandidate {
                identity_id: id.to_string(),
                enrollment_index: idx,
                raw_matches: s.raw_matches,
                inlier_matches: s.inlier_matches,
                inlier_pairs: s.inlier_pairs,
            }
        })
        .collect();
    scored.sort_by(|a, b| {
        b.inlier_matches
            .cmp(&a.inlier_matches)
            .then(b.raw_matches.cmp(&a.raw_matches))
            .then(a.enrollment_index.cmp(&b.enrollment_index))
    });
    Ok(scored)
}
