//! Manipulated-query generation and identification benchmarks.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::eigen::EigenError;
use crate::gallery::{GalleryError, GalleryIndex};
use crate::image::{gaussian_blur, sample_bilinear, GrayImage, ImageError};
use crate::matching::{identify, MatchConfig, MatchError};
use crate::sift::{extract_features, SiftError};

pub const MAX_WARP_AMPLITUDE: f64 = 15.0;
pub const MAX_OCCLUSION: f64 = 0.25;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("manipulation parameter out of range: {0}")]
    SpecOutOfRange(String),
    #[error("identification rate of an empty outcome list")]
    EmptyOutcomes,
    #[error("query '{query}' names identity '{identity}' which is not enrolled")]
    UnknownIdentity { query: String, identity: String },
    #[error("eigenface model is missing or out of date; retrain after enrolling")]
    StaleEigenModel,
    #[error("unknown preset '{0}' (expected none, mild, moderate or heavy)")]
    UnknownPreset(String),
    #[error(transparent)]
    Gallery(GalleryError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Sift(#[from] SiftError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

impl From<GalleryError> for EvalError {
    fn from(e: GalleryError) -> Self {
        match e {
            GalleryError::StaleEigenModel => EvalError::StaleEigenModel,
            other => EvalError::Gallery(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ManipulationOp {
    /// Random displacement of up to `amplitude` px on a `grid` x `grid`
    /// control lattice, bilinearly interpolated between control points.
    LocalWarp { amplitude: f64, grid: usize },
    Brightness(f64),
    /// `p' = 0.5 + gamma * (p - 0.5)`.
    Contrast(f64),
    /// Gaussian blur; 0 leaves the image untouched.
    Blur(f64),
    /// One filled rectangle covering this fraction of the image area.
    Occlude(f64),
    /// Additive Gaussian noise with this standard deviation.
    Noise(f64),
}

impl ManipulationOp {
    pub fn validate(&self) -> Result<(), EvalError> {
        let out = |msg: String| Err(EvalError::SpecOutOfRange(msg));
        match *self {
            ManipulationOp::LocalWarp { amplitude, grid } => {
                if !(0.0..=MAX_WARP_AMPLITUDE).contains(&amplitude) {
                    return out(format!("warp amplitude {amplitude} not in [0, {MAX_WARP_AMPLITUDE}]"));
                }
                if !(2..=64).contains(&grid) {
                    return out(format!("warp grid {grid} not in [2, 64]"));
                }
            }
            ManipulationOp::Brightness(d) if !(-1.0..=1.0).contains(&d) => {
                return out(format!("brightness {d} not in [-1, 1]"))
            }
            ManipulationOp::Contrast(g) if !(0.0..=4.0).contains(&g) => {
                return out(format!("contrast {g} not in [0, 4]"))
            }
            ManipulationOp::Blur(s) if !(0.0..=20.0).contains(&s) => return out(format!("blur sigma {s} not in [0, 20]")),
            ManipulationOp::Occlude(f) if !(0.0..=MAX_OCCLUSION).contains(&f) => {
                return out(format!("occlusion fraction {f} not in [0, {MAX_OCCLUSION}]"))
            }
            ManipulationOp::Noise(s) if !(0.0..=1.0).contains(&s) => return out(format!("noise sigma {s} not in [0, 1]")),
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    None,
    Mild,
    Moderate,
    Heavy,
}

impl FromStr for Preset {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Preset::None),
            "mild" => Ok(Preset::Mild),
            "moderate" => Ok(Preset::Moderate),
            "heavy" => Ok(Preset::Heavy),
            other => Err(EvalError::UnknownPreset(other.to_string())),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::None => "none",
            Preset::Mild => "mild",
            Preset::Moderate => "moderate",
            Preset::Heavy => "heavy",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManipulationSpec {
    pub seed: u64,
    pub ops: Vec<ManipulationOp>,
}

impl ManipulationSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        self.ops.iter().try_for_each(ManipulationOp::validate)
    }

    /// Severity tier. Photometric amounts are drawn from the tier's range
    /// with `seed`, so different seeds give different alterations.
    pub fn preset(preset: Preset, seed: u64) -> Self {
        // (warp amp, grid, brightness, contrast spread, blur, occlusion, noise)
        let (amp, grid, bright, spread, blur, occ, noise) = match preset {
            Preset::None => return Self { seed, ops: Vec::new() },
            Preset::Mild => (3.0, 4, 0.04, 0.05, 0.5, 0.0, 0.01),
            Preset::Moderate => (6.0, 5, 0.08, 0.15, 1.0, 0.06, 0.02),
            Preset::Heavy => (12.0, 6, 0.15, 0.3, 1.5, 0.2, 0.04),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut ops = vec![
            ManipulationOp::LocalWarp { amplitude: amp, grid },
            ManipulationOp::Brightness(rng.gen_range(-bright..=bright)),
            ManipulationOp::Contrast(rng.gen_range(1.0 - spread..=1.0 + spread)),
            ManipulationOp::Blur(blur),
        ];
        if occ > 0.0 {
            ops.push(ManipulationOp::Occlude(occ));
        }
        ops.push(ManipulationOp::Noise(noise));
        Self { seed, ops }
    }
}

/// Applies `spec.ops` in order. All randomness comes from one generator
/// seeded with `spec.seed`.
pub fn generate_manipulation(img: &GrayImage, spec: &ManipulationSpec) -> Result<GrayImage, EvalError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = img.clone();
    for op in &spec.ops {
        out = apply_op(&out, op, &mut rng)?;
    }
    Ok(out)
}

fn apply_op(img: &GrayImage, op: &ManipulationOp, rng: &mut ChaCha8Rng) -> Result<GrayImage, EvalError> {
    Ok(match *op {
        ManipulationOp::LocalWarp { amplitude, grid } => local_warp(img, amplitude, grid, rng),
        ManipulationOp::Brightness(d) => img.map(|p| p + d),
        ManipulationOp::Contrast(g) if g == 1.0 => img.clone(),
        ManipulationOp::Contrast(g) => img.map(|p| 0.5 + g * (p - 0.5)),
        ManipulationOp::Blur(s) if s == 0.0 => img.clone(),
        ManipulationOp::Blur(s) => gaussian_blur(img, s)?,
        ManipulationOp::Occlude(f) => occlude(img, f, rng),
        ManipulationOp::Noise(s) if s == 0.0 => img.clone(),
        ManipulationOp::Noise(s) => {
            let normal = Normal::new(0.0, s).expect("validated sigma");
            let pixels: Vec<f64> = img.pixels().iter().map(|&p| p + normal.sample(rng)).collect();
            GrayImage::from_fn(img.width(), img.height(), |x, y| pixels[y * img.width() + x])
        }
    })
}

fn local_warp(img: &GrayImage, amplitude: f64, grid: usize, rng: &mut ChaCha8Rng) -> GrayImage {
    let field: Vec<(f64, f64)> = (0..grid * grid)
        .map(|_| {
            (
                amplitude * rng.gen_range(-1.0..=1.0),
                amplitude * rng.gen_range(-1.0..=1.0),
            )
        })
        .collect();
    let (w, h) = img.dims();
    let cell_x = (w.max(2) - 1) as f64 / (grid - 1) as f64;
    let cell_y = (h.max(2) - 1) as f64 / (grid - 1) as f64;
    GrayImage::from_fn(w, h, |x, y| {
        let gx = (x as f64 / cell_x).min((grid - 1) as f64);
        let gy = (y as f64 / cell_y).min((grid - 1) as f64);
        let (i0, j0) = ((gx.floor() as usize).min(grid - 2), (gy.floor() as usize).min(grid - 2));
        let (fx, fy) = (gx - i0 as f64, gy - j0 as f64);
        let at = |i: usize, j: usize| field[j * grid + i];
        let lerp = |a: (f64, f64), b: (f64, f64), t: f64| (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
        let top = lerp(at(i0, j0), at(i0 + 1, j0), fx);
        let bottom = lerp(at(i0, j0 + 1), at(i0 + 1, j0 + 1), fx);
        let (dx, dy) = lerp(top, bottom, fy);
        sample_bilinear(img, x as f64 + dx, y as f64 + dy)
    })
}

fn occlude(img: &GrayImage, fraction: f64, rng: &mut ChaCha8Rng) -> GrayImage {
    let (w, h) = img.dims();
    let area = fraction * (w * h) as f64;
    let aspect: f64 = rng.gen_range(0.5..=2.0);
    let rw = ((area * aspect).sqrt().round() as usize).clamp(0, w);
    let rh = if rw == 0 { 0 } else { ((area / rw as f64).round() as usize).min(h) };
    let x0 = rng.gen_range(0..=w - rw);
    let y0 = rng.gen_range(0..=h - rh);
    let fill: f64 = rng.gen_range(0.0..=1.0);
    GrayImage::from_fn(w, h, |x, y| {
        if (x0..x0 + rw).contains(&x) && (y0..y0 + rh).contains(&y) {
            fill
        } else {
            img.get(x, y)
        }
    })
}

/// Percentage of `true` entries.
pub fn identification_rate(outcomes: &[bool]) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyOutcomes);
    }
    Ok(percent(outcomes.iter().filter(|&&b| b).count(), outcomes.len()))
}

fn percent(count: usize, total: usize) -> f64 {
    100.0 * count as f64 / total as f64
}

/// `result[k - 1]` is the percentage of queries whose true identity ranked
/// at `k` or better. Empty input gives an all-zero curve.
///
/// # Panics
///
/// If any rank is 0.
pub fn cmc_curve(ranks: &[usize], max_rank: usize) -> Vec<f64> {
    assert!(ranks.iter().all(|&r| r >= 1), "ranks are 1-based");
    if ranks.is_empty() {
        return vec![0.0; max_rank];
    }
    (1..=max_rank)
        .map(|k| percent(ranks.iter().filter(|&&r| r <= k).count(), ranks.len()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sift,
    Pca,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sift => "SIFT",
            Method::Pca => "PCA",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub query_id: String,
    pub true_identity: String,
    pub image: GrayImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub query_id: String,
    pub true_identity: String,
    /// 1-based rank of the true identity.
    pub rank: usize,
    pub top1_id: String,
    /// Inlier count for SIFT, eigenspace distance for PCA.
    pub top1_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: Method,
    pub per_query: Vec<QueryOutcome>,
    pub identification_rate: f64,
    pub cmc: Vec<f64>,
    pub params: String,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl EvalReport {
    pub fn ranks(&self) -> Vec<usize> {
        self.per_query.iter().map(|q| q.rank).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("query_id,true_identity,rank,top1_id,top1_score\n");
        for q in &self.per_query {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                csv_field(&q.query_id),
                csv_field(&q.true_identity),
                q.rank,
                csv_field(&q.top1_id),
                q.top1_score
            );
        }
        out
    }

    pub fn cmc_csv(&self) -> String {
        let mut out = String::from("rank,rate\n");
        for (k, rate) in self.cmc.iter().enumerate() {
            let _ = writeln!(out, "{},{:.2}", k + 1, rate);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("method: {}\nparams: {}\n", self.method, self.params);
        let width = |f: fn(&QueryOutcome) -> &str, head: &str| {
            self.per_query.iter().map(|q| f(q).chars().count()).max().unwrap_or(0).max(head.len())
        };
        let wq = width(|q| &q.query_id, "query");
        let wt = width(|q| &q.true_identity, "true identity");
        let wp = width(|q| &q.top1_id, "top-1");
        let _ = writeln!(out, "{:<wq$}  {:<wt$}  {:>4}  {:<wp$}  score", "query", "true identity", "rank", "top-1");
        for q in &self.per_query {
            let _ = writeln!(
                out,
                "{:<wq$}  {:<wt$}  {:>4}  {:<wp$}  {:.4}",
                q.query_id, q.true_identity, q.rank, q.top1_id, q.top1_score
            );
        }
        let _ = writeln!(out, "identification rate: {:.2}%", self.identification_rate);
        out
    }
}

fn params_snapshot(gallery: &GalleryIndex, method: Method, config: &MatchConfig) -> String {
    let p = &gallery.params;
    let common = format!(
        "size={}x{} octave_scales={} sigma0={} contrast={} edge={}",
        gallery.canonical_size.0,
        gallery.canonical_size.1,
        p.scales_per_octave,
        p.base_sigma,
        p.contrast_threshold,
        p.edge_ratio
    );
    match method {
        Method::Sift => format!(
            "{common} ratio={} alr_bins={}x{} alr_range=[{},{}) band={}",
            config.ratio,
            config.alr.ratio_bins,
            config.alr.angle_bins,
            config.alr.ratio_min,
            config.alr.ratio_max,
            config.alr.inlier_band
        ),
        Method::Pca => match gallery.eigen_model() {
            Ok(m) => format!("size={}x{} eigen_k={}", gallery.canonical_size.0, gallery.canonical_size.1, m.k()),
            Err(_) => common,
        },
    }
}

/// Ranks every query against the gallery. Queries run in parallel; the
/// report keeps query order.
pub fn run_benchmark(
    gallery: &GalleryIndex,
    queries: &[Query],
    method: Method,
    config: &MatchConfig,
) -> Result<EvalReport, EvalError> {
    for q in queries {
        if gallery.position(&q.true_identity).is_none() {
            return Err(EvalError::UnknownIdentity {
                query: q.query_id.clone(),
                identity: q.true_identity.clone(),
            });
        }
    }
    if queries.is_empty() {
        return Err(EvalError::EmptyOutcomes);
    }
    let projections = match method {
        Method::Pca => Some((gallery.eigen_model()?, gallery.eigen_projections()?)),
        Method::Sift => None,
    };
    if method == Method::Sift {
        config.validate()?;
    }
    let sets = gallery.feature_sets();

    let ranked: Vec<Vec<(String, f64)>> = queries
        .par_iter()
        .map(|q| -> Result<_, EvalError> {
            let face = gallery.preprocess_gray(&q.image)?;
            Ok(match &projections {
                Some((model, proj)) => model.rank(&model.project(&face)?, proj)?,
                None => {
                    let fs = extract_features(&face, &gallery.params)?;
                    identify(&fs, &sets, config)?
                        .into_iter()
                        .map(|c| (c.identity_id, c.inlier_matches as f64))
                        .collect()
                }
            })
        })
        .collect::<Result<_, _>>()?;

    let per_query: Vec<QueryOutcome> = queries
        .iter()
        .zip(ranked)
        .map(|(q, ranking)| QueryOutcome {
            query_id: q.query_id.clone(),
            true_identity: q.true_identity.clone(),
            rank: 1 + ranking
                .iter()
                .position(|(id, _)| *id == q.true_identity)
                .expect("every gallery identity is ranked"),
            top1_id: ranking[0].0.clone(),
            top1_score: ranking[0].1,
        })
        .collect();
    let hits: Vec<bool> = per_query.iter().map(|q| q.rank == 1).collect();
    let ranks: Vec<usize> = per_query.iter().map(|q| q.rank).collect();
    Ok(EvalReport {
        method,
        identification_rate: identification_rate(&hits)?,
        cmc: cmc_curve(&ranks, gallery.len()),
        per_query,
        params: params_snapshot(gallery, method, config),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn textured(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.3 * (x * 0.37).sin() * (y * 0.23).cos()
        })
    }

    #[test]
    fn empty_ops_identity() {
        let img = textured(40, 30);
        let out = generate_manipulation(&img, &ManipulationSpec { seed: 5, ops: vec![] }).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn zero_strength_ops_identity() {
        let img = textured(40, 30);
        let spec = ManipulationSpec {
            seed: 11,
            ops: vec![
                ManipulationOp::LocalWarp { amplitude: 0.0, grid: 4 },
                ManipulationOp::Brightness(0.0),
                ManipulationOp::Contrast(1.0),
                ManipulationOp::Blur(0.0),
                ManipulationOp::Occlude(0.0),
                ManipulationOp::Noise(0.0),
            ],
        };
        assert_eq!(generate_manipulation(&img, &spec).unwrap(), img);
    }

    #[test]
    fn brightness_clamps() {
        let img = GrayImage::filled(8, 8, 0.8);
        let spec = ManipulationSpec {
            seed: 0,
            ops: vec![ManipulationOp::Brightness(0.5)],
        };
        let out = generate_manipulation(&img, &spec).unwrap();
        assert!(out.pixels().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn seeded_determinism() {
        let img = textured(64, 64);
        let a = generate_manipulation(&img, &ManipulationSpec::preset(Preset::Moderate, 7)).unwrap();
        let b = generate_manipulation(&img, &ManipulationSpec::preset(Preset::Moderate, 7)).unwrap();
        let c = generate_manipulation(&img, &ManipulationSpec::preset(Preset::Moderate, 8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn out_of_range_rejected() {
        let img = textured(16, 16);
        for op in [
            ManipulationOp::Occlude(0.5),
            ManipulationOp::LocalWarp { amplitude: 16.0, grid: 4 },
            ManipulationOp::LocalWarp { amplitude: 2.0, grid: 1 },
            ManipulationOp::Brightness(f64::NAN),
        ] {
            let spec = ManipulationSpec { seed: 0, ops: vec![op] };
            assert!(matches!(generate_manipulation(&img, &spec), Err(EvalError::SpecOutOfRange(_))));
        }
    }

    #[test]
    fn occlusion_covers_requested_area() {
        let img = GrayImage::filled(100, 100, 0.123);
        let spec = ManipulationSpec {
            seed: 3,
            ops: vec![ManipulationOp::Occlude(0.2)],
        };
        let out = generate_manipulation(&img, &spec).unwrap();
        let changed = out.pixels().iter().filter(|&&p| p != 0.123).count();
        assert!((1800..=2200).contains(&changed), "{changed}");
    }

    #[test]
    fn rates() {
        let mut v = vec![false; 100];
        v[..92].iter_mut().for_each(|b| *b = true);
        assert_eq!(identification_rate(&v).unwrap(), 92.0);
        assert_eq!(identification_rate(&[false; 7]).unwrap(), 0.0);
        assert!(matches!(identification_rate(&[]), Err(EvalError::EmptyOutcomes)));
    }

    #[test]
    fn cmc_examples() {
        assert_eq!(cmc_curve(&[1, 1, 1], 3), vec![100.0; 3]);
        let c = cmc_curve(&[1, 2, 3], 3);
        for (got, want) in c.iter().zip([33.33, 66.67, 100.0]) {
            assert!((got - want).abs() < 0.01);
        }
    }

    #[test]
    fn csv_quotes_commas() {
        let r = EvalReport {
            method: Method::Sift,
            per_query: vec![QueryOutcome {
                query_id: "q,1".into(),
                true_identity: "a".into(),
                rank: 1,
                top1_id: "a".into(),
                top1_score: 12.0,
            }],
            identification_rate: 100.0,
            cmc: vec![100.0],
            params: String::new(),
        };
        assert_eq!(r.to_csv(), "query_id,true_identity,rank,top1_id,top1_score\n\"q,1\",a,1,a,12\n");
        assert_eq!(r.cmc_csv(), "rank,rate\n1,100.00\n");
    }

    proptest! {
        #[test]
        fn cmc_invariants(ranks in prop::collection::vec(1usize..10, 1..40)) {
            let c = cmc_curve(&ranks, 10);
            let hits: Vec<bool> = ranks.iter().map(|&r| r == 1).collect();
            prop_assert_eq!(c[0], identification_rate(&hits).unwrap());
            prop_assert!(c.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(c[9], 100.0);
        }

        #[test]
        fn manipulations_stay_in_unit_range(seed in any::<u64>(), preset in 0usize..4) {
            let preset = [Preset::None, Preset::Mild, Preset::Moderate, Preset::Heavy][preset];
            let out = generate_manipulation(&textured(48, 40), &ManipulationSpec::preset(preset, seed)).unwrap();
            prop_assert!(out.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
