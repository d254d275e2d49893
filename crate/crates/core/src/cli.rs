//! Command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::desk::{desk_set, synthetic_identities, make_queries, DESK_QUERY_SEED, SYNTH_SIZE};
use crate::eval::{generate_manipulation, run_benchmark, EvalReport, ManipulationOp, ManipulationSpec, Method, Preset, Query};
use crate::gallery::{decode_params, GalleryIndex, CANONICAL_SIZE, MANIFEST_FILE};
use crate::image::{decode_image, encode_pgm, encode_png, to_grayscale, GrayImage};
use crate::matching::{identify, MatchConfig};
use crate::sift::{extract_features, PyramidParams};

#[derive(Debug, Parser)]
#[command(name = "mugmatch", version, about = "Identify manipulated face images against an enrolled gallery")]
pub struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key=value` file overriding matching, eigenface and SIFT parameters.
    #[arg(long, global = true, value_name = "FILE")]
    pub params: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add a face image to a gallery, creating the gallery if needed.
    Enroll(EnrollArgs),
    /// Rank gallery identities against a query image.
    Query(QueryArgs),
    /// Fit the eigenface model to every enrolled face.
    Train(TrainArgs),
    /// Run an identification benchmark and report rank-1 rates.
    Bench(BenchArgs),
    /// Write a manipulated copy of an image.
    Transform(TransformArgs),
    /// Print the keypoints detected in an image.
    Inspect(InspectArgs),
    /// Write the synthetic face corpus plus manipulated queries.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Sift,
    Pca,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    None,
    Mild,
    Moderate,
    Heavy,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::None => Preset::None,
            PresetArg::Mild => Preset::Mild,
            PresetArg::Moderate => Preset::Moderate,
            PresetArg::Heavy => Preset::Heavy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Csv,
}

fn parse_ratio(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err("ratio must lie in (0, 1]".into())
    }
}

fn parse_k(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k),
        _ => Err("eigen-k must be an integer >= 1".into()),
    }
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    #[arg(long, value_name = "DIR")]
    pub gallery: PathBuf,
    /// Identity id; defaults to the image file stem.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub label: Option<String>,
    pub image: PathBuf,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Lowe ratio-test fraction.
    #[arg(long, value_parser = parse_ratio)]
    pub ratio: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long, value_name = "DIR")]
    pub gallery: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Sift)]
    pub method: MethodArg,
    /// Number of rows to print.
    #[arg(long)]
    pub top: Option<usize>,
    #[command(flatten)]
    pub matching: MatchArgs,
    pub image: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    pub gallery: PathBuf,
    /// Components to keep; defaults to min(N - 1, 40).
    #[arg(long, value_parser = parse_k)]
    pub eigen_k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Enrolled gallery to query; used with --manifest.
    #[arg(long, value_name = "DIR", requires = "manifest")]
    pub gallery: Option<PathBuf>,
    /// Lines of `true_identity<TAB>image_path`, paths relative to the manifest.
    #[arg(long, value_name = "FILE", requires = "gallery")]
    pub manifest: Option<PathBuf>,
    /// Built-in 20-identity benchmark, synthetic unless --corpus is given.
    #[arg(long, conflicts_with_all = ["gallery", "manifest"])]
    pub desk: bool,
    /// Directory of at least 20 frontal face images for --desk.
    #[arg(long, value_name = "DIR", requires = "desk")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PresetArg::Moderate)]
    pub preset: PresetArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    pub method: MethodArg,
    /// Eigenface components for --desk (defaults to min(N - 1, 40)).
    #[arg(long, value_parser = parse_k)]
    pub eigen_k: Option<usize>,
    /// Also write per-query CSV, CMC and text reports here.
    #[arg(long, value_name = "DIR")]
    pub report_dir: Option<PathBuf>,
    #[command(flatten)]
    pub matching: MatchArgs,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long, value_enum, default_value_t = PresetArg::Moderate)]
    pub preset: PresetArg,
    /// Extra local warp amplitude in pixels (max 15).
    #[arg(long)]
    pub warp: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub warp_grid: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub brightness: Option<f64>,
    #[arg(long)]
    pub contrast: Option<f64>,
    #[arg(long)]
    pub blur: Option<f64>,
    /// Fraction of the image area to cover (max 0.25).
    #[arg(long)]
    pub occlude: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    pub input: PathBuf,
    /// Output path; `.png` writes PNG, anything else binary PGM.
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Resize to this square size first (0 keeps the input size).
    #[arg(long, default_value_t = 0)]
    pub size: usize,
    pub image: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, default_value_t = SYNTH_SIZE)]
    pub size: usize,
    #[arg(long, value_enum, default_value_t = PresetArg::Moderate)]
    pub preset: PresetArg,
}

/// Settings gathered from `--params` plus command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub match_config: MatchConfig,
    pub eigen_k: Option<usize>,
    pub pyramid: PyramidParams,
    pub canonical_size: (usize, usize),
    /// True when the params file set any SIFT or size key.
    pub pyramid_overridden: bool,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            match_config: MatchConfig::default(),
            eigen_k: None,
            pyramid: PyramidParams::default(),
            canonical_size: CANONICAL_SIZE,
            pyramid_overridden: false,
        }
    }
}

impl CliConfig {
    pub fn from_params_text(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = CliConfig::default();
        let mut sift_lines = String::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| anyhow!("{}: line {}: expected key=value", path.display(), n + 1))?;
            let bad = || anyhow!("{}: line {}: bad value for {key}", path.display(), n + 1);
            let num = || value.parse::<f64>().map_err(|_| bad());
            let int = || value.parse::<usize>().map_err(|_| bad());
            let alr = &mut cfg.match_config.alr;
            match key {
                "ratio" => cfg.match_config.ratio = num()?,
                "eigen_k" => cfg.eigen_k = Some(int()?),
                "alr_ratio_bins" => alr.ratio_bins = int()?,
                "alr_ratio_min" => alr.ratio_min = num()?,
                "alr_ratio_max" => alr.ratio_max = num()?,
                "alr_angle_bins" => alr.angle_bins = int()?,
                "alr_band" => alr.inlier_band = int()?,
                "alr_min_pair_votes" => alr.min_pair_votes = num()?,
                _ => {
                    sift_lines.push_str(&format!("{key}={value}\n"));
                }
            }
        }
        cfg.match_config.validate()?;
        if cfg.eigen_k == Some(0) {
            bail!("{}: eigen_k must be >= 1", path.display());
        }
        if !sift_lines.is_empty() {
            let (pyramid, size) = decode_params(&sift_lines, path)?;
            cfg.pyramid = pyramid;
            cfg.canonical_size = size;
            cfg.pyramid_overridden = true;
        }
        Ok(cfg)
    }

    fn with_ratio(mut self, ratio: Option<f64>) -> Self {
        if let Some(r) = ratio {
            self.match_config.ratio = r;
        }
        self
    }
}

fn read_image(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).with_context(|| format!("cannot read image {}", path.display()))?;
    let img = decode_image(&bytes).with_context(|| format!("cannot decode image {}", path.display()))?;
    Ok(to_grayscale(&img))
}

fn write_image(path: &Path, img: &GrayImage) -> Result<()> {
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png { encode_png(img)? } else { encode_pgm(img) };
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn load_gallery(dir: &Path, cfg: &CliConfig) -> Result<GalleryIndex> {
    let g = GalleryIndex::load(dir).with_context(|| format!("cannot load gallery {}", dir.display()))?;
    if cfg.pyramid_overridden && (g.params != cfg.pyramid || g.canonical_size != cfg.canonical_size) {
        bail!(
            "--params SIFT settings differ from those gallery {} was built with",
            dir.display()
        );
    }
    Ok(g)
}

/// Parses argv and runs the selected command, returning its standard output.
pub fn run<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    execute(&cli)
}

pub fn execute(cli: &Cli) -> Result<String> {
    let cfg = match &cli.params {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read params file {}", path.display()))?;
            CliConfig::from_params_text(&text, path)?
        }
        None => CliConfig::default(),
    };
    match &cli.command {
        Command::Enroll(a) => cmd_enroll(a, &cfg),
        Command::Query(a) => cmd_query(a, &cfg),
        Command::Train(a) => cmd_train(a, &cfg),
        Command::Bench(a) => cmd_bench(a, &cfg, cli.seed),
        Command::Transform(a) => cmd_transform(a, cli.seed.unwrap_or(0)),
        Command::Inspect(a) => cmd_inspect(a, &cfg),
        Command::Synth(a) => cmd_synth(a, cli.seed.unwrap_or(DESK_QUERY_SEED)),
    }
}

pub fn cmd_enroll(a: &EnrollArgs, cfg: &CliConfig) -> Result<String> {
    let mut gallery = if a.gallery.join(MANIFEST_FILE).exists() {
        load_gallery(&a.gallery, cfg)?
    } else {
        GalleryIndex::new(cfg.pyramid.clone(), cfg.canonical_size)
    };
    let img = read_image(&a.image)?;
    let id = match &a.id {
        Some(id) => id.clone(),
        None => a
            .image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| anyhow!("cannot derive an identity id from {}", a.image.display()))?,
    };
    let had_model = gallery.eigen_model().is_ok();
    let label = a.label.clone().unwrap_or_else(|| id.clone());
    let count = gallery.enroll_gray(&id, &label, &img, Some(a.image.clone()))?.feature_set.len();
    gallery
        .save(&a.gallery)
        .with_context(|| format!("cannot save gallery {}", a.gallery.display()))?;
    if had_model {
        eprintln!("note: eigenface model cleared; run `mugmatch train` before PCA queries");
    }
    Ok(format!("enrolled {id}: {count} keypoints (gallery size {})\n", gallery.len()))
}

pub fn cmd_train(a: &TrainArgs, cfg: &CliConfig) -> Result<String> {
    let mut gallery = load_gallery(&a.gallery, cfg)?;
    let k = gallery.train_eigen(a.eigen_k.or(cfg.eigen_k))?.k();
    gallery
        .save(&a.gallery)
        .with_context(|| format!("cannot save gallery {}", a.gallery.display()))?;
    Ok(format!("trained eigenface model: {k} components over {} faces\n", gallery.len()))
}

pub fn cmd_query(a: &QueryArgs, cfg: &CliConfig) -> Result<String> {
    let gallery = load_gallery(&a.gallery, cfg)?;
    if gallery.is_empty() {
        bail!("gallery {} is empty", a.gallery.display());
    }
    let cfg = cfg.clone().with_ratio(a.matching.ratio);
    let face = gallery.preprocess_gray(&read_image(&a.image)?)?;
    let top = a.top.unwrap_or(gallery.len()).min(gallery.len());
    let label = |id: &str| gallery.get(id).map(|r| r.label.clone()).unwrap_or_default();
    let csv = a.matching.format == Format::Csv;
    let mut out = String::new();
    match a.method {
        MethodArg::Sift => {
            let fs = extract_features(&face, &gallery.params)?;
            let ranked = identify(&fs, &gallery.feature_sets(), &cfg.match_config)?;
            if csv {
                out.push_str("rank,identity_id,label,inliers,raw_matches\n");
            } else {
                let _ = writeln!(out, "query keypoints: {}", fs.len());
                let _ = writeln!(out, "{:>4}  {:<20} {:<20} {:>7} {:>7}", "rank", "identity", "label", "inliers", "matches");
            }
            for (i, c) in ranked.iter().take(top).enumerate() {
                let l = label(&c.identity_id);
                if csv {
                    let _ = writeln!(out, "{},{},{},{},{}", i + 1, c.identity_id, l, c.inlier_matches, c.raw_matches);
                } else {
                    let _ = writeln!(
                        out,
                        "{:>4}  {:<20} {:<20} {:>7} {:>7}",
                        i + 1,
                        c.identity_id,
                        l,
                        c.inlier_matches,
                        c.raw_matches
                    );
                }
            }
        }
        MethodArg::Pca => {
            let model = gallery.eigen_model()?;
            let ranked = model.rank(&model.project(&face)?, &gallery.eigen_projections()?)?;
            if csv {
                out.push_str("rank,identity_id,label,distance\n");
            } else {
                let _ = writeln!(out, "{:>4}  {:<20} {:<20} {:>10}", "rank", "identity", "label", "distance");
            }
            for (i, (id, d)) in ranked.iter().take(top).enumerate() {
                if csv {
                    let _ = writeln!(out, "{},{},{},{}", i + 1, id, label(id), d);
                } else {
                    let _ = writeln!(out, "{:>4}  {:<20} {:<20} {:>10.4}", i + 1, id, label(id), d);
                }
            }
        }
        MethodArg::Both => bail!("query takes --method sift or --method pca"),
    }
    Ok(out)
}

fn read_manifest(path: &Path) -> Result<Vec<Query>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut queries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (identity, image) = line
            .split_once('\t')
            .ok_or_else(|| anyhow!("{}: line {}: expected identity<TAB>image", path.display(), n + 1))?;
        let image_path = base.join(image);
        let query_id = image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("line{}", n + 1));
        queries.push(Query {
            query_id,
            true_identity: identity.to_string(),
            image: read_image(&image_path)?,
        });
    }
    if queries.is_empty() {
        bail!("manifest {} lists no queries", path.display());
    }
    Ok(queries)
}

fn methods(m: MethodArg) -> Vec<Method> {
    match m {
        MethodArg::Sift => vec![Method::Sift],
        MethodArg::Pca => vec![Method::Pca],
        MethodArg::Both => vec![Method::Sift, Method::Pca],
    }
}

pub fn cmd_bench(a: &BenchArgs, cfg: &CliConfig, seed: Option<u64>) -> Result<String> {
    let started = Instant::now();
    let cfg = cfg.clone().with_ratio(a.matching.ratio);
    let seed = seed.unwrap_or(DESK_QUERY_SEED);
    let wanted = methods(a.method);
    let (gallery, queries, invocation) = if a.desk {
        let set = desk_set(a.corpus.as_deref(), a.preset.into(), seed)?;
        let mut g = GalleryIndex::new(cfg.pyramid.clone(), cfg.canonical_size);
        for (id, img) in &set.identities {
            g.enroll_gray(id, id, img, None)?;
        }
        if wanted.contains(&Method::Pca) {
            g.train_eigen(a.eigen_k.or(cfg.eigen_k))?;
        }
        let corpus = a
            .corpus
            .as_ref()
            .map(|c| format!(" --corpus {}", c.display()))
            .unwrap_or_default();
        let preset = Preset::from(a.preset);
        (g, set.queries, format!("mugmatch bench --desk{corpus} --preset {preset} --seed {seed}"))
    } else {
        let (Some(dir), Some(manifest)) = (&a.gallery, &a.manifest) else {
            bail!("bench needs --desk or both --gallery and --manifest");
        };
        let g = load_gallery(dir, &cfg)?;
        let q = read_manifest(manifest)?;
        let inv = format!("mugmatch bench --gallery {} --manifest {}", dir.display(), manifest.display());
        (g, q, inv)
    };

    let mut reports: Vec<EvalReport> = Vec::new();
    for m in wanted {
        reports.push(run_benchmark(&gallery, &queries, m, &cfg.match_config)?);
    }
    if let Some(dir) = &a.report_dir {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for r in &reports {
            let stem = r.method.to_string().to_lowercase();
            for (name, body) in [
                (format!("{stem}_queries.csv"), r.to_csv()),
                (format!("{stem}_cmc.csv"), r.cmc_csv()),
                (format!("{stem}_report.txt"), r.to_text()),
            ] {
                let p = dir.join(name);
                fs::write(&p, body).with_context(|| format!("cannot write {}", p.display()))?;
            }
        }
    }

    let mut out = String::new();
    match a.matching.format {
        Format::Csv => {
            out.push_str("method,identification_rate\n");
            for r in &reports {
                let _ = writeln!(out, "{},{:.2}", r.method, r.identification_rate);
            }
        }
        Format::Text => {
            let _ = writeln!(out, "invocation: {invocation}");
            for r in &reports {
                out.push_str(&r.to_text());
                out.push('\n');
            }
            let _ = writeln!(out, "{:<8} {:>20}", "method", "identification rate");
            for r in &reports {
                let _ = writeln!(out, "{:<8} {:>19.2}%", r.method.to_string(), r.identification_rate);
            }
            let _ = writeln!(
                out,
                "{} queries against {} identities in {:.1} s",
                queries.len(),
                gallery.len(),
                started.elapsed().as_secs_f64()
            );
        }
    }
    Ok(out)
}

pub fn cmd_transform(a: &TransformArgs, seed: u64) -> Result<String> {
    let img = read_image(&a.input)?;
    let mut spec = ManipulationSpec::preset(a.preset.into(), seed);
    if let Some(amplitude) = a.warp {
        spec.ops.push(ManipulationOp::LocalWarp {
            amplitude,
            grid: a.warp_grid,
        });
    }
    let extra = [
        a.brightness.map(ManipulationOp::Brightness),
        a.contrast.map(ManipulationOp::Contrast),
        a.blur.map(ManipulationOp::Blur),
        a.occlude.map(ManipulationOp::Occlude),
        a.noise.map(ManipulationOp::Noise),
    ];
    spec.ops.extend(extra.into_iter().flatten());
    let out = generate_manipulation(&img, &spec)?;
    write_image(&a.output, &out)?;
    Ok(format!("seed: {seed}\nwrote {}\n", a.output.display()))
}

pub fn cmd_inspect(a: &InspectArgs, cfg: &CliConfig) -> Result<String> {
    let mut img = read_image(&a.image)?;
    if a.size > 0 {
        img = crate::image::resize_bilinear(&img, a.size, a.size)?;
    }
    let fs = extract_features(&img, &cfg.pyramid)?;
    let mut out = String::new();
    match a.format {
        Format::Csv => out.push_str("x,y,sigma,orientation,octave,response\n"),
        Format::Text => {
            let _ = writeln!(out, "{} keypoints in {}x{} image", fs.len(), img.width(), img.height());
            let _ = writeln!(out, "{:>9} {:>9} {:>8} {:>8}", "x", "y", "sigma", "orient");
        }
    }
    for k in &fs.keypoints {
        match a.format {
            Format::Csv => {
                let _ = writeln!(out, "{},{},{},{},{},{}", k.x, k.y, k.sigma, k.orientation, k.octave, k.response);
            }
            Format::Text => {
                let _ = writeln!(out, "{:>9.2} {:>9.2} {:>8.3} {:>8.4}", k.x, k.y, k.sigma, k.orientation);
            }
        }
    }
    Ok(out)
}

pub fn cmd_synth(a: &SynthArgs, seed: u64) -> Result<String> {
    if a.count == 0 || a.size < 32 {
        bail!("synth needs --count >= 1 and --size >= 32");
    }
    let faces = synthetic_identities(a.count, a.size);
    let queries = make_queries(&faces, a.preset.into(), seed)?;
    let gallery_dir = a.out.join("gallery");
    let query_dir = a.out.join("queries");
    for d in [&gallery_dir, &query_dir] {
        fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
    }
    let mut manifest = String::new();
    for ((id, face), q) in faces.iter().zip(&queries) {
        write_image(&gallery_dir.join(format!("{id}.png")), face)?;
        write_image(&query_dir.join(format!("{}.png", q.query_id)), &q.image)?;
        let _ = writeln!(manifest, "{id}\tqueries/{}.png", q.query_id);
    }
    let manifest_path = a.out.join("queries.tsv");
    fs::write(&manifest_path, manifest).with_context(|| format!("cannot write {}", manifest_path.display()))?;
    Ok(format!(
        "seed: {seed}\nwrote {} faces to {} and queries listed in {}\n",
        faces.len(),
        gallery_dir.display(),
        manifest_path.display()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_file_parsing() {
        let text = "# tuned\nratio = 0.7\neigen_k=5\nalr_band=2\ncontrast_threshold=0.04\n";
        let cfg = CliConfig::from_params_text(text, Path::new("p.txt")).unwrap();
        assert_eq!(cfg.match_config.ratio, 0.7);
        assert_eq!(cfg.eigen_k, Some(5));
        assert_eq!(cfg.match_config.alr.inlier_band, 2);
        assert_eq!(cfg.pyramid.contrast_threshold, 0.04);
        assert!(cfg.pyramid_overridden);

        assert!(CliConfig::from_params_text("ratio=1.5", Path::new("p")).is_err());
        assert!(CliConfig::from_params_text("nonsense", Path::new("p")).is_err());
        assert!(CliConfig::from_params_text("mystery=1", Path::new("p")).is_err());
    }

    #[test]
    fn flag_validation() {
        assert!(run(["mugmatch", "query", "--gallery", "g", "--ratio", "0", "x.png"]).is_err());
        assert!(run(["mugmatch", "train", "--gallery", "g", "--eigen-k", "0"]).is_err());
        assert!(Cli::try_parse_from(["mugmatch", "bench", "--desk", "--gallery", "g"]).is_err());
    }
}
