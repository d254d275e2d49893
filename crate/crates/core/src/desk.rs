//! Desk-scale benchmark: 20 frontal faces, one manipulated query each.
//!
//! Faces come from a local corpus directory when one is given, otherwise from
//! a deterministic synthetic generator. Synthetic faces share a common layout
//! (oval, eyes, brows, nose, mouth, hair) with per-identity geometry, tone
//! and skin texture, so a holistic method sees similar images while local
//! features still differ between identities.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::eval::{generate_manipulation, EvalError, ManipulationSpec, Preset, Query};
use crate::image::{decode_image, gaussian_blur, to_grayscale, GrayImage, ImageError};

pub const DESK_IDENTITIES: usize = 20;
/// Base seed for desk queries; query `i` uses `DESK_QUERY_SEED + i`.
pub const DESK_QUERY_SEED: u64 = 20_240;
pub const SYNTH_SIZE: usize = 300;

#[derive(Debug, Error)]
pub enum DeskError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: ImageError,
    },
    #[error("corpus {0} holds {1} images; at least {DESK_IDENTITIES} are needed")]
    CorpusTooSmall(PathBuf, usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

struct Blob {
    x: f64,
    y: f64,
    r: f64,
    amp: f64,
}

impl Blob {
    fn at(&self, x: f64, y: f64) -> f64 {
        let d2 = (x - self.x).powi(2) + (y - self.y).powi(2);
        let lim = 9.0 * self.r * self.r;
        if d2 > lim {
            0.0
        } else {
            self.amp * (-d2 / (2.0 * self.r * self.r)).exp()
        }
    }
}

fn ellipse(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> f64 {
    ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2)
}

/// Soft inside-indicator for a normalized distance `d` (1 on the boundary).
fn soft_inside(d: f64, softness: f64) -> f64 {
    1.0 / (1.0 + ((d - 1.0) / softness).exp())
}

/// Deterministic synthetic frontal face for `identity`.
pub fn synthetic_face(identity: u64, size: usize) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_face ^ identity.wrapping_mul(0x9e37_79b9));
    let s = size as f64 / 300.0;
    let u = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| rng.gen_range(lo..hi);

    let bg_a = u(&mut rng, 0.15, 0.45);
    let bg_b = u(&mut rng, 0.15, 0.45);
    let skin = u(&mut rng, 0.45, 0.75);
    let hair_tone = u(&mut rng, 0.05, 0.35);
    let hair_freq = u(&mut rng, 0.15, 0.45);
    let hair_angle = u(&mut rng, -0.6, 0.6);

    let cx = 150.0 * s + u(&mut rng, -6.0, 6.0) * s;
    let cy = 160.0 * s + u(&mut rng, -6.0, 6.0) * s;
    let face_rx = u(&mut rng, 70.0, 86.0) * s;
    let face_ry = u(&mut rng, 104.0, 124.0) * s;
    let hairline = cy - face_ry * u(&mut rng, 0.62, 0.8);

    let eye_dx = u(&mut rng, 28.0, 38.0) * s;
    let eye_y = cy - u(&mut rng, 2.0, 14.0) * s;
    let eye_rx = u(&mut rng, 11.0, 17.0) * s;
    let eye_ry = u(&mut rng, 5.0, 9.0) * s;
    let iris_r = u(&mut rng, 3.5, 6.0) * s;
    let iris_tone = u(&mut rng, 0.05, 0.4);
    let brow_gap = u(&mut rng, 7.0, 14.0) * s;
    let brow_thick = u(&mut rng, 2.5, 6.0) * s;
    let brow_tilt = u(&mut rng, -0.25, 0.25);

    let nose_len = u(&mut rng, 34.0, 48.0) * s;
    let nose_w = u(&mut rng, 9.0, 18.0) * s;
    let mouth_y = cy + u(&mut rng, 56.0, 72.0) * s;
    let mouth_w = u(&mut rng, 22.0, 38.0) * s;
    let mouth_curve = u(&mut rng, -0.012, 0.012) / s;
    let lip = u(&mut rng, 3.0, 6.5) * s;
    let ear_y = cy - u(&mut rng, 0.0, 14.0) * s;

    // identity-specific skin texture: freckles, moles and soft shading
    let mut blobs = Vec::new();
    for _ in 0..rng.gen_range(250..400) {
        let a = u(&mut rng, 0.0, 2.0 * PI);
        let rr = u(&mut rng, 0.0, 1.0).sqrt();
        blobs.push(Blob {
            x: cx + a.cos() * rr * face_rx,
            y: cy + a.sin() * rr * face_ry,
            r: u(&mut rng, 1.2, 3.5) * s,
            amp: u(&mut rng, -0.2, 0.14),
        });
    }
    for _ in 0..rng.gen_range(60..90) {
        let a = u(&mut rng, 0.0, 2.0 * PI);
        let rr = u(&mut rng, 0.0, 1.0).sqrt();
        blobs.push(Blob {
            x: cx + a.cos() * rr * face_rx,
            y: cy + a.sin() * rr * face_ry,
            r: u(&mut rng, 3.0, 8.0) * s,
            amp: u(&mut rng, -0.18, 0.18),
        });
    }
    for _ in 0..rng.gen_range(2..6) {
        let a = u(&mut rng, 0.0, 2.0 * PI);
        let rr = u(&mut rng, 0.2, 0.9);
        blobs.push(Blob {
            x: cx + a.cos() * rr * face_rx,
            y: cy + a.sin() * rr * face_ry,
            r: u(&mut rng, 2.5, 5.0) * s,
            amp: -u(&mut rng, 0.15, 0.3),
        });
    }
    // hair strands clumps, kept inside the head outline above the hairline
    for _ in 0..rng.gen_range(80..140) {
        let a = u(&mut rng, PI, 2.0 * PI);
        let rr = u(&mut rng, 0.3, 1.05);
        let (x, y) = (cx + a.cos() * rr * face_rx * 1.12, cy - 8.0 * s + a.sin() * rr * face_ry * 1.1);
        if y < hairline {
            blobs.push(Blob {
                x,
                y,
                r: u(&mut rng, 1.5, 4.0) * s,
                amp: u(&mut rng, -0.15, 0.15),
            });
        }
    }
    let normal = Normal::new(0.0, 0.03).expect("positive sigma");
    let grain: Vec<f64> = (0..size * size).map(|_| normal.sample(&mut rng)).collect();

    let (sin_h, cos_h) = hair_angle.sin_cos();
    let img = GrayImage::from_fn(size, size, |xi, yi| {
        let (x, y) = (xi as f64, yi as f64);
        let mut v = bg_a + (bg_b - bg_a) * y / size as f64;

        // ears sit behind the face oval
        for side in [-1.0, 1.0] {
            let ear = ellipse(x, y, cx + side * face_rx * 0.98, ear_y, 12.0 * s, 22.0 * s);
            v += (skin * 0.9 - v) * soft_inside(ear, 0.08);
        }

        let face_d = ellipse(x, y, cx, cy, face_rx, face_ry);
        let in_face = soft_inside(face_d, 0.04);
        let shade = 0.08 * ((x - cx) / face_rx) - 0.05 * face_d;
        v += (skin + shade - v) * in_face;

        // hair cap above the hairline, banded along a tilted direction
        let head_d = ellipse(x, y, cx, cy - 8.0 * s, face_rx * 1.12, face_ry * 1.1);
        let above = 1.0 / (1.0 + ((y - hairline) / (3.0 * s)).exp());
        let hair_mask = soft_inside(head_d, 0.05) * above.max(1.0 - in_face) * soft_inside(head_d, 0.05);
        let band = (hair_freq * (x * cos_h + y * sin_h) / s).sin();
        v += (hair_tone + 0.06 * band - v) * hair_mask.min(1.0);

        for side in [-1.0, 1.0] {
            let ex = cx + side * eye_dx;
            let eye = ellipse(x, y, ex, eye_y, eye_rx, eye_ry);
            v += (0.92 - v) * soft_inside(eye, 0.1);
            let iris = ellipse(x, y, ex, eye_y, iris_r, iris_r);
            v += (iris_tone - v) * soft_inside(iris, 0.12);
            let pupil = ellipse(x, y, ex, eye_y, iris_r * 0.45, iris_r * 0.45);
            v += (0.02 - v) * soft_inside(pupil, 0.15);

            // brow: a thick tilted segment
            let bx = (x - ex) / (eye_rx * 1.3);
            let by = y - (eye_y - eye_ry - brow_gap + side * brow_tilt * (x - ex));
            if bx.abs() < 1.0 {
                let d = (by / brow_thick).abs();
                v += (hair_tone - v) * soft_inside(d, 0.15) * (1.0 - bx.powi(4));
            }
        }

        // nose: shaded ridge and nostrils
        let ny = (y - eye_y) / nose_len;
        if (0.0..1.0).contains(&ny) {
            let ridge = (x - cx) / (nose_w * (0.4 + 0.6 * ny));
            if ridge.abs() < 1.0 {
                v -= 0.14 * ridge * (1.0 - ridge.abs()) * ny;
            }
        }
        for side in [-1.0, 1.0] {
            let nostril = ellipse(x, y, cx + side * nose_w * 0.45, eye_y + nose_len, nose_w * 0.28, nose_w * 0.16);
            v -= 0.25 * soft_inside(nostril, 0.2);
        }

        // mouth: curved lip band
        let mx = (x - cx) / mouth_w;
        if mx.abs() < 1.0 {
            let centre = mouth_y + mouth_curve * (x - cx).powi(2);
            let d = ((y - centre) / lip).abs();
            v += (skin * 0.55 - v) * soft_inside(d, 0.2) * (1.0 - mx.powi(6));
            let line = ((y - centre) / (0.9 * s)).abs();
            v -= 0.2 * soft_inside(line, 0.3) * (1.0 - mx.powi(2));
        }

        let texture: f64 = blobs.iter().map(|b| b.at(x, y)).sum();
        v + texture + grain[yi * size + xi] * (0.3 + 0.7 * in_face)
    });
    gaussian_blur(&img, 0.7 * s.max(0.5)).expect("positive sigma")
}

/// Gallery images for the benchmark, in enrollment order.
#[derive(Debug, Clone)]
pub struct DeskSet {
    pub identities: Vec<(String, GrayImage)>,
    pub queries: Vec<Query>,
}

/// First `DESK_IDENTITIES` images (by file name) from `dir`.
pub fn load_corpus(dir: &Path) -> Result<Vec<(String, GrayImage)>, DeskError> {
    let io_err = |source| DeskError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm" | "ppm" | "pnm" | "pbm"))
        })
        .collect();
    paths.sort();
    if paths.len() < DESK_IDENTITIES {
        return Err(DeskError::CorpusTooSmall(dir.to_path_buf(), paths.len()));
    }
    paths
        .into_iter()
        .take(DESK_IDENTITIES)
        .map(|path| {
            let bytes = fs::read(&path).map_err(|source| DeskError::Io {
                path: path.clone(),
                source,
            })?;
            let img = decode_image(&bytes).map_err(|source| DeskError::Image {
                path: path.clone(),
                source,
            })?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((id, to_grayscale(&img)))
        })
        .collect()
}

pub fn synthetic_identities(count: usize, size: usize) -> Vec<(String, GrayImage)> {
    (0..count)
        .map(|i| (format!("subject{:02}", i + 1), synthetic_face(i as u64, size)))
        .collect()
}

/// One manipulated query per identity with seed `base_seed + index`.
pub fn make_queries(identities: &[(String, GrayImage)], preset: Preset, base_seed: u64) -> Result<Vec<Query>, EvalError> {
    identities
        .iter()
        .enumerate()
        .map(|(i, (id, img))| {
            let spec = ManipulationSpec::preset(preset, base_seed + i as u64);
            Ok(Query {
                query_id: format!("q{:02}", i + 1),
                true_identity: id.clone(),
                image: generate_manipulation(img, &spec)?,
            })
        })
        .collect()
}

pub fn desk_set(corpus: Option<&Path>, preset: Preset, base_seed: u64) -> Result<DeskSet, DeskError> {
    let identities = match corpus {
        Some(dir) => load_corpus(dir)?,
        None => synthetic_identities(DESK_IDENTITIES, SYNTH_SIZE),
    };
    let queries = make_queries(&identities, preset, base_seed)?;
    Ok(DeskSet { identities, queries })
}
