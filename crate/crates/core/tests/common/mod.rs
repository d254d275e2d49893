//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls into the code under test except
//! to build inputs.

#![allow(dead_code)]

use std::path::PathBuf;

use mugmatch::image::GrayImage;
use mugmatch::sift::{Descriptor, FeatureSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Half-sample symmetric index: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
pub fn mirror(i: i64, n: i64) -> usize {
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Dense 2-D Gaussian convolution with the full (2r+1)^2 stencil,
/// normalized in 2-D, r = ceil(4 sigma).
pub fn dense_gaussian_2d(img: &GrayImage, sigma: f64) -> Vec<f64> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let r = (4.0 * sigma).ceil() as i64;
    let mut stencil = Vec::new();
    let mut total = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let v = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            stencil.push((dx, dy, v));
            total += v;
        }
    }
    let mut out = vec![0.0; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for &(dx, dy, v) in &stencil {
                acc += v / total * img.get(mirror(x + dx, w), mirror(y + dy, h));
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    out
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in descending order with matching unit eigenvectors.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// PCA from the explicit D x D sample covariance (divided by N - 1).
pub struct DensePca {
    pub mean: Vec<f64>,
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

pub fn dense_pca(samples: &[Vec<f64>]) -> DensePca {
    let n = samples.len();
    let d = samples[0].len();
    let mean: Vec<f64> = (0..d).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for s in samples {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]) / (n - 1) as f64;
            }
        }
    }
    let (values, vectors) = jacobi_eigen(&cov);
    DensePca { mean, values, vectors }
}

impl DensePca {
    pub fn project(&self, x: &[f64], k: usize) -> Vec<f64> {
        self.vectors[..k]
            .iter()
            .map(|v| v.iter().zip(x).zip(&self.mean).map(|((a, b), m)| a * (b - m)).sum())
            .collect()
    }

    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, v) in coeffs.iter().zip(&self.vectors) {
            for (o, e) in out.iter_mut().zip(v) {
                *o += c * e;
            }
        }
        out
    }
}

/// Exhaustive scan computing distances in f32 exactly like a plain loop.
pub fn brute_nearest_two(q: &Descriptor, gallery: &FeatureSet) -> (usize, f32, f32) {
    let mut dists: Vec<(usize, f32)> = gallery
        .descriptors
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut s = 0.0f32;
            for k in 0..128 {
                let d = q.0[k] - g.0[k];
                s += d * d;
            }
            (i, s.sqrt())
        })
        .collect();
    dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let second = dists.get(1).map_or(f32::INFINITY, |d| d.1);
    (dists[0].0, dists[0].1, second)
}

/// Random non-negative unit descriptors.
pub fn random_descriptors(n: usize, seed: u64) -> Vec<Descriptor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut v = [0f32; 128];
            for x in v.iter_mut() {
                *x = rng.gen::<f32>();
            }
            let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            Descriptor(v)
        })
        .collect()
}

/// Checkerboard with 20 px cells plus smoothed Gaussian noise, 300 x 300.
pub fn checkerboard_noise() -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let normal = Normal::new(0.0, 0.25).unwrap();
    let noise: Vec<f64> = (0..300 * 300).map(|_| normal.sample(&mut rng)).collect();
    let noise = GrayImage::from_fn(300, 300, |x, y| 0.5 + noise[y * 300 + x]);
    let smooth = mugmatch::image::gaussian_blur(&noise, 2.0).unwrap();
    GrayImage::from_fn(300, 300, |x, y| {
        let cell = ((x / 20) + (y / 20)) % 2;
        let base = if cell == 0 { 0.35 } else { 0.65 };
        base + 1.5 * (smooth.get(x, y) - 0.5)
    })
}

pub fn decode_file(name: &str) -> GrayImage {
    let bytes = std::fs::read(fixture(name)).unwrap();
    mugmatch::image::to_grayscale(&mugmatch::image::decode_image(&bytes).unwrap())
}

/// Ten smooth 8x8 images with distinct structure.
pub fn ten_toy_faces() -> Vec<GrayImage> {
    (0..10)
        .map(|i| {
            let f = i as f64;
            GrayImage::from_fn(8, 8, |x, y| {
                let (x, y) = (x as f64, y as f64);
                0.5 + 0.2 * ((x + f) * 0.7).sin() * ((y * (0.3 + 0.1 * f)).cos()) + 0.1 * ((x * y + f) * 0.2).cos()
            })
        })
        .collect()
}

pub mod desk;
