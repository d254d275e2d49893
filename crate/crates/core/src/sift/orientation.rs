use std::f64::consts::TAU;

use crate::image::GrayImage;

pub const ORIENTATION_BINS: usize = 36;
const PEAK_RATIO: f64 = 0.8;
const WINDOW_SIGMA_FACTOR: f64 = 1.5;

/// Gaussian-weighted histogram of gradient orientations around `(x, y)`.
///
/// `sigma` is the keypoint scale in the pixel units of `img`. Bin `k` is
/// centred on angle `k * 2pi / 36`.
pub fn orientation_histogram(img: &GrayImage, x: f64, y: f64, sigma: f64) -> [f64; ORIENTATION_BINS] {
    let weight_sigma = WINDOW_SIGMA_FACTOR * sigma;
    let radius = (3.0 * weight_sigma).round() as isize;
    let denom = 2.0 * weight_sigma * weight_sigma;
    let (cx, cy) = (x.round() as isize, y.round() as isize);
    let (w, h) = (img.width() as isize, img.height() as isize);

    let mut hist = [0.0; ORIENTATION_BINS];
    for j in -radius..=radius {
        let py = cy + j;
        if py < 1 || py > h - 2 {
            continue;
        }
        for i in -radius..=radius {
            let px = cx + i;
            if px < 1 || px > w - 2 {
                continue;
            }
            let (pxu, pyu) = (px as usize, py as usize);
            let gx = img.get(pxu + 1, pyu) - img.get(pxu - 1, pyu);
            let gy = img.get(pxu, pyu + 1) - img.get(pxu, pyu - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(TAU);
            let bin = (angle / TAU * ORIENTATION_BINS as f64).round() as usize % ORIENTATION_BINS;
            let weight = (-((i * i + j * j) as f64) / denom).exp();
            hist[bin] += weight * mag;
        }
    }
    hist
}

/// Angles in `[0, 2pi)` of every local histogram peak reaching 80% of the
/// maximum, refined by parabolic interpolation over the neighbouring bins.
pub fn histogram_peaks(hist: &[f64; ORIENTATION_BINS]) -> Vec<f64> {
    let max = hist.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let n = ORIENTATION_BINS;
    let mut peaks = Vec::new();
    for k in 0..n {
        let prev = hist[(k + n - 1) % n];
        let next = hist[(k + 1) % n];
        let cur = hist[k];
        // `>=` on one side so a two-bin plateau yields exactly one peak
        if cur > prev && cur >= next && cur >= PEAK_RATIO * max {
            let denom = prev - 2.0 * cur + next;
            let shift = if denom != 0.0 {
                0.5 * (prev - next) / denom
            } else {
                0.0
            };
            let angle = ((k as f64 + shift) * TAU / n as f64).rem_euclid(TAU);
            peaks.push(angle);
        }
    }
    peaks
}
