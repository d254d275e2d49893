use std::f64::consts::TAU;

use crate::image::{sample_bilinear as sample, GrayImage};

pub const DESCRIPTOR_LEN: usize = 128;
const GRID: usize = 4;
const ORI_BINS: usize = 8;
const SAMPLES: usize = 16;
/// Width of one spatial cell in units of the keypoint scale.
const CELL_WIDTH: f64 = 3.0;
pub const COMPONENT_CAP: f64 = 0.2;

/// 128-component gradient histogram, unit length with every component at
/// most 0.2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Descriptor(pub [f32; DESCRIPTOR_LEN]);

impl Descriptor {
    pub fn values(&self) -> &[f32; DESCRIPTOR_LEN] {
        &self.0
    }

    /// Euclidean distance, summed sequentially in `f32`.
    pub fn distance(&self, other: &Descriptor) -> f32 {
        let mut acc = 0.0f32;
        for i in 0..DESCRIPTOR_LEN {
            let d = self.0[i] - other.0[i];
            acc += d * d;
        }
        acc.sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt()
    }
}

/// Raw (unnormalized) 4x4x8 histogram over a 16x16 sample grid aligned with
/// `orientation`. Coordinates and `sigma` are in the pixel units of `img`.
pub fn raw_histogram(img: &GrayImage, x: f64, y: f64, sigma: f64, orientation: f64) -> [f64; DESCRIPTOR_LEN] {
    let spacing = CELL_WIDTH * sigma * GRID as f64 / SAMPLES as f64;
    let (sin_o, cos_o) = orientation.sin_cos();
    let half = SAMPLES as f64 / 2.0;
    let weight_denom = 2.0 * half * half;

    let mut hist = [0.0; DESCRIPTOR_LEN];
    for row in 0..SAMPLES {
        for col in 0..SAMPLES {
            // sample position in descriptor frame, sample units, centred
            let u = col as f64 + 0.5 - half;
            let v = row as f64 + 0.5 - half;
            let px = x + spacing * (u * cos_o - v * sin_o);
            let py = y + spacing * (u * sin_o + v * cos_o);
            let gx = 0.5 * (sample(img, px + 1.0, py) - sample(img, px - 1.0, py));
            let gy = 0.5 * (sample(img, px, py + 1.0) - sample(img, px, py - 1.0));
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let weight = (-(u * u + v * v) / weight_denom).exp();
            let rel = (gy.atan2(gx) - orientation).rem_euclid(TAU);

            let bx = (col as f64 + 0.5) / (SAMPLES / GRID) as f64 - 0.5;
            let by = (row as f64 + 0.5) / (SAMPLES / GRID) as f64 - 0.5;
            let bo = rel / TAU * ORI_BINS as f64;
            let (bx0, by0, bo0) = (bx.floor(), by.floor(), bo.floor());
            let (fx, fy, fo) = (bx - bx0, by - by0, bo - bo0);
            let contrib = mag * weight;

            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                let yi = by0 as isize + dy;
                if !(0..GRID as isize).contains(&yi) {
                    continue;
                }
                for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                    let xi = bx0 as isize + dx;
                    if !(0..GRID as isize).contains(&xi) {
                        continue;
                    }
                    for (dof, wo) in [(0, 1.0 - fo), (1, fo)] {
                        let oi = (bo0 as usize + dof) % ORI_BINS;
                        let idx = (yi as usize * GRID + xi as usize) * ORI_BINS + oi;
                        hist[idx] += contrib * wy * wx * wo;
                    }
                }
            }
        }
    }
    hist
}

/// Scales `raw` to unit length with no component above the cap.
///
/// Clamping and renormalizing can push clamped components back over the
/// cap; this solves for the fixed point directly: the largest `m`
/// components sit exactly at the cap and the rest share the remaining
/// energy. Returns `None` when the vector is zero or has too few non-zero
/// components to reach unit length under the cap.
pub fn normalize_capped(raw: &[f64; DESCRIPTOR_LEN]) -> Option<[f64; DESCRIPTOR_LEN]> {
    let mut order: Vec<usize> = (0..DESCRIPTOR_LEN).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]).then(a.cmp(&b)));
    let cap_sq = COMPONENT_CAP * COMPONENT_CAP;
    for m in 0..DESCRIPTOR_LEN {
        // summed afresh: subtracting a dominant term loses the small tail
        let rest_sq: f64 = order[m..].iter().map(|&i| raw[i] * raw[i]).sum();
        let budget = 1.0 - m as f64 * cap_sq;
        if budget <= 0.0 || !(rest_sq > 0.0) {
            return None;
        }
        let scale = (budget / rest_sq).sqrt();
        if scale * raw[order[m]] <= COMPONENT_CAP {
            let mut out = [0.0; DESCRIPTOR_LEN];
            for (rank, &i) in order.iter().enumerate() {
                out[i] = if rank < m {
                    COMPONENT_CAP
                } else {
                    raw[i] * scale
                };
            }
            return Some(out);
        }
    }
    None
}

pub fn describe_patch(img: &GrayImage, x: f64, y: f64, sigma: f64, orientation: f64) -> Option<Descriptor> {
    let raw = raw_histogram(img, x, y, sigma, orientation);
    let unit = normalize_capped(&raw)?;
    Some(Descriptor(unit.map(|v| v as f32)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn textured(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.2 * (x * 0.31).sin() * (y * 0.17).cos() + 0.15 * ((x + 2.0 * y) * 0.23).sin()
        })
    }

    #[test]
    fn flat_patch_is_degenerate() {
        assert!(describe_patch(&GrayImage::filled(40, 40, 0.3), 20.0, 20.0, 1.6, 0.0).is_none());
    }

    #[test]
    fn textured_patch_contract() {
        let img = textured(64, 64);
        let d = describe_patch(&img, 32.0, 32.0, 2.0, 0.7).unwrap();
        assert_eq!(d.values().len(), 128);
        assert!((d.norm() - 1.0).abs() < 1e-6);
        assert!(d.values().iter().all(|&v| (0.0..=0.2 + 1e-6).contains(&(v as f64))));
    }

    #[test]
    fn capped_normalization_single_spike() {
        // one dominant component among many small ones
        let mut raw = [0.01; DESCRIPTOR_LEN];
        raw[5] = 10.0;
        let out = normalize_capped(&raw).unwrap();
        assert!((out[5] - 0.2).abs() < 1e-15);
        let norm: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_sparse_cannot_be_capped() {
        let mut raw = [0.0; DESCRIPTOR_LEN];
        raw[..24].iter_mut().for_each(|v| *v = 1.0);
        assert!(normalize_capped(&raw).is_none());
        raw[24] = 1.0;
        let out = normalize_capped(&raw).unwrap();
        assert!(out.iter().all(|&v| v <= 0.2 + 1e-12));
    }

    #[test]
    fn distance_zero_to_self() {
        let d = describe_patch(&textured(48, 48), 24.0, 24.0, 1.8, 0.0).unwrap();
        assert_eq!(d.distance(&d), 0.0);
    }

    proptest! {
        #[test]
        fn normalize_capped_contract(raw in prop::collection::vec(0.0f64..1.0, DESCRIPTOR_LEN)) {
            let raw: [f64; DESCRIPTOR_LEN] = raw.try_into().unwrap();
            if let Some(out) = normalize_capped(&raw) {
                let norm: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-9);
                prop_assert!(out.iter().all(|&v| (0.0..=COMPONENT_CAP + 1e-12).contains(&v)));
                // order preserved
                for i in 0..DESCRIPTOR_LEN {
                    for j in 0..DESCRIPTOR_LEN {
                        if raw[i] > raw[j] {
                            prop_assert!(out[i] >= out[j]);
                        }
                    }
                }
            }
        }
    }
}
