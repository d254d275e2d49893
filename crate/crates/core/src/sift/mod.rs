//! SIFT keypoint detection and description.
//!
//! The pipeline is the classic four stages: a Gaussian scale space with its
//! difference-of-Gaussian stack, extrema detection with quadratic
//! refinement, dominant-orientation assignment, and the 4x4x8 gradient
//! histogram descriptor. Defaults follow Lowe's published constants.

mod descriptor;
mod detect;
mod orientation;
mod pyramid;

use std::f32::consts::TAU;

use rayon::prelude::*;
use thiserror::Error;

use crate::image::{GrayImage, ImageError};

pub use descriptor::{describe_patch, normalize_capped, raw_histogram, Descriptor, COMPONENT_CAP, DESCRIPTOR_LEN};
pub use detect::{detect_extrema, localize_keypoint, passes_edge_test, Candidate, Localized, Rejection};
pub use orientation::{histogram_peaks, orientation_histogram, ORIENTATION_BINS};
pub use pyramid::{
    build_dog_pyramid, build_gaussian_pyramid, level_sigma, octave_count, DogPyramid,
    GaussianPyramid, Octave, Plane, MIN_OCTAVE_SIZE,
};

#[derive(Debug, Error, PartialEq)]
pub enum SiftError {
    #[error("image {0}x{1} is smaller than the 16 px minimum octave")]
    ImageTooSmall(usize, usize),
    #[error("invalid pyramid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("keypoint and descriptor counts differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Why a localized keypoint produced no output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    EmptyGradient,
    DegeneratePatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidParams {
    pub scales_per_octave: usize,
    pub base_sigma: f64,
    pub contrast_threshold: f64,
    pub edge_ratio: f64,
    pub assumed_input_blur: f64,
    /// Double the input before building octave 0. Off by default.
    pub upsample_input: bool,
}

impl Default for PyramidParams {
    fn default() -> Self {
        Self {
            scales_per_octave: 3,
            base_sigma: 1.6,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            assumed_input_blur: 0.5,
            upsample_input: false,
        }
    }
}

impl PyramidParams {
    pub fn validate(&self) -> Result<(), SiftError> {
        let bad = |msg: &str| Err(SiftError::InvalidParams(msg.to_string()));
        if self.scales_per_octave < 1 {
            return bad("scales_per_octave must be >= 1");
        }
        if !(self.assumed_input_blur >= 0.0) || !(self.base_sigma > self.assumed_input_blur) {
            return bad("base_sigma must exceed assumed_input_blur >= 0");
        }
        if !(self.contrast_threshold > 0.0) {
            return bad("contrast_threshold must be positive");
        }
        if !(self.edge_ratio >= 1.0) {
            return bad("edge_ratio must be >= 1");
        }
        Ok(())
    }

    /// Stable byte encoding, used for fingerprinting cached features.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = b"sift-v1".to_vec();
        out.extend((self.scales_per_octave as u64).to_le_bytes());
        for v in [
            self.base_sigma,
            self.contrast_threshold,
            self.edge_ratio,
            self.assumed_input_blur,
        ] {
            out.extend(v.to_bits().to_le_bytes());
        }
        out.push(self.upsample_input as u8);
        out
    }

    fn base_step(&self) -> f64 {
        if self.upsample_input {
            0.5
        } else {
            1.0
        }
    }

    /// Pyramid level whose blur is nearest to a keypoint of absolute scale `sigma`.
    pub fn level_for(&self, sigma: f32, octave: u32) -> u32 {
        let step = self.base_step() * (1u64 << octave) as f64;
        let rel = sigma as f64 / step / self.base_sigma;
        let s = (rel.log2() * self.scales_per_octave as f64).round();
        s.clamp(0.0, (self.scales_per_octave + 2) as f64) as u32
    }
}

/// Interest point in input-image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub octave: u32,
    /// Gaussian level used for orientation and descriptor sampling.
    pub scale_index: u32,
    /// Absolute scale in input pixels.
    pub sigma: f32,
    /// Radians in `[0, 2pi)`.
    pub orientation: f32,
    /// Interpolated DoG value.
    pub response: f32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
    pub source_dims: (usize, usize),
}

impl FeatureSet {
    pub fn new(
        keypoints: Vec<Keypoint>,
        descriptors: Vec<Descriptor>,
        source_dims: (usize, usize),
    ) -> Result<Self, SiftError> {
        if keypoints.len() != descriptors.len() {
            return Err(SiftError::LengthMismatch(keypoints.len(), descriptors.len()));
        }
        Ok(Self {
            keypoints,
            descriptors,
            source_dims,
        })
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// Converts a refined extremum into an (unoriented) keypoint.
pub fn to_keypoint(gp: &GaussianPyramid, loc: &Localized, params: &PyramidParams) -> Keypoint {
    let step = gp.step(loc.octave);
    let x = (loc.x as f64 + loc.offset[0]) * step;
    let y = (loc.y as f64 + loc.offset[1]) * step;
    let s = loc.scale_index as f64 + loc.offset[2];
    let sigma = (gp.base_sigma * 2f64.powf(s / gp.scales_per_octave as f64) * step) as f32;
    let octave = loc.octave as u32;
    Keypoint {
        x: x as f32,
        y: y as f32,
        octave,
        scale_index: params.level_for(sigma, octave),
        sigma,
        orientation: 0.0,
        response: loc.response as f32,
    }
}

/// Keypoint position and scale in the pixel units of its octave.
fn octave_frame(gp: &GaussianPyramid, kp: &Keypoint) -> (f64, f64, f64) {
    let step = gp.step(kp.octave as usize);
    (kp.x as f64 / step, kp.y as f64 / step, kp.sigma as f64 / step)
}

fn wrap_angle(a: f64) -> f32 {
    let v = a.rem_euclid(std::f64::consts::TAU) as f32;
    if v >= TAU {
        0.0
    } else {
        v
    }
}

/// One copy of `kp` per dominant gradient orientation.
pub fn assign_orientations(gp: &GaussianPyramid, kp: &Keypoint) -> Result<Vec<Keypoint>, DropReason> {
    let level = &gp.octaves[kp.octave as usize].levels[kp.scale_index as usize];
    let (x, y, sigma) = octave_frame(gp, kp);
    let peaks = histogram_peaks(&orientation_histogram(level, x, y, sigma));
    if peaks.is_empty() {
        return Err(DropReason::EmptyGradient);
    }
    Ok(peaks
        .into_iter()
        .map(|angle| Keypoint {
            orientation: wrap_angle(angle),
            ..*kp
        })
        .collect())
}

pub fn compute_descriptor(gp: &GaussianPyramid, kp: &Keypoint) -> Result<Descriptor, DropReason> {
    let level = &gp.octaves[kp.octave as usize].levels[kp.scale_index as usize];
    let (x, y, sigma) = octave_frame(gp, kp);
    describe_patch(level, x, y, sigma, kp.orientation as f64).ok_or(DropReason::DegeneratePatch)
}

/// Full detection and description pipeline.
pub fn extract_features(img: &GrayImage, params: &PyramidParams) -> Result<FeatureSet, SiftError> {
    params.validate()?;
    octave_count(img.width(), img.height())?;
    let gp = build_gaussian_pyramid(img, params)?;
    let dp = build_dog_pyramid(&gp);
    let candidates = detect_extrema(&dp);

    let per_candidate: Vec<Vec<(Keypoint, Descriptor)>> = candidates
        .par_iter()
        .map(|&cand| {
            let Ok(loc) = localize_keypoint(&dp, cand, params) else {
                return Vec::new();
            };
            let kp = to_keypoint(&gp, &loc, params);
            let Ok(oriented) = assign_orientations(&gp, &kp) else {
                return Vec::new();
            };
            oriented
                .into_iter()
                .filter_map(|k| compute_descriptor(&gp, &k).ok().map(|d| (k, d)))
                .collect()
        })
        .collect();

    let (keypoints, descriptors) = per_candidate.into_iter().flatten().unzip();
    Ok(FeatureSet {
        keypoints,
        descriptors,
        source_dims: img.dims(),
    })
}
