//! Eigenface baseline: PCA over vectorized faces and nearest-neighbour
//! identification in coefficient space.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::image::{clamp_unit, GrayImage};

/// Components whose eigenvalue falls below this carry no variance and are
/// ignored when ranking.
pub const DEGENERATE_EIGENVALUE: f64 = 1e-12;

/// Upper bound on the default number of retained components.
pub const DEFAULT_MAX_COMPONENTS: usize = 40;

#[derive(Debug, Error, PartialEq)]
pub enum EigenError {
    #[error("need at least 2 training images, got {0}")]
    TooFewImages(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("requested {k} components, valid range is 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("gallery is empty")]
    EmptyGallery,
}

/// `min(n - 1, 40)`, the default component count for `n` training faces.
pub fn default_k(n: usize) -> usize {
    n.saturating_sub(1).clamp(1, DEFAULT_MAX_COMPONENTS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenModel {
    pub width: usize,
    pub height: usize,
    pub mean: Vec<f64>,
    /// `k` orthonormal rows of length `width * height`.
    pub components: Vec<Vec<f64>>,
    /// Non-increasing, non-negative.
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenProjection {
    pub identity_id: String,
    pub coefficients: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
}

/// Eigenvectors are defined up to sign; make the largest-magnitude entry positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

impl EigenModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// True when some retained component captures no variance.
    pub fn is_degenerate(&self) -> bool {
        self.eigenvalues.iter().any(|&l| l < DEGENERATE_EIGENVALUE)
    }

    pub fn active_components(&self) -> Vec<bool> {
        self.eigenvalues
            .iter()
            .map(|&l| l >= DEGENERATE_EIGENVALUE)
            .collect()
    }

    pub fn project(&self, img: &GrayImage) -> Result<Vec<f64>, EigenError> {
        self.project_vector(img.pixels())
    }

    pub fn project_vector(&self, v: &[f64]) -> Result<Vec<f64>, EigenError> {
        if v.len() != self.dim() {
            return Err(EigenError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        let centered: Vec<f64> = v.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.components.iter().map(|c| dot(c, &centered)).collect())
    }

    /// Unclamped reconstruction `mean + components^T * coeffs`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<Vec<f64>, EigenError> {
        if coeffs.len() != self.k() {
            return Err(EigenError::DimensionMismatch {
                expected: self.k(),
                got: coeffs.len(),
            });
        }
        let mut out = self.mean.clone();
        for (c, comp) in coeffs.iter().zip(&self.components) {
            out.iter_mut().zip(comp).for_each(|(o, u)| *o += c * u);
        }
        Ok(out)
    }

    /// Reconstruction clamped to `[0, 1]` for display.
    pub fn reconstruct_image(&self, coeffs: &[f64]) -> Result<GrayImage, EigenError> {
        let v = self.reconstruct(coeffs)?;
        Ok(GrayImage::from_raw(
            self.width,
            self.height,
            v.into_iter().map(clamp_unit).collect(),
        ))
    }

    /// Nearest-neighbour ranking that skips zero-variance components.
    pub fn rank(
        &self,
        query: &[f64],
        gallery: &[EigenProjection],
    ) -> Result<Vec<(String, f64)>, EigenError> {
        let mask = self.active_components();
        nearest_face_masked(query, gallery, Some(&mask))
    }
}

/// PCA via the N x N Gram matrix of the mean-centred training vectors.
pub fn train(images: &[GrayImage], k: usize) -> Result<EigenModel, EigenError> {
    let n = images.len();
    if n < 2 {
        return Err(EigenError::TooFewImages(n));
    }
    let (width, height) = images[0].dims();
    let d = width * height;
    for img in images {
        if img.pixels().len() != d {
            return Err(EigenError::DimensionMismatch {
                expected: d,
                got: img.pixels().len(),
            });
        }
    }
    if k < 1 || k > n - 1 {
        return Err(EigenError::KOutOfRange { k, max: n - 1 });
    }

    let mut mean = vec![0.0; d];
    for img in images {
        mean.iter_mut().zip(img.pixels()).for_each(|(m, p)| *m += p);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = images
        .iter()
        .map(|img| img.pixels().iter().zip(&mean).map(|(p, m)| p - m).collect())
        .collect();

    let dof = (n - 1) as f64;
    let gram_rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| dot(&centered[i], &centered[j]) / dof).collect())
        .collect();
    let gram = DMatrix::from_fn(n, n, |i, j| {
        // symmetrize explicitly; the two triangles are computed identically anyway
        if i <= j {
            gram_rows[i][j]
        } else {
            gram_rows[j][i]
        }
    });
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut pending_degenerate = Vec::new();
    for &idx in order.iter().take(k) {
        let lambda = eig.eigenvalues[idx].max(0.0);
        eigenvalues.push(lambda);
        if lambda < DEGENERATE_EIGENVALUE {
            pending_degenerate.push(components.len());
            components.push(Vec::new());
            continue;
        }
        let v = eig.eigenvectors.column(idx);
        let mut u = vec![0.0; d];
        for (coef, x) in v.iter().zip(&centered) {
            u.iter_mut().zip(x).for_each(|(acc, xi)| *acc += coef * xi);
        }
        components.push(u);
    }

    // Re-orthonormalize the variance-carrying components (Gram-Schmidt, two
    // passes), then complete degenerate slots with canonical basis vectors.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (slot, comp) in components.iter_mut().enumerate() {
        if pending_degenerate.contains(&slot) {
            continue;
        }
        orthogonalize(comp, &basis);
        orthogonalize(comp, &basis);
        normalize(comp);
        fix_sign(comp);
        basis.push(comp.clone());
    }
    let mut next_axis = 0usize;
    for &slot in &pending_degenerate {
        loop {
            assert!(next_axis < d, "ran out of axes completing the eigenbasis");
            let mut e = vec![0.0; d];
            e[next_axis] = 1.0;
            next_axis += 1;
            orthogonalize(&mut e, &basis);
            orthogonalize(&mut e, &basis);
            if normalize(&mut e) > 0.5 {
                fix_sign(&mut e);
                basis.push(e.clone());
                components[slot] = e;
                break;
            }
        }
    }

    Ok(EigenModel {
        width,
        height,
        mean,
        components,
        eigenvalues,
    })
}

pub fn project(img: &GrayImage, model: &EigenModel) -> Result<Vec<f64>, EigenError> {
    model.project(img)
}

pub fn reconstruct(coeffs: &[f64], model: &EigenModel) -> Result<Vec<f64>, EigenError> {
    model.reconstruct(coeffs)
}

/// Gallery entries sorted by ascending Euclidean distance to `query`; ties
/// keep enrollment order.
pub fn nearest_face(
    query: &[f64],
    gallery: &[EigenProjection],
) -> Result<Vec<(String, f64)>, EigenError> {
    nearest_face_masked(query, gallery, None)
}

fn nearest_face_masked(
    query: &[f64],
    gallery: &[EigenProjection],
    mask: Option<&[bool]>,
) -> Result<Vec<(String, f64)>, EigenError> {
    if gallery.is_empty() {
        return Err(EigenError::EmptyGallery);
    }
    let mut scored = Vec::with_capacity(gallery.len());
    for entry in gallery {
        if entry.coefficients.len() != query.len() {
            return Err(EigenError::DimensionMismatch {
                expected: query.len(),
                got: entry.coefficients.len(),
            });
        }
        let d2: f64 = query
            .iter()
            .zip(&entry.coefficients)
            .enumerate()
            .filter(|(i, _)| mask.is_none_or(|m| m[*i]))
            .map(|(_, (a, b))| (a - b) * (a - b))
            .sum();
        scored.push((entry.identity_id.clone(), d2.sqrt()));
    }
    // stable sort keeps enrollment order on ties
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(scored)
}
