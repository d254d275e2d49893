//! Enrollment database and its on-disk layout.
//!
//! A saved gallery directory contains:
//!
//! - `manifest.tsv`: header `MUGMATCH-GALLERY v1`, then one
//!   `identity_id<TAB>label<TAB>feature file` line per record in enrollment
//!   order.
//! - `gallery.params`: canonical face size and SIFT parameters as
//!   `key=value` lines.
//! - `features/NNNN.mmft`: magic `MMFT`, version byte 1, 8-byte LE params
//!   fingerprint, LE u32 keypoint count, then per keypoint six f32
//!   (x, y, sigma, orientation, response, octave) and 128 f32 descriptor
//!   values.
//! - `faces/NNNN.mmim`: the preprocessed face (magic `MMIM`, version 1, LE
//!   u32 width and height, f64 pixels), used to retrain the eigenface model.
//! - `eigen.mmpc` (only when a current model exists): magic `MMPC`,
//!   version 1, LE u32 D and K, then mean (D), components (K x D) and
//!   eigenvalues (K) as f64.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::eigen::{self, EigenError, EigenModel, EigenProjection};
use crate::image::{resize_bilinear, to_grayscale, ColorImage, GrayImage, ImageError};
use crate::sift::{extract_features, Descriptor, FeatureSet, Keypoint, PyramidParams, SiftError, DESCRIPTOR_LEN};

pub const MANIFEST_HEADER: &str = "MUGMATCH-GALLERY v1";
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const PARAMS_FILE: &str = "gallery.params";
pub const EIGEN_FILE: &str = "eigen.mmpc";
pub const FEATURE_MAGIC: &[u8; 4] = b"MMFT";
pub const FACE_MAGIC: &[u8; 4] = b"MMIM";
pub const EIGEN_MAGIC: &[u8; 4] = b"MMPC";
pub const FORMAT_VERSION: u8 = 1;
pub const CANONICAL_SIZE: (usize, usize) = (300, 300);

#[derive(Debug, Error)]
pub enum GalleryError {
    #[error("identity '{0}' is already enrolled")]
    DuplicateIdentity(String),
    #[error("invalid identity id {0:?}: must be non-empty without tabs or newlines")]
    InvalidIdentity(String),
    #[error("unknown identity '{0}'")]
    UnknownIdentity(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed gallery file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: features were extracted with different parameters (fingerprint {found:016x}, expected {expected:016x})")]
    ParamsMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error("eigenface model is missing or out of date; retrain after enrolling")]
    StaleEigenModel,
    #[error(transparent)]
    Sift(#[from] SiftError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> GalleryError + '_ {
    move |source| GalleryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> GalleryError {
    GalleryError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Fingerprint of everything that determines a cached feature set.
pub fn params_fingerprint(params: &PyramidParams, canonical_size: (usize, usize)) -> u64 {
    let mut bytes = params.canonical_bytes();
    bytes.extend((canonical_size.0 as u64).to_le_bytes());
    bytes.extend((canonical_size.1 as u64).to_le_bytes());
    fnv1a64(&bytes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRecord {
    pub identity_id: String,
    pub label: String,
    pub image_path: Option<PathBuf>,
    /// Preprocessed face at the canonical size.
    pub face: GrayImage,
    pub feature_set: FeatureSet,
    pub eigen_coeffs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryIndex {
    pub records: Vec<IdentityRecord>,
    pub canonical_size: (usize, usize),
    pub params: PyramidParams,
    eigen: Option<EigenModel>,
}

impl Default for GalleryIndex {
    fn default() -> Self {
        Self::new(PyramidParams::default(), CANONICAL_SIZE)
    }
}

impl GalleryIndex {
    pub fn new(params: PyramidParams, canonical_size: (usize, usize)) -> Self {
        Self {
            records: Vec::new(),
            canonical_size,
            params,
            eigen: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn params_fingerprint(&self) -> u64 {
        params_fingerprint(&self.params, self.canonical_size)
    }

    pub fn position(&self, identity_id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.identity_id == identity_id)
    }

    pub fn get(&self, identity_id: &str) -> Option<&IdentityRecord> {
        self.position(identity_id).map(|i| &self.records[i])
    }

    /// Grayscale conversion followed by a bilinear resize to the canonical size.
    pub fn preprocess(&self, img: &ColorImage) -> Result<GrayImage, GalleryError> {
        self.preprocess_gray(&to_grayscale(img))
    }

    pub fn preprocess_gray(&self, img: &GrayImage) -> Result<GrayImage, GalleryError> {
        if img.dims() == self.canonical_size {
            return Ok(img.clone());
        }
        Ok(resize_bilinear(img, self.canonical_size.0, self.canonical_size.1)?)
    }

    pub fn enroll(
        &mut self,
        identity_id: &str,
        label: &str,
        img: &ColorImage,
        image_path: Option<PathBuf>,
    ) -> Result<&IdentityRecord, GalleryError> {
        self.check_new_id(identity_id, label)?;
        let face = self.preprocess(img)?;
        self.push_record(identity_id, label, face, image_path)
    }

    pub fn enroll_gray(
        &mut self,
        identity_id: &str,
        label: &str,
        img: &GrayImage,
        image_path: Option<PathBuf>,
    ) -> Result<&IdentityRecord, GalleryError> {
        self.check_new_id(identity_id, label)?;
        let face = self.preprocess_gray(img)?;
        self.push_record(identity_id, label, face, image_path)
    }

    fn check_new_id(&self, identity_id: &str, label: &str) -> Result<(), GalleryError> {
        let bad = |s: &str| s.contains(['\t', '\n', '\r']);
        if identity_id.is_empty() || bad(identity_id) {
            return Err(GalleryError::InvalidIdentity(identity_id.to_string()));
        }
        if bad(label) {
            return Err(GalleryError::InvalidIdentity(label.to_string()));
        }
        if self.position(identity_id).is_some() {
            return Err(GalleryError::DuplicateIdentity(identity_id.to_string()));
        }
        Ok(())
    }

    fn push_record(
        &mut self,
        identity_id: &str,
        label: &str,
        face: GrayImage,
        image_path: Option<PathBuf>,
    ) -> Result<&IdentityRecord, GalleryError> {
        let feature_set = extract_features(&face, &self.params)?;
        self.records.push(IdentityRecord {
            identity_id: identity_id.to_string(),
            label: label.to_string(),
            image_path,
            face,
            feature_set,
            eigen_coeffs: None,
        });
        // new identity invalidates the eigenspace
        self.eigen = None;
        self.records.iter_mut().for_each(|r| r.eigen_coeffs = None);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Trains the eigenface model on every enrolled face and caches each
    /// record's projection. `k = None` selects `min(N - 1, 40)`.
    pub fn train_eigen(&mut self, k: Option<usize>) -> Result<&EigenModel, GalleryError> {
        let faces: Vec<GrayImage> = self.records.iter().map(|r| r.face.clone()).collect();
        let k = k.unwrap_or_else(|| eigen::default_k(faces.len()));
        let model = eigen::train(&faces, k)?;
        self.install_eigen(model)?;
        Ok(self.eigen.as_ref().expect("installed"))
    }

    fn install_eigen(&mut self, model: EigenModel) -> Result<(), GalleryError> {
        for r in &mut self.records {
            r.eigen_coeffs = Some(model.project(&r.face)?);
        }
        self.eigen = Some(model);
        Ok(())
    }

    pub fn eigen_model(&self) -> Result<&EigenModel, GalleryError> {
        self.eigen.as_ref().ok_or(GalleryError::StaleEigenModel)
    }

    pub fn eigen_projections(&self) -> Result<Vec<EigenProjection>, GalleryError> {
        self.eigen_model()?;
        self.records
            .iter()
            .map(|r| {
                Ok(EigenProjection {
                    identity_id: r.identity_id.clone(),
                    coefficients: r.eigen_coeffs.clone().ok_or(GalleryError::StaleEigenModel)?,
                })
            })
            .collect()
    }

    pub fn feature_sets(&self) -> Vec<(&str, &FeatureSet)> {
        self.records
            .iter()
            .map(|r| (r.identity_id.as_str(), &r.feature_set))
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<(), GalleryError> {
        let features_dir = dir.join("features");
        let faces_dir = dir.join("faces");
        for d in [dir, &features_dir, &faces_dir] {
            fs::create_dir_all(d).map_err(io_err(d))?;
        }
        let fingerprint = self.params_fingerprint();
        let mut manifest = format!("{MANIFEST_HEADER}\n");
        for (i, r) in self.records.iter().enumerate() {
            let feature_rel = format!("features/{i:04}.mmft");
            let path = dir.join(&feature_rel);
            fs::write(&path, encode_feature_file(&r.feature_set, fingerprint)).map_err(io_err(&path))?;
            let path = faces_dir.join(format!("{i:04}.mmim"));
            fs::write(&path, encode_face_file(&r.face)).map_err(io_err(&path))?;
            manifest.push_str(&format!("{}\t{}\t{}\n", r.identity_id, r.label, feature_rel));
        }
        let path = dir.join(PARAMS_FILE);
        fs::write(&path, encode_params(&self.params, self.canonical_size)).map_err(io_err(&path))?;

        let eigen_path = dir.join(EIGEN_FILE);
        match &self.eigen {
            Some(model) => fs::write(&eigen_path, encode_eigen_file(model)).map_err(io_err(&eigen_path))?,
            None => match fs::remove_file(&eigen_path) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(&eigen_path)(e)),
            },
        }
        // manifest last: a directory with a manifest is complete
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, manifest).map_err(io_err(&path))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, GalleryError> {
        let params_path = dir.join(PARAMS_FILE);
        let text = fs::read_to_string(&params_path).map_err(io_err(&params_path))?;
        let (params, canonical_size) = decode_params(&text, &params_path)?;
        let mut gallery = GalleryIndex::new(params, canonical_size);
        let fingerprint = gallery.params_fingerprint();

        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let mut lines = manifest.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(format_err(&manifest_path, "missing MUGMATCH-GALLERY v1 header"));
        }
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, label, feature_rel] = fields[..] else {
                return Err(format_err(
                    &manifest_path,
                    format!("line {}: expected 3 tab-separated fields", n + 2),
                ));
            };
            if gallery.position(id).is_some() {
                return Err(GalleryError::DuplicateIdentity(id.to_string()));
            }
            let feature_path = dir.join(feature_rel);
            let bytes = fs::read(&feature_path).map_err(io_err(&feature_path))?;
            let feature_set = decode_feature_file(&bytes, fingerprint, &gallery.params, canonical_size, &feature_path)?;

            let face_path = face_path_for(dir, feature_rel);
            let bytes = fs::read(&face_path).map_err(io_err(&face_path))?;
            let face = decode_face_file(&bytes, &face_path)?;
            if face.dims() != canonical_size {
                return Err(format_err(&face_path, "face size differs from canonical size"));
            }
            gallery.records.push(IdentityRecord {
                identity_id: id.to_string(),
                label: label.to_string(),
                image_path: Some(face_path),
                face,
                feature_set,
                eigen_coeffs: None,
            });
        }

        let eigen_path = dir.join(EIGEN_FILE);
        match fs::read(&eigen_path) {
            Ok(bytes) => {
                let model = decode_eigen_file(&bytes, canonical_size, &eigen_path)?;
                gallery.install_eigen(model)?;
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_err(&eigen_path)(e)),
        }
        Ok(gallery)
    }
}

fn face_path_for(dir: &Path, feature_rel: &str) -> PathBuf {
    let stem = Path::new(feature_rel)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    dir.join("faces").join(format!("{stem}.mmim"))
}

pub fn encode_params(p: &PyramidParams, size: (usize, usize)) -> String {
    format!(
        "canonical_width={}\ncanonical_height={}\nscales_per_octave={}\nbase_sigma={}\ncontrast_threshold={}\nedge_ratio={}\nassumed_input_blur={}\nupsample_input={}\n",
        size.0,
        size.1,
        p.scales_per_octave,
        p.base_sigma,
        p.contrast_threshold,
        p.edge_ratio,
        p.assumed_input_blur,
        p.upsample_input
    )
}

/// Parses `key=value` lines as written to `gallery.params`; every key is optional.
pub fn decode_params(text: &str, path: &Path) -> Result<(PyramidParams, (usize, usize)), GalleryError> {
    let mut p = PyramidParams::default();
    let mut size = CANONICAL_SIZE;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format_err(path, format!("bad line {line:?}")))?;
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| format_err(path, format!("bad value for {key}")))
        };
        let int = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| format_err(path, format!("bad value for {key}")))
        };
        match key {
            "canonical_width" => size.0 = int(value)?,
            "canonical_height" => size.1 = int(value)?,
            "scales_per_octave" => p.scales_per_octave = int(value)?,
            "base_sigma" => p.base_sigma = num(value)?,
            "contrast_threshold" => p.contrast_threshold = num(value)?,
            "edge_ratio" => p.edge_ratio = num(value)?,
            "assumed_input_blur" => p.assumed_input_blur = num(value)?,
            "upsample_input" => {
                p.upsample_input = value
                    .parse()
                    .map_err(|_| format_err(path, "bad value for upsample_input"))?
            }
            other => return Err(format_err(path, format!("unknown key {other}"))),
        }
    }
    p.validate()?;
    Ok((p, size))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], GalleryError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format_err(self.path, "unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<(), GalleryError> {
        if self.take(4)? != magic {
            return Err(format_err(self.path, "bad magic bytes"));
        }
        let version = self.take(1)?[0];
        if version != FORMAT_VERSION {
            return Err(format_err(self.path, format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32, GalleryError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, GalleryError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32, GalleryError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, GalleryError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| format_err(self.path, "size overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn finish(&self) -> Result<(), GalleryError> {
        if self.pos != self.bytes.len() {
            return Err(format_err(self.path, "trailing bytes"));
        }
        Ok(())
    }
}

pub fn encode_feature_file(fs: &FeatureSet, fingerprint: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + fs.len() * (6 + DESCRIPTOR_LEN) * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend(fingerprint.to_le_bytes());
    out.extend((fs.len() as u32).to_le_bytes());
    for (kp, d) in fs.keypoints.iter().zip(&fs.descriptors) {
        for v in [kp.x, kp.y, kp.sigma, kp.orientation, kp.response, kp.octave as f32] {
            out.extend(v.to_le_bytes());
        }
        for v in d.values() {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

pub fn decode_feature_file(
    bytes: &[u8],
    expected_fingerprint: u64,
    params: &PyramidParams,
    source_dims: (usize, usize),
    path: &Path,
) -> Result<FeatureSet, GalleryError> {
    let mut rd = Reader { bytes, pos: 0, path };
    rd.header(FEATURE_MAGIC)?;
    let found = rd.u64()?;
    if found != expected_fingerprint {
        return Err(GalleryError::ParamsMismatch {
            path: path.to_path_buf(),
            expected: expected_fingerprint,
            found,
        });
    }
    let count = rd.u32()? as usize;
    let mut keypoints = Vec::with_capacity(count.min(1 << 16));
    let mut descriptors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let (x, y, sigma, orientation, response, octave) =
            (rd.f32()?, rd.f32()?, rd.f32()?, rd.f32()?, rd.f32()?, rd.f32()?);
        if !(octave >= 0.0 && octave.fract() == 0.0 && octave < 64.0) {
            return Err(format_err(path, format!("invalid octave {octave}")));
        }
        let octave = octave as u32;
        keypoints.push(Keypoint {
            x,
            y,
            octave,
            scale_index: params.level_for(sigma, octave),
            sigma,
            orientation,
            response,
        });
        let mut d = [0.0f32; DESCRIPTOR_LEN];
        for v in d.iter_mut() {
            *v = rd.f32()?;
        }
        descriptors.push(Descriptor(d));
    }
    rd.finish()?;
    Ok(FeatureSet {
        keypoints,
        descriptors,
        source_dims,
    })
}

fn encode_face_file(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + img.pixels().len() * 8);
    out.extend_from_slice(FACE_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend((img.width() as u32).to_le_bytes());
    out.extend((img.height() as u32).to_le_bytes());
    for p in img.pixels() {
        out.extend(p.to_le_bytes());
    }
    out
}

fn decode_face_file(bytes: &[u8], path: &Path) -> Result<GrayImage, GalleryError> {
    let mut rd = Reader { bytes, pos: 0, path };
    rd.header(FACE_MAGIC)?;
    let (w, h) = (rd.u32()? as usize, rd.u32()? as usize);
    let pixels = rd.f64s(w * h)?;
    rd.finish()?;
    GrayImage::new(w, h, pixels).map_err(|e| format_err(path, e.to_string()))
}

pub fn encode_eigen_file(model: &EigenModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(EIGEN_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend((model.dim() as u32).to_le_bytes());
    out.extend((model.k() as u32).to_le_bytes());
    let values = model
        .mean
        .iter()
        .chain(model.components.iter().flatten())
        .chain(&model.eigenvalues);
    for v in values {
        out.extend(v.to_le_bytes());
    }
    out
}

pub fn decode_eigen_file(bytes: &[u8], size: (usize, usize), path: &Path) -> Result<EigenModel, GalleryError> {
    let mut rd = Reader { bytes, pos: 0, path };
    rd.header(EIGEN_MAGIC)?;
    let d = rd.u32()? as usize;
    let k = rd.u32()? as usize;
    if d != size.0 * size.1 {
        return Err(format_err(path, format!("model dimension {d} does not match canonical size")));
    }
    let mean = rd.f64s(d)?;
    let flat = rd.f64s(k * d)?;
    let eigenvalues = rd.f64s(k)?;
    rd.finish()?;
    Ok(EigenModel {
        width: size.0,
        height: size.1,
        mean,
        components: flat.chunks(d.max(1)).map(<[f64]>::to_vec).take(k).collect(),
        eigenvalues,
    })
}
