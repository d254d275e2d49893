//! C interface to the mugmatch face-identification engine.
//!
//! Every function returns an [`MmStatus`]; on failure a description is kept
//! per thread and can be copied out with [`mm_last_error_message`]. Handles
//! are opaque and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mugmatch::eigen::EigenError;
use mugmatch::eval::{identification_rate, EvalError};
use mugmatch::gallery::{GalleryError, GalleryIndex};
use mugmatch::image::{decode_image, to_grayscale, GrayImage, ImageError};
use mugmatch::matching::{identify, MatchConfig, MatchError};
use mugmatch::sift::{extract_features, FeatureSet, PyramidParams, SiftError, DESCRIPTOR_LEN};

/// Result code of every `mm_*` call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Decode = 4,
    DuplicateIdentity = 5,
    EmptyGallery = 6,
    StaleEigenModel = 7,
    Format = 8,
    ParamsMismatch = 9,
    OutOfRange = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmMethod {
    Sift = 0,
    Pca = 1,
}

/// One ranked gallery entry. `inliers` and `raw_matches` are set for SIFT
/// queries, `distance` for PCA queries.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmResult {
    pub gallery_index: usize,
    pub inliers: u32,
    pub raw_matches: u32,
    pub distance: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmKeypoint {
    pub x: f32,
    pub y: f32,
    pub sigma: f32,
    pub orientation: f32,
    pub response: f32,
    pub octave: u32,
}

/// Enrollment database handle.
pub struct MmGallery {
    inner: GalleryIndex,
}

/// Extracted keypoints and descriptors of one image.
pub struct MmFeatureSet {
    inner: FeatureSet,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(MmStatus, String);

impl Failure {
    fn new(status: MmStatus, msg: impl Into<String>) -> Self {
        Failure(status, msg.into())
    }
}

type FfiResult<T> = Result<T, Failure>;

impl From<ImageError> for Failure {
    fn from(e: ImageError) -> Self {
        let status = match e {
            ImageError::UnsupportedFormat | ImageError::CorruptFile(_) => MmStatus::Decode,
            _ => MmStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<SiftError> for Failure {
    fn from(e: SiftError) -> Self {
        Failure(MmStatus::InvalidArgument, e.to_string())
    }
}

impl From<MatchError> for Failure {
    fn from(e: MatchError) -> Self {
        let status = match e {
            MatchError::EmptyGallery => MmStatus::EmptyGallery,
            _ => MmStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn eigen_status(e: &EigenError) -> MmStatus {
    match e {
        EigenError::EmptyGallery => MmStatus::EmptyGallery,
        EigenError::KOutOfRange { .. } => MmStatus::OutOfRange,
        _ => MmStatus::InvalidArgument,
    }
}

impl From<EigenError> for Failure {
    fn from(e: EigenError) -> Self {
        Failure(eigen_status(&e), e.to_string())
    }
}

impl From<GalleryError> for Failure {
    fn from(e: GalleryError) -> Self {
        let status = match &e {
            GalleryError::DuplicateIdentity(_) => MmStatus::DuplicateIdentity,
            GalleryError::InvalidIdentity(_) | GalleryError::UnknownIdentity(_) => MmStatus::InvalidArgument,
            GalleryError::Io { .. } => MmStatus::Io,
            GalleryError::Format { .. } => MmStatus::Format,
            GalleryError::ParamsMismatch { .. } => MmStatus::ParamsMismatch,
            GalleryError::StaleEigenModel => MmStatus::StaleEigenModel,
            GalleryError::Sift(_) => MmStatus::InvalidArgument,
            GalleryError::Eigen(inner) => eigen_status(inner),
            GalleryError::Image(_) => MmStatus::Decode,
        };
        Failure(status, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let status = match e {
            EvalError::SpecOutOfRange(_) => MmStatus::OutOfRange,
            EvalError::StaleEigenModel => MmStatus::StaleEigenModel,
            _ => MmStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> MmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            MmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MmStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> FfiResult<()> {
    if p.is_null() {
        Err(Failure::new(MmStatus::NullPointer, format!("{name} is NULL")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(MmStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

unsafe fn gray_arg(pixels: *const f64, width: usize, height: usize) -> FfiResult<GrayImage> {
    non_null(pixels, "pixels")?;
    let len = width
        .checked_mul(height)
        .ok_or_else(|| Failure::new(MmStatus::InvalidArgument, "image size overflows"))?;
    let data = std::slice::from_raw_parts(pixels, len).to_vec();
    Ok(GrayImage::new(width, height, data)?)
}

fn read_gray(path: &str) -> FfiResult<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Failure::new(MmStatus::Io, format!("{path}: {e}")))?;
    Ok(to_grayscale(&decode_image(&bytes)?))
}

unsafe fn gallery_mut<'a>(g: *mut MmGallery) -> FfiResult<&'a mut GalleryIndex> {
    non_null(g, "gallery")?;
    Ok(&mut (*g).inner)
}

unsafe fn gallery_ref<'a>(g: *const MmGallery) -> FfiResult<&'a GalleryIndex> {
    non_null(g, "gallery")?;
    Ok(&(*g).inner)
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated) and returns the full message length plus one.
///
/// # Safety
/// `buf` must be NULL or point to `buf_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mm_last_error_message(buf: *mut c_char, buf_len: usize) -> usize {
    LAST_ERROR.with(|e| copy_str(&e.borrow(), buf, buf_len))
}

unsafe fn copy_str(s: &str, buf: *mut c_char, buf_len: usize) -> usize {
    if !buf.is_null() && buf_len > 0 {
        let n = s.len().min(buf_len - 1);
        ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), n);
        *buf.add(n) = 0;
    }
    s.len() + 1
}

/// Creates an empty gallery with default SIFT parameters and a 300x300
/// canonical face size.
///
/// # Safety
/// `out` must point to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mm_gallery_new(out: *mut *mut MmGallery) -> MmStatus {
    guard(|| {
        non_null(out, "out")?;
        let g = Box::new(MmGallery {
            inner: GalleryIndex::new(PyramidParams::default(), mugmatch::gallery::CANONICAL_SIZE),
        });
        *out = Box::into_raw(g);
        Ok(())
    })
}

/// # Safety
/// `dir` must be a NUL-terminated path and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mm_gallery_load(dir: *const c_char, out: *mut *mut MmGallery) -> MmStatus {
    guard(|| {
        non_null(out, "out")?;
        let dir = str_arg(dir, "dir")?;
        let inner = GalleryIndex::load(&PathBuf::from(dir))?;
        *out = Box::into_raw(Box::new(MmGallery { inner }));
        Ok(())
    })
}

/// # Safety
/// `gallery` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn mm_gallery_save(gallery: *const MmGallery, dir: *const c_char) -> MmStatus {
    guard(|| {
        let g = gallery_ref(gallery)?;
        g.save(&PathBuf::from(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// # Safety
/// `gallery` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mm_gallery_free(gallery: *mut MmGallery) {
    if !gallery.is_null() {
        drop(Box::from_raw(gallery));
    }
}

/// Number of enrolled identities; 0 for a NULL handle.
///
/// # Safety
/// `gallery` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mm_gallery_len(gallery: *const MmGallery) -> usize {
    if gallery.is_null() {
        0
    } else {
        (*gallery).inner.len()
    }
}

/// Copies the id of the identity at `index` into `buf`; `needed` receives
/// the id length plus one.
///
/// # Safety
/// `gallery` must be live, `buf` NULL or `buf_len` writable bytes, `needed`
/// NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn mm_gallery_identity_id(
    gallery: *const MmGallery,
    index: usize,
    buf: *mut c_char,
    buf_len: usize,
    needed: *mut usize,
) -> MmStatus {
    guard(|| {
        let g = gallery_ref(gallery)?;
        let r = g
            .records
            .get(index)
            .ok_or_else(|| Failure::new(MmStatus::OutOfRange, format!("index {index} >= {}", g.len())))?;
        let n = copy_str(&r.identity_id, buf, buf_len);
        if !needed.is_null() {
            *needed = n;
        }
        Ok(())
    })
}

/// Enrolls an image file. `label` may be NULL (defaults to the id).
///
/// # Safety
/// String arguments must be NUL-terminated; `gallery` live; `keypoints`
/// NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn mm_gallery_enroll_file(
    gallery: *mut MmGallery,
    identity_id: *const c_char,
    label: *const c_char,
    path: *const c_char,
    keypoints: *mut usize,
) -> MmStatus {
    guard(|| {
        let g = gallery_mut(gallery)?;
        let id = str_arg(identity_id, "identity_id")?;
        let label = if label.is_null() { id } else { str_arg(label, "label")? };
        let path = str_arg(path, "path")?;
        let img = read_gray(path)?;
        let n = g.enroll_gray(id, label, &img, Some(PathBuf::from(path)))?.feature_set.len();
        if !keypoints.is_null() {
            *keypoints = n;
        }
        Ok(())
    })
}

/// Enrolls a row-major grayscale raster with values in `[0, 1]`.
///
/// # Safety
/// `pixels` must hold `width * height` values; other pointers as for
/// [`mm_gallery_enroll_file`].
#[no_mangle]
pub unsafe extern "C" fn mm_gallery_enroll_gray(
    gallery: *mut MmGallery,
    identity_id: *const c_char,
    label: *const c_char,
    pixels: *const f64,
    width: usize,
    height: usize,
    keypoints: *mut usize,
) -> MmStatus {
    guard(|| {
        let g = gallery_mut(gallery)?;
        let id = str_arg(identity_id, "identity_id")?;
        let label = if label.is_null() { id } else { str_arg(label, "label")? };
        let img = gray_arg(pixels, width, height)?;
        let n = g.enroll_gray(id, label, &img, None)?.feature_set.len();
        if !keypoints.is_null() {
            *keypoints = n;
        }
        Ok(())
    })
}

/// Fits the eigenface model; `k = 0` selects `min(N - 1, 40)`.
///
/// # Safety
/// `gallery` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mm_gallery_train_eigen(gallery: *mut MmGallery, k: usize) -> MmStatus {
    guard(|| {
        let g = gallery_mut(gallery)?;
        g.train_eigen(if k == 0 { None } else { Some(k) })?;
        Ok(())
    })
}

unsafe fn query_impl(
    g: &GalleryIndex,
    method: MmMethod,
    img: &GrayImage,
    ratio: f64,
    results: *mut MmResult,
    capacity: usize,
    count: *mut usize,
) -> FfiResult<()> {
    non_null(count, "count")?;
    if capacity > 0 {
        non_null(results, "results")?;
    }
    if g.is_empty() {
        return Err(Failure::new(MmStatus::EmptyGallery, "gallery is empty"));
    }
    let face = g.preprocess_gray(img)?;
    let ranked: Vec<MmResult> = match method {
        MmMethod::Sift => {
            let config = MatchConfig {
                ratio: if ratio == 0.0 { mugmatch::matching::DEFAULT_RATIO } else { ratio },
                ..MatchConfig::default()
            };
            let fs = extract_features(&face, &g.params)?;
            identify(&fs, &g.feature_sets(), &config)?
                .into_iter()
                .map(|c| MmResult {
                    gallery_index: c.enrollment_index,
                    inliers: c.inlier_matches as u32,
                    raw_matches: c.raw_matches as u32,
                    distance: f64::NAN,
                })
                .collect()
        }
        MmMethod::Pca => {
            let model = g.eigen_model()?;
            model
                .rank(&model.project(&face)?, &g.eigen_projections()?)?
                .into_iter()
                .map(|(id, d)| MmResult {
                    gallery_index: g.position(&id).expect("ranked ids are enrolled"),
                    inliers: 0,
                    raw_matches: 0,
                    distance: d,
                })
                .collect()
        }
    };
    for (i, r) in ranked.iter().take(capacity).enumerate() {
        *results.add(i) = *r;
    }
    *count = ranked.len();
    Ok(())
}

/// Ranks every identity against a grayscale query. Up to `capacity` rows
/// are written to `results`; `count` receives the full gallery size.
/// `ratio = 0` selects the default ratio-test fraction (SIFT only).
///
/// # Safety
/// `pixels` must hold `width * height` values; `results` must have room for
/// `capacity` rows; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mm_query_gray(
    gallery: *const MmGallery,
    method: MmMethod,
    pixels: *const f64,
    width: usize,
    height: usize,
    ratio: f64,
    results: *mut MmResult,
    capacity: usize,
    count: *mut usize,
) -> MmStatus {
    guard(|| {
        let g = gallery_ref(gallery)?;
        let img = gray_arg(pixels, width, height)?;
        query_impl(g, method, &img, ratio, results, capacity, count)
    })
}

/// As [`mm_query_gray`] with the query read from an image file.
///
/// # Safety
/// `path` must be NUL-terminated; other pointers as for [`mm_query_gray`].
#[no_mangle]
pub unsafe extern "C" fn mm_query_file(
    gallery: *const MmGallery,
    method: MmMethod,
    path: *const c_char,
    ratio: f64,
    results: *mut MmResult,
    capacity: usize,
    count: *mut usize,
) -> MmStatus {
    guard(|| {
        let g = gallery_ref(gallery)?;
        let img = read_gray(str_arg(path, "path")?)?;
        query_impl(g, method, &img, ratio, results, capacity, count)
    })
}

/// Extracts SIFT features with default parameters.
///
/// # Safety
/// `pixels` must hold `width * height` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn mm_extract_features(
    pixels: *const f64,
    width: usize,
    height: usize,
    out: *mut *mut MmFeatureSet,
) -> MmStatus {
    guard(|| {
        non_null(out, "out")?;
        let img = gray_arg(pixels, width, height)?;
        let inner = extract_features(&img, &PyramidParams::default())?;
        *out = Box::into_raw(Box::new(MmFeatureSet { inner }));
        Ok(())
    })
}

/// # Safety
/// `features` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mm_features_len(features: *const MmFeatureSet) -> usize {
    if features.is_null() {
        0
    } else {
        (*features).inner.len()
    }
}

/// # Safety
/// `features` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mm_features_keypoint(
    features: *const MmFeatureSet,
    index: usize,
    out: *mut MmKeypoint,
) -> MmStatus {
    guard(|| {
        non_null(features, "features")?;
        non_null(out, "out")?;
        let fs = &(*features).inner;
        let k = fs
            .keypoints
            .get(index)
            .ok_or_else(|| Failure::new(MmStatus::OutOfRange, format!("index {index} >= {}", fs.len())))?;
        *out = MmKeypoint {
            x: k.x,
            y: k.y,
            sigma: k.sigma,
            orientation: k.orientation,
            response: k.response,
            octave: k.octave,
        };
        Ok(())
    })
}

/// Copies the 128 descriptor values of keypoint `index` into `out`.
///
/// # Safety
/// `features` must be live and `out` must have room for 128 floats.
#[no_mangle]
pub unsafe extern "C" fn mm_features_descriptor(features: *const MmFeatureSet, index: usize, out: *mut f32) -> MmStatus {
    guard(|| {
        non_null(features, "features")?;
        non_null(out, "out")?;
        let fs = &(*features).inner;
        let d = fs
            .descriptors
            .get(index)
            .ok_or_else(|| Failure::new(MmStatus::OutOfRange, format!("index {index} >= {}", fs.len())))?;
        ptr::copy_nonoverlapping(d.values().as_ptr(), out, DESCRIPTOR_LEN);
        Ok(())
    })
}

/// # Safety
/// `features` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mm_features_free(features: *mut MmFeatureSet) {
    if !features.is_null() {
        drop(Box::from_raw(features));
    }
}

/// Percentage of `true` entries in `outcomes`.
///
/// # Safety
/// `outcomes` must hold `len` booleans and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn mm_identification_rate(outcomes: *const bool, len: usize, out: *mut f64) -> MmStatus {
    guard(|| {
        non_null(out, "out")?;
        let slice = if len == 0 {
            &[][..]
        } else {
            non_null(outcomes, "outcomes")?;
            std::slice::from_raw_parts(outcomes, len)
        };
        *out = identification_rate(slice)?;
        Ok(())
    })
}
