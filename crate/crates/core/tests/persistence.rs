use std::fs;
use std::path::Path;

use mugmatch::desk::synthetic_face;
use mugmatch::gallery::*;
use mugmatch::sift::{Descriptor, FeatureSet, Keypoint, PyramidParams};
use proptest::prelude::*;

fn small_gallery() -> GalleryIndex {
    let mut g = GalleryIndex::default();
    for (i, id) in ["alice", "bob", "carol", "dave"].iter().enumerate() {
        g.enroll_gray(id, &format!("label {i}"), &synthetic_face(i as u64, 300), None)
            .unwrap();
    }
    g
}

fn descriptor_bits(fs: &FeatureSet) -> Vec<u32> {
    fs.descriptors.iter().flat_map(|d| d.values().map(f32::to_bits)).collect()
}

fn assert_same(a: &GalleryIndex, b: &GalleryIndex) {
    assert_eq!(a.len(), b.len());
    assert_eq!(a.params, b.params);
    assert_eq!(a.canonical_size, b.canonical_size);
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(ra.identity_id, rb.identity_id);
        assert_eq!(ra.label, rb.label);
        assert_eq!(ra.face, rb.face);
        assert_eq!(ra.feature_set.keypoints, rb.feature_set.keypoints);
        assert_eq!(descriptor_bits(&ra.feature_set), descriptor_bits(&rb.feature_set));
        assert_eq!(ra.eigen_coeffs, rb.eigen_coeffs);
    }
}

#[test]
fn round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = small_gallery();
    g.train_eigen(None).unwrap();
    g.save(dir.path()).unwrap();
    let back = GalleryIndex::load(dir.path()).unwrap();
    assert_same(&g, &back);
    assert_eq!(g.eigen_model().unwrap(), back.eigen_model().unwrap());

    // a second cycle writes byte-identical files
    let dir2 = tempfile::tempdir().unwrap();
    back.save(dir2.path()).unwrap();
    for rel in ["manifest.tsv", "gallery.params", "eigen.mmpc", "features/0002.mmft", "faces/0003.mmim"] {
        assert_eq!(fs::read(dir.path().join(rel)).unwrap(), fs::read(dir2.path().join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn enrollment_order_survives_and_stale_model_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = small_gallery();
    g.train_eigen(None).unwrap();
    g.save(dir.path()).unwrap();
    g.enroll_gray("erin", "", &synthetic_face(9, 300), None).unwrap();
    assert!(matches!(g.eigen_model(), Err(GalleryError::StaleEigenModel)));
    g.save(dir.path()).unwrap();
    assert!(!dir.path().join(EIGEN_FILE).exists());
    let back = GalleryIndex::load(dir.path()).unwrap();
    let ids: Vec<&str> = back.records.iter().map(|r| r.identity_id.as_str()).collect();
    assert_eq!(ids, ["alice", "bob", "carol", "dave", "erin"]);
    assert!(matches!(back.eigen_model(), Err(GalleryError::StaleEigenModel)));
}

fn corrupt_first_byte(path: &Path) {
    let mut bytes = fs::read(path).unwrap();
    bytes[0] ^= 0x20;
    fs::write(path, bytes).unwrap();
}

#[test]
fn corrupted_magic_is_a_format_error() {
    for rel in ["features/0001.mmft", "faces/0000.mmim", "eigen.mmpc"] {
        let dir = tempfile::tempdir().unwrap();
        let mut g = small_gallery();
        g.train_eigen(None).unwrap();
        g.save(dir.path()).unwrap();
        corrupt_first_byte(&dir.path().join(rel));
        match GalleryIndex::load(dir.path()) {
            Err(GalleryError::Format { path, .. }) => assert!(path.ends_with(rel), "{path:?}"),
            other => panic!("{rel}: expected a format error, got {other:?}"),
        }
    }

    let dir = tempfile::tempdir().unwrap();
    small_gallery().save(dir.path()).unwrap();
    let manifest = dir.path().join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest).unwrap().replace("v1", "v9");
    fs::write(&manifest, text).unwrap();
    assert!(matches!(GalleryIndex::load(dir.path()), Err(GalleryError::Format { .. })));
}

#[test]
fn changed_parameters_are_a_fingerprint_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    small_gallery().save(dir.path()).unwrap();
    let params = dir.path().join(PARAMS_FILE);
    let text = fs::read_to_string(&params)
        .unwrap()
        .replace("contrast_threshold=0.03", "contrast_threshold=0.04");
    fs::write(&params, text).unwrap();
    match GalleryIndex::load(dir.path()) {
        Err(GalleryError::ParamsMismatch { expected, found, .. }) => {
            assert_ne!(expected, found);
            let mut p = PyramidParams::default();
            assert_eq!(found, params_fingerprint(&p, CANONICAL_SIZE));
            p.contrast_threshold = 0.04;
            assert_eq!(expected, params_fingerprint(&p, CANONICAL_SIZE));
        }
        other => panic!("expected a fingerprint mismatch, got {other:?}"),
    }
}

#[test]
fn missing_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = GalleryIndex::load(&dir.path().join("nope")).unwrap_err();
    assert!(matches!(err, GalleryError::Io { .. }));
    assert!(err.to_string().contains("nope"));
}

#[test]
fn fingerprint_is_fnv1a_of_canonical_bytes() {
    // published FNV-1a 64-bit test vectors
    assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
    assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    let p = PyramidParams::default();
    assert_ne!(params_fingerprint(&p, (300, 300)), params_fingerprint(&p, (300, 301)));
}

/// Random feature sets. The pyramid level is not stored on disk but derived
/// from sigma and octave, so generated keypoints use the derived level.
fn feature_set() -> impl Strategy<Value = FeatureSet> {
    let kp = (0.0f32..300.0, 0.0f32..300.0, 0u32..5, 0.5f32..40.0, 0.0f32..std::f32::consts::TAU, -1.0f32..1.0).prop_map(
        |(x, y, octave, sigma, orientation, response)| Keypoint {
            x,
            y,
            octave,
            scale_index: PyramidParams::default().level_for(sigma, octave),
            sigma,
            orientation,
            response,
        },
    );
    let desc = proptest::collection::vec(any::<f32>(), 128).prop_map(|v| {
        let mut a = [0f32; 128];
        a.copy_from_slice(&v);
        Descriptor(a)
    });
    proptest::collection::vec((kp, desc), 0..20).prop_map(|pairs| {
        let (k, d) = pairs.into_iter().unzip();
        FeatureSet::new(k, d, CANONICAL_SIZE).unwrap()
    })
}

proptest! {
    #[test]
    fn feature_file_round_trips_every_bit(fs in feature_set(), fp in any::<u64>()) {
        let p = PyramidParams::default();
        let bytes = encode_feature_file(&fs, fp);
        let back = decode_feature_file(&bytes, fp, &p, CANONICAL_SIZE, Path::new("x.mmft")).unwrap();
        prop_assert_eq!(&back.keypoints, &fs.keypoints);
        prop_assert_eq!(descriptor_bits(&back), descriptor_bits(&fs));

        let other = decode_feature_file(&bytes, fp ^ 1, &p, CANONICAL_SIZE, Path::new("x.mmft"));
        let is_mismatch = matches!(other, Err(GalleryError::ParamsMismatch { .. }));
        prop_assert!(is_mismatch);
    }

    #[test]
    fn truncated_feature_files_are_rejected(fs in feature_set(), cut in 0usize..64) {
        let bytes = encode_feature_file(&fs, 7);
        let keep = bytes.len().saturating_sub(cut + 1);
        let r = decode_feature_file(&bytes[..keep], 7, &PyramidParams::default(), CANONICAL_SIZE, Path::new("t"));
        prop_assert!(r.is_err());
    }
}
