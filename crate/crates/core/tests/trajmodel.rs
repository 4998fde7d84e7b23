mod common;

use common::*;
use proptest::prelude::*;
use trajvqa::trajmodel::synthetic::{self, random_spec};
use trajvqa::trajmodel::ManifestError;
use trajvqa::trajmodel::{load_manifest, load_manifest_with, write_manifest};

#[test]
fn golden_pickplace_manifest_and_sidecar_regenerate_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let ep = episode("pickplace");
    let w = synthetic::write_episode_with(&ep, dir.path(), false).unwrap();
    assert_eq!(std::fs::read(&w.manifest).unwrap(), std::fs::read(fixtures().join("pickplace.json")).unwrap());
    assert_eq!(std::fs::read(&w.sidecar).unwrap(), std::fs::read(fixtures().join("pickplace.sidecar.json")).unwrap());
}

#[test]
fn golden_fixture_loads_with_120_frames_and_two_cameras() {
    let t = load_manifest_with(&fixtures().join("pickplace.json"), no_media()).unwrap();
    assert_eq!(t.len(), 120);
    assert_eq!(t.cameras.len(), 2);
    assert_eq!(t.id, "pickplace");
}

#[test]
fn golden_fixture_without_media_fails_the_media_check() {
    let err = load_manifest(&fixtures().join("pickplace.json")).unwrap_err();
    assert!(matches!(err, ManifestError::MissingMedia { .. }), "{err}");
    assert!(err.to_string().contains("pickplace"));
}

#[test]
fn rendered_episode_passes_full_validation() {
    let dir = tempfile::tempdir().unwrap();
    let (ep, t) = written("pickplace", dir.path(), true);
    assert_eq!(t.frames, ep.record.frames);
    assert!(dir.path().join("pickplace/ext1/0000.png").is_file());
    assert!(dir.path().join("pickplace/depth/ext1.pfm").is_file());
}

#[test]
fn repeated_timestamps_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixtures().join("pickplace.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["frames"][1]["time_s"] = v["frames"][0]["time_s"].clone();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, serde_json::to_string(&v).unwrap()).unwrap();
    let err = load_manifest_with(&p, no_media()).unwrap_err();
    assert!(err.to_string().contains("non-monotone timestamps"), "{err}");
}

#[test]
fn strict_mode_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixtures().join("pickplace.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["robot"] = serde_json::json!("franka");
    let p = dir.path().join("extra.json");
    std::fs::write(&p, serde_json::to_string(&v).unwrap()).unwrap();
    assert!(load_manifest_with(&p, no_media()).is_ok());
    let strict = trajvqa::trajmodel::LoadOptions { strict: true, skip_media_check: true };
    assert!(matches!(load_manifest_with(&p, strict), Err(ManifestError::UnknownKey { .. })));
}

#[test]
fn single_frame_manifest_loads() {
    let mut s = spec("pickplace");
    s.segments.truncate(1);
    s.segments[0].frames = 1;
    let ep = synthetic::synthesize(&s, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let w = synthetic::write_episode(&ep, dir.path()).unwrap();
    assert_eq!(load_manifest(&w.manifest).unwrap().len(), 1);
}

#[test]
fn missing_force_channel_means_absent_wrench() {
    let mut s = spec("pickplace");
    s.force_channel = false;
    let ep = synthetic::synthesize(&s, SEED).unwrap();
    assert!(ep.record.frames.iter().all(|f| f.wrench.is_none()));
    assert!(!ep.record.has_force());
}

#[test]
fn synthesis_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = synthetic::write_episode_with(&episode("twocycle"), &dir.path().join("a"), false).unwrap();
    let b = synthetic::write_episode_with(&episode("twocycle"), &dir.path().join("b"), false).unwrap();
    assert_eq!(std::fs::read(a.manifest).unwrap(), std::fs::read(b.manifest).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn manifest_round_trip_is_identity(seed in 0u64..10_000) {
        let ep = synthetic::synthesize(&random_spec(seed), seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        write_manifest(&ep.record, &p).unwrap();
        let back = load_manifest_with(&p, no_media()).unwrap();
        prop_assert_eq!(back.frames, ep.record.frames);
        prop_assert_eq!(back.cameras, ep.record.cameras);
        prop_assert_eq!(back.target_object, ep.record.target_object);
        prop_assert_eq!(back.success, ep.record.success);
    }
}
