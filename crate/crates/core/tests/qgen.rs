mod common;

use std::collections::BTreeSet;

use common::*;
use serde_json::Value;
use trajvqa::config::RunConfig;
use trajvqa::ground::Vocab;
use trajvqa::pipeline::process_trajectory;
use trajvqa::qgen::{Category, GeneratedItem, TrajItems};
use trajvqa::trajmodel::synthetic::SyntheticEpisode;

fn cfg() -> RunConfig {
    RunConfig { seed: SEED, ..RunConfig::default() }
}

fn pickplace_items(dir: &std::path::Path) -> (SyntheticEpisode, TrajItems) {
    let (ep, traj) = written("pickplace", dir, true);
    let out = process_trajectory(&traj, &cfg(), Vocab::builtin()).unwrap();
    (ep, out)
}

fn of(items: &[GeneratedItem], cat: Category) -> Vec<&GeneratedItem> {
    items.iter().filter(|g| g.item.category == cat).collect()
}

#[test]
fn every_applicable_category_yields_items_on_pickplace() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = pickplace_items(dir.path());
    let produced: BTreeSet<Category> = out.items.iter().map(|g| g.item.category).collect();
    assert_eq!(out.applicable, Category::ALL.iter().copied().collect::<BTreeSet<_>>());
    for c in &out.applicable {
        assert!(produced.contains(c), "no {c:?} items");
    }
}

#[test]
fn items_validate_with_unique_ids_and_matching_media() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = pickplace_items(dir.path());
    let ids: BTreeSet<&str> = out.items.iter().map(|g| g.item.id.as_str()).collect();
    assert_eq!(ids.len(), out.items.len());
    for g in &out.items {
        g.item.validate().unwrap();
        assert_eq!(g.item.traj_id, "pickplace");
        assert_eq!(g.media.len(), g.item.images.len());
        for ((path, _), img) in g.media.iter().zip(&g.item.images) {
            assert_eq!(path, img);
        }
    }
}

#[test]
fn generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (_, a) = pickplace_items(&dir.path().join("a"));
    let (_, b) = pickplace_items(&dir.path().join("b"));
    let strip = |t: &TrajItems| t.items.iter().map(|g| g.item.clone()).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn depth_answers_are_the_extreme_marked_point() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = pickplace_items(dir.path());
    let su = of(&out.items, Category::Su);
    assert!(!su.is_empty());
    for g in su {
        let m = &g.item.meta;
        let pts = m["points"].as_array().unwrap();
        assert_eq!(pts.len(), 5);
        let depth = |p: &Value| p["depth_m"].as_f64().unwrap();
        let pick = match m["variant"].as_str().unwrap() {
            "closest" => pts.iter().min_by(|a, b| depth(a).total_cmp(&depth(b))),
            "farthest" => pts.iter().max_by(|a, b| depth(a).total_cmp(&depth(b))),
            v => panic!("variant {v}"),
        }
        .unwrap();
        assert_eq!(g.item.grounded_answer(), pick["color"].as_str());
        let sep = m["separation_m"].as_f64().unwrap();
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                assert!((depth(a) - depth(b)).abs() >= sep);
            }
        }
    }
}

#[test]
fn arrow_answers_follow_the_projected_motion() {
    let dir = tempfile::tempdir().unwrap();
    let (ep, out) = pickplace_items(dir.path());
    let ad = of(&out.items, Category::Ad);
    assert!(!ad.is_empty());
    for g in ad {
        let m = &g.item.meta;
        let spec = ep.spec.cameras.iter().find(|c| c.name == m["camera"].as_str().unwrap()).unwrap();
        let cam = OracleCam::new(spec);
        let t = g.item.frame_indices[0];
        let t2 = m["target_frame"].as_u64().unwrap() as usize;
        let (u0, v0, _) = cam.project(ep.record.frames[t].ee_position());
        let (u1, v1, _) = cam.project(ep.record.frames[t2].ee_position());
        let want = (v1 - v0).atan2(u1 - u0).to_degrees().rem_euclid(360.0);
        let arrows = m["arrows"].as_array().unwrap();
        let correct = arrows.iter().find(|a| a["color"].as_str() == g.item.grounded_answer()).unwrap();
        let got = correct["angle_deg"].as_f64().unwrap();
        let diff = (got - want).rem_euclid(360.0).min((want - got).rem_euclid(360.0));
        assert!(diff < 1e-6, "{} vs {}", got, want);
        for a in arrows.iter().filter(|a| a != &correct) {
            let x = a["angle_deg"].as_f64().unwrap();
            let d = (x - want).rem_euclid(360.0).min((want - x).rem_euclid(360.0));
            assert!(d >= cfg().qgen.arrow_min_sep_deg - 1e-9, "distractor {x} too close to {want}");
        }
    }
}

#[test]
fn binary_items_never_offer_none_of_the_above() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = pickplace_items(dir.path());
    let nab = &trajvqa::qgen::templates().none_of_the_above;
    for g in out.items.iter().filter(|g| g.item.category.is_binary()) {
        assert_eq!(g.item.choices.len(), 4);
        assert!(!g.item.choices.contains(nab));
    }
}

#[test]
fn disabled_categories_are_not_generated() {
    let dir = tempfile::tempdir().unwrap();
    let (_, traj) = written("pickplace", dir.path(), true);
    let mut c = cfg();
    c.qgen.enabled = vec![Category::Rs, Category::Su];
    let out = process_trajectory(&traj, &c, Vocab::builtin()).unwrap();
    let got: BTreeSet<Category> = out.items.iter().map(|g| g.item.category).collect();
    assert_eq!(got, [Category::Rs, Category::Su].into_iter().collect());
}
