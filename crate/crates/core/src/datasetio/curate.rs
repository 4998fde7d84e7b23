//! Stratified downsampling toward a target weight table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::qgen::VQAItem;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumField {
    SceneTag,
    SkillVerb,
    Category,
}

/// Strata are keyed by the chosen fields joined with `|`, e.g.
/// `"office|pick"` for `[scene_tag, skill_verb]`. Strata absent from
/// `weights` are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurationTargets {
    pub fields: Vec<StratumField>,
    pub weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub caps: BTreeMap<String, usize>,
    #[serde(default)]
    pub default_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub supply: usize,
    pub selected: usize,
    pub target_weight: f64,
    pub achieved_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub input: usize,
    pub output: usize,
    pub strata: BTreeMap<String, StratumReport>,
}

fn field_value(item: &VQAItem, f: StratumField) -> String {
    let meta = |k: &str| item.meta.get(k).and_then(|v| v.as_str()).unwrap_or("unknown").to_string();
    match f {
        StratumField::SceneTag => meta("scene_tag"),
        StratumField::SkillVerb => meta("skill_verb"),
        StratumField::Category => item.category.as_str().to_string(),
    }
}

pub fn stratum_key(item: &VQAItem, fields: &[StratumField]) -> String {
    fields.iter().map(|f| field_value(item, *f)).collect::<Vec<_>>().join("|")
}

/// Selects a subset whose stratum sizes follow the normalized target
/// weights as closely as supply and caps allow. Returns selected indices in
/// input order.
///
/// The achievable total is `N = min_s(min(supply_s, cap_s) / w_s)`; stratum
/// `s` then keeps `floor(N * w_s)` items chosen by a seeded shuffle.
pub fn curate(
    items: &[VQAItem],
    targets: &CurationTargets,
    seed: u64,
) -> Result<(Vec<usize>, CurationReport), DatasetError> {
    if items.is_empty() {
        return Err(DatasetError::Invalid("nothing to curate".into()));
    }
    if targets.fields.is_empty() {
        return Err(DatasetError::Invalid("curation needs at least one stratum field".into()));
    }
    let total_w: f64 = targets.weights.values().filter(|w| **w > 0.0).sum();
    if !(total_w > 0.0) || targets.weights.values().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(DatasetError::Invalid("weights must be nonnegative with a positive sum".into()));
    }
    let weights: BTreeMap<&str, f64> =
        targets.weights.iter().filter(|(_, w)| **w > 0.0).map(|(k, w)| (k.as_str(), w / total_w)).collect();

    let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        members.entry(stratum_key(it, &targets.fields)).or_default().push(i);
    }
    let cap = |k: &str| targets.caps.get(k).copied().or(targets.default_cap).unwrap_or(usize::MAX);
    let avail = |k: &str| members.get(k).map_or(0, Vec::len).min(cap(k));
    let n_total = weights.iter().map(|(k, w)| avail(k) as f64 / w).fold(f64::INFINITY, f64::min);

    let mut selected = Vec::new();
    let mut strata = BTreeMap::new();
    for (k, w) in &weights {
        let n = avail(k).min((n_total * w + 1e-9).floor() as usize);
        let mut pool = members.get(*k).cloned().unwrap_or_default();
        let mut rng = RngStream::new(seed, "curate", k, 0);
        rng.shuffle(&mut pool);
        selected.extend_from_slice(&pool[..n]);
        strata.insert(
            k.to_string(),
            StratumReport {
                supply: members.get(*k).map_or(0, Vec::len),
                selected: n,
                target_weight: *w,
                achieved_weight: 0.0,
            },
        );
    }
    selected.sort_unstable();
    let out = selected.len();
    for r in strata.values_mut() {
        r.achieved_weight = if out == 0 { 0.0 } else { r.selected as f64 / out as f64 };
    }
    Ok((selected, CurationReport { input: items.len(), output: out, strata }))
}
