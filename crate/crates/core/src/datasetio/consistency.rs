//! Cross-item contradiction checks between gripper-state answers and phase
//! descriptions grounded at the same frame.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::phaseseg::PhaseLabel;
use crate::qgen::{templates, Category, VQAItem};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contradiction {
    pub traj_id: String,
    pub frame: usize,
    pub items: Vec<String>,
    pub message: String,
}

/// Gripper openness implied by a phase description; `None` when the phase
/// does not pin it down.
pub fn implied_gripper_open(phase: PhaseLabel) -> Option<bool> {
    match phase {
        PhaseLabel::Approach | PhaseLabel::Stabilize | PhaseLabel::Reset => Some(true),
        PhaseLabel::Contact => Some(false),
        PhaseLabel::Release | PhaseLabel::Transition => None,
    }
}

fn answer(item: &VQAItem) -> &str {
    item.grounded_answer().unwrap_or_else(|| item.correct_text())
}

/// Compares, per (trajectory, frame), the gripper-open answer with the phase
/// described by the phase-understanding item and with a stable-grasp "Yes".
pub fn check_consistency(items: &[VQAItem]) -> Vec<Contradiction> {
    let mut by_frame: BTreeMap<(&str, usize), Vec<&VQAItem>> = BTreeMap::new();
    for it in items {
        if matches!(it.category, Category::Rs | Category::Au | Category::TsG) {
            if let Some(&f) = it.frame_indices.first() {
                by_frame.entry((it.traj_id.as_str(), f)).or_default().push(it);
            }
        }
    }
    let mut out = Vec::new();
    for ((traj, frame), group) in by_frame {
        let Some(rs) = group.iter().find(|i| i.category == Category::Rs) else {
            continue;
        };
        let open = match answer(rs) {
            "Yes" => true,
            "No" => false,
            _ => continue,
        };
        for other in group.iter().filter(|i| i.category != Category::Rs) {
            let implied = match other.category {
                Category::Au => templates().phase_of_description(answer(other)).and_then(implied_gripper_open),
                Category::TsG if answer(other) == "Yes" => Some(false),
                _ => None,
            };
            if let Some(expect) = implied {
                if expect != open {
                    out.push(Contradiction {
                        traj_id: traj.to_string(),
                        frame,
                        items: vec![rs.id.clone(), other.id.clone()],
                        message: format!("gripper open = {open} but {} implies {expect}", other.category),
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::tests::item;
    use super::*;
    use serde_json::json;

    fn with_answer(mut it: VQAItem, a: &str) -> VQAItem {
        it.meta.insert("answer".into(), json!(a));
        it
    }

    #[test]
    fn contact_with_open_gripper_is_flagged() {
        let rs = with_answer(item("r", "t", 5, Category::Rs, 4, 0), "Yes");
        let au = with_answer(item("a", "t", 5, Category::Au, 5, 0), templates().describe(PhaseLabel::Contact));
        let c = check_consistency(&[rs.clone(), au]);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].items, vec!["r".to_string(), "a".to_string()]);

        let ok = with_answer(item("a", "t", 5, Category::Au, 5, 0), templates().describe(PhaseLabel::Stabilize));
        assert!(check_consistency(&[rs.clone(), ok]).is_empty());
        let other_frame = with_answer(item("a", "t", 6, Category::Au, 5, 0), templates().describe(PhaseLabel::Contact));
        assert!(check_consistency(&[rs, other_frame]).is_empty());
    }

    #[test]
    fn stable_grasp_with_open_gripper_is_flagged() {
        let rs = with_answer(item("r", "t", 5, Category::Rs, 4, 0), "Yes");
        let g = with_answer(item("g", "t", 5, Category::TsG, 4, 0), "Yes");
        assert_eq!(check_consistency(&[rs, g]).len(), 1);
    }
}
