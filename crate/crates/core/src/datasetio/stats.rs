//! Dataset statistics: question and choice lengths, choice counts, answer
//! letter distribution and image resolutions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_jsonl, DatasetError};
use crate::qgen::VQAItem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub avg: f64,
    pub median: f64,
    pub min: u64,
    pub max: u64,
}

impl Summary {
    /// Exact integer sums keep the result independent of input order.
    pub fn of(values: &[u64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_unstable();
        let n = v.len();
        let sum: u128 = v.iter().map(|&x| x as u128).sum();
        let median = if n % 2 == 1 { v[n / 2] as f64 } else { (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0 };
        Some(Summary { avg: sum as f64 / n as f64, median, min: v[0], max: v[n - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionShare {
    pub resolution: String,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub samples: usize,
    pub question_length: Option<Summary>,
    pub choices_per_question: Option<Summary>,
    pub choice_length: Option<Summary>,
    pub total_choice_length: Option<Summary>,
    pub answer_distribution: BTreeMap<String, Share>,
    pub image_width: Option<Summary>,
    pub image_height: Option<Summary>,
    pub top_resolutions: Vec<ResolutionShare>,
    pub unique_resolutions: usize,
    /// Items whose first image could not be measured.
    pub unreadable_images: usize,
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

fn chars(s: &str) -> u64 {
    s.chars().count() as u64
}

/// Statistics over `items`; image sizes are read from the first image of
/// each item, resolved against `media_root` when given.
pub fn compute_stats(items: &[VQAItem], media_root: Option<&Path>, jobs: usize) -> StatsReport {
    let dims: Vec<Option<(u32, u32)>> = match media_root {
        Some(root) => crate::par::map(items, jobs, |it| {
            it.images.first().and_then(|p| image::image_dimensions(root.join(p)).ok())
        }),
        None => vec![None; items.len()],
    };
    let q: Vec<u64> = items.iter().map(|i| chars(&i.question)).collect();
    let n_choices: Vec<u64> = items.iter().map(|i| i.choices.len() as u64).collect();
    let per_choice: Vec<u64> = items.iter().flat_map(|i| i.choices.iter().map(|c| chars(c))).collect();
    let total: Vec<u64> = items.iter().map(|i| i.choices.iter().map(|c| chars(c)).sum()).collect();

    let mut letters: BTreeMap<String, usize> = ["A", "B", "C", "D", "E"].iter().map(|l| (l.to_string(), 0)).collect();
    for it in items {
        *letters.entry(it.correct_letter().to_string()).or_default() += 1;
    }
    let answer_distribution =
        letters.into_iter().map(|(l, c)| (l, Share { count: c, percent: pct(c, items.len()) })).collect();

    let measured: Vec<(u32, u32)> = dims.iter().flatten().copied().collect();
    let mut res_counts: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for d in &measured {
        *res_counts.entry(*d).or_default() += 1;
    }
    let mut ranked: Vec<((u32, u32), usize)> = res_counts.iter().map(|(k, v)| (*k, *v)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(b.0.cmp(&a.0)));
    let top_resolutions = ranked
        .iter()
        .take(5)
        .map(|((w, h), c)| ResolutionShare {
            resolution: format!("{w}x{h}"),
            count: *c,
            percent: pct(*c, measured.len()),
        })
        .collect();

    StatsReport {
        samples: items.len(),
        question_length: Summary::of(&q),
        choices_per_question: Summary::of(&n_choices),
        choice_length: Summary::of(&per_choice),
        total_choice_length: Summary::of(&total),
        answer_distribution,
        image_width: Summary::of(&measured.iter().map(|d| d.0 as u64).collect::<Vec<_>>()),
        image_height: Summary::of(&measured.iter().map(|d| d.1 as u64).collect::<Vec<_>>()),
        top_resolutions,
        unique_resolutions: res_counts.len(),
        unreadable_images: if media_root.is_some() { items.len() - measured.len() } else { 0 },
    }
}

/// Reads a JSONL file and computes statistics with media resolved next to it.
pub fn compute_stats_file(path: &Path, jobs: usize) -> Result<StatsReport, DatasetError> {
    let items = read_jsonl(path)?;
    let root = path.parent().unwrap_or(Path::new("."));
    Ok(compute_stats(&items, Some(root), jobs))
}

#[cfg(test)]
mod tests {
    use super::super::tests::item;
    use super::*;
    use crate::qgen::Category;

    #[test]
    fn mean_of_four_and_five_choices() {
        let items = vec![item("a", "t", 0, Category::Rs, 4, 0), item("b", "t", 1, Category::Au, 5, 4)];
        let r = compute_stats(&items, None, 1);
        let c = r.choices_per_question.unwrap();
        assert_eq!(c.avg, 4.5);
        assert_eq!(c.median, 4.5);
        assert_eq!((c.min, c.max), (4, 5));
        assert_eq!(r.answer_distribution["A"].count, 1);
        assert_eq!(r.answer_distribution["E"].percent, 50.0);
        assert_eq!(r.answer_distribution["C"].count, 0);
    }

    #[test]
    fn single_item_has_equal_extremes() {
        let r = compute_stats(&[item("a", "t", 0, Category::Au, 5, 2)], None, 1);
        for s in [r.question_length, r.choices_per_question, r.choice_length, r.total_choice_length] {
            let s = s.unwrap();
            assert_eq!(s.min, s.max);
        }
    }

    #[test]
    fn medians_of_even_counts_average_the_middle() {
        assert_eq!(Summary::of(&[1, 9, 3, 5]).unwrap().median, 4.0);
        assert_eq!(Summary::of(&[7]).unwrap().median, 7.0);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn order_invariant() {
        let mut items: Vec<VQAItem> = (0..20)
            .map(|i| item(&format!("i{i:03}-long-{}", "x".repeat(i)), "t", i, Category::Au, 4 + i % 2, i % 4))
            .collect();
        let a = compute_stats(&items, None, 1);
        items.reverse();
        assert_eq!(compute_stats(&items, None, 1), a);
    }

    #[test]
    fn resolutions_from_media() {
        let dir = tempfile::tempdir().unwrap();
        let mut items = Vec::new();
        for (i, (w, h)) in [(320u32, 256u32), (320, 256), (640, 360)].into_iter().enumerate() {
            let id = format!("m{i}");
            let img = image::RgbImage::new(w, h);
            std::fs::create_dir_all(dir.path().join("media")).unwrap();
            img.save(dir.path().join(format!("media/{id}.png"))).unwrap();
            items.push(item(&id, "t", i, Category::Au, 5, 0));
        }
        let r = compute_stats(&items, Some(dir.path()), 2);
        assert_eq!(r.unique_resolutions, 2);
        assert_eq!(r.top_resolutions[0].resolution, "320x256");
        assert_eq!(r.top_resolutions[0].count, 2);
        assert_eq!(r.image_width.unwrap().max, 640);
        assert_eq!(r.image_height.unwrap().median, 256.0);
    }
}
