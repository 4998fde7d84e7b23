//! Deterministic answer-letter extraction from free-form responses.

use std::sync::OnceLock;

use regex::Regex;

/// Explicit answer markers, strongest first. Within a tier the last match
/// wins, since reasoning often mentions options before concluding.
fn tiers() -> &'static [Regex] {
    static T: OnceLock<Vec<Regex>> = OnceLock::new();
    T.get_or_init(|| {
        [
            r"(?i)final\s+answer\s*(?:is|:|=)?\s*(?:option\s*)?[\*\(\[\{`'\x22]*\s*([A-E])\b",
            r"(?i)\b(?:answer|choice|option)\s*(?:is|:|=)\s*(?:option\s*)?[\*\(\[\{`'\x22]*\s*([A-E])\b",
            r"\\boxed\{\s*([A-E])\s*\}",
            r"\(([A-E])\)",
            r"(?i)\boption\s+([A-E])\b",
            r"(?m)^\s*[\*\s]*([A-E])\s*[.):]",
        ]
        .iter()
        .map(|p| Regex::new(p).expect("extraction pattern compiles"))
        .collect()
    })
}

fn valid(c: char, n_choices: usize) -> bool {
    ('A'..='E').contains(&c) && ((c as u8 - b'A') as usize) < n_choices.min(5)
}

/// Words after which a leading `A` is still an option letter ("A is
/// correct"), not the article.
const LETTER_PREDICATES: [&str; 9] = ["is", "was", "seems", "looks", "appears", "and", "or", "matches", "fits"];

/// Letters standing alone as tokens. An uppercase `A` that opens a sentence
/// and is followed by a lowercase word is read as the article and ignored.
fn standalone_letters(text: &str) -> Vec<char> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    for i in 0..chars.len() {
        let c = chars[i];
        if !('A'..='E').contains(&c) {
            continue;
        }
        let before = i.checked_sub(1).map(|j| chars[j]);
        let after = chars.get(i + 1).copied();
        if before.is_some_and(|b| b.is_alphanumeric() || b == '\'' || b == '-') {
            continue;
        }
        if after.is_some_and(|a| a.is_alphanumeric() || a == '\'' || a == '-') {
            continue;
        }
        if c == 'A' && after == Some(' ') && opens_sentence(&chars, i) {
            let word: String = chars[i + 2..].iter().take_while(|ch| ch.is_alphabetic()).collect();
            if word.starts_with(|ch: char| ch.is_lowercase()) && !LETTER_PREDICATES.contains(&word.as_str()) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

fn opens_sentence(chars: &[char], i: usize) -> bool {
    chars[..i].iter().rev().find(|c| !c.is_whitespace()).is_none_or(|c| matches!(c, '.' | '!' | '?' | ':' | ';'))
}

/// Stage-one extraction. Returns `None` when no marker is found or bare
/// letters disagree; a returned letter always indexes one of the
/// `n_choices` choices.
pub fn extract_letter(response: &str, n_choices: usize) -> Option<char> {
    let text = response.trim();
    if text.is_empty() {
        return None;
    }
    for re in tiers() {
        let last = re
            .captures_iter(text)
            .filter_map(|c| c.get(1).and_then(|m| m.as_str().chars().next()))
            .map(|c| c.to_ascii_uppercase())
            .filter(|c| valid(*c, n_choices))
            .last();
        if last.is_some() {
            return last;
        }
    }
    let bare: Vec<char> = standalone_letters(text).into_iter().filter(|c| valid(*c, n_choices)).collect();
    match bare.as_slice() {
        [] => None,
        [first, rest @ ..] if rest.iter().all(|c| c == first) => Some(*first),
        _ => None,
    }
}
