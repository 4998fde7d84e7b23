//! Prompt templates for answering and for verifier-based answer extraction.

use serde::{Deserialize, Serialize};

use crate::qgen::VQAItem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    CotAppendix,
    CotMaintext,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "zero_shot",
            PromptMode::CotAppendix => "cot_appendix",
            PromptMode::CotMaintext => "cot_maintext",
        }
    }
}

impl std::str::FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero_shot" => Ok(PromptMode::ZeroShot),
            "cot_appendix" => Ok(PromptMode::CotAppendix),
            "cot_maintext" => Ok(PromptMode::CotMaintext),
            _ => Err(format!("unknown prompt mode `{s}` (zero_shot|cot_appendix|cot_maintext)")),
        }
    }
}

pub const ZERO_SHOT_INSTRUCTIONS: &str =
    "Instructions: Answer the following multiple-choice question by selecting the correct option letter only.";
pub const ZERO_SHOT_HINT: &str =
    "Hint: Do not include any explanation\u{2014}your response should only contain one of the letters: A, B, C, D, or E.";
pub const COT_INSTRUCTIONS: &str = "Instructions: Answer the following multiple-choice question by reasoning step by step. Show your work for each step before concluding.";
pub const COT_HINT: &str =
    "Hint: After completing your reasoning, output only the final answer option letter (A, B, C, D, or E) at the end.";
pub const COT_SUFFIX: &str =
    "Reason step by step about the answer, and show your work, for each step. Only after that, proceed to the final answer.";

pub const VERIFIER_INSTRUCTIONS: &str =
    "Instructions: Please read the example below and extract the final answer from the model response.";
pub const VERIFIER_HINT: &str =
    "Hint: Your output should be a single letter (e.g., A, B, C, or D) indicating the correct option.";
pub const VERIFIER_EXAMPLE: &str = "Question: What fraction of the shape is blue?\nChoices: (A) 3/11 (B) 8/11 (C) 6/11 (D) 3/5\nModel response: The correct answer is (B) 8/11.\nExtracted answer: B";

fn letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

/// The question followed by one `"A. choice"` line per choice.
pub fn question_block(item: &VQAItem) -> String {
    let mut s = item.question.clone();
    for (i, c) in item.choices.iter().enumerate() {
        s.push('\n');
        s.push(letter(i));
        s.push_str(". ");
        s.push_str(c);
    }
    s
}

pub fn render_prompt(item: &VQAItem, mode: PromptMode) -> String {
    let q = question_block(item);
    match mode {
        PromptMode::ZeroShot => format!("{ZERO_SHOT_INSTRUCTIONS}\n\n{ZERO_SHOT_HINT}\n\n{q}"),
        PromptMode::CotAppendix => format!("{COT_INSTRUCTIONS}\n\n{COT_HINT}\n\n{q}"),
        PromptMode::CotMaintext => format!("{q}\n{COT_SUFFIX}"),
    }
}

/// Few-shot extraction prompt for the verifier model.
pub fn render_verifier_prompt(question: &str, choices: &[String], response: &str) -> String {
    let choices: Vec<String> = choices.iter().enumerate().map(|(i, c)| format!("({}) {c}", letter(i))).collect();
    format!(
        "{VERIFIER_INSTRUCTIONS}\n\n{VERIFIER_HINT}\n\n{VERIFIER_EXAMPLE}\n\nQuestion: {question}\nChoices: {}\nModel response: {response}\nExtracted answer:",
        choices.join(" ")
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phaseseg::PhaseLabel;
    use crate::qgen::Category;

    fn item() -> VQAItem {
        VQAItem {
            id: "x".into(),
            category: Category::Rs,
            question: "Is the robot's gripper open?".into(),
            choices: vec!["Yes".into(), "No".into(), "Cannot be determined".into(), "Partially open".into()],
            correct_index: 0,
            images: vec!["a.png".into()],
            traj_id: "t".into(),
            frame_indices: vec![0],
            phase: PhaseLabel::Stabilize,
            meta: Default::default(),
        }
    }

    #[test]
    fn zero_shot_layout() {
        let p = render_prompt(&item(), PromptMode::ZeroShot);
        assert!(p.contains("only contain one of the letters: A, B, C, D, or E."));
        assert!(p.ends_with("Is the robot's gripper open?\nA. Yes\nB. No\nC. Cannot be determined\nD. Partially open"));
        assert_eq!(p, render_prompt(&item(), PromptMode::ZeroShot));
    }

    #[test]
    fn maintext_cot_appends_sentence() {
        let p = render_prompt(&item(), PromptMode::CotMaintext);
        assert!(p.ends_with("\nReason step by step about the answer, and show your work, for each step. Only after that, proceed to the final answer."));
        assert!(render_prompt(&item(), PromptMode::CotAppendix).starts_with(COT_INSTRUCTIONS));
    }

    #[test]
    fn verifier_prompt_ends_with_cue() {
        let p = render_verifier_prompt("Q?", &["x".into(), "y".into()], "I think y");
        assert!(p.contains("Choices: (A) x (B) y\nModel response: I think y\nExtracted answer:"));
        assert!(p.contains("The correct answer is (B) 8/11."));
    }
}
