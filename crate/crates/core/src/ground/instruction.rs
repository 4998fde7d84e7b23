//! Rule-based instruction parsing into skill verb, target object and
//! location.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocab {
    /// Verb phrases, possibly several words ("pick up").
    pub verbs: Vec<String>,
    /// Words (or phrases) that start the location phrase.
    pub location_preps: Vec<String>,
    /// Object nouns used to fill trajectory-description distractors.
    pub objects: Vec<String>,
    /// Location nouns used to fill trajectory-description distractors.
    pub locations: Vec<String>,
}

const DEFAULT_VOCAB: &str = include_str!("../../templates/vocab.json");

impl Vocab {
    pub fn builtin() -> &'static Vocab {
        static V: OnceLock<Vocab> = OnceLock::new();
        V.get_or_init(|| serde_json::from_str(DEFAULT_VOCAB).expect("built-in vocab parses"))
    }

    pub fn load(path: &Path) -> Result<Vocab, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedInstruction {
    pub skill_verb: String,
    pub target_object: String,
    pub location: Option<String>,
    pub raw: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty instruction")]
    Empty,
    #[error("no known verb in `{0}`")]
    NoVerb(String),
    #[error("no object after verb in `{0}`")]
    NoObject(String),
    #[error("parse endpoint: {0}")]
    Endpoint(String),
}

fn tokenize(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'' && c != '-').to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Length in tokens of the longest phrase in `phrases` starting at `toks[i]`.
fn longest_match(toks: &[String], i: usize, phrases: &[Vec<String>]) -> Option<usize> {
    phrases
        .iter()
        .filter(|p| !p.is_empty() && toks.len() >= i + p.len() && toks[i..i + p.len()] == p[..])
        .map(Vec::len)
        .max()
}

/// Finds the first verb phrase (longest at that position); the object is the
/// words up to the first location preposition, the location everything after.
pub fn parse_instruction(instr: &str, vocab: &Vocab) -> Result<ParsedInstruction, ParseError> {
    let toks = tokenize(instr);
    if toks.is_empty() {
        return Err(ParseError::Empty);
    }
    let verbs: Vec<Vec<String>> = vocab.verbs.iter().map(|v| tokenize(v)).collect();
    let preps: Vec<Vec<String>> = vocab.location_preps.iter().map(|v| tokenize(v)).collect();

    let (vi, vlen) = (0..toks.len())
        .find_map(|i| longest_match(&toks, i, &verbs).map(|n| (i, n)))
        .ok_or_else(|| ParseError::NoVerb(instr.to_string()))?;
    let rest = &toks[vi + vlen..];
    let split = (0..rest.len()).find_map(|i| longest_match(rest, i, &preps).map(|n| (i, n)));
    let (obj, loc) = match split {
        Some((i, n)) => (&rest[..i], Some(&rest[i + n..])),
        None => (rest, None),
    };
    if obj.is_empty() {
        return Err(ParseError::NoObject(instr.to_string()));
    }
    Ok(ParsedInstruction {
        skill_verb: toks[vi..vi + vlen].join(" "),
        target_object: obj.join(" "),
        location: loc.filter(|l| !l.is_empty()).map(|l| l.join(" ")),
        raw: instr.to_string(),
    })
}

/// Asks a chat endpoint to split the instruction. The reply must contain a
/// JSON object with `skill_verb`, `target_object` and `location`.
pub fn parse_instruction_endpoint(
    instr: &str,
    client: &crate::evalharness::ChatClient,
) -> Result<ParsedInstruction, ParseError> {
    if instr.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let prompt = format!(
        "Split the robot instruction into a JSON object with keys \"skill_verb\", \"target_object\" and \"location\" (null when absent). Reply with the JSON object only.\nInstruction: {instr}"
    );
    let part = crate::evalharness::Part::Text(prompt);
    let reply = client.chat(&[part], 0.0, 256).map_err(|e| ParseError::Endpoint(e.to_string()))?;
    parse_endpoint_reply(instr, &reply)
}

/// Extracts the fields from the first `{...}` span of an endpoint reply.
pub fn parse_endpoint_reply(instr: &str, reply: &str) -> Result<ParsedInstruction, ParseError> {
    #[derive(Deserialize)]
    struct Fields {
        skill_verb: String,
        target_object: String,
        #[serde(default)]
        location: Option<String>,
    }
    let (start, end) = match (reply.find('{'), reply.rfind('}')) {
        (Some(a), Some(b)) if a < b => (a, b),
        _ => return Err(ParseError::Endpoint(format!("no JSON object in reply `{reply}`"))),
    };
    let f: Fields = serde_json::from_str(&reply[start..=end]).map_err(|e| ParseError::Endpoint(e.to_string()))?;
    if f.skill_verb.trim().is_empty() {
        return Err(ParseError::NoVerb(instr.to_string()));
    }
    if f.target_object.trim().is_empty() {
        return Err(ParseError::NoObject(instr.to_string()));
    }
    Ok(ParsedInstruction {
        skill_verb: f.skill_verb.trim().to_lowercase(),
        target_object: f.target_object.trim().to_string(),
        location: f.location.map(|l| l.trim().to_string()).filter(|l| !l.is_empty()),
        raw: instr.to_string(),
    })
}

/// Object phrase with a leading article removed ("the box" → "box").
pub fn bare_noun(phrase: &str) -> &str {
    for art in ["the ", "a ", "an "] {
        if let Some(rest) = phrase.strip_prefix(art) {
            return rest;
        }
    }
    phrase
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Result<ParsedInstruction, ParseError> {
        parse_instruction(s, Vocab::builtin())
    }

    #[test]
    fn examples() {
        let r = p("put the yellow and black object in the box").unwrap();
        assert_eq!(r.skill_verb, "put");
        assert_eq!(r.target_object, "the yellow and black object");
        assert_eq!(r.location.as_deref(), Some("the box"));

        let r = p("open the container lid").unwrap();
        assert_eq!((r.skill_verb.as_str(), r.target_object.as_str(), r.location), ("open", "the container lid", None));

        assert_eq!(p("xyzzy"), Err(ParseError::NoVerb("xyzzy".into())));
        assert_eq!(p("   "), Err(ParseError::Empty));
    }

    #[test]
    fn longest_verb_wins() {
        let r = p("Pick up the red cup from the table.").unwrap();
        assert_eq!(r.skill_verb, "pick up");
        assert_eq!(r.target_object, "the red cup");
        assert_eq!(r.location.as_deref(), Some("the table"));
        let r = p("take the marker out of the drawer").unwrap();
        assert_eq!(r.location.as_deref(), Some("the drawer"));
        assert_eq!(r.raw, "take the marker out of the drawer");
    }

    #[test]
    fn verb_without_object_fails() {
        assert!(matches!(p("put in the box"), Err(ParseError::NoObject(_))));
    }

    #[test]
    fn endpoint_reply_parsing() {
        let r = parse_endpoint_reply(
            "put the cup in the sink",
            "Sure: {\"skill_verb\": \"Put\", \"target_object\": \"the cup\", \"location\": \"the sink\"}",
        )
        .unwrap();
        assert_eq!((r.skill_verb.as_str(), r.target_object.as_str()), ("put", "the cup"));
        assert_eq!(r.location.as_deref(), Some("the sink"));
        assert!(matches!(parse_endpoint_reply("x", "no json"), Err(ParseError::Endpoint(_))));
        assert!(matches!(
            parse_endpoint_reply("x", "{\"skill_verb\": \"\", \"target_object\": \"a\"}"),
            Err(ParseError::NoVerb(_))
        ));
    }

    #[test]
    fn articles_strip() {
        assert_eq!(bare_noun("the box"), "box");
        assert_eq!(bare_noun("box"), "box");
    }
}
