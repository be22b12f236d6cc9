//! Prompt templates for the generalist and personalized labelers.
//!
//! The target snippet (and each shot) is inserted with trailing whitespace
//! trimmed; the template's closing period follows the target directly.

use sha2::{Digest, Sha256};

use crate::corpus::ReadabilityLabel;

const GENERALIST_HEAD: &str = "You are an expert code readability labeler.\n\
Your role is to assign a code readability label. The labels you can assign are: Unreadable, Neutral, and Readable.\n\
\n\
Now, assign the code readability label for the following snippet:\n";

const PERSONALIZED_HEAD: &str = "You are an expert and personal code readability labeler.\n\
Your role is to assign a code readability label based on the already known preferences of the developer. The labels you can assign are: Unreadable, Neutral, and Readable.\n\
\n\
Below you find examples of the already known developer preferences.\n\
\n";

const PERSONALIZED_TAIL: &str = "\n\nNow, assign the developer code readability label for the following one:\n";

const SHOT_LABEL: &str = "\nLabel: ";
const SHOT_SEPARATOR: &str = ";\n";

pub fn generalist_prompt(target: &str) -> String {
    format!("{GENERALIST_HEAD}{}.", target.trim_end())
}

/// Renders shots as `<source>\nLabel: <Word>` joined by `;\n`, in the order given.
pub fn personalized_prompt<'a>(shots: impl IntoIterator<Item = (&'a str, ReadabilityLabel)>, target: &str) -> String {
    let rendered: Vec<String> = shots
        .into_iter()
        .map(|(src, label)| format!("{}{SHOT_LABEL}{}", src.trim_end(), label.word()))
        .collect();
    format!(
        "{PERSONALIZED_HEAD}{}{PERSONALIZED_TAIL}{}.",
        rendered.join(SHOT_SEPARATOR),
        target.trim_end()
    )
}

/// SHA-256 (hex) of the exact prompt bytes.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Identifies the template pair; part of every LLM run fingerprint.
pub fn template_hash() -> String {
    prompt_hash(&format!(
        "{GENERALIST_HEAD}\u{0}{PERSONALIZED_HEAD}\u{0}{SHOT_LABEL}\u{0}{SHOT_SEPARATOR}\u{0}{PERSONALIZED_TAIL}"
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedShot {
    pub source: String,
    pub label: ReadabilityLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPrompt {
    /// Empty for generalist prompts.
    pub shots: Vec<ParsedShot>,
    pub target: String,
}

fn label_from_word(word: &str) -> Option<ReadabilityLabel> {
    ReadabilityLabel::ALL.into_iter().find(|l| l.word() == word)
}

/// Recovers the parts of a prompt produced by this module. Returns `None`
/// for text that does not follow either template.
pub fn parse_prompt(prompt: &str) -> Option<ParsedPrompt> {
    if let Some(rest) = prompt.strip_prefix(GENERALIST_HEAD) {
        return Some(ParsedPrompt {
            shots: Vec::new(),
            target: rest.strip_suffix('.')?.to_string(),
        });
    }
    let body = prompt.strip_prefix(PERSONALIZED_HEAD)?;
    let (shot_text, target) = body.rsplit_once(PERSONALIZED_TAIL)?;
    let target = target.strip_suffix('.')?.to_string();
    let mut shots = Vec::new();
    let mut rest = shot_text;
    while !rest.is_empty() {
        let at = rest.find(SHOT_LABEL)?;
        let source = &rest[..at];
        let after = &rest[at + SHOT_LABEL.len()..];
        let (word, next) = match after.find(SHOT_SEPARATOR) {
            Some(i) => (&after[..i], &after[i + SHOT_SEPARATOR.len()..]),
            None => (after, ""),
        };
        shots.push(ParsedShot {
            source: source.to_string(),
            label: label_from_word(word)?,
        });
        rest = next;
    }
    Some(ParsedPrompt { shots, target })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ReadabilityLabel::*;

    #[test]
    fn generalist_round_trip() {
        let p = generalist_prompt("int x = 1;\n");
        assert!(p.starts_with("You are an expert code readability labeler.\n"));
        assert!(p.ends_with("snippet:\nint x = 1;."));
        let parsed = parse_prompt(&p).unwrap();
        assert!(parsed.shots.is_empty());
        assert_eq!(parsed.target, "int x = 1;");
    }

    #[test]
    fn personalized_round_trip() {
        let shots = [
            ("a();\n", Readable),
            ("if (b) {\n  c();\n}", Unreadable),
            ("d;", Neutral),
        ];
        let p = personalized_prompt(shots, "e();");
        assert_eq!(p.matches("\nLabel: ").count(), 3);
        let parsed = parse_prompt(&p).unwrap();
        assert_eq!(parsed.target, "e();");
        let got: Vec<_> = parsed.shots.iter().map(|s| (s.source.as_str(), s.label)).collect();
        assert_eq!(
            got,
            vec![("a();", Readable), ("if (b) {\n  c();\n}", Unreadable), ("d;", Neutral)]
        );
        assert_eq!(prompt_hash(&p), prompt_hash(&personalized_prompt(shots, "e();")));
    }

    #[test]
    fn foreign_text_does_not_parse() {
        assert!(parse_prompt("hello").is_none());
    }
}
