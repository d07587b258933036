use linksteal_core::eval::Prediction;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictKind {
    Link,
    Unlink,
    Unparseable,
}

/// A parsed completion. The raw text is kept for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub raw_text: String,
}

impl Verdict {
    pub fn prediction(&self) -> Prediction {
        match self.kind {
            VerdictKind::Link => Prediction::Link,
            VerdictKind::Unlink => Prediction::Unlink,
            VerdictKind::Unparseable => Prediction::Unparseable,
        }
    }
}

/// Scans whitespace-separated tokens from the start, case-insensitively and
/// with surrounding punctuation stripped. The first standalone `yes` or `no`
/// decides.
pub fn parse_verdict(text: &str) -> Verdict {
    let kind = text
        .split_whitespace()
        .map(|tok| tok.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .find_map(|tok| match tok.as_str() {
            "yes" => Some(VerdictKind::Link),
            "no" => Some(VerdictKind::Unlink),
            _ => None,
        })
        .unwrap_or(VerdictKind::Unparseable);
    Verdict { kind, raw_text: text.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(parse_verdict("Yes").kind, VerdictKind::Link);
        assert_eq!(parse_verdict("no.").kind, VerdictKind::Unlink);
        let v = parse_verdict("I cannot determine this.");
        assert_eq!(v.kind, VerdictKind::Unparseable);
        assert_eq!(v.raw_text, "I cannot determine this.");
    }

    #[test]
    fn first_token_wins_and_substrings_do_not_count() {
        assert_eq!(parse_verdict("**No**, yes it is not").kind, VerdictKind::Unlink);
        assert_eq!(parse_verdict("Yesterday nobody knew. YES!").kind, VerdictKind::Link);
        assert_eq!(parse_verdict("").kind, VerdictKind::Unparseable);
    }
}
