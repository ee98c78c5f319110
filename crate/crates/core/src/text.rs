//! Sentence normalization shared by the corpus builder, the agents and the
//! baseline.

/// Lowercase, split on whitespace, and split every punctuation character
/// into its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if ch.is_ascii_punctuation() || (!ch.is_alphanumeric() && !ch.is_ascii()) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(ch.to_lowercase().collect());
        } else {
            current.extend(ch.to_lowercase());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Canonical single-space form of a passage; the identity used for
/// deduplication.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctuation_becomes_separate_tokens() {
        assert_eq!(
            tokenize("The dog is sleeping."),
            vec!["the", "dog", "is", "sleeping", "."]
        );
        assert_eq!(tokenize("a,b"), vec!["a", ",", "b"]);
    }

    #[test]
    fn normalize_collapses_whitespace_and_case() {
        assert_eq!(normalize("  A   white dog\t."), "a white dog .");
        assert_eq!(normalize("A "), "a");
        assert_eq!(normalize("   "), "");
    }
}
