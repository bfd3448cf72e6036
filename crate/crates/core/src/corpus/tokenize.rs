/// Lowercase, split on whitespace, and split every ASCII punctuation mark
/// except `_` into its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if ch.is_ascii_punctuation() && ch != '_' {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(ch.to_string());
        } else {
            cur.push(ch);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Single-token canonical form of an entity or KB value: tokens joined by `_`.
pub fn canonicalize(text: &str) -> String {
    tokenize(text).join("_")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("Where's the Starbucks?"),
            vec!["where", "'", "s", "the", "starbucks", "?"]
        );
        assert_eq!(tokenize("  2_miles  away "), vec!["2_miles", "away"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn canonical_forms() {
        assert_eq!(canonicalize("Stanford Express Care"), "stanford_express_care");
        assert_eq!(canonicalize("2_miles"), "2_miles");
        assert_eq!(canonicalize("7 pm."), "7_pm_.");
    }
}
