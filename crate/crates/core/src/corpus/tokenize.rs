//! Word tokenizer shared by queries and documents.
//!
//! Rules: lowercase everything, drop URL-like chunks, keep runs of
//! alphanumeric characters, and keep an apostrophe or hyphen only when it sits
//! between two alphanumeric characters.

fn is_url(chunk: &str) -> bool {
    let lower = chunk.trim_start_matches(|c: char| !c.is_alphanumeric());
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-')
}

/// Splits raw text into normalized word tokens. Deterministic and idempotent:
/// re-tokenizing the space-joined output yields the same tokens.
pub fn tokenize(raw: &str) -> Vec<String> {
    let lowered = raw.to_lowercase();
    let mut tokens = Vec::new();
    for chunk in lowered.split_whitespace() {
        if is_url(chunk) {
            continue;
        }
        let chars: Vec<char> = chunk.chars().collect();
        let mut current = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if c.is_alphanumeric() {
                current.push(c);
            } else if is_joiner(c)
                && !current.is_empty()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
            {
                current.push(if c == '-' { '-' } else { '\'' });
            } else if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \t\n ").is_empty());
    }

    #[test]
    fn quotes_and_apostrophes() {
        assert_eq!(
            tokenize("Obama: \"I won't leave\""),
            vec!["obama", "i", "won't", "leave"]
        );
    }

    #[test]
    fn urls_are_removed() {
        assert_eq!(tokenize("Breaking https://t.co/x NEWS"), vec!["breaking", "news"]);
        assert_eq!(tokenize("see www.snopes.com now"), vec!["see", "now"]);
        assert_eq!(tokenize("(http://a.b/c)"), Vec::<String>::new());
    }

    #[test]
    fn hyphens_and_stray_punctuation() {
        assert_eq!(tokenize("well-known -- fact-check!"), vec!["well-known", "fact-check"]);
        assert_eq!(tokenize("'quoted' -x- y-"), vec!["quoted", "x", "y"]);
        assert_eq!(tokenize("U.S. #fake @user"), vec!["u", "s", "fake", "user"]);
        assert_eq!(tokenize("don\u{2019}t"), vec!["don't"]);
    }

    proptest! {
        #[test]
        fn idempotent(s in "[ -~\u{e0}-\u{ff}\u{2019}\u{3b1}-\u{3c9}]{0,80}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn tokens_are_clean(s in "\\PC{0,60}") {
            for t in tokenize(&s) {
                prop_assert!(!t.is_empty());
                prop_assert!(!t.chars().any(char::is_whitespace));
                prop_assert!(t.chars().next().unwrap().is_alphanumeric());
                prop_assert!(t.chars().last().unwrap().is_alphanumeric());
            }
        }
    }
}
