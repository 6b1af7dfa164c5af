//! Text normalization and tokenization.

use unicode_general_category::{get_general_category, GeneralCategory};

/// Repeated letters beyond this run length are collapsed.
pub const MAX_LETTER_RUN: usize = 2;

fn is_emoji(c: char) -> bool {
    let cp = c as u32;
    matches!(
        get_general_category(c),
        GeneralCategory::OtherSymbol | GeneralCategory::ModifierSymbol
    ) || (0x1F000..=0x1FAFF).contains(&cp)
        || (0x2600..=0x27BF).contains(&cp)
        // variation selectors and the zero-width joiner only ever glue emoji together
        || cp == 0xFE0E
        || cp == 0xFE0F
        || cp == 0x200D
}

fn collapse_letter_runs(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    let mut prev: Option<char> = None;
    let mut run = 0usize;
    for c in token.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        if c.is_alphabetic() && run > MAX_LETTER_RUN {
            continue;
        }
        out.push(c);
    }
    out
}

/// Normalizes a raw post.
///
/// Steps, in order: drop emoji, drop the standalone retweet marker `RT`,
/// drop `@`-mentions, collapse runs of more than two identical letters to
/// two, and collapse whitespace. Hashtags and URLs are kept. The function is
/// idempotent.
pub fn preprocess(raw: &str) -> String {
    let stripped: String = raw.chars().filter(|&c| !is_emoji(c)).collect();
    let mut out = String::with_capacity(stripped.len());
    for token in stripped.split_whitespace() {
        if token == "RT" || token.starts_with('@') {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&collapse_letter_runs(token));
    }
    out
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '#'
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Lowercases and splits normalized text into word and punctuation tokens.
///
/// Punctuation characters become their own tokens, except `#` (hashtags stay
/// whole) and apostrophes between two alphanumerics (`don't`).
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    for chunk in lower.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut word = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let inner_apostrophe = is_apostrophe(c)
                && i > 0
                && chars[i - 1].is_alphanumeric()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if is_word_char(c) || inner_apostrophe {
                word.push(c);
            } else {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(c.to_string());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn preprocess_tweet_example() {
        let raw = "#SlightlyAdjusted RT @CapoToHeaven Alls niggers wanna do is f***, tweet, and drink pineapple soda all day";
        assert_eq!(
            preprocess(raw),
            "#SlightlyAdjusted Alls niggers wanna do is f***, tweet, and drink pineapple soda all day"
        );
    }

    #[test]
    fn preprocess_whitespace_and_repeats() {
        assert_eq!(preprocess("hello   world"), "hello world");
        assert_eq!(preprocess("soooo cool 😀"), "soo cool");
        assert_eq!(preprocess("woooorld"), "woorld");
        assert_eq!(preprocess("  \t RT  "), "");
        assert_eq!(preprocess("see https://t.co/abc #tag"), "see https://t.co/abc #tag");
        assert_eq!(preprocess("RT: keep"), "RT: keep");
        assert_eq!(preprocess("born 1000000 years"), "born 1000000 years");
        assert_eq!(preprocess("nice ❤️ day ☀"), "nice day");
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Kill them!"), vec!["kill", "them", "!"]);
        assert_eq!(tokenize("#buildthatwall now"), vec!["#buildthatwall", "now"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("don't 'quote'"), vec!["don't", "'", "quote", "'"]);
        assert_eq!(tokenize("f***,"), vec!["f", "*", "*", "*", ","]);
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(s in "\\PC{0,40}") {
            let once = preprocess(&s);
            prop_assert_eq!(preprocess(&once), once.clone());
        }

        #[test]
        fn preprocess_idempotent_on_tweetish(s in "(RT|@[a-z]{1,4}|[a-c]{1,5}|!!+|😀| |\t){0,12}") {
            let once = preprocess(&s);
            prop_assert_eq!(preprocess(&once), once.clone());
        }
    }
}
