//! "Unaltered" thought comparison.
//!
//! Two thoughts are equivalent when they agree after NFC normalization,
//! collapsing every whitespace run to one space, trimming, and dropping
//! trailing punctuation. Equivalence is equality of that normal form, so it
//! is reflexive, symmetric and transitive.

use unicode_normalization::UnicodeNormalization;

fn is_trailing_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '。' | '，' | '、' | '！' | '？' | '；' | '：' | '…' | '·' | '¡' | '¿' | '»' | '«'
        )
}

pub fn normalize_thought(s: &str) -> String {
    let nfc: String = s.nfc().collect();
    let collapsed = nfc.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| is_trailing_punct(c) || c.is_whitespace())
        .to_string()
}

pub fn thoughts_equivalent(a: &str, b: &str) -> bool {
    normalize_thought(a) == normalize_thought(b)
}
