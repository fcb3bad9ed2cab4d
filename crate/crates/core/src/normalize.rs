//! Greek text normalization.
//!
//! Text is NFC-composed, lowercased and stripped of the monotonic Greek
//! diacritics (tonos and dialytika). Stripping goes through an explicit
//! character table rather than Unicode decomposition so that the output is
//! identical on every platform.

use unicode_normalization::UnicodeNormalization;

/// Lowercase accented Greek letters and their bare equivalents.
const STRIP_TABLE: &[(char, char)] = &[
    ('\u{03AC}', 'α'), // ά
    ('\u{03AD}', 'ε'), // έ
    ('\u{03AE}', 'η'), // ή
    ('\u{03AF}', 'ι'), // ί
    ('\u{0390}', 'ι'), // ΐ
    ('\u{03CA}', 'ι'), // ϊ
    ('\u{03CC}', 'ο'), // ό
    ('\u{03CD}', 'υ'), // ύ
    ('\u{03B0}', 'υ'), // ΰ
    ('\u{03CB}', 'υ'), // ϋ
    ('\u{03CE}', 'ω'), // ώ
];

/// Combining marks removed when they follow a Greek letter.
const GREEK_COMBINING: &[char] = &[
    '\u{0300}', '\u{0301}', '\u{0308}', '\u{0313}', '\u{0314}', '\u{0342}', '\u{0344}', '\u{0345}',
];

/// Returns true for characters in the Greek and Greek Extended blocks.
pub fn is_greek(c: char) -> bool {
    matches!(c, '\u{0370}'..='\u{03FF}' | '\u{1F00}'..='\u{1FFF}')
}

/// Returns true for the 25 lowercase letters α…ω (including final ς).
pub fn is_greek_lower_letter(c: char) -> bool {
    matches!(c, 'α'..='ω')
}

fn strip_accent(c: char) -> char {
    STRIP_TABLE
        .iter()
        .find(|&&(accented, _)| accented == c)
        .map(|&(_, bare)| bare)
        .unwrap_or(c)
}

/// Normalize text the way the backbone encoder sees it: NFC, lowercase,
/// Greek accents and diaeresis removed. Final sigma is kept.
pub fn normalize(text: &str) -> String {
    let composed: String = text.nfc().collect();
    let lower = composed.to_lowercase();

    let mut out = String::with_capacity(lower.len());
    let mut after_greek = false;
    for c in lower.chars() {
        if after_greek && GREEK_COMBINING.contains(&c) {
            continue;
        }
        after_greek = is_greek(c);
        out.push(strip_accent(c));
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn strips_tonos() {
        assert_eq!(normalize("Ιταλία"), "ιταλια");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn mixed_text() {
        // Character-by-character oracle: lowercase each letter, then strip.
        let oracle: String = "Θεσσαλονίκη, 2020!"
            .chars()
            .map(|c| {
                let lower = c.to_lowercase().next().unwrap();
                match lower {
                    'ί' => 'ι',
                    other => other,
                }
            })
            .collect();
        assert_eq!(oracle, "θεσσαλονικη, 2020!");
        assert_eq!(normalize("Θεσσαλονίκη, 2020!"), oracle);
    }

    #[test]
    fn dialytika_and_final_sigma() {
        assert_eq!(normalize("ΐ ΰ ϊ ϋ Ϊ"), "ι υ ι υ ι");
        assert_eq!(normalize("ΑΘΗΝΑΣ"), "αθηνας");
        assert_eq!(normalize("πόλεις"), "πολεις");
    }

    #[test]
    fn decomposed_input() {
        assert_eq!(normalize("α\u{0301}"), "α");
        assert_eq!(normalize("ε\u{0342}"), "ε");
        // Combining marks after non-Greek text are left alone.
        assert_eq!(normalize("e\u{0301}"), "é");
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        let chars = prop::sample::select(
            "αβγδεζηθικλμνξοπρσςτυφχψωάέήίόύώϊϋΐΰΑΆΣΩΪabcXYZ019 ,.;!?-\u{0301}\u{0308}\u{0342}"
                .chars()
                .collect::<Vec<_>>(),
        );
        prop::collection::vec(chars, 0..40).prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #[test]
        fn idempotent(text in text_strategy()) {
            let once = normalize(&text);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn length_change_bounded_by_combining_marks(text in text_strategy()) {
            let marks = text.chars().filter(|c| GREEK_COMBINING.contains(c)).count();
            let before = text.chars().count() as isize;
            let after = normalize(&text).chars().count() as isize;
            prop_assert!((before - after).unsigned_abs() <= marks);
        }
    }
}
