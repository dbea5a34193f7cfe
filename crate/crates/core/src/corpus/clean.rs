use std::sync::LazyLock;

use regex::Regex;

// Opening char must be a letter, '/', '!' or '?', so "a < b" survives.
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"</?[A-Za-z!?][^<>]*>").unwrap());

/// Strips markup tags and control characters and collapses whitespace runs
/// to single spaces. Idempotent.
///
/// Tags are replaced by a space so that adjacent words stay separated, and
/// tag removal runs to a fixpoint so nested fragments like `<<b>p>` cannot
/// leave a fresh tag behind.
pub fn clean_text(raw: &str) -> String {
    let mut text: String = raw
        .chars()
        .filter_map(|c| {
            if c.is_whitespace() {
                Some(' ')
            } else if c.is_control() {
                None
            } else {
                Some(c)
            }
        })
        .collect();

    loop {
        let replaced = TAG.replace_all(&text, " ");
        if replaced.len() == text.len() && replaced == text {
            break;
        }
        text = replaced.into_owned();
    }

    let mut out = String::with_capacity(text.len());
    for word in text.split(' ').filter(|w| !w.is_empty()) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn removes_tags_and_collapses_whitespace() {
        assert_eq!(clean_text("<p>Tere  maailm</p>"), "Tere maailm");
    }

    #[test]
    fn clean_input_is_unchanged() {
        assert_eq!(clean_text("abc"), "abc");
        assert_eq!(clean_text(""), "");
    }

    #[test]
    fn keeps_words_apart_across_tags() {
        assert_eq!(clean_text("üks<br/>kaks"), "üks kaks");
        assert_eq!(clean_text("a\u{0007}b\n\tc"), "ab c");
    }

    #[test]
    fn comparison_signs_are_not_tags() {
        assert_eq!(clean_text("3 < 4 and 5 > 2"), "3 < 4 and 5 > 2");
    }

    #[test]
    fn nested_fragments_reach_fixpoint() {
        let once = clean_text("<<b>p>x</p>");
        assert_eq!(clean_text(&once), once);
    }

    fn markup_soup() -> impl Strategy<Value = String> {
        let piece = prop_oneof![
            "[a-zA-ZõäöüÕÄÖÜ ]{0,8}",
            Just("<p>".to_string()),
            Just("</div>".to_string()),
            Just("<".to_string()),
            Just(">".to_string()),
            Just("<a href=\"x\">".to_string()),
            Just("\n\t".to_string()),
            Just("\u{0001}".to_string()),
            Just("<!-- c -->".to_string()),
        ];
        prop::collection::vec(piece, 0..24).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn idempotent_on_random_markup(raw in markup_soup()) {
            let once = clean_text(&raw);
            prop_assert_eq!(clean_text(&once), once.clone());
            prop_assert!(!once.contains("  "));
            prop_assert!(!once.chars().any(|c| c.is_control()));
        }

        #[test]
        fn idempotent_on_arbitrary_text(raw in any::<String>()) {
            let once = clean_text(&raw);
            prop_assert_eq!(clean_text(&once), once);
        }
    }
}
