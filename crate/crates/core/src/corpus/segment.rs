use serde::{Deserialize, Serialize};

use super::Article;

/// Sentences above this many characters are flagged as list-like.
pub const LONG_SENTENCE_CHARS: usize = 600;
/// Sentences with at least this many semicolons are flagged as list-like.
pub const LIST_SEMICOLONS: usize = 10;

pub const DEFAULT_ABBREVIATIONS: [&str; 5] = ["hr.", "pr.", "nt.", "jne.", "e."];

const TERMINATORS: [char; 4] = ['.', '!', '?', '…'];
const CLOSERS: [char; 8] = ['"', '\'', '”', '’', '»', ')', ']', '“'];
const OPENERS: [char; 7] = ['"', '\'', '“', '„', '«', '(', '['];

/// One sentence of an article body. `span` holds UTF-8 byte offsets into the
/// cleaned body, half-open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub article_id: String,
    pub index: usize,
    pub text: String,
    pub span: (usize, usize),
    /// Very long or list-like; kept, but excluded from annotation sampling.
    #[serde(default)]
    pub flagged: bool,
}

impl Sentence {
    /// Stable identifier `<article_id>:<index>`.
    pub fn id(&self) -> String {
        sentence_id(&self.article_id, self.index)
    }
}

pub fn sentence_id(article_id: &str, index: usize) -> String {
    format!("{article_id}:{index}")
}

/// Rule-based splitter: breaks after a run of `. ! ? …` (plus closing
/// quotes) when followed by whitespace and then an uppercase letter, an
/// opening quote or a digit. A period ending a listed abbreviation does not
/// break.
#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: Vec<String>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter::new(DEFAULT_ABBREVIATIONS)
    }
}

impl Segmenter {
    pub fn new<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Segmenter {
            abbreviations: abbreviations.into_iter().map(|a| a.as_ref().to_lowercase()).collect(),
        }
    }

    pub fn segment(&self, article: &Article) -> Vec<Sentence> {
        self.split(&article.body)
            .into_iter()
            .enumerate()
            .map(|(index, (start, end))| {
                let text = article.body[start..end].to_string();
                let flagged = is_list_like(&text);
                Sentence {
                    article_id: article.id.clone(),
                    index,
                    text,
                    span: (start, end),
                    flagged,
                }
            })
            .collect()
    }

    /// Byte spans of the sentences in `body`.
    pub fn split(&self, body: &str) -> Vec<(usize, usize)> {
        let chars: Vec<(usize, char)> = body.char_indices().collect();
        let mut spans = Vec::new();
        let mut start: Option<usize> = None;
        let mut i = 0;

        while i < chars.len() {
            let (pos, c) = chars[i];
            if start.is_none() {
                if c.is_whitespace() {
                    i += 1;
                    continue;
                }
                start = Some(pos);
            }
            if !TERMINATORS.contains(&c) {
                i += 1;
                continue;
            }

            // Extend over the terminator run and any closing quotes.
            let mut j = i + 1;
            while j < chars.len() && (TERMINATORS.contains(&chars[j].1) || CLOSERS.contains(&chars[j].1)) {
                j += 1;
            }
            let end = chars.get(j).map_or(body.len(), |&(p, _)| p);
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let breaks = k > j
                && k < chars.len()
                && starts_sentence(chars[k].1)
                && !(c == '.' && self.is_abbreviation(body, start.unwrap_or(0), pos));
            if breaks {
                spans.push((start.take().unwrap_or(0), end));
            }
            i = j;
        }

        if let Some(s) = start {
            let end = s + body[s..].trim_end().len();
            if end > s {
                spans.push((s, end));
            }
        }
        spans
    }

    /// Whether the word ending at the period at byte `dot` is a listed
    /// abbreviation.
    fn is_abbreviation(&self, body: &str, sentence_start: usize, dot: usize) -> bool {
        let before = &body[sentence_start..dot];
        let word_start = before.rfind(char::is_whitespace).map_or(0, |p| p + 1);
        let word = before[word_start..].trim_start_matches(|c| OPENERS.contains(&c));
        if word.is_empty() {
            return false;
        }
        let candidate = format!("{}.", word.to_lowercase());
        self.abbreviations.contains(&candidate)
    }
}

fn starts_sentence(c: char) -> bool {
    c.is_uppercase() || c.is_ascii_digit() || OPENERS.contains(&c) || c == '–' || c == '-'
}

fn is_list_like(text: &str) -> bool {
    text.chars().count() > LONG_SENTENCE_CHARS || text.matches(';').count() >= LIST_SEMICOLONS
}

/// Segments an article with the default abbreviation list.
pub fn segment_sentences(article: &Article) -> Vec<Sentence> {
    Segmenter::default().segment(article)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Publisher;
    use proptest::prelude::*;

    fn article(body: &str) -> Article {
        Article {
            id: "a1".into(),
            publisher: Publisher::new("mainstream_group"),
            periodical: None,
            published_at: "2019-03-03".into(),
            title: String::new(),
            body: body.into(),
            language: None,
        }
    }

    fn texts(body: &str) -> Vec<String> {
        segment_sentences(&article(body)).into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn splits_on_terminators() {
        assert_eq!(texts("A. B? C!"), vec!["A.", "B?", "C!"]);
    }

    #[test]
    fn no_terminator_is_one_sentence() {
        assert_eq!(texts("üks lause ilma punktita"), vec!["üks lause ilma punktita"]);
    }

    #[test]
    fn abbreviation_suppresses_split() {
        assert_eq!(texts("Hr. Tamm tuli. Ta läks."), vec!["Hr. Tamm tuli.", "Ta läks."]);
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(texts("Kell 5. mail saabus. Ja siis"), vec!["Kell 5. mail saabus.", "Ja siis"]);
    }

    #[test]
    fn closing_quotes_stay_with_sentence() {
        assert_eq!(
            texts("Ta ütles: „Tulge siia.” Nad tulid!"),
            vec!["Ta ütles: „Tulge siia.”", "Nad tulid!"]
        );
    }

    #[test]
    fn ellipsis_and_digits() {
        assert_eq!(texts("Oota… 70% on välismaalased."), vec!["Oota…", "70% on välismaalased."]);
    }

    #[test]
    fn empty_body_has_no_sentences() {
        assert!(texts("").is_empty());
        assert!(texts("   ").is_empty());
    }

    #[test]
    fn flags_list_like_sentences() {
        let long = "a".repeat(601);
        let s = segment_sentences(&article(&long));
        assert!(s[0].flagged);
        let listy = "x; ".repeat(10);
        assert!(segment_sentences(&article(listy.trim()))[0].flagged);
        assert!(!segment_sentences(&article("Lühike lause."))[0].flagged);
    }

    proptest! {
        #[test]
        fn spans_reconstruct_and_cover(body in "[A-Za-zõä0-9 .!?,;„”]{0,120}") {
            let a = article(&body);
            let first = segment_sentences(&a);
            let second = segment_sentences(&a);
            prop_assert_eq!(&first, &second);

            let mut cursor = 0;
            for (i, s) in first.iter().enumerate() {
                prop_assert_eq!(s.index, i);
                prop_assert!(s.span.0 >= cursor && s.span.0 < s.span.1);
                prop_assert_eq!(&body[s.span.0..s.span.1], s.text.as_str());
                prop_assert!(!s.text.trim().is_empty());
                prop_assert!(body[cursor..s.span.0].chars().all(char::is_whitespace));
                cursor = s.span.1;
            }
            prop_assert!(body[cursor..].chars().all(char::is_whitespace));
        }
    }
}
