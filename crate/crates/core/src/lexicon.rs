//! Keyword lexicon: eight groups of regular-expression fragments with
//! optional negative filters, used to pick out topic-relevant sentences.

use std::fmt;
use std::str::FromStr;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;

/// The shipped default lexicon file.
pub const DEFAULT_LEXICON: &str = include_str!("../lexicon/default.lexicon");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupName {
    Migration,
    Refugees,
    ForeignWorkers,
    ForeignStudents,
    Noncitizens,
    RadrightLiberalOpposition,
    Race,
    Ethnicity,
}

impl GroupName {
    pub const ALL: [GroupName; 8] = [
        GroupName::Migration,
        GroupName::Refugees,
        GroupName::ForeignWorkers,
        GroupName::ForeignStudents,
        GroupName::Noncitizens,
        GroupName::RadrightLiberalOpposition,
        GroupName::Race,
        GroupName::Ethnicity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupName::Migration => "migration",
            GroupName::Refugees => "refugees",
            GroupName::ForeignWorkers => "foreign_workers",
            GroupName::ForeignStudents => "foreign_students",
            GroupName::Noncitizens => "noncitizens",
            GroupName::RadrightLiberalOpposition => "radright_liberal_opposition",
            GroupName::Race => "race",
            GroupName::Ethnicity => "ethnicity",
        }
    }
}

impl fmt::Display for GroupName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroupName {
    type Err = LexiconError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GroupName::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| LexiconError::UnknownGroup(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexiconError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown keyword group {0:?}")]
    UnknownGroup(String),
    #[error("keyword group {0} defined twice")]
    DuplicateGroup(GroupName),
    #[error("keyword group {0} missing from lexicon")]
    MissingGroup(GroupName),
    #[error("keyword group {0} has no positive patterns")]
    EmptyGroup(GroupName),
    #[error("group {group}, {list} pattern {index} ({pattern:?}) does not compile: {message}")]
    Pattern {
        group: GroupName,
        list: &'static str,
        index: usize,
        pattern: String,
        message: String,
    },
}

/// Uncompiled group as read from a lexicon file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordGroup {
    pub name: GroupName,
    pub positive: Vec<String>,
    #[serde(default)]
    pub negative: Vec<String>,
}

/// One positive-pattern match inside a sentence (byte offsets).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternMatch {
    pub pattern_index: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupHit {
    pub sentence_id: String,
    pub group: GroupName,
    pub matches: Vec<PatternMatch>,
}

#[derive(Debug, Clone)]
struct CompiledGroup {
    name: GroupName,
    positive: Vec<Regex>,
    negative: Vec<Regex>,
}

/// Compiled, immutable lexicon. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct Lexicon {
    groups: Vec<CompiledGroup>,
    source: Vec<KeywordGroup>,
}

/// Parses the sectioned lexicon format:
///
/// ```text
/// [group:migration]
/// positive=
/// migran
/// negative=
/// lind
/// ```
///
/// A value may also follow `positive=` / `negative=` on the same line.
/// Lines starting with `#` are comments.
pub fn parse_lexicon(text: &str) -> Result<Vec<KeywordGroup>, LexiconError> {
    enum List {
        None,
        Positive,
        Negative,
    }
    let mut groups: Vec<KeywordGroup> = Vec::new();
    let mut list = List::None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = header.strip_prefix("group:").ok_or_else(|| LexiconError::Syntax {
                line: line_no,
                message: format!("expected [group:<name>], found [{header}]"),
            })?;
            let name: GroupName = name.trim().parse()?;
            if groups.iter().any(|g| g.name == name) {
                return Err(LexiconError::DuplicateGroup(name));
            }
            groups.push(KeywordGroup {
                name,
                positive: Vec::new(),
                negative: Vec::new(),
            });
            list = List::None;
            continue;
        }
        let Some(group) = groups.last_mut() else {
            return Err(LexiconError::Syntax {
                line: line_no,
                message: "pattern outside of a [group:...] section".into(),
            });
        };
        let value = if let Some(rest) = line.strip_prefix("positive=") {
            list = List::Positive;
            rest.trim()
        } else if let Some(rest) = line.strip_prefix("negative=") {
            list = List::Negative;
            rest.trim()
        } else {
            line
        };
        if value.is_empty() {
            continue;
        }
        match list {
            List::Positive => group.positive.push(value.to_string()),
            List::Negative => group.negative.push(value.to_string()),
            List::None => {
                return Err(LexiconError::Syntax {
                    line: line_no,
                    message: "pattern before positive= or negative=".into(),
                })
            }
        }
    }
    Ok(groups)
}

impl Lexicon {
    /// The shipped eight-group lexicon.
    pub fn default_lexicon() -> Lexicon {
        Lexicon::from_text(DEFAULT_LEXICON).expect("shipped lexicon compiles")
    }

    pub fn from_text(text: &str) -> Result<Lexicon, LexiconError> {
        Lexicon::compile(parse_lexicon(text)?)
    }

    /// Compiles every pattern case-insensitively with Unicode classes.
    /// All eight groups must be present; they are kept in canonical order.
    pub fn compile(mut groups: Vec<KeywordGroup>) -> Result<Lexicon, LexiconError> {
        for name in GroupName::ALL {
            match groups.iter().filter(|g| g.name == name).count() {
                0 => return Err(LexiconError::MissingGroup(name)),
                1 => {}
                _ => return Err(LexiconError::DuplicateGroup(name)),
            }
        }
        groups.sort_by_key(|g| g.name);

        let mut compiled = Vec::with_capacity(groups.len());
        for group in &groups {
            if group.positive.is_empty() {
                return Err(LexiconError::EmptyGroup(group.name));
            }
            compiled.push(CompiledGroup {
                name: group.name,
                positive: compile_list(group.name, "positive", &group.positive)?,
                negative: compile_list(group.name, "negative", &group.negative)?,
            });
        }
        Ok(Lexicon {
            groups: compiled,
            source: groups,
        })
    }

    pub fn groups(&self) -> &[KeywordGroup] {
        &self.source
    }

    /// Group matches in raw text, in canonical group order.
    ///
    /// A group hits iff at least one positive pattern matches and none of
    /// its negative patterns matches anywhere in the text.
    pub fn match_text(&self, text: &str) -> Vec<(GroupName, Vec<PatternMatch>)> {
        let mut hits = Vec::new();
        for group in &self.groups {
            let mut matches: Vec<PatternMatch> = group
                .positive
                .iter()
                .enumerate()
                .flat_map(|(pattern_index, re)| {
                    re.find_iter(text).map(move |m| PatternMatch {
                        pattern_index,
                        start: m.start(),
                        end: m.end(),
                    })
                })
                .collect();
            if matches.is_empty() || group.negative.iter().any(|re| re.is_match(text)) {
                continue;
            }
            matches.sort_by_key(|m| (m.start, m.pattern_index));
            hits.push((group.name, matches));
        }
        hits
    }

    pub fn match_sentence(&self, sentence: &Sentence) -> Vec<GroupHit> {
        let id = sentence.id();
        self.match_text(&sentence.text)
            .into_iter()
            .map(|(group, matches)| GroupHit {
                sentence_id: id.clone(),
                group,
                matches,
            })
            .collect()
    }

    /// Keeps only sentences with at least one group hit, preserving order.
    pub fn filter_corpus<I>(&self, sentences: I) -> TopicalFilter<'_, I::IntoIter>
    where
        I: IntoIterator<Item = Sentence>,
    {
        TopicalFilter {
            lexicon: self,
            inner: sentences.into_iter(),
            scanned: 0,
            emitted: 0,
        }
    }
}

fn compile_list(group: GroupName, list: &'static str, patterns: &[String]) -> Result<Vec<Regex>, LexiconError> {
    patterns
        .iter()
        .enumerate()
        .map(|(index, pattern)| {
            RegexBuilder::new(pattern)
                .case_insensitive(true)
                .unicode(true)
                .build()
                .map_err(|e| LexiconError::Pattern {
                    group,
                    list,
                    index,
                    pattern: pattern.clone(),
                    message: e.to_string(),
                })
        })
        .collect()
}

/// Streaming topical filter returned by [`Lexicon::filter_corpus`].
pub struct TopicalFilter<'a, I> {
    lexicon: &'a Lexicon,
    inner: I,
    scanned: usize,
    emitted: usize,
}

impl<I> TopicalFilter<'_, I> {
    pub fn scanned(&self) -> usize {
        self.scanned
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }
}

impl<I: Iterator<Item = Sentence>> Iterator for TopicalFilter<'_, I> {
    type Item = (Sentence, Vec<GroupHit>);

    fn next(&mut self) -> Option<Self::Item> {
        for sentence in self.inner.by_ref() {
            self.scanned += 1;
            let hits = self.lexicon.match_sentence(&sentence);
            if !hits.is_empty() {
                self.emitted += 1;
                return Some((sentence, hits));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(text: &str) -> Sentence {
        Sentence {
            article_id: "a".into(),
            index: 0,
            text: text.into(),
            span: (0, text.len()),
            flagged: false,
        }
    }

    fn groups_of(lexicon: &Lexicon, text: &str) -> Vec<GroupName> {
        lexicon.match_text(text).into_iter().map(|(g, _)| g).collect()
    }

    #[test]
    fn default_has_eight_groups() {
        let lexicon = Lexicon::default_lexicon();
        assert_eq!(lexicon.groups().len(), 8);
        let migration = &lexicon.groups()[0];
        assert_eq!(migration.name, GroupName::Migration);
        assert_eq!(migration.positive.len(), 34);
        assert_eq!(migration.negative.len(), 14);
        assert!(lexicon.groups()[1..].iter().all(|g| g.negative.is_empty()));
    }

    #[test]
    fn migration_hit_with_pattern_provenance() {
        let lexicon = Lexicon::default_lexicon();
        let text = "Massiimmigratsioon oleks Euroopale hukatuslik ja see ei lahendaks maailmas mitte midagi.";
        let hits = lexicon.match_text(text);
        assert_eq!(hits.len(), 1);
        let (group, matches) = &hits[0];
        assert_eq!(*group, GroupName::Migration);
        assert_eq!(matches[0].pattern_index, 0);
        assert_eq!(&text[matches[0].start..matches[0].end], "migrats");
    }

    #[test]
    fn negative_filter_vetoes_bird_migration() {
        let lexicon = Lexicon::default_lexicon();
        assert!(groups_of(&lexicon, "lindude ränne algas").is_empty());
        assert_eq!(groups_of(&lexicon, "ränne algas"), vec![GroupName::Migration]);
    }

    #[test]
    fn case_folded_foreign_students() {
        let lexicon = Lexicon::default_lexicon();
        assert_eq!(groups_of(&lexicon, "Välistudengid saabusid"), vec![GroupName::ForeignStudents]);
        assert_eq!(groups_of(&lexicon, "VÄLISTUDENGID saabusid"), vec![GroupName::ForeignStudents]);
    }

    #[test]
    fn word_boundary_tokens_kept_verbatim() {
        let lexicon = Lexicon::default_lexicon();
        assert_eq!(groups_of(&lexicon, "rass on sotsiaalne konstruktsioon"), vec![GroupName::Race]);
        assert_eq!(groups_of(&lexicon, "Nad kritiseerivad rassismi"), vec![GroupName::Race]);
        assert!(groups_of(&lexicon, "terrassil istuti").is_empty());
    }

    #[test]
    fn missing_group_is_named() {
        let text = DEFAULT_LEXICON.replace("[group:ethnicity]", "[group:race]");
        assert_eq!(Lexicon::from_text(&text).unwrap_err(), LexiconError::DuplicateGroup(GroupName::Race));

        let cut = DEFAULT_LEXICON.split("[group:ethnicity]").next().unwrap();
        assert_eq!(Lexicon::from_text(cut).unwrap_err(), LexiconError::MissingGroup(GroupName::Ethnicity));
    }

    #[test]
    fn malformed_pattern_cites_group_and_index() {
        let text = DEFAULT_LEXICON.replace("välisüliõpila", "([");
        match Lexicon::from_text(&text).unwrap_err() {
            LexiconError::Pattern { group, list, index, .. } => {
                assert_eq!(group, GroupName::ForeignStudents);
                assert_eq!(list, "positive");
                assert_eq!(index, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_section_is_rejected() {
        assert!(matches!(
            parse_lexicon("[group:pets]\npositive=kass\n"),
            Err(LexiconError::UnknownGroup(_))
        ));
        assert!(matches!(parse_lexicon("kass\n"), Err(LexiconError::Syntax { line: 1, .. })));
    }

    #[test]
    fn inline_values_are_accepted() {
        let groups = parse_lexicon("[group:race]\npositive=rass\nneeg\nnegative=terrass\n").unwrap();
        assert_eq!(groups[0].positive, vec!["rass", "neeg"]);
        assert_eq!(groups[0].negative, vec!["terrass"]);
    }

    #[test]
    fn filter_keeps_topical_sentences_in_order() {
        let lexicon = Lexicon::default_lexicon();
        let input = vec![
            sentence("Ilm oli ilus."),
            sentence("Pagulased ja moslemid olid arutelu teemaks."),
            sentence("Kass magas."),
        ];
        let mut filter = lexicon.filter_corpus(input);
        let out: Vec<_> = filter.by_ref().collect();
        assert_eq!(filter.scanned(), 3);
        assert_eq!(filter.emitted(), 1);
        assert_eq!(out.len(), 1);
        let groups: Vec<_> = out[0].1.iter().map(|h| h.group).collect();
        assert_eq!(groups, vec![GroupName::Refugees, GroupName::Ethnicity]);
        assert!(out[0].1.iter().all(|h| h.sentence_id == "a:0"));

        assert_eq!(lexicon.filter_corpus(Vec::new()).count(), 0);
    }
}
