//! Per-cancer-type SACT dictionaries and `<e>`/`</e>` tagging of matches.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{split_sentences, CancerType, ClinicalNote, SentenceSpan};
use crate::triplet::canonicalize;

pub const OPEN_TAG: &str = "<e>";
pub const CLOSE_TAG: &str = "</e>";

const BREAST_TERMS: &str = include_str!("../assets/dictionaries/breast.txt");
const MELANOMA_TERMS: &str = include_str!("../assets/dictionaries/melanoma.txt");
const OVARIAN_TERMS: &str = include_str!("../assets/dictionaries/ovarian.txt");

/// The bundled term list for a cancer type, as shipped (one term per line).
pub fn shipped_term_list(cancer_type: CancerType) -> &'static str {
    match cancer_type {
        CancerType::Breast => BREAST_TERMS,
        CancerType::Melanoma => MELANOMA_TERMS,
        CancerType::Ovarian => OVARIAN_TERMS,
    }
}

/// Where a list of raw terms came from. Only regimen/abbreviation lists are
/// subject to the two-letter filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    RegimenAbbreviations,
    GenericMentions,
    Curated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermSource {
    pub kind: SourceKind,
    pub terms: Vec<String>,
}

impl TermSource {
    pub fn new<I, S>(kind: SourceKind, terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            kind,
            terms: terms.into_iter().map(Into::into).collect(),
        }
    }

    /// Parses a term file: one term per line, `#` starts a comment line.
    pub fn parse(kind: SourceKind, text: &str) -> Self {
        let terms = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        Self { kind, terms }
    }

    pub fn from_file(kind: SourceKind, path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(kind, &fs::read_to_string(path)?))
    }
}

#[derive(Debug, Default, Clone)]
struct TrieNode {
    children: HashMap<char, usize>,
    /// Index into `SactDictionary::term_list` when a term ends here.
    term: Option<usize>,
}

/// An immutable set of lowercased terms with a character trie for scanning.
#[derive(Debug, Clone)]
pub struct SactDictionary {
    cancer_type: CancerType,
    terms: BTreeSet<String>,
    term_list: Vec<String>,
    trie: Vec<TrieNode>,
}

fn is_two_letter_abbreviation(term: &str) -> bool {
    term.chars().count() <= 2 && term.chars().all(char::is_alphabetic)
}

/// Merges term sources into one dictionary.
///
/// Terms are lowercased and whitespace-collapsed, then deduplicated. Purely
/// alphabetic terms of at most two letters are dropped when they come from a
/// [`SourceKind::RegimenAbbreviations`] list.
pub fn build_dictionary(cancer_type: CancerType, sources: &[TermSource]) -> SactDictionary {
    let mut terms = BTreeSet::new();
    for source in sources {
        for raw in &source.terms {
            let term = canonicalize(raw);
            if term.is_empty() {
                continue;
            }
            if source.kind == SourceKind::RegimenAbbreviations && is_two_letter_abbreviation(&term)
            {
                continue;
            }
            terms.insert(term);
        }
    }
    SactDictionary::from_terms(cancer_type, terms)
}

fn fold_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

impl SactDictionary {
    fn from_terms(cancer_type: CancerType, terms: BTreeSet<String>) -> Self {
        let term_list: Vec<String> = terms.iter().cloned().collect();
        let mut trie = vec![TrieNode::default()];
        for (id, term) in term_list.iter().enumerate() {
            let mut node = 0;
            for c in term.chars().map(fold_char) {
                let next = trie.len();
                node = *trie[node].children.entry(c).or_insert(next);
                if node == next {
                    trie.push(TrieNode::default());
                }
            }
            trie[node].term = Some(id);
        }
        Self {
            cancer_type,
            terms,
            term_list,
            trie,
        }
    }

    /// The bundled dictionary for a cancer type.
    pub fn shipped(cancer_type: CancerType) -> Self {
        build_dictionary(
            cancer_type,
            &[TermSource::parse(
                SourceKind::Curated,
                shipped_term_list(cancer_type),
            )],
        )
    }

    pub fn cancer_type(&self) -> CancerType {
        self.cancer_type
    }

    pub fn terms(&self) -> &BTreeSet<String> {
        &self.terms
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains(&canonicalize(term))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Leftmost-longest matches at token boundaries, as byte ranges.
    ///
    /// A whitespace edge in a term consumes any run of whitespace in the text.
    fn scan(&self, text: &str) -> Vec<TermMatch> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let n = chars.len();
        let byte_at = |k: usize| if k == n { text.len() } else { chars[k].0 };
        let mut out = Vec::new();
        let mut k = 0;
        while k < n {
            let c = chars[k].1;
            let left_ok = k == 0 || !chars[k - 1].1.is_alphanumeric() || !c.is_alphanumeric();
            if !left_ok || c.is_whitespace() {
                k += 1;
                continue;
            }
            let mut node = 0;
            let mut j = k;
            let mut best: Option<(usize, usize)> = None;
            while j < n {
                let c = chars[j].1;
                let last;
                if c.is_whitespace() {
                    match self.trie[node].children.get(&' ') {
                        Some(&child) => node = child,
                        None => break,
                    }
                    while j < n && chars[j].1.is_whitespace() {
                        j += 1;
                    }
                    last = ' ';
                } else {
                    match self.trie[node].children.get(&fold_char(c)) {
                        Some(&child) => node = child,
                        None => break,
                    }
                    j += 1;
                    last = c;
                }
                if let Some(id) = self.trie[node].term {
                    let right_ok =
                        j == n || !chars[j].1.is_alphanumeric() || !last.is_alphanumeric();
                    if right_ok && last != ' ' {
                        best = Some((j, id));
                    }
                }
            }
            match best {
                Some((end, id)) => {
                    out.push(TermMatch {
                        term: self.term_list[id].clone(),
                        start: byte_at(k),
                        end: byte_at(end),
                    });
                    k = end;
                }
                None => k += 1,
            }
        }
        out
    }
}

/// A tagged region of a sentence. Offsets are byte offsets into the
/// untagged sentence text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermMatch {
    /// Dictionary term for dictionary hits; the canonicalized surface form
    /// for tags added during verification.
    pub term: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub span: SentenceSpan,
    /// Untagged sentence text.
    pub text: String,
    pub tagged_text: String,
    pub matches: Vec<TermMatch>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TagFormatError {
    #[error("nested <e> tag at byte {0}")]
    Nested(usize),
    #[error("closing </e> without opening tag at byte {0}")]
    Unopened(usize),
    #[error("unclosed <e> tag")]
    Unclosed,
    #[error("empty tagged region at byte {0}")]
    Empty(usize),
}

impl TaggedSentence {
    fn from_matches(span: SentenceSpan, text: &str, matches: Vec<TermMatch>) -> Self {
        let mut tagged = String::with_capacity(text.len() + matches.len() * 7);
        let mut pos = 0;
        for m in &matches {
            tagged.push_str(&text[pos..m.start]);
            tagged.push_str(OPEN_TAG);
            tagged.push_str(&text[m.start..m.end]);
            tagged.push_str(CLOSE_TAG);
            pos = m.end;
        }
        tagged.push_str(&text[pos..]);
        Self {
            span,
            text: text.to_string(),
            tagged_text: tagged,
            matches,
        }
    }

    /// Reads a sentence back from its tagged form, validating that tags are
    /// balanced, non-nested and non-empty.
    pub fn from_tagged(span: SentenceSpan, tagged_text: &str) -> Result<Self, TagFormatError> {
        let mut text = String::with_capacity(tagged_text.len());
        let mut matches = Vec::new();
        let mut open: Option<usize> = None;
        let mut rest = tagged_text;
        let mut consumed = 0;
        loop {
            let next_open = rest.find(OPEN_TAG);
            let next_close = rest.find(CLOSE_TAG);
            let (at, is_open) = match (next_open, next_close) {
                (None, None) => break,
                (Some(o), None) => (o, true),
                (None, Some(c)) => (c, false),
                (Some(o), Some(c)) => {
                    if o < c {
                        (o, true)
                    } else {
                        (c, false)
                    }
                }
            };
            text.push_str(&rest[..at]);
            let tag_len = if is_open {
                OPEN_TAG.len()
            } else {
                CLOSE_TAG.len()
            };
            match (is_open, open) {
                (true, Some(_)) => return Err(TagFormatError::Nested(consumed + at)),
                (true, None) => open = Some(text.len()),
                (false, None) => return Err(TagFormatError::Unopened(consumed + at)),
                (false, Some(start)) => {
                    if start == text.len() {
                        return Err(TagFormatError::Empty(consumed + at));
                    }
                    matches.push(TermMatch {
                        term: canonicalize(&text[start..]),
                        start,
                        end: text.len(),
                    });
                    open = None;
                }
            }
            consumed += at + tag_len;
            rest = &rest[at + tag_len..];
        }
        if open.is_some() {
            return Err(TagFormatError::Unclosed);
        }
        text.push_str(rest);
        Ok(Self {
            span,
            text,
            tagged_text: tagged_text.to_string(),
            matches,
        })
    }

    pub fn has_tags(&self) -> bool {
        !self.matches.is_empty()
    }
}

/// Removes every `<e>` and `</e>` marker.
pub fn strip_tags(tagged: &str) -> String {
    tagged.replace(OPEN_TAG, "").replace(CLOSE_TAG, "")
}

/// Tags dictionary hits in a standalone piece of text.
pub fn tag_matches(sentence_text: &str, dict: &SactDictionary) -> TaggedSentence {
    let span = SentenceSpan {
        index: 0,
        start: 0,
        end: sentence_text.len(),
    };
    TaggedSentence::from_matches(span, sentence_text, dict.scan(sentence_text))
}

/// Splits a note into sentences and tags each one. Every sentence is
/// returned, tagged or not.
pub fn tag_note(note: &ClinicalNote, dict: &SactDictionary) -> Vec<TaggedSentence> {
    split_sentences(&note.text)
        .into_iter()
        .map(|span| {
            let text = span.text(&note.text);
            TaggedSentence::from_matches(span, text, dict.scan(text))
        })
        .collect()
}

/// An anchor sentence with its immediate neighbours.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub note_id: String,
    pub anchor_index: usize,
    pub previous: Option<String>,
    pub anchor_tagged: String,
    pub next: Option<String>,
}

impl ContextWindow {
    /// Sentence indices covered, inclusive.
    pub fn covered(&self) -> (usize, usize) {
        let first = self.anchor_index - usize::from(self.previous.is_some());
        let last = self.anchor_index + usize::from(self.next.is_some());
        (first, last)
    }

    /// Neighbours as plain text, anchor with its tags, one per line.
    pub fn render(&self) -> String {
        let mut parts = Vec::with_capacity(3);
        if let Some(p) = &self.previous {
            parts.push(p.as_str());
        }
        parts.push(self.anchor_tagged.as_str());
        if let Some(n) = &self.next {
            parts.push(n.as_str());
        }
        parts.join("\n")
    }
}

/// One window per sentence carrying at least one tag, ordered by anchor.
///
/// `tagged` must hold every sentence of the note in order.
pub fn select_candidate_windows(
    note: &ClinicalNote,
    tagged: &[TaggedSentence],
) -> Vec<ContextWindow> {
    tagged
        .iter()
        .enumerate()
        .filter(|(_, s)| s.has_tags())
        .map(|(i, s)| ContextWindow {
            note_id: note.note_id.clone(),
            anchor_index: s.span.index,
            previous: i.checked_sub(1).map(|p| tagged[p].text.clone()),
            anchor_tagged: s.tagged_text.clone(),
            next: tagged.get(i + 1).map(|n| n.text.clone()),
        })
        .collect()
}
