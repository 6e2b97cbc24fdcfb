//! Trigram fuzzy search over category names and descriptions.
//!
//! Text is normalized into lowercase alphanumeric tokens. Each token is
//! padded with two leading spaces and one trailing space and cut into
//! overlapping 3-character windows; a text's trigram set is the union over
//! its tokens. Two sets are compared with Jaccard similarity.
//!
//! A category scores `max(sim(query, name), w * sim(query, description))`
//! where `w` is the index's description weight. Only categories whose own
//! score clears the threshold are returned.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::id::CategoryId;
use crate::taxonomy::Taxonomy;

pub const DEFAULT_THRESHOLD: f64 = 0.05;
pub const DEFAULT_LIMIT: usize = 30;
pub const DEFAULT_DESCRIPTION_WEIGHT: f64 = 0.5;

/// Lowercases `text` and splits it on every character that is not a letter
/// or a digit. Empty tokens are dropped.
pub fn normalize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Trigram([char; 3]);

impl Trigram {
    pub fn chars(&self) -> [char; 3] {
        self.0
    }
}

impl fmt::Display for Trigram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.0 {
            fmt::Write::write_char(f, c)?;
        }
        Ok(())
    }
}

impl fmt::Debug for Trigram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", alloc::format!("{self}"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrigramSet(BTreeSet<Trigram>);

impl TrigramSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Trigram> + '_ {
        self.0.iter()
    }

    pub fn contains(&self, gram: &str) -> bool {
        let mut chars = gram.chars();
        match (chars.next(), chars.next(), chars.next(), chars.next()) {
            (Some(a), Some(b), Some(c), None) => self.0.contains(&Trigram([a, b, c])),
            _ => false,
        }
    }

    pub fn intersection_len(&self, other: &TrigramSet) -> usize {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.0.iter().filter(|g| large.0.contains(g)).count()
    }
}

/// Trigram set of `text`.
pub fn trigrams(text: &str) -> TrigramSet {
    let mut grams = BTreeSet::new();
    let mut padded: Vec<char> = Vec::new();
    for token in normalize(text) {
        padded.clear();
        padded.extend([' ', ' ']);
        padded.extend(token.chars());
        padded.push(' ');
        for w in padded.windows(3) {
            grams.insert(Trigram([w[0], w[1], w[2]]));
        }
    }
    TrigramSet(grams)
}

/// Jaccard similarity `|a ∩ b| / |a ∪ b|`; zero when both sets are empty.
pub fn similarity(a: &TrigramSet, b: &TrigramSet) -> f64 {
    let shared = a.intersection_len(b);
    let union = a.len() + b.len() - shared;
    if union == 0 {
        return 0.0;
    }
    shared as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("query is empty after normalization")]
    EmptyQuery,
    #[error("limit must be at least 1")]
    InvalidLimit,
    #[error("threshold must be in [0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("description weight must be in [0, 1], got {0}")]
    InvalidDescriptionWeight(f64),
}

impl SearchError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::EmptyQuery => "EmptyQuery",
            Self::InvalidLimit => "InvalidLimit",
            Self::InvalidThreshold(_) => "InvalidThreshold",
            Self::InvalidDescriptionWeight(_) => "InvalidDescriptionWeight",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchedField {
    Name,
    Description,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub category_id: CategoryId,
    pub score: f64,
    pub matched_field: MatchedField,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    pub limit: usize,
    pub threshold: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            limit: DEFAULT_LIMIT,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.limit == 0 {
            return Err(SearchError::InvalidLimit);
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(SearchError::InvalidThreshold(self.threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Entry {
    id: CategoryId,
    name: String,
    name_grams: TrigramSet,
    desc_grams: TrigramSet,
}

/// Immutable trigram index over the non-blacklisted categories of a
/// taxonomy.
#[derive(Debug, Clone)]
pub struct SearchIndex {
    entries: Vec<Entry>,
    by_id: BTreeMap<CategoryId, usize>,
    /// trigram -> entries whose name or description contains it
    postings: BTreeMap<Trigram, Vec<usize>>,
    description_weight: f64,
}

impl SearchIndex {
    pub fn build(taxonomy: &Taxonomy, description_weight: f64) -> Result<Self, SearchError> {
        if !(0.0..=1.0).contains(&description_weight) {
            return Err(SearchError::InvalidDescriptionWeight(description_weight));
        }
        let mut entries = Vec::new();
        let mut by_id = BTreeMap::new();
        let mut postings: BTreeMap<Trigram, Vec<usize>> = BTreeMap::new();
        for category in taxonomy.iter().filter(|c| !c.is_blacklisted()) {
            let slot = entries.len();
            let entry = Entry {
                id: category.id.clone(),
                name: category.name.clone(),
                name_grams: trigrams(&category.name),
                desc_grams: trigrams(&category.description),
            };
            let grams: BTreeSet<&Trigram> =
                entry.name_grams.iter().chain(entry.desc_grams.iter()).collect();
            for gram in grams {
                postings.entry(*gram).or_default().push(slot);
            }
            by_id.insert(entry.id.clone(), slot);
            entries.push(entry);
        }
        Ok(Self {
            entries,
            by_id,
            postings,
            description_weight,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn description_weight(&self) -> f64 {
        self.description_weight
    }

    pub fn contains(&self, id: &CategoryId) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn name_grams(&self, id: &CategoryId) -> Option<&TrigramSet> {
        self.by_id.get(id).map(|&i| &self.entries[i].name_grams)
    }

    pub fn description_grams(&self, id: &CategoryId) -> Option<&TrigramSet> {
        self.by_id.get(id).map(|&i| &self.entries[i].desc_grams)
    }

    /// Scores one indexed category against `query` on its own, without
    /// looking at any other category.
    pub fn score(&self, id: &CategoryId, query: &str) -> Option<(f64, MatchedField)> {
        let q = trigrams(query);
        self.by_id.get(id).map(|&i| self.score_entry(&self.entries[i], &q))
    }

    fn score_entry(&self, entry: &Entry, query: &TrigramSet) -> (f64, MatchedField) {
        let by_name = similarity(query, &entry.name_grams);
        let by_desc = self.description_weight * similarity(query, &entry.desc_grams);
        if by_desc > by_name {
            (by_desc, MatchedField::Description)
        } else {
            (by_name, MatchedField::Name)
        }
    }

    /// Ranked hits for `query`: score descending, then name, then id.
    pub fn search(&self, query: &str, params: &SearchParams) -> Result<Vec<SearchHit>, SearchError> {
        params.validate()?;
        let q = trigrams(query);
        if q.is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        // Any entry with a positive score shares at least one trigram with
        // the query, so the postings give an exact candidate set.
        let mut candidates: BTreeSet<usize> = BTreeSet::new();
        for gram in q.iter() {
            if let Some(slots) = self.postings.get(gram) {
                candidates.extend(slots.iter().copied());
            }
        }
        let mut scored: Vec<(f64, MatchedField, &Entry)> = candidates
            .into_iter()
            .map(|slot| {
                let entry = &self.entries[slot];
                let (score, field) = self.score_entry(entry, &q);
                (score, field, entry)
            })
            .filter(|(score, _, _)| *score > params.threshold)
            .collect();
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.2.name.cmp(&b.2.name))
                .then_with(|| a.2.id.cmp(&b.2.id))
        });
        scored.truncate(params.limit);
        Ok(scored
            .into_iter()
            .map(|(score, matched_field, entry)| SearchHit {
                category_id: entry.id.clone(),
                score,
                matched_field,
            })
            .collect())
    }
}

/// Appends the children of every hit (inheriting the parent's score) after
/// the original hits. Measured to bury relevant results; not wired into any
/// shipped path.
#[cfg(feature = "expand-children")]
pub fn expand_children(hits: &[SearchHit], taxonomy: &Taxonomy) -> Vec<SearchHit> {
    let mut seen: BTreeSet<CategoryId> = hits.iter().map(|h| h.category_id.clone()).collect();
    let mut out = hits.to_vec();
    for hit in hits {
        if let Ok(children) = taxonomy.children(&hit.category_id) {
            for child in children {
                if seen.insert(child.clone()) {
                    out.push(SearchHit {
                        category_id: child.clone(),
                        score: hit.score,
                        matched_field: hit.matched_field,
                    });
                }
            }
        }
    }
    out
}
