//! Reader for ontology documents in the published AudioSet layout: a JSON
//! array of records with `id`, `name`, `description`, `citation_uri`,
//! `positive_examples`, `child_ids` and `restrictions`. Unknown fields are
//! ignored and missing optional fields default to empty.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;
use taxon_core::taxonomy::{Category, Restriction, Taxonomy, TaxonomyError};
use taxon_core::CategoryId;

#[derive(Debug, thiserror::Error)]
pub enum OntologyError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed ontology document: {0}")]
    Parse(String),
    #[error(transparent)]
    Invalid(#[from] TaxonomyError),
}

impl OntologyError {
    pub fn code(&self) -> &'static str {
        match self {
            // A missing or unreadable file is reported as a parse failure:
            // there is no document to parse.
            Self::Io { .. } | Self::Parse(_) => "ParseError",
            Self::Invalid(e) => e.code(),
        }
    }
}

#[derive(Deserialize)]
struct Record {
    id: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    citation_uri: String,
    #[serde(default)]
    positive_examples: Vec<String>,
    #[serde(default)]
    child_ids: Vec<String>,
    #[serde(default)]
    restrictions: Vec<String>,
}

fn restriction(value: &str) -> Option<Restriction> {
    match value {
        "abstract" => Some(Restriction::Abstract),
        "blacklist" => Some(Restriction::Blacklist),
        _ => None,
    }
}

/// Parses the raw records without validating the graph.
pub fn parse_records(raw: &[u8]) -> Result<Vec<Category>, OntologyError> {
    let records: Vec<Record> =
        serde_json::from_slice(raw).map_err(|e| OntologyError::Parse(e.to_string()))?;
    records
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            let id = CategoryId::new(r.id)
                .map_err(|_| OntologyError::Parse(format!("record {index}: empty id")))?;
            let child_ids = r
                .child_ids
                .into_iter()
                .map(|c| {
                    CategoryId::new(c).map_err(|_| {
                        OntologyError::Parse(format!("record {index} ({id}): empty child id"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let restrictions = r
                .restrictions
                .iter()
                .map(|s| {
                    restriction(s).ok_or_else(|| {
                        OntologyError::Parse(format!("record {index} ({id}): unknown restriction {s:?}"))
                    })
                })
                .collect::<Result<BTreeSet<_>, _>>()?;
            Ok(Category {
                id,
                name: r.name,
                description: r.description,
                citation_uri: r.citation_uri,
                example_uris: r.positive_examples,
                child_ids,
                restrictions,
            })
        })
        .collect()
}

pub fn load_ontology(raw: &[u8]) -> Result<Taxonomy, OntologyError> {
    Ok(Taxonomy::from_categories(parse_records(raw)?)?)
}

pub fn load_ontology_file(path: impl AsRef<Path>) -> Result<Taxonomy, OntologyError> {
    let path = path.as_ref();
    let raw = std::fs::read(path).map_err(|source| OntologyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_ontology(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let t = load_ontology(br#"[{"id": "/m/a", "name": "A"}]"#).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.roots().len(), 1);
        assert_eq!(t.edge_count(), 0);
        let a = t.get(&CategoryId::new("/m/a").unwrap()).unwrap();
        assert!(a.description.is_empty());
        assert!(a.example_uris.is_empty());
    }

    #[test]
    fn unknown_fields_ignored_and_fields_mapped() {
        let doc = br#"[
            {"id": "r", "name": "Root", "child_ids": ["c"], "restrictions": ["abstract"], "extra": 1},
            {"id": "c", "name": "Child", "description": "d", "citation_uri": "u",
             "positive_examples": ["youtu.be/x"], "restrictions": ["blacklist"]}
        ]"#;
        let t = load_ontology(doc).unwrap();
        let c = t.get(&CategoryId::new("c").unwrap()).unwrap();
        assert_eq!(c.example_uris, vec!["youtu.be/x".to_string()]);
        assert_eq!(c.citation_uri, "u");
        assert!(c.is_blacklisted());
        assert!(t.get(&CategoryId::new("r").unwrap()).unwrap().is_abstract());
    }

    #[test]
    fn dangling_reference() {
        let err = load_ontology(br#"[{"id": "A", "name": "A", "child_ids": ["X"]}]"#).unwrap_err();
        assert_eq!(err.code(), "DanglingChildReference");
        match err {
            OntologyError::Invalid(TaxonomyError::DanglingChildReference { child, .. }) => {
                assert_eq!(child.as_str(), "X")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_failures() {
        assert_eq!(load_ontology(b"{not json").unwrap_err().code(), "ParseError");
        assert_eq!(load_ontology(br#"[{"name": "no id"}]"#).unwrap_err().code(), "ParseError");
        assert_eq!(load_ontology(br#"[{"id": "", "name": "x"}]"#).unwrap_err().code(), "ParseError");
        assert_eq!(
            load_ontology(br#"[{"id": "a", "name": "x", "restrictions": ["secret"]}]"#)
                .unwrap_err()
                .code(),
            "ParseError"
        );
        assert_eq!(
            load_ontology_file("/definitely/not/here.json").unwrap_err().code(),
            "ParseError"
        );
    }

    #[test]
    fn cycle_and_duplicates() {
        let cyc = br#"[{"id": "r", "name": "R", "child_ids": ["a"]},
                      {"id": "a", "name": "A", "child_ids": ["b"]},
                      {"id": "b", "name": "B", "child_ids": ["a"]}]"#;
        let err = load_ontology(cyc).unwrap_err();
        assert_eq!(err.code(), "CycleDetected");
        assert!(err.to_string().contains("a -> b -> a"));
        let dup = br#"[{"id": "a", "name": "A"}, {"id": "a", "name": "A2"}]"#;
        assert_eq!(load_ontology(dup).unwrap_err().code(), "DuplicateId");
    }
}
