//! Core data model for annotating sound resources against a large
//! hierarchical taxonomy.
//!
//! The crate is `no_std` (it only needs `alloc`) and performs no IO. It holds:
//!
//! - [`taxonomy`]: the category DAG, validated on construction, with the
//!   traversals the annotation tools need (children, parents, siblings,
//!   root-to-node paths, descendants).
//! - [`search`]: trigram fuzzy search over category names and descriptions.
//! - [`session`]: the generation and refinement task state machines and the
//!   [`Annotation`](session::Annotation) records they emit.
//!
//! Parsing ontology documents, persistence and the HTTP surface live in the
//! `taxon` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod id;
pub mod search;
pub mod session;
pub mod taxonomy;

pub use id::{CategoryId, EmptyId, RowId, TaskId};
pub use search::{MatchedField, SearchError, SearchHit, SearchIndex, SearchParams, TrigramSet};
pub use session::{
    Annotation, GenerationTask, LabelRow, PresenceVerdict, Provenance, RefinementTask,
    SessionConfig, SessionError, SoundMetadata, SoundResource, Task, TaskState, Timestamp,
};
pub use taxonomy::{Category, HierarchyPath, Restriction, Taxonomy, TaxonomyError};
