//! The category taxonomy as a rooted DAG.
//!
//! Real ontologies let a category hang under several parents, so nothing
//! here assumes a tree. A [`Taxonomy`] is validated once on construction and
//! is immutable afterwards; every list-returning traversal has a fixed order
//! so that two loads of the same document behave identically.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::id::CategoryId;

/// Flags an ontology may attach to a category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Restriction {
    /// Navigable, but not meant as a final label.
    Abstract,
    /// Kept in the graph, hidden from search.
    Blacklist,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub citation_uri: String,
    #[serde(default)]
    pub example_uris: Vec<String>,
    #[serde(default)]
    pub child_ids: Vec<CategoryId>,
    #[serde(default)]
    pub restrictions: BTreeSet<Restriction>,
}

impl Category {
    /// A category with only an id and a name.
    pub fn named(id: CategoryId, name: impl Into<String>) -> Self {
        Self {
            id,
            name: name.into(),
            description: String::new(),
            citation_uri: String::new(),
            example_uris: Vec::new(),
            child_ids: Vec::new(),
            restrictions: BTreeSet::new(),
        }
    }

    pub fn is_abstract(&self) -> bool {
        self.restrictions.contains(&Restriction::Abstract)
    }

    pub fn is_blacklisted(&self) -> bool {
        self.restrictions.contains(&Restriction::Blacklist)
    }
}

/// Why a single category record is unusable on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvalidCategoryReason {
    EmptyName,
    DuplicateChild,
}

impl core::fmt::Display for InvalidCategoryReason {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::EmptyName => f.write_str("name is empty"),
            Self::DuplicateChild => f.write_str("child_ids lists the same child twice"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaxonomyError {
    #[error("duplicate category id {0}")]
    DuplicateId(CategoryId),
    #[error("category {parent} lists unknown child {child}")]
    DanglingChildReference { parent: CategoryId, child: CategoryId },
    #[error("cycle detected: {}", display_path(.0))]
    CycleDetected(Vec<CategoryId>),
    #[error("invalid category {id}: {reason}")]
    InvalidCategory {
        id: CategoryId,
        reason: InvalidCategoryReason,
    },
    #[error("taxonomy has no root category")]
    NoRoot,
    #[error("unknown category {0}")]
    UnknownCategory(CategoryId),
}

impl TaxonomyError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::DuplicateId(_) => "DuplicateId",
            Self::DanglingChildReference { .. } => "DanglingChildReference",
            Self::CycleDetected(_) => "CycleDetected",
            Self::InvalidCategory { .. } => "InvalidCategory",
            Self::NoRoot => "NoRoot",
            Self::UnknownCategory(_) => "UnknownCategory",
        }
    }
}

fn display_path(path: &[CategoryId]) -> String {
    let mut out = String::new();
    for (i, id) in path.iter().enumerate() {
        if i > 0 {
            out.push_str(" -> ");
        }
        out.push_str(id.as_str());
    }
    out
}

/// One root-to-category route through the DAG.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HierarchyPath(Vec<CategoryId>);

impl HierarchyPath {
    pub fn nodes(&self) -> &[CategoryId] {
        &self.0
    }

    pub fn root(&self) -> &CategoryId {
        &self.0[0]
    }

    pub fn target(&self) -> &CategoryId {
        &self.0[self.0.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<CategoryId> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    /// Ids in source-document order.
    order: Vec<CategoryId>,
    categories: BTreeMap<CategoryId, Category>,
    parents: BTreeMap<CategoryId, BTreeSet<CategoryId>>,
    roots: Vec<CategoryId>,
    edge_count: usize,
}

impl Taxonomy {
    /// Validates `records` and builds the taxonomy.
    ///
    /// Checks run in a fixed order: per-record invariants and duplicate ids,
    /// then dangling child references, then cycles, then the root count.
    pub fn from_categories(records: Vec<Category>) -> Result<Self, TaxonomyError> {
        let mut order = Vec::with_capacity(records.len());
        let mut categories = BTreeMap::new();
        for record in records {
            if record.name.trim().is_empty() {
                return Err(TaxonomyError::InvalidCategory {
                    id: record.id,
                    reason: InvalidCategoryReason::EmptyName,
                });
            }
            let mut seen = BTreeSet::new();
            for child in &record.child_ids {
                if child == &record.id {
                    return Err(TaxonomyError::CycleDetected(vec![
                        record.id.clone(),
                        record.id.clone(),
                    ]));
                }
                if !seen.insert(child) {
                    return Err(TaxonomyError::InvalidCategory {
                        id: record.id.clone(),
                        reason: InvalidCategoryReason::DuplicateChild,
                    });
                }
            }
            if categories.contains_key(&record.id) {
                return Err(TaxonomyError::DuplicateId(record.id));
            }
            order.push(record.id.clone());
            categories.insert(record.id.clone(), record);
        }

        let mut parents: BTreeMap<CategoryId, BTreeSet<CategoryId>> = order
            .iter()
            .map(|id| (id.clone(), BTreeSet::new()))
            .collect();
        let mut edge_count = 0;
        for id in &order {
            for child in &categories[id].child_ids {
                match parents.get_mut(child) {
                    Some(set) => {
                        set.insert(id.clone());
                        edge_count += 1;
                    }
                    None => {
                        return Err(TaxonomyError::DanglingChildReference {
                            parent: id.clone(),
                            child: child.clone(),
                        })
                    }
                }
            }
        }

        if let Some(cycle) = find_cycle(&order, &categories) {
            return Err(TaxonomyError::CycleDetected(cycle));
        }

        let roots: Vec<CategoryId> = order
            .iter()
            .filter(|id| parents[*id].is_empty())
            .cloned()
            .collect();
        if roots.is_empty() {
            return Err(TaxonomyError::NoRoot);
        }

        Ok(Self {
            order,
            categories,
            parents,
            roots,
            edge_count,
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Roots in source-document order.
    pub fn roots(&self) -> &[CategoryId] {
        &self.roots
    }

    pub fn contains(&self, id: &CategoryId) -> bool {
        self.categories.contains_key(id)
    }

    pub fn get(&self, id: &CategoryId) -> Option<&Category> {
        self.categories.get(id)
    }

    pub fn category(&self, id: &CategoryId) -> Result<&Category, TaxonomyError> {
        self.categories
            .get(id)
            .ok_or_else(|| TaxonomyError::UnknownCategory(id.clone()))
    }

    /// Categories in source-document order.
    pub fn iter(&self) -> impl Iterator<Item = &Category> + '_ {
        self.order.iter().map(move |id| &self.categories[id])
    }

    /// Child ids in the order the source document lists them.
    pub fn children(&self, id: &CategoryId) -> Result<&[CategoryId], TaxonomyError> {
        Ok(&self.category(id)?.child_ids)
    }

    pub fn parents(&self, id: &CategoryId) -> Result<&BTreeSet<CategoryId>, TaxonomyError> {
        self.parents
            .get(id)
            .ok_or_else(|| TaxonomyError::UnknownCategory(id.clone()))
    }

    /// Union of the children of every parent, without `id` itself.
    pub fn siblings(&self, id: &CategoryId) -> Result<BTreeSet<CategoryId>, TaxonomyError> {
        let mut out = BTreeSet::new();
        for parent in self.parents(id)? {
            out.extend(
                self.categories[parent]
                    .child_ids
                    .iter()
                    .filter(|c| *c != id)
                    .cloned(),
            );
        }
        Ok(out)
    }

    pub fn is_child(&self, parent: &CategoryId, child: &CategoryId) -> Result<bool, TaxonomyError> {
        Ok(self.children(parent)?.contains(child))
    }

    pub fn is_sibling(&self, a: &CategoryId, b: &CategoryId) -> Result<bool, TaxonomyError> {
        if !self.contains(b) {
            return Err(TaxonomyError::UnknownCategory(b.clone()));
        }
        if a == b {
            return Ok(false);
        }
        let pa = self.parents(a)?;
        Ok(self.parents(b)?.iter().any(|p| pa.contains(p)))
    }

    /// Every distinct root-to-`id` path, sorted lexicographically by node ids.
    pub fn ancestor_paths(&self, id: &CategoryId) -> Result<Vec<HierarchyPath>, TaxonomyError> {
        self.category(id)?;
        let mut memo: BTreeMap<&CategoryId, Vec<Vec<CategoryId>>> = BTreeMap::new();
        let mut paths: Vec<HierarchyPath> = self
            .paths_to(id, &mut memo)
            .into_iter()
            .map(HierarchyPath)
            .collect();
        paths.sort();
        Ok(paths)
    }

    fn paths_to<'a>(
        &'a self,
        id: &'a CategoryId,
        memo: &mut BTreeMap<&'a CategoryId, Vec<Vec<CategoryId>>>,
    ) -> Vec<Vec<CategoryId>> {
        if let Some(done) = memo.get(id) {
            return done.clone();
        }
        let parents = &self.parents[id];
        let paths = if parents.is_empty() {
            vec![vec![id.clone()]]
        } else {
            let mut out = Vec::new();
            for parent in parents {
                for mut path in self.paths_to(parent, memo) {
                    path.push(id.clone());
                    out.push(path);
                }
            }
            out
        };
        memo.insert(id, paths.clone());
        paths
    }

    /// Transitive closure of the child relation from `id`, excluding `id`.
    pub fn descendants(&self, id: &CategoryId) -> Result<BTreeSet<CategoryId>, TaxonomyError> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&CategoryId> = self.children(id)?.iter().collect();
        while let Some(next) = stack.pop() {
            if seen.insert(next.clone()) {
                stack.extend(self.categories[next].child_ids.iter());
            }
        }
        Ok(seen)
    }

    pub fn is_descendant(
        &self,
        ancestor: &CategoryId,
        node: &CategoryId,
    ) -> Result<bool, TaxonomyError> {
        self.category(node)?;
        self.category(ancestor)?;
        if ancestor == node {
            return Ok(false);
        }
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&CategoryId> = self.categories[ancestor].child_ids.iter().collect();
        while let Some(next) = stack.pop() {
            if next == node {
                return Ok(true);
            }
            if seen.insert(next) {
                stack.extend(self.categories[next].child_ids.iter());
            }
        }
        Ok(false)
    }

    /// A topological order (parents before children), ties broken by
    /// document order.
    pub fn topological_order(&self) -> Vec<&CategoryId> {
        let position: BTreeMap<&CategoryId, usize> =
            self.order.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let mut indegree: BTreeMap<&CategoryId, usize> = self
            .parents
            .iter()
            .map(|(id, ps)| (id, ps.len()))
            .collect();
        let mut ready: BTreeSet<(usize, &CategoryId)> =
            self.roots.iter().map(|id| (position[id], id)).collect();
        let mut out = Vec::with_capacity(self.order.len());
        while let Some(entry) = ready.pop_first() {
            let id = entry.1;
            out.push(id);
            for child in &self.categories[id].child_ids {
                let d = indegree.get_mut(child).expect("validated child");
                *d -= 1;
                if *d == 0 {
                    ready.insert((position[child], child));
                }
            }
        }
        out
    }
}

/// Iterative three-colour DFS; returns the first cycle found as a closed
/// path `[a, b, ..., a]`.
fn find_cycle(
    order: &[CategoryId],
    categories: &BTreeMap<CategoryId, Category>,
) -> Option<Vec<CategoryId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Colour {
        White,
        Grey,
        Black,
    }
    let mut colour: BTreeMap<&CategoryId, Colour> =
        order.iter().map(|id| (id, Colour::White)).collect();

    for start in order {
        if colour[start] != Colour::White {
            continue;
        }
        // (node, index of the next child to visit)
        let mut stack: Vec<(&CategoryId, usize)> = vec![(start, 0)];
        colour.insert(start, Colour::Grey);
        while let Some(top) = stack.last_mut() {
            let (node, next) = *top;
            let children = &categories[node].child_ids;
            if next == children.len() {
                colour.insert(node, Colour::Black);
                stack.pop();
                continue;
            }
            top.1 += 1;
            let child = &children[next];
            match colour[child] {
                Colour::White => {
                    colour.insert(child, Colour::Grey);
                    stack.push((child, 0));
                }
                Colour::Grey => {
                    let from = stack
                        .iter()
                        .position(|(n, _)| *n == child)
                        .expect("grey node is on the stack");
                    let mut cycle: Vec<CategoryId> =
                        stack[from..].iter().map(|(n, _)| (*n).clone()).collect();
                    cycle.push(child.clone());
                    return Some(cycle);
                }
                Colour::Black => {}
            }
        }
    }
    None
}
