//! Property tests for the taxonomy, search and refinement invariants.
//!
//! Every expected value here comes from a brute-force oracle written
//! independently of the library code it checks.

use std::collections::{BTreeMap, BTreeSet};

use chrono::TimeZone;
use proptest::prelude::*;
use taxon_core::search::{similarity, trigrams, SearchIndex, SearchParams};
use taxon_core::session::{PresenceVerdict, RefinementTask, SessionConfig, SoundResource};
use taxon_core::{Category, CategoryId, RowId, TaskId, Taxonomy, TaxonomyError};

fn cid(i: usize) -> CategoryId {
    CategoryId::new(format!("n{i:02}")).unwrap()
}

/// Random DAG over `n` nodes: edges only go from a lower to a higher index,
/// so the graph is acyclic by construction.
fn dag_strategy(max_nodes: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    (2..max_nodes).prop_flat_map(|n| {
        let per_node: Vec<_> = (0..n)
            .map(|i| {
                let later: Vec<usize> = ((i + 1)..n).collect();
                if later.is_empty() {
                    Just(Vec::new()).boxed()
                } else {
                    proptest::sample::subsequence(later.clone(), 0..=later.len().min(4)).boxed()
                }
            })
            .collect();
        per_node
    })
}

fn build(adjacency: &[Vec<usize>]) -> Taxonomy {
    let records = adjacency
        .iter()
        .enumerate()
        .map(|(i, children)| {
            let mut c = Category::named(cid(i), format!("node {i}"));
            c.child_ids = children.iter().map(|&j| cid(j)).collect();
            c
        })
        .collect();
    Taxonomy::from_categories(records).unwrap()
}

/// Reachability matrix by repeated relaxation.
fn closure_oracle(adjacency: &[Vec<usize>]) -> Vec<BTreeSet<usize>> {
    let n = adjacency.len();
    let mut reach: Vec<BTreeSet<usize>> = adjacency
        .iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            let current: Vec<usize> = reach[i].iter().copied().collect();
            for j in current {
                let extra: Vec<usize> = reach[j].iter().copied().collect();
                for k in extra {
                    changed |= reach[i].insert(k);
                }
            }
        }
        if !changed {
            return reach;
        }
    }
}

/// Number of root-to-node paths by dynamic programming over indices.
fn path_count_oracle(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut has_parent = vec![false; n];
    for children in adjacency {
        for &c in children {
            has_parent[c] = true;
        }
    }
    let mut count = vec![0usize; n];
    for i in 0..n {
        if !has_parent[i] {
            count[i] = 1;
        }
    }
    for i in 0..n {
        for &c in &adjacency[i] {
            count[c] += count[i];
        }
    }
    count
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn edge_inversion(adj in dag_strategy(24)) {
        let t = build(&adj);
        for (p, children) in adj.iter().enumerate() {
            for (c, _) in adj.iter().enumerate() {
                let forward = t.children(&cid(p)).unwrap().contains(&cid(c));
                let backward = t.parents(&cid(c)).unwrap().contains(&cid(p));
                prop_assert_eq!(forward, backward);
                prop_assert_eq!(forward, children.contains(&c));
            }
        }
    }

    #[test]
    fn sibling_symmetry(adj in dag_strategy(24)) {
        let t = build(&adj);
        for a in 0..adj.len() {
            for b in 0..adj.len() {
                let share_parent = adj.iter().any(|cs| cs.contains(&a) && cs.contains(&b));
                let a_has_b = t.siblings(&cid(a)).unwrap().contains(&cid(b));
                let b_has_a = t.siblings(&cid(b)).unwrap().contains(&cid(a));
                prop_assert_eq!(a_has_b, b_has_a);
                prop_assert_eq!(a_has_b, share_parent && a != b);
            }
        }
    }

    #[test]
    fn paths_are_sound_and_complete(adj in dag_strategy(16)) {
        let t = build(&adj);
        let expected = path_count_oracle(&adj);
        for (i, &count) in expected.iter().enumerate() {
            let paths = t.ancestor_paths(&cid(i)).unwrap();
            prop_assert_eq!(paths.len(), count);
            let mut sorted = paths.clone();
            sorted.sort();
            prop_assert_eq!(&sorted, &paths);
            for path in &paths {
                prop_assert!(t.roots().contains(path.root()));
                prop_assert_eq!(path.target(), &cid(i));
                for pair in path.nodes().windows(2) {
                    prop_assert!(t.children(&pair[0]).unwrap().contains(&pair[1]));
                }
            }
        }
    }

    #[test]
    fn descendants_match_closure(adj in dag_strategy(24)) {
        let t = build(&adj);
        let reach = closure_oracle(&adj);
        for (i, below) in reach.iter().enumerate() {
            let expected: BTreeSet<CategoryId> = below.iter().map(|&j| cid(j)).collect();
            prop_assert_eq!(t.descendants(&cid(i)).unwrap(), expected);
            for j in 0..adj.len() {
                prop_assert_eq!(t.is_descendant(&cid(i), &cid(j)).unwrap(), below.contains(&j));
            }
        }
    }

    #[test]
    fn deterministic_loads(adj in dag_strategy(24)) {
        let a = build(&adj);
        let b = build(&adj);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.topological_order(), b.topological_order());
        let pos: BTreeMap<&CategoryId, usize> =
            a.topological_order().into_iter().enumerate().map(|(i, id)| (id, i)).collect();
        prop_assert_eq!(pos.len(), adj.len());
        for (p, children) in adj.iter().enumerate() {
            for &c in children {
                prop_assert!(pos[&cid(p)] < pos[&cid(c)]);
            }
        }
    }

    #[test]
    fn injected_back_edge_is_a_cycle(adj in dag_strategy(20), pick in any::<prop::sample::Index>()) {
        let reach = closure_oracle(&adj);
        let pairs: Vec<(usize, usize)> = (0..adj.len())
            .flat_map(|i| reach[i].iter().map(move |&j| (i, j)))
            .collect();
        prop_assume!(!pairs.is_empty());
        let (ancestor, descendant) = pairs[pick.index(pairs.len())];
        let mut cyclic = adj.clone();
        cyclic[descendant].push(ancestor);
        let records: Vec<Category> = cyclic
            .iter()
            .enumerate()
            .map(|(i, children)| {
                let mut c = Category::named(cid(i), format!("node {i}"));
                c.child_ids = children.iter().map(|&j| cid(j)).collect();
                c
            })
            .collect();
        match Taxonomy::from_categories(records) {
            Err(TaxonomyError::CycleDetected(path)) => {
                prop_assert!(path.len() >= 2);
                prop_assert_eq!(path.first(), path.last());
                for pair in path.windows(2) {
                    let from: usize = pair[0].as_str()[1..].parse().unwrap();
                    let to: usize = pair[1].as_str()[1..].parse().unwrap();
                    prop_assert!(cyclic[from].contains(&to));
                }
            }
            other => prop_assert!(false, "expected a cycle, got {:?}", other),
        }
    }
}

/// Independent trigram oracle: byte-free, works on a `Vec<char>` per token
/// and collects windows into a sorted, deduplicated `Vec<String>`.
fn oracle_trigrams(text: &str) -> Vec<String> {
    let lowered: String = text.chars().flat_map(|c| c.to_lowercase()).collect();
    let mut out: Vec<String> = Vec::new();
    for word in lowered.split(|c: char| !c.is_alphanumeric()) {
        if word.is_empty() {
            continue;
        }
        let chars: Vec<char> = format!("  {word} ").chars().collect();
        let mut i = 0;
        while i + 3 <= chars.len() {
            out.push(chars[i..i + 3].iter().collect());
            i += 1;
        }
    }
    out.sort();
    out.dedup();
    out
}

fn oracle_similarity(a: &str, b: &str) -> f64 {
    let ga = oracle_trigrams(a);
    let gb = oracle_trigrams(b);
    let mut shared = 0usize;
    for g in &ga {
        if gb.iter().any(|h| h == g) {
            shared += 1;
        }
    }
    let mut union: Vec<&String> = ga.iter().chain(gb.iter()).collect();
    union.sort();
    union.dedup();
    if union.is_empty() {
        0.0
    } else {
        shared as f64 / union.len() as f64
    }
}

fn as_strings(text: &str) -> Vec<String> {
    trigrams(text).iter().map(|g| g.to_string()).collect()
}

#[test]
fn trigram_examples_against_oracle() {
    assert_eq!(as_strings("bass guitar"), oracle_trigrams("bass guitar"));
    assert_eq!(as_strings("bass guitar").len(), 12);
    // gitar has 6 grams, guitar has 7; they share "  g", "ita", "tar", "ar ".
    // 4 / (6 + 7 - 4)
    assert_eq!(oracle_similarity("gitar", "guitar"), 4.0 / 9.0);
    assert_eq!(similarity(&trigrams("gitar"), &trigrams("guitar")), 4.0 / 9.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn similarity_matches_oracle(a in "[a-zA-Z0-9 ,.-]{0,24}", b in "[a-zA-Z0-9 ,.-]{0,24}") {
        let ta = trigrams(&a);
        let tb = trigrams(&b);
        let s = similarity(&ta, &tb);
        prop_assert_eq!(s, oracle_similarity(&a, &b));
        prop_assert_eq!(s, similarity(&tb, &ta));
        prop_assert!((0.0..=1.0).contains(&s));
        if !ta.is_empty() {
            prop_assert_eq!(similarity(&ta, &ta), 1.0);
        }
        prop_assert_eq!(as_strings(&a), oracle_trigrams(&a));
    }

    #[test]
    fn unicode_trigrams_match_oracle(a in "\\PC{0,16}") {
        prop_assert_eq!(as_strings(&a), oracle_trigrams(&a));
    }
}

fn vocabulary_taxonomy() -> Taxonomy {
    let names = [
        "Guitar", "Bass guitar", "Electric guitar", "Acoustic guitar", "Drum", "Snare drum",
        "Drum kit", "Bird", "Bird vocalization, bird call, bird song", "Dog", "Bark", "Water",
        "Rain", "Raindrop", "Engine", "Car", "Vehicle", "Music", "Musical instrument", "Speech",
    ];
    let mut records: Vec<Category> = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut c = Category::named(cid(i + 1), *name);
            c.description = format!("Sounds of {} and related things like {}", name, names[(i + 7) % names.len()]);
            c
        })
        .collect();
    let mut root = Category::named(cid(0), "All");
    root.child_ids = (1..=names.len()).map(cid).collect();
    records.insert(0, root);
    Taxonomy::from_categories(records).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn search_hits_are_independently_scored(
        query in "[a-z]{2,8}( [a-z]{2,8})?",
        threshold in 0.0f64..0.5,
        limit in 1usize..40,
    ) {
        let t = vocabulary_taxonomy();
        let idx = SearchIndex::build(&t, 0.5).unwrap();
        let params = SearchParams { limit, threshold };
        let hits = idx.search(&query, &params).unwrap();
        prop_assert_eq!(&hits, &idx.search(&query, &params).unwrap());

        // Exhaustive oracle: score every category from raw text.
        let mut expected: Vec<(f64, String, CategoryId)> = t
            .iter()
            .map(|c| {
                let name = oracle_similarity(&query, &c.name);
                let desc = 0.5 * oracle_similarity(&query, &c.description);
                (name.max(desc), c.name.clone(), c.id.clone())
            })
            .filter(|(s, _, _)| *s > threshold)
            .collect();
        expected.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        expected.truncate(limit);
        let got: Vec<(f64, CategoryId)> = hits.iter().map(|h| (h.score, h.category_id.clone())).collect();
        let want: Vec<(f64, CategoryId)> = expected.into_iter().map(|(s, _, id)| (s, id)).collect();
        prop_assert_eq!(got, want);

        for hit in &hits {
            prop_assert!(hit.score > threshold && hit.score <= 1.0);
            let (own, field) = idx.score(&hit.category_id, &query).unwrap();
            prop_assert_eq!(own, hit.score);
            prop_assert_eq!(field, hit.matched_field);
        }
    }
}

fn sound() -> SoundResource {
    SoundResource {
        sound_id: "s".into(),
        title: String::new(),
        audio_uri: "/audio/s.wav".into(),
        duration_s: 5.0,
        metadata: Default::default(),
        spectrogram_uri: None,
    }
}

#[derive(Debug, Clone)]
enum Op {
    Child(prop::sample::Index),
    Sibling(prop::sample::Index),
    Undo,
    Duplicate,
    Verdict(usize),
}

fn op_strategy() -> impl Strategy<Value = (prop::sample::Index, Op)> {
    let op = prop_oneof![
        4 => any::<prop::sample::Index>().prop_map(Op::Child),
        2 => any::<prop::sample::Index>().prop_map(Op::Sibling),
        2 => Just(Op::Undo),
        1 => Just(Op::Duplicate),
        1 => (0usize..3).prop_map(Op::Verdict),
    ];
    (any::<prop::sample::Index>(), op)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn history_replay_reproduces_current(
        adj in dag_strategy(20),
        start in any::<prop::sample::Index>(),
        ops in prop::collection::vec(op_strategy(), 0..40),
    ) {
        let t = build(&adj);
        let cfg = SessionConfig::default();
        let at = |s: i64| chrono::Utc.timestamp_opt(1_000_000 + s, 0).unwrap();
        let proposal = cid(start.index(adj.len()));
        let mut task = RefinementTask::new(
            TaskId::new("t").unwrap(), sound(), vec![proposal], "a".into(), &t, at(0),
        ).unwrap();
        for (step, (row_pick, op)) in ops.into_iter().enumerate() {
            let now = at(step as i64 + 1);
            let row: RowId = task.rows()[row_pick.index(task.rows().len())].row_id.clone();
            let current = task.row(&row).unwrap().current_category.clone();
            match op {
                Op::Child(i) => {
                    let children = t.children(&current).unwrap();
                    if !children.is_empty() {
                        let child = children[i.index(children.len())].clone();
                        task.refine_to_child(&t, &row, child, now).unwrap();
                    }
                }
                Op::Sibling(i) => {
                    let sibs: Vec<_> = t.siblings(&current).unwrap().into_iter().collect();
                    if !sibs.is_empty() {
                        task.move_to_sibling(&t, &cfg, &row, sibs[i.index(sibs.len())].clone(), now).unwrap();
                    }
                }
                Op::Undo => { let _ = task.undo_move(&row, now); }
                Op::Duplicate => { task.duplicate_row(&row, now).unwrap(); }
                Op::Verdict(v) => { task.set_presence(&row, PresenceVerdict::ALL[v], now).unwrap(); }
            }
            for r in task.rows() {
                prop_assert_eq!(r.replay(&t), Ok(r.current_category.clone()));
            }
        }
    }
}
