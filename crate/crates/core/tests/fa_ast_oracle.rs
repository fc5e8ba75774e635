mod common;

use std::collections::BTreeSet;

use common::{brute_force_edges, reference_tokens, GOLDEN};
use flowclone::flow::{self, EdgeType};
use flowclone::frontend::{parse_fragment, SourceFragment};

#[test]
fn golden_tokens_match_reference_lexer() {
    for g in &GOLDEN {
        let tree = parse_fragment(&SourceFragment::new(g.id, g.code, g.granularity)).unwrap();
        assert_eq!(tree.tokens(), reference_tokens(g.code), "{}", g.id);
    }
}

#[test]
fn golden_edges_match_brute_force() {
    for g in &GOLDEN {
        let tree = parse_fragment(&SourceFragment::new(g.id, g.code, g.granularity)).unwrap();
        let graph = flow::build(&tree).unwrap();
        let built: BTreeSet<(usize, usize, EdgeType)> = graph.edges.iter().map(|e| (e.0, e.1, e.2)).collect();
        assert_eq!(built.len(), graph.edges.len(), "{}: duplicate edges", g.id);
        let oracle = brute_force_edges(&tree);
        let missing: Vec<_> = oracle.difference(&built).collect();
        let extra: Vec<_> = built.difference(&oracle).collect();
        assert!(missing.is_empty() && extra.is_empty(), "{}: missing {missing:?}, extra {extra:?}", g.id);
    }
}

#[test]
fn golden_corpus_exercises_every_edge_type() {
    let mut seen = BTreeSet::new();
    for g in &GOLDEN {
        let tree = parse_fragment(&SourceFragment::new(g.id, g.code, g.granularity)).unwrap();
        seen.extend(brute_force_edges(&tree).into_iter().map(|e| e.2));
    }
    let missing: Vec<_> = EdgeType::ALL.iter().filter(|t| !seen.contains(t)).collect();
    assert!(missing.is_empty(), "{missing:?}");
}

fn build(id: &str) -> flow::FlowGraph {
    let g = GOLDEN.iter().find(|g| g.id == id).unwrap();
    flow::build(&parse_fragment(&SourceFragment::new(g.id, g.code, g.granularity)).unwrap()).unwrap()
}

#[test]
fn worked_examples() {
    let g = build("while_counter");
    assert_eq!(g.count(EdgeType::WhileExec), 1);
    assert_eq!(g.count(EdgeType::WhileNext), 1);
    let a_occurrences = g.node_labels.iter().filter(|l| *l == "a").count();
    assert_eq!(a_occurrences, 5);
    assert_eq!(g.count(EdgeType::NextUse), a_occurrences - 1);
    assert_eq!(g.count(EdgeType::Child), g.count(EdgeType::Parent));

    let g = build("if_else");
    assert_eq!((g.count(EdgeType::CondTrue), g.count(EdgeType::CondFalse)), (1, 1));
    assert_eq!(g.count(EdgeType::NextUse), 0);

    let g = build("recursion");
    assert_eq!((g.count(EdgeType::CondTrue), g.count(EdgeType::CondFalse)), (1, 0));

    for id in ["do_while", "switch_case", "try_catch", "array_init", "return_one"] {
        let g = build(id);
        for t in [EdgeType::WhileExec, EdgeType::ForExec, EdgeType::CondTrue, EdgeType::CondFalse] {
            assert_eq!(g.count(t), 0, "{id} {t:?}");
        }
    }

    let g = build("class_fields");
    let count_uses = g.node_labels.iter().filter(|l| *l == "count").count();
    assert_eq!(count_uses, 3);
    assert_eq!(g.count(EdgeType::NextUse), 2);

    for g in GOLDEN.iter().map(|g| build(g.id)) {
        g.check_invariants().unwrap();
        assert!(g.edges.len() >= 2 * (g.num_nodes - 1));
    }
}
