//! Flow-augmented ASTs: the syntax tree plus sibling, token, next-use and
//! control-flow edges, each non-symmetric edge mirrored by a backward edge.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{AstTree, NodeKind, TokenClass};

/// Bumped whenever the edge rules change, so cached graphs get rebuilt.
pub const RULES_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeType {
    Child,
    Parent,
    NextSib,
    NextToken,
    NextUse,
    CondTrue,
    CondFalse,
    WhileExec,
    WhileNext,
    ForExec,
    ForNext,
    NextStmt,
    PrevSib,
    PrevToken,
    PrevUse,
    CondTrueBack,
    CondFalseBack,
    NextStmtBack,
}

impl EdgeType {
    pub const COUNT: usize = 18;

    pub const ALL: [EdgeType; EdgeType::COUNT] = [
        EdgeType::Child,
        EdgeType::Parent,
        EdgeType::NextSib,
        EdgeType::NextToken,
        EdgeType::NextUse,
        EdgeType::CondTrue,
        EdgeType::CondFalse,
        EdgeType::WhileExec,
        EdgeType::WhileNext,
        EdgeType::ForExec,
        EdgeType::ForNext,
        EdgeType::NextStmt,
        EdgeType::PrevSib,
        EdgeType::PrevToken,
        EdgeType::PrevUse,
        EdgeType::CondTrueBack,
        EdgeType::CondFalseBack,
        EdgeType::NextStmtBack,
    ];

    /// Row of this type in the edge embedding table.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::Child => "Child",
            EdgeType::Parent => "Parent",
            EdgeType::NextSib => "NextSib",
            EdgeType::NextToken => "NextToken",
            EdgeType::NextUse => "NextUse",
            EdgeType::CondTrue => "CondTrue",
            EdgeType::CondFalse => "CondFalse",
            EdgeType::WhileExec => "WhileExec",
            EdgeType::WhileNext => "WhileNext",
            EdgeType::ForExec => "ForExec",
            EdgeType::ForNext => "ForNext",
            EdgeType::NextStmt => "NextStmt",
            EdgeType::PrevSib => "PrevSib",
            EdgeType::PrevToken => "PrevToken",
            EdgeType::PrevUse => "PrevUse",
            EdgeType::CondTrueBack => "CondTrueBack",
            EdgeType::CondFalseBack => "CondFalseBack",
            EdgeType::NextStmtBack => "NextStmtBack",
        }
    }

    pub fn from_name(name: &str) -> Option<EdgeType> {
        EdgeType::ALL.into_iter().find(|t| t.name() == name)
    }

    /// The backward kind added for a forward kind that has no natural reverse.
    pub fn backward(self) -> Option<EdgeType> {
        match self {
            EdgeType::NextSib => Some(EdgeType::PrevSib),
            EdgeType::NextToken => Some(EdgeType::PrevToken),
            EdgeType::NextUse => Some(EdgeType::PrevUse),
            EdgeType::CondTrue => Some(EdgeType::CondTrueBack),
            EdgeType::CondFalse => Some(EdgeType::CondFalseBack),
            EdgeType::NextStmt => Some(EdgeType::NextStmtBack),
            _ => None,
        }
    }

    pub fn is_backward(self) -> bool {
        matches!(
            self,
            EdgeType::PrevSib
                | EdgeType::PrevToken
                | EdgeType::PrevUse
                | EdgeType::CondTrueBack
                | EdgeType::CondFalseBack
                | EdgeType::NextStmtBack
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge(pub usize, pub usize, pub EdgeType);

impl Edge {
    pub fn src(&self) -> usize {
        self.0
    }
    pub fn dst(&self) -> usize {
        self.1
    }
    pub fn etype(&self) -> EdgeType {
        self.2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowGraph {
    pub fragment_id: String,
    pub num_nodes: usize,
    #[serde(rename = "labels")]
    pub node_labels: Vec<String>,
    pub edges: Vec<Edge>,
    /// `[line, column]` for terminal nodes, `null` for nonterminals. Empty
    /// when the graph was built without source information.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub positions: Vec<Option<[usize; 2]>>,
}

impl FlowGraph {
    /// Graph holding only the tree's nodes, no edges.
    fn nodes_of(tree: &AstTree) -> FlowGraph {
        FlowGraph {
            fragment_id: tree.fragment_id.clone(),
            num_nodes: tree.len(),
            node_labels: tree.nodes.iter().map(|n| n.label().to_string()).collect(),
            edges: Vec::new(),
            positions: tree
                .nodes
                .iter()
                .map(|n| n.token.as_ref().map(|t| [t.line, t.column]))
                .collect(),
        }
    }

    pub fn is_terminal(&self, node: usize) -> bool {
        self.positions.get(node).is_some_and(|p| p.is_some())
    }

    pub fn count(&self, etype: EdgeType) -> usize {
        self.edges.iter().filter(|e| e.2 == etype).count()
    }

    pub fn histogram(&self) -> BTreeMap<EdgeType, usize> {
        let mut out = BTreeMap::new();
        for e in &self.edges {
            *out.entry(e.2).or_insert(0) += 1;
        }
        out
    }

    /// Returns a copy with node ids renumbered: old node `i` becomes
    /// `perm[i]`. Edge order is preserved.
    pub fn permuted(&self, perm: &[usize]) -> FlowGraph {
        assert_eq!(perm.len(), self.num_nodes);
        let mut labels = vec![String::new(); self.num_nodes];
        let mut positions = vec![None; self.positions.len()];
        for (old, &new) in perm.iter().enumerate() {
            labels[new] = self.node_labels[old].clone();
            if !self.positions.is_empty() {
                positions[new] = self.positions[old];
            }
        }
        FlowGraph {
            fragment_id: self.fragment_id.clone(),
            num_nodes: self.num_nodes,
            node_labels: labels,
            edges: self
                .edges
                .iter()
                .map(|e| Edge(perm[e.0], perm[e.1], e.2))
                .collect(),
            positions,
        }
    }

    /// Checks the structural invariants every built graph satisfies.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.node_labels.len() != self.num_nodes {
            return Err("label count differs from num_nodes".into());
        }
        let set: HashSet<Edge> = self.edges.iter().copied().collect();
        if set.len() != self.edges.len() {
            return Err("duplicate edge triples".into());
        }
        for e in &self.edges {
            if e.0 >= self.num_nodes || e.1 >= self.num_nodes {
                return Err(format!("edge {e:?} out of range"));
            }
            if e.0 == e.1 {
                return Err(format!("self-loop {e:?}"));
            }
            let mirror = match e.2 {
                EdgeType::Child => Some(EdgeType::Parent),
                EdgeType::Parent => Some(EdgeType::Child),
                EdgeType::WhileExec => Some(EdgeType::WhileNext),
                EdgeType::WhileNext => Some(EdgeType::WhileExec),
                EdgeType::ForExec => Some(EdgeType::ForNext),
                EdgeType::ForNext => Some(EdgeType::ForExec),
                t => t.backward(),
            };
            if let Some(m) = mirror {
                if !set.contains(&Edge(e.1, e.0, m)) {
                    return Err(format!("edge {e:?} lacks its {m:?} mirror"));
                }
            }
        }
        for t in EdgeType::ALL {
            if let Some(b) = t.backward() {
                if self.count(t) != self.count(b) {
                    return Err(format!("{t:?} and {b:?} counts differ"));
                }
            }
        }
        if !self.positions.is_empty() {
            self.check_token_path()?;
        }
        Ok(())
    }

    fn check_token_path(&self) -> std::result::Result<(), String> {
        let terminals: Vec<usize> = (0..self.num_nodes).filter(|&i| self.is_terminal(i)).collect();
        let mut next: HashMap<usize, usize> = HashMap::new();
        let mut indeg: HashMap<usize, usize> = HashMap::new();
        for e in self.edges.iter().filter(|e| e.2 == EdgeType::NextToken) {
            if !self.is_terminal(e.0) || !self.is_terminal(e.1) {
                return Err(format!("NextToken edge {e:?} touches a nonterminal"));
            }
            if next.insert(e.0, e.1).is_some() {
                return Err(format!("node {} has two NextToken successors", e.0));
            }
            *indeg.entry(e.1).or_insert(0) += 1;
        }
        if terminals.len() <= 1 {
            return if next.is_empty() {
                Ok(())
            } else {
                Err("NextToken edges without a chain".into())
            };
        }
        let starts: Vec<usize> = terminals
            .iter()
            .copied()
            .filter(|t| !indeg.contains_key(t))
            .collect();
        if starts.len() != 1 || indeg.values().any(|&d| d != 1) {
            return Err("NextToken edges do not form a single path".into());
        }
        let mut seen = 1;
        let mut cur = starts[0];
        while let Some(&n) = next.get(&cur) {
            seen += 1;
            cur = n;
            if seen > terminals.len() {
                return Err("NextToken chain has a cycle".into());
            }
        }
        if seen != terminals.len() {
            return Err(format!(
                "NextToken path covers {seen} of {} terminals",
                terminals.len()
            ));
        }
        Ok(())
    }
}

/// Child and Parent edges: one of each per tree edge.
pub fn add_ast_edges(tree: &AstTree) -> FlowGraph {
    let mut graph = FlowGraph::nodes_of(tree);
    for node in &tree.nodes {
        for &c in &node.children {
            graph.edges.push(Edge(node.id, c, EdgeType::Child));
            graph.edges.push(Edge(c, node.id, EdgeType::Parent));
        }
    }
    graph
}

pub fn add_sibling_edges(tree: &AstTree) -> Vec<Edge> {
    tree.nodes
        .iter()
        .flat_map(|n| {
            n.children
                .windows(2)
                .map(|w| Edge(w[0], w[1], EdgeType::NextSib))
        })
        .collect()
}

pub fn add_token_edges(tree: &AstTree) -> Vec<Edge> {
    tree.terminals_in_order()
        .windows(2)
        .map(|w| Edge(w[0], w[1], EdgeType::NextToken))
        .collect()
}

/// Links consecutive occurrences of each variable name.
///
/// A variable is any identifier declared in the fragment as a local,
/// parameter or field; matching is lexical and ignores shadowing.
pub fn add_next_use_edges(tree: &AstTree) -> Vec<Edge> {
    let declared: HashSet<&str> = tree
        .nodes
        .iter()
        .filter_map(|n| n.token.as_ref())
        .filter(|t| t.declares)
        .map(|t| t.text.as_str())
        .collect();
    let mut last: HashMap<&str, usize> = HashMap::new();
    let mut edges = Vec::new();
    for id in tree.terminals_in_order() {
        let tok = tree.nodes[id].token.as_ref().expect("terminal has token");
        if tok.class != TokenClass::Identifier || !declared.contains(tok.text.as_str()) {
            continue;
        }
        if let Some(prev) = last.insert(tok.text.as_str(), id) {
            edges.push(Edge(prev, id, EdgeType::NextUse));
        }
    }
    edges
}

pub fn add_control_flow_edges(tree: &AstTree) -> Result<Vec<Edge>> {
    let mut edges = Vec::new();
    for node in &tree.nodes {
        let kids = &node.children;
        let malformed = |expected: &'static str| Error::MalformedNode {
            node: node.id,
            kind: node.kind.name(),
            expected,
            found: kids.len(),
        };
        match node.kind {
            NodeKind::IfStatement => {
                if !(2..=3).contains(&kids.len()) {
                    return Err(malformed("2 or 3"));
                }
                edges.push(Edge(kids[0], kids[1], EdgeType::CondTrue));
                if kids.len() == 3 {
                    edges.push(Edge(kids[0], kids[2], EdgeType::CondFalse));
                }
            }
            NodeKind::WhileStatement | NodeKind::ForStatement => {
                if kids.len() != 2 {
                    return Err(malformed("2"));
                }
                let (exec, next) = if node.kind == NodeKind::WhileStatement {
                    (EdgeType::WhileExec, EdgeType::WhileNext)
                } else {
                    (EdgeType::ForExec, EdgeType::ForNext)
                };
                edges.push(Edge(kids[0], kids[1], exec));
                edges.push(Edge(kids[1], kids[0], next));
            }
            NodeKind::BlockStatement => {
                let stmts: Vec<usize> = kids
                    .iter()
                    .copied()
                    .filter(|&c| !tree.nodes[c].is_terminal())
                    .collect();
                edges.extend(
                    stmts
                        .windows(2)
                        .map(|w| Edge(w[0], w[1], EdgeType::NextStmt)),
                );
            }
            _ => {}
        }
    }
    Ok(edges)
}

/// Adds the paired backward edge for every forward edge whose kind has one.
pub fn add_backward_edges(mut graph: FlowGraph) -> FlowGraph {
    let backward: Vec<Edge> = graph
        .edges
        .iter()
        .filter_map(|e| e.2.backward().map(|b| Edge(e.1, e.0, b)))
        .collect();
    graph.edges.extend(backward);
    graph
}

/// Builds the full flow-augmented graph for a tree.
pub fn build(tree: &AstTree) -> Result<FlowGraph> {
    let mut graph = add_ast_edges(tree);
    graph.edges.extend(add_sibling_edges(tree));
    graph.edges.extend(add_token_edges(tree));
    graph.edges.extend(add_next_use_edges(tree));
    graph.edges.extend(add_control_flow_edges(tree)?);
    let mut seen = HashSet::with_capacity(graph.edges.len());
    graph.edges.retain(|e| seen.insert(*e));
    Ok(add_backward_edges(graph))
}

/// Per-fragment counts of the control-flow node kinds.
pub fn control_flow_counts(tree: &AstTree) -> BTreeMap<&'static str, usize> {
    [
        NodeKind::IfStatement,
        NodeKind::WhileStatement,
        NodeKind::ForStatement,
        NodeKind::BlockStatement,
        NodeKind::DoStatement,
        NodeKind::SwitchStatement,
    ]
    .into_iter()
    .map(|k| (k.name(), tree.count_kind(k)))
    .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFormat {
    Dot,
    Json,
}

impl std::str::FromStr for GraphFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(GraphFormat::Dot),
            "json" => Ok(GraphFormat::Json),
            other => Err(Error::InvalidArgument(format!(
                "unknown graph format `{other}` (expected dot or json)"
            ))),
        }
    }
}

impl std::fmt::Display for GraphFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.extension())
    }
}

impl GraphFormat {
    pub fn extension(self) -> &'static str {
        match self {
            GraphFormat::Dot => "dot",
            GraphFormat::Json => "json",
        }
    }
}

pub fn export_graph(graph: &FlowGraph, format: GraphFormat) -> String {
    match format {
        GraphFormat::Dot => to_dot(graph),
        GraphFormat::Json => serde_json::to_string(graph).expect("graph serializes"),
    }
}

pub fn import_graph(text: &str) -> Result<FlowGraph> {
    let graph: FlowGraph = serde_json::from_str(text)?;
    if graph.node_labels.len() != graph.num_nodes {
        return Err(Error::format(
            &graph.fragment_id,
            "label count differs from num_nodes",
        ));
    }
    if !graph.positions.is_empty() && graph.positions.len() != graph.num_nodes {
        return Err(Error::format(
            &graph.fragment_id,
            "position count differs from num_nodes",
        ));
    }
    if let Some(e) = graph
        .edges
        .iter()
        .find(|e| e.0 >= graph.num_nodes || e.1 >= graph.num_nodes)
    {
        return Err(Error::format(
            &graph.fragment_id,
            format!("edge {e:?} references a missing node"),
        ));
    }
    Ok(graph)
}

fn dot_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

fn to_dot(graph: &FlowGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", dot_escape(&graph.fragment_id));
    for (i, label) in graph.node_labels.iter().enumerate() {
        let shape = if graph.is_terminal(i) { "ellipse" } else { "box" };
        let _ = writeln!(out, "  n{i} [label=\"{}\", shape={shape}];", dot_escape(label));
    }
    for e in &graph.edges {
        let style = if e.2.is_backward() { ", style=dashed" } else { "" };
        let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"{style}];", e.0, e.1, e.2.name());
    }
    out.push_str("}\n");
    out
}
