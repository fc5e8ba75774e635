//! Java source fragments to normalized, pre-order numbered ASTs.
//!
//! Parsing is delegated to tree-sitter-java; the concrete syntax tree is then
//! folded into [`AstTree`], which keeps every token as a `Terminal` leaf and
//! gives the control-flow statements a fixed child layout:
//!
//! * `IfStatement`    -> `[Condition, then-statement, ElseStatement?]`
//! * `WhileStatement` -> `[Condition, body]`
//! * `ForStatement`   -> `[ForControl | EnhancedForControl, body]`
//!
//! Keywords and parentheses belonging to the header live inside the
//! `Condition`/`ForControl` subtree, the `else` keyword inside `ElseStatement`.

mod kind;

use std::fmt;

use serde::{Deserialize, Serialize};
use tree_sitter::{Node, Parser};

use crate::error::{Error, Result};

pub use kind::NodeKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Method,
    Class,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Granularity::Method => f.write_str("method"),
            Granularity::Class => f.write_str("class"),
        }
    }
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "method" => Ok(Granularity::Method),
            "class" => Ok(Granularity::Class),
            other => Err(Error::InvalidArgument(format!(
                "unknown granularity `{other}` (expected method or class)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFragment {
    pub id: String,
    pub code: String,
    pub granularity: Granularity,
}

impl SourceFragment {
    pub fn new(id: impl Into<String>, code: impl Into<String>, granularity: Granularity) -> Self {
        SourceFragment {
            id: id.into(),
            code: code.into(),
            granularity,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenClass {
    Identifier,
    TypeIdentifier,
    Keyword,
    Literal,
    Separator,
    Operator,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub class: TokenClass,
    /// 1-based source position.
    pub line: usize,
    pub column: usize,
    /// True for the name of a declared local, parameter or field.
    pub declares: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub id: usize,
    pub kind: NodeKind,
    pub token: Option<Token>,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
}

impl AstNode {
    pub fn is_terminal(&self) -> bool {
        self.kind == NodeKind::Terminal
    }

    /// Node label: the kind name for nonterminals, the token text for terminals.
    pub fn label(&self) -> &str {
        match &self.token {
            Some(tok) => &tok.text,
            None => self.kind.name(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstTree {
    pub fragment_id: String,
    pub nodes: Vec<AstNode>,
    pub root: usize,
}

impl AstTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> &AstNode {
        &self.nodes[id]
    }

    /// Node ids of all `Terminal` nodes in source order.
    ///
    /// Ids are assigned in pre-order, so this is simply the ascending list of
    /// terminal ids.
    pub fn terminals_in_order(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.is_terminal())
            .map(|n| n.id)
            .collect()
    }

    pub fn tokens(&self) -> Vec<&str> {
        self.terminals_in_order()
            .into_iter()
            .map(|id| self.nodes[id].label())
            .collect()
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Checks the structural invariants; used by tests and when trees are
    /// loaded from elsewhere.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        if self.root != 0 {
            return Err(format!("root must be node 0, found {}", self.root));
        }
        let mut roots = 0;
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.id != idx {
                return Err(format!("node at index {idx} has id {}", node.id));
            }
            match node.parent {
                None => roots += 1,
                Some(p) => {
                    if p >= idx || !self.nodes[p].children.contains(&idx) {
                        return Err(format!("node {idx} has inconsistent parent {p}"));
                    }
                }
            }
            if node.is_terminal() != node.token.is_some() {
                return Err(format!("node {idx}: token present iff terminal"));
            }
            if node.is_terminal() && !node.children.is_empty() {
                return Err(format!("terminal node {idx} has children"));
            }
            for &c in &node.children {
                if c <= idx || c >= self.nodes.len() || self.nodes[c].parent != Some(idx) {
                    return Err(format!("node {idx} has invalid child {c}"));
                }
            }
        }
        if roots != 1 {
            return Err(format!("expected exactly one root, found {roots}"));
        }
        Ok(())
    }
}

/// Parses one fragment of the stated granularity.
pub fn parse_fragment(fragment: &SourceFragment) -> Result<AstTree> {
    let ts = parse_tree_sitter(&fragment.code)?;
    let root = ts.root_node();
    let src = fragment.code.as_str();

    let top: Vec<Node> = named_children(root)
        .into_iter()
        .filter(|n| !is_comment(n.kind()))
        .collect();
    let is_decl = |n: &Node| match fragment.granularity {
        Granularity::Method => {
            matches!(n.kind(), "method_declaration" | "constructor_declaration")
        }
        Granularity::Class => matches!(
            n.kind(),
            "class_declaration"
                | "interface_declaration"
                | "enum_declaration"
                | "record_declaration"
                | "annotation_type_declaration"
        ),
    };
    let allowed_extra = |n: &Node| {
        fragment.granularity == Granularity::Class
            && matches!(n.kind(), "package_declaration" | "import_declaration")
    };

    let decls: Vec<&Node> = top.iter().filter(|n| is_decl(n)).collect();
    let stray: Vec<&Node> = top
        .iter()
        .filter(|n| !is_decl(n) && !allowed_extra(n))
        .collect();
    if decls.len() != 1 || !stray.is_empty() {
        let found = if top.is_empty() {
            "nothing".to_string()
        } else {
            top.iter()
                .map(|n| n.kind().to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        return Err(Error::Granularity {
            expected: fragment.granularity.to_string(),
            found,
        });
    }

    let raw = if top.len() == 1 {
        convert(*decls[0], src)
    } else {
        convert(root, src)
    };
    let raw = raw.ok_or_else(|| Error::Parse {
        line: 1,
        column: 1,
        message: "fragment contains no code".into(),
    })?;
    Ok(number(&fragment.id, raw))
}

/// Parses a loose sequence of statements or declarations, rooted at a
/// `CompilationUnit`. Handy for inspecting small snippets.
pub fn parse_snippet(id: &str, code: &str) -> Result<AstTree> {
    let ts = parse_tree_sitter(code)?;
    let raw = convert(ts.root_node(), code).ok_or_else(|| Error::Parse {
        line: 1,
        column: 1,
        message: "snippet contains no code".into(),
    })?;
    Ok(number(id, raw))
}

fn parse_tree_sitter(code: &str) -> Result<tree_sitter::Tree> {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_java::LANGUAGE.into())
        .expect("tree-sitter-java grammar is ABI compatible");
    let tree = parser.parse(code, None).ok_or_else(|| Error::Parse {
        line: 1,
        column: 1,
        message: "parser produced no tree".into(),
    })?;
    let root = tree.root_node();
    if named_children(root).iter().all(|n| is_comment(n.kind())) {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "empty fragment".into(),
        });
    }
    if root.has_error() {
        return Err(first_error(root, code));
    }
    Ok(tree)
}

fn first_error(root: Node, src: &str) -> Error {
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        if node.is_error() || node.is_missing() {
            let pos = node.start_position();
            let message = if node.is_missing() {
                format!("missing `{}`", node.kind())
            } else {
                let text = &src[node.byte_range()];
                let snippet: String = text.chars().take(24).collect();
                format!("unexpected `{}`", snippet.trim())
            };
            return Error::Parse {
                line: pos.row + 1,
                column: pos.column + 1,
                message,
            };
        }
        let mut children = Vec::new();
        let mut cursor = node.walk();
        for child in node.children(&mut cursor) {
            if child.has_error() || child.is_missing() || child.is_error() {
                children.push(child);
            }
        }
        stack.extend(children.into_iter().rev());
    }
    Error::Parse {
        line: 1,
        column: 1,
        message: "syntax error".into(),
    }
}

struct Raw {
    kind: NodeKind,
    token: Option<Token>,
    children: Vec<Raw>,
}

impl Raw {
    fn inner(kind: NodeKind, children: Vec<Raw>) -> Raw {
        Raw {
            kind,
            token: None,
            children,
        }
    }
}

fn is_comment(kind: &str) -> bool {
    matches!(kind, "line_comment" | "block_comment" | "comment")
}

fn named_children(node: Node) -> Vec<Node> {
    let mut cursor = node.walk();
    node.named_children(&mut cursor).collect()
}

fn all_children(node: Node) -> Vec<Node> {
    let mut cursor = node.walk();
    node.children(&mut cursor)
        .filter(|c| !is_comment(c.kind()))
        .collect()
}

/// Literal productions that tree-sitter splits into pieces but which are one
/// token in Java.
fn is_atomic(kind: &str) -> bool {
    matches!(kind, "string_literal" | "character_literal" | "text_block")
}

fn token_class(node: &Node) -> TokenClass {
    let kind = node.kind();
    if node.is_named() {
        return match kind {
            "identifier" => TokenClass::Identifier,
            "type_identifier" => TokenClass::TypeIdentifier,
            "this" | "super" => TokenClass::Keyword,
            k if k.ends_with("_literal") || k == "true" || k == "false" || is_atomic(k) => {
                TokenClass::Literal
            }
            _ => TokenClass::Identifier,
        };
    }
    match kind.chars().next() {
        Some(c) if c.is_ascii_alphabetic() => TokenClass::Keyword,
        _ if matches!(kind, "(" | ")" | "{" | "}" | "[" | "]" | ";" | "," | "." | "@" | "...") => {
            TokenClass::Separator
        }
        _ => TokenClass::Operator,
    }
}

/// Ids of identifier nodes that declare a variable, parameter or field.
fn declared_name(node: Node) -> Option<usize> {
    match node.kind() {
        "variable_declarator" | "formal_parameter" | "catch_formal_parameter" | "resource"
        | "enhanced_for_statement" => node
            .child_by_field_name("name")
            .filter(|n| n.kind() == "identifier")
            .map(|n| n.id()),
        "lambda_expression" => node
            .child_by_field_name("parameters")
            .filter(|n| n.kind() == "identifier")
            .map(|n| n.id()),
        _ => None,
    }
}

fn leaf(node: Node, src: &str, declares: bool) -> Raw {
    let pos = node.start_position();
    Raw {
        kind: NodeKind::Terminal,
        token: Some(Token {
            text: src[node.byte_range()].to_string(),
            class: token_class(&node),
            line: pos.row + 1,
            column: pos.column + 1,
            declares,
        }),
        children: Vec::new(),
    }
}

fn convert(node: Node, src: &str) -> Option<Raw> {
    convert_with(node, src, None)
}

fn convert_with(node: Node, src: &str, declared: Option<usize>) -> Option<Raw> {
    if is_comment(node.kind()) {
        return None;
    }
    if node.child_count() == 0 || is_atomic(node.kind()) {
        let declares = declared == Some(node.id())
            || (node.kind() == "identifier"
                && node.parent().map(|p| p.kind()) == Some("inferred_parameters"));
        return Some(leaf(node, src, declares));
    }
    let declared = declared_name(node).or(declared);
    let children = |nodes: &[Node]| -> Vec<Raw> {
        nodes
            .iter()
            .filter_map(|c| convert_with(*c, src, declared))
            .collect()
    };
    let kids = all_children(node);

    match node.kind() {
        "if_statement" => {
            let cons = node.child_by_field_name("consequence")?.id();
            let alt = node.child_by_field_name("alternative").map(|n| n.id());
            let split_then = kids.iter().position(|c| c.id() == cons)?;
            let mut condition = Vec::new();
            for c in &kids[..split_then] {
                condition.extend(unwrap_parens(*c, src, declared));
            }
            let mut out = vec![
                Raw::inner(NodeKind::Condition, condition),
                convert_with(kids[split_then], src, declared)?,
            ];
            if alt.is_some() {
                let rest = children(&kids[split_then + 1..]);
                out.push(Raw::inner(NodeKind::ElseStatement, rest));
            }
            Some(Raw::inner(NodeKind::IfStatement, out))
        }
        "while_statement" => {
            let body = node.child_by_field_name("body")?.id();
            let split = kids.iter().position(|c| c.id() == body)?;
            let mut condition = Vec::new();
            for c in &kids[..split] {
                condition.extend(unwrap_parens(*c, src, declared));
            }
            Some(Raw::inner(
                NodeKind::WhileStatement,
                vec![
                    Raw::inner(NodeKind::Condition, condition),
                    convert_with(kids[split], src, declared)?,
                ],
            ))
        }
        "for_statement" | "enhanced_for_statement" => {
            let body = node.child_by_field_name("body")?.id();
            let split = kids.iter().position(|c| c.id() == body)?;
            let control = if node.kind() == "for_statement" {
                NodeKind::ForControl
            } else {
                NodeKind::EnhancedForControl
            };
            Some(Raw::inner(
                NodeKind::ForStatement,
                vec![
                    Raw::inner(control, children(&kids[..split])),
                    convert_with(kids[split], src, declared)?,
                ],
            ))
        }
        kind => Some(Raw::inner(NodeKind::from_tree_sitter(kind), children(&kids))),
    }
}

/// Flattens a `parenthesized_expression` into `(`, expr, `)` so that the
/// surrounding `Condition` holds them directly.
fn unwrap_parens(node: Node, src: &str, declared: Option<usize>) -> Vec<Raw> {
    if node.kind() == "parenthesized_expression" {
        all_children(node)
            .into_iter()
            .filter_map(|c| convert_with(c, src, declared))
            .collect()
    } else {
        convert_with(node, src, declared).into_iter().collect()
    }
}

fn number(fragment_id: &str, raw: Raw) -> AstTree {
    let mut nodes = Vec::new();
    fn visit(raw: Raw, parent: Option<usize>, nodes: &mut Vec<AstNode>) -> usize {
        let id = nodes.len();
        nodes.push(AstNode {
            id,
            kind: raw.kind,
            token: raw.token,
            children: Vec::with_capacity(raw.children.len()),
            parent,
        });
        for child in raw.children {
            let cid = visit(child, Some(id), nodes);
            nodes[id].children.push(cid);
        }
        id
    }
    visit(raw, None, &mut nodes);
    AstTree {
        fragment_id: fragment_id.to_string(),
        nodes,
        root: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn method(code: &str) -> AstTree {
        parse_fragment(&SourceFragment::new("t", code, Granularity::Method)).unwrap()
    }

    #[test]
    fn method_tokens_in_order() {
        let tree = method("int f(){return 1;}");
        assert_eq!(
            tree.tokens(),
            ["int", "f", "(", ")", "{", "return", "1", ";", "}"]
        );
        assert_eq!(tree.node(tree.root).kind, NodeKind::MethodDeclaration);
        tree.validate().unwrap();
    }

    #[test]
    fn empty_input_is_a_parse_error() {
        let err = parse_fragment(&SourceFragment::new("e", "", Granularity::Method)).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        let err =
            parse_fragment(&SourceFragment::new("e", "  // nothing\n", Granularity::Method))
                .unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_fragment(&SourceFragment::new(
            "e",
            "int f() {\n  return 1 +;\n}",
            Granularity::Method,
        ))
        .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn granularity_mismatch() {
        let err = parse_fragment(&SourceFragment::new(
            "g",
            "class A { void f() {} }",
            Granularity::Method,
        ))
        .unwrap_err();
        assert!(matches!(err, Error::Granularity { .. }));
        let err = parse_fragment(&SourceFragment::new(
            "g",
            "void f() {} void g() {}",
            Granularity::Method,
        ))
        .unwrap_err();
        assert!(matches!(err, Error::Granularity { .. }));
        let err = parse_fragment(&SourceFragment::new("g", "void f() {}", Granularity::Class))
            .unwrap_err();
        assert!(matches!(err, Error::Granularity { .. }));
    }

    #[test]
    fn class_with_imports_keeps_compilation_unit() {
        let tree = parse_fragment(&SourceFragment::new(
            "c",
            "import java.util.*;\npublic class Main { int x; void run() { x++; } }",
            Granularity::Class,
        ))
        .unwrap();
        assert_eq!(tree.node(0).kind, NodeKind::CompilationUnit);
        assert_eq!(tree.count_kind(NodeKind::ClassDeclaration), 1);
        tree.validate().unwrap();
    }

    #[test]
    fn if_else_has_three_children() {
        let tree = method("int f(){ if(a>0) b=1; else b=2; }");
        let ifs: Vec<_> = tree
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::IfStatement)
            .collect();
        assert_eq!(ifs.len(), 1);
        let kids: Vec<NodeKind> = ifs[0].children.iter().map(|&c| tree.node(c).kind).collect();
        assert_eq!(
            kids,
            [
                NodeKind::Condition,
                NodeKind::StatementExpression,
                NodeKind::ElseStatement
            ]
        );
        assert_eq!(
            tree.tokens(),
            [
                "int", "f", "(", ")", "{", "if", "(", "a", ">", "0", ")", "b", "=", "1", ";",
                "else", "b", "=", "2", ";", "}"
            ]
        );
    }

    #[test]
    fn else_if_nests() {
        let tree = method("void f(){ if (a) x(); else if (b) y(); else z(); }");
        assert_eq!(tree.count_kind(NodeKind::IfStatement), 2);
        let outer = tree
            .nodes
            .iter()
            .find(|n| n.kind == NodeKind::IfStatement)
            .unwrap();
        let else_branch = tree.node(outer.children[2]);
        assert_eq!(else_branch.kind, NodeKind::ElseStatement);
        assert_eq!(tree.node(else_branch.children[1]).kind, NodeKind::IfStatement);
    }

    #[test]
    fn loops_have_two_children() {
        let tree = method(
            "void f(int[] xs){ for(int i=0;i<3;i++) g(i); for (int x : xs) g(x); while(c) { s(); } }",
        );
        for node in &tree.nodes {
            if matches!(node.kind, NodeKind::ForStatement | NodeKind::WhileStatement) {
                assert_eq!(node.children.len(), 2, "{:?}", node.kind);
            }
        }
        assert_eq!(tree.count_kind(NodeKind::ForControl), 1);
        assert_eq!(tree.count_kind(NodeKind::EnhancedForControl), 1);
    }

    #[test]
    fn declarations_are_flagged() {
        let tree = method(
            "void f(int p, String[] q){ int a = 0, b; for (String s : q) {} try (R r = o()) {} catch (E e) {} h(x -> x); }",
        );
        let mut declared: Vec<&str> = tree
            .nodes
            .iter()
            .filter_map(|n| n.token.as_ref())
            .filter(|t| t.declares)
            .map(|t| t.text.as_str())
            .collect();
        declared.sort();
        assert_eq!(declared, ["a", "b", "e", "p", "q", "r", "s", "x"]);
    }

    #[test]
    fn comments_are_dropped_and_strings_atomic() {
        let tree = method("void f(){ /* c */ s = \"a b\\n\"; // tail\n}");
        assert_eq!(
            tree.tokens(),
            ["void", "f", "(", ")", "{", "s", "=", "\"a b\\n\"", ";", "}"]
        );
    }

    #[test]
    fn parsing_is_deterministic() {
        let code = "int f(int n){ int s=0; for(int i=0;i<n;i++){ s+=i; } return s; }";
        assert_eq!(method(code), method(code));
    }

    #[test]
    fn terminals_of_statement_snippet() {
        let tree = parse_snippet("s", "return 1;").unwrap();
        let terms = tree.terminals_in_order();
        let toks: Vec<&str> = terms.iter().map(|&i| tree.node(i).label()).collect();
        assert_eq!(toks, ["return", "1", ";"]);
        assert!(terms.windows(2).all(|w| w[0] < w[1]));
    }
}
