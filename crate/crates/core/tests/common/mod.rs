//! Shared fixtures for the integration tests: a golden Java corpus and two
//! oracles written directly against the language rules, without calling
//! into the edge builders.

#![allow(dead_code)]

use std::collections::BTreeSet;

use flowclone::flow::EdgeType;
use flowclone::frontend::{AstTree, Granularity, NodeKind, TokenClass};

pub struct Golden {
    pub id: &'static str,
    pub granularity: Granularity,
    pub code: &'static str,
}

const fn method(id: &'static str, code: &'static str) -> Golden {
    Golden {
        id,
        granularity: Granularity::Method,
        code,
    }
}

pub const GOLDEN: [Golden; 20] = [
    method("return_one", "int f(){return 1;}"),
    method("if_else", "int f(){ if(a>0) b=1; else b=2; }"),
    method("while_counter", "int f(){int a=0; while(a<10){a=a+1;} return a;}"),
    method(
        "for_sum",
        "int sum(int[] xs) {\n    int s = 0;\n    for (int i = 0; i < xs.length; i++) {\n        s += xs[i];\n    }\n    return s;\n}",
    ),
    method(
        "else_if_chain",
        "String grade(int score) {\n    if (score >= 90) {\n        return \"A\";\n    } else if (score >= 80) {\n        return \"B\";\n    } else {\n        return \"C\";\n    }\n}",
    ),
    method(
        "nested_loops",
        "int pairs(int n) {\n    int c = 0;\n    for (int i = 0; i < n; i++) {\n        for (int j = i + 1; j < n; j++) {\n            if ((i + j) % 2 == 0) c++;\n        }\n    }\n    return c;\n}",
    ),
    method(
        "enhanced_for",
        "int total(int[] values) { int t = 0; for (int v : values) { t += v; } return t; }",
    ),
    method(
        "do_while",
        "int digits(int n) { int d = 0; do { n /= 10; d++; } while (n != 0); return d; }",
    ),
    method(
        "switch_case",
        "String name(int k) {\n    String r;\n    switch (k) {\n        case 1: r = \"one\"; break;\n        case 2: r = \"two\"; break;\n        default: r = \"many\";\n    }\n    return r;\n}",
    ),
    method(
        "try_catch",
        "int parse(String s) {\n    int v = -1;\n    try {\n        v = Integer.parseInt(s);\n    } catch (NumberFormatException e) {\n        System.err.println(e.getMessage());\n    } finally {\n        v = v + 0;\n    }\n    return v;\n}",
    ),
    method(
        "ternary_compound",
        "int clamp(int x, int lo, int hi) { x = x < lo ? lo : x; x = x > hi ? hi : x; x <<= 1; x >>= 1; return x; }",
    ),
    method(
        "labeled_break",
        "boolean find(int[][] m, int target) {\n    boolean found = false;\n    outer:\n    for (int i = 0; i < m.length; i++) {\n        for (int j = 0; j < m[i].length; j++) {\n            if (m[i][j] == target) { found = true; break outer; }\n            if (m[i][j] < 0) continue;\n        }\n    }\n    return found;\n}",
    ),
    Golden {
        id: "class_fields",
        granularity: Granularity::Class,
        code: "public class Counter {\n    private int count = 0;\n    public void inc() { count++; }\n    public int get() { return count; }\n}",
    },
    method(
        "chars_and_strings",
        "int vowels(String s) { int n = 0; for (int i = 0; i < s.length(); i++) { char ch = s.charAt(i); if (ch == 'a' || ch == 'e') { n++; } } return n; }",
    ),
    method(
        "array_init",
        "int[] squares() { int[] out = new int[] {1, 4, 9}; int[] more = new int[3]; more[0] = out[2]; return more; }",
    ),
    method(
        "lambda",
        "int apply(java.util.function.IntUnaryOperator op, int y) { op = x -> x * 2; return op.applyAsInt(y); }",
    ),
    method(
        "recursion",
        "long fact(int n) { if (n <= 1) return 1; return n * fact(n - 1); }",
    ),
    method(
        "nested_blocks",
        "void blocks() { { int x = 1; { x = x + 1; } } int x = 2; x--; }",
    ),
    method(
        "while_no_block",
        "int count(int n) { int i = 0; while (i < n) i++; return i; }",
    ),
    method(
        "for_ever_with_comment",
        "void spin(int k) {\n    // loop until k reaches zero\n    for (;;) {\n        /* step */ k--;\n        if (k == 0) { break; }\n    }\n}",
    ),
];

const OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "...", "->", "::", "++", "--", "&&", "||", "==", "!=", "<=", ">=", "+=", "-=",
    "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>",
];

/// A plain maximal-munch Java lexer; comments and whitespace are dropped.
pub fn reference_tokens(code: &str) -> Vec<String> {
    let chars: Vec<char> = code.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let rest: String = chars[i..].iter().take(4).collect();
        if c.is_whitespace() {
            i += 1;
        } else if rest.starts_with("//") {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if rest.starts_with("/*") {
            i += 2;
            while !(chars[i] == '*' && chars[i + 1] == '/') {
                i += 1;
            }
            i += 2;
        } else if c == '"' || c == '\'' {
            let start = i;
            i += 1;
            while chars[i] != c {
                if chars[i] == '\\' {
                    i += 1;
                }
                i += 1;
            }
            i += 1;
            out.push(chars[start..i].iter().collect());
        } else if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else if let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(*op)) {
            out.push(op.to_string());
            i += op.chars().count();
        } else {
            out.push(c.to_string());
            i += 1;
        }
    }
    out
}

fn parent(tree: &AstTree, n: usize) -> Option<usize> {
    tree.nodes.iter().find(|p| p.children.contains(&n)).map(|p| p.id)
}

fn pos(tree: &AstTree, n: usize) -> (usize, usize) {
    let t = tree.nodes[n].token.as_ref().unwrap();
    (t.line, t.column)
}

fn text(tree: &AstTree, n: usize) -> &str {
    &tree.nodes[n].token.as_ref().unwrap().text
}

/// Identifier terminals that name a declared variable: the identifier child
/// of a declarator or formal parameter, the loop variable of an enhanced
/// for, and lambda parameters.
fn declared_names(tree: &AstTree) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    for n in &tree.nodes {
        let Some(tok) = &n.token else { continue };
        if tok.class != TokenClass::Identifier {
            continue;
        }
        let Some(p) = parent(tree, n.id) else { continue };
        let pk = tree.nodes[p].kind;
        let first_ident = tree.nodes[p]
            .children
            .iter()
            .copied()
            .find(|&c| tree.nodes[c].token.as_ref().is_some_and(|t| t.class == TokenClass::Identifier));
        let declares = match pk {
            NodeKind::VariableDeclarator | NodeKind::FormalParameter | NodeKind::EnhancedForControl => {
                first_ident == Some(n.id)
            }
            NodeKind::LambdaExpression => tree.nodes[p].children.first() == Some(&n.id),
            NodeKind::FormalParameters => {
                parent(tree, p).is_some_and(|g| tree.nodes[g].kind == NodeKind::LambdaExpression)
            }
            _ => false,
        };
        if declares {
            names.insert(tok.text.clone());
        }
    }
    names
}

/// Every edge of the flow-augmented AST, found by testing each ordered node
/// pair against the edge definitions.
pub fn brute_force_edges(tree: &AstTree) -> BTreeSet<(usize, usize, EdgeType)> {
    let n = tree.nodes.len();
    let parents: Vec<Option<usize>> = (0..n).map(|v| parent(tree, v)).collect();
    let terminals: Vec<usize> = (0..n).filter(|&v| tree.nodes[v].kind == NodeKind::Terminal).collect();
    let declared = declared_names(tree);
    let is_var = |v: usize| {
        tree.nodes[v]
            .token
            .as_ref()
            .is_some_and(|t| t.class == TokenClass::Identifier && declared.contains(&t.text))
    };
    let index_in_parent = |v: usize| parents[v].map(|p| tree.nodes[p].children.iter().position(|&c| c == v).unwrap());
    let kind = |v: usize| tree.nodes[v].kind;

    let mut forward = BTreeSet::new();
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            if parents[v] == Some(u) {
                forward.insert((u, v, EdgeType::Child));
            }
            if parents[u] == Some(v) {
                forward.insert((u, v, EdgeType::Parent));
            }
            if parents[u].is_some() && parents[u] == parents[v] && index_in_parent(v) == index_in_parent(u).map(|k| k + 1) {
                forward.insert((u, v, EdgeType::NextSib));
            }
            let both_terminal = kind(u) == NodeKind::Terminal && kind(v) == NodeKind::Terminal;
            if both_terminal && pos(tree, u) < pos(tree, v) {
                let between = terminals
                    .iter()
                    .any(|&w| pos(tree, u) < pos(tree, w) && pos(tree, w) < pos(tree, v));
                if !between {
                    forward.insert((u, v, EdgeType::NextToken));
                }
                if is_var(u) && is_var(v) && text(tree, u) == text(tree, v) {
                    let between = terminals.iter().any(|&w| {
                        is_var(w) && text(tree, w) == text(tree, u) && pos(tree, u) < pos(tree, w) && pos(tree, w) < pos(tree, v)
                    });
                    if !between {
                        forward.insert((u, v, EdgeType::NextUse));
                    }
                }
            }
            if let (Some(p), Some(q)) = (parents[u], parents[v]) {
                if p == q {
                    let kids = &tree.nodes[p].children;
                    let (iu, iv) = (index_in_parent(u).unwrap(), index_in_parent(v).unwrap());
                    match kind(p) {
                        NodeKind::IfStatement if iu == 0 && iv == 1 => {
                            forward.insert((u, v, EdgeType::CondTrue));
                        }
                        NodeKind::IfStatement if iu == 0 && iv == 2 => {
                            forward.insert((u, v, EdgeType::CondFalse));
                        }
                        NodeKind::WhileStatement if kids.len() == 2 => {
                            forward.insert((u, v, if iu == 0 { EdgeType::WhileExec } else { EdgeType::WhileNext }));
                        }
                        NodeKind::ForStatement if kids.len() == 2 => {
                            forward.insert((u, v, if iu == 0 { EdgeType::ForExec } else { EdgeType::ForNext }));
                        }
                        NodeKind::BlockStatement if kind(u) != NodeKind::Terminal && kind(v) != NodeKind::Terminal && iu < iv => {
                            let gap = kids[iu + 1..iv].iter().any(|&w| kind(w) != NodeKind::Terminal);
                            if !gap {
                                forward.insert((u, v, EdgeType::NextStmt));
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    let mut all = forward.clone();
    for &(u, v, t) in &forward {
        let back = match t {
            EdgeType::NextSib => Some(EdgeType::PrevSib),
            EdgeType::NextToken => Some(EdgeType::PrevToken),
            EdgeType::NextUse => Some(EdgeType::PrevUse),
            EdgeType::CondTrue => Some(EdgeType::CondTrueBack),
            EdgeType::CondFalse => Some(EdgeType::CondFalseBack),
            EdgeType::NextStmt => Some(EdgeType::NextStmtBack),
            _ => None,
        };
        if let Some(b) = back {
            all.insert((v, u, b));
        }
    }
    all
}
