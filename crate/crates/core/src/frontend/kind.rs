use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! node_kinds {
    ($($variant:ident),+ $(,)?) => {
        /// Closed vocabulary of AST node kinds.
        ///
        /// Nonterminal names follow the javalang production names; tree-sitter
        /// productions without a counterpart fall into `StatementOther` or
        /// `ExpressionOther`.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum NodeKind {
            $($variant),+
        }

        impl NodeKind {
            pub const ALL: &'static [NodeKind] = &[$(NodeKind::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $(NodeKind::$variant => stringify!($variant)),+
                }
            }

            pub fn from_name(name: &str) -> Option<NodeKind> {
                match name {
                    $(stringify!($variant) => Some(NodeKind::$variant),)+
                    _ => None,
                }
            }
        }
    };
}

node_kinds! {
    CompilationUnit,
    ClassDeclaration,
    InterfaceDeclaration,
    EnumDeclaration,
    RecordDeclaration,
    ClassBody,
    MethodDeclaration,
    ConstructorDeclaration,
    FieldDeclaration,
    FormalParameters,
    FormalParameter,
    VariableDeclarator,
    LocalVariableDeclaration,
    Modifiers,
    Annotation,
    ReferenceType,
    BasicType,
    TypeArguments,
    TypeParameters,
    Dimensions,
    Throws,
    BlockStatement,
    IfStatement,
    ElseStatement,
    WhileStatement,
    ForStatement,
    ForControl,
    EnhancedForControl,
    Condition,
    DoStatement,
    SwitchStatement,
    SwitchCase,
    TryStatement,
    CatchClause,
    FinallyClause,
    ReturnStatement,
    BreakStatement,
    ContinueStatement,
    ThrowStatement,
    StatementExpression,
    SynchronizedStatement,
    LabeledStatement,
    AssertStatement,
    Assignment,
    BinaryOperation,
    UnaryOperation,
    TernaryExpression,
    MethodInvocation,
    MemberReference,
    ArraySelector,
    ClassCreator,
    ArrayCreator,
    ArrayInitializer,
    Cast,
    LambdaExpression,
    MethodReference,
    InstanceOf,
    Arguments,
    ParExpression,
    StatementOther,
    ExpressionOther,
    Terminal,
}

impl NodeKind {
    /// Maps a tree-sitter-java production name onto the closed vocabulary.
    pub(crate) fn from_tree_sitter(kind: &str) -> NodeKind {
        use NodeKind::*;
        match kind {
            "program" => CompilationUnit,
            "class_declaration" => ClassDeclaration,
            "interface_declaration" | "annotation_type_declaration" => InterfaceDeclaration,
            "enum_declaration" => EnumDeclaration,
            "record_declaration" => RecordDeclaration,
            "class_body" | "interface_body" | "enum_body" | "enum_body_declarations"
            | "annotation_type_body" => ClassBody,
            "method_declaration" | "annotation_type_element_declaration" => MethodDeclaration,
            "constructor_declaration" | "compact_constructor_declaration" => {
                ConstructorDeclaration
            }
            "field_declaration" | "constant_declaration" => FieldDeclaration,
            "formal_parameters" | "inferred_parameters" => FormalParameters,
            "formal_parameter" | "catch_formal_parameter" | "spread_parameter" => FormalParameter,
            "variable_declarator" | "resource" => VariableDeclarator,
            "local_variable_declaration" => LocalVariableDeclaration,
            "modifiers" => Modifiers,
            "annotation" | "marker_annotation" => Annotation,
            "integral_type" | "floating_point_type" | "boolean_type" | "void_type" => BasicType,
            "generic_type" | "array_type" | "scoped_type_identifier" | "catch_type" => {
                ReferenceType
            }
            "type_arguments" => TypeArguments,
            "type_parameters" | "type_parameter" | "type_bound" => TypeParameters,
            "dimensions" | "dimensions_expr" => Dimensions,
            "throws" => Throws,
            "block" | "constructor_body" => BlockStatement,
            "if_statement" => IfStatement,
            "while_statement" => WhileStatement,
            "for_statement" | "enhanced_for_statement" => ForStatement,
            "do_statement" => DoStatement,
            "switch_expression" | "switch_statement" => SwitchStatement,
            "switch_block" | "switch_block_statement_group" | "switch_label" | "switch_rule" => {
                SwitchCase
            }
            "try_statement" | "try_with_resources_statement" | "resource_specification" => {
                TryStatement
            }
            "catch_clause" => CatchClause,
            "finally_clause" => FinallyClause,
            "return_statement" => ReturnStatement,
            "break_statement" => BreakStatement,
            "continue_statement" => ContinueStatement,
            "throw_statement" => ThrowStatement,
            "expression_statement" => StatementExpression,
            "synchronized_statement" => SynchronizedStatement,
            "labeled_statement" => LabeledStatement,
            "assert_statement" => AssertStatement,
            "assignment_expression" => Assignment,
            "binary_expression" => BinaryOperation,
            "unary_expression" | "update_expression" => UnaryOperation,
            "ternary_expression" => TernaryExpression,
            "method_invocation" | "explicit_constructor_invocation" => MethodInvocation,
            "field_access" => MemberReference,
            "array_access" => ArraySelector,
            "object_creation_expression" => ClassCreator,
            "array_creation_expression" => ArrayCreator,
            "array_initializer" | "element_value_array_initializer" => ArrayInitializer,
            "cast_expression" => Cast,
            "lambda_expression" => LambdaExpression,
            "method_reference" => MethodReference,
            "instanceof_expression" => InstanceOf,
            "argument_list" | "annotation_argument_list" => Arguments,
            "parenthesized_expression" => ParExpression,
            other if other.ends_with("_statement") || other.ends_with("_declaration") => {
                StatementOther
            }
            _ => ExpressionOther,
        }
    }

    /// Kinds that receive If/While/For control-flow edges.
    pub fn is_branching(self) -> bool {
        matches!(
            self,
            NodeKind::IfStatement | NodeKind::WhileStatement | NodeKind::ForStatement
        )
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
