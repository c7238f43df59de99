//! Grammar-driven extraction of method records from source text.

use std::cell::RefCell;
use std::sync::Arc;

use tree_sitter::{Node, Parser};

use super::{IndexError, MethodRecord};

/// Outcome of parsing one source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseOutcome {
    Parsed(Vec<MethodRecord>),
    /// The file is syntactically broken; no methods are reported.
    Failed(String),
}

/// A language front end: which files it owns and how to pull methods out.
pub trait Grammar: Send + Sync {
    fn id(&self) -> &str;
    /// File extensions, including the leading dot.
    fn extensions(&self) -> &[String];
    fn parse(&self, source: &str) -> ParseOutcome;

    fn accepts(&self, path: &str) -> bool {
        self.extensions().iter().any(|ext| path.ends_with(ext.as_str()))
    }
}

/// Looks up a grammar by id. Only `java` ships today.
pub fn grammar_for(id: &str) -> Result<Arc<dyn Grammar>, IndexError> {
    match id {
        "java" => Ok(Arc::new(JavaGrammar::default())),
        other => Err(IndexError::UnsupportedGrammar(other.to_string())),
    }
}

/// Java front end backed by tree-sitter.
///
/// Methods, constructors and record compact constructors are extracted from
/// every class body in the file, including nested, local and anonymous
/// classes. Static and instance initializers are not methods.
#[derive(Debug, Clone)]
pub struct JavaGrammar {
    extensions: Vec<String>,
}

impl Default for JavaGrammar {
    fn default() -> Self {
        Self { extensions: vec![".java".to_string()] }
    }
}

impl JavaGrammar {
    pub fn with_extensions(extensions: Vec<String>) -> Self {
        Self { extensions }
    }
}

thread_local! {
    static JAVA_PARSER: RefCell<Option<Parser>> = const { RefCell::new(None) };
}

impl Grammar for JavaGrammar {
    fn id(&self) -> &str {
        "java"
    }

    fn extensions(&self) -> &[String] {
        &self.extensions
    }

    fn parse(&self, source: &str) -> ParseOutcome {
        JAVA_PARSER.with(|cell| {
            let mut slot = cell.borrow_mut();
            let parser = slot.get_or_insert_with(|| {
                let mut p = Parser::new();
                p.set_language(&tree_sitter_java::LANGUAGE.into())
                    .expect("bundled java grammar matches the tree-sitter ABI");
                p
            });
            let Some(tree) = parser.parse(source, None) else {
                return ParseOutcome::Failed("parser returned no tree".to_string());
            };
            let root = tree.root_node();
            if root.has_error() {
                return ParseOutcome::Failed(first_error(root));
            }
            let mut methods = Vec::new();
            collect_methods(root, source.as_bytes(), &mut methods);
            ParseOutcome::Parsed(methods)
        })
    }
}

fn first_error(root: Node<'_>) -> String {
    let mut cursor = root.walk();
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        if node.is_error() || node.is_missing() {
            let pos = node.start_position();
            let what = if node.is_missing() { "missing token" } else { "syntax error" };
            return format!("{what} at {}:{}", pos.row + 1, pos.column + 1);
        }
        if node.has_error() {
            let children: Vec<_> = node.children(&mut cursor).collect();
            stack.extend(children.into_iter().rev());
        }
    }
    "syntax error".to_string()
}

fn text<'a>(node: Node<'_>, src: &'a [u8]) -> &'a str {
    node.utf8_text(src).unwrap_or("")
}

fn squash(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

// Pre-order walk, so records come out in source order and an enclosing
// method precedes the methods of any class declared inside it.
fn collect_methods(root: Node<'_>, src: &[u8], out: &mut Vec<MethodRecord>) {
    let mut stack = vec![root];
    let mut cursor = root.walk();
    while let Some(node) = stack.pop() {
        match node.kind() {
            "method_declaration" | "constructor_declaration" | "compact_constructor_declaration" => {
                if let Some(m) = method_record(node, src) {
                    out.push(m);
                }
            }
            _ => {}
        }
        let children: Vec<_> = node.named_children(&mut cursor).collect();
        stack.extend(children.into_iter().rev());
    }
}

fn method_record(node: Node<'_>, src: &[u8]) -> Option<MethodRecord> {
    let name = text(node.child_by_field_name("name")?, src).to_string();
    let params = match node.child_by_field_name("parameters") {
        Some(p) => parameter_types(p, src),
        None => Vec::new(),
    };
    let signature = format!("{name}({})", params.join(","));
    let body = node.child_by_field_name("body").map(|b| text(b, src).to_string());
    Some(MethodRecord { has_body: body.is_some(), body: body.unwrap_or_default(), name, signature })
}

fn parameter_types(params: Node<'_>, src: &[u8]) -> Vec<String> {
    let mut cursor = params.walk();
    let mut out = Vec::new();
    for param in params.named_children(&mut cursor) {
        match param.kind() {
            "formal_parameter" => {
                let mut ty = param.child_by_field_name("type").map(|t| squash(text(t, src))).unwrap_or_default();
                if let Some(dims) = param.child_by_field_name("dimensions") {
                    ty.push_str(&squash(text(dims, src)));
                }
                out.push(ty);
            }
            "spread_parameter" => {
                let mut inner = param.walk();
                let ty = param
                    .named_children(&mut inner)
                    .find(|c| {
                        !matches!(c.kind(), "modifiers" | "variable_declarator" | "annotation" | "marker_annotation")
                    })
                    .map(|t| squash(text(t, src)))
                    .unwrap_or_default();
                out.push(format!("{ty}..."));
            }
            // receiver parameters (`Foo this`) are not part of the call signature
            _ => {}
        }
    }
    out
}
