use std::fmt;

use thiserror::Error;

use super::schema::{GrammarSchema, NodeIx, NodeKind};

/// One parse: per-node activation bits plus labels for active categorical
/// nodes and inclusive 0-based token ranges for active span nodes.
///
/// Storage is dense over the schema's node indices. `sentence_length` is
/// the token count the span ranges index into; it is *not* part of tree
/// equality, which compares activations, labels, and ranges only.
#[derive(Debug, Clone)]
pub struct ActionTree {
    node_count: usize,
    sentence_length: usize,
    active: Vec<bool>,
    labels: Vec<Option<u32>>,
    spans: Vec<Option<(u32, u32)>>,
}

impl ActionTree {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn sentence_length(&self) -> usize {
        self.sentence_length
    }

    /// Rebinds the tree to a sentence of `len` tokens (used when a tree
    /// document is paired with its sentence on corpus read).
    pub fn with_sentence_length(mut self, len: usize) -> Self {
        self.sentence_length = len;
        self
    }

    pub fn is_active(&self, n: NodeIx) -> bool {
        self.active[n.0]
    }

    pub fn label(&self, n: NodeIx) -> Option<u32> {
        self.labels[n.0]
    }

    pub fn span(&self, n: NodeIx) -> Option<(u32, u32)> {
        self.spans[n.0]
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = NodeIx> + '_ {
        self.active
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| NodeIx(i))
    }

    /// Label string of the root's discriminating categorical child, e.g.
    /// `Build`. `None` if the schema has no discriminator or the node is
    /// inactive.
    pub fn action_label<'s>(&self, schema: &'s GrammarSchema) -> Option<&'s str> {
        let d = schema.discriminator()?;
        let label = self.labels[d.0]?;
        if !self.active[d.0] {
            return None;
        }
        schema.vocab(d).get(label as usize).map(|s| s.as_str())
    }

    /// Checks every tree invariant against `schema` and reports all
    /// violations. Pure; never mutates.
    pub fn validate(&self, schema: &GrammarSchema) -> ValidationReport {
        let mut violations = Vec::new();
        if self.node_count != schema.len() {
            violations.push(Violation {
                node: String::new(),
                kind: ViolationKind::UnknownNode,
                message: format!(
                    "tree has {} nodes but schema `{}` has {}",
                    self.node_count,
                    schema.id(schema.root()),
                    schema.len()
                ),
            });
            return ValidationReport { violations };
        }
        if !self.active[schema.root().0] {
            violations.push(Violation {
                node: schema.id(schema.root()).to_string(),
                kind: ViolationKind::RootInactive,
                message: "root node must be active".to_string(),
            });
        }
        for n in schema.node_indices() {
            let id = schema.id(n);
            if self.active[n.0] {
                if let Some(p) = schema.parent(n) {
                    if !self.active[p.0] {
                        violations.push(Violation {
                            node: id.to_string(),
                            kind: ViolationKind::InactiveParent,
                            message: format!(
                                "active node has inactive parent `{}`",
                                schema.id(p)
                            ),
                        });
                    }
                }
                match schema.kind(n) {
                    NodeKind::Categorical => match self.labels[n.0] {
                        None => violations.push(Violation {
                            node: id.to_string(),
                            kind: ViolationKind::MissingLabel,
                            message: "active categorical node has no label".to_string(),
                        }),
                        Some(l) if (l as usize) >= schema.vocab(n).len() => {
                            violations.push(Violation {
                                node: id.to_string(),
                                kind: ViolationKind::BadLabel,
                                message: format!(
                                    "label index {} out of vocabulary (size {})",
                                    l,
                                    schema.vocab(n).len()
                                ),
                            })
                        }
                        _ => {}
                    },
                    NodeKind::Span => match self.spans[n.0] {
                        None => violations.push(Violation {
                            node: id.to_string(),
                            kind: ViolationKind::MissingSpan,
                            message: "active span node has no range".to_string(),
                        }),
                        Some((s, e)) => {
                            if s > e {
                                violations.push(Violation {
                                    node: id.to_string(),
                                    kind: ViolationKind::SpanOrder,
                                    message: format!("span ({s},{e}) has start after end"),
                                });
                            }
                            if (e as usize) >= self.sentence_length {
                                violations.push(Violation {
                                    node: id.to_string(),
                                    kind: ViolationKind::SpanOutOfBounds,
                                    message: format!(
                                        "span ({s},{e}) exceeds sentence length {}",
                                        self.sentence_length
                                    ),
                                });
                            }
                        }
                    },
                    NodeKind::Internal => {}
                }
            } else {
                if self.labels[n.0].is_some() {
                    violations.push(Violation {
                        node: id.to_string(),
                        kind: ViolationKind::InactiveWithValue,
                        message: "inactive node carries a label".to_string(),
                    });
                }
                if self.spans[n.0].is_some() {
                    violations.push(Violation {
                        node: id.to_string(),
                        kind: ViolationKind::InactiveWithValue,
                        message: "inactive node carries a span".to_string(),
                    });
                }
            }
        }
        ValidationReport { violations }
    }
}

/// Content equality: identical active sets, labels, and span ranges.
/// Sentence length is deliberately excluded (a rephrase pairs the same
/// structure with a different sentence).
impl PartialEq for ActionTree {
    fn eq(&self, other: &Self) -> bool {
        self.node_count == other.node_count
            && self.active == other.active
            && self.labels == other.labels
            && self.spans == other.spans
    }
}

impl Eq for ActionTree {}

/// Exact-match comparison used by agreement filtering and tree accuracy.
pub fn tree_equal(a: &ActionTree, b: &ActionTree) -> bool {
    a == b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    UnknownNode,
    RootInactive,
    InactiveParent,
    MissingLabel,
    BadLabel,
    MissingSpan,
    SpanOrder,
    SpanOutOfBounds,
    InactiveWithValue,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ViolationKind::UnknownNode => "unknown_node",
            ViolationKind::RootInactive => "root_inactive",
            ViolationKind::InactiveParent => "inactive_parent",
            ViolationKind::MissingLabel => "missing_label",
            ViolationKind::BadLabel => "bad_label",
            ViolationKind::MissingSpan => "missing_span",
            ViolationKind::SpanOrder => "span_order",
            ViolationKind::SpanOutOfBounds => "span_out_of_bounds",
            ViolationKind::InactiveWithValue => "inactive_with_value",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub node: String,
    pub kind: ViolationKind,
    pub message: String,
}

/// Result of [`ActionTree::validate`]: `ok()` iff no violations.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

#[derive(Debug, Error)]
pub enum TreeBuildError {
    #[error("unknown node id `{0}`")]
    UnknownNode(String),
    #[error("node `{0}` is {1}, expected {2}")]
    WrongKind(String, NodeKind, NodeKind),
    #[error("node `{node}` has no label `{label}`")]
    UnknownLabel { node: String, label: String },
}

/// Incremental [`ActionTree`] constructor. Setting a value on a node
/// activates it and its whole ancestor chain, so built trees satisfy
/// activation closure by construction.
pub struct TreeBuilder<'s> {
    schema: &'s GrammarSchema,
    active: Vec<bool>,
    labels: Vec<Option<u32>>,
    spans: Vec<Option<(u32, u32)>>,
}

impl<'s> TreeBuilder<'s> {
    pub fn new(schema: &'s GrammarSchema) -> Self {
        let n = schema.len();
        let mut b = TreeBuilder {
            schema,
            active: vec![false; n],
            labels: vec![None; n],
            spans: vec![None; n],
        };
        b.active[schema.root().0] = true;
        b
    }

    fn resolve(&self, id: &str) -> Result<NodeIx, TreeBuildError> {
        self.schema
            .lookup(id)
            .ok_or_else(|| TreeBuildError::UnknownNode(id.to_string()))
    }

    pub fn activate(&mut self, id: &str) -> Result<&mut Self, TreeBuildError> {
        let n = self.resolve(id)?;
        self.activate_ix(n);
        Ok(self)
    }

    pub fn activate_ix(&mut self, mut n: NodeIx) {
        loop {
            self.active[n.0] = true;
            match self.schema.parent(n) {
                Some(p) => n = p,
                None => break,
            }
        }
    }

    pub fn set_label(&mut self, id: &str, label: &str) -> Result<&mut Self, TreeBuildError> {
        let n = self.resolve(id)?;
        let kind = self.schema.kind(n);
        if kind != NodeKind::Categorical {
            return Err(TreeBuildError::WrongKind(
                id.to_string(),
                kind,
                NodeKind::Categorical,
            ));
        }
        let l = self
            .schema
            .label_index(n, label)
            .ok_or_else(|| TreeBuildError::UnknownLabel {
                node: id.to_string(),
                label: label.to_string(),
            })?;
        self.set_label_ix(n, l);
        Ok(self)
    }

    pub fn set_label_ix(&mut self, n: NodeIx, label: u32) {
        self.labels[n.0] = Some(label);
        self.activate_ix(n);
    }

    pub fn set_span(&mut self, id: &str, s: usize, e: usize) -> Result<&mut Self, TreeBuildError> {
        let n = self.resolve(id)?;
        let kind = self.schema.kind(n);
        if kind != NodeKind::Span {
            return Err(TreeBuildError::WrongKind(id.to_string(), kind, NodeKind::Span));
        }
        self.set_span_ix(n, s, e);
        Ok(self)
    }

    pub fn set_span_ix(&mut self, n: NodeIx, s: usize, e: usize) {
        self.spans[n.0] = Some((s as u32, e as u32));
        self.activate_ix(n);
    }

    pub fn build(self, sentence_length: usize) -> ActionTree {
        ActionTree {
            node_count: self.schema.len(),
            sentence_length,
            active: self.active,
            labels: self.labels,
            spans: self.spans,
        }
    }
}

/// A bare tree carrying only the given action type. The Noop case is the
/// canonical "not a command" parse.
pub fn tree_with_action(
    schema: &GrammarSchema,
    action: &str,
    sentence_length: usize,
) -> Result<ActionTree, TreeBuildError> {
    let mut b = TreeBuilder::new(schema);
    let d = schema
        .discriminator()
        .ok_or_else(|| TreeBuildError::UnknownNode("<discriminator>".to_string()))?;
    let l = schema
        .label_index(d, action)
        .ok_or_else(|| TreeBuildError::UnknownLabel {
            node: schema.id(d).to_string(),
            label: action.to_string(),
        })?;
    b.set_label_ix(d, l);
    Ok(b.build(sentence_length))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> GrammarSchema {
        GrammarSchema::load(
            r#"{
            "root": "action",
            "nodes": [
                {"id": "action", "kind": "internal",
                 "children": ["action:action_type", "schematic"]},
                {"id": "action:action_type", "kind": "categorical",
                 "values": ["Build", "Noop"]},
                {"id": "schematic", "kind": "internal",
                 "children": ["schematic:has_name_"]},
                {"id": "schematic:has_name_", "kind": "span"}
            ]
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn builder_closes_activation_upward() {
        let s = schema();
        let mut b = TreeBuilder::new(&s);
        b.set_span("schematic:has_name_", 1, 2).unwrap();
        let t = b.build(4);
        assert!(t.is_active(s.lookup("schematic").unwrap()));
        assert!(t.is_active(s.root()));
        assert!(t.validate(&s).ok());
    }

    #[test]
    fn active_child_of_inactive_parent_is_flagged() {
        let s = schema();
        let mut b = TreeBuilder::new(&s);
        b.set_span("schematic:has_name_", 0, 0).unwrap();
        let mut t = b.build(3);
        // Force the parent inactive behind the builder's back.
        let sch = s.lookup("schematic").unwrap();
        t.active[sch.0] = false;
        let report = t.validate(&s);
        assert!(!report.ok());
        assert!(report.has(ViolationKind::InactiveParent));
    }

    #[test]
    fn span_order_violation() {
        let s = schema();
        let mut b = TreeBuilder::new(&s);
        b.set_span("schematic:has_name_", 5, 3).unwrap();
        let t = b.build(10);
        assert!(t.validate(&s).has(ViolationKind::SpanOrder));
    }

    #[test]
    fn span_bounds_violation() {
        let s = schema();
        let mut b = TreeBuilder::new(&s);
        b.set_span("schematic:has_name_", 1, 7).unwrap();
        let t = b.build(4);
        assert!(t.validate(&s).has(ViolationKind::SpanOutOfBounds));
    }

    #[test]
    fn foreign_tree_reports_unknown_node() {
        let s = schema();
        let minimal = GrammarSchema::load(
            r#"{"root": "a", "nodes": [
                {"id": "a", "kind": "internal", "children": ["a:c"]},
                {"id": "a:c", "kind": "categorical", "values": ["X"]}
            ]}"#,
        )
        .unwrap();
        let t = TreeBuilder::new(&minimal).build(1);
        let report = t.validate(&s);
        assert!(report.has(ViolationKind::UnknownNode));
    }

    #[test]
    fn equality_compares_spans_exactly() {
        let s = schema();
        let mut b1 = TreeBuilder::new(&s);
        b1.set_label("action:action_type", "Build").unwrap();
        b1.set_span("schematic:has_name_", 4, 4).unwrap();
        let t1 = b1.build(6);

        let mut b2 = TreeBuilder::new(&s);
        b2.set_label("action:action_type", "Build").unwrap();
        b2.set_span("schematic:has_name_", 4, 5).unwrap();
        let t2 = b2.build(6);

        assert!(tree_equal(&t1, &t1));
        assert!(!tree_equal(&t1, &t2));
    }

    #[test]
    fn equality_ignores_sentence_length() {
        let s = schema();
        let t1 = tree_with_action(&s, "Noop", 3).unwrap();
        let t2 = tree_with_action(&s, "Noop", 9).unwrap();
        assert!(tree_equal(&t1, &t2));
    }
}
