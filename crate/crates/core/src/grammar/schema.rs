use std::collections::HashMap;
use std::fmt;

use serde::Deserialize;
use thiserror::Error;

/// Index of a node within a [`GrammarSchema`]. Dense, assigned in file
/// order; all per-node storage in the crate is keyed by it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeIx(pub usize);

impl fmt::Display for NodeIx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The three node kinds. Every node is exactly one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Internal,
    Categorical,
    Span,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Internal => write!(f, "internal"),
            NodeKind::Categorical => write!(f, "categorical"),
            NodeKind::Span => write!(f, "span"),
        }
    }
}

/// Static description of one grammar node.
#[derive(Debug, Clone)]
pub struct NodeSpec {
    /// Unique path-style id, e.g. `action_location:location_type`.
    pub id: String,
    pub kind: NodeKind,
    /// Key used for this node in serialized tree documents. Unique among
    /// siblings, not globally (several subtrees have a `repeat` child).
    pub display_name: String,
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("node `{parent}` lists unknown child `{child}`")]
    UnknownChild { parent: String, child: String },
    #[error("node `{child}` is listed as a child more than once")]
    MultipleParents { child: String },
    #[error("root node `{0}` not defined")]
    RootMissing(String),
    #[error("root node `{0}` must be internal")]
    RootNotInternal(String),
    #[error("root node `{0}` may not be listed as a child")]
    RootHasParent(String),
    #[error("node `{0}` is unreachable from the root")]
    Unreachable(String),
    #[error("node `{0}`: invalid kind `{1}` (expected internal, categorical, or span)")]
    BadKind(String, String),
    #[error("categorical node `{0}` has an empty vocabulary")]
    EmptyVocab(String),
    #[error("categorical node `{0}` repeats label `{1}`")]
    DuplicateLabel(String, String),
    #[error("{kind} node `{id}` may not declare {field}")]
    ExtraField {
        id: String,
        kind: NodeKind,
        field: &'static str,
    },
    #[error("internal node `{parent}` has children `{a}` and `{b}` with the same display name `{name}`")]
    AmbiguousDisplay {
        parent: String,
        a: String,
        b: String,
        name: String,
    },
}

#[derive(Deserialize)]
struct SchemaFile {
    root: String,
    nodes: Vec<SchemaFileNode>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFileNode {
    id: String,
    kind: String,
    #[serde(default)]
    display: Option<String>,
    #[serde(default)]
    children: Vec<String>,
    #[serde(default)]
    values: Vec<String>,
}

struct NodeEntry {
    spec: NodeSpec,
    parent: Option<NodeIx>,
    children: Vec<NodeIx>,
    vocab: Vec<String>,
    vocab_ix: HashMap<String, u32>,
    display_to_child: HashMap<String, NodeIx>,
}

/// The node universe: parent/child structure, child order, and categorical
/// vocabularies. Immutable once loaded; the schema file is the single
/// source of truth for the grammar.
pub struct GrammarSchema {
    nodes: Vec<NodeEntry>,
    by_id: HashMap<String, NodeIx>,
    root: NodeIx,
    dfs: Vec<NodeIx>,
    /// The root's first categorical child, whose label names the whole
    /// tree in serialized documents (`{"Build": ...}`).
    discriminator: Option<NodeIx>,
    digest: u64,
}

impl GrammarSchema {
    /// Parses and checks a schema document. Every structural invariant is
    /// verified here so the rest of the crate can index freely.
    pub fn load(text: &str) -> Result<Self, SchemaError> {
        let file: SchemaFile = serde_json::from_str(text)?;

        let mut by_id: HashMap<String, NodeIx> = HashMap::new();
        for (i, n) in file.nodes.iter().enumerate() {
            if by_id.insert(n.id.clone(), NodeIx(i)).is_some() {
                return Err(SchemaError::DuplicateId(n.id.clone()));
            }
        }
        let root = *by_id
            .get(&file.root)
            .ok_or_else(|| SchemaError::RootMissing(file.root.clone()))?;

        let mut nodes: Vec<NodeEntry> = Vec::with_capacity(file.nodes.len());
        for n in &file.nodes {
            let kind = match n.kind.as_str() {
                "internal" => NodeKind::Internal,
                "categorical" => NodeKind::Categorical,
                "span" => NodeKind::Span,
                other => return Err(SchemaError::BadKind(n.id.clone(), other.to_string())),
            };
            if kind != NodeKind::Internal && !n.children.is_empty() {
                return Err(SchemaError::ExtraField {
                    id: n.id.clone(),
                    kind,
                    field: "children",
                });
            }
            if kind != NodeKind::Categorical && !n.values.is_empty() {
                return Err(SchemaError::ExtraField {
                    id: n.id.clone(),
                    kind,
                    field: "values",
                });
            }
            if kind == NodeKind::Categorical {
                if n.values.is_empty() {
                    return Err(SchemaError::EmptyVocab(n.id.clone()));
                }
                let mut seen = HashMap::new();
                for v in &n.values {
                    if seen.insert(v.clone(), ()).is_some() {
                        return Err(SchemaError::DuplicateLabel(n.id.clone(), v.clone()));
                    }
                }
            }
            let display = n.display.clone().unwrap_or_else(|| {
                n.id.rsplit(':').next().unwrap_or(&n.id).to_string()
            });
            let vocab_ix = n
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| (v.clone(), i as u32))
                .collect();
            nodes.push(NodeEntry {
                spec: NodeSpec {
                    id: n.id.clone(),
                    kind,
                    display_name: display,
                },
                parent: None,
                children: Vec::new(),
                vocab: n.values.clone(),
                vocab_ix,
                display_to_child: HashMap::new(),
            });
        }

        // Wire the parent function from the child lists.
        for (i, n) in file.nodes.iter().enumerate() {
            for child_id in &n.children {
                let child = *by_id.get(child_id).ok_or_else(|| SchemaError::UnknownChild {
                    parent: n.id.clone(),
                    child: child_id.clone(),
                })?;
                if child == root {
                    return Err(SchemaError::RootHasParent(file.root.clone()));
                }
                if nodes[child.0].parent.is_some() {
                    return Err(SchemaError::MultipleParents {
                        child: child_id.clone(),
                    });
                }
                nodes[child.0].parent = Some(NodeIx(i));
                nodes[i].children.push(child);
            }
        }
        if nodes[root.0].spec.kind != NodeKind::Internal {
            return Err(SchemaError::RootNotInternal(file.root.clone()));
        }

        // Sibling display names must be unambiguous for deserialization.
        for entry in &nodes {
            let mut seen: HashMap<&str, NodeIx> = HashMap::new();
            for &c in &entry.children {
                let name = nodes[c.0].spec.display_name.as_str();
                if let Some(prev) = seen.insert(name, c) {
                    return Err(SchemaError::AmbiguousDisplay {
                        parent: entry.spec.id.clone(),
                        a: nodes[prev.0].spec.id.clone(),
                        b: nodes[c.0].spec.id.clone(),
                        name: name.to_string(),
                    });
                }
            }
        }
        for i in 0..nodes.len() {
            let map: HashMap<String, NodeIx> = nodes[i]
                .children
                .iter()
                .map(|&c| (nodes[c.0].spec.display_name.clone(), c))
                .collect();
            nodes[i].display_to_child = map;
        }

        // Pre-order traversal; doubles as the reachability check that
        // rules out cycles and orphans.
        let mut dfs = Vec::with_capacity(nodes.len());
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            dfs.push(n);
            for &c in nodes[n.0].children.iter().rev() {
                stack.push(c);
            }
        }
        if dfs.len() != nodes.len() {
            let mut reached = vec![false; nodes.len()];
            for &n in &dfs {
                reached[n.0] = true;
            }
            let missing = (0..nodes.len()).find(|&i| !reached[i]).unwrap();
            return Err(SchemaError::Unreachable(nodes[missing].spec.id.clone()));
        }

        let discriminator = nodes[root.0]
            .children
            .iter()
            .copied()
            .find(|&c| nodes[c.0].spec.kind == NodeKind::Categorical);

        let digest = crate::fnv64(text.as_bytes());
        Ok(GrammarSchema {
            nodes,
            by_id,
            root,
            dfs,
            discriminator,
            digest,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeIx {
        self.root
    }

    /// The root's first categorical child (the action type in the
    /// reference grammar), if any.
    pub fn discriminator(&self) -> Option<NodeIx> {
        self.discriminator
    }

    pub fn node(&self, ix: NodeIx) -> &NodeSpec {
        &self.nodes[ix.0].spec
    }

    pub fn kind(&self, ix: NodeIx) -> NodeKind {
        self.nodes[ix.0].spec.kind
    }

    pub fn id(&self, ix: NodeIx) -> &str {
        &self.nodes[ix.0].spec.id
    }

    pub fn parent(&self, ix: NodeIx) -> Option<NodeIx> {
        self.nodes[ix.0].parent
    }

    /// Children in declared order; empty for leaves.
    pub fn children(&self, ix: NodeIx) -> &[NodeIx] {
        &self.nodes[ix.0].children
    }

    pub fn lookup(&self, id: &str) -> Option<NodeIx> {
        self.by_id.get(id).copied()
    }

    /// Categorical vocabulary `C^n` in declared order; empty for other kinds.
    pub fn vocab(&self, ix: NodeIx) -> &[String] {
        &self.nodes[ix.0].vocab
    }

    pub fn label_index(&self, ix: NodeIx, label: &str) -> Option<u32> {
        self.nodes[ix.0].vocab_ix.get(label).copied()
    }

    pub fn child_by_display(&self, parent: NodeIx, display: &str) -> Option<NodeIx> {
        self.nodes[parent.0].display_to_child.get(display).copied()
    }

    /// Fixed pre-order traversal of all nodes, respecting child order.
    /// This is the prediction order used by the sequential models.
    pub fn dfs_order(&self) -> &[NodeIx] {
        &self.dfs
    }

    /// `dfs_order` as node-id strings, for reporting.
    pub fn dfs_ids(&self) -> Vec<&str> {
        self.dfs.iter().map(|&n| self.id(n)).collect()
    }

    /// Digest of the schema document, embedded in checkpoints so a model
    /// is never evaluated against a different grammar.
    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn node_indices(&self) -> impl Iterator<Item = NodeIx> {
        (0..self.nodes.len()).map(NodeIx)
    }
}

impl fmt::Debug for GrammarSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrammarSchema")
            .field("nodes", &self.nodes.len())
            .field("root", &self.id(self.root))
            .finish()
    }
}
