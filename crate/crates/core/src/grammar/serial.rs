use serde_json::Value;
use thiserror::Error;

use super::schema::{GrammarSchema, NodeIx, NodeKind};
use super::tree::{ActionTree, TreeBuilder};

#[derive(Debug, Error)]
pub enum TreeDocError {
    #[error("document parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("document root must be a single-key object")]
    BadRoot,
    #[error("unknown action type `{0}`")]
    UnknownAction(String),
    #[error("unknown key `{key}` under `{parent}`")]
    UnknownKey { parent: String, key: String },
    #[error("node `{node}`: expected {expected}, found {found}")]
    WrongShape {
        node: String,
        expected: &'static str,
        found: String,
    },
    #[error("node `{node}`: unknown label `{label}`")]
    UnknownLabel { node: String, label: String },
    #[error("schema has no action-type discriminator; trees cannot be serialized")]
    NoDiscriminator,
    #[error("tree has no active action type; cannot serialize")]
    InactiveDiscriminator,
    #[error("cannot serialize invalid tree: node `{node}`: {message}")]
    Invalid { node: String, message: String },
}

/// Canonical document form of a tree, e.g.
/// `{"Build": {"schematic": {"has_name_": [4,4]}}}`.
///
/// The top-level key is the action-type label; nested keys are child
/// display names in schema child order; spans print as two-element
/// inclusive index arrays. The output is byte-stable: golden files can
/// compare documents directly.
pub fn serialize_tree(tree: &ActionTree, schema: &GrammarSchema) -> Result<String, TreeDocError> {
    let report = tree.validate(schema);
    if let Some(v) = report.violations.first() {
        return Err(TreeDocError::Invalid {
            node: v.node.clone(),
            message: v.message.clone(),
        });
    }
    let disc = schema.discriminator().ok_or(TreeDocError::NoDiscriminator)?;
    if !tree.is_active(disc) {
        return Err(TreeDocError::InactiveDiscriminator);
    }
    let label = &schema.vocab(disc)[tree.label(disc).unwrap() as usize];
    let mut out = String::new();
    out.push_str("{\"");
    out.push_str(label);
    out.push_str("\": ");
    write_internal(&mut out, tree, schema, schema.root(), Some(disc));
    out.push('}');
    Ok(out)
}

fn write_internal(
    out: &mut String,
    tree: &ActionTree,
    schema: &GrammarSchema,
    node: NodeIx,
    skip: Option<NodeIx>,
) {
    out.push('{');
    let mut first = true;
    for &c in schema.children(node) {
        if Some(c) == skip || !tree.is_active(c) {
            continue;
        }
        if !first {
            out.push_str(", ");
        }
        first = false;
        out.push('"');
        out.push_str(&schema.node(c).display_name);
        out.push_str("\": ");
        match schema.kind(c) {
            NodeKind::Internal => write_internal(out, tree, schema, c, None),
            NodeKind::Categorical => {
                out.push('"');
                out.push_str(&schema.vocab(c)[tree.label(c).unwrap() as usize]);
                out.push('"');
            }
            NodeKind::Span => {
                let (s, e) = tree.span(c).unwrap();
                out.push_str(&format!("[{s},{e}]"));
            }
        }
    }
    out.push('}');
}

/// Parses a canonical (or whitespace-relaxed) tree document. The sentence
/// length of the returned tree is the minimal length consistent with its
/// spans; pair it with a sentence via
/// [`ActionTree::with_sentence_length`].
pub fn deserialize_tree(text: &str, schema: &GrammarSchema) -> Result<ActionTree, TreeDocError> {
    let value: Value = serde_json::from_str(text)?;
    let obj = value.as_object().ok_or(TreeDocError::BadRoot)?;
    if obj.len() != 1 {
        return Err(TreeDocError::BadRoot);
    }
    let disc = schema.discriminator().ok_or(TreeDocError::NoDiscriminator)?;
    let (action, body) = obj.iter().next().unwrap();
    let label = schema
        .label_index(disc, action)
        .ok_or_else(|| TreeDocError::UnknownAction(action.clone()))?;

    let mut builder = TreeBuilder::new(schema);
    builder.set_label_ix(disc, label);
    let body = body.as_object().ok_or_else(|| TreeDocError::WrongShape {
        node: schema.id(schema.root()).to_string(),
        expected: "object",
        found: kind_name(body).to_string(),
    })?;
    read_members(&mut builder, schema, schema.root(), body)?;
    let tree = builder.build(0);
    let min_len = schema
        .node_indices()
        .filter_map(|n| tree.span(n))
        .map(|(_, e)| e as usize + 1)
        .max()
        .unwrap_or(0);
    Ok(tree.with_sentence_length(min_len))
}

fn read_members(
    builder: &mut TreeBuilder,
    schema: &GrammarSchema,
    parent: NodeIx,
    members: &serde_json::Map<String, Value>,
) -> Result<(), TreeDocError> {
    for (key, value) in members {
        let child = schema
            .child_by_display(parent, key)
            .ok_or_else(|| TreeDocError::UnknownKey {
                parent: schema.id(parent).to_string(),
                key: key.clone(),
            })?;
        let id = schema.id(child).to_string();
        match schema.kind(child) {
            NodeKind::Internal => {
                let obj = value.as_object().ok_or_else(|| TreeDocError::WrongShape {
                    node: id.clone(),
                    expected: "object",
                    found: kind_name(value).to_string(),
                })?;
                builder.activate_ix(child);
                read_members(builder, schema, child, obj)?;
            }
            NodeKind::Categorical => {
                let label = value.as_str().ok_or_else(|| TreeDocError::WrongShape {
                    node: id.clone(),
                    expected: "label string",
                    found: kind_name(value).to_string(),
                })?;
                let ix = schema
                    .label_index(child, label)
                    .ok_or_else(|| TreeDocError::UnknownLabel {
                        node: id.clone(),
                        label: label.to_string(),
                    })?;
                builder.set_label_ix(child, ix);
            }
            NodeKind::Span => {
                let arr = value.as_array().ok_or_else(|| TreeDocError::WrongShape {
                    node: id.clone(),
                    expected: "two-element index array",
                    found: kind_name(value).to_string(),
                })?;
                let (s, e) = match (arr.first().and_then(Value::as_u64), arr.get(1).and_then(Value::as_u64)) {
                    (Some(s), Some(e)) if arr.len() == 2 => (s, e),
                    _ => {
                        return Err(TreeDocError::WrongShape {
                            node: id,
                            expected: "two-element index array",
                            found: format!("array of {}", arr.len()),
                        })
                    }
                };
                builder.set_span_ix(child, s as usize, e as usize);
            }
        }
    }
    Ok(())
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::tree::tree_with_action;

    fn reference() -> GrammarSchema {
        GrammarSchema::load(crate::REFERENCE_SCHEMA_JSON).unwrap()
    }

    /// Tree for "make three oak wood houses to the left of the dark grey
    /// church ." over its 14 tokens.
    pub(crate) fn figure_tree(schema: &GrammarSchema) -> ActionTree {
        let mut b = TreeBuilder::new(schema);
        b.set_label("action:action_type", "Build").unwrap();
        b.set_span("schematic:has_block_type_", 2, 3).unwrap();
        b.set_span("schematic:has_name_", 4, 4).unwrap();
        b.set_label("s_repeat:repeat_key", "FOR").unwrap();
        b.set_span("s_repeat:repeat_count", 1, 1).unwrap();
        b.set_label("action_location:relative_direction", "LEFT").unwrap();
        b.set_label("action_location:location_type", "BlockObject").unwrap();
        b.set_span("al_ref_object:has_colour_", 10, 11).unwrap();
        b.set_span("al_ref_object:has_name_", 12, 12).unwrap();
        b.build(14)
    }

    const FIGURE_DOC: &str = "{\"Build\": {\"schematic\": {\"has_block_type_\": [2,3], \"has_name_\": [4,4], \"repeat\": {\"repeat_key\": \"FOR\", \"repeat_count\": [1,1]}}, \"location\": {\"relative_direction\": \"LEFT\", \"location_type\": \"BlockObject\", \"location_reference_object\": {\"has_colour_\": [10,11], \"has_name_\": [12,12]}}}}";

    #[test]
    fn figure_example_serializes_to_golden_bytes() {
        let s = reference();
        let t = figure_tree(&s);
        assert!(t.validate(&s).ok());
        assert_eq!(serialize_tree(&t, &s).unwrap(), FIGURE_DOC);
    }

    #[test]
    fn figure_example_round_trips() {
        let s = reference();
        let t = figure_tree(&s);
        let doc = serialize_tree(&t, &s).unwrap();
        let back = deserialize_tree(&doc, &s).unwrap();
        assert_eq!(back, t);
        // Canonical text is a fixed point.
        assert_eq!(serialize_tree(&back.with_sentence_length(14), &s).unwrap(), doc);
    }

    #[test]
    fn noop_tree_serializes_bare() {
        let s = reference();
        let t = tree_with_action(&s, "Noop", 3).unwrap();
        assert_eq!(serialize_tree(&t, &s).unwrap(), "{\"Noop\": {}}");
        let back = deserialize_tree("{\"Noop\": {}}", &s).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn unknown_key_is_named() {
        let s = reference();
        let err = deserialize_tree("{\"Build\": {\"blueprint\": {}}}", &s).unwrap_err();
        match err {
            TreeDocError::UnknownKey { parent, key } => {
                assert_eq!(parent, "action");
                assert_eq!(key, "blueprint");
            }
            other => panic!("expected UnknownKey, got {other:?}"),
        }
    }

    #[test]
    fn unknown_action_is_named() {
        let s = reference();
        assert!(matches!(
            deserialize_tree("{\"Teleport\": {}}", &s),
            Err(TreeDocError::UnknownAction(a)) if a == "Teleport"
        ));
    }

    #[test]
    fn wrong_span_shape_is_reported() {
        let s = reference();
        let err =
            deserialize_tree("{\"Build\": {\"schematic\": {\"has_name_\": \"house\"}}}", &s)
                .unwrap_err();
        assert!(matches!(err, TreeDocError::WrongShape { .. }), "{err:?}");
    }

    #[test]
    fn deserialize_infers_minimal_sentence_length() {
        let s = reference();
        let t = deserialize_tree("{\"Build\": {\"schematic\": {\"has_name_\": [4,6]}}}", &s)
            .unwrap();
        assert_eq!(t.sentence_length(), 7);
    }
}
