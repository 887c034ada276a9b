//! Checks on the bundled reference grammar and template library.

use std::collections::BTreeMap;

use arbor_core::corpus::action_key;
use arbor_core::grammar::{GrammarSchema, NodeKind};
use arbor_core::template::{NoopCorpus, TemplateLibrary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn schema() -> GrammarSchema {
    GrammarSchema::load(arbor_core::REFERENCE_SCHEMA_JSON).unwrap()
}

#[test]
fn reference_schema_has_the_full_action_vocabulary() {
    let s = schema();
    let at = s.lookup("action:action_type").unwrap();
    assert_eq!(s.kind(at), NodeKind::Categorical);
    let vocab: Vec<&str> = s.vocab(at).iter().map(|v| v.as_str()).collect();
    for action in [
        "Build", "Move", "Dig", "Noop", "Tag", "Answer", "Fill", "Destroy", "Spawn", "Resume",
        "Undo", "Stop", "FreeBuild", "OtherAction",
    ] {
        assert!(vocab.contains(&action), "missing action type {action}");
    }
    assert_eq!(vocab.len(), 14);
}

#[test]
fn reference_schema_covers_the_standard_node_inventory() {
    let s = schema();
    // Node ids the confusion reports and corpora key on.
    for id in [
        "action",
        "action_location",
        "action_ref_object",
        "al_ref_object",
        "ar_location",
        "arl_ref_object",
        "ar_repeat",
        "s_repeat",
        "schematic",
        "stop_condition",
        "action:action_type",
        "action_location:location_type",
        "action_location:relative_direction",
        "ar_repeat:repeat_key",
        "s_repeat:repeat_key",
        "action:has_depth_",
        "action:has_size_",
        "action:has_width_",
        "action:tag",
        "action_ref_object:has_block_type_",
        "action_ref_object:has_colour_",
        "action_ref_object:has_name_",
        "action_ref_object:has_size_",
        "al_ref_object:has_name_",
        "ar_repeat:repeat_count",
        "s_repeat:repeat_count",
        "schematic:has_block_type_",
        "schematic:has_colour_",
        "schematic:has_height_",
        "schematic:has_name_",
        "schematic:has_size_",
        "schematic:has_width_",
    ] {
        assert!(s.lookup(id).is_some(), "schema is missing node `{id}`");
    }
}

#[test]
fn dfs_order_parents_precede_children_and_cover_all_nodes() {
    let s = schema();
    let order = s.dfs_order();
    assert_eq!(order.len(), s.len());
    let position: BTreeMap<_, _> = order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    for n in s.node_indices() {
        if let Some(p) = s.parent(n) {
            assert!(position[&p] < position[&n], "parent after child in DFS");
        }
    }
}

#[test]
fn dfs_order_follows_child_order_within_build() {
    let s = schema();
    let ids = s.dfs_ids();
    let pos = |id: &str| ids.iter().position(|&x| x == id).unwrap();
    assert!(pos("action:action_type") < pos("schematic"));
    assert!(pos("schematic:has_block_type_") < pos("s_repeat"));
    assert!(pos("schematic:has_name_") < pos("s_repeat"));
    assert!(pos("s_repeat") < pos("action_location"));
}

#[test]
fn permuting_child_order_permutes_the_traversal() {
    let a = GrammarSchema::load(
        r#"{"root": "r", "nodes": [
            {"id": "r", "kind": "internal", "children": ["r:t", "x", "y"]},
            {"id": "r:t", "kind": "categorical", "values": ["A"]},
            {"id": "x", "kind": "internal", "children": ["x:s_"]},
            {"id": "x:s_", "kind": "span"},
            {"id": "y", "kind": "span"}
        ]}"#,
    )
    .unwrap();
    let b = GrammarSchema::load(
        r#"{"root": "r", "nodes": [
            {"id": "r", "kind": "internal", "children": ["r:t", "y", "x"]},
            {"id": "r:t", "kind": "categorical", "values": ["A"]},
            {"id": "x", "kind": "internal", "children": ["x:s_"]},
            {"id": "x:s_", "kind": "span"},
            {"id": "y", "kind": "span"}
        ]}"#,
    )
    .unwrap();
    assert_eq!(a.dfs_ids(), ["r", "r:t", "x", "x:s_", "y"]);
    assert_eq!(b.dfs_ids(), ["r", "r:t", "y", "x", "x:s_"]);
}

#[test]
fn reference_library_loads_with_required_coverage() {
    let s = schema();
    let lib = TemplateLibrary::load(arbor_core::REFERENCE_TEMPLATES_JSON, &s).unwrap();
    assert!(
        lib.templates().len() >= 150,
        "library has only {} templates",
        lib.templates().len()
    );

    // Count templates per action type by looking at a sample from each.
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut per_action: BTreeMap<String, usize> = BTreeMap::new();
    for ix in 0..lib.templates().len() {
        let ex = lib.sample_pair(&s, ix, &mut rng);
        let label = ex
            .tree
            .action_label(&s)
            .expect("every template must set an action type")
            .to_string();
        *per_action.entry(label).or_default() += 1;
    }
    for action in [
        "Build", "Move", "Dig", "Noop", "Tag", "Answer", "Fill", "Destroy", "Spawn", "Resume",
        "Undo", "Stop", "FreeBuild", "OtherAction",
    ] {
        let n = per_action.get(action).copied().unwrap_or(0);
        assert!(n >= 10, "action type {action} has only {n} templates");
    }
}

#[test]
fn reference_library_yields_both_build_varieties() {
    let s = schema();
    let lib = TemplateLibrary::load(arbor_core::REFERENCE_TEMPLATES_JSON, &s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut keys = BTreeMap::new();
    for _ in 0..2000 {
        let ex = lib.sample_any(&s, &mut rng);
        *keys.entry(action_key(&ex.tree, &s)).or_insert(0usize) += 1;
    }
    assert!(keys.get("Build-New").copied().unwrap_or(0) > 0);
    assert!(keys.get("Build-Copy").copied().unwrap_or(0) > 0);
}

#[test]
fn ten_thousand_samples_validate_and_spans_echo_surface() {
    let s = schema();
    let lib = TemplateLibrary::load(arbor_core::REFERENCE_TEMPLATES_JSON, &s).unwrap();

    // Inventory of legal surface strings per span node: every span a
    // template emits must be exactly one of its node's realizations.
    let mut inventory: BTreeMap<usize, std::collections::BTreeSet<Vec<String>>> = BTreeMap::new();
    for object in lib.objects() {
        for real in &object.realizations {
            for &node in &real.spans {
                inventory
                    .entry(node.0)
                    .or_default()
                    .insert(real.tokens.clone());
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for i in 0..10_000 {
        let ix = i % lib.templates().len();
        let ex = lib.sample_pair(&s, ix, &mut rng);
        let report = ex.tree.validate(&s);
        assert!(
            report.ok(),
            "template {} generated invalid tree: {:?}",
            lib.templates()[ix].id,
            report.violations
        );
        for n in s.node_indices() {
            if let Some((a, b)) = ex.tree.span(n) {
                assert!((b as usize) < ex.sentence.len());
                let covered = ex.sentence[a as usize..=b as usize].to_vec();
                assert!(
                    inventory[&n.0].contains(&covered),
                    "template {}: span {} = {covered:?} is not a realization of that node",
                    lib.templates()[ix].id,
                    s.id(n)
                );
            }
        }
    }
}

#[test]
fn bundled_noop_corpus_parses() {
    let corpus = NoopCorpus::parse(arbor_core::NOOP_LINES).unwrap();
    assert!(corpus.len() >= 100, "bundled noop corpus too small");
}
