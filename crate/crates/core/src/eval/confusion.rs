use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::grammar::{ActionTree, GrammarSchema, NodeIx, NodeKind};

/// Outcome column for a gold internal node that is absent from the
/// prediction while the prediction has no unmatched internal node to
/// blame; keeps every row's outcome mass equal to its total.
pub const UNATTRIBUTED: &str = "UNATTRIBUTED";

/// Internal-node confusion: per gold node id, fractional counts over
/// predicted node ids (`UNATTRIBUTED` included).
#[derive(Debug, Clone, Default, Serialize)]
pub struct InternalConfusion {
    pub rows: BTreeMap<String, Row>,
}

/// Categorical confusion: per node id, per gold label, counts over
/// predicted labels plus `NO-PARENT` and `ABSENT`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CatConfusion {
    pub nodes: BTreeMap<String, BTreeMap<String, Row>>,
}

/// Span confusion: per node id, counts over
/// `MATCH-SPAN`/`MIS-SPAN`/`NO-PARENT`/`ABSENT`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SpanConfusion {
    pub rows: BTreeMap<String, Row>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanOutcome {
    MatchSpan,
    MisSpan,
    NoParent,
    Absent,
}

impl SpanOutcome {
    pub fn name(self) -> &'static str {
        match self {
            SpanOutcome::MatchSpan => "MATCH-SPAN",
            SpanOutcome::MisSpan => "MIS-SPAN",
            SpanOutcome::NoParent => "NO-PARENT",
            SpanOutcome::Absent => "ABSENT",
        }
    }
}

/// One confusion row: total gold occurrences plus outcome mass.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Row {
    pub total: f64,
    pub outcomes: BTreeMap<String, f64>,
}

impl Row {
    fn add(&mut self, outcome: &str, mass: f64) {
        *self.outcomes.entry(outcome.to_string()).or_insert(0.0) += mass;
    }

    pub fn mass(&self) -> f64 {
        self.outcomes.values().sum()
    }

    /// `(outcome, fraction-of-total)` pairs sorted by descending count.
    pub fn fractions(&self) -> Vec<(String, f64)> {
        let mut v: Vec<(String, f64)> = self
            .outcomes
            .iter()
            .map(|(k, &m)| (k.clone(), m / self.total))
            .collect();
        v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        v
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfusionTables {
    pub internal: InternalConfusion,
    pub categorical: CatConfusion,
    pub span: SpanConfusion,
}

/// Builds the three confusion tables from (predicted, gold) pairs.
///
/// Counting rules, per gold occurrence:
/// - internal: +1 to the gold id's own column when it is predicted;
///   otherwise +1/#unmatched to each predicted internal node that matches
///   no gold internal (or `UNATTRIBUTED` when there is none).
/// - categorical: +1 to the predicted label when the node is predicted
///   (right or wrong); `NO-PARENT` when its parent is absent from the
///   prediction; `ABSENT` when the parent is there but the node is not.
/// - span: `MATCH-SPAN`/`MIS-SPAN` when predicted with the right/wrong
///   range; `NO-PARENT`/`ABSENT` as for categoricals.
pub fn confusion_tables(
    pairs: &[(ActionTree, ActionTree)],
    schema: &GrammarSchema,
) -> ConfusionTables {
    let mut internal = InternalConfusion::default();
    let mut categorical = CatConfusion::default();
    let mut span = SpanConfusion::default();

    let internal_nodes: Vec<NodeIx> = schema
        .node_indices()
        .filter(|&n| schema.kind(n) == NodeKind::Internal)
        .collect();

    for (predicted, gold) in pairs {
        // Internal rule. Unmatched predictions are shared by every
        // missing gold node in this pair.
        let unmatched: Vec<NodeIx> = internal_nodes
            .iter()
            .copied()
            .filter(|&n| predicted.is_active(n) && !gold.is_active(n))
            .collect();
        for &n in &internal_nodes {
            if !gold.is_active(n) {
                continue;
            }
            let row = internal.rows.entry(schema.id(n).to_string()).or_default();
            row.total += 1.0;
            if predicted.is_active(n) {
                row.add(schema.id(n), 1.0);
            } else if unmatched.is_empty() {
                row.add(UNATTRIBUTED, 1.0);
            } else {
                let share = 1.0 / unmatched.len() as f64;
                for &u in &unmatched {
                    row.add(schema.id(u), share);
                }
            }
        }

        for n in schema.node_indices() {
            if !gold.is_active(n) {
                continue;
            }
            let parent_predicted = schema
                .parent(n)
                .map(|p| predicted.is_active(p))
                .unwrap_or(true);
            match schema.kind(n) {
                NodeKind::Categorical => {
                    let gold_label = &schema.vocab(n)[gold.label(n).unwrap() as usize];
                    let node_rows = categorical
                        .nodes
                        .entry(schema.id(n).to_string())
                        .or_default();
                    let row = node_rows.entry(gold_label.clone()).or_default();
                    row.total += 1.0;
                    if predicted.is_active(n) {
                        let predicted_label =
                            &schema.vocab(n)[predicted.label(n).unwrap() as usize];
                        row.add(predicted_label, 1.0);
                    } else if !parent_predicted {
                        row.add("NO-PARENT", 1.0);
                    } else {
                        row.add("ABSENT", 1.0);
                    }
                }
                NodeKind::Span => {
                    let row = span.rows.entry(schema.id(n).to_string()).or_default();
                    row.total += 1.0;
                    if predicted.is_active(n) {
                        if predicted.span(n) == gold.span(n) {
                            row.add(SpanOutcome::MatchSpan.name(), 1.0);
                        } else {
                            row.add(SpanOutcome::MisSpan.name(), 1.0);
                        }
                    } else if !parent_predicted {
                        row.add(SpanOutcome::NoParent.name(), 1.0);
                    } else {
                        row.add(SpanOutcome::Absent.name(), 1.0);
                    }
                }
                NodeKind::Internal => {}
            }
        }
    }

    ConfusionTables {
        internal,
        categorical,
        span,
    }
}

impl ConfusionTables {
    /// Text rendering as printed mappings: each row prints
    /// `('total', N)` first and then `(outcome, fraction)` pairs sorted
    /// by descending count.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("internal node confusion:\n");
        render_rows(&mut out, &self.internal.rows, 1);
        out.push_str("categorical node confusion:\n");
        for (node, rows) in &self.categorical.nodes {
            writeln!(out, "  '{node}':").unwrap();
            render_rows(&mut out, rows, 2);
        }
        out.push_str("span node confusion:\n");
        render_rows(&mut out, &self.span.rows, 1);
        out
    }
}

fn render_rows(out: &mut String, rows: &BTreeMap<String, Row>, indent: usize) {
    let pad = "  ".repeat(indent);
    for (key, row) in rows {
        let mut line = format!("{pad}'{key}': [('total', {:.1})", row.total);
        for (outcome, fraction) in row.fractions() {
            line.push_str(&format!(", ('{outcome}', {:.4})", fraction));
        }
        line.push(']');
        out.push_str(&line);
        out.push('\n');
    }
}
