use std::collections::BTreeMap;
use std::fmt;

use crate::grammar::{ActionTree, GrammarSchema};

use super::io::Example;

/// Per-action-type counts with Build subdivided into Build-New and
/// Build-Copy (a Build that specifies a reference object is a copy).
#[derive(Debug, Clone)]
pub struct ActionHistogram {
    counts: BTreeMap<String, u64>,
    total: u64,
}

/// The histogram key of one tree: the action-type label, with `Build`
/// refined by whether `action_ref_object` is active. Trees without an
/// active action type fall into `Unlabeled`.
pub fn action_key(tree: &ActionTree, schema: &GrammarSchema) -> String {
    match tree.action_label(schema) {
        Some("Build") => {
            let copy = schema
                .lookup("action_ref_object")
                .map(|n| tree.is_active(n))
                .unwrap_or(false);
            if copy { "Build-Copy" } else { "Build-New" }.to_string()
        }
        Some(label) => label.to_string(),
        None => "Unlabeled".to_string(),
    }
}

/// All keys the histogram reports, derived from the schema vocabulary so
/// empty corpora still show every action type at zero.
pub fn histogram_keys(schema: &GrammarSchema) -> Vec<String> {
    let mut keys = Vec::new();
    if let Some(d) = schema.discriminator() {
        for label in schema.vocab(d) {
            if label == "Build" {
                keys.push("Build-New".to_string());
                keys.push("Build-Copy".to_string());
            } else {
                keys.push(label.clone());
            }
        }
    }
    keys
}

pub fn action_frequency_stats(examples: &[Example], schema: &GrammarSchema) -> ActionHistogram {
    let mut counts: BTreeMap<String, u64> =
        histogram_keys(schema).into_iter().map(|k| (k, 0)).collect();
    for ex in examples {
        *counts.entry(action_key(&ex.tree, schema)).or_insert(0) += 1;
    }
    ActionHistogram {
        total: examples.len() as u64,
        counts,
    }
}

impl ActionHistogram {
    pub fn count(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Frequencies as fractions of the corpus, for distribution configs.
    pub fn fractions(&self) -> BTreeMap<String, f64> {
        self.counts
            .iter()
            .map(|(k, &v)| (k.clone(), if self.total == 0 { 0.0 } else { v as f64 / self.total as f64 }))
            .collect()
    }
}

impl fmt::Display for ActionHistogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "action type frequencies ({} examples):", self.total)?;
        let width = self.counts.keys().map(|k| k.len()).max().unwrap_or(0);
        // Sorted by count descending, then name.
        let mut rows: Vec<(&String, &u64)> = self.counts.iter().collect();
        rows.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        for (k, v) in rows {
            let frac = if self.total == 0 {
                0.0
            } else {
                *v as f64 / self.total as f64
            };
            writeln!(f, "  {k:width$}  {v:>8}  {:6.2}%", frac * 100.0)?;
        }
        Ok(())
    }
}
