use std::collections::HashMap;

use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::grammar::{tokenize, ActionTree, GrammarSchema, NodeIx, NodeKind, TreeBuilder};

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template library parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate template object id `{0}`")]
    DuplicateObject(String),
    #[error("duplicate template id `{0}`")]
    DuplicateTemplate(String),
    #[error("object `{0}` has no realizations")]
    NoRealizations(String),
    #[error("object `{object}`: realization `{text}` {problem}")]
    BadRealization {
        object: String,
        text: String,
        problem: String,
    },
    #[error("object `{object}` references unknown node `{node}`")]
    UnknownNode { object: String, node: String },
    #[error("object `{object}`: node `{node}` has no label `{label}`")]
    UnknownLabel {
        object: String,
        node: String,
        label: String,
    },
    #[error("object `{object}`: node `{node}` is {found}, expected {expected}")]
    WrongKind {
        object: String,
        node: String,
        found: NodeKind,
        expected: NodeKind,
    },
    #[error("template `{0}` references unknown object `{1}`")]
    UnknownObject(String, String),
    #[error("template `{0}` has no slots")]
    EmptyTemplate(String),
    #[error("template `{0}` has non-positive weight")]
    BadWeight(String),
    #[error("template `{template}` composes an invalid tree: {detail}")]
    Composition { template: String, detail: String },
}

#[derive(Deserialize)]
struct LibraryFile {
    objects: Vec<ObjectFile>,
    templates: Vec<TemplateFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectFile {
    id: String,
    #[serde(default)]
    linguistic_only: bool,
    realizations: Vec<RealizationFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RealizationFile {
    text: String,
    #[serde(default)]
    labels: HashMap<String, String>,
    #[serde(default)]
    spans: Vec<String>,
    #[serde(default)]
    activate: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    id: String,
    slots: Vec<String>,
    #[serde(default = "default_weight")]
    weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

/// One way a template object can be said, with the tree content it
/// contributes. Node references are resolved to schema indices at load.
#[derive(Debug, Clone)]
pub struct Realization {
    pub tokens: Vec<String>,
    pub labels: Vec<(NodeIx, u32)>,
    /// Span nodes whose range is this realization's token range.
    pub spans: Vec<NodeIx>,
    pub activate: Vec<NodeIx>,
}

impl Realization {
    fn touches_tree(&self) -> bool {
        !(self.labels.is_empty() && self.spans.is_empty() && self.activate.is_empty())
    }
}

/// Links an atomic concept to its surface forms, or (for
/// `linguistic_only` objects) contributes words without tree content.
#[derive(Debug, Clone)]
pub struct TemplateObject {
    pub id: String,
    pub linguistic_only: bool,
    pub realizations: Vec<Realization>,
}

/// Ordered slot sequence over template objects.
#[derive(Debug, Clone)]
pub struct Template {
    pub id: String,
    pub slots: Vec<usize>,
    pub weight: f64,
}

/// A generated (sentence, tree) pair with its template provenance.
#[derive(Debug, Clone)]
pub struct GeneratedExample {
    pub sentence: Vec<String>,
    pub tree: ActionTree,
    pub template_id: String,
}

/// A loaded, fully validated template library bound to one schema.
#[derive(Debug)]
pub struct TemplateLibrary {
    objects: Vec<TemplateObject>,
    object_ix: HashMap<String, usize>,
    templates: Vec<Template>,
    cumulative_weight: Vec<f64>,
}

/// How many realization combinations a template may have before
/// load-time composition checking falls back to sampling.
const EXHAUSTIVE_LIMIT: u64 = 512;
const SAMPLED_CHECKS: u32 = 64;

impl TemplateLibrary {
    pub fn load(text: &str, schema: &GrammarSchema) -> Result<Self, TemplateError> {
        let file: LibraryFile = serde_json::from_str(text)?;

        let mut objects = Vec::with_capacity(file.objects.len());
        let mut object_ix = HashMap::new();
        for o in &file.objects {
            if object_ix.contains_key(&o.id) {
                return Err(TemplateError::DuplicateObject(o.id.clone()));
            }
            if o.realizations.is_empty() {
                return Err(TemplateError::NoRealizations(o.id.clone()));
            }
            let mut realizations = Vec::with_capacity(o.realizations.len());
            for r in &o.realizations {
                let tokens = tokenize(&r.text);
                if tokens.is_empty() {
                    return Err(TemplateError::BadRealization {
                        object: o.id.clone(),
                        text: r.text.clone(),
                        problem: "has an empty surface fragment".to_string(),
                    });
                }
                let mut labels = Vec::new();
                for (node_id, label) in sorted(&r.labels) {
                    let node = resolve(schema, &o.id, node_id, NodeKind::Categorical)?;
                    let l = schema.label_index(node, label).ok_or_else(|| {
                        TemplateError::UnknownLabel {
                            object: o.id.clone(),
                            node: node_id.clone(),
                            label: label.clone(),
                        }
                    })?;
                    labels.push((node, l));
                }
                let mut spans = Vec::new();
                for node_id in &r.spans {
                    spans.push(resolve(schema, &o.id, node_id, NodeKind::Span)?);
                }
                let mut activate = Vec::new();
                for node_id in &r.activate {
                    activate.push(resolve(schema, &o.id, node_id, NodeKind::Internal)?);
                }
                let real = Realization {
                    tokens,
                    labels,
                    spans,
                    activate,
                };
                if o.linguistic_only && real.touches_tree() {
                    return Err(TemplateError::BadRealization {
                        object: o.id.clone(),
                        text: r.text.clone(),
                        problem: "is linguistic-only but carries tree content".to_string(),
                    });
                }
                if !o.linguistic_only && !real.touches_tree() {
                    return Err(TemplateError::BadRealization {
                        object: o.id.clone(),
                        text: r.text.clone(),
                        problem: "touches no tree node (mark the object linguistic_only?)"
                            .to_string(),
                    });
                }
                realizations.push(real);
            }
            object_ix.insert(o.id.clone(), objects.len());
            objects.push(TemplateObject {
                id: o.id.clone(),
                linguistic_only: o.linguistic_only,
                realizations,
            });
        }

        let mut templates = Vec::with_capacity(file.templates.len());
        let mut seen = HashMap::new();
        for t in &file.templates {
            if seen.insert(t.id.clone(), ()).is_some() {
                return Err(TemplateError::DuplicateTemplate(t.id.clone()));
            }
            if t.slots.is_empty() {
                return Err(TemplateError::EmptyTemplate(t.id.clone()));
            }
            if !t.weight.is_finite() || t.weight <= 0.0 {
                return Err(TemplateError::BadWeight(t.id.clone()));
            }
            let mut slots = Vec::with_capacity(t.slots.len());
            for s in &t.slots {
                let ix = *object_ix
                    .get(s)
                    .ok_or_else(|| TemplateError::UnknownObject(t.id.clone(), s.clone()))?;
                slots.push(ix);
            }
            templates.push(Template {
                id: t.id.clone(),
                slots,
                weight: t.weight,
            });
        }

        let mut cumulative_weight = Vec::with_capacity(templates.len());
        let mut acc = 0.0;
        for t in &templates {
            acc += t.weight;
            cumulative_weight.push(acc);
        }

        let lib = TemplateLibrary {
            objects,
            object_ix,
            templates,
            cumulative_weight,
        };
        lib.check_compositions(schema)?;
        Ok(lib)
    }

    /// Verifies that every realization choice of every template composes
    /// into a valid tree: exhaustively when the combination count is
    /// small, by seeded sampling otherwise.
    fn check_compositions(&self, schema: &GrammarSchema) -> Result<(), TemplateError> {
        use rand::SeedableRng;
        for (t_ix, t) in self.templates.iter().enumerate() {
            let combos: u64 = t
                .slots
                .iter()
                .map(|&s| self.objects[s].realizations.len() as u64)
                .try_fold(1u64, u64::checked_mul)
                .unwrap_or(u64::MAX);
            if combos <= EXHAUSTIVE_LIMIT {
                let mut choice = vec![0usize; t.slots.len()];
                loop {
                    self.compose(schema, t_ix, &choice).map_err(|detail| {
                        TemplateError::Composition {
                            template: t.id.clone(),
                            detail,
                        }
                    })?;
                    // Odometer increment over realization choices.
                    let mut pos = 0;
                    loop {
                        if pos == choice.len() {
                            break;
                        }
                        choice[pos] += 1;
                        if choice[pos] < self.objects[t.slots[pos]].realizations.len() {
                            break;
                        }
                        choice[pos] = 0;
                        pos += 1;
                    }
                    if pos == choice.len() {
                        break;
                    }
                }
            } else {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(t_ix as u64);
                for _ in 0..SAMPLED_CHECKS {
                    let choice: Vec<usize> = t
                        .slots
                        .iter()
                        .map(|&s| rng.gen_range(0..self.objects[s].realizations.len()))
                        .collect();
                    self.compose(schema, t_ix, &choice).map_err(|detail| {
                        TemplateError::Composition {
                            template: t.id.clone(),
                            detail,
                        }
                    })?;
                }
            }
        }
        Ok(())
    }

    /// Builds the (sentence, tree) pair for one realization choice.
    fn compose(
        &self,
        schema: &GrammarSchema,
        template_ix: usize,
        choice: &[usize],
    ) -> Result<GeneratedExample, String> {
        let t = &self.templates[template_ix];
        let mut sentence: Vec<String> = Vec::new();
        let mut builder = TreeBuilder::new(schema);
        let mut label_source: HashMap<NodeIx, usize> = HashMap::new();
        let mut span_source: HashMap<NodeIx, usize> = HashMap::new();
        for (slot_pos, (&obj_ix, &real_ix)) in t.slots.iter().zip(choice).enumerate() {
            let real = &self.objects[obj_ix].realizations[real_ix];
            let start = sentence.len();
            sentence.extend(real.tokens.iter().cloned());
            let end = sentence.len() - 1;
            for &(node, label) in &real.labels {
                if let Some(&prev) = label_source.get(&node) {
                    let prev_label = (&self.objects[t.slots[prev]], prev);
                    return Err(format!(
                        "slot {} (object `{}`) relabels `{}` already set by slot {} (object `{}`)",
                        slot_pos,
                        self.objects[obj_ix].id,
                        schema.id(node),
                        prev_label.1,
                        prev_label.0.id,
                    ));
                }
                label_source.insert(node, slot_pos);
                builder.set_label_ix(node, label);
            }
            for &node in &real.spans {
                if span_source.insert(node, slot_pos).is_some() {
                    return Err(format!(
                        "span node `{}` assigned by two slots",
                        schema.id(node)
                    ));
                }
                builder.set_span_ix(node, start, end);
            }
            for &node in &real.activate {
                builder.activate_ix(node);
            }
        }
        let tree = builder.build(sentence.len());
        let report = tree.validate(schema);
        if let Some(v) = report.violations.first() {
            return Err(format!("node `{}`: {}", v.node, v.message));
        }
        Ok(GeneratedExample {
            sentence,
            tree,
            template_id: t.id.clone(),
        })
    }

    /// Samples one (sentence, tree) pair from the given template.
    pub fn sample_pair<R: Rng>(
        &self,
        schema: &GrammarSchema,
        template_ix: usize,
        rng: &mut R,
    ) -> GeneratedExample {
        let t = &self.templates[template_ix];
        let choice: Vec<usize> = t
            .slots
            .iter()
            .map(|&s| rng.gen_range(0..self.objects[s].realizations.len()))
            .collect();
        self.compose(schema, template_ix, &choice)
            .expect("library validation guarantees composability")
    }

    /// Weighted template draw followed by [`Self::sample_pair`].
    pub fn sample_any<R: Rng>(&self, schema: &GrammarSchema, rng: &mut R) -> GeneratedExample {
        let total = *self.cumulative_weight.last().expect("non-empty library");
        let x = rng.gen::<f64>() * total;
        let ix = match self
            .cumulative_weight
            .binary_search_by(|w| w.partial_cmp(&x).unwrap())
        {
            Ok(i) => i + 1,
            Err(i) => i,
        }
        .min(self.templates.len() - 1);
        self.sample_pair(schema, ix, rng)
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn objects(&self) -> &[TemplateObject] {
        &self.objects
    }

    pub fn template_by_id(&self, id: &str) -> Option<usize> {
        self.templates.iter().position(|t| t.id == id)
    }

    pub fn object_by_id(&self, id: &str) -> Option<&TemplateObject> {
        self.object_ix.get(id).map(|&i| &self.objects[i])
    }

    /// Every realization combination of one template, for enumeration
    /// tests. Panics if the template has more than `EXHAUSTIVE_LIMIT`
    /// combinations.
    pub fn enumerate_template(
        &self,
        schema: &GrammarSchema,
        template_ix: usize,
    ) -> Vec<GeneratedExample> {
        let t = &self.templates[template_ix];
        let combos: u64 = t
            .slots
            .iter()
            .map(|&s| self.objects[s].realizations.len() as u64)
            .product();
        assert!(combos <= EXHAUSTIVE_LIMIT, "template too large to enumerate");
        let mut out = Vec::new();
        let mut choice = vec![0usize; t.slots.len()];
        loop {
            out.push(self.compose(schema, template_ix, &choice).unwrap());
            let mut pos = 0;
            loop {
                if pos == choice.len() {
                    return out;
                }
                choice[pos] += 1;
                if choice[pos] < self.objects[t.slots[pos]].realizations.len() {
                    break;
                }
                choice[pos] = 0;
                pos += 1;
            }
        }
    }
}

fn sorted(m: &HashMap<String, String>) -> Vec<(&String, &String)> {
    let mut v: Vec<_> = m.iter().collect();
    v.sort();
    v
}

fn resolve(
    schema: &GrammarSchema,
    object: &str,
    node_id: &str,
    expected: NodeKind,
) -> Result<NodeIx, TemplateError> {
    let node = schema.lookup(node_id).ok_or_else(|| TemplateError::UnknownNode {
        object: object.to_string(),
        node: node_id.to_string(),
    })?;
    let found = schema.kind(node);
    if found != expected {
        return Err(TemplateError::WrongKind {
            object: object.to_string(),
            node: node_id.to_string(),
            found,
            expected,
        });
    }
    Ok(node)
}
