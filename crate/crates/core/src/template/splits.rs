use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_examples_with_header, CorpusError, Example, Source};
use crate::grammar::GrammarSchema;

use super::library::TemplateLibrary;
use super::noop::NoopCorpus;

/// Sizes and mixing knobs for one generation run.
#[derive(Debug, Clone)]
pub struct GenerateConfig {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Probability that an example is a NOOP line rather than a template
    /// draw. Defaults to one part in fifteen: NOOP treated as one action
    /// type among the fifteen reported categories.
    pub noop_fraction: f64,
    pub seed: u64,
}

impl GenerateConfig {
    pub fn new(train: usize, valid: usize, test: usize, seed: u64) -> Self {
        GenerateConfig {
            train,
            valid,
            test,
            noop_fraction: 1.0 / 15.0,
            seed,
        }
    }
}

/// Generates the three splits and writes them as corpus files
/// (`train.txt`, `valid.txt`, `test.txt` under `out_dir`).
///
/// Each example's RNG stream is derived from (seed, split, index), so
/// output bytes are a pure function of the config regardless of how the
/// work is scheduled. `header` lines (config digest) go at the top of
/// each file.
pub fn generate_splits(
    library: &TemplateLibrary,
    noop: Option<&NoopCorpus>,
    schema: &GrammarSchema,
    config: &GenerateConfig,
    out_dir: &Path,
    header: Option<&str>,
) -> Result<[PathBuf; 3], CorpusError> {
    let splits: [(&str, usize, u64); 3] = [
        ("train.txt", config.train, 0),
        ("valid.txt", config.valid, 1),
        ("test.txt", config.test, 2),
    ];
    let mut paths = Vec::with_capacity(3);
    for (name, count, split_id) in splits {
        let examples = generate_examples(library, noop, schema, config, split_id, count);
        let path = out_dir.join(name);
        write_examples_with_header(&examples, schema, &path, header)?;
        paths.push(path);
    }
    Ok([paths[0].clone(), paths[1].clone(), paths[2].clone()])
}

/// The examples of one split, in order.
pub fn generate_examples(
    library: &TemplateLibrary,
    noop: Option<&NoopCorpus>,
    schema: &GrammarSchema,
    config: &GenerateConfig,
    split_id: u64,
    count: usize,
) -> Vec<Example> {
    use rand::SeedableRng;
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(
                config.seed,
                &[split_id, i as u64],
            ));
            let use_noop = match noop {
                Some(_) => rng.gen::<f64>() < config.noop_fraction,
                None => false,
            };
            let generated = if use_noop {
                super::noop::sample_noop(noop.unwrap(), schema, &mut rng)
                    .expect("non-empty noop corpus")
            } else {
                library.sample_any(schema, &mut rng)
            };
            Example {
                sentence: generated.sentence,
                tree: generated.tree,
                source: Source::Template,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::TemplateLibrary;
    use std::fs;

    fn schema() -> GrammarSchema {
        GrammarSchema::load(crate::REFERENCE_SCHEMA_JSON).unwrap()
    }

    fn tiny_library(schema: &GrammarSchema) -> TemplateLibrary {
        TemplateLibrary::load(
            r#"{
                "objects": [
                    {"id": "Move", "realizations": [
                        {"text": "go", "labels": {"action:action_type": "Move"}},
                        {"text": "walk", "labels": {"action:action_type": "Move"}}
                    ]},
                    {"id": "Dir", "realizations": [
                        {"text": "left", "labels": {"action_location:relative_direction": "LEFT"}},
                        {"text": "right", "labels": {"action_location:relative_direction": "RIGHT"}}
                    ]}
                ],
                "templates": [
                    {"id": "m", "slots": ["Move"]},
                    {"id": "md", "slots": ["Move", "Dir"]}
                ]
            }"#,
            schema,
        )
        .unwrap()
    }

    #[test]
    fn counts_are_exact_without_noop() {
        let s = schema();
        let lib = tiny_library(&s);
        let config = GenerateConfig {
            train: 10,
            valid: 1,
            test: 1,
            noop_fraction: 0.0,
            seed: 5,
        };
        let dir = std::env::temp_dir().join("arbor_splits_counts");
        fs::create_dir_all(&dir).unwrap();
        let [train, valid, test] =
            generate_splits(&lib, None, &s, &config, &dir, None).unwrap();
        let count_lines = |p: &PathBuf| {
            fs::read_to_string(p)
                .unwrap()
                .lines()
                .filter(|l| !l.is_empty() && !l.starts_with("# "))
                .count()
        };
        assert_eq!(count_lines(&train) + count_lines(&valid) + count_lines(&test), 12);
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let s = schema();
        let lib = tiny_library(&s);
        let noop = NoopCorpus::parse("hello\nhow are you\n").unwrap();
        let config = GenerateConfig::new(50, 5, 5, 123);
        let dir_a = std::env::temp_dir().join("arbor_splits_a");
        let dir_b = std::env::temp_dir().join("arbor_splits_b");
        fs::create_dir_all(&dir_a).unwrap();
        fs::create_dir_all(&dir_b).unwrap();
        generate_splits(&lib, Some(&noop), &s, &config, &dir_a, Some("digest cafe")).unwrap();
        generate_splits(&lib, Some(&noop), &s, &config, &dir_b, Some("digest cafe")).unwrap();
        for name in ["train.txt", "valid.txt", "test.txt"] {
            let a = fs::read(dir_a.join(name)).unwrap();
            let b = fs::read(dir_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }

    #[test]
    fn noop_fraction_mixes_in_noop_lines() {
        let s = schema();
        let lib = tiny_library(&s);
        let noop = NoopCorpus::parse("small talk line\n").unwrap();
        let config = GenerateConfig {
            train: 400,
            valid: 1,
            test: 1,
            noop_fraction: 0.25,
            seed: 9,
        };
        let examples = generate_examples(&lib, Some(&noop), &s, &config, 0, config.train);
        let noops = examples
            .iter()
            .filter(|e| e.tree.action_label(&s) == Some("Noop"))
            .count();
        // Binomial(400, 0.25): mean 100, σ ≈ 8.66.
        assert!((70..=130).contains(&noops), "noop count {noops} out of range");
    }
}
