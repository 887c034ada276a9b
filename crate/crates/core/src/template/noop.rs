use rand::Rng;
use thiserror::Error;

use crate::grammar::{tokenize, GrammarSchema};

use super::library::GeneratedExample;

#[derive(Debug, Error)]
pub enum NoopError {
    #[error("noop corpus is empty")]
    Empty,
    #[error("schema has no Noop action label")]
    NoNoopLabel,
}

/// Line-oriented utterance corpus for NOOP sampling. Any plain-text file
/// with one utterance per line works; blank lines are skipped.
pub struct NoopCorpus {
    lines: Vec<Vec<String>>,
}

impl NoopCorpus {
    pub fn parse(text: &str) -> Result<Self, NoopError> {
        let lines: Vec<Vec<String>> = text
            .lines()
            .map(tokenize)
            .filter(|t| !t.is_empty())
            .collect();
        if lines.is_empty() {
            return Err(NoopError::Empty);
        }
        Ok(NoopCorpus { lines })
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn line(&self, i: usize) -> &[String] {
        &self.lines[i]
    }
}

/// Draws a corpus line uniformly and pairs it with the bare Noop tree.
pub fn sample_noop<R: Rng>(
    corpus: &NoopCorpus,
    schema: &GrammarSchema,
    rng: &mut R,
) -> Result<GeneratedExample, NoopError> {
    let ix = rng.gen_range(0..corpus.lines.len());
    let sentence = corpus.lines[ix].clone();
    let tree = crate::grammar::tree_with_action(schema, "Noop", sentence.len())
        .map_err(|_| NoopError::NoNoopLabel)?;
    Ok(GeneratedExample {
        sentence,
        tree,
        template_id: "noop".to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schema() -> GrammarSchema {
        GrammarSchema::load(crate::REFERENCE_SCHEMA_JSON).unwrap()
    }

    #[test]
    fn tokenizes_line_and_builds_bare_noop() {
        let s = schema();
        let corpus = NoopCorpus::parse("How are you today?\n").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ex = sample_noop(&corpus, &s, &mut rng).unwrap();
        assert_eq!(ex.sentence, ["how", "are", "you", "today", "?"]);
        assert_eq!(ex.tree.action_label(&s), Some("Noop"));
        assert_eq!(ex.tree.active_nodes().count(), 2);
        assert!(ex.tree.validate(&s).ok());
    }

    #[test]
    fn one_line_corpus_always_returns_it() {
        let s = schema();
        let corpus = NoopCorpus::parse("hello there\n").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let ex = sample_noop(&corpus, &s, &mut rng).unwrap();
            assert_eq!(ex.sentence, ["hello", "there"]);
        }
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(NoopCorpus::parse("\n  \n"), Err(NoopError::Empty)));
    }

    #[test]
    fn draw_frequencies_are_uniform_within_three_sigma() {
        let s = schema();
        let text: String = (0..20).map(|i| format!("line number {i}\n")).collect();
        let corpus = NoopCorpus::parse(&text).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000usize;
        let mut counts = [0usize; 20];
        for _ in 0..n {
            let ex = sample_noop(&corpus, &s, &mut rng).unwrap();
            let ix: usize = ex.sentence[2].parse().unwrap();
            counts[ix] += 1;
        }
        let p = 1.0 / 20.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let dev = (c as f64 - n as f64 * p).abs();
            assert!(dev <= 3.0 * sigma, "line {i}: count {c} deviates {dev:.1} > 3σ");
        }
    }
}
