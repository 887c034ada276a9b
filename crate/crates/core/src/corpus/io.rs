use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::grammar::{deserialize_tree, serialize_tree, ActionTree, GrammarSchema, TreeDocError};

/// Where an example came from. Template data is generated; the other
/// three are the human-data settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Template,
    Rephrase,
    Prompt,
    Interactive,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Template => write!(f, "template"),
            Source::Rephrase => write!(f, "rephrase"),
            Source::Prompt => write!(f, "prompt"),
            Source::Interactive => write!(f, "interactive"),
        }
    }
}

/// One (sentence, tree) pair. The sentence is stored tokenized; the file
/// form joins tokens with single spaces.
#[derive(Debug, Clone)]
pub struct Example {
    pub sentence: Vec<String>,
    pub tree: ActionTree,
    pub source: Source,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: missing tab separator")]
    MissingTab { path: String, line: usize },
    #[error("{path}:{line}: {source}")]
    BadTree {
        path: String,
        line: usize,
        #[source]
        source: TreeDocError,
    },
    #[error("{path}:{line}: tree does not validate: node `{node}`: {message}")]
    InvalidTree {
        path: String,
        line: usize,
        node: String,
        message: String,
    },
    #[error("example {index} does not validate: node `{node}`: {message}")]
    InvalidExample {
        index: usize,
        node: String,
        message: String,
    },
}

/// Reads a corpus file. Every line must parse and its tree must validate
/// against `schema` with the sentence's token count; errors carry the
/// 1-based line number.
pub fn read_examples(
    path: &Path,
    schema: &GrammarSchema,
    source: Source,
) -> Result<Vec<Example>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_examples(&text, schema, source, &path.display().to_string())
}

pub(crate) fn parse_examples(
    text: &str,
    schema: &GrammarSchema,
    source: Source,
    path: &str,
) -> Result<Vec<Example>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.is_empty() || line.starts_with("# ") {
            continue;
        }
        let tab = line.find('\t').ok_or(CorpusError::MissingTab {
            path: path.to_string(),
            line: line_no,
        })?;
        let (sentence_text, doc) = (&line[..tab], &line[tab + 1..]);
        let sentence: Vec<String> = sentence_text.split(' ').map(str::to_string).collect();
        let tree = deserialize_tree(doc, schema)
            .map_err(|e| CorpusError::BadTree {
                path: path.to_string(),
                line: line_no,
                source: e,
            })?
            .with_sentence_length(sentence.len());
        let report = tree.validate(schema);
        if let Some(v) = report.violations.first() {
            return Err(CorpusError::InvalidTree {
                path: path.to_string(),
                line: line_no,
                node: v.node.clone(),
                message: v.message.clone(),
            });
        }
        out.push(Example {
            sentence,
            tree,
            source,
        });
    }
    Ok(out)
}

/// Writes examples in the line format, with no header.
pub fn write_examples(
    examples: &[Example],
    schema: &GrammarSchema,
    path: &Path,
) -> Result<(), CorpusError> {
    write_examples_with_header(examples, schema, path, None)
}

/// Writes examples, optionally preceded by `# `-prefixed header lines
/// (used to embed the generating config digest).
pub fn write_examples_with_header(
    examples: &[Example],
    schema: &GrammarSchema,
    path: &Path,
    header: Option<&str>,
) -> Result<(), CorpusError> {
    let text = render_examples(examples, schema, header)?;
    let mut f = fs::File::create(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    f.write_all(text.as_bytes()).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub(crate) fn render_examples(
    examples: &[Example],
    schema: &GrammarSchema,
    header: Option<&str>,
) -> Result<String, CorpusError> {
    let mut out = String::new();
    if let Some(h) = header {
        for line in h.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
    }
    for (i, ex) in examples.iter().enumerate() {
        let report = ex.tree.validate(schema);
        if let Some(v) = report.violations.first() {
            return Err(CorpusError::InvalidExample {
                index: i,
                node: v.node.clone(),
                message: v.message.clone(),
            });
        }
        out.push_str(&ex.sentence.join(" "));
        out.push('\t');
        out.push_str(&serialize_tree(&ex.tree, schema).map_err(|e| CorpusError::InvalidExample {
            index: i,
            node: String::new(),
            message: e.to_string(),
        })?);
        out.push('\n');
    }
    Ok(out)
}
