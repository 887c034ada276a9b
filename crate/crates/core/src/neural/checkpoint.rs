use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use super::store::ParameterStore;
use super::tensor::Tensor;

const MAGIC: &[u8; 8] = b"ARBRCKP1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is not a checkpoint (bad magic)")]
    BadMagic(String),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint restore failed: {0}")]
    Restore(String),
}

/// A loaded checkpoint: the JSON metadata blob plus
/// (name, value, adagrad-accumulator) entries, bit-exact.
#[derive(Debug)]
pub struct CheckpointFile {
    pub meta_json: String,
    pub entries: Vec<(String, Tensor, Tensor)>,
}

impl CheckpointFile {
    pub fn restore_into(&self, store: &mut ParameterStore) -> Result<(), CheckpointError> {
        store.restore(&self.entries).map_err(CheckpointError::Restore)
    }
}

/// Writes metadata and every parameter (value and accumulator) as raw
/// `f64` bits, so save → load reproduces the store exactly.
pub fn save_checkpoint(
    path: &Path,
    meta_json: &str,
    store: &ParameterStore,
) -> Result<(), CheckpointError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    let meta = meta_json.as_bytes();
    buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    buf.extend_from_slice(meta);
    let entries: Vec<_> = store.entries().collect();
    buf.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for (name, value, accum) in entries {
        let nb = name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u64).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.extend_from_slice(&(value.rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(value.cols() as u64).to_le_bytes());
        for &v in value.as_slice() {
            buf.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        for &a in accum.as_slice() {
            buf.extend_from_slice(&a.to_bits().to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    f.write_all(&buf).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointFile, CheckpointError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CheckpointError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8], CheckpointError> {
        if *cursor + n > bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(s)
    };
    let magic = take(&mut cursor, 8)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(path.display().to_string()));
    }
    let meta_len = read_u64(take(&mut cursor, 8)?) as usize;
    let meta_json = String::from_utf8(take(&mut cursor, meta_len)?.to_vec())
        .map_err(|_| CheckpointError::Truncated)?;
    let count = read_u64(take(&mut cursor, 8)?) as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u64(take(&mut cursor, 8)?) as usize;
        let name = String::from_utf8(take(&mut cursor, name_len)?.to_vec())
            .map_err(|_| CheckpointError::Truncated)?;
        let rows = read_u64(take(&mut cursor, 8)?) as usize;
        let cols = read_u64(take(&mut cursor, 8)?) as usize;
        let n = rows * cols;
        let mut value = Vec::with_capacity(n);
        for _ in 0..n {
            value.push(f64::from_bits(read_u64(take(&mut cursor, 8)?)));
        }
        let mut accum = Vec::with_capacity(n);
        for _ in 0..n {
            accum.push(f64::from_bits(read_u64(take(&mut cursor, 8)?)));
        }
        entries.push((
            name,
            Tensor::from_vec(rows, cols, value),
            Tensor::from_vec(rows, cols, accum),
        ));
    }
    Ok(CheckpointFile { meta_json, entries })
}

fn read_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b.try_into().expect("8 bytes"))
}
