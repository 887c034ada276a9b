use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("line {0}: expected `<action-type> <probability>`")]
    BadLine(usize),
    #[error("line {line}: bad probability `{value}`")]
    BadProbability { line: usize, value: String },
    #[error("duplicate action type `{0}`")]
    Duplicate(String),
    #[error("probabilities sum to {0}, expected 1 (±1e-6)")]
    BadSum(f64),
}

/// Parses a target action distribution: one `ActionType probability` pair
/// per line, `#` comments and blank lines allowed. Probabilities must sum
/// to 1 within 1e-6; the parsed vector is renormalized exactly.
pub fn parse_distribution(text: &str) -> Result<Vec<(String, f64)>, DistError> {
    let mut out: Vec<(String, f64)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (name, value) = match (parts.next(), parts.next(), parts.next()) {
            (Some(n), Some(v), None) => (n, v),
            _ => return Err(DistError::BadLine(i + 1)),
        };
        let p: f64 = value.parse().map_err(|_| DistError::BadProbability {
            line: i + 1,
            value: value.to_string(),
        })?;
        if !p.is_finite() || p < 0.0 {
            return Err(DistError::BadProbability {
                line: i + 1,
                value: value.to_string(),
            });
        }
        if out.iter().any(|(n, _)| n == name) {
            return Err(DistError::Duplicate(name.to_string()));
        }
        out.push((name.to_string(), p));
    }
    let sum: f64 = out.iter().map(|(_, p)| p).sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(DistError::BadSum(sum));
    }
    for (_, p) in &mut out {
        *p /= sum;
    }
    Ok(out)
}
