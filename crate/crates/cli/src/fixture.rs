//! Dataset files: a `K L` header line, then one space-separated sample per line.

use std::fmt::Write as _;
use std::path::Path;

use iddm_core::data::ToyDataset;

use crate::error::{io_at, CliError, Result};

pub fn to_text(k: usize, l: usize, samples: &[Vec<usize>]) -> String {
    let mut s = format!("{k} {l}\n");
    for sample in samples {
        for (i, c) in sample.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{c}");
        }
        s.push('\n');
    }
    s
}

pub fn parse(text: &str) -> Result<ToyDataset> {
    let bad = |line: usize, message: String| CliError::Fixture { line, message };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|v| v.parse().map_err(|_| bad(1, format!("bad header value {v:?}"))))
        .collect::<Result<_>>()?;
    let [k, l] = dims[..] else {
        return Err(bad(1, "header must be `K L`".into()));
    };
    let mut samples = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let sample: Vec<usize> = line
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| bad(idx + 1, format!("bad token {v:?}"))))
            .collect::<Result<_>>()?;
        if sample.len() != l {
            return Err(bad(idx + 1, format!("expected {l} tokens, found {}", sample.len())));
        }
        if let Some(&c) = sample.iter().find(|&&c| c >= k) {
            return Err(bad(idx + 1, format!("token {c} outside 0..{k}")));
        }
        samples.push(sample);
    }
    Ok(ToyDataset::new(k, l, samples)?)
}

pub fn read(path: &Path) -> Result<ToyDataset> {
    parse(&std::fs::read_to_string(path).map_err(io_at(path))?)
}

pub fn write(path: &Path, k: usize, l: usize, samples: &[Vec<usize>]) -> Result<()> {
    std::fs::write(path, to_text(k, l, samples)).map_err(io_at(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let samples = vec![vec![0, 2], vec![1, 1]];
        let text = to_text(3, 2, &samples);
        assert_eq!(text, "3 2\n0 2\n1 1\n");
        let d = parse(&text).unwrap();
        assert_eq!((d.k, d.l), (3, 2));
        assert_eq!(d.samples, samples);
    }

    #[test]
    fn header_only() {
        assert_eq!(to_text(4, 3, &[]), "4 3\n");
        assert!(parse("4 3\n").unwrap().is_empty());
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse("").is_err());
        assert!(parse("3\n").is_err());
        assert!(matches!(parse("3 2\n0 1 2\n"), Err(CliError::Fixture { line: 2, .. })));
        assert!(parse("3 2\n0 3\n").is_err());
        assert!(parse("3 2\n0 x\n").is_err());
    }
}
