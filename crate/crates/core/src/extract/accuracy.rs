//! Field-level accuracy and character error rate.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{ExtractError, ExtractionResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub expected: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Character error rate over all expected fields; a missing field
    /// counts as fully deleted.
    pub cer: f64,
}

/// Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance from `predicted` to `reference`, normalized by the
/// reference length.
pub fn cer(predicted: &str, reference: &str) -> f64 {
    let n = reference.chars().count();
    if n == 0 {
        return if predicted.is_empty() { 0.0 } else { 1.0 };
    }
    levenshtein(predicted, reference) as f64 / n as f64
}

/// Counts exact matches of extracted text against expected values.
pub fn field_accuracy(
    results: &[(ExtractionResult, BTreeMap<String, String>)],
) -> Result<AccuracyReport, ExtractError> {
    let mut expected = 0;
    let mut correct = 0;
    let mut edits = 0usize;
    let mut chars = 0usize;
    for (result, truth) in results {
        let got: BTreeMap<&str, &str> = result
            .pages
            .iter()
            .flat_map(|p| p.fields.iter())
            .map(|f| (f.name.as_str(), f.text.as_str()))
            .collect();
        for (name, want) in truth {
            expected += 1;
            let have = got.get(name.as_str()).copied().unwrap_or("");
            if have == want {
                correct += 1;
            }
            edits += levenshtein(want, have);
            chars += want.chars().count();
        }
    }
    if expected == 0 {
        return Err(ExtractError::InvalidInput("ground truth is empty".into()));
    }
    Ok(AccuracyReport {
        expected,
        correct,
        accuracy: correct as f64 / expected as f64,
        cer: if chars == 0 { 0.0 } else { edits as f64 / chars as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kitten_sitting() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert!((cer("kitten", "sitting") - 3.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn edge_cases() {
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(cer("", ""), 0.0);
        assert!(field_accuracy(&[]).is_err());
    }
}
