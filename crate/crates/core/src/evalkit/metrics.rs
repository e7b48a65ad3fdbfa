//! Answer-overlap metrics over a shared tokenizer.

use std::collections::HashMap;

/// Lowercased maximal runs of alphanumeric characters. Whitespace and
/// punctuation only separate tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Degenerate-length conventions shared by token F1 and ROUGE-L.
fn empty_convention(a: usize, b: usize) -> Option<f64> {
    match (a, b) {
        (0, 0) => Some(1.0),
        (0, _) | (_, 0) => Some(0.0),
        _ => None,
    }
}

fn counts<'a>(tokens: impl IntoIterator<Item = &'a [String]>) -> HashMap<&'a [String], usize> {
    let mut map = HashMap::new();
    for t in tokens {
        *map.entry(t).or_insert(0) += 1;
    }
    map
}

/// Multiset token overlap F1.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = tokenize(prediction);
    let gold = tokenize(gold);
    if let Some(v) = empty_convention(pred.len(), gold.len()) {
        return v;
    }
    let gold_counts = counts(gold.chunks(1));
    let overlap: usize = counts(pred.chunks(1))
        .iter()
        .map(|(t, n)| (*n).min(gold_counts.get(t).copied().unwrap_or(0)))
        .sum();
    harmonic(
        overlap as f64 / pred.len() as f64,
        overlap as f64 / gold.len() as f64,
    )
}

/// Sentence BLEU up to 4-grams (fewer for short predictions), add-one
/// smoothing on n-gram orders with no match, brevity penalty against the
/// closest reference length.
pub fn bleu(prediction: &str, references: &[&str]) -> f64 {
    let pred = tokenize(prediction);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    if pred.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let c = pred.len();
    let max_n = c.min(4);
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let pred_counts = counts(pred.windows(n));
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (gram, k) in counts(r.windows(n)) {
                let slot = max_ref.entry(gram).or_insert(0);
                *slot = (*slot).max(k);
            }
        }
        let clipped: usize = pred_counts
            .iter()
            .map(|(g, k)| (*k).min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = c + 1 - n;
        let p = if clipped == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            clipped as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("non-empty references");
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    bp * (log_sum / max_n as f64).exp()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L F-measure (beta = 1).
pub fn rouge_l(prediction: &str, reference: &str) -> f64 {
    let pred = tokenize(prediction);
    let reference = tokenize(reference);
    if let Some(v) = empty_convention(pred.len(), reference.len()) {
        return v;
    }
    let lcs = lcs_len(&pred, &reference) as f64;
    harmonic(lcs / pred.len() as f64, lcs / reference.len() as f64)
}
