use crate::state::{DocKind, RetrievedDoc};
use crate::tokens;

/// Default token budget for rendered evidence.
pub const DEFAULT_EVIDENCE_BUDGET: usize = 4000;

fn render_block(doc: &RetrievedDoc) -> String {
    match doc.kind {
        DocKind::Text => format!("[{}] {}", doc.source_id, doc.content),
        DocKind::Image => format!("[{}] [image] {}", doc.source_id, doc.content),
    }
}

/// Renders evidence newest iteration first, one `[source_id] content` block
/// per document, packing whole blocks greedily into `budget_tokens`.
///
/// Blocks that do not fit are skipped; a later, smaller block may still be
/// included.
pub fn render_evidence_digest(evidence: &[RetrievedDoc], budget_tokens: usize) -> String {
    let mut ordered: Vec<&RetrievedDoc> = evidence.iter().collect();
    // stable: documents of one iteration keep their retrieval order
    ordered.sort_by_key(|d| std::cmp::Reverse(d.iteration));

    let mut used = 0usize;
    let mut blocks = Vec::new();
    for doc in ordered {
        let block = render_block(doc);
        let cost = tokens::count(&block);
        if used + cost <= budget_tokens {
            used += cost;
            blocks.push(block);
        }
    }
    blocks.join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::ImageRef;

    fn doc(id: &str, iteration: usize, n_tokens: usize) -> RetrievedDoc {
        let body = vec!["w"; n_tokens].join(" ");
        RetrievedDoc::text(id, body, iteration, "q")
    }

    /// Independent greedy packing: walk newest-first, keep what fits.
    fn oracle_ids(docs: &[RetrievedDoc], budget: usize) -> Vec<String> {
        let mut by_iter: Vec<(usize, usize)> = docs.iter().enumerate().map(|(i, d)| (d.iteration, i)).collect();
        by_iter.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut left = budget as i64;
        let mut out = Vec::new();
        for (_, i) in by_iter {
            let cost = docs[i].token_count as i64 + 1;
            if cost <= left {
                left -= cost;
                out.push(docs[i].source_id.clone());
            }
        }
        out
    }

    fn ids(digest: &str) -> Vec<String> {
        digest
            .split("\n\n")
            .filter(|b| !b.is_empty())
            .map(|b| b[1..b.find(']').unwrap()].to_string())
            .collect()
    }

    #[test]
    fn empty_evidence_renders_empty() {
        assert_eq!(render_evidence_digest(&[], 1000), "");
    }

    #[test]
    fn both_fit_newest_first() {
        let docs = [doc("old", 1, 300), doc("new", 2, 300)];
        let digest = render_evidence_digest(&docs, 1000);
        assert_eq!(ids(&digest), ["new", "old"]);
    }

    #[test]
    fn oldest_dropped_when_over_budget() {
        let docs = [doc("a", 1, 400), doc("b", 2, 400), doc("c", 3, 400)];
        let digest = render_evidence_digest(&docs, 1000);
        assert_eq!(ids(&digest), ["c", "b"]);
        assert_eq!(ids(&digest), oracle_ids(&docs, 1000));
        assert!(tokens::count(&digest) <= 1000);
    }

    #[test]
    fn matches_oracle_on_mixed_sizes() {
        let sizes = [50, 700, 120, 30, 900, 10, 260];
        let docs: Vec<_> = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| doc(&format!("d{i}"), i % 3 + 1, n))
            .collect();
        for budget in [0, 40, 200, 1000, 2500] {
            let digest = render_evidence_digest(&docs, budget);
            assert_eq!(ids(&digest), oracle_ids(&docs, budget), "budget {budget}");
            assert!(tokens::count(&digest) <= budget);
        }
    }

    #[test]
    fn image_blocks_carry_marker_and_caption() {
        let img = RetrievedDoc::image("i1", "Astro Bot cover", ImageRef::parse("a.png").unwrap(), 1, "q");
        assert_eq!(render_evidence_digest(&[img], 100), "[i1] [image] Astro Bot cover");
    }
}
