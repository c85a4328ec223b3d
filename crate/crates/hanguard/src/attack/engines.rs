//! The three search strategies. They share one move representation: a word
//! span in char coordinates plus a replacement word differing in exactly
//! one character, so committed texts always stay length-aligned with the
//! original and the modification rate is just (changed chars / length).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chargraph::AdvGraph;
use crate::classifier::{label_of, Classifier};
use crate::dataset::LabeledText;
use crate::{Error, Result};

use super::segment::Segmenter;
use super::{candidate_words, Algorithm, AttackConfig, AttackOutcome};

#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    len: usize,
}

impl Span {
    fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

fn spans_of(text: &str, seg: &Segmenter) -> (Vec<char>, Vec<Span>) {
    let words = seg.segment(text);
    let mut chars = Vec::new();
    let mut spans = Vec::with_capacity(words.len());
    for w in words {
        let start = chars.len();
        chars.extend(w.chars());
        spans.push(Span { start, len: chars.len() - start });
    }
    (chars, spans)
}

fn sentence_spans(chars: &[char], terminals: &[char]) -> Vec<Span> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in chars.iter().enumerate() {
        if terminals.contains(c) {
            out.push(Span { start, len: i + 1 - start });
            start = i + 1;
        }
    }
    if start < chars.len() {
        out.push(Span { start, len: chars.len() - start });
    }
    out
}

/// `chars` with `span` replaced by `word` (must be span-length in chars).
fn spliced(chars: &[char], span: Span, word: &str) -> String {
    debug_assert_eq!(word.chars().count(), span.len);
    let mut s = String::new();
    s.extend(&chars[..span.start]);
    s.push_str(word);
    s.extend(&chars[span.start + span.len..]);
    s
}

fn splice_into(chars: &mut [char], span: Span, word: &str) {
    for (slot, c) in chars[span.range()].iter_mut().zip(word.chars()) {
        *slot = c;
    }
}

/// `chars` with `span` deleted.
fn removed(chars: &[char], span: Span) -> String {
    let mut s = String::new();
    s.extend(&chars[..span.start]);
    s.extend(&chars[span.start + span.len..]);
    s
}

/// Would a `commits+1`-th single-character substitution stay within budget?
/// Every commit costs exactly 1/len of modification rate, so once this says
/// no it says no for the rest of the session.
fn budget_allows(commits: usize, len: usize, max_mr: Option<f64>) -> bool {
    match max_mr {
        None => true,
        Some(mr) => (commits + 1) as f64 <= mr * len as f64 + 1e-9,
    }
}

/// Per-session classifier frontage: counts queries locally so the outcome
/// can report them without reading the shared counter (other sessions may
/// run concurrently against the same classifier).
struct Session<'a> {
    f: &'a dyn Classifier,
    true_label: usize,
    queries: u64,
}

impl Session<'_> {
    fn score(&mut self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        self.queries += texts.len() as u64;
        self.f.predict_probs(texts)
    }

    fn score_one(&mut self, text: &str) -> Result<(f64, usize)> {
        let rows = self.score(&[text])?;
        Ok((prob_of(&rows[0], self.true_label), label_of(&rows[0])))
    }
}

fn prob_of(row: &[f64], label: usize) -> f64 {
    row.get(label).copied().unwrap_or(0.0)
}

fn outcome(
    x: &LabeledText,
    cur: &[char],
    orig: &[char],
    success: bool,
    intermediates: Vec<String>,
    queries: u64,
) -> AttackOutcome {
    let changed = cur.iter().zip(orig).filter(|(a, b)| a != b).count();
    AttackOutcome {
        original: x.clone(),
        final_text: cur.iter().collect(),
        success,
        skipped: false,
        intermediates,
        modification_rate: changed as f64 / orig.len() as f64,
        queries,
    }
}

fn skipped_outcome(x: &LabeledText, queries: u64) -> AttackOutcome {
    AttackOutcome {
        original: x.clone(),
        final_text: x.text.clone(),
        success: false,
        skipped: true,
        intermediates: Vec::new(),
        modification_rate: 0.0,
        queries,
    }
}

pub(super) fn run_one(
    x: &LabeledText,
    f: &dyn Classifier,
    graph: &AdvGraph,
    seg: &Segmenter,
    cfg: &AttackConfig,
    algorithm: Algorithm,
    seed: u64,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    if x.text.is_empty() {
        return Err(Error::invalid("cannot attack an empty text"));
    }
    let mut sess = Session { f, true_label: x.label, queries: 0 };
    // Correctness probe: texts the model already gets wrong are skipped.
    let (p0, label0) = sess.score_one(&x.text)?;
    if label0 != sess.true_label {
        return Ok(skipped_outcome(x, sess.queries));
    }
    match algorithm {
        Algorithm::Pwws => pwws(x, &mut sess, graph, seg, cfg, p0),
        Algorithm::Textbugger => textbugger(x, &mut sess, graph, seg, cfg, p0),
        Algorithm::Random => random(x, &mut sess, graph, seg, cfg, seed),
    }
}

/// Greedy saliency attack. Both the per-word best substitute and the word
/// priority (the confidence drop that substitute achieves) are measured
/// against the original text once; the commit phase then walks words in
/// priority order, re-scoring the evolving text after each substitution.
fn pwws(
    x: &LabeledText,
    sess: &mut Session,
    graph: &AdvGraph,
    seg: &Segmenter,
    cfg: &AttackConfig,
    p0: f64,
) -> Result<AttackOutcome> {
    let (orig, spans) = spans_of(&x.text, seg);
    let len = orig.len();

    struct Plan {
        word_idx: usize,
        span: Span,
        substitute: String,
        drop: f64,
    }

    let mut plans: Vec<Plan> = Vec::new();
    for (wi, &span) in spans.iter().enumerate() {
        let word: String = orig[span.range()].iter().collect();
        let cands = candidate_words(&word, graph, cfg.candidate_cap);
        if cands.is_empty() {
            continue;
        }
        let texts: Vec<String> = cands.iter().map(|c| spliced(&orig, span, c)).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let rows = sess.score(&refs)?;
        let mut best = 0;
        for (ci, row) in rows.iter().enumerate() {
            if prob_of(row, sess.true_label) < prob_of(&rows[best], sess.true_label) {
                best = ci;
            }
        }
        plans.push(Plan {
            word_idx: wi,
            span,
            substitute: cands[best].clone(),
            drop: p0 - prob_of(&rows[best], sess.true_label),
        });
    }
    // highest drop first; ties go to the earlier word
    plans.sort_by(|a, b| {
        b.drop.partial_cmp(&a.drop).expect("probabilities are finite").then(a.word_idx.cmp(&b.word_idx))
    });

    let mut cur = orig.clone();
    let mut intermediates = Vec::new();
    let mut commits = 0;
    let mut success = false;
    for plan in &plans {
        if !budget_allows(commits, len, cfg.max_mr) {
            break;
        }
        splice_into(&mut cur, plan.span, &plan.substitute);
        commits += 1;
        let text: String = cur.iter().collect();
        let (_p, label) = sess.score_one(&text)?;
        intermediates.push(text);
        if label != sess.true_label {
            success = true;
            break;
        }
    }
    Ok(outcome(x, &cur, &orig, success, intermediates, sess.queries))
}

/// Sentence-then-word importance attack. Sentences are ranked once, by the
/// true-class probability the classifier assigns each sentence scored in
/// isolation (ascending: shakier sentences first). Arriving at a sentence,
/// the words in it that have candidates are ranked by the confidence drop
/// their removal causes in the then-current text; each word's best
/// candidate (scored in the current text) is committed unconditionally, and
/// that same scoring row decides whether the label has flipped, so commits
/// cost no extra query.
fn textbugger(
    x: &LabeledText,
    sess: &mut Session,
    graph: &AdvGraph,
    seg: &Segmenter,
    cfg: &AttackConfig,
    p0: f64,
) -> Result<AttackOutcome> {
    let (orig, spans) = spans_of(&x.text, seg);
    let len = orig.len();
    let sents = sentence_spans(&orig, &cfg.sentence_terminals);

    // Rank sentences by standalone true-class probability, ascending.
    let sent_texts: Vec<String> = sents.iter().map(|s| orig[s.range()].iter().collect()).collect();
    let refs: Vec<&str> = sent_texts.iter().map(String::as_str).collect();
    let rows = sess.score(&refs)?;
    let mut order: Vec<usize> = (0..sents.len()).collect();
    order.sort_by(|&a, &b| {
        prob_of(&rows[a], sess.true_label)
            .partial_cmp(&prob_of(&rows[b], sess.true_label))
            .expect("probabilities are finite")
            .then(a.cmp(&b))
    });

    let mut cur = orig.clone();
    let mut p_cur = p0;
    let mut intermediates = Vec::new();
    let mut commits = 0;
    let mut success = false;

    'sentences: for si in order {
        let sent = sents[si];
        // words starting inside this sentence that have any candidates
        let mut entries: Vec<(usize, Span, Vec<String>)> = Vec::new();
        for (wi, &span) in spans.iter().enumerate() {
            if span.start < sent.start || span.start >= sent.start + sent.len {
                continue;
            }
            let word: String = cur[span.range()].iter().collect();
            let cands = candidate_words(&word, graph, cfg.candidate_cap);
            if !cands.is_empty() {
                entries.push((wi, span, cands));
            }
        }
        if entries.is_empty() {
            continue;
        }

        // Removal importance against the current text. A word spanning the
        // whole text has nothing to compare against; it is trivially first.
        let removal_texts: Vec<(usize, String)> = entries
            .iter()
            .enumerate()
            .filter(|(_, (_, span, _))| span.len < cur.len())
            .map(|(ei, (_, span, _))| (ei, removed(&cur, *span)))
            .collect();
        let mut importance = vec![f64::INFINITY; entries.len()];
        if !removal_texts.is_empty() {
            let refs: Vec<&str> = removal_texts.iter().map(|(_, t)| t.as_str()).collect();
            let rows = sess.score(&refs)?;
            for ((ei, _), row) in removal_texts.iter().zip(&rows) {
                importance[*ei] = p_cur - prob_of(row, sess.true_label);
            }
        }
        let mut word_order: Vec<usize> = (0..entries.len()).collect();
        word_order.sort_by(|&a, &b| {
            importance[b]
                .partial_cmp(&importance[a])
                .expect("probabilities are finite")
                .then(entries[a].0.cmp(&entries[b].0))
        });

        for ei in word_order {
            if !budget_allows(commits, len, cfg.max_mr) {
                break 'sentences;
            }
            let (_wi, span, cands) = &entries[ei];
            let texts: Vec<String> = cands.iter().map(|c| spliced(&cur, *span, c)).collect();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let rows = sess.score(&refs)?;
            let mut best = 0;
            for (ci, row) in rows.iter().enumerate() {
                if prob_of(row, sess.true_label) < prob_of(&rows[best], sess.true_label) {
                    best = ci;
                }
            }
            splice_into(&mut cur, *span, &cands[best]);
            commits += 1;
            p_cur = prob_of(&rows[best], sess.true_label);
            intermediates.push(cur.iter().collect());
            if label_of(&rows[best]) != sess.true_label {
                success = true;
                break 'sentences;
            }
        }
    }
    Ok(outcome(x, &cur, &orig, success, intermediates, sess.queries))
}

/// Baseline: words in seeded-shuffle order, uniformly random candidate,
/// one query per commit to check for the flip.
fn random(
    x: &LabeledText,
    sess: &mut Session,
    graph: &AdvGraph,
    seg: &Segmenter,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<AttackOutcome> {
    let (orig, spans) = spans_of(&x.text, seg);
    let len = orig.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.shuffle(&mut rng);

    let mut cur = orig.clone();
    let mut intermediates = Vec::new();
    let mut commits = 0;
    let mut success = false;
    for wi in order {
        let span = spans[wi];
        let word: String = cur[span.range()].iter().collect();
        let cands = candidate_words(&word, graph, cfg.candidate_cap);
        if cands.is_empty() {
            continue;
        }
        if !budget_allows(commits, len, cfg.max_mr) {
            break;
        }
        let pick = rng.random_range(0..cands.len());
        splice_into(&mut cur, span, &cands[pick]);
        commits += 1;
        let text: String = cur.iter().collect();
        let (_p, label) = sess.score_one(&text)?;
        intermediates.push(text);
        if label != sess.true_label {
            success = true;
            break;
        }
    }
    Ok(outcome(x, &cur, &orig, success, intermediates, sess.queries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentence_spans_split_after_terminals() {
        let chars: Vec<char> = "好。坏！啊".chars().collect();
        let spans = sentence_spans(&chars, super::super::SENTENCE_TERMINALS);
        assert_eq!(spans.len(), 3);
        assert_eq!((spans[0].start, spans[0].len), (0, 2));
        assert_eq!((spans[1].start, spans[1].len), (2, 2));
        assert_eq!((spans[2].start, spans[2].len), (4, 1));
    }

    #[test]
    fn budget_is_exact_at_the_boundary() {
        // 2 commits out of 10 chars at cap 0.2: second commit allowed, third not
        assert!(budget_allows(0, 10, Some(0.2)));
        assert!(budget_allows(1, 10, Some(0.2)));
        assert!(!budget_allows(2, 10, Some(0.2)));
        assert!(budget_allows(99, 10, None));
    }

    #[test]
    fn splice_helpers_agree() {
        let chars: Vec<char> = "微博真好".chars().collect();
        let span = Span { start: 0, len: 2 };
        let s = spliced(&chars, span, "薇博");
        assert_eq!(s, "薇博真好");
        let mut m = chars.clone();
        splice_into(&mut m, span, "薇博");
        assert_eq!(m.iter().collect::<String>(), s);
        assert_eq!(removed(&chars, span), "真好");
    }
}
