//! Stroke-code and visual similarity between characters.

use super::CharacterRecord;

/// Mixing weight between the stroke-code term and the visual-feature term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityWeights {
    /// Weight of the longest-common-substring score; the visual score gets
    /// the complement. Must lie in [0, 1].
    pub lcs_weight: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        SimilarityWeights { lcs_weight: 0.7 }
    }
}

/// Length of the longest common substring (contiguous) of two stroke codes.
/// Classic O(n·m) dynamic program with a rolling row.
pub fn lcs_len(a: &[u8], b: &[u8]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &ca in a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// ‖a−b‖ / (‖a‖+‖b‖): a metric-like quantity bounded by [0, 1] (triangle
/// inequality gives the bound; two zero vectors give 0 by convention).
fn normalized_euclidean(a: &[f64], b: &[f64]) -> f64 {
    let dist: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na + nb == 0.0 {
        0.0
    } else {
        (dist / (na + nb)).min(1.0)
    }
}

/// Glyph similarity in [0, 1]: convex combination of the stroke-code LCS
/// ratio and, when both records carry visual features of equal length, a
/// visual score. Without features the LCS term gets full weight. Symmetric.
pub fn glyph_similarity(a: &CharacterRecord, b: &CharacterRecord, w: &SimilarityWeights) -> f64 {
    let alpha = w.lcs_weight.clamp(0.0, 1.0);
    let lcs = lcs_len(&a.stroke_code, &b.stroke_code) as f64
        / a.stroke_code.len().max(b.stroke_code.len()) as f64;
    match (&a.visual_feature, &b.visual_feature) {
        (Some(fa), Some(fb)) if fa.len() == fb.len() => {
            let visual = 1.0 - normalized_euclidean(fa, fb);
            alpha * lcs + (1.0 - alpha) * visual
        }
        _ => lcs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(code: &[u8]) -> CharacterRecord {
        CharacterRecord {
            codepoint: '博',
            pinyins: ["bo".to_string()].into(),
            stroke_code: code.to_vec(),
            frequency_rank: None,
            visual_feature: None,
        }
    }

    #[test]
    fn identical_codes_score_one() {
        let a = rec(&[1, 2, 3]);
        assert_eq!(glyph_similarity(&a, &a, &SimilarityWeights { lcs_weight: 1.0 }), 1.0);
    }

    #[test]
    fn disjoint_alphabets_score_zero() {
        let a = rec(&[1, 1, 1]);
        let b = rec(&[2, 2, 2]);
        assert_eq!(glyph_similarity(&a, &b, &SimilarityWeights { lcs_weight: 1.0 }), 0.0);
    }

    #[test]
    fn half_overlap() {
        // codes 1234 vs 9237: longest common substring "23", so 2/4.
        let a = rec(&[1, 2, 3, 4]);
        let b = rec(&[9, 2, 3, 7]);
        assert_eq!(glyph_similarity(&a, &b, &SimilarityWeights { lcs_weight: 1.0 }), 0.5);
    }

    #[test]
    fn visual_term_mixes_in() {
        let mut a = rec(&[1, 2]);
        let mut b = rec(&[1, 2]);
        a.visual_feature = Some(vec![1.0, 0.0]);
        b.visual_feature = Some(vec![0.0, 1.0]);
        // lcs = 1.0, visual distance = sqrt(2)/2 = 0.7071…
        let w = SimilarityWeights { lcs_weight: 0.5 };
        let got = glyph_similarity(&a, &b, &w);
        let want = 0.5 * 1.0 + 0.5 * (1.0 - (2.0f64).sqrt() / 2.0);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn zero_feature_vectors_count_as_identical() {
        let mut a = rec(&[1]);
        let mut b = rec(&[1]);
        a.visual_feature = Some(vec![0.0, 0.0]);
        b.visual_feature = Some(vec![0.0, 0.0]);
        assert_eq!(glyph_similarity(&a, &b, &SimilarityWeights { lcs_weight: 0.5 }), 1.0);
    }
}
