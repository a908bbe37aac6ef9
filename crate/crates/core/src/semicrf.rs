//! Semi-Markov CRF over labeled segments of width at most `K`.
//!
//! Segment scores are read from [`ScoreSet::global`]. A segmentation scores
//! `Σₖ φ(sₖ) + T[lₖ₋₁, lₖ]` where the first segment carries no transition.

use crate::error::{Error, Result};
use crate::logspace::{LogAccumulator, MASKED};
use crate::types::{GradientSet, LabelSet, ScoreSet, Segment, Segmentation};

fn check_segmentation(seg: &Segmentation, scores: &ScoreSet) -> Result<()> {
    if !seg.is_valid(scores.len()) {
        return Err(Error::InvalidSegmentation);
    }
    let shape = scores.shape();
    seg.iter().try_for_each(|s| shape.check_segment(s))
}

pub fn semicrf_score(seg: &Segmentation, scores: &ScoreSet) -> Result<f64> {
    check_segmentation(seg, scores)?;
    let s = &seg.segments;
    let mut total = scores.global(s[0].start, s[0].end, s[0].label);
    for w in s.windows(2) {
        let (prev, cur) = (w[0], w[1]);
        total = total + scores.global(cur.start, cur.end, cur.label) + scores.transition(prev.label, cur.label);
    }
    Ok(total)
}

/// `α(m, y)`: log-sum over prefixes covering `1..=m` whose last segment has
/// label `y`. Flattened `(m - 1) * |Y| + y`.
fn forward(scores: &ScoreSet) -> Vec<f64> {
    let (n, ny, k) = (scores.len(), scores.num_labels(), scores.max_width());
    let mut alpha = vec![f64::NEG_INFINITY; n * ny];
    for m in 1..=n {
        for y in 0..ny {
            let mut acc = LogAccumulator::new();
            for d in 1..=m.min(k) {
                let i = m - d + 1;
                let phi = scores.global(i, m, y);
                if i == 1 {
                    acc.push(phi);
                } else {
                    let prev = &alpha[(i - 2) * ny..(i - 1) * ny];
                    for (yp, &a) in prev.iter().enumerate() {
                        acc.push(a + phi + scores.transition(yp, y));
                    }
                }
            }
            alpha[(m - 1) * ny + y] = acc.value();
        }
    }
    alpha
}

/// `β(j, y)`: log-sum over suffixes covering `j+1..=L` given that a segment
/// labeled `y` ends at `j`.
fn backward(scores: &ScoreSet) -> Vec<f64> {
    let (n, ny, k) = (scores.len(), scores.num_labels(), scores.max_width());
    let mut beta = vec![0.0; n * ny];
    for j in (1..n).rev() {
        for y in 0..ny {
            let mut acc = LogAccumulator::new();
            for d in 1..=k.min(n - j) {
                let end = j + d;
                for yn in 0..ny {
                    acc.push(
                        scores.global(j + 1, end, yn)
                            + scores.transition(y, yn)
                            + beta[(end - 1) * ny + yn],
                    );
                }
            }
            beta[(j - 1) * ny + y] = acc.value();
        }
    }
    beta
}

fn total(alpha: &[f64], n: usize, ny: usize) -> f64 {
    let mut acc = LogAccumulator::new();
    for &a in &alpha[(n - 1) * ny..n * ny] {
        acc.push(a);
    }
    acc.value()
}

pub fn semicrf_log_partition(scores: &ScoreSet) -> f64 {
    total(&forward(scores), scores.len(), scores.num_labels())
}

/// Segmental Viterbi. Ties prefer the shorter last segment, then the lower
/// previous label, and finally the lower last label.
pub fn semicrf_viterbi(scores: &ScoreSet) -> (Segmentation, f64) {
    let (n, ny, k) = (scores.len(), scores.num_labels(), scores.max_width());
    let mut delta = vec![f64::NEG_INFINITY; n * ny];
    // (width, previous label) of the best last segment ending at m with label y
    let mut back = vec![(0usize, 0usize); n * ny];
    for m in 1..=n {
        for y in 0..ny {
            let mut best = f64::NEG_INFINITY;
            let mut arg = (1, 0);
            for d in 1..=m.min(k) {
                let i = m - d + 1;
                let phi = scores.global(i, m, y);
                if i == 1 {
                    if phi > best {
                        best = phi;
                        arg = (d, 0);
                    }
                } else {
                    for yp in 0..ny {
                        let cand = delta[(i - 2) * ny + yp] + phi + scores.transition(yp, y);
                        if cand > best {
                            best = cand;
                            arg = (d, yp);
                        }
                    }
                }
            }
            delta[(m - 1) * ny + y] = best;
            back[(m - 1) * ny + y] = arg;
        }
    }
    let last_row = &delta[(n - 1) * ny..];
    let mut y = 0;
    for cand in 1..ny {
        if last_row[cand] > last_row[y] {
            y = cand;
        }
    }
    let best = last_row[y];
    let mut segments = Vec::new();
    let mut m = n;
    while m > 0 {
        let (d, yp) = back[(m - 1) * ny + y];
        segments.push(Segment::new(m - d + 1, m, y));
        m -= d;
        y = yp;
    }
    segments.reverse();
    (Segmentation::new(segments), best)
}

/// Posterior segment and transition marginals.
#[derive(Debug, Clone)]
pub struct SemiCrfMarginals {
    pub log_partition: f64,
    /// `P(segment (i, j, y) is in the segmentation)`, laid out like
    /// [`ScoreSet::seg_global`].
    pub segments: Vec<f64>,
    /// Expected transition counts, flattened `from * |Y| + to`.
    pub transitions: Vec<f64>,
}

pub fn semicrf_marginals(scores: &ScoreSet) -> SemiCrfMarginals {
    let shape = scores.shape();
    let (n, ny) = (shape.len, shape.num_labels);
    let alpha = forward(scores);
    let beta = backward(scores);
    let log_z = total(&alpha, n, ny);
    let mut segments = vec![0.0; shape.segment_len()];
    let mut transitions = vec![0.0; ny * ny];
    for (i, j) in shape.spans() {
        for y in 0..ny {
            let phi = scores.global(i, j, y);
            let out = beta[(j - 1) * ny + y];
            let p = if i == 1 {
                (phi + out - log_z).exp()
            } else {
                let mut p = 0.0;
                for yp in 0..ny {
                    let q = (alpha[(i - 2) * ny + yp] + phi + scores.transition(yp, y) + out - log_z)
                        .exp();
                    transitions[yp * ny + y] += q;
                    p += q;
                }
                p
            };
            segments[shape.segment_index(i, j, y)] = p;
        }
    }
    SemiCrfMarginals {
        log_partition: log_z,
        segments,
        transitions,
    }
}

/// Negative log-likelihood of `gold`; gradients land in `seg_global` and
/// `transitions`.
pub fn semicrf_nll_and_grad(gold: &Segmentation, scores: &ScoreSet) -> Result<(f64, GradientSet)> {
    let gold_score = semicrf_score(gold, scores)?;
    let m = semicrf_marginals(scores);
    let shape = scores.shape();
    let ny = shape.num_labels;
    let mut grad = GradientSet::zeros(shape);
    grad.seg_global.copy_from_slice(&m.segments);
    grad.transitions.copy_from_slice(&m.transitions);
    for (k, s) in gold.iter().enumerate() {
        grad.seg_global[shape.segment_index(s.start, s.end, s.label)] -= 1.0;
        if k > 0 {
            grad.transitions[gold.segments[k - 1].label * ny + s.label] -= 1.0;
        }
    }
    Ok((m.log_partition - gold_score, grad))
}

/// Copy of `scores` in which every null segment wider than one token is
/// masked out of `seg_global`, leaving only unit-width null segments.
pub fn semicrf_unit_null_mask(scores: &ScoreSet, labels: &LabelSet) -> Result<ScoreSet> {
    let null = labels.require_null()?;
    let mut masked = scores.clone();
    for (i, j) in scores.shape().spans() {
        if j > i {
            masked.set_global(i, j, null, MASKED);
        }
    }
    Ok(masked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{enumerate_segmentations, random_scores, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seg(v: &[(usize, usize, usize)]) -> Segmentation {
        Segmentation::new(v.iter().map(|&(i, j, l)| Segment::new(i, j, l)).collect())
    }

    #[test]
    fn score_single_segment_has_no_transition() {
        let mut s = ScoreSet::zeros(3, 2, 3).unwrap();
        s.set_global(1, 3, 1, 4.25);
        s.set_transition(1, 1, 100.0);
        assert_eq!(semicrf_score(&seg(&[(1, 3, 1)]), &s).unwrap(), 4.25);
    }

    #[test]
    fn score_worked_sentence_symbolic() {
        // labels: O=0, PER=1, ORG=2
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_scores(&mut rng, 6, 3, 2);
        let y = seg(&[(1, 2, 1), (3, 3, 0), (4, 4, 0), (5, 6, 2)]);
        let expected = s.global(1, 2, 1)
            + s.global(3, 3, 0)
            + s.global(4, 4, 0)
            + s.global(5, 6, 2)
            + s.transition(1, 0)
            + s.transition(0, 0)
            + s.transition(0, 2);
        assert!((semicrf_score(&y, &s).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn score_rejects_invalid_input() {
        let s = ScoreSet::zeros(4, 2, 2).unwrap();
        assert!(matches!(
            semicrf_score(&seg(&[(1, 2, 0), (4, 4, 0)]), &s),
            Err(Error::InvalidSegmentation)
        ));
        assert!(matches!(
            semicrf_score(&seg(&[(1, 3, 0), (4, 4, 0)]), &s),
            Err(Error::SpanTooWide { .. })
        ));
    }

    #[test]
    fn partition_small_cases() {
        let mut s = ScoreSet::zeros(1, 1, 1).unwrap();
        s.set_global(1, 1, 0, 0.37);
        assert_eq!(semicrf_log_partition(&s), 0.37);

        let mut s = ScoreSet::zeros(2, 1, 2).unwrap();
        s.set_global(1, 1, 0, 0.2);
        s.set_global(2, 2, 0, -0.4);
        s.set_global(1, 2, 0, 0.9);
        s.set_transition(0, 0, 1.5);
        let expected = ((0.2f64 - 0.4 + 1.5).exp() + 0.9f64.exp()).ln();
        assert!((semicrf_log_partition(&s) - expected).abs() < 1e-14);
    }

    #[test]
    fn viterbi_small_cases() {
        let mut s = ScoreSet::zeros(1, 3, 2).unwrap();
        s.set_global(1, 1, 2, 0.5);
        let (y, score) = semicrf_viterbi(&s);
        assert_eq!(y, seg(&[(1, 1, 2)]));
        assert_eq!(score, 0.5);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = random_scores(&mut rng, 5, 2, 3);
        s.set_global(1, 2, 1, 10.0);
        let (y, score) = semicrf_viterbi(&s);
        assert_eq!(y.segments[0], Segment::new(1, 2, 1));
        assert_eq!(score, semicrf_score(&y, &s).unwrap());
    }

    #[test]
    fn viterbi_ties_prefer_short_segments() {
        let s = ScoreSet::zeros(3, 2, 3).unwrap();
        let (y, _) = semicrf_viterbi(&s);
        assert_eq!(y, seg(&[(1, 1, 0), (2, 2, 0), (3, 3, 0)]));
    }

    #[test]
    fn nll_small_cases() {
        let s = ScoreSet::zeros(1, 2, 1).unwrap();
        let (loss, g) = semicrf_nll_and_grad(&seg(&[(1, 1, 1)]), &s).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert!((g.global(1, 1, 1) + 0.5).abs() < 1e-15);

        let mut s = ScoreSet::zeros(4, 2, 2).unwrap();
        let gold = seg(&[(1, 2, 1), (3, 3, 0), (4, 4, 1)]);
        for x in gold.iter() {
            s.set_global(x.start, x.end, x.label, 60.0);
        }
        let (loss, _) = semicrf_nll_and_grad(&gold, &s).unwrap();
        assert!((0.0..1e-12).contains(&loss));
        assert!(semicrf_nll_and_grad(&seg(&[(1, 2, 1)]), &s).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_scores(&mut rng, 5, 3, 3);
        let gold = seg(&[(1, 3, 2), (4, 4, 0), (5, 5, 1)]);
        let (_, g) = semicrf_nll_and_grad(&gold, &s).unwrap();
        let loss = |s: &ScoreSet| semicrf_nll_and_grad(&gold, s).unwrap().0;
        let h = 1e-5;
        for (i, j) in s.shape().spans() {
            for y in 0..3 {
                let (mut p, mut m) = (s.clone(), s.clone());
                p.set_global(i, j, y, s.global(i, j, y) + h);
                m.set_global(i, j, y, s.global(i, j, y) - h);
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!(relative_error(g.global(i, j, y), fd) < 1e-5);
            }
        }
        for k in 0..9 {
            let (mut p, mut m) = (s.clone(), s.clone());
            p.transitions_mut()[k] += h;
            m.transitions_mut()[k] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!(relative_error(g.transitions[k], fd) < 1e-5);
        }
    }

    #[test]
    fn unit_null_mask_rules() {
        let labels = LabelSet::with_null("O", ["PER"]).unwrap();
        let mut s = ScoreSet::zeros(3, 2, 3).unwrap();
        s.set_global(1, 2, 0, 5.0);
        s.set_global(2, 2, 0, 1.25);
        let m = semicrf_unit_null_mask(&s, &labels).unwrap();
        assert_eq!(m.global(1, 2, 0), MASKED);
        assert_eq!(m.global(2, 2, 0), 1.25);
        assert_eq!(m.global(1, 3, 1), 0.0);
        let no_null = LabelSet::new(["A", "B"], None).unwrap();
        assert!(matches!(
            semicrf_unit_null_mask(&s, &no_null),
            Err(Error::MissingNullLabel)
        ));
    }

    #[test]
    fn unit_null_partition_matches_filtered_enumeration() {
        let labels = LabelSet::with_null("O", ["A", "B"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_scores(&mut rng, 3, 3, 3);
        let masked = semicrf_unit_null_mask(&s, &labels).unwrap();
        let scores: Vec<f64> = enumerate_segmentations(3, 3, 3)
            .unwrap()
            .into_iter()
            .filter(|y| y.iter().all(|x| x.label != 0 || x.width() == 1))
            .map(|y| semicrf_score(&y, &s).unwrap())
            .collect();
        let expected = crate::logspace::log_sum_exp(&scores).unwrap();
        assert!((semicrf_log_partition(&masked) - expected).abs() < 1e-9);
        assert!(semicrf_log_partition(&masked) <= semicrf_log_partition(&s));
    }

    #[test]
    fn marginals_sum_to_expected_segment_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = rng.random_range(3..7);
        let s = random_scores(&mut rng, n, 2, 3);
        let m = semicrf_marginals(&s);
        // every position is covered by exactly one segment
        for t in 1..=n {
            let mut cover = 0.0;
            for (i, j) in s.shape().spans() {
                if i <= t && t <= j {
                    for y in 0..2 {
                        cover += m.segments[s.shape().segment_index(i, j, y)];
                    }
                }
            }
            assert!((cover - 1.0).abs() < 1e-12);
        }
    }
}
