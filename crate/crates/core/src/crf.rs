//! Linear-chain CRF over per-token label scores.
//!
//! A tagging `y` scores `Σᵢ ψ(i, yᵢ) + Σ_{i≥2} T[yᵢ₋₁, yᵢ]` with no begin or
//! end transitions. All recursions run in log space.

use crate::error::{Error, Result};
use crate::logspace::LogAccumulator;
use crate::types::{GradientSet, ScoreSet};

/// One label index per token.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TagSequence(pub Vec<usize>);

impl TagSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn check(&self, scores: &ScoreSet) -> Result<()> {
        if self.0.len() != scores.len() {
            return Err(Error::LengthMismatch {
                expected: scores.len(),
                actual: self.0.len(),
            });
        }
        if let Some(&bad) = self.0.iter().find(|&&y| y >= scores.num_labels()) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                num_labels: scores.num_labels(),
            });
        }
        Ok(())
    }
}

pub fn crf_score(tags: &TagSequence, scores: &ScoreSet) -> Result<f64> {
    tags.check(scores)?;
    let y = &tags.0;
    let mut total = scores.emission(1, y[0]);
    for i in 2..=scores.len() {
        total = total + scores.emission(i, y[i - 1]) + scores.transition(y[i - 2], y[i - 1]);
    }
    Ok(total)
}

/// Forward table `α(i, y)` flattened as `(i - 1) * |Y| + y`.
fn forward(scores: &ScoreSet) -> Vec<f64> {
    let (n, ny) = (scores.len(), scores.num_labels());
    let mut alpha = vec![0.0; n * ny];
    for y in 0..ny {
        alpha[y] = scores.emission(1, y);
    }
    for i in 2..=n {
        let (prev, cur) = alpha.split_at_mut((i - 1) * ny);
        let prev = &prev[(i - 2) * ny..];
        for y in 0..ny {
            let emit = scores.emission(i, y);
            let mut acc = LogAccumulator::new();
            for (yp, &a) in prev.iter().enumerate() {
                acc.push(a + emit + scores.transition(yp, y));
            }
            cur[y] = acc.value();
        }
    }
    alpha
}

/// Backward table `β(i, y)`: log-sum over completions after position `i`.
fn backward(scores: &ScoreSet) -> Vec<f64> {
    let (n, ny) = (scores.len(), scores.num_labels());
    let mut beta = vec![0.0; n * ny];
    for i in (1..n).rev() {
        for y in 0..ny {
            let mut acc = LogAccumulator::new();
            for yn in 0..ny {
                acc.push(
                    scores.emission(i + 1, yn) + scores.transition(y, yn) + beta[i * ny + yn],
                );
            }
            beta[(i - 1) * ny + y] = acc.value();
        }
    }
    beta
}

pub fn crf_log_partition(scores: &ScoreSet) -> f64 {
    let (n, ny) = (scores.len(), scores.num_labels());
    let alpha = forward(scores);
    let mut acc = LogAccumulator::new();
    for &a in &alpha[(n - 1) * ny..] {
        acc.push(a);
    }
    acc.value()
}

/// Highest-scoring tagging and its score. Ties go to the lowest label index.
pub fn crf_viterbi(scores: &ScoreSet) -> (TagSequence, f64) {
    let (n, ny) = (scores.len(), scores.num_labels());
    let mut delta: Vec<f64> = (0..ny).map(|y| scores.emission(1, y)).collect();
    let mut back = vec![0usize; n * ny];
    let mut next = vec![0.0; ny];
    for i in 2..=n {
        for y in 0..ny {
            let emit = scores.emission(i, y);
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (yp, &d) in delta.iter().enumerate() {
                let cand = d + emit + scores.transition(yp, y);
                if cand > best {
                    best = cand;
                    arg = yp;
                }
            }
            next[y] = best;
            back[(i - 1) * ny + y] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut last = 0;
    for y in 1..ny {
        if delta[y] > delta[last] {
            last = y;
        }
    }
    let best = delta[last];
    let mut tags = vec![0; n];
    tags[n - 1] = last;
    for i in (1..n).rev() {
        tags[i - 1] = back[i * ny + tags[i]];
    }
    (TagSequence(tags), best)
}

/// Posterior marginals of a linear-chain CRF.
#[derive(Debug, Clone)]
pub struct CrfMarginals {
    pub log_partition: f64,
    /// `P(yᵢ = y)`, flattened `(i - 1) * |Y| + y`.
    pub unary: Vec<f64>,
    /// Expected transition counts `Σᵢ P(yᵢ₋₁ = a, yᵢ = b)`, flattened `a * |Y| + b`.
    pub transitions: Vec<f64>,
}

pub fn crf_marginals(scores: &ScoreSet) -> CrfMarginals {
    let (n, ny) = (scores.len(), scores.num_labels());
    let alpha = forward(scores);
    let beta = backward(scores);
    let mut acc = LogAccumulator::new();
    for &a in &alpha[(n - 1) * ny..] {
        acc.push(a);
    }
    let log_z = acc.value();
    let unary = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| (a + b - log_z).exp())
        .collect();
    let mut transitions = vec![0.0; ny * ny];
    for i in 2..=n {
        for a in 0..ny {
            let left = alpha[(i - 2) * ny + a];
            for b in 0..ny {
                let right = scores.emission(i, b) + beta[(i - 1) * ny + b];
                transitions[a * ny + b] += (left + scores.transition(a, b) + right - log_z).exp();
            }
        }
    }
    CrfMarginals {
        log_partition: log_z,
        unary,
        transitions,
    }
}

/// Negative log-likelihood of `gold` and its gradient with respect to the
/// emission and transition tables (marginals minus gold indicators).
pub fn crf_nll_and_grad(gold: &TagSequence, scores: &ScoreSet) -> Result<(f64, GradientSet)> {
    let gold_score = crf_score(gold, scores)?;
    let m = crf_marginals(scores);
    let ny = scores.num_labels();
    let mut grad = GradientSet::zeros(scores.shape());
    grad.emissions.copy_from_slice(&m.unary);
    grad.transitions.copy_from_slice(&m.transitions);
    for (i, &y) in gold.0.iter().enumerate() {
        grad.emissions[i * ny + y] -= 1.0;
        if i > 0 {
            grad.transitions[gold.0[i - 1] * ny + y] -= 1.0;
        }
    }
    Ok((m.log_partition - gold_score, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{random_scores, relative_error as rel_err};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_score(tags: &[usize], s: &ScoreSet) -> f64 {
        let e: f64 = tags.iter().enumerate().map(|(i, &y)| s.emission(i + 1, y)).sum();
        let t: f64 = tags.windows(2).map(|w| s.transition(w[0], w[1])).sum();
        e + t
    }

    #[test]
    fn score_single_token() {
        let mut s = ScoreSet::zeros(1, 1, 1).unwrap();
        s.set_emission(1, 0, 2.5);
        assert_eq!(crf_score(&TagSequence(vec![0]), &s).unwrap(), 2.5);
    }

    #[test]
    fn score_forced_two_tokens() {
        let mut s = ScoreSet::zeros(2, 1, 1).unwrap();
        s.set_emission(1, 0, 0.7);
        s.set_emission(2, 0, -1.1);
        s.set_transition(0, 0, 3.0);
        let got = crf_score(&TagSequence(vec![0, 0]), &s).unwrap();
        assert!((got - (0.7 - 1.1 + 3.0)).abs() < 1e-15);
    }

    #[test]
    fn score_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_scores(&mut rng, 5, 3, 1);
        let tags: Vec<usize> = (0..5).map(|_| rng.random_range(0..3)).collect();
        let got = crf_score(&TagSequence(tags.clone()), &s).unwrap();
        assert!((got - naive_score(&tags, &s)).abs() < 1e-12);
    }

    #[test]
    fn score_rejects_bad_input() {
        let s = ScoreSet::zeros(3, 2, 1).unwrap();
        assert!(matches!(
            crf_score(&TagSequence(vec![0, 1]), &s),
            Err(Error::LengthMismatch { expected: 3, actual: 2 })
        ));
        assert!(crf_score(&TagSequence(vec![0, 1, 2]), &s).is_err());
    }

    #[test]
    fn partition_small_cases() {
        let s = ScoreSet::zeros(1, 2, 1).unwrap();
        assert!((crf_log_partition(&s) - 2f64.ln()).abs() < 1e-15);
        let s = ScoreSet::zeros(2, 2, 1).unwrap();
        assert!((crf_log_partition(&s) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn viterbi_small_cases() {
        let mut s = ScoreSet::zeros(1, 2, 1).unwrap();
        s.set_emission(1, 0, 1.0);
        s.set_emission(1, 1, 3.0);
        assert_eq!(crf_viterbi(&s), (TagSequence(vec![1]), 3.0));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_scores(&mut rng, 4, 1, 1);
        let (tags, score) = crf_viterbi(&s);
        assert_eq!(tags.0, vec![0; 4]);
        assert_eq!(score, crf_score(&tags, &s).unwrap());
    }

    #[test]
    fn viterbi_ties_prefer_lowest_label() {
        let s = ScoreSet::zeros(3, 3, 1).unwrap();
        assert_eq!(crf_viterbi(&s).0, TagSequence(vec![0, 0, 0]));
    }

    #[test]
    fn viterbi_score_is_its_own_crf_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(1..10);
            let s = random_scores(&mut rng, n, 3, 1);
            let (tags, score) = crf_viterbi(&s);
            assert_eq!(score, crf_score(&tags, &s).unwrap());
        }
    }

    #[test]
    fn nll_uniform_single_token() {
        let s = ScoreSet::zeros(1, 2, 1).unwrap();
        let (loss, g) = crf_nll_and_grad(&TagSequence(vec![0]), &s).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert!((g.emission(1, 0) - (0.5 - 1.0)).abs() < 1e-15);
        assert!((g.emission(1, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nll_vanishes_under_dominating_margin() {
        let mut s = ScoreSet::zeros(4, 3, 1).unwrap();
        let gold = [2, 0, 1, 1];
        for (i, &y) in gold.iter().enumerate() {
            s.set_emission(i + 1, y, 100.0);
        }
        let gold = TagSequence(gold.to_vec());
        assert_eq!(crf_viterbi(&s).0, gold);
        let (loss, _) = crf_nll_and_grad(&gold, &s).unwrap();
        assert!(loss >= 0.0 && loss < 1e-40_f64.max(1e-12));
    }

    #[test]
    fn nll_rejects_invalid_gold() {
        let s = ScoreSet::zeros(2, 2, 1).unwrap();
        assert!(crf_nll_and_grad(&TagSequence(vec![0]), &s).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_scores(&mut rng, 5, 3, 1);
        let gold = TagSequence((0..5).map(|_| rng.random_range(0..3)).collect());
        let (_, g) = crf_nll_and_grad(&gold, &s).unwrap();
        let h = 1e-5;
        let loss = |s: &ScoreSet| crf_nll_and_grad(&gold, s).unwrap().0;
        for k in 0..s.emissions().len() {
            let (mut p, mut m) = (s.clone(), s.clone());
            p.emissions_mut()[k] += h;
            m.emissions_mut()[k] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!(rel_err(g.emissions[k], fd) < 1e-5, "ψ[{k}]");
        }
        for k in 0..s.transitions().len() {
            let (mut p, mut m) = (s.clone(), s.clone());
            p.transitions_mut()[k] += h;
            m.transitions_mut()[k] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!(rel_err(g.transitions[k], fd) < 1e-5, "T[{k}]");
        }
    }
}
