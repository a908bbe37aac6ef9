//! Trainable segment scorer.
//!
//! Each token id owns three `D`-dimensional embeddings: a content vector and
//! left/right context vectors. A span `i..=j` is featurized as
//!
//! ```text
//! f(i, j) = Σ_{t=i..=j} content[x_t] + right_ctx[x_{i-1}] + left_ctx[x_{j+1}]
//! ```
//!
//! where positions outside the sentence use a reserved boundary row. Two
//! linear heads turn `f` into local (filtering) and global (path) scores,
//! and a learned `|Y| × |Y|` matrix supplies transitions.
//!
//! `right_ctx[x_{i-1}]` is the embedding of the token immediately to the
//! left of the span (seen looking right into the span), and likewise for
//! `left_ctx`.

mod checkpoint;
mod loss;
mod train;

pub use checkpoint::{Model, Vocab, CHECKPOINT_MAGIC};
pub use loss::{local_loss, score_level_loss, total_loss, LossReport, Objective};
pub use train::{train, train_model, Adam, StepRecord, TrainConfig, TrainExample, TrainOutcome};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::types::{GradientSet, ScoreSet, Shape};

/// Parameters of the toy encoder and both scoring heads, stored in one flat
/// vector so optimizers can treat them uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    vocab_size: usize,
    dim: usize,
    num_labels: usize,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Block {
    Content,
    LeftCtx,
    RightCtx,
    WLocal,
    WGlobal,
    Transitions,
}

impl Featurizer {
    pub fn zeros(vocab_size: usize, dim: usize, num_labels: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        if num_labels == 0 {
            return Err(Error::InvalidLabels("label set is empty".into()));
        }
        let len = 3 * (vocab_size + 2) * dim + 2 * num_labels * dim + num_labels * num_labels;
        Ok(Featurizer {
            vocab_size,
            dim,
            num_labels,
            params: vec![0.0; len],
        })
    }

    /// Parameters drawn from `N(0, scale²)`; transitions start at zero.
    pub fn random<R: Rng + ?Sized>(
        vocab_size: usize,
        dim: usize,
        num_labels: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut f = Featurizer::zeros(vocab_size, dim, num_labels)?;
        let normal = Normal::new(0.0, scale).map_err(|e| Error::Config(e.to_string()))?;
        let t = f.block_range(Block::Transitions).start;
        for p in &mut f.params[..t] {
            *p = normal.sample(rng);
        }
        Ok(f)
    }

    pub fn from_params(
        vocab_size: usize,
        dim: usize,
        num_labels: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut f = Featurizer::zeros(vocab_size, dim, num_labels)?;
        if params.len() != f.params.len() {
            return Err(Error::LengthMismatch {
                expected: f.params.len(),
                actual: params.len(),
            });
        }
        f.params = params;
        Ok(f)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// Embedding rows: known tokens, then the unknown row, then the boundary row.
    pub fn rows(&self) -> usize {
        self.vocab_size + 2
    }

    pub fn unknown_id(&self) -> usize {
        self.vocab_size
    }

    fn boundary_id(&self) -> usize {
        self.vocab_size + 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Number of leading parameters that belong to the token embeddings.
    pub fn encoder_len(&self) -> usize {
        3 * self.rows() * self.dim
    }

    fn block_range(&self, block: Block) -> std::ops::Range<usize> {
        let emb = self.rows() * self.dim;
        let head = self.num_labels * self.dim;
        let (start, len) = match block {
            Block::Content => (0, emb),
            Block::LeftCtx => (emb, emb),
            Block::RightCtx => (2 * emb, emb),
            Block::WLocal => (3 * emb, head),
            Block::WGlobal => (3 * emb + head, head),
            Block::Transitions => (3 * emb + 2 * head, self.num_labels * self.num_labels),
        };
        start..start + len
    }

    fn row(&self, block: Block, r: usize) -> &[f64] {
        let base = self.block_range(block).start + r * self.dim;
        &self.params[base..base + self.dim]
    }

    pub fn content(&self, id: usize) -> &[f64] {
        self.row(Block::Content, self.clamp_id(id))
    }

    pub fn w_local(&self, label: usize) -> &[f64] {
        self.row(Block::WLocal, label)
    }

    pub fn w_global(&self, label: usize) -> &[f64] {
        self.row(Block::WGlobal, label)
    }

    pub fn transitions(&self) -> &[f64] {
        &self.params[self.block_range(Block::Transitions)]
    }

    pub(crate) fn set_row(&mut self, block_is_global: bool, label: usize, values: &[f64]) {
        let block = if block_is_global { Block::WGlobal } else { Block::WLocal };
        let base = self.block_range(block).start + label * self.dim;
        self.params[base..base + self.dim].copy_from_slice(values);
    }

    pub(crate) fn clear_transitions(&mut self) {
        let r = self.block_range(Block::Transitions);
        self.params[r].fill(0.0);
    }

    #[inline]
    fn clamp_id(&self, id: usize) -> usize {
        if id < self.vocab_size {
            id
        } else {
            self.unknown_id()
        }
    }

    /// Row ids of the left and right neighbours of span `i..=j` (1-based).
    fn context_ids(&self, tokens: &[usize], i: usize, j: usize) -> (usize, usize) {
        let left = if i >= 2 {
            self.clamp_id(tokens[i - 2])
        } else {
            self.boundary_id()
        };
        let right = if j < tokens.len() {
            self.clamp_id(tokens[j])
        } else {
            self.boundary_id()
        };
        (left, right)
    }

    /// Feature vector `f(i, j)` of a 1-based inclusive span.
    pub fn segment_feature(&self, tokens: &[usize], i: usize, j: usize) -> Result<Vec<f64>> {
        if i == 0 || i > j || j > tokens.len() {
            return Err(Error::SpanOutOfRange {
                start: i,
                end: j,
                len: tokens.len(),
            });
        }
        let mut f = vec![0.0; self.dim];
        for &t in &tokens[i - 1..j] {
            add_into(&mut f, self.content(t));
        }
        let (left, right) = self.context_ids(tokens, i, j);
        add_into(&mut f, self.row(Block::RightCtx, left));
        add_into(&mut f, self.row(Block::LeftCtx, right));
        Ok(f)
    }

    /// Local and global scores for every span of width `≤ max_width`.
    /// Emissions are the width-1 global scores.
    pub fn score_sequence(&self, tokens: &[usize], max_width: usize) -> Result<ScoreSet> {
        let shape = Shape::new(tokens.len(), self.num_labels, max_width)?;
        let mut scores = ScoreSet::zeros(shape.len, shape.num_labels, shape.max_width)?;
        let ny = self.num_labels;
        let mut content = vec![0.0; self.dim];
        let mut f = vec![0.0; self.dim];
        for i in 1..=shape.len {
            content.fill(0.0);
            for j in i..=(i + max_width - 1).min(shape.len) {
                add_into(&mut content, self.content(tokens[j - 1]));
                f.copy_from_slice(&content);
                let (left, right) = self.context_ids(tokens, i, j);
                add_into(&mut f, self.row(Block::RightCtx, left));
                add_into(&mut f, self.row(Block::LeftCtx, right));
                let base = shape.segment_index(i, j, 0);
                for y in 0..ny {
                    scores.seg_local[base + y] = dot(self.w_local(y), &f);
                    scores.seg_global[base + y] = dot(self.w_global(y), &f);
                }
            }
            for y in 0..ny {
                let g = scores.global(i, i, y);
                scores.set_emission(i, y, g);
            }
        }
        scores.transitions.copy_from_slice(self.transitions());
        Ok(scores)
    }

    /// Chain rule from score-level gradients to parameter gradients,
    /// accumulated into `out` (same layout as [`Featurizer::params`]).
    pub fn backprop(&self, tokens: &[usize], grad: &GradientSet, out: &mut [f64]) {
        assert_eq!(out.len(), self.params.len());
        let shape = grad.shape();
        let (d, ny) = (self.dim, self.num_labels);
        let w_local_base = self.block_range(Block::WLocal).start;
        let w_global_base = self.block_range(Block::WGlobal).start;
        let content_base = self.block_range(Block::Content).start;
        let left_base = self.block_range(Block::LeftCtx).start;
        let right_base = self.block_range(Block::RightCtx).start;

        // d(loss)/d(content sum) per span is spread over its tokens with a
        // difference array over positions.
        let mut diff = vec![0.0; (shape.len + 1) * d];
        let mut content = vec![0.0; d];
        let mut f = vec![0.0; d];
        let mut df = vec![0.0; d];
        let mut gg = vec![0.0; ny];
        for i in 1..=shape.len {
            content.fill(0.0);
            for j in i..=(i + shape.max_width - 1).min(shape.len) {
                add_into(&mut content, self.content(tokens[j - 1]));
                let base = shape.segment_index(i, j, 0);
                let gl = &grad.seg_local[base..base + ny];
                gg.copy_from_slice(&grad.seg_global[base..base + ny]);
                if i == j {
                    for y in 0..ny {
                        gg[y] += grad.emission(i, y);
                    }
                }
                if gl.iter().chain(gg.iter()).all(|&g| g == 0.0) {
                    continue;
                }
                f.copy_from_slice(&content);
                let (left, right) = self.context_ids(tokens, i, j);
                add_into(&mut f, self.row(Block::RightCtx, left));
                add_into(&mut f, self.row(Block::LeftCtx, right));
                df.fill(0.0);
                for y in 0..ny {
                    if gl[y] != 0.0 {
                        axpy(&mut out[w_local_base + y * d..w_local_base + (y + 1) * d], gl[y], &f);
                        axpy(&mut df, gl[y], self.w_local(y));
                    }
                    if gg[y] != 0.0 {
                        axpy(&mut out[w_global_base + y * d..w_global_base + (y + 1) * d], gg[y], &f);
                        axpy(&mut df, gg[y], self.w_global(y));
                    }
                }
                add_into(&mut diff[(i - 1) * d..i * d], &df);
                axpy(&mut diff[j * d..(j + 1) * d], -1.0, &df);
                add_into(&mut out[right_base + left * d..right_base + (left + 1) * d], &df);
                add_into(&mut out[left_base + right * d..left_base + (right + 1) * d], &df);
            }
        }
        let mut running = vec![0.0; d];
        for t in 0..shape.len {
            add_into(&mut running, &diff[t * d..(t + 1) * d]);
            let row = self.clamp_id(tokens[t]);
            add_into(&mut out[content_base + row * d..content_base + (row + 1) * d], &running);
        }
        let t = self.block_range(Block::Transitions);
        for (o, g) in out[t].iter_mut().zip(&grad.transitions) {
            *o += g;
        }
    }
}

#[inline]
fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[inline]
fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
