//! Flat-array entry points for foreign callers.
//!
//! Score tables arrive as row-major `f64` slices with explicit dimensions;
//! every slice is checked against those dimensions before any work is done,
//! and a mismatch names the offending array. Results are identical to
//! calling the engine directly on the equivalent [`ScoreSet`].

use crate::decode::{decode_scores, Backend};
use crate::error::{Error, Result};
use crate::features::{score_level_loss, Objective};
use crate::types::{EntitySet, LabelSet, ScoreSet, Segment, Shape};

/// Version of this crate, reported to bindings.
pub fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Borrowed score tables.
///
/// Layouts: `emissions` is `L × Y`, `seg_local` and `seg_global` are
/// `L × K × Y` indexed by start, width − 1 and label, and `transitions` is
/// `Y × Y` indexed by previous and next label.
#[derive(Debug, Clone, Copy)]
pub struct ScoreArrays<'a> {
    pub len: usize,
    pub num_labels: usize,
    pub max_width: usize,
    pub emissions: &'a [f64],
    pub seg_local: &'a [f64],
    pub seg_global: &'a [f64],
    pub transitions: &'a [f64],
}

impl ScoreArrays<'_> {
    pub fn to_score_set(&self) -> Result<ScoreSet> {
        let shape = Shape::new(self.len, self.num_labels, self.max_width)?;
        ScoreSet::from_parts(
            shape,
            self.emissions.to_vec(),
            self.seg_local.to_vec(),
            self.seg_global.to_vec(),
            self.transitions.to_vec(),
        )
    }
}

/// Owned gradient tables in the same layouts as [`ScoreArrays`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientArrays {
    pub emissions: Vec<f64>,
    pub seg_local: Vec<f64>,
    pub seg_global: Vec<f64>,
    pub transitions: Vec<f64>,
}

fn gold_set(gold: &[(usize, usize, usize)], shape: Shape) -> Result<EntitySet> {
    let mut out = Vec::with_capacity(gold.len());
    for &(i, j, y) in gold {
        let s = Segment::new(i, j, y);
        s.check_bounds(shape.len)?;
        if y >= shape.num_labels {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_labels: shape.num_labels,
            });
        }
        out.push(s);
    }
    EntitySet::new(out)
}

/// Decoded entities as `(start, end, label)` with 1-based inclusive spans.
pub fn ffi_decode(scores: &ScoreArrays<'_>, labels: &LabelSet, backend: Backend) -> Result<Vec<(usize, usize, usize)>> {
    let sc = scores.to_score_set()?;
    let ents = decode_scores(backend, &sc, labels)?;
    Ok(ents.iter().map(|e| (e.start, e.end, e.label)).collect())
}

/// Joint training loss (local plus filtered path likelihood) and its
/// gradient with respect to every input table.
pub fn ffi_loss_and_grad(
    scores: &ScoreArrays<'_>,
    gold: &[(usize, usize, usize)],
    labels: &LabelSet,
    beta: f64,
) -> Result<(f64, GradientArrays)> {
    let sc = scores.to_score_set()?;
    let gold = gold_set(gold, sc.shape())?;
    let report = score_level_loss(&sc, &gold, labels, beta, Objective::Joint)?;
    let g = report.grad;
    Ok((
        report.loss,
        GradientArrays {
            emissions: g.emissions,
            seg_local: g.seg_local,
            seg_global: g.seg_global,
            transitions: g.transitions,
        },
    ))
}
