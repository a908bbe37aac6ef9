use std::collections::HashMap;

use super::Featurizer;
use crate::error::{Error, Result};
use crate::filtered::{apply_training_constraints, build_graph, filter_segments, global_nll_and_grad, GoldPath};
use crate::logspace::LogAccumulator;
use crate::types::{EntitySet, GradientSet, LabelSet, ScoreSet};

/// Which terms of the training objective are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    /// Local span classification plus the global path likelihood.
    #[default]
    Joint,
    /// Local span classification only.
    LocalOnly,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Objective::Joint),
            "local" | "local_only" => Ok(Objective::LocalOnly),
            other => Err(Error::Config(format!("unknown objective `{other}`"))),
        }
    }
}

/// Weighted span classification loss over every span of width `≤ K`.
///
/// A span's target is the label of the gold entity with exactly that span,
/// or null otherwise. Null-target terms are weighted by `beta`.
pub fn local_loss(
    scores: &ScoreSet,
    gold: &EntitySet,
    labels: &LabelSet,
    beta: f64,
) -> Result<(f64, GradientSet)> {
    let null = labels.require_null()?;
    let shape = scores.shape();
    if labels.len() != shape.num_labels {
        return Err(Error::LengthMismatch {
            expected: shape.num_labels,
            actual: labels.len(),
        });
    }
    let mut targets = HashMap::new();
    for e in gold.within_width(shape.max_width).iter() {
        shape.check_segment(e)?;
        targets.insert((e.start, e.end), e.label);
    }
    let ny = shape.num_labels;
    let mut grad = GradientSet::zeros(shape);
    let mut loss = 0.0;
    for (i, j) in shape.spans() {
        let target = targets.get(&(i, j)).copied().unwrap_or(null);
        let weight = if target == null { beta } else { 1.0 };
        if weight == 0.0 {
            continue;
        }
        let base = shape.segment_index(i, j, 0);
        let row = &scores.seg_local()[base..base + ny];
        let mut acc = LogAccumulator::new();
        for &v in row {
            acc.push(v);
        }
        let lse = acc.value();
        loss += weight * (lse - row[target]);
        for y in 0..ny {
            let p = (row[y] - lse).exp();
            grad.seg_local[base + y] = weight * (p - if y == target { 1.0 } else { 0.0 });
        }
    }
    Ok((loss, grad))
}

/// Loss terms and gradient with respect to a score set, together with the
/// size of the graph that inference would build from these scores.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub loss: f64,
    pub local: f64,
    pub global: f64,
    pub grad: GradientSet,
    /// Nodes of the unconstrained filtered graph.
    pub graph_nodes: usize,
    /// Edges of the unconstrained filtered graph, terminal edges included.
    pub graph_edges: usize,
}

/// Local loss plus, under [`Objective::Joint`], the path likelihood on the
/// training-constrained filtered graph. Gold entities wider than the score
/// set's maximum width are not scoreable and are left out of both terms.
pub fn score_level_loss(
    scores: &ScoreSet,
    gold: &EntitySet,
    labels: &LabelSet,
    beta: f64,
    objective: Objective,
) -> Result<LossReport> {
    let (local, mut grad) = local_loss(scores, gold, labels, beta)?;
    let filtered = filter_segments(scores, labels)?;
    let raw = build_graph(&filtered, scores)?;
    let (graph_nodes, graph_edges) = (raw.num_nodes(), raw.num_edges());
    let mut global = 0.0;
    if objective == Objective::Joint {
        let gold_path = GoldPath::from_entities(&gold.within_width(scores.max_width()));
        let nodes = apply_training_constraints(&filtered, &gold_path)?;
        let graph = build_graph(&nodes, scores)?;
        let (nll, g) = global_nll_and_grad(&gold_path, &graph)?;
        global = nll;
        grad.accumulate(&g);
    }
    Ok(LossReport {
        loss: local + global,
        local,
        global,
        grad,
        graph_nodes,
        graph_edges,
    })
}

/// [`score_level_loss`] for one sentence, back-propagated to the featurizer
/// parameters. Returns the report and the parameter gradient.
pub fn total_loss(
    tokens: &[usize],
    gold: &EntitySet,
    featurizer: &Featurizer,
    labels: &LabelSet,
    max_width: usize,
    beta: f64,
    objective: Objective,
) -> Result<(LossReport, Vec<f64>)> {
    let scores = featurizer.score_sequence(tokens, max_width)?;
    let report = score_level_loss(&scores, gold, labels, beta, objective)?;
    let mut param_grad = vec![0.0; featurizer.params().len()];
    featurizer.backprop(tokens, &report.grad, &mut param_grad);
    Ok((report, param_grad))
}
