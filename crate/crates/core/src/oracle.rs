//! Brute-force reference implementations.
//!
//! Everything here enumerates outputs explicitly and is exponential by
//! nature. Enumerations stop with [`Error::BudgetExceeded`] instead of
//! silently truncating.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::crf::TagSequence;
use crate::error::{Error, Result};
use crate::filtered::{path_score, FilteredGraph, GoldPath, Vertex};
use crate::types::{ScoreSet, Segment, Segmentation, Shape};

/// Maximum number of items any enumeration may produce.
pub const ENUMERATION_BUDGET: usize = 1_000_000;

/// All `|Y|^L` taggings in lexicographic order.
pub fn enumerate_tag_sequences(len: usize, num_labels: usize) -> Result<Vec<TagSequence>> {
    let count = u32::try_from(len)
        .ok()
        .and_then(|l| num_labels.checked_pow(l))
        .filter(|&c| c <= ENUMERATION_BUDGET)
        .ok_or(Error::BudgetExceeded {
            budget: ENUMERATION_BUDGET,
        })?;
    let mut out = Vec::with_capacity(count);
    let mut cur = vec![0usize; len];
    for _ in 0..count {
        out.push(TagSequence(cur.clone()));
        // odometer increment, last position fastest
        for pos in (0..len).rev() {
            cur[pos] += 1;
            if cur[pos] < num_labels {
                break;
            }
            cur[pos] = 0;
        }
    }
    Ok(out)
}

/// Every full-cover segmentation of `1..=len` into labeled segments of width
/// at most `max_width`.
pub fn enumerate_segmentations(
    len: usize,
    max_width: usize,
    num_labels: usize,
) -> Result<Vec<Segmentation>> {
    fn rec(
        next: usize,
        len: usize,
        max_width: usize,
        num_labels: usize,
        prefix: &mut Vec<Segment>,
        out: &mut Vec<Segmentation>,
    ) -> Result<()> {
        if next > len {
            if out.len() == ENUMERATION_BUDGET {
                return Err(Error::BudgetExceeded {
                    budget: ENUMERATION_BUDGET,
                });
            }
            out.push(Segmentation::new(prefix.clone()));
            return Ok(());
        }
        for end in next..=(next + max_width - 1).min(len) {
            for label in 0..num_labels {
                prefix.push(Segment::new(next, end, label));
                rec(end + 1, len, max_width, num_labels, prefix, out)?;
                prefix.pop();
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    if len == 0 || max_width == 0 || num_labels == 0 {
        return Ok(out);
    }
    rec(1, len, max_width, num_labels, &mut Vec::new(), &mut out)?;
    Ok(out)
}

/// Every `start → end` path of `graph` with its [`path_score`], by DFS.
pub fn enumerate_paths(graph: &FilteredGraph) -> Result<Vec<(GoldPath, f64)>> {
    fn rec(
        graph: &FilteredGraph,
        node: usize,
        prefix: &mut Vec<Segment>,
        out: &mut Vec<(GoldPath, f64)>,
    ) -> Result<()> {
        prefix.push(graph.nodes()[node]);
        if graph.has_end_edge(node) {
            if out.len() == ENUMERATION_BUDGET {
                return Err(Error::BudgetExceeded {
                    budget: ENUMERATION_BUDGET,
                });
            }
            let path = GoldPath {
                entities: prefix.clone(),
            };
            let score = path_score(&path, graph)?;
            out.push((path, score));
        }
        for &next in graph.succs(node) {
            rec(graph, next, prefix, out)?;
        }
        prefix.pop();
        Ok(())
    }
    let mut out = Vec::new();
    if graph.is_empty() {
        out.push((GoldPath::default(), 0.0));
        return Ok(out);
    }
    for n in 0..graph.num_nodes() {
        if graph.has_start_edge(n) {
            rec(graph, n, &mut Vec::new(), &mut out)?;
        }
    }
    Ok(out)
}

/// Explicit edge list of a graph, independent of its internal adjacency
/// helpers: recomputes the in-between rule by brute force over node triples.
pub fn brute_force_edges(nodes: &[Segment]) -> Vec<(Segment, Segment)> {
    let mut edges = Vec::new();
    for a in nodes {
        for b in nodes {
            if a.end < b.start && !nodes.iter().any(|c| a.end < c.start && c.end < b.start) {
                edges.push((*a, *b));
            }
        }
    }
    edges
}

/// Node-to-node edges of `graph` as segment pairs.
pub fn graph_edges(graph: &FilteredGraph) -> Vec<(Segment, Segment)> {
    graph
        .edges()
        .into_iter()
        .filter_map(|(a, b, _)| match (a, b) {
            (Vertex::Node(a), Vertex::Node(b)) => Some((graph.nodes()[a], graph.nodes()[b])),
            _ => None,
        })
        .collect()
}

fn unlabeled_spans(len: usize) -> Vec<(usize, usize)> {
    (1..=len).flat_map(|i| (i..=len).map(move |j| (i, j))).collect()
}

/// Number of unlabeled spans of a length-`len` sequence, by enumeration.
pub fn count_full_nodes(len: usize) -> usize {
    unlabeled_spans(len).len()
}

/// Number of adjacent span pairs `(i, j) → (j + 1, j')`, by enumeration.
pub fn count_full_edges(len: usize) -> usize {
    let spans = unlabeled_spans(len);
    let mut count = 0;
    for a in &spans {
        for b in &spans {
            if a.1 + 1 == b.0 {
                count += 1;
            }
        }
    }
    count
}

/// Score set with every entry drawn from `N(0, 1)`.
pub fn random_scores<R: Rng + ?Sized>(
    rng: &mut R,
    len: usize,
    num_labels: usize,
    max_width: usize,
) -> ScoreSet {
    let shape = Shape::new(len, num_labels, max_width).expect("positive dimensions");
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let emissions = draw(shape.emission_len());
    let local = draw(shape.segment_len());
    let global = draw(shape.segment_len());
    let transitions = draw(shape.transition_len());
    ScoreSet::from_parts(shape, emissions, local, global, transitions).expect("finite scores")
}

/// Up to `max_nodes` distinct random spans over `1..=len`, one label each.
pub fn random_nodes<R: Rng + ?Sized>(
    rng: &mut R,
    len: usize,
    max_width: usize,
    num_labels: usize,
    max_nodes: usize,
) -> Vec<Segment> {
    let mut spans: Vec<(usize, usize)> = (1..=len)
        .flat_map(|i| (i..=(i + max_width - 1).min(len)).map(move |j| (i, j)))
        .collect();
    let count = rng.random_range(0..=max_nodes.min(spans.len()));
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (i, j) = spans.swap_remove(rng.random_range(0..spans.len()));
        out.push(Segment::new(i, j, rng.random_range(0..num_labels)));
    }
    out
}

/// `|a − b| / max(|a|, |b|, 1e-3)`: relative error with a small absolute
/// floor so that near-zero gradients are compared absolutely.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}
