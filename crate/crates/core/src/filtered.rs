//! Filtered semi-Markov CRF.
//!
//! A local classifier keeps, for each span, only its best label and drops
//! spans whose best label is null. The surviving segments become nodes of a
//! DAG: `a → b` is an edge when `b` starts after `a` ends and no other node
//! lies completely between them. Nodes without predecessors hang off a
//! `start` terminal and nodes without successors feed an `end` terminal.
//! Every `start → end` path is a candidate set of entities, scored by
//! summing `φ_global(node) + T[prev, node]` along the path.
//!
//! The graph with no nodes has a single weight-0 `start → end` edge, so the
//! empty entity set is always decodable.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::logspace::LogAccumulator;
use crate::types::{EntitySet, GradientSet, LabelSet, ScoreSet, Segment, Shape};

/// A vertex of a [`FilteredGraph`]: a terminal or a node index in
/// topological order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Vertex {
    Start,
    Node(usize),
    End,
}

/// Entities along a `start → end` path, ascending by start.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GoldPath {
    pub entities: Vec<Segment>,
}

impl GoldPath {
    pub fn new(mut entities: Vec<Segment>) -> Self {
        entities.sort();
        GoldPath { entities }
    }

    pub fn from_entities(set: &EntitySet) -> Self {
        GoldPath {
            entities: set.as_slice().to_vec(),
        }
    }

    pub fn to_entity_set(&self) -> Result<EntitySet> {
        EntitySet::new(self.entities.clone())
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

/// DAG of surviving segments with `start`/`end` terminals.
#[derive(Debug, Clone)]
pub struct FilteredGraph {
    shape: Shape,
    /// Sorted by `(end, start, label)`, which is a topological order.
    nodes: Vec<Segment>,
    node_scores: Vec<f64>,
    transitions: Vec<f64>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    index: HashMap<Segment, usize>,
}

fn topo_key(s: &Segment) -> (usize, usize, usize) {
    (s.end, s.start, s.label)
}

/// Keeps every span whose best local label (lowest index on ties) is not
/// null, labeled with that best label.
pub fn filter_segments(scores: &ScoreSet, labels: &LabelSet) -> Result<Vec<Segment>> {
    let null = labels.require_null()?;
    let ny = scores.num_labels();
    let shape = scores.shape();
    let mut kept = Vec::new();
    for (i, j) in shape.spans() {
        let base = shape.segment_index(i, j, 0);
        let row = &scores.seg_local()[base..base + ny];
        let mut best = 0;
        for y in 1..ny {
            if row[y] > row[best] {
                best = y;
            }
        }
        if best != null {
            kept.push(Segment::new(i, j, best));
        }
    }
    Ok(kept)
}

/// Builds the filtered graph over `nodes`, weighting nodes with
/// `φ_global` from `scores`.
pub fn build_graph(nodes: &[Segment], scores: &ScoreSet) -> Result<FilteredGraph> {
    let shape = scores.shape();
    let mut nodes = nodes.to_vec();
    for s in &nodes {
        shape.check_segment(s)?;
    }
    nodes.sort_by_key(topo_key);
    let mut spans = std::collections::HashSet::with_capacity(nodes.len());
    for s in &nodes {
        if !spans.insert((s.start, s.end)) {
            return Err(Error::DuplicateSpan {
                start: s.start,
                end: s.end,
            });
        }
    }

    let n = shape.len;
    let mut by_start: Vec<Vec<usize>> = vec![Vec::new(); n + 2];
    let mut min_end_from = vec![usize::MAX; n + 2];
    for (k, s) in nodes.iter().enumerate() {
        by_start[s.start].push(k);
        min_end_from[s.start] = min_end_from[s.start].min(s.end);
    }
    // suffix minimum: smallest end among nodes starting at or after p
    for p in (1..=n).rev() {
        min_end_from[p] = min_end_from[p].min(min_end_from[p + 1]);
    }

    let mut preds = vec![Vec::new(); nodes.len()];
    let mut succs = vec![Vec::new(); nodes.len()];
    for (a, s) in nodes.iter().enumerate() {
        // successors start in (s.end, m] where m is the earliest end of any
        // node starting after s.end; anything starting later has a blocker
        let bound = min_end_from[s.end + 1].min(n);
        for start in s.end + 1..=bound {
            for &b in &by_start[start] {
                succs[a].push(b);
                preds[b].push(a);
            }
        }
    }
    for v in &mut succs {
        v.sort_unstable();
    }
    Ok(FilteredGraph::assemble(shape, nodes, scores, preds, succs))
}

impl FilteredGraph {
    fn assemble(
        shape: Shape,
        nodes: Vec<Segment>,
        scores: &ScoreSet,
        preds: Vec<Vec<usize>>,
        succs: Vec<Vec<usize>>,
    ) -> Self {
        let node_scores = nodes
            .iter()
            .map(|s| scores.global(s.start, s.end, s.label))
            .collect();
        let index = nodes.iter().enumerate().map(|(k, s)| (*s, k)).collect();
        FilteredGraph {
            shape,
            nodes,
            node_scores,
            transitions: scores.transitions().to_vec(),
            preds,
            succs,
            index,
        }
    }

    /// The unfiltered semi-Markov lattice: every span of width `≤ K` with
    /// every label, and an edge between each pair of adjacent spans.
    /// Its `start → end` paths are exactly the valid segmentations.
    pub fn semi_markov_lattice(scores: &ScoreSet) -> FilteredGraph {
        let shape = scores.shape();
        let mut nodes: Vec<Segment> = shape
            .spans()
            .flat_map(|(i, j)| (0..shape.num_labels).map(move |y| Segment::new(i, j, y)))
            .collect();
        nodes.sort_by_key(topo_key);
        let mut by_start: Vec<Vec<usize>> = vec![Vec::new(); shape.len + 2];
        for (k, s) in nodes.iter().enumerate() {
            by_start[s.start].push(k);
        }
        let mut preds = vec![Vec::new(); nodes.len()];
        let mut succs = vec![Vec::new(); nodes.len()];
        for (a, s) in nodes.iter().enumerate() {
            for &b in &by_start[s.end + 1] {
                succs[a].push(b);
                preds[b].push(a);
            }
        }
        FilteredGraph::assemble(shape, nodes, scores, preds, succs)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn nodes(&self) -> &[Segment] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_score(&self, n: usize) -> f64 {
        self.node_scores[n]
    }

    pub fn node_index(&self, s: &Segment) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Predecessor nodes of `n`, ascending in topological order.
    pub fn preds(&self, n: usize) -> &[usize] {
        &self.preds[n]
    }

    pub fn succs(&self, n: usize) -> &[usize] {
        &self.succs[n]
    }

    pub fn has_start_edge(&self, n: usize) -> bool {
        self.preds[n].is_empty()
    }

    pub fn has_end_edge(&self, n: usize) -> bool {
        self.succs[n].is_empty()
    }

    /// Every edge as `(from, to, weight)`: start edges first, then node
    /// edges in topological order of the source, then end edges.
    pub fn edges(&self) -> Vec<(Vertex, Vertex, f64)> {
        let mut out = Vec::with_capacity(self.num_edges());
        if self.nodes.is_empty() {
            out.push((Vertex::Start, Vertex::End, 0.0));
            return out;
        }
        for n in 0..self.nodes.len() {
            if self.has_start_edge(n) {
                out.push((Vertex::Start, Vertex::Node(n), self.weight(Vertex::Start, Vertex::Node(n))));
            }
        }
        for a in 0..self.nodes.len() {
            for &b in &self.succs[a] {
                out.push((Vertex::Node(a), Vertex::Node(b), self.weight(Vertex::Node(a), Vertex::Node(b))));
            }
        }
        for n in 0..self.nodes.len() {
            if self.has_end_edge(n) {
                out.push((Vertex::Node(n), Vertex::End, 0.0));
            }
        }
        out
    }

    /// Edge count including terminal edges.
    pub fn num_edges(&self) -> usize {
        if self.nodes.is_empty() {
            return 1;
        }
        let inner: usize = self.succs.iter().map(Vec::len).sum();
        let starts = self.preds.iter().filter(|p| p.is_empty()).count();
        let ends = self.succs.iter().filter(|s| s.is_empty()).count();
        inner + starts + ends
    }

    /// Weight of the edge `from → to`; the caller guarantees the edge exists.
    #[inline]
    pub fn weight(&self, from: Vertex, to: Vertex) -> f64 {
        match (from, to) {
            (_, Vertex::End) => 0.0,
            (Vertex::Start, Vertex::Node(b)) => self.node_scores[b],
            (Vertex::Node(a), Vertex::Node(b)) => {
                let t = self.transitions
                    [self.nodes[a].label * self.shape.num_labels + self.nodes[b].label];
                self.node_scores[b] + t
            }
            _ => unreachable!("no edge into start"),
        }
    }

    fn forward(&self) -> (Vec<f64>, f64) {
        let mut alpha = vec![f64::NEG_INFINITY; self.nodes.len()];
        for n in 0..self.nodes.len() {
            alpha[n] = if self.preds[n].is_empty() {
                self.weight(Vertex::Start, Vertex::Node(n))
            } else {
                let mut acc = LogAccumulator::new();
                for &p in &self.preds[n] {
                    acc.push(alpha[p] + self.weight(Vertex::Node(p), Vertex::Node(n)));
                }
                acc.value()
            };
        }
        if self.nodes.is_empty() {
            return (alpha, 0.0);
        }
        let mut acc = LogAccumulator::new();
        for n in 0..self.nodes.len() {
            if self.succs[n].is_empty() {
                acc.push(alpha[n] + self.weight(Vertex::Node(n), Vertex::End));
            }
        }
        (alpha, acc.value())
    }

    fn backward(&self) -> Vec<f64> {
        let mut beta = vec![0.0; self.nodes.len()];
        for n in (0..self.nodes.len()).rev() {
            if !self.succs[n].is_empty() {
                let mut acc = LogAccumulator::new();
                for &s in &self.succs[n] {
                    acc.push(self.weight(Vertex::Node(n), Vertex::Node(s)) + beta[s]);
                }
                beta[n] = acc.value();
            }
        }
        beta
    }

    /// `log Z`: log-sum of exponentiated scores over all `start → end` paths,
    /// by message passing in topological order.
    pub fn log_partition(&self) -> f64 {
        self.forward().1
    }

    /// Max-sum decoding with backtracking. Ties go to the predecessor that
    /// comes first in topological order.
    pub fn decode(&self) -> (GoldPath, f64) {
        if self.nodes.is_empty() {
            return (GoldPath::default(), 0.0);
        }
        let mut delta = vec![f64::NEG_INFINITY; self.nodes.len()];
        let mut back: Vec<Option<usize>> = vec![None; self.nodes.len()];
        for n in 0..self.nodes.len() {
            if self.preds[n].is_empty() {
                delta[n] = self.weight(Vertex::Start, Vertex::Node(n));
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            let mut arg = self.preds[n][0];
            for &p in &self.preds[n] {
                let cand = delta[p] + self.weight(Vertex::Node(p), Vertex::Node(n));
                if cand > best {
                    best = cand;
                    arg = p;
                }
            }
            delta[n] = best;
            back[n] = Some(arg);
        }
        let mut last = None;
        let mut best = f64::NEG_INFINITY;
        for n in 0..self.nodes.len() {
            if self.succs[n].is_empty() {
                let cand = delta[n] + self.weight(Vertex::Node(n), Vertex::End);
                if last.is_none() || cand > best {
                    best = cand;
                    last = Some(n);
                }
            }
        }
        let mut entities = Vec::new();
        let mut cur = last;
        while let Some(n) = cur {
            entities.push(self.nodes[n]);
            cur = back[n];
        }
        entities.reverse();
        (GoldPath { entities }, best)
    }

    fn path_vertices(&self, path: &GoldPath) -> Result<Vec<usize>> {
        let ids = path
            .entities
            .iter()
            .map(|s| {
                self.node_index(s)
                    .ok_or_else(|| Error::PathNotInGraph(format!("{s} is not a node")))
            })
            .collect::<Result<Vec<_>>>()?;
        match (ids.first(), ids.last()) {
            (None, _) => {
                if !self.nodes.is_empty() {
                    return Err(Error::PathNotInGraph("no start → end edge".into()));
                }
            }
            (Some(&first), Some(&last)) => {
                if !self.has_start_edge(first) {
                    return Err(Error::PathNotInGraph(format!(
                        "no start edge into {}",
                        self.nodes[first]
                    )));
                }
                if !self.has_end_edge(last) {
                    return Err(Error::PathNotInGraph(format!(
                        "no end edge out of {}",
                        self.nodes[last]
                    )));
                }
            }
            _ => unreachable!(),
        }
        for w in ids.windows(2) {
            if self.preds[w[1]].binary_search(&w[0]).is_err() {
                return Err(Error::PathNotInGraph(format!(
                    "no edge {} → {}",
                    self.nodes[w[0]], self.nodes[w[1]]
                )));
            }
        }
        Ok(ids)
    }

    /// Text dump: `node <i> <j> <label> <score>` lines followed by
    /// `edge <from> <to> <weight>` lines, where endpoints are node ids in
    /// listing order or the terminals `start` / `end`.
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        for (s, score) in self.nodes.iter().zip(&self.node_scores) {
            writeln!(out, "node {} {} {} {}", s.start, s.end, s.label, score).unwrap();
        }
        let name = |v: Vertex| match v {
            Vertex::Start => "start".to_string(),
            Vertex::End => "end".to_string(),
            Vertex::Node(n) => n.to_string(),
        };
        for (a, b, w) in self.edges() {
            writeln!(out, "edge {} {} {}", name(a), name(b), w).unwrap();
        }
        out
    }
}

/// Parsed form of [`FilteredGraph::to_dump`].
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDump {
    pub nodes: Vec<(Segment, f64)>,
    pub edges: Vec<(Vertex, Vertex, f64)>,
}

impl GraphDump {
    pub fn parse(text: &str) -> Result<GraphDump> {
        let bad = |line: usize, msg: &str| Error::Parse {
            path: "<graph dump>".into(),
            line,
            msg: msg.to_string(),
        };
        let mut dump = GraphDump {
            nodes: Vec::new(),
            edges: Vec::new(),
        };
        for (k, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [] => {}
                ["node", i, j, l, score] => {
                    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(k + 1, "bad node index"));
                    let score = score.parse::<f64>().map_err(|_| bad(k + 1, "bad score"))?;
                    dump.nodes.push((Segment::new(num(i)?, num(j)?, num(l)?), score));
                }
                ["edge", a, b, w] => {
                    let vertex = |s: &str| -> Result<Vertex> {
                        match s {
                            "start" => Ok(Vertex::Start),
                            "end" => Ok(Vertex::End),
                            n => n
                                .parse()
                                .map(Vertex::Node)
                                .map_err(|_| bad(k + 1, "bad edge endpoint")),
                        }
                    };
                    let w = w.parse::<f64>().map_err(|_| bad(k + 1, "bad weight"))?;
                    dump.edges.push((vertex(a)?, vertex(b)?, w));
                }
                _ => return Err(bad(k + 1, "expected `node` or `edge` record")),
            }
        }
        Ok(dump)
    }
}

/// Path score: `φ_global(s₁) + Σₖ (φ_global(sₖ) + T[lₖ₋₁, lₖ])`.
pub fn path_score(path: &GoldPath, graph: &FilteredGraph) -> Result<f64> {
    let ids = graph.path_vertices(path)?;
    let Some(&first) = ids.first() else {
        return Ok(0.0);
    };
    let mut total = graph.weight(Vertex::Start, Vertex::Node(first));
    for w in ids.windows(2) {
        total += graph.weight(Vertex::Node(w[0]), Vertex::Node(w[1]));
    }
    Ok(total + graph.weight(Vertex::Node(*ids.last().unwrap()), Vertex::End))
}

/// Training-time node set: drops nodes that overlap no gold entity, then adds
/// every gold entity. A node sharing a span with a gold entity is replaced by
/// the gold-labeled one.
pub fn apply_training_constraints(nodes: &[Segment], gold: &GoldPath) -> Result<Vec<Segment>> {
    let mut sorted = gold.entities.clone();
    sorted.sort();
    for w in sorted.windows(2) {
        if w[0].overlaps(&w[1]) {
            return Err(Error::Overlap(w[0].start, w[0].end, w[1].start, w[1].end));
        }
    }
    let mut out: Vec<Segment> = nodes
        .iter()
        .copied()
        .filter(|s| sorted.iter().any(|g| g.overlaps(s)) && !sorted.iter().any(|g| g.same_span(s)))
        .collect();
    out.extend_from_slice(&sorted);
    out.sort();
    out.dedup();
    Ok(out)
}

/// `log Z − S(gold)` on the graph and its gradient with respect to
/// `seg_global` (node marginals minus gold indicators) and `transitions`.
pub fn global_nll_and_grad(gold: &GoldPath, graph: &FilteredGraph) -> Result<(f64, GradientSet)> {
    let gold_ids = graph.path_vertices(gold)?;
    let gold_score = path_score(gold, graph)?;
    let (alpha, log_z) = graph.forward();
    let beta = graph.backward();
    let shape = graph.shape;
    let ny = shape.num_labels;
    let mut grad = GradientSet::zeros(shape);
    for (n, s) in graph.nodes.iter().enumerate() {
        let p = (alpha[n] + beta[n] - log_z).exp();
        grad.seg_global[shape.segment_index(s.start, s.end, s.label)] += p;
        for &from in &graph.preds[n] {
            let q = (alpha[from] + graph.weight(Vertex::Node(from), Vertex::Node(n)) + beta[n] - log_z)
                .exp();
            grad.transitions[graph.nodes[from].label * ny + s.label] += q;
        }
    }
    for (k, &n) in gold_ids.iter().enumerate() {
        let s = graph.nodes[n];
        grad.seg_global[shape.segment_index(s.start, s.end, s.label)] -= 1.0;
        if k > 0 {
            grad.transitions[graph.nodes[gold_ids[k - 1]].label * ny + s.label] -= 1.0;
        }
    }
    Ok((log_z - gold_score, grad))
}
