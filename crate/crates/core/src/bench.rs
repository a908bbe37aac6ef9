//! Wall-clock comparison of the inference backends.

use std::fmt::Write as _;
use std::time::Instant;

use crate::decode::{decode_scores, filtered_graph, Backend};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::Model;
use crate::types::ScoreSet;

/// Timings and graph size for one sentence under one backend.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub len: usize,
    pub backend: Backend,
    pub nodes: usize,
    pub edges: usize,
    pub score_ms: f64,
    pub decode_ms: f64,
}

pub const CSV_HEADER: &str = "L,backend,nodes,edges,score_ms,decode_ms";

/// Nodes and edges (terminal edges included) of the full semi-Markov
/// lattice. With `unit_null`, null segments wider than one token are
/// excluded.
pub fn lattice_size(len: usize, max_width: usize, num_labels: usize, unit_null: bool) -> (usize, usize) {
    let count = |w: usize| if unit_null && w > 1 { num_labels - 1 } else { num_labels };
    // ending_at[p]: labeled segments ending at p
    let mut ending_at = vec![0usize; len + 1];
    let (mut nodes, mut edges) = (0, 0);
    for j in 1..=len {
        for i in j.saturating_sub(max_width - 1).max(1)..=j {
            let c = count(j - i + 1);
            ending_at[j] += c;
            nodes += c;
            edges += if i == 1 { c } else { ending_at[i - 1] * c };
            if j == len {
                edges += c;
            }
        }
    }
    (nodes, edges)
}

/// Nodes and edges of the linear-chain trellis, terminal edges included.
pub fn trellis_size(len: usize, num_labels: usize) -> (usize, usize) {
    (len * num_labels, (len - 1) * num_labels * num_labels + 2 * num_labels)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn time_ms<T>(f: impl FnOnce() -> T) -> (f64, T) {
    let t = Instant::now();
    let out = f();
    (t.elapsed().as_secs_f64() * 1e3, out)
}

fn graph_size(backend: Backend, scores: &ScoreSet, model: &Model) -> Result<(usize, usize)> {
    let sh = scores.shape();
    Ok(match backend {
        Backend::Crf => trellis_size(sh.len, sh.num_labels),
        Backend::SemiCrf => lattice_size(sh.len, sh.max_width, sh.num_labels, false),
        Backend::SemiCrfUnitNull => lattice_size(sh.len, sh.max_width, sh.num_labels, true),
        Backend::FSemiCrf => {
            let g = filtered_graph(scores, &model.labels)?;
            (g.num_nodes(), g.num_edges())
        }
    })
}

fn bench_sentence(model: &Model, tokens: &[String], backends: &[Backend], reps: usize) -> Result<Vec<BenchRow>> {
    let scores = model.score(tokens)?;
    let mut rows = Vec::with_capacity(backends.len());
    for &backend in backends {
        decode_scores(backend, &scores, &model.labels)?;
        let mut score_times = Vec::with_capacity(reps);
        let mut decode_times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let (ms, s) = time_ms(|| model.score(tokens));
            std::hint::black_box(s?);
            score_times.push(ms);
            let (ms, e) = time_ms(|| decode_scores(backend, &scores, &model.labels));
            std::hint::black_box(e?);
            decode_times.push(ms);
        }
        let (nodes, edges) = graph_size(backend, &scores, model)?;
        rows.push(BenchRow {
            len: tokens.len(),
            backend,
            nodes,
            edges,
            score_ms: median(&mut score_times),
            decode_ms: median(&mut decode_times),
        });
    }
    Ok(rows)
}

/// Times scoring and decoding of every non-empty sentence under every
/// backend. Each measurement is the median of `reps` runs after one
/// untimed warm-up run; `reps = 0` measures nothing. With `threads > 1`
/// sentences are measured concurrently; rows keep sentence order.
pub fn run_bench(
    model: &Model,
    sentences: &[Vec<String>],
    backends: &[Backend],
    reps: usize,
    threads: usize,
) -> Result<Vec<BenchRow>> {
    if reps == 0 {
        return Ok(Vec::new());
    }
    let work: Vec<&Vec<String>> = sentences.iter().filter(|t| !t.is_empty()).collect();
    let per_sentence: Vec<Vec<BenchRow>> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| {
            work.par_iter()
                .map(|t| bench_sentence(model, t, backends, reps))
                .collect::<Result<_>>()
        })?
    } else {
        work.iter()
            .map(|t| bench_sentence(model, t, backends, reps))
            .collect::<Result<_>>()?
    };
    Ok(per_sentence.into_iter().flatten().collect())
}

/// Median over sentences of `decode_ms(a) / decode_ms(b)`, pairing rows by
/// sentence order.
pub fn median_decode_ratio(rows: &[BenchRow], a: Backend, b: Backend) -> Option<f64> {
    let xs: Vec<&BenchRow> = rows.iter().filter(|r| r.backend == a).collect();
    let ys: Vec<&BenchRow> = rows.iter().filter(|r| r.backend == b).collect();
    if xs.is_empty() || xs.len() != ys.len() {
        return None;
    }
    let mut ratios: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| x.decode_ms / y.decode_ms).collect();
    Some(median(&mut ratios))
}

/// Per-sentence rows, then `summary` rows (mean sizes, median times) per
/// backend, then `speedup` rows relative to the semi-Markov CRF.
pub fn to_csv(rows: &[BenchRow], backends: &[Backend]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6}",
            r.len, r.backend, r.nodes, r.edges, r.score_ms, r.decode_ms
        )
        .unwrap();
    }
    if rows.is_empty() {
        return out;
    }
    let stats = |b: Backend| {
        let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.backend == b).collect();
        let n = sel.len() as f64;
        let nodes = sel.iter().map(|r| r.nodes as f64).sum::<f64>() / n;
        let edges = sel.iter().map(|r| r.edges as f64).sum::<f64>() / n;
        let score = median(&mut sel.iter().map(|r| r.score_ms).collect::<Vec<_>>());
        let decode = median(&mut sel.iter().map(|r| r.decode_ms).collect::<Vec<_>>());
        (nodes, edges, score, decode)
    };
    for &b in backends {
        let (n, e, s, d) = stats(b);
        writeln!(out, "summary,{b},{n:.1},{e:.1},{s:.6},{d:.6}").unwrap();
    }
    if backends.contains(&Backend::SemiCrf) {
        let (_, _, s0, d0) = stats(Backend::SemiCrf);
        for &b in backends {
            let (_, _, s, d) = stats(b);
            writeln!(out, "speedup,{b},,,{:.3},{:.3}", s0 / s, d0 / d).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtered::FilteredGraph;
    use crate::oracle::{count_full_edges, count_full_nodes};
    use crate::features::{Featurizer, Vocab};
    use crate::types::LabelSet;

    #[test]
    fn lattice_size_matches_explicit_lattice() {
        for (len, k, y) in [(1, 1, 1), (4, 2, 2), (6, 3, 3), (5, 5, 2)] {
            let sc = ScoreSet::zeros(len, y, k).unwrap();
            let g = FilteredGraph::semi_markov_lattice(&sc);
            assert_eq!(lattice_size(len, k, y, false), (g.num_nodes(), g.num_edges()));
        }
    }

    #[test]
    fn unlimited_width_single_label_counts() {
        for len in 1..12 {
            let (n, e) = lattice_size(len, len, 1, false);
            assert_eq!(n, count_full_nodes(len));
            // plus start edges (len) and end edges (len)
            assert_eq!(e, count_full_edges(len) + 2 * len);
        }
    }

    #[test]
    fn unit_null_lattice_is_smaller() {
        let (a, _) = lattice_size(10, 4, 3, false);
        let (b, _) = lattice_size(10, 4, 3, true);
        assert_eq!(a - b, 9 + 8 + 7);
    }

    #[test]
    fn csv_shape() {
        let labels = LabelSet::with_null("O", ["A"]).unwrap();
        let model = Model::new(labels, Vocab::default(), 3, Featurizer::zeros(0, 2, 2).unwrap()).unwrap();
        let sents = vec![vec!["x".to_string(); 5], vec![], vec!["y".to_string(); 3]];
        assert_eq!(to_csv(&run_bench(&model, &sents, &Backend::ALL, 0, 1).unwrap(), &Backend::ALL), format!("{CSV_HEADER}\n"));
        let rows = run_bench(&model, &sents, &Backend::ALL, 2, 1).unwrap();
        assert_eq!(rows.len(), 8);
        let csv = to_csv(&rows, &Backend::ALL);
        assert_eq!(csv.lines().filter(|l| l.starts_with("summary,")).count(), 4);
        assert_eq!(csv.lines().filter(|l| l.starts_with("speedup,")).count(), 4);
        assert!(median_decode_ratio(&rows, Backend::FSemiCrf, Backend::SemiCrf).is_some());
        // all-zero scores tie at null, so nothing survives filtering
        let f = rows.iter().find(|r| r.backend == Backend::FSemiCrf).unwrap();
        assert_eq!((f.nodes, f.edges), (0, 1));
        let par = run_bench(&model, &sents, &Backend::ALL, 1, 3).unwrap();
        let key = |r: &BenchRow| (r.len, r.backend, r.nodes, r.edges);
        assert_eq!(par.iter().map(key).collect::<Vec<_>>(), rows.iter().map(key).collect::<Vec<_>>());
    }
}
