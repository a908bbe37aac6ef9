use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segchain::features::{score_level_loss, total_loss, train, Featurizer, Objective, TrainConfig, TrainExample};
use segchain::filtered::{apply_training_constraints, build_graph, filter_segments, GoldPath};
use segchain::oracle::enumerate_paths;
use segchain::{EntitySet, LabelSet, ScoreSet, Segment};

fn labels() -> LabelSet {
    LabelSet::with_null("O", ["LOC", "PER"]).unwrap()
}

fn gold(items: &[(usize, usize, usize)]) -> EntitySet {
    EntitySet::new(items.iter().map(|&(i, j, y)| Segment::new(i, j, y)).collect()).unwrap()
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        dim: 8,
        max_width: 3,
        batch_size: 1,
        epochs,
        ..TrainConfig::default()
    }
}

#[test]
fn single_sentence_is_memorised() {
    let ex = TrainExample {
        tokens: vec![0, 1, 2, 3, 4, 5],
        gold: gold(&[(1, 2, 2), (5, 6, 1)]),
    };
    let out = train(&[ex], 6, &labels(), &cfg(200)).unwrap();
    assert_eq!(out.log.len(), 200);
    let first = out.log[0].loss;
    let last = out.log.last().unwrap().loss;
    assert!(last < 0.1 * first, "{first} -> {last}");
}

#[test]
fn entity_free_corpus_empties_the_graph() {
    let examples: Vec<TrainExample> = (0..8)
        .map(|k| TrainExample {
            tokens: (0..6).map(|t| (t + k) % 10).collect(),
            gold: EntitySet::empty(),
        })
        .collect();
    let out = train(&examples, 10, &labels(), &TrainConfig { batch_size: 4, ..cfg(30) }).unwrap();
    assert!(out.log[0].graph_nodes > 0.0);
    assert_eq!(out.log.last().unwrap().graph_nodes, 0.0);
    assert_eq!(out.log.last().unwrap().graph_edges, 1.0);
}

#[test]
fn seeded_runs_are_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let examples: Vec<TrainExample> = (0..20)
        .map(|_| TrainExample {
            tokens: (0..8).map(|_| rng.random_range(0..12)).collect(),
            gold: gold(&[(2, 3, 1)]),
        })
        .collect();
    let c = TrainConfig { batch_size: 4, ..cfg(3) };
    let a = train(&examples, 12, &labels(), &c).unwrap();
    let b = train(&examples, 12, &labels(), &c).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.featurizer.params(), b.featurizer.params());
    let d = train(&examples, 12, &labels(), &TrainConfig { seed: 1, ..c }).unwrap();
    assert_ne!(a.featurizer.params(), d.featurizer.params());
}

#[test]
fn zero_parameters_give_uniform_loss() {
    let l = labels();
    let ny = l.len() as f64;
    let tokens = [0, 1, 2, 3, 4];
    let g = gold(&[(2, 3, 2)]);
    let f = Featurizer::zeros(5, 4, l.len()).unwrap();
    let beta = 0.25;
    let (rep, _) = total_loss(&tokens, &g, &f, &l, 3, beta, Objective::Joint).unwrap();
    // 12 spans of width <= 3 in a length-5 sentence, one of them gold
    let spans = 12.0;
    let local = ny.ln() * (1.0 + beta * (spans - 1.0));
    assert!((rep.local - local).abs() < 1e-12, "{} vs {local}", rep.local);
    // ties resolve to null, so the training graph is the gold chain alone
    assert!(rep.global.abs() < 1e-12);
}

#[test]
fn flat_global_scores_give_log_path_count() {
    // arbitrary local scores decide the nodes; with every global and
    // transition score at zero each path scores zero
    let l = labels();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let len = rng.random_range(3..=7);
        let mut sc = ScoreSet::zeros(len, l.len(), 3).unwrap();
        for (i, j) in sc.shape().spans() {
            for y in 0..l.len() {
                sc.set_local(i, j, y, rng.random_range(-2.0..2.0));
            }
        }
        let g = gold(&[(1, 1, 1)]);
        let rep = score_level_loss(&sc, &g, &l, 0.5, Objective::Joint).unwrap();
        let path = GoldPath::from_entities(&g);
        let nodes = apply_training_constraints(&filter_segments(&sc, &l).unwrap(), &path).unwrap();
        let paths = enumerate_paths(&build_graph(&nodes, &sc).unwrap()).unwrap();
        assert!((rep.global - (paths.len() as f64).ln()).abs() < 1e-9);
    }
}

#[test]
fn dominant_gold_has_near_zero_loss() {
    let l = labels();
    let g = gold(&[(1, 2, 2), (4, 4, 1)]);
    let mut sc = ScoreSet::zeros(5, l.len(), 3).unwrap();
    for (i, j) in sc.shape().spans() {
        let y = g.iter().find(|e| e.start == i && e.end == j).map_or(0, |e| e.label);
        sc.set_local(i, j, y, 50.0);
        sc.set_global(i, j, y, 50.0);
    }
    let rep = score_level_loss(&sc, &g, &l, 0.25, Objective::Joint).unwrap();
    assert!(rep.loss < 1e-9, "{}", rep.loss);
    assert!(rep.loss >= 0.0);
}

#[test]
fn local_only_objective_skips_the_graph_term() {
    let l = labels();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sc = segchain::oracle::random_scores(&mut rng, 6, l.len(), 3);
    let g = gold(&[(2, 3, 1)]);
    let joint = score_level_loss(&sc, &g, &l, 0.25, Objective::Joint).unwrap();
    let local = score_level_loss(&sc, &g, &l, 0.25, Objective::LocalOnly).unwrap();
    assert_eq!(local.global, 0.0);
    assert_eq!(local.local, joint.local);
    assert_eq!((local.graph_nodes, local.graph_edges), (joint.graph_nodes, joint.graph_edges));
}

#[test]
fn config_errors() {
    assert!(TrainConfig::from_kv("beta = 0").is_err());
    assert!(TrainConfig::from_kv("beta = 1.5").is_err());
    assert!(TrainConfig::from_kv("epochs = 0").is_err());
    assert!(TrainConfig::from_kv("learning_rate = 0.1").is_err());
    assert!(TrainConfig::from_kv("dim 4").is_err());
    let c = TrainConfig::from_kv("beta = 1\nobjective = local\n").unwrap();
    assert_eq!((c.beta, c.objective), (1.0, Objective::LocalOnly));
    assert!(train(&[], 3, &labels(), &TrainConfig::default()).is_err());
}
