use graph2graph::data::{gen_planted_clique, max_clique_oracle, Dataset, Split};
use graph2graph::model::{load_checkpoint, save_checkpoint, Feed, ModelConfig};
use graph2graph::train::{evaluate, prepare, train, whole_input_baseline, Task, TrainConfig};
use graph2graph::{Error, Graph};

fn single_pair() -> Dataset {
    // a triangle with a tail and a chord-free extra node
    let g = Graph::from_edges(5, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4)]).unwrap();
    let t = max_clique_oracle(&g).unwrap();
    let mut ds = Dataset::new("one", vec![g]).with_targets(vec![t]).unwrap();
    ds.split([1.0, 0.0, 0.0], 0).unwrap();
    ds
}

fn small_corpus(count: usize, seed: u64) -> Dataset {
    let mut ds = gen_planted_clique(count, (6, 9), (3, 5), 0.15, seed).unwrap();
    ds.split([0.6, 0.2, 0.2], seed).unwrap();
    ds
}

#[test]
fn memorises_a_single_pair() {
    let ds = single_pair();
    let cfg = TrainConfig {
        epochs: 500,
        batch_size: 1,
        ..Default::default()
    };
    let out = train(&ds, ModelConfig::max_clique(5), &cfg).unwrap();
    let best = &out.history[out.best_epoch - 1].train;
    assert!(best.loss < 1e-2, "loss {}", best.loss);
    let report = evaluate(&out.model, &ds, Split::Train, &cfg).unwrap();
    assert_eq!(report.metrics.accuracy, 1.0);
    assert_eq!(report.metrics.edge_iou, 1.0);
    assert_eq!(report.any_max_clique_accuracy, Some(1.0));
}

#[test]
fn memorised_reconstruction_decodes_the_same_with_or_without_teacher() {
    let mut ds = single_pair();
    ds.targets = None;
    let cfg = TrainConfig {
        task: Task::Autoencoder,
        epochs: 500,
        batch_size: 1,
        ..Default::default()
    };
    let out = train(&ds, ModelConfig::autoencoder(5), &cfg).unwrap();
    let best = &out.history[out.best_epoch - 1].train;
    assert!(best.loss < 1e-3, "loss {}", best.loss);

    let ex = &prepare(&ds, &[0], 5, Task::Autoencoder).unwrap()[0];
    let model = &out.model;
    let (mut tape, bind) = model.frozen_tape();
    let enc = model.encode(&mut tape, &bind, &ex.input).unwrap();
    let teacher = model.decode(&mut tape, &bind, &enc, 5, Feed::Teacher(&ex.target)).unwrap();
    let free = model.generate(&mut tape, &bind, &enc, 5, 0.5, None).unwrap();
    assert_eq!(teacher.hard, free.hard);
    assert_eq!(free.hard_graph(5), ex.canonical_target);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let ds = small_corpus(20, 3);
    let cfg = TrainConfig {
        epochs: 3,
        learning_rate: 0.0,
        batch_size: 4,
        ..Default::default()
    };
    let config = ModelConfig::max_clique(9);
    let out = train(&ds, config.clone(), &cfg).unwrap();
    let fresh = graph2graph::model::G2GModel::new(config).unwrap();
    assert_eq!(out.model.params().tensors(), fresh.params().tensors());
    assert_eq!(out.history.len(), 3);
    assert_eq!(out.metric_rows().len(), 6);
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let ds = small_corpus(100, 8);
    let cfg = TrainConfig {
        epochs: 10,
        ..Default::default()
    };
    let a = train(&ds, ModelConfig::max_clique(9), &cfg).unwrap();
    let b = train(&ds, ModelConfig::max_clique(9), &cfg).unwrap();
    assert_eq!(a.model.params().tensors(), b.model.params().tensors());
    assert_eq!(a.history, b.history);
    assert!(a.history[9].train.loss < a.history[0].train.loss);
}

#[test]
fn checkpoint_reproduces_evaluation() {
    let ds = small_corpus(30, 4);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        ..Default::default()
    };
    let out = train(&ds, ModelConfig::max_clique(9), &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mc.ckpt");
    save_checkpoint(&out.model, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    let a = evaluate(&out.model, &ds, Split::Test, &cfg).unwrap();
    let b = evaluate(&back, &ds, Split::Test, &cfg).unwrap();
    assert_eq!(a, b);
    for v in [a.metrics.accuracy, a.metrics.edge_iou] {
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn empty_training_split_is_an_error() {
    let mut ds = small_corpus(5, 1);
    ds.split([0.0, 0.0, 1.0], 1).unwrap();
    let err = train(&ds, ModelConfig::max_clique(9), &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Dataset(_)));
}

#[test]
fn max_clique_needs_targets() {
    let mut ds = Dataset::new("bare", vec![Graph::complete(4)]);
    ds.split([1.0, 0.0, 0.0], 0).unwrap();
    assert!(train(&ds, ModelConfig::max_clique(4), &TrainConfig::default()).is_err());
    let ae = TrainConfig {
        task: Task::Autoencoder,
        epochs: 1,
        ..Default::default()
    };
    assert!(train(&ds, ModelConfig::autoencoder(4), &ae).is_ok());
}

#[test]
fn latents_separate_path_and_complete_graph_after_training() {
    let mut ds = Dataset::new("pk", vec![Graph::path(4), Graph::complete(4)]);
    ds.split([1.0, 0.0, 0.0], 0).unwrap();
    let cfg = TrainConfig {
        task: Task::Autoencoder,
        epochs: 1,
        ..Default::default()
    };
    let out = train(&ds, ModelConfig::autoencoder(4), &cfg).unwrap();
    let p4 = out.model.encode_latent(&Graph::path(4)).unwrap();
    let k4 = out.model.encode_latent(&Graph::complete(4)).unwrap();
    assert_ne!(p4, k4);
}

#[test]
fn baseline_of_whole_input() {
    let g = Graph::from_edges(4, [(0, 1), (1, 2), (0, 2), (2, 3)]).unwrap();
    let k3 = Graph::complete(3);
    let mut ds = Dataset::new("b", vec![g.clone(), k3.clone()])
        .with_oracle_targets()
        .unwrap();
    ds.split([0.0, 0.0, 1.0], 0).unwrap();
    let (acc, iou) = whole_input_baseline(&ds, Split::Test).unwrap();
    assert_eq!(acc, 0.5);
    assert!((iou - (0.75 + 1.0) / 2.0).abs() < 1e-15);
}
