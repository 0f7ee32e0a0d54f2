//! Teacher-forced training, free-running evaluation and model selection.

mod adam;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, clip_global_norm, AdamState, ADAM_EPS, BETA1, BETA2};

use crate::autodiff::{Tape, Tensor};
use crate::canon::canonical_permutation;
use crate::data::{all_maximum_cliques, Dataset, Split};
use crate::error::{Error, Result};
use crate::graph::{to_sequence, AdjVecSeq, Graph};
use crate::loss::{focal_loss, EdgeMask, FocalConfig, MaskMode};
use crate::metrics::{edge_iou, EpisodeMetrics};
use crate::model::{ContextMode, Feed, G2GModel, ModelConfig, DEFAULT_THRESHOLD};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Predict the maximum clique of the input, a subgraph of it.
    MaxClique,
    /// Reconstruct the input.
    Autoencoder,
}

impl Task {
    /// Loss positions: input edges for subgraph prediction, every pair for
    /// reconstruction.
    pub fn mask_mode(self) -> MaskMode {
        match self {
            Task::MaxClique => MaskMode::InputEdgesOnly,
            Task::Autoencoder => MaskMode::AllPairs,
        }
    }

    pub fn model_config(self, width: usize) -> ModelConfig {
        match self {
            Task::MaxClique => ModelConfig::max_clique(width),
            Task::Autoencoder => ModelConfig::autoencoder(width),
        }
    }
}

/// Context inputs that can be switched off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    NodeAttn,
    EdgeAttn,
}

impl Ablation {
    pub fn apply(self, config: &mut ModelConfig) {
        match self {
            Ablation::NodeAttn => config.node_context = ContextMode::Off,
            Ablation::EdgeAttn => config.edge_context = ContextMode::Off,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub gamma: f64,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    pub task: Task,
    pub threshold: f64,
    pub clip_norm: f64,
    /// Forbid output edges absent from the input during free-running
    /// evaluation. Only meaningful for subgraph tasks.
    pub mask_output: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.003,
            batch_size: 64,
            epochs: 100,
            gamma: 2.0,
            seed: 0,
            task: Task::MaxClique,
            threshold: DEFAULT_THRESHOLD,
            clip_norm: 5.0,
            mask_output: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config(format!("clip norm {} must be positive", self.clip_norm)));
        }
        FocalConfig::new(self.gamma)?;
        Ok(())
    }

    fn output_mask(&self) -> bool {
        self.mask_output && self.task == Task::MaxClique
    }
}

/// A graph pair in canonical labels, ready for the network.
#[derive(Clone, Debug)]
pub struct Example {
    pub nodes: usize,
    pub input: AdjVecSeq,
    pub target: AdjVecSeq,
    pub canonical_input: Graph,
    pub canonical_target: Graph,
    mask: EdgeMask,
    target_bits: Vec<u8>,
}

impl Example {
    /// Relabels `input` and `target` by the input's canonical order.
    pub fn new(input: &Graph, target: &Graph, width: usize, mode: MaskMode) -> Result<Self> {
        let order = canonical_permutation(input);
        let canonical_input = input.reorder(&order)?;
        let canonical_target = target.reorder(&order)?;
        let seq_in = to_sequence(&canonical_input, width)?;
        let seq_out = to_sequence(&canonical_target, width)?;
        let nodes = input.n();
        let len = nodes * nodes.saturating_sub(1) / 2;
        Ok(Example {
            nodes,
            mask: EdgeMask::for_mode(mode, &seq_in, nodes),
            target_bits: seq_out.flatten()[..len].to_vec(),
            input: seq_in,
            target: seq_out,
            canonical_input,
            canonical_target,
        })
    }

    pub fn mask(&self) -> &EdgeMask {
        &self.mask
    }
}

pub fn prepare(ds: &Dataset, indices: &[usize], width: usize, task: Task) -> Result<Vec<Example>> {
    if task == Task::MaxClique && ds.targets.is_none() {
        return Err(Error::Dataset(format!(
            "dataset {} has no targets for the max-clique task",
            ds.name
        )));
    }
    indices
        .iter()
        .map(|&i| Example::new(&ds.graphs[i], ds.target(i), width, task.mask_mode()))
        .collect()
}

/// Teacher-forced focal loss of one example on `tape`, or `None` when its
/// mask is empty.
fn example_loss(
    model: &G2GModel,
    tape: &mut Tape,
    bind: &crate::nn::Binding,
    ex: &Example,
    focal: FocalConfig,
) -> Result<Option<crate::autodiff::Var>> {
    if ex.mask.is_empty() {
        return Ok(None);
    }
    let enc = model.encode(tape, bind, &ex.input)?;
    let out = model.decode(tape, bind, &enc, ex.nodes, Feed::Teacher(&ex.target))?;
    focal_loss(tape, out.probs, &ex.target_bits, &ex.mask, focal).map(Some)
}

/// Metrics of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub train: EpisodeMetrics,
    pub val: Option<EpisodeMetrics>,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss (training
    /// loss without a validation split).
    pub model: G2GModel,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn metric_rows(&self) -> Vec<EpisodeMetrics> {
        self.history
            .iter()
            .flat_map(|r| std::iter::once(r.train.clone()).chain(r.val.clone()))
            .collect()
    }
}

/// Trains a fresh model on the training split of `ds`.
///
/// Every epoch shuffles the training examples, and for each mini-batch
/// averages the gradients of the per-graph summed focal losses, clips them
/// to `clip_norm` and applies one Adam step. Training rows record the mean
/// loss and teacher-forced metrics; validation rows record teacher-forced
/// loss and free-running metrics.
pub fn train(ds: &Dataset, model_config: ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = G2GModel::new(model_config)?;
    train_model(ds, model, cfg)
}

/// [`train`] starting from existing parameters.
pub fn train_model(ds: &Dataset, mut model: G2GModel, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let width = model.width();
    let train_idx = ds.indices(Split::Train)?;
    if train_idx.is_empty() {
        return Err(Error::Dataset("training split is empty".into()));
    }
    let train_set = prepare(ds, train_idx, width, cfg.task)?;
    let val_set = prepare(ds, ds.indices(Split::Val)?, width, cfg.task)?;
    let focal = FocalConfig::new(cfg.gamma)?;

    let mut adam = AdamState::new(model.params().tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut counted = 0usize;
        let mut iou_sum = 0.0;
        let mut exact = 0usize;
        let mut last_norm = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads: Vec<Tensor> = model.params().tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
            let mut used = 0usize;
            for &i in batch {
                let ex = &train_set[i];
                let mut tape = Tape::new();
                let bind = model.params().bind(&mut tape, true);
                let enc = model.encode(&mut tape, &bind, &ex.input)?;
                let out = model.decode(&mut tape, &bind, &enc, ex.nodes, Feed::Teacher(&ex.target))?;
                let hard = out.hard_graph(ex.nodes);
                let iou = edge_iou(&hard, &ex.canonical_target)?;
                iou_sum += iou;
                exact += (hard.edge_set() == ex.canonical_target.edge_set()) as usize;
                if ex.mask.is_empty() {
                    continue;
                }
                let loss = focal_loss(&mut tape, out.probs, &ex.target_bits, &ex.mask, focal)?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!("loss in epoch {epoch}")));
                }
                tape.backward(loss)?;
                for (acc, g) in grads.iter_mut().zip(bind.grads(&tape, model.params())) {
                    acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
                }
                loss_sum += value;
                counted += 1;
                used += 1;
            }
            if used == 0 {
                continue;
            }
            let scale = 1.0 / used as f64;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|x| *x *= scale);
            }
            last_norm = clip_global_norm(&mut grads, cfg.clip_norm);
            adam_step(model.params_mut().tensors_mut(), &grads, &mut adam, cfg.learning_rate)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}: {e}")))?;
        }
        let n = train_set.len() as f64;
        let train_row = EpisodeMetrics {
            epoch,
            split: Split::Train.as_str().into(),
            loss: if counted > 0 { loss_sum / counted as f64 } else { 0.0 },
            accuracy: exact as f64 / n,
            edge_iou: iou_sum / n,
        };
        let val_row = if val_set.is_empty() {
            None
        } else {
            let r = evaluate_examples(&model, &val_set, cfg)?;
            Some(EpisodeMetrics {
                epoch,
                split: Split::Val.as_str().into(),
                ..r.metrics
            })
        };
        let select = val_row.as_ref().map_or(train_row.loss, |v| v.loss);
        log::info!(
            "epoch {epoch}: train loss {:.5} val loss {} val iou {}",
            train_row.loss,
            val_row.as_ref().map_or("-".into(), |v| format!("{:.5}", v.loss)),
            val_row.as_ref().map_or("-".into(), |v| format!("{:.4}", v.edge_iou)),
        );
        if best.as_ref().is_none_or(|(b, _, _)| select < *b) {
            best = Some((select, epoch, model.params().tensors().to_vec()));
        }
        history.push(EpochRecord {
            train: train_row,
            val: val_row,
            grad_norm: last_norm,
        });
    }

    let best_epoch = match best {
        Some((_, epoch, tensors)) => {
            model.params_mut().tensors_mut().clone_from_slice(&tensors);
            epoch
        }
        None => 0,
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
    })
}

/// Result of free-running evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Loss is teacher-forced; accuracy and IoU come from free-running
    /// decoding.
    pub metrics: EpisodeMetrics,
    /// Fraction of outputs equal to some maximum clique of the input (max
    /// clique task only).
    pub any_max_clique_accuracy: Option<f64>,
    /// Free-running outputs in canonical labels.
    pub predictions: Vec<Graph>,
}

/// Evaluates `model` on `split` of `ds`.
pub fn evaluate(model: &G2GModel, ds: &Dataset, split: Split, cfg: &TrainConfig) -> Result<EvalReport> {
    let examples = prepare(ds, ds.indices(split)?, model.width(), cfg.task)?;
    let mut report = evaluate_examples(model, &examples, cfg)?;
    report.metrics.split = split.as_str().into();
    Ok(report)
}

pub fn evaluate_examples(model: &G2GModel, examples: &[Example], cfg: &TrainConfig) -> Result<EvalReport> {
    let focal = FocalConfig::new(cfg.gamma)?;
    let mut loss_sum = 0.0;
    let mut counted = 0usize;
    let mut iou_sum = 0.0;
    let mut exact = 0usize;
    let mut any_mc = 0usize;
    let mut predictions = Vec::with_capacity(examples.len());
    for ex in examples {
        let (mut tape, bind) = model.frozen_tape();
        if let Some(loss) = example_loss(model, &mut tape, &bind, ex, focal)? {
            loss_sum += tape.value(loss).item();
            counted += 1;
        }
        let enc = model.encode(&mut tape, &bind, &ex.input)?;
        let mask = cfg.output_mask().then_some(&ex.input);
        let out = model.generate(&mut tape, &bind, &enc, ex.nodes, cfg.threshold, mask)?;
        let pred = out.hard_graph(ex.nodes);
        iou_sum += edge_iou(&pred, &ex.canonical_target)?;
        exact += (pred.edge_set() == ex.canonical_target.edge_set()) as usize;
        if cfg.task == Task::MaxClique {
            let covered: BTreeSet<usize> = pred.covered_nodes().into_iter().collect();
            let hit = all_maximum_cliques(&ex.canonical_input)?.iter().any(|c| {
                let members: BTreeSet<usize> = c.iter().copied().collect();
                let edges = c.len() * (c.len().saturating_sub(1)) / 2;
                pred.edge_count() == edges && (covered == members || edges == 0)
            });
            any_mc += hit as usize;
        }
        predictions.push(pred);
    }
    let n = examples.len().max(1) as f64;
    Ok(EvalReport {
        metrics: EpisodeMetrics {
            epoch: 0,
            split: String::new(),
            loss: if counted > 0 { loss_sum / counted as f64 } else { 0.0 },
            accuracy: exact as f64 / n,
            edge_iou: iou_sum / n,
        },
        any_max_clique_accuracy: (cfg.task == Task::MaxClique).then(|| any_mc as f64 / n),
        predictions,
    })
}

/// Accuracy and mean IoU of predicting every input unchanged.
pub fn whole_input_baseline(ds: &Dataset, split: Split) -> Result<(f64, f64)> {
    let idx = ds.indices(split)?;
    if idx.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut exact = 0usize;
    let mut iou = 0.0;
    for &i in idx {
        let (g, t) = (&ds.graphs[i], ds.target(i));
        exact += (g.edge_set() == t.edge_set()) as usize;
        iou += edge_iou(g, t)?;
    }
    let n = idx.len() as f64;
    Ok((exact as f64 / n, iou / n))
}
