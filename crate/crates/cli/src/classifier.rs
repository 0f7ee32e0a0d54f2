//! Softmax MLP on latent vectors.

use anyhow::{ensure, Result};
use graph2graph::autodiff::{Tape, Tensor, Var};
use graph2graph::nn::{Activation, Binding, MlpHead, ParamStore};
use graph2graph::train::{adam_step, AdamState};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const HIDDEN: usize = 64;

/// Two hidden ReLU layers of width 64 and a softmax over classes.
#[derive(Clone, Debug)]
pub struct ClassifierHead {
    store: ParamStore,
    mlp: MlpHead,
    classes: usize,
}

#[derive(Clone, Debug)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 100,
            batch_size: 32,
            lr: 0.003,
            seed: 0,
        }
    }
}

/// Outcome of [`train_classifier`].
#[derive(Clone, Debug)]
pub struct Fitted {
    pub head: ClassifierHead,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub val_accuracy: f64,
}

fn batch_tensor(rows: &[&[f64]]) -> Tensor {
    let dim = rows[0].len();
    let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Tensor::new(vec![rows.len(), dim], data).expect("rows share a width")
}

impl ClassifierHead {
    pub fn new(input_dim: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mlp = MlpHead::new(
            &mut store,
            "clf",
            &[input_dim, HIDDEN, HIDDEN, classes],
            Activation::Relu,
            Activation::Identity,
            &mut rng,
        );
        ClassifierHead { store, mlp, classes }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    fn forward(&self, tape: &mut Tape, bind: &Binding, rows: &[&[f64]]) -> Result<Var> {
        let x = tape.constant(batch_tensor(rows));
        let logits = self.mlp.forward(tape, bind, x)?;
        Ok(tape.softmax(logits)?)
    }

    /// Class probabilities, one row per input.
    pub fn probabilities(&self, rows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let bind = self.store.bind(&mut tape, false);
        let p = self.forward(&mut tape, &bind, rows)?;
        Ok(tape.value(p).data().chunks(self.classes).map(<[f64]>::to_vec).collect())
    }

    pub fn predict(&self, rows: &[&[f64]]) -> Result<Vec<usize>> {
        Ok(self
            .probabilities(rows)?
            .iter()
            .map(|p| {
                // first index of the largest probability
                p.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect())
    }

    pub fn accuracy(&self, rows: &[&[f64]], labels: &[usize]) -> Result<f64> {
        if rows.is_empty() {
            return Ok(0.0);
        }
        let hits = self.predict(rows)?.iter().zip(labels).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / rows.len() as f64)
    }

    /// Mean negative log-likelihood of `labels` on `tape`.
    pub fn loss(&self, tape: &mut Tape, bind: &Binding, rows: &[&[f64]], labels: &[usize]) -> Result<Var> {
        let p = self.forward(tape, bind, rows)?;
        let picks: Vec<usize> = labels.iter().enumerate().map(|(b, &y)| b * self.classes + y).collect();
        let chosen = tape.gather(p, &picks)?;
        let logs = tape.log(chosen)?;
        let total = tape.mean(logs)?;
        Ok(tape.scale(total, -1.0)?)
    }
}

/// Adam training in shuffled mini-batches, keeping the epoch with the best
/// validation accuracy (earliest on ties).
pub fn train_classifier(
    train: (&[&[f64]], &[usize]),
    val: (&[&[f64]], &[usize]),
    classes: usize,
    cfg: &ClassifierConfig,
) -> Result<Fitted> {
    let (xs, ys) = train;
    ensure!(!xs.is_empty(), "no training rows");
    ensure!(xs.len() == ys.len(), "{} rows but {} labels", xs.len(), ys.len());
    ensure!(ys.iter().all(|&y| y < classes), "label outside 0..{classes}");
    let mut head = ClassifierHead::new(xs[0].len(), classes, cfg.seed);
    let mut adam = AdamState::new(head.store.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut best = (head.clone(), 0usize, f64::NEG_INFINITY);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let rows: Vec<&[f64]> = batch.iter().map(|&i| xs[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| ys[i]).collect();
            let mut tape = Tape::new();
            let bind = head.store.bind(&mut tape, true);
            let loss = head.loss(&mut tape, &bind, &rows, &labels)?;
            tape.backward(loss)?;
            let grads = bind.grads(&tape, &head.store);
            adam_step(head.store.tensors_mut(), &grads, &mut adam, cfg.lr)?;
        }
        let acc = head.accuracy(val.0, val.1)?;
        if acc > best.2 {
            best = (head.clone(), epoch, acc);
        }
    }
    Ok(Fitted {
        head: best.0,
        best_epoch: best.1,
        val_accuracy: best.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outputs_are_distributions() {
        let head = ClassifierHead::new(4, 3, 1);
        let rows: Vec<Vec<f64>> = vec![vec![0.1, -0.2, 0.3, 0.9], vec![5.0, 0.0, -1.0, 2.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        for p in head.probabilities(&refs).unwrap() {
            assert_eq!(p.len(), 3);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn separates_two_blobs() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            rows.push(vec![s + 0.01 * i as f64, -s, 0.5 * s]);
            labels.push((i % 2) as usize);
        }
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let cfg = ClassifierConfig {
            epochs: 30,
            ..Default::default()
        };
        let fit = train_classifier((&refs, &labels), (&refs, &labels), 2, &cfg).unwrap();
        assert_eq!(fit.val_accuracy, 1.0);
        assert_eq!(fit.head.accuracy(&refs, &labels).unwrap(), 1.0);
    }
}
