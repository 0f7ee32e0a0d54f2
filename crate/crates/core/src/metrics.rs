//! Exact-match accuracy and edge intersection-over-union.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// `|pred ∩ truth| / |pred ∪ truth|` over edge sets; 1 when both are empty.
pub fn edge_iou(pred: &Graph, truth: &Graph) -> Result<f64> {
    if pred.n() != truth.n() {
        return Err(Error::InvalidGraph(format!(
            "edge IoU needs equal node counts, got {} and {}",
            pred.n(),
            truth.n()
        )));
    }
    let inter = pred.edge_set().intersection(truth.edge_set()).count();
    let union = pred.edge_count() + truth.edge_count() - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Fraction of predictions whose edge set equals the truth's.
pub fn exact_accuracy(preds: &[Graph], truths: &[Graph]) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::Dataset(format!(
            "{} predictions for {} targets",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Ok(0.0);
    }
    let hits = preds
        .iter()
        .zip(truths)
        .filter(|(p, t)| p.edge_set() == t.edge_set())
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

pub fn mean_edge_iou(preds: &[Graph], truths: &[Graph]) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::Dataset(format!(
            "{} predictions for {} targets",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(truths) {
        total += edge_iou(p, t)?;
    }
    Ok(total / preds.len() as f64)
}

/// One row of the training/evaluation record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    pub edge_iou: f64,
}

pub const METRICS_HEADER: &str = "epoch,split,loss,accuracy,edge_iou";

pub fn write_metrics_csv<W: Write>(mut out: W, rows: &[EpisodeMetrics]) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.10},{:.10},{:.10}",
            r.epoch, r.split, r.loss, r.accuracy, r.edge_iou
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_cases() {
        let k4 = Graph::complete(4);
        assert_eq!(edge_iou(&k4, &k4).unwrap(), 1.0);
        let a = Graph::from_edges(4, [(0, 1)]).unwrap();
        let b = Graph::from_edges(4, [(2, 3)]).unwrap();
        assert_eq!(edge_iou(&a, &b).unwrap(), 0.0);
        let k3 = Graph::from_edges(4, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(edge_iou(&k3, &k4).unwrap(), 0.5);
        assert_eq!(edge_iou(&Graph::empty(3), &Graph::empty(3)).unwrap(), 1.0);
        assert!(edge_iou(&Graph::empty(3), &Graph::empty(4)).is_err());
    }

    #[test]
    fn accuracy_counts() {
        let g = |e: &[(usize, usize)]| Graph::from_edges(3, e.iter().copied()).unwrap();
        let truths = vec![g(&[(0, 1)]), g(&[(1, 2)]), g(&[]), g(&[(0, 2)])];
        assert_eq!(exact_accuracy(&truths, &truths).unwrap(), 1.0);
        let mut preds = truths.clone();
        preds[3] = g(&[(0, 1)]);
        assert_eq!(exact_accuracy(&preds, &truths).unwrap(), 0.75);
        let wrong: Vec<Graph> = truths.iter().map(|_| Graph::complete(3)).collect();
        assert_eq!(exact_accuracy(&wrong, &truths).unwrap(), 0.0);
        assert!(exact_accuracy(&preds[..2], &truths).is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = vec![EpisodeMetrics {
            epoch: 3,
            split: "val".into(),
            loss: 0.5,
            accuracy: 0.25,
            edge_iou: 1.0,
        }];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "epoch,split,loss,accuracy,edge_iou\n3,val,0.5000000000,0.2500000000,1.0000000000\n"
        );
    }
}
