//! Focal loss over a selected set of adjacency positions.
//!
//! For an edge whose predicted probability is `o` and whose target bit is
//! `y`, the probability of the correct outcome is `pt = o` when `y = 1` and
//! `pt = 1 - o` otherwise. The per-edge loss is
//!
//! ```text
//! l = -(1 - pt)^gamma * ln(pt)
//! ```
//!
//! and the graph loss is the plain sum of `l` over the masked positions.
//! With `gamma = 0` this is binary cross-entropy.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::AdjVecSeq;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before the log.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Only positions where the input graph has an edge.
    InputEdgesOnly,
    /// Every position among the graph's nodes.
    AllPairs,
}

/// Flat positions (see [`AdjVecSeq::flat_index`]) included in the loss.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMask {
    mode: MaskMode,
    positions: Vec<usize>,
}

impl EdgeMask {
    /// Positions of rows `1..nodes` that are set in `input`.
    pub fn input_edges(input: &AdjVecSeq, nodes: usize) -> Self {
        let mut positions = Vec::new();
        for row in 1..nodes.min(input.width()) {
            for k in 1..=row {
                if input.get(row, k) == 1 {
                    positions.push(AdjVecSeq::flat_index(row, k));
                }
            }
        }
        EdgeMask {
            mode: MaskMode::InputEdgesOnly,
            positions,
        }
    }

    /// Every position among the first `nodes` nodes.
    pub fn all_pairs(nodes: usize) -> Self {
        let count = nodes * nodes.saturating_sub(1) / 2;
        EdgeMask {
            mode: MaskMode::AllPairs,
            positions: (0..count).collect(),
        }
    }

    pub fn for_mode(mode: MaskMode, input: &AdjVecSeq, nodes: usize) -> Self {
        match mode {
            MaskMode::InputEdgesOnly => Self::input_edges(input, nodes),
            MaskMode::AllPairs => Self::all_pairs(nodes),
        }
    }

    pub fn mode(&self) -> MaskMode {
        self.mode
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocalConfig {
    pub gamma: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        FocalConfig { gamma: 2.0 }
    }
}

impl FocalConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("focal gamma must be >= 0, got {gamma}")));
        }
        Ok(FocalConfig { gamma })
    }
}

/// Loss of one edge given the probability of the correct outcome.
pub fn focal_term(pt: f64, gamma: f64) -> f64 {
    let pt = pt.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(1.0 - pt).powf(gamma) * pt.ln()
}

/// Summed focal loss of flat probabilities `probs` against flat target bits.
pub fn focal_loss(
    tape: &mut Tape,
    probs: Var,
    target: &[u8],
    mask: &EdgeMask,
    cfg: FocalConfig,
) -> Result<Var> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let numel = tape.value(probs).numel();
    if numel != target.len() {
        return Err(Error::Shape {
            op: "focal_loss",
            lhs: tape.value(probs).shape().to_vec(),
            rhs: vec![target.len()],
        });
    }
    let bits: Vec<f64> = mask.positions().iter().map(|&p| target[p] as f64).collect();
    let sign = tape.constant(Tensor::vector(bits.iter().map(|y| 2.0 * y - 1.0).collect()));
    let offset = tape.constant(Tensor::vector(bits.iter().map(|y| 1.0 - y).collect()));

    let p = tape.gather(probs, mask.positions())?;
    let p = tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS)?;
    let pt = tape.mul(p, sign)?;
    let pt = tape.add(pt, offset)?;
    let log_pt = tape.log(pt)?;
    let per_edge = if cfg.gamma == 0.0 {
        log_pt
    } else {
        let miss = tape.one_minus(pt)?;
        let weight = tape.pow(miss, cfg.gamma)?;
        tape.mul(weight, log_pt)?
    };
    let total = tape.sum(per_edge)?;
    tape.scale(total, -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::graph::{to_sequence, Graph};

    /// Independent binary cross-entropy, written without the tape.
    fn bce(probs: &[f64], target: &[u8], positions: &[usize]) -> f64 {
        positions
            .iter()
            .map(|&i| {
                let o = probs[i];
                if target[i] == 1 {
                    -o.ln()
                } else {
                    -(1.0 - o).ln()
                }
            })
            .sum()
    }

    fn eval(probs: &[f64], target: &[u8], mask: &EdgeMask, gamma: f64) -> f64 {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::vector(probs.to_vec()));
        let l = focal_loss(&mut tape, p, target, mask, FocalConfig { gamma }).unwrap();
        tape.value(l).item()
    }

    #[test]
    fn half_probability_gamma_two() {
        let mask = EdgeMask::all_pairs(2);
        let got = eval(&[0.5], &[1], &mask, 2.0);
        let want = 0.25 * std::f64::consts::LN_2;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!((got - 0.17329).abs() < 1e-5);
    }

    #[test]
    fn perfect_prediction_is_free() {
        let mask = EdgeMask::all_pairs(3);
        let l = eval(&[1.0, 0.0, 1.0], &[1, 0, 1], &mask, 2.0);
        assert!(l.abs() < 1e-20);
        assert!(focal_term(1.0, 0.0) < 1e-11);
    }

    #[test]
    fn gamma_zero_is_cross_entropy() {
        let probs = [0.9, 0.2, 0.35, 0.6, 0.01, 0.999];
        let target = [1, 0, 1, 0, 0, 1];
        let mask = EdgeMask::all_pairs(4);
        let got = eval(&probs, &target, &mask, 0.0);
        let want = bce(&probs, &target, mask.positions());
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn input_edge_mask() {
        let g = Graph::from_edges(4, [(1, 0), (3, 1)]).unwrap();
        let seq = to_sequence(&g, 5).unwrap();
        let m = EdgeMask::input_edges(&seq, 4);
        assert_eq!(m.positions(), &[0, AdjVecSeq::flat_index(3, 2)]);
        assert_eq!(EdgeMask::all_pairs(4).len(), 6);
        assert!(EdgeMask::input_edges(&AdjVecSeq::zeros(4), 4).is_empty());
    }

    #[test]
    fn empty_mask_is_an_error() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::vector(vec![0.3]));
        let mask = EdgeMask::input_edges(&AdjVecSeq::zeros(2), 2);
        assert!(matches!(
            focal_loss(&mut tape, p, &[0], &mask, FocalConfig::default()),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn rejects_negative_gamma() {
        assert!(FocalConfig::new(-0.5).is_err());
        assert!(FocalConfig::new(0.0).is_ok());
    }

    #[test]
    fn masked_positions_get_no_gradient() {
        let g = Graph::from_edges(4, [(1, 0), (2, 1), (3, 0)]).unwrap();
        let seq = to_sequence(&g, 4).unwrap();
        let mask = EdgeMask::input_edges(&seq, 4);
        let target = [1u8, 0, 1, 0, 0, 0];
        let mut tape = Tape::new();
        let p = tape.param(Tensor::vector(vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8]));
        let l = focal_loss(&mut tape, p, &target, &mask, FocalConfig::default()).unwrap();
        tape.backward(l).unwrap();
        let grad = tape.grad(p).unwrap().data().to_vec();
        for (i, g) in grad.iter().enumerate() {
            if mask.positions().contains(&i) {
                assert!(*g != 0.0);
            } else {
                assert_eq!(*g, 0.0);
            }
        }
    }

    #[test]
    fn gradient_wrt_logits() {
        let logits = Tensor::vector(vec![0.3, -1.2, 2.0, 0.1, -0.4, 0.8]);
        let target = [1u8, 0, 1, 1, 0, 0];
        let mask = EdgeMask::all_pairs(4);
        for gamma in [0.0, 0.5, 2.0] {
            let f = |tape: &mut Tape, x: Var| {
                let p = tape.sigmoid(x)?;
                focal_loss(tape, p, &target, &mask, FocalConfig { gamma })
            };
            let err = grad_check(f, &logits, 1e-5).unwrap();
            assert!(err < 1e-4, "gamma {gamma}: {err}");
        }
    }
}
