use super::{zeros, EncoderMode, G2GModel};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::AdjVecSeq;
use crate::nn::Binding;

/// Encoder states recorded on a tape.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// `edge_hidden[t][k]`: edge-level state after reading entry `k + 1` of
    /// the vector for node `t + 1`.
    pub edge_hidden: Vec<Vec<Var>>,
    /// One state per adjacency vector: forward ∥ reverse, or forward only.
    pub node_hidden: Vec<Var>,
    /// The last entry of `node_hidden`; initial decoder node state.
    pub final_state: Var,
}

impl EncoderOutput {
    pub fn positions(&self) -> usize {
        self.node_hidden.len()
    }

    /// Copies every state off the tape, for comparisons.
    pub fn snapshot(&self, tape: &Tape) -> Vec<Tensor> {
        self.edge_hidden
            .iter()
            .flatten()
            .chain(&self.node_hidden)
            .chain(std::iter::once(&self.final_state))
            .map(|&v| tape.value(v).clone())
            .collect()
    }
}

impl G2GModel {
    /// Encodes a padded sequence.
    ///
    /// Each vector is read entry by entry by the edge GRU; the final edge
    /// state of vector `t` is the node-level input at position `t`. In
    /// bidirectional mode the state at position `t` is the forward state
    /// after `t` inputs joined with the reverse state that has just read
    /// input `t`.
    pub fn encode(&self, tape: &mut Tape, bind: &Binding, seq: &AdjVecSeq) -> Result<EncoderOutput> {
        if seq.width() != self.config.width {
            return Err(Error::Config(format!(
                "sequence width {} does not match model width {}",
                seq.width(),
                self.config.width
            )));
        }
        let bit_inputs = [
            tape.constant(Tensor::vector(vec![0.0])),
            tape.constant(Tensor::vector(vec![1.0])),
        ];
        let proj = [
            self.enc_edge.project_input(tape, bind, bit_inputs[0])?,
            self.enc_edge.project_input(tape, bind, bit_inputs[1])?,
        ];
        let h0 = zeros(tape, self.config.edge_hidden);
        let mut edge_hidden = Vec::with_capacity(seq.vectors().len());
        let mut summaries = Vec::with_capacity(seq.vectors().len());
        for v in seq.vectors() {
            let mut h = h0;
            let mut row = Vec::with_capacity(v.len());
            for &bit in v {
                h = self.enc_edge.step_projected(tape, bind, proj[bit as usize], h)?;
                row.push(h);
            }
            summaries.push(h);
            edge_hidden.push(row);
        }

        let n = summaries.len();
        let node0 = zeros(tape, self.config.node_hidden);
        let fwd_in = self.enc_node_fwd.project_inputs(tape, bind, &summaries)?;
        let mut forward = Vec::with_capacity(n);
        let mut h = node0;
        for &x in &fwd_in {
            h = self.enc_node_fwd.step_projected(tape, bind, x, h)?;
            forward.push(h);
        }

        let node_hidden = match (self.config.encoder, &self.enc_node_rev) {
            (EncoderMode::Bidirectional, Some(rev)) => {
                let rev_in = rev.project_inputs(tape, bind, &summaries)?;
                // reverse[t] is the reverse state right after reading input t
                let mut reverse = vec![node0; n];
                let mut h = node0;
                for t in (0..n).rev() {
                    h = rev.step_projected(tape, bind, rev_in[t], h)?;
                    reverse[t] = h;
                }
                forward
                    .iter()
                    .zip(&reverse)
                    .map(|(&f, &r)| tape.concat(&[f, r]))
                    .collect::<Result<Vec<_>>>()?
            }
            _ => forward,
        };
        let final_state = *node_hidden.last().expect("width >= 2 gives one position");
        Ok(EncoderOutput {
            edge_hidden,
            node_hidden,
            final_state,
        })
    }
}
