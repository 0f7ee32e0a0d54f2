use super::{zeros, ContextMode, EdgeKeys, EncoderOutput, G2GModel, DEFAULT_THRESHOLD};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{AdjVecSeq, Graph};
use crate::nn::{Binding, Keys};

/// What the decoder consumes as the previous edge bit.
#[derive(Clone, Copy, Debug)]
pub enum Feed<'a> {
    /// Ground-truth bits of the target (teacher forcing).
    Teacher(&'a AdjVecSeq),
    /// The decoder's own thresholded outputs. With a mask, positions where
    /// the mask has no edge are forced to zero.
    Free {
        threshold: f64,
        mask: Option<&'a AdjVecSeq>,
    },
}

/// Result of decoding `nodes` output nodes.
#[derive(Clone, Debug)]
pub struct DecodeOutput {
    /// Flat edge probabilities, row by row (see [`AdjVecSeq::flat_index`]).
    pub probs: Var,
    /// Values of `probs`.
    pub values: Vec<f64>,
    /// Thresholded output padded to the model width. Under free running
    /// these are exactly the bits fed back.
    pub hard: AdjVecSeq,
    pub nodes: usize,
    /// Decoder node states, one per emitted adjacency vector.
    pub node_states: Vec<Var>,
    /// A fixed-attention step ran past the encoder length.
    pub clamped: bool,
}

impl DecodeOutput {
    /// The hard output as a graph on `nodes` nodes.
    pub fn hard_graph(&self, nodes: usize) -> Graph {
        let mut g = Graph::empty(nodes);
        for row in 1..nodes.min(self.nodes) {
            for k in 1..=row {
                if self.hard.get(row, k) == 1 {
                    g.add_edge(row, row - k).expect("decoded edge is in range");
                }
            }
        }
        g
    }
}

impl G2GModel {
    /// Decodes a graph on `nodes` nodes from encoder states.
    pub fn decode(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        enc: &EncoderOutput,
        nodes: usize,
        feed: Feed<'_>,
    ) -> Result<DecodeOutput> {
        let width = self.config.width;
        if nodes > width {
            return Err(Error::WidthExceeded { nodes, width });
        }
        if enc.node_hidden.is_empty() {
            return Err(Error::Config("encoder output has no node states".into()));
        }
        match feed {
            Feed::Teacher(t) if t.width() != width => {
                return Err(Error::Config(format!(
                    "target width {} does not match model width {width}",
                    t.width()
                )))
            }
            Feed::Free { mask: Some(m), .. } if m.width() != width => {
                return Err(Error::Config(format!(
                    "mask width {} does not match model width {width}",
                    m.width()
                )))
            }
            _ => {}
        }
        let steps = nodes.saturating_sub(1);
        let cfg = &self.config;

        // embeddings of the previous edge bit: SOS, 0, 1
        let (emb_w, emb_b) = self.emb_params();
        let emb_one = {
            let w = tape.reshape(bind.var(emb_w), &[cfg.emb_dim])?;
            tape.add(w, bind.var(emb_b))?
        };
        let edge_tokens = [bind.var(self.sos_edge), bind.var(emb_b), emb_one];
        let edge_token_proj = if cfg.edge_context == ContextMode::Off {
            Some(
                edge_tokens
                    .iter()
                    .map(|&e| self.dec_edge.project_input(tape, bind, e))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        let down_proj = [
            {
                let x = tape.constant(Tensor::vector(vec![0.0]));
                self.down.project_input(tape, bind, x)?
            },
            {
                let x = tape.constant(Tensor::vector(vec![1.0]));
                self.down.project_input(tape, bind, x)?
            },
        ];

        let node_keys = match &self.node_attn {
            Some(net) if cfg.node_context == ContextMode::Learned => {
                Some(net.prepare(tape, bind, enc.node_hidden.clone())?)
            }
            _ => None,
        };
        let all_edge_states: Vec<Var> = enc.edge_hidden.iter().flatten().copied().collect();
        let mut edge_keys: Vec<Option<Keys>> = vec![None; enc.edge_hidden.len()];
        let mut all_keys: Option<Keys> = None;

        let mut clamped = false;
        let mut state = enc.final_state;
        let mut prev_bits: Vec<u8> = Vec::new();
        let mut outputs = Vec::with_capacity(steps * (steps + 1) / 2);
        let mut values = Vec::with_capacity(outputs.capacity());
        let mut hard_rows = Vec::with_capacity(steps);
        let mut node_states = Vec::with_capacity(steps);

        for t in 1..=steps {
            let prev = if t == 1 {
                bind.var(self.sos_node)
            } else {
                let mut h = zeros(tape, cfg.down_hidden);
                for &b in &prev_bits {
                    h = self.down.step_projected(tape, bind, down_proj[b as usize], h)?;
                }
                h
            };

            let node_ctx = match cfg.node_context {
                ContextMode::Learned => {
                    let net = self.node_attn.as_ref().expect("learned node attention");
                    let keys = node_keys.as_ref().expect("prepared node keys");
                    Some(net.context(tape, bind, state, keys, t - 1)?.context)
                }
                ContextMode::Fixed => {
                    let last = enc.node_hidden.len() - 1;
                    if t - 1 > last {
                        clamped = true;
                        log::warn!("fixed node attention at step {t} clamped to position {}", last + 1);
                    }
                    Some(enc.node_hidden[(t - 1).min(last)])
                }
                ContextMode::Latent => Some(enc.final_state),
                ContextMode::Off => None,
            };
            let node_in = match node_ctx {
                Some(c) => tape.concat(&[prev, c])?,
                None => prev,
            };
            state = self.dec_node.step(tape, bind, node_in, state)?;
            node_states.push(state);

            let row = (t - 1).min(enc.edge_hidden.len() - 1);
            if row != t - 1 {
                clamped = true;
            }
            let mut edge_state = state;
            let mut bits = Vec::with_capacity(t);
            for k in 1..=t {
                let token = if k == 1 { 0 } else { 1 + bits[k - 2] as usize };
                let edge_ctx = match cfg.edge_context {
                    ContextMode::Off | ContextMode::Latent => None,
                    ContextMode::Fixed => {
                        let states = &enc.edge_hidden[row];
                        Some(match cfg.edge_keys {
                            EdgeKeys::Row => states[(k - 1).min(states.len() - 1)],
                            EdgeKeys::All => {
                                let idx = AdjVecSeq::flat_index(row + 1, k.min(row + 1));
                                all_edge_states[idx]
                            }
                        })
                    }
                    ContextMode::Learned => {
                        let net = self.edge_attn.as_ref().expect("learned edge attention");
                        let keys = match cfg.edge_keys {
                            EdgeKeys::Row => {
                                if edge_keys[row].is_none() {
                                    edge_keys[row] = Some(net.prepare(tape, bind, enc.edge_hidden[row].clone())?);
                                }
                                edge_keys[row].as_ref().unwrap()
                            }
                            EdgeKeys::All => {
                                if all_keys.is_none() {
                                    all_keys = Some(net.prepare(tape, bind, all_edge_states.clone())?);
                                }
                                all_keys.as_ref().unwrap()
                            }
                        };
                        Some(net.context(tape, bind, edge_state, keys, k - 1)?.context)
                    }
                };
                let xw = match (&edge_token_proj, edge_ctx) {
                    (Some(proj), _) => proj[token],
                    (None, Some(c)) => {
                        let x = tape.concat(&[edge_tokens[token], c])?;
                        self.dec_edge.project_input(tape, bind, x)?
                    }
                    (None, None) => self.dec_edge.project_input(tape, bind, edge_tokens[token])?,
                };
                edge_state = self.dec_edge.step_projected(tape, bind, xw, edge_state)?;
                let o = self.head.forward(tape, bind, edge_state)?;
                let p = tape.value(o).item();
                let bit = match feed {
                    Feed::Teacher(target) => target.get(t, k),
                    Feed::Free { threshold, mask } => {
                        let allowed = mask.is_none_or(|m| m.get(t, k) == 1);
                        (allowed && p > threshold) as u8
                    }
                };
                bits.push(bit);
                outputs.push(o);
                values.push(p);
            }
            prev_bits.clone_from(&bits);
            hard_rows.push(match feed {
                Feed::Teacher(_) => row_threshold(&values[values.len() - t..], DEFAULT_THRESHOLD),
                Feed::Free { .. } => bits,
            });
        }

        let probs = if outputs.is_empty() {
            tape.constant(Tensor::vector(Vec::new()))
        } else {
            tape.concat(&outputs)?
        };
        Ok(DecodeOutput {
            probs,
            values,
            hard: AdjVecSeq::from_vectors(hard_rows, width)?,
            nodes,
            node_states,
            clamped,
        })
    }

    /// Teacher-forced decoding of `target` restricted to its first `nodes`
    /// nodes.
    pub fn decode_teacher_forced(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        enc: &EncoderOutput,
        target: &AdjVecSeq,
        nodes: usize,
    ) -> Result<DecodeOutput> {
        self.decode(tape, bind, enc, nodes, Feed::Teacher(target))
    }

    /// Free-running decoding of `nodes` nodes.
    pub fn generate(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        enc: &EncoderOutput,
        nodes: usize,
        threshold: f64,
        mask: Option<&AdjVecSeq>,
    ) -> Result<DecodeOutput> {
        self.decode(tape, bind, enc, nodes, Feed::Free { threshold, mask })
    }
}

fn row_threshold(values: &[f64], threshold: f64) -> Vec<u8> {
    values.iter().map(|&p| (p > threshold) as u8).collect()
}
