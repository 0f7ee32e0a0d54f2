//! The graph-to-graph encoder-decoder.
//!
//! Encoding runs an edge-level GRU over the entries of every adjacency
//! vector; its final state summarises the vector and feeds a node-level GRU
//! (bidirectional by default). Decoding is autoregressive at two levels: a
//! node recurrence advances once per output node, consuming a GRU summary
//! of the previously emitted adjacency vector and a node context, and an
//! edge recurrence initialised from the node state emits one edge
//! probability per earlier node, consuming the previous edge bit and an
//! edge context.

mod checkpoint;
mod config;
mod decoder;
mod encoder;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CHECKPOINT_VERSION};
pub use config::{ContextMode, EdgeKeys, EncoderMode, ModelConfig};
pub use decoder::{DecodeOutput, Feed};
pub use encoder::EncoderOutput;

use crate::autodiff::{Tape, Tensor};
use crate::canon::canonical_permutation;
use crate::error::{Error, Result};
use crate::graph::{to_sequence, Graph};
use crate::nn::{AttentionNet, GruCell, MlpHead, ParamId, ParamStore};

/// Default probability above which an edge is kept.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Parameters and layer layout of a graph-to-graph network.
#[derive(Clone, Debug)]
pub struct G2GModel {
    config: ModelConfig,
    store: ParamStore,
    enc_edge: GruCell,
    enc_node_fwd: GruCell,
    enc_node_rev: Option<GruCell>,
    down: GruCell,
    dec_node: GruCell,
    dec_edge: GruCell,
    head: MlpHead,
    node_attn: Option<AttentionNet>,
    edge_attn: Option<AttentionNet>,
    sos_node: ParamId,
    sos_edge: ParamId,
    emb_w: ParamId,
    emb_b: ParamId,
}

impl G2GModel {
    /// Builds a model with seeded uniform initialisation.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let c = &config;
        let state = c.state_dim();

        let enc_edge = GruCell::new(&mut store, "enc_edge", 1, c.edge_hidden, &mut rng);
        let enc_node_fwd = GruCell::new(&mut store, "enc_node_fwd", c.edge_hidden, c.node_hidden, &mut rng);
        let enc_node_rev = match c.encoder {
            EncoderMode::Bidirectional => Some(GruCell::new(
                &mut store,
                "enc_node_rev",
                c.edge_hidden,
                c.node_hidden,
                &mut rng,
            )),
            EncoderMode::ForwardOnly => None,
        };
        let down = GruCell::new(&mut store, "dec_down", 1, c.down_hidden, &mut rng);

        let node_ctx_dim = match c.node_context {
            ContextMode::Off => 0,
            _ => state,
        };
        let edge_ctx_dim = match c.edge_context {
            ContextMode::Off => 0,
            _ => c.edge_hidden,
        };
        let dec_node = GruCell::new(&mut store, "dec_node", c.down_hidden + node_ctx_dim, state, &mut rng);
        let dec_edge = GruCell::new(&mut store, "dec_edge", c.emb_dim + edge_ctx_dim, state, &mut rng);

        let mut dims = vec![state];
        dims.extend(&c.head_hidden);
        dims.push(1);
        let head = MlpHead::sigmoid_head(&mut store, "edge_head", &dims, &mut rng);

        let node_attn = c
            .node_context
            .attention()
            .map(|mode| AttentionNet::new(&mut store, "node_attn", mode, state, state, c.attn_hidden, &mut rng));
        let edge_attn = c.edge_context.attention().map(|mode| {
            AttentionNet::new(&mut store, "edge_attn", mode, state, c.edge_hidden, c.attn_hidden, &mut rng)
        });

        let sos_node = store.add_uniform("sos_node", &[c.down_hidden], c.down_hidden, &mut rng);
        let sos_edge = store.add_uniform("sos_edge", &[c.emb_dim], c.emb_dim, &mut rng);
        let emb_w = store.add_uniform("edge_emb.w", &[1, c.emb_dim], 1, &mut rng);
        let emb_b = store.add_uniform("edge_emb.b", &[c.emb_dim], 1, &mut rng);

        Ok(G2GModel {
            config,
            store,
            enc_edge,
            enc_node_fwd,
            enc_node_rev,
            down,
            dec_node,
            dec_edge,
            head,
            node_attn,
            edge_attn,
            sos_node,
            sos_edge,
            emb_w,
            emb_b,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    /// Id of the edge head's output bias; useful for saturating the head.
    pub fn head_output_bias(&self) -> ParamId {
        self.head.output_bias()
    }

    /// Runs the encoder on `g` and returns its final forward node state, the
    /// graph's latent vector. Requires a forward-only encoder.
    pub fn encode_latent(&self, g: &Graph) -> Result<Vec<f64>> {
        if self.config.encoder != EncoderMode::ForwardOnly {
            return Err(Error::Config("latent vectors need a forward-only (autoencoder) encoder".into()));
        }
        let canon = g.reorder(&canonical_permutation(g))?;
        let seq = to_sequence(&canon, self.width())?;
        let mut tape = Tape::new();
        let bind = self.store.bind(&mut tape, false);
        let enc = self.encode(&mut tape, &bind, &seq)?;
        Ok(tape.value(enc.final_state).data().to_vec())
    }

    /// Canonicalises `input`, encodes it and decodes a graph with the same
    /// node count. With `mask_input` set, edges absent from the input are
    /// never emitted.
    pub fn run_model(&self, input: &Graph, threshold: f64, mask_input: bool) -> Result<Prediction> {
        let order = canonical_permutation(input);
        let canon = input.reorder(&order)?;
        let seq = to_sequence(&canon, self.width())?;
        let mut tape = Tape::new();
        let bind = self.store.bind(&mut tape, false);
        let enc = self.encode(&mut tape, &bind, &seq)?;
        let feed = Feed::Free {
            threshold,
            mask: mask_input.then_some(&seq),
        };
        let out = self.decode(&mut tape, &bind, &enc, input.n(), feed)?;
        Ok(Prediction::from_decode(&out, order, input.n()))
    }

    /// Fresh tape with the parameters bound as constants.
    pub fn frozen_tape(&self) -> (Tape, crate::nn::Binding) {
        let mut tape = Tape::new();
        let bind = self.store.bind(&mut tape, false);
        (tape, bind)
    }

    pub(crate) fn emb_params(&self) -> (ParamId, ParamId) {
        (self.emb_w, self.emb_b)
    }
}

/// Decoded graph mapped back to the input's node labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Thresholded output in input labels.
    pub graph: Graph,
    /// Output in canonical labels.
    pub canonical: Graph,
    /// `order[k]` is the input node placed at canonical position `k`.
    pub order: Vec<usize>,
    /// `(u, v, p)` for every decoded pair, in input labels with `u < v`.
    pub probabilities: Vec<(usize, usize, f64)>,
}

impl Prediction {
    fn from_decode(out: &DecodeOutput, order: Vec<usize>, nodes: usize) -> Self {
        let canonical = out.hard_graph(nodes);
        let mut graph = Graph::empty(nodes);
        for (i, j) in canonical.edges() {
            graph.add_edge(order[i], order[j]).expect("relabelled edge is valid");
        }
        let mut probabilities = Vec::with_capacity(out.values.len());
        for row in 1..nodes {
            for k in 1..=row {
                let p = out.values[crate::graph::AdjVecSeq::flat_index(row, k)];
                let (a, b) = (order[row], order[row - k]);
                probabilities.push((a.min(b), a.max(b), p));
            }
        }
        probabilities.sort_by_key(|x| (x.0, x.1));
        Prediction {
            graph,
            canonical,
            order,
            probabilities,
        }
    }
}

pub(crate) fn zeros(tape: &mut Tape, n: usize) -> crate::autodiff::Var {
    tape.constant(Tensor::zeros(&[n]))
}
