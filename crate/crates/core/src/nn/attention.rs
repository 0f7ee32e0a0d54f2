//! Additive attention over a set of encoder states.
//!
//! In learned mode the score of key `h_j` for query `s` is
//! `phi(s, h_j) = v . tanh(Wq s + Wk h_j + b)`, which is a one-hidden-layer
//! network on the concatenation `[s, h_j]`. Weights are the softmax of the
//! scores and the context is the weighted sum of keys. In fixed mode the
//! weight vector is one-hot on the decoder position, so the context is the
//! key at that position.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Binding, ParamId, ParamStore};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    Learned,
    Fixed,
}

#[derive(Clone, Debug)]
struct Compat {
    wq: ParamId,
    wk: ParamId,
    b: ParamId,
    v: ParamId,
}

#[derive(Clone, Debug)]
pub struct AttentionNet {
    mode: AttentionMode,
    query_dim: usize,
    key_dim: usize,
    compat: Option<Compat>,
}

/// Keys prepared once per encoder pass and reused for every query.
#[derive(Clone, Debug)]
pub struct Keys {
    rows: Vec<Var>,
    matrix: Option<Var>,
    projected: Option<Var>,
}

impl Keys {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Var] {
        &self.rows
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    pub context: Var,
    pub weights: Var,
    /// Fixed mode asked for a position past the last key and used the last.
    pub clamped: bool,
}

impl AttentionNet {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        mode: AttentionMode,
        query_dim: usize,
        key_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let compat = match mode {
            AttentionMode::Fixed => None,
            AttentionMode::Learned => {
                let fan_in = query_dim + key_dim;
                Some(Compat {
                    wq: store.add_uniform(format!("{name}.wq"), &[query_dim, hidden], fan_in, rng),
                    wk: store.add_uniform(format!("{name}.wk"), &[key_dim, hidden], fan_in, rng),
                    b: store.add_uniform(format!("{name}.b"), &[hidden], fan_in, rng),
                    v: store.add_uniform(format!("{name}.v"), &[hidden, 1], hidden, rng),
                })
            }
        };
        AttentionNet {
            mode,
            query_dim,
            key_dim,
            compat,
        }
    }

    pub fn mode(&self) -> AttentionMode {
        self.mode
    }

    pub fn key_dim(&self) -> usize {
        self.key_dim
    }

    /// Stacks the keys and, in learned mode, precomputes `Wk h_j + b`.
    pub fn prepare(&self, tape: &mut Tape, bind: &Binding, rows: Vec<Var>) -> Result<Keys> {
        if rows.is_empty() {
            return Err(Error::Config("attention needs at least one key".into()));
        }
        for &r in &rows {
            if tape.value(r).shape() != [self.key_dim] {
                return Err(Error::Config(format!(
                    "attention key has shape {:?}, expected [{}]",
                    tape.value(r).shape(),
                    self.key_dim
                )));
            }
        }
        let (matrix, projected) = match &self.compat {
            None => (None, None),
            Some(c) => {
                let m = tape.stack(&rows)?;
                let p = tape.matmul(m, bind.var(c.wk))?;
                let p = tape.add_row(p, bind.var(c.b))?;
                (Some(m), Some(p))
            }
        };
        Ok(Keys {
            rows,
            matrix,
            projected,
        })
    }

    /// Context vector and attention weights for `query`. `position` (0-based)
    /// selects the key in fixed mode and is ignored otherwise.
    pub fn context(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        query: Var,
        keys: &Keys,
        position: usize,
    ) -> Result<AttentionOutput> {
        match &self.compat {
            None => {
                let n = keys.len();
                let clamped = position >= n;
                let pick = position.min(n - 1);
                if clamped {
                    log::warn!("fixed attention position {position} clamped to last key {}", n - 1);
                }
                let mut onehot = vec![0.0; n];
                onehot[pick] = 1.0;
                let weights = tape.constant(Tensor::vector(onehot));
                Ok(AttentionOutput {
                    context: keys.rows[pick],
                    weights,
                    clamped,
                })
            }
            Some(c) => {
                if tape.value(query).shape() != [self.query_dim] {
                    return Err(Error::Config(format!(
                        "attention query has shape {:?}, expected [{}]",
                        tape.value(query).shape(),
                        self.query_dim
                    )));
                }
                let (matrix, projected) = match (keys.matrix, keys.projected) {
                    (Some(m), Some(p)) => (m, p),
                    _ => return Err(Error::Config("keys were prepared for fixed attention".into())),
                };
                let q = tape.matmul(query, bind.var(c.wq))?;
                let pre = tape.add_row(projected, q)?;
                let act = tape.tanh(pre)?;
                let scores = tape.matmul(act, bind.var(c.v))?;
                let scores = tape.reshape(scores, &[keys.len()])?;
                let weights = tape.softmax(scores)?;
                let context = tape.matmul(weights, matrix)?;
                Ok(AttentionOutput {
                    context,
                    weights,
                    clamped: false,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::param_grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn keys(tape: &mut Tape, rows: &[[f64; 3]]) -> Vec<Var> {
        rows.iter().map(|r| tape.constant(Tensor::vector(r.to_vec()))).collect()
    }

    const ROWS: [[f64; 3]; 4] = [
        [0.1, 0.2, 0.3],
        [-1.0, 0.5, 0.0],
        [0.7, 0.7, -0.2],
        [0.0, -0.4, 1.0],
    ];

    #[test]
    fn constant_scores_average_the_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let net = AttentionNet::new(&mut store, "a", AttentionMode::Learned, 2, 3, 8, &mut rng);
        // zero v makes phi constant
        let v = store.find("a.v").unwrap();
        store.get_mut(v).data_mut().fill(0.0);
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, false);
        let rows = keys(&mut tape, &ROWS);
        let k = net.prepare(&mut tape, &bind, rows).unwrap();
        let q = tape.constant(Tensor::vector(vec![0.3, -0.9]));
        let out = net.context(&mut tape, &bind, q, &k, 0).unwrap();
        for (d, c) in tape.value(out.context).data().iter().enumerate() {
            let mean = ROWS.iter().map(|r| r[d]).sum::<f64>() / 4.0;
            assert!((c - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn fixed_mode_selects_position() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let net = AttentionNet::new(&mut store, "a", AttentionMode::Fixed, 2, 3, 8, &mut rng);
        assert!(store.is_empty());
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, false);
        let rows = keys(&mut tape, &ROWS);
        let k = net.prepare(&mut tape, &bind, rows).unwrap();
        let q = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        // second key, i = 2 in 1-based terms
        let out = net.context(&mut tape, &bind, q, &k, 1).unwrap();
        assert_eq!(tape.value(out.context).data(), &ROWS[1]);
        assert_eq!(tape.value(out.weights).data(), &[0.0, 1.0, 0.0, 0.0]);
        assert!(!out.clamped);
        let past = net.context(&mut tape, &bind, q, &k, 9).unwrap();
        assert!(past.clamped);
        assert_eq!(tape.value(past.context).data(), &ROWS[3]);
    }

    #[test]
    fn single_key_is_returned() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let net = AttentionNet::new(&mut store, "a", AttentionMode::Learned, 2, 3, 8, &mut rng);
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, false);
        let rows = keys(&mut tape, &ROWS[2..3]);
        let k = net.prepare(&mut tape, &bind, rows).unwrap();
        let q = tape.constant(Tensor::vector(vec![4.0, -3.0]));
        let out = net.context(&mut tape, &bind, q, &k, 0).unwrap();
        assert_eq!(tape.value(out.context).data(), &ROWS[2]);
    }

    #[test]
    fn empty_keys_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let net = AttentionNet::new(&mut store, "a", AttentionMode::Learned, 2, 3, 8, &mut rng);
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, false);
        assert!(net.prepare(&mut tape, &bind, vec![]).is_err());
    }

    #[test]
    fn context_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let net = AttentionNet::new(&mut store, "a", AttentionMode::Learned, 2, 3, 5, &mut rng);
        let f = |tape: &mut Tape, bind: &Binding| {
            let rows = keys(tape, &ROWS);
            let k = net.prepare(tape, bind, rows)?;
            let q = tape.constant(Tensor::vector(vec![0.6, -0.2]));
            let out = net.context(tape, bind, q, &k, 0)?;
            let sq = tape.mul(out.context, out.context)?;
            tape.sum(sq)
        };
        for (name, err) in param_grad_check(&store, f, 1e-5).unwrap() {
            assert!(err < 1e-4, "{name}: {err}");
        }
    }
}
