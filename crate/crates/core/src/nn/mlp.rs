use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Binding, ParamId, ParamStore};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

/// Fully connected stack. Works on a single vector `[in]` or a batch of rows
/// `[batch, in]`.
#[derive(Clone, Debug)]
pub struct MlpHead {
    dims: Vec<usize>,
    layers: Vec<(ParamId, ParamId)>,
    hidden: Activation,
    output: Activation,
}

impl MlpHead {
    /// `dims` lists every layer width including input and output.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output widths");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let weight = store.add_uniform(format!("{name}.{k}.w"), &[w[0], w[1]], w[0], rng);
                let bias = store.add_uniform(format!("{name}.{k}.b"), &[w[1]], w[0], rng);
                (weight, bias)
            })
            .collect();
        MlpHead {
            dims: dims.to_vec(),
            layers,
            hidden,
            output,
        }
    }

    /// Edge-probability head: tanh hidden layers, sigmoid output.
    pub fn sigmoid_head<R: Rng>(store: &mut ParamStore, name: &str, dims: &[usize], rng: &mut R) -> Self {
        Self::new(store, name, dims, Activation::Tanh, Activation::Sigmoid, rng)
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Id of the final bias vector.
    pub fn output_bias(&self) -> ParamId {
        self.layers.last().unwrap().1
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, x: Var) -> Result<Var> {
        if tape.value(x).last_dim() != self.input_dim() {
            return Err(Error::Config(format!(
                "MLP input has shape {:?}, expected trailing size {}",
                tape.value(x).shape(),
                self.input_dim()
            )));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (k, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.matmul(h, bind.var(w))?;
            h = tape.add_row(h, bind.var(b))?;
            let act = if k == last { self.output } else { self.hidden };
            h = act.apply(tape, h)?;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::nn::params::param_grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_head_gives_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let head = MlpHead::sigmoid_head(&mut store, "h", &[3, 5, 1], &mut rng);
        for t in store.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, false);
        let x = tape.constant(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let y = head.forward(&mut tape, &bind, x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5]);
    }

    #[test]
    fn saturated_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let head = MlpHead::sigmoid_head(&mut store, "h", &[3, 5, 1], &mut rng);
        for t in store.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        store.get_mut(head.output_bias()).data_mut()[0] = 20.0;
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, false);
        let x = tape.constant(Tensor::vector(vec![0.2, 0.1, -0.4]));
        let y = head.forward(&mut tape, &bind, x).unwrap();
        let p = tape.value(y).item();
        assert!((1.0 - p).abs() < 1e-8);
        assert!(p < 1.0);
    }

    #[test]
    fn batch_rows_match_single_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let head = MlpHead::new(&mut store, "h", &[2, 4, 3], Activation::Relu, Activation::Identity, &mut rng);
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, false);
        let rows = [vec![0.3, -0.1], vec![1.5, 0.7]];
        let batch = tape.constant(Tensor::matrix(2, 2, rows.concat()).unwrap());
        let out = head.forward(&mut tape, &bind, batch).unwrap();
        let out = tape.value(out).data().to_vec();
        for (r, row) in rows.iter().enumerate() {
            let x = tape.constant(Tensor::vector(row.clone()));
            let y = head.forward(&mut tape, &bind, x).unwrap();
            assert_eq!(tape.value(y).data(), &out[r * 3..r * 3 + 3]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let head = MlpHead::sigmoid_head(&mut store, "h", &[3, 1], &mut rng);
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, false);
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        assert!(head.forward(&mut tape, &bind, x).is_err());
    }

    #[test]
    fn head_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let head = MlpHead::sigmoid_head(&mut store, "h", &[4, 6, 1], &mut rng);
        let x0 = Tensor::vector(vec![0.3, -0.8, 0.5, 1.1]);
        let f = |tape: &mut Tape, bind: &Binding| {
            let x = tape.constant(x0.clone());
            let y = head.forward(tape, bind, x)?;
            let l = tape.log(y)?;
            tape.sum(l)
        };
        for (name, err) in param_grad_check(&store, f, 1e-5).unwrap() {
            assert!(err < 1e-4, "{name}: {err}");
        }
    }
}
