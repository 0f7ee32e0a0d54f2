use rand::Rng;

use super::params::{Binding, ParamId, ParamStore};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Gated recurrent unit with reset applied before the candidate projection:
///
/// ```text
/// z  = sigmoid(x Wz + h Uz + bz)
/// r  = sigmoid(x Wr + h Ur + br)
/// h~ = tanh(x Wh + (r * h) Uh + bh)
/// h' = (1 - z) * h + z * h~
/// ```
///
/// The three input projections share one `[input, 3 * hidden]` matrix laid
/// out as `[z | r | h~]`.
#[derive(Clone, Debug)]
pub struct GruCell {
    input_dim: usize,
    hidden_dim: usize,
    w: ParamId,
    u_zr: ParamId,
    u_h: ParamId,
    b: ParamId,
}

impl GruCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let h = hidden_dim;
        let w = store.add_uniform(format!("{name}.w"), &[input_dim, 3 * h], h, rng);
        let u_zr = store.add_uniform(format!("{name}.u_zr"), &[h, 2 * h], h, rng);
        let u_h = store.add_uniform(format!("{name}.u_h"), &[h, h], h, rng);
        let b = store.add_uniform(format!("{name}.b"), &[3 * h], h, rng);
        GruCell {
            input_dim,
            hidden_dim,
            w,
            u_zr,
            u_h,
            b,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// `x Wx + b` for one input vector, `[3 * hidden]`.
    pub fn project_input(&self, tape: &mut Tape, bind: &Binding, x: Var) -> Result<Var> {
        if tape.value(x).shape() != [self.input_dim] {
            return Err(self.dim_error("input", tape.value(x).shape()));
        }
        let xw = tape.matmul(x, bind.var(self.w))?;
        tape.add(xw, bind.var(self.b))
    }

    /// Input projections for a whole sequence at once, returned per step.
    pub fn project_inputs(&self, tape: &mut Tape, bind: &Binding, xs: &[Var]) -> Result<Vec<Var>> {
        if xs.len() < 2 {
            return xs.iter().map(|&x| self.project_input(tape, bind, x)).collect();
        }
        let m = tape.stack(xs)?;
        if tape.value(m).shape()[1] != self.input_dim {
            return Err(self.dim_error("input", tape.value(m).shape()));
        }
        let xw = tape.matmul(m, bind.var(self.w))?;
        let xw = tape.add_row(xw, bind.var(self.b))?;
        let width = 3 * self.hidden_dim;
        let flat = tape.reshape(xw, &[xs.len() * width])?;
        (0..xs.len()).map(|t| tape.slice(flat, t * width, width)).collect()
    }

    pub fn step(&self, tape: &mut Tape, bind: &Binding, x: Var, h: Var) -> Result<Var> {
        let xw = self.project_input(tape, bind, x)?;
        self.step_projected(tape, bind, xw, h)
    }

    /// One transition given the precomputed input projection `x Wx + b`.
    pub fn step_projected(&self, tape: &mut Tape, bind: &Binding, xw: Var, h: Var) -> Result<Var> {
        let n = self.hidden_dim;
        if tape.value(h).shape() != [n] {
            return Err(self.dim_error("hidden", tape.value(h).shape()));
        }
        let hu = tape.matmul(h, bind.var(self.u_zr))?;
        let x_zr = tape.slice(xw, 0, 2 * n)?;
        let zr = tape.add(x_zr, hu)?;
        let zr = tape.sigmoid(zr)?;
        let z = tape.slice(zr, 0, n)?;
        let r = tape.slice(zr, n, n)?;
        let rh = tape.mul(r, h)?;
        let ru = tape.matmul(rh, bind.var(self.u_h))?;
        let x_h = tape.slice(xw, 2 * n, n)?;
        let cand = tape.add(x_h, ru)?;
        let cand = tape.tanh(cand)?;
        let delta = tape.sub(cand, h)?;
        let delta = tape.mul(z, delta)?;
        tape.add(h, delta)
    }

    fn dim_error(&self, what: &str, got: &[usize]) -> Error {
        Error::Config(format!(
            "GRU {what} has shape {got:?}; cell is {} -> {}",
            self.input_dim, self.hidden_dim
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::param_grad_check;
    use crate::autodiff::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeroed(store: &mut ParamStore) {
        for t in store.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn zero_parameters_halve_the_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "g", 2, 3, &mut rng);
        zeroed(&mut store);
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, false);
        let x = tape.constant(Tensor::vector(vec![0.4, -2.0]));
        let h = tape.constant(Tensor::vector(vec![0.8, -0.6, 0.2]));
        let out = cell.step(&mut tape, &bind, x, h).unwrap();
        // z = 0.5 and h~ = tanh(0) = 0, so h' = h / 2
        assert_eq!(tape.value(out).data(), &[0.4, -0.3, 0.1]);
    }

    #[test]
    fn zero_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "g", 2, 3, &mut rng);
        let b = store.find("g.b").unwrap();
        store.get_mut(b).data_mut().iter_mut().for_each(|v| *v = 0.0);
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, false);
        let x = tape.constant(Tensor::zeros(&[2]));
        let h = tape.constant(Tensor::zeros(&[3]));
        let out = cell.step(&mut tape, &bind, x, h).unwrap();
        assert_eq!(tape.value(out).data(), &[0.0; 3]);
    }

    #[test]
    fn rejects_wrong_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "g", 2, 3, &mut rng);
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, false);
        let x = tape.constant(Tensor::zeros(&[3]));
        let h = tape.constant(Tensor::zeros(&[3]));
        assert!(cell.step(&mut tape, &bind, x, h).is_err());
        let x = tape.constant(Tensor::zeros(&[2]));
        let h = tape.constant(Tensor::zeros(&[2]));
        assert!(cell.step(&mut tape, &bind, x, h).is_err());
    }

    #[test]
    fn batched_projection_matches_single_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "g", 2, 4, &mut rng);
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, false);
        let xs: Vec<Var> = (0..3)
            .map(|t| tape.constant(Tensor::vector(vec![t as f64 * 0.3, 1.0 - t as f64])))
            .collect();
        let batched = cell.project_inputs(&mut tape, &bind, &xs).unwrap();
        for (x, b) in xs.iter().zip(batched) {
            let single = cell.project_input(&mut tape, &bind, *x).unwrap();
            for (p, q) in tape.value(single).data().iter().zip(tape.value(b).data()) {
                assert!((p - q).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn step_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "g", 3, 4, &mut rng);
        let x0 = Tensor::vector(vec![0.5, -0.3, 0.9]);
        let h0 = Tensor::vector(vec![0.1, -0.7, 0.4, 0.2]);
        let f = |tape: &mut Tape, bind: &Binding| {
            let x = tape.constant(x0.clone());
            let h = tape.constant(h0.clone());
            let h1 = cell.step(tape, bind, x, h)?;
            let h2 = cell.step(tape, bind, x, h1)?;
            let sq = tape.mul(h2, h2)?;
            tape.sum(sq)
        };
        for (name, err) in param_grad_check(&store, f, 1e-5).unwrap() {
            assert!(err < 1e-6, "{name}: {err}");
        }
    }
}
