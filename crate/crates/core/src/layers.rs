//! Parameter binding and initialisation shared by every sub-network.

use grad_tensor::{Float, Graph, ParamStore, Rng, Tensor, Var};

use crate::error::Result;

/// How a sub-network reads its weights onto a tape: as differentiable
/// leaves (training) or as constants (inference, frozen discriminator).
#[derive(Clone, Copy)]
pub struct Bind<'a, F: Float> {
    pub store: &'a ParamStore<F>,
    pub trainable: bool,
}

impl<'a, F: Float> Bind<'a, F> {
    pub fn train(store: &'a ParamStore<F>) -> Self {
        Bind { store, trainable: true }
    }

    pub fn frozen(store: &'a ParamStore<F>) -> Self {
        Bind { store, trainable: false }
    }

    pub fn get(&self, g: &mut Graph<F>, name: &str) -> Result<Var> {
        Ok(if self.trainable {
            g.param(self.store, name)?
        } else {
            g.frozen(self.store, name)?
        })
    }

    /// `x @ {prefix}.w + {prefix}.b`.
    pub fn linear(&self, g: &mut Graph<F>, x: Var, prefix: &str) -> Result<Var> {
        let w = self.get(g, &format!("{prefix}.w"))?;
        let b = self.get(g, &format!("{prefix}.b"))?;
        Ok(g.linear(x, w, b)?)
    }

    /// Same-padded 1-D convolution with `{prefix}.w` / `{prefix}.b`.
    pub fn conv1d(&self, g: &mut Graph<F>, x: Var, prefix: &str) -> Result<Var> {
        let w = self.get(g, &format!("{prefix}.w"))?;
        let b = self.get(g, &format!("{prefix}.b"))?;
        let k = g.shape(w)[2];
        Ok(g.conv1d(x, w, b, (k - 1) / 2)?)
    }

    pub fn conv2d(&self, g: &mut Graph<F>, x: Var, prefix: &str) -> Result<Var> {
        let w = self.get(g, &format!("{prefix}.w"))?;
        let b = self.get(g, &format!("{prefix}.b"))?;
        let k = g.shape(w)[2];
        Ok(g.conv2d(x, w, b, (k - 1) / 2)?)
    }
}

fn uniform<F: Float>(shape: &[usize], bound: f64, rng: &mut Rng) -> Tensor<F> {
    Tensor::from_fn(shape, |_| F::of(rng.uniform_in(-bound, bound)))
}

/// Glorot-uniform `[fan_in, fan_out]` weight and zero bias.
pub fn init_linear<F: Float>(store: &mut ParamStore<F>, prefix: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Result<()> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    store.insert(format!("{prefix}.w"), uniform(&[fan_in, fan_out], bound, rng))?;
    store.insert(format!("{prefix}.b"), Tensor::zeros(&[fan_out]))?;
    Ok(())
}

/// He-uniform kernel of the given shape `[c_out, c_in, ...]`, zero bias.
pub fn init_conv<F: Float>(store: &mut ParamStore<F>, prefix: &str, shape: &[usize], rng: &mut Rng) -> Result<()> {
    let fan_in: usize = shape[1..].iter().product();
    let bound = (6.0 / fan_in as f64).sqrt();
    store.insert(format!("{prefix}.w"), uniform(shape, bound, rng))?;
    store.insert(format!("{prefix}.b"), Tensor::zeros(&[shape[0]]))?;
    Ok(())
}

/// Glorot-uniform tensor without a bias.
pub fn init_matrix<F: Float>(store: &mut ParamStore<F>, name: &str, shape: &[usize], rng: &mut Rng) -> Result<()> {
    let (fan_in, fan_out) = (shape[0], shape[1..].iter().product::<usize>());
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    store.insert(name, uniform(shape, bound, rng))?;
    Ok(())
}
