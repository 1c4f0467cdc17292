//! Adam with bias correction.

use indexmap::IndexMap;

use crate::{Float, Gradients, ParamStore, Result, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter moment state. Parameters without a gradient in a step
/// are left untouched and do not advance their own step counter.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub config: AdamConfig,
    state: IndexMap<String, Moments<F>>,
}

#[derive(Debug, Clone)]
struct Moments<F> {
    m: Vec<F>,
    v: Vec<F>,
    step: i32,
}

impl<F: Float> Adam<F> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            state: IndexMap::new(),
        }
    }

    /// Applies one update to every parameter in `names` that has a gradient.
    pub fn step_names<'a>(
        &mut self,
        store: &mut ParamStore<F>,
        grads: &Gradients<F>,
        names: impl IntoIterator<Item = &'a str>,
    ) -> Result<()> {
        let c = self.config;
        for name in names {
            let Some(g) = grads.param(name) else { continue };
            let p = store
                .get_mut(name)
                .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
            if p.shape() != g.shape() {
                return Err(TensorError::shape("adam", p.shape(), g.shape()));
            }
            let st = self.state.entry(name.to_string()).or_insert_with(|| Moments {
                m: vec![F::zero(); g.len()],
                v: vec![F::zero(); g.len()],
                step: 0,
            });
            st.step += 1;
            let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
            let c1 = F::of(1.0 - c.beta1.powi(st.step));
            let c2 = F::of(1.0 - c.beta2.powi(st.step));
            let (lr, eps) = (F::of(c.lr), F::of(c.eps));
            for (((w, &gi), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(&mut st.m).zip(&mut st.v) {
                *m = b1 * *m + (F::one() - b1) * gi;
                *v = b2 * *v + (F::one() - b2) * gi * gi;
                let mh = *m / c1;
                let vh = *v / c2;
                *w -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Updates every parameter of the store that received a gradient.
    pub fn step(&mut self, store: &mut ParamStore<F>, grads: &Gradients<F>) -> Result<()> {
        let names: Vec<String> = store.names().map(str::to_string).collect();
        self.step_names(store, grads, names.iter().map(String::as_str))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Graph, Tensor};

    #[test]
    fn first_step_moves_by_lr() {
        // with bias correction the first update is lr * sign(g)
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::from_f64(&[2], &[1.0, -2.0]).unwrap()).unwrap();
        let mut g = Graph::new();
        let w = g.param(&store, "w").unwrap();
        let l = g.sum(w);
        let grads = g.backward(l).unwrap();
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() });
        opt.step(&mut store, &grads).unwrap();
        let w = store.get("w").unwrap().data();
        assert!((w[0] - 0.9).abs() < 1e-6 && (w[1] + 2.1).abs() < 1e-6);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::from_f64(&[3], &[3.0, -1.0, 0.5]).unwrap()).unwrap();
        let mut opt = Adam::new(AdamConfig { lr: 0.05, ..Default::default() });
        for _ in 0..2000 {
            let mut g = Graph::new();
            let w = g.param(&store, "w").unwrap();
            let sq = g.mul(w, w).unwrap();
            let l = g.sum(sq);
            let grads = g.backward(l).unwrap();
            opt.step(&mut store, &grads).unwrap();
        }
        assert!(store.get("w").unwrap().data().iter().all(|v| v.abs() < 1e-2));
    }
}
