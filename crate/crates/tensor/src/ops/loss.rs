//! Classification losses fused with their softmax.

use super::reduce::softmax_row;
use crate::graph::{Backward, Ctx, Sink};
use crate::{Float, Graph, Result, Tensor, TensorError, Var};

/// Floor applied to probabilities before taking logarithms.
pub const LOG_EPS: f64 = 1e-7;

struct CalibratedCe<F> {
    logits: Var,
    labels: Vec<usize>,
    lambda: F,
    probs: Vec<F>,
}

impl<F: Float> Backward<F> for CalibratedCe<F> {
    fn backward(&self, ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        let classes = ctx.value(self.logits).shape()[1];
        let steps = self.labels.len();
        let eps = F::of(LOG_EPS);
        let scale = grad[0] / F::of(steps as f64);
        let dz = sink.slot(self.logits);
        for (t, &y) in self.labels.iter().enumerate() {
            let p = &self.probs[t * classes..(t + 1) * classes];
            let q = p[y];
            let lq = q.max(eps).ln();
            // dL/dq, with the log argument frozen once it hits the floor
            let dq = if q > eps {
                -(self.lambda * lq + (F::one() + self.lambda * q) / q)
            } else {
                -self.lambda * lq
            };
            let row = &mut dz[t * classes..(t + 1) * classes];
            for (j, d) in row.iter_mut().enumerate() {
                let delta = if j == y { F::one() } else { F::zero() };
                *d += scale * dq * q * (delta - p[j]);
            }
        }
    }
}

impl<F: Float> Graph<F> {
    /// Mean over rows of `-(1 + lambda * p_y) * ln p_y`, where `p` is the
    /// row softmax of `logits: [t, c]` and `y` the row's label.
    /// `lambda = 0` is ordinary cross-entropy.
    pub fn calibrated_cross_entropy(&mut self, logits: Var, labels: &[usize], lambda: f64) -> Result<Var> {
        let (steps, classes) = match self.shape(logits) {
            [t, c] => (*t, *c),
            other => return Err(TensorError::invalid("calibrated_ce", format!("logits must be [t, c], got {other:?}"))),
        };
        if labels.len() != steps {
            return Err(TensorError::shape("calibrated_ce", self.shape(logits), &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(TensorError::invalid("calibrated_ce", format!("label {bad} out of range for {classes} classes")));
        }
        if !(lambda >= 0.0) {
            return Err(TensorError::invalid("calibrated_ce", format!("lambda must be >= 0, got {lambda}")));
        }
        let z = self.value(logits).data();
        let mut probs = vec![F::zero(); z.len()];
        for (row, out) in z.chunks(classes).zip(probs.chunks_mut(classes)) {
            softmax_row(row, out);
        }
        let lam = F::of(lambda);
        let eps = F::of(LOG_EPS);
        let total: F = labels
            .iter()
            .enumerate()
            .map(|(t, &y)| {
                let q = probs[t * classes + y];
                -(F::one() + lam * q) * q.max(eps).ln()
            })
            .sum();
        let loss = total / F::of(steps as f64);
        let node = CalibratedCe {
            logits,
            labels: labels.to_vec(),
            lambda: lam,
            probs,
        };
        Ok(self.push(Tensor::raw(vec![1], vec![loss]), &[logits], node))
    }
}
