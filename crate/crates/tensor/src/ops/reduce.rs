use crate::graph::{Backward, Ctx, Sink};
use crate::{Float, Graph, Result, Tensor, TensorError, Var};

struct SumAll {
    x: Var,
    scale: f64,
}

impl<F: Float> Backward<F> for SumAll {
    fn backward(&self, _ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        let g = grad[0] * F::of(self.scale);
        sink.slot(self.x).iter_mut().for_each(|d| *d += g);
    }
}

struct SoftmaxLast {
    x: Var,
    width: usize,
}

impl<F: Float> Backward<F> for SoftmaxLast {
    fn backward(&self, ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        let y = ctx.out().data();
        let dx = sink.slot(self.x);
        for ((yr, gr), dr) in y
            .chunks(self.width)
            .zip(grad.chunks(self.width))
            .zip(dx.chunks_mut(self.width))
        {
            let dot: F = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
            for j in 0..self.width {
                dr[j] += yr[j] * (gr[j] - dot);
            }
        }
    }
}

/// Numerically stable softmax of one row, written into `out`.
pub(crate) fn softmax_row<F: Float>(row: &[F], out: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

impl<F: Float> Graph<F> {
    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), &[x], SumAll { x, scale: 1.0 })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let s = self.value(x).sum() / F::of(n as f64);
        self.push(
            Tensor::scalar(s),
            &[x],
            SumAll {
                x,
                scale: 1.0 / n as f64,
            },
        )
    }

    /// Softmax over the last axis with max-subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let width = *shape.last().unwrap();
        if width == 0 {
            return Err(TensorError::invalid("softmax", "empty axis"));
        }
        let src = self.value(x).data();
        let mut out = vec![F::zero(); src.len()];
        for (r, o) in src.chunks(width).zip(out.chunks_mut(width)) {
            softmax_row(r, o);
        }
        Ok(self.push(Tensor::raw(shape, out), &[x], SoftmaxLast { x, width }))
    }
}
