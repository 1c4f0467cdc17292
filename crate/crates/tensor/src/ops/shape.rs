use crate::graph::{Backward, Ctx, Sink};
use crate::{Float, Graph, Result, Tensor, TensorError, Var};

struct Reshape {
    x: Var,
}

impl<F: Float> Backward<F> for Reshape {
    fn backward(&self, _ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        sink.add(self.x, grad);
    }
}

/// Splits a shape around `axis` into (outer, axis, inner) extents.
fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

struct Concat {
    parts: Vec<Var>,
    axis: usize,
}

impl<F: Float> Backward<F> for Concat {
    fn backward(&self, ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        let (outer, total, inner) = split_at_axis(ctx.out().shape(), self.axis);
        let mut offset = 0;
        for &p in &self.parts {
            let len = ctx.value(p).shape()[self.axis];
            if ctx.needs(p) {
                let dp = sink.slot(p);
                for o in 0..outer {
                    let src = &grad[(o * total + offset) * inner..(o * total + offset + len) * inner];
                    let dst = &mut dp[o * len * inner..(o + 1) * len * inner];
                    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
                }
            }
            offset += len;
        }
    }
}

struct Slice {
    x: Var,
    axis: usize,
    start: usize,
}

impl<F: Float> Backward<F> for Slice {
    fn backward(&self, ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        let (outer, total, inner) = split_at_axis(ctx.value(self.x).shape(), self.axis);
        let len = ctx.out().shape()[self.axis];
        let dx = sink.slot(self.x);
        for o in 0..outer {
            let dst = &mut dx[(o * total + self.start) * inner..(o * total + self.start + len) * inner];
            let src = &grad[o * len * inner..(o + 1) * len * inner];
            dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
        }
    }
}

struct Transpose {
    x: Var,
}

fn transpose_into<F: Copy>(src: &[F], rows: usize, cols: usize, dst: &mut [F]) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

impl<F: Float> Backward<F> for Transpose {
    fn backward(&self, ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        let s = ctx.out().shape();
        let (rows, cols) = (s[0], s[1]);
        let dx = sink.slot(self.x);
        for r in 0..rows {
            for c in 0..cols {
                dx[c * rows + r] += grad[r * cols + c];
            }
        }
    }
}

impl<F: Float> Graph<F> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t, &[x], Reshape { x }))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::invalid("concat", "no inputs"))?;
        if parts.len() == 1 {
            return Ok(*first);
        }
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::invalid("concat", format!("axis {axis} for rank {}", base.len())));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_at_axis(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let len = v.shape()[axis];
                data.extend_from_slice(&v.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let out = Tensor::raw(shape, data);
        Ok(self.push(
            out,
            parts,
            Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// Elements `start..start + len` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(TensorError::invalid(
                "slice",
                format!("range {start}..{} on axis {axis} of {shape:?}", start + len),
            ));
        }
        let (outer, total, inner) = split_at_axis(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&src[(o * total + start) * inner..(o * total + start + len) * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        Ok(self.push(Tensor::raw(out_shape, data), &[x], Slice { x, axis, start }))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(TensorError::invalid("transpose", format!("rank-2 input expected, got {shape:?}")));
        }
        let (rows, cols) = (shape[0], shape[1]);
        let mut data = vec![F::zero(); rows * cols];
        transpose_into(self.value(x).data(), rows, cols, &mut data);
        Ok(self.push(Tensor::raw(vec![cols, rows], data), &[x], Transpose { x }))
    }
}
