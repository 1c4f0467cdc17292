use crate::graph::{Backward, Ctx, Sink};
use crate::{Float, Graph, Result, Tensor, TensorError, Var};

/// Gradient router for any pooling that picks one source per output.
struct Gather {
    x: Var,
    source: Vec<u32>,
}

impl<F: Float> Backward<F> for Gather {
    fn backward(&self, _ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        let dx = sink.slot(self.x);
        for (&s, &g) in self.source.iter().zip(grad) {
            dx[s as usize] += g;
        }
    }
}

struct SpatialMean {
    x: Var,
    area: usize,
}

impl<F: Float> Backward<F> for SpatialMean {
    fn backward(&self, _ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        let inv = F::one() / F::of(self.area as f64);
        let dx = sink.slot(self.x);
        for (plane, &g) in dx.chunks_mut(self.area).zip(grad) {
            let v = g * inv;
            plane.iter_mut().for_each(|d| *d += v);
        }
    }
}

impl<F: Float> Graph<F> {
    fn gather(&mut self, x: Var, shape: Vec<usize>, source: Vec<u32>) -> Var {
        let src = self.value(x).data();
        let data = source.iter().map(|&s| src[s as usize]).collect();
        self.push(Tensor::raw(shape, data), &[x], Gather { x, source })
    }

    /// Width-2 stride-2 max pooling over the last axis of `[c, t]`. An odd
    /// trailing element forms its own window, so the output length is
    /// `ceil(t / 2)`.
    pub fn max_pool1d(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(TensorError::invalid("max_pool1d", format!("expected [c, t], got {s:?}")));
        }
        let (c, t) = (s[0], s[1]);
        let to = t.div_ceil(2);
        let src = self.value(x).data();
        let mut source = Vec::with_capacity(c * to);
        for ch in 0..c {
            for i in 0..to {
                let a = ch * t + 2 * i;
                let pick = if 2 * i + 1 < t && src[a + 1] > src[a] { a + 1 } else { a };
                source.push(pick as u32);
            }
        }
        Ok(self.gather(x, vec![c, to], source))
    }

    /// Nearest-neighbour upsampling by 2 along the last axis of `[c, t]`.
    pub fn upsample1d(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(TensorError::invalid("upsample1d", format!("expected [c, t], got {s:?}")));
        }
        let (c, t) = (s[0], s[1]);
        let source = (0..c * 2 * t)
            .map(|i| ((i / (2 * t)) * t + (i % (2 * t)) / 2) as u32)
            .collect();
        Ok(self.gather(x, vec![c, 2 * t], source))
    }

    /// 2x2 stride-2 max pooling of `[n, c, h, w]` (odd edges dropped).
    pub fn max_pool2d(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || s[2] < 2 || s[3] < 2 {
            return Err(TensorError::invalid("max_pool2d", format!("expected [n, c, h>=2, w>=2], got {s:?}")));
        }
        let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
        let (ho, wo) = (h / 2, w / 2);
        let src = self.value(x).data();
        let mut source = Vec::with_capacity(planes * ho * wo);
        let mut data = Vec::with_capacity(planes * ho * wo);
        for p in 0..planes {
            for y in 0..ho {
                let base = p * h * w + 2 * y * w;
                let (r0, r1) = (&src[base..base + w], &src[base + w..base + 2 * w]);
                for xx in 0..wo {
                    let c = 2 * xx;
                    let (mut best, mut off) = (r0[c], c);
                    if r0[c + 1] > best {
                        (best, off) = (r0[c + 1], c + 1);
                    }
                    if r1[c] > best {
                        (best, off) = (r1[c], w + c);
                    }
                    if r1[c + 1] > best {
                        (best, off) = (r1[c + 1], w + c + 1);
                    }
                    data.push(best);
                    source.push((base + off) as u32);
                }
            }
        }
        Ok(self.push(Tensor::raw(vec![s[0], s[1], ho, wo], data), &[x], Gather { x, source }))
    }

    /// Global average over the spatial axes: `[n, c, h, w] -> [n, c]`.
    pub fn spatial_mean(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(TensorError::invalid("spatial_mean", format!("expected rank 4, got {s:?}")));
        }
        let area = s[2] * s[3];
        let inv = F::one() / F::of(area as f64);
        let data = self
            .value(x)
            .data()
            .chunks(area)
            .map(|p| p.iter().copied().sum::<F>() * inv)
            .collect();
        Ok(self.push(Tensor::raw(vec![s[0], s[1]], data), &[x], SpatialMean { x, area }))
    }
}
