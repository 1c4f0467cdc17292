//! Multi-head attention aggregation over a complete graph of `n` nodes,
//! evaluated independently at every time step.
//!
//! For head `k` with slice width `fh`, target `u` and source `v`:
//!
//! ```text
//! z_uv   = a_src[k] . P_u[k] + a_dst[k] . P_v[k]
//! e_uv   = leaky_relu(z_uv)
//! alpha  = softmax_v(e_u.)
//! out_u[k] = sum_v alpha_uv * P_v[k]
//! ```
//!
//! Self-loops are part of the neighbourhood.

use super::elementwise::{leaky, LEAKY_SLOPE};
use super::reduce::softmax_row;
use crate::graph::{Backward, Ctx, Sink};
use crate::{Float, Graph, Result, Rng, Tensor, TensorError, Var};

/// Attention coefficients of one evaluation.
#[derive(Debug, Clone)]
pub struct GatKernelOutput<F> {
    pub steps: usize,
    pub heads: usize,
    pub nodes: usize,
    /// Row-stochastic coefficients `[steps, heads, nodes, nodes]`, indexed
    /// `(t, k, target, source)`.
    pub attention: Vec<F>,
    /// Pre-activation scores `z`, same layout.
    pub scores: Vec<F>,
}

impl<F: Float> GatKernelOutput<F> {
    pub fn alpha(&self, t: usize, k: usize, u: usize, v: usize) -> F {
        self.attention[((t * self.heads + k) * self.nodes + u) * self.nodes + v]
    }
}

fn check_shapes<F: Float>(proj: &Tensor<F>, a_src: &Tensor<F>, a_dst: &Tensor<F>) -> Result<(usize, usize, usize, usize)> {
    let s = proj.shape();
    if s.len() != 3 {
        return Err(TensorError::invalid("gat", format!("projected nodes must be [t, n, f], got {s:?}")));
    }
    let (heads, fh) = match a_src.shape() {
        [k, fh] => (*k, *fh),
        other => return Err(TensorError::invalid("gat", format!("attention vector must be [heads, width], got {other:?}"))),
    };
    if a_dst.shape() != a_src.shape() || heads * fh != s[2] {
        return Err(TensorError::shape("gat", s, a_src.shape()));
    }
    Ok((s[0], s[1], heads, fh))
}

/// Attention coefficients for projected node features `proj: [t, n, f]`
/// and per-head attention halves `a_src, a_dst: [heads, f / heads]`.
pub fn gat_attention<F: Float>(proj: &Tensor<F>, a_src: &Tensor<F>, a_dst: &Tensor<F>) -> Result<GatKernelOutput<F>> {
    let (steps, n, heads, fh) = check_shapes(proj, a_src, a_dst)?;
    let f = heads * fh;
    let p = proj.data();
    let mut attention = vec![F::zero(); steps * heads * n * n];
    let mut scores = vec![F::zero(); steps * heads * n * n];
    let mut src = vec![F::zero(); n];
    let mut dst = vec![F::zero(); n];
    let mut e = vec![F::zero(); n];
    for t in 0..steps {
        for k in 0..heads {
            let (asrc, adst) = (&a_src.data()[k * fh..(k + 1) * fh], &a_dst.data()[k * fh..(k + 1) * fh]);
            for u in 0..n {
                let pu = &p[(t * n + u) * f + k * fh..][..fh];
                src[u] = pu.iter().zip(asrc).map(|(&a, &b)| a * b).sum();
                dst[u] = pu.iter().zip(adst).map(|(&a, &b)| a * b).sum();
            }
            for u in 0..n {
                let base = ((t * heads + k) * n + u) * n;
                for v in 0..n {
                    let z = src[u] + dst[v];
                    scores[base + v] = z;
                    e[v] = leaky(z);
                }
                softmax_row(&e, &mut attention[base..base + n]);
            }
        }
    }
    Ok(GatKernelOutput {
        steps,
        heads,
        nodes: n,
        attention,
        scores,
    })
}

struct GatAggregate<F> {
    proj: Var,
    a_src: Var,
    a_dst: Var,
    kernel: GatKernelOutput<F>,
    /// Inverted-dropout multipliers on the coefficients, if training.
    mask: Option<Vec<F>>,
}

impl<F: Float> Backward<F> for GatAggregate<F> {
    fn backward(&self, ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        let kr = &self.kernel;
        let (steps, heads, n) = (kr.steps, kr.heads, kr.nodes);
        let pt = ctx.value(self.proj);
        let p = pt.data();
        let f = pt.shape()[2];
        let fh = f / heads;
        let a_src = ctx.value(self.a_src).data();
        let a_dst = ctx.value(self.a_dst).data();
        let slope = F::of(LEAKY_SLOPE);

        let mut dp = vec![F::zero(); p.len()];
        let mut da_src = vec![F::zero(); heads * fh];
        let mut da_dst = vec![F::zero(); heads * fh];
        let mut dalpha = vec![F::zero(); n];
        let mut ds = vec![F::zero(); n];
        let mut dr = vec![F::zero(); n];
        for t in 0..steps {
            for k in 0..heads {
                ds.iter_mut().for_each(|v| *v = F::zero());
                dr.iter_mut().for_each(|v| *v = F::zero());
                for u in 0..n {
                    let base = ((t * heads + k) * n + u) * n;
                    let go = &grad[(t * n + u) * f + k * fh..][..fh];
                    // message path: out_u = sum_v a'_uv P_v
                    for v in 0..n {
                        let pv = &p[(t * n + v) * f + k * fh..][..fh];
                        let m = self.mask.as_ref().map_or(F::one(), |m| m[base + v]);
                        let a_eff = kr.attention[base + v] * m;
                        dalpha[v] = go.iter().zip(pv).map(|(&a, &b)| a * b).sum::<F>() * m;
                        let dpv = &mut dp[(t * n + v) * f + k * fh..][..fh];
                        dpv.iter_mut().zip(go).for_each(|(d, &g)| *d += a_eff * g);
                    }
                    // softmax, then leaky relu
                    let alpha = &kr.attention[base..base + n];
                    let dot: F = alpha.iter().zip(&dalpha).map(|(&a, &d)| a * d).sum();
                    for v in 0..n {
                        let de = alpha[v] * (dalpha[v] - dot);
                        let dz = if kr.scores[base + v] > F::zero() { de } else { de * slope };
                        ds[u] += dz;
                        dr[v] += dz;
                    }
                }
                // score path: z_uv = a_src . P_u + a_dst . P_v
                for u in 0..n {
                    let off = (t * n + u) * f + k * fh;
                    for d in 0..fh {
                        dp[off + d] += ds[u] * a_src[k * fh + d] + dr[u] * a_dst[k * fh + d];
                        da_src[k * fh + d] += ds[u] * p[off + d];
                        da_dst[k * fh + d] += dr[u] * p[off + d];
                    }
                }
            }
        }
        if ctx.needs(self.proj) {
            sink.add(self.proj, &dp);
        }
        if ctx.needs(self.a_src) {
            sink.add(self.a_src, &da_src);
        }
        if ctx.needs(self.a_dst) {
            sink.add(self.a_dst, &da_dst);
        }
    }
}

impl<F: Float> Graph<F> {
    /// Attention-weighted aggregation of projected node features.
    ///
    /// `proj: [t, n, f]` holds every node already multiplied by its own
    /// projection; heads are contiguous slices of `f`, so concatenating the
    /// heads is the identity on layout. Training applies inverted dropout
    /// with `rate` to the coefficients. Returns the aggregated `[t, n, f]`
    /// (before any output nonlinearity) and the undropped coefficients.
    pub fn gat_aggregate(
        &mut self,
        proj: Var,
        a_src: Var,
        a_dst: Var,
        rate: f64,
        rng: &mut Rng,
        training: bool,
    ) -> Result<(Var, GatKernelOutput<F>)> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::invalid("gat", format!("dropout rate {rate} outside [0, 1)")));
        }
        let kernel = gat_attention(self.value(proj), self.value(a_src), self.value(a_dst))?;
        let (steps, heads, n) = (kernel.steps, kernel.heads, kernel.nodes);
        let f = self.shape(proj)[2];
        let fh = f / heads;
        let mask = (training && rate > 0.0).then(|| {
            let keep = F::of(1.0 / (1.0 - rate));
            (0..kernel.attention.len())
                .map(|_| if rng.bernoulli(rate) { F::zero() } else { keep })
                .collect::<Vec<F>>()
        });
        let p = self.value(proj).data();
        let mut out = vec![F::zero(); p.len()];
        for t in 0..steps {
            for k in 0..heads {
                for u in 0..n {
                    let base = ((t * heads + k) * n + u) * n;
                    let dst = &mut out[(t * n + u) * f + k * fh..][..fh];
                    for v in 0..n {
                        let m = mask.as_ref().map_or(F::one(), |m| m[base + v]);
                        let a = kernel.attention[base + v] * m;
                        let pv = &p[(t * n + v) * f + k * fh..][..fh];
                        dst.iter_mut().zip(pv).for_each(|(d, &x)| *d += a * x);
                    }
                }
            }
        }
        let shape = self.shape(proj).to_vec();
        let node = GatAggregate {
            proj,
            a_src,
            a_dst,
            kernel: kernel.clone(),
            mask,
        };
        let v = self.push(Tensor::raw(shape, out), &[proj, a_src, a_dst], node);
        Ok((v, kernel))
    }
}
