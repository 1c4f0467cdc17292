//! Single-layer LSTM as one fused tape node (backpropagation through time).

use super::elementwise::sigmoid;
use crate::graph::{Backward, Ctx, Sink};
use crate::linalg::{gemm, Mat};
use crate::{Float, Graph, Result, Tensor, TensorError, Var};

struct Lstm<F> {
    x: Var,
    w_ih: Var,
    w_hh: Var,
    b: Var,
    hidden: usize,
    /// Activated gates per step, laid out `[i | f | g | o]`.
    gates: Vec<F>,
    cells: Vec<F>,
}

impl<F: Float> Backward<F> for Lstm<F> {
    fn backward(&self, ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        let h = self.hidden;
        let x = ctx.value(self.x);
        let (steps, d) = (x.shape()[0], x.shape()[1]);
        let w_hh = ctx.value(self.w_hh).data();
        let hs = ctx.out().data();

        let mut d_pre = vec![F::zero(); steps * 4 * h];
        let mut dh_next = vec![F::zero(); h];
        let mut dc_next = vec![F::zero(); h];
        for t in (0..steps).rev() {
            let gates = &self.gates[t * 4 * h..(t + 1) * 4 * h];
            let (gi, rest) = gates.split_at(h);
            let (gf, rest) = rest.split_at(h);
            let (gg, go) = rest.split_at(h);
            let c = &self.cells[t * h..(t + 1) * h];
            let dp = &mut d_pre[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                let c_prev = if t > 0 { self.cells[(t - 1) * h + j] } else { F::zero() };
                let tc = c[j].tanh();
                let dh = grad[t * h + j] + dh_next[j];
                let d_o = dh * tc;
                let dc = dh * go[j] * (F::one() - tc * tc) + dc_next[j];
                dp[j] = dc * gg[j] * gi[j] * (F::one() - gi[j]);
                dp[h + j] = dc * c_prev * gf[j] * (F::one() - gf[j]);
                dp[2 * h + j] = dc * gi[j] * (F::one() - gg[j] * gg[j]);
                dp[3 * h + j] = d_o * go[j] * (F::one() - go[j]);
                dc_next[j] = dc * gf[j];
            }
            // dh_{t-1} = dpre_t * W_hh^T
            gemm(
                Mat::new(dp, 1, 4 * h),
                Mat::new(w_hh, h, 4 * h).t(),
                &mut dh_next,
                false,
            );
        }

        let dpm = Mat::new(&d_pre, steps, 4 * h);
        if ctx.needs(self.w_hh) && steps > 1 {
            // h_{t-1} for t = 1..steps pairs with dpre rows 1..steps
            let prev = Mat::new(&hs[..(steps - 1) * h], steps - 1, h);
            let rows = Mat::new(&d_pre[4 * h..], steps - 1, 4 * h);
            gemm(prev.t(), rows, sink.slot(self.w_hh), true);
        }
        if ctx.needs(self.w_ih) {
            gemm(Mat::new(x.data(), steps, d).t(), dpm, sink.slot(self.w_ih), true);
        }
        if ctx.needs(self.b) {
            let db = sink.slot(self.b);
            for row in d_pre.chunks(4 * h) {
                db.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
            }
        }
        if ctx.needs(self.x) {
            let w_ih = ctx.value(self.w_ih).data();
            gemm(dpm, Mat::new(w_ih, d, 4 * h).t(), sink.slot(self.x), true);
        }
    }
}

impl<F: Float> Graph<F> {
    /// Runs a one-layer LSTM left to right from zero state.
    ///
    /// `x: [t, d]`, `w_ih: [d, 4h]`, `w_hh: [h, 4h]`, `b: [4h]` with gate
    /// blocks ordered input, forget, cell, output. Returns all hidden
    /// states `[t, h]`.
    pub fn lstm(&mut self, x: Var, w_ih: Var, w_hh: Var, b: Var) -> Result<Var> {
        let (sx, si, sh, sb) = (
            self.shape(x).to_vec(),
            self.shape(w_ih).to_vec(),
            self.shape(w_hh).to_vec(),
            self.shape(b).to_vec(),
        );
        if sx.len() != 2 || si.len() != 2 || sh.len() != 2 || si[0] != sx[1] {
            return Err(TensorError::shape("lstm", &sx, &si));
        }
        let h = sh[0];
        if si[1] != 4 * h || sh[1] != 4 * h || sb != [4 * h] {
            return Err(TensorError::shape("lstm", &si, &sh));
        }
        let (steps, d) = (sx[0], sx[1]);
        let mut pre = vec![F::zero(); steps * 4 * h];
        gemm(
            Mat::new(self.value(x).data(), steps, d),
            Mat::new(self.value(w_ih).data(), d, 4 * h),
            &mut pre,
            false,
        );
        let bias = self.value(b).data();
        let w_hh_v = self.value(w_hh).data();
        let mut gates = vec![F::zero(); steps * 4 * h];
        let mut cells = vec![F::zero(); steps * h];
        let mut hs = vec![F::zero(); steps * h];
        let mut rec = vec![F::zero(); 4 * h];
        for t in 0..steps {
            if t > 0 {
                gemm(
                    Mat::new(&hs[(t - 1) * h..t * h], 1, h),
                    Mat::new(w_hh_v, h, 4 * h),
                    &mut rec,
                    false,
                );
            }
            let g = &mut gates[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..4 * h {
                let z = pre[t * 4 * h + j] + bias[j] + if t > 0 { rec[j] } else { F::zero() };
                g[j] = if (2 * h..3 * h).contains(&j) { z.tanh() } else { sigmoid(z) };
            }
            for j in 0..h {
                let c_prev = if t > 0 { cells[(t - 1) * h + j] } else { F::zero() };
                let c = g[h + j] * c_prev + g[j] * g[2 * h + j];
                cells[t * h + j] = c;
                hs[t * h + j] = g[3 * h + j] * c.tanh();
            }
        }
        Ok(self.push(
            Tensor::raw(vec![steps, h], hs),
            &[x, w_ih, w_hh, b],
            Lstm {
                x,
                w_ih,
                w_hh,
                b,
                hidden: h,
                gates,
                cells,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::max_rel_error;
    use crate::Rng;

    /// Scalar re-implementation of the cell equations.
    fn reference(x: &Tensor<f64>, wi: &Tensor<f64>, wh: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
        let (steps, d) = (x.shape()[0], x.shape()[1]);
        let h = wh.shape()[0];
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (mut hp, mut cp) = (vec![0.0; h], vec![0.0; h]);
        let mut out = Vec::new();
        for t in 0..steps {
            let z = |k: usize| {
                let mut s = b.data()[k];
                for i in 0..d {
                    s += x.at(&[t, i]) * wi.at(&[i, k]);
                }
                for i in 0..h {
                    s += hp[i] * wh.at(&[i, k]);
                }
                s
            };
            let zs: Vec<f64> = (0..4 * h).map(z).collect();
            for j in 0..h {
                let (i, f, g, o) = (sig(zs[j]), sig(zs[h + j]), zs[2 * h + j].tanh(), sig(zs[3 * h + j]));
                cp[j] = f * cp[j] + i * g;
                hp[j] = o * cp[j].tanh();
            }
            out.extend_from_slice(&hp);
        }
        out
    }

    fn random(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| 0.5 * rng.normal())
    }

    #[test]
    fn matches_scalar_cell() {
        let mut rng = Rng::new(21);
        let (x, wi, wh, b) = (
            random(&mut rng, &[6, 3]),
            random(&mut rng, &[3, 8]),
            random(&mut rng, &[2, 8]),
            random(&mut rng, &[8]),
        );
        let mut g = Graph::new();
        let vs: Vec<Var> = [&x, &wi, &wh, &b].iter().map(|t| g.constant((*t).clone())).collect();
        let y = g.lstm(vs[0], vs[1], vs[2], vs[3]).unwrap();
        let expect = reference(&x, &wi, &wh, &b);
        for (a, e) in g.value(y).data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::ones(&[5, 14]));
        let wi = g.constant(Tensor::zeros(&[14, 16]));
        let wh = g.constant(Tensor::zeros(&[4, 16]));
        let b = g.constant(Tensor::zeros(&[16]));
        let y = g.lstm(x, wi, wh, b).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bptt_gradient() {
        let mut rng = Rng::new(22);
        let inputs = [
            random(&mut rng, &[5, 3]),
            random(&mut rng, &[3, 8]),
            random(&mut rng, &[2, 8]),
            random(&mut rng, &[8]),
        ];
        let mix = random(&mut rng, &[5, 2]);
        let err = max_rel_error(&inputs, |g, v| {
            let y = g.lstm(v[0], v[1], v[2], v[3])?;
            let m = g.constant(mix.clone());
            g.mul(y, m)
        });
        assert!(err <= 1e-5, "rel err {err}");
    }
}
