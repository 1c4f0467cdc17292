//! Cross-correlation layers lowered to GEMM through im2col.

use crate::graph::{Backward, Ctx, Sink};
use crate::linalg::{gemm, Mat};
use crate::{Float, Graph, Result, Tensor, TensorError, Var};

/// Geometry of a stride-1 2-D convolution over one frame.
#[derive(Clone, Copy, Debug)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad_h: usize,
    pad_w: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col<F: Float>(x: &[F], g: &Geom, col: &mut [F]) {
    let cols = g.cols();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = &mut col[((c * g.kh + i) * g.kw + j) * cols..][..cols];
                for y in 0..g.ho {
                    let dst = &mut row[y * g.wo..(y + 1) * g.wo];
                    let sy = y as isize + i as isize - g.pad_h as isize;
                    if sy < 0 || sy >= g.h as isize {
                        dst.iter_mut().for_each(|v| *v = F::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * g.w..(sy as usize + 1) * g.w];
                    // valid output columns: 0 <= x + j - pad < w
                    let lo = g.pad_w.saturating_sub(j).min(g.wo);
                    let hi = (g.w + g.pad_w).saturating_sub(j).min(g.wo).max(lo);
                    dst[..lo].iter_mut().for_each(|v| *v = F::zero());
                    dst[hi..].iter_mut().for_each(|v| *v = F::zero());
                    let s0 = lo + j - g.pad_w;
                    dst[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                }
            }
        }
    }
}

fn col2im_add<F: Float>(col: &[F], g: &Geom, dx: &mut [F]) {
    let cols = g.cols();
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = &col[((c * g.kh + i) * g.kw + j) * cols..][..cols];
                for y in 0..g.ho {
                    let sy = y as isize + i as isize - g.pad_h as isize;
                    if sy < 0 || sy >= g.h as isize {
                        continue;
                    }
                    let lo = g.pad_w.saturating_sub(j).min(g.wo);
                    let hi = (g.w + g.pad_w).saturating_sub(j).min(g.wo).max(lo);
                    let s0 = lo + j - g.pad_w;
                    let dst = &mut plane[sy as usize * g.w + s0..][..hi - lo];
                    for (d, &v) in dst.iter_mut().zip(&row[y * g.wo + lo..y * g.wo + hi]) {
                        *d += v;
                    }
                }
            }
        }
    }
}

struct Conv {
    x: Var,
    w: Var,
    b: Var,
    batch: usize,
    geom: Geom,
    cout: usize,
}

impl<F: Float> Backward<F> for Conv {
    fn backward(&self, ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        let g = &self.geom;
        let (rows, cols) = (g.rows(), g.cols());
        let x = ctx.value(self.x).data();
        let w = ctx.value(self.w).data();
        let in_size = g.c * g.h * g.w;
        let out_size = self.cout * cols;
        let mut col = vec![F::zero(); rows * cols];

        if ctx.needs(self.b) {
            let db = sink.slot(self.b);
            for n in 0..self.batch {
                for (o, d) in db.iter_mut().enumerate() {
                    let s: F = grad[n * out_size + o * cols..][..cols].iter().copied().sum();
                    *d += s;
                }
            }
        }
        if ctx.needs(self.w) {
            let mut dw = vec![F::zero(); self.cout * rows];
            for n in 0..self.batch {
                im2col(&x[n * in_size..(n + 1) * in_size], g, &mut col);
                let dy = Mat::new(&grad[n * out_size..(n + 1) * out_size], self.cout, cols);
                gemm(dy, Mat::new(&col, rows, cols).t(), &mut dw, true);
            }
            sink.add(self.w, &dw);
        }
        if ctx.needs(self.x) {
            let dx = sink.slot(self.x);
            for n in 0..self.batch {
                let dy = Mat::new(&grad[n * out_size..(n + 1) * out_size], self.cout, cols);
                gemm(Mat::new(w, self.cout, rows).t(), dy, &mut col, false);
                col2im_add(&col, g, &mut dx[n * in_size..(n + 1) * in_size]);
            }
        }
    }
}

impl<F: Float> Graph<F> {
    fn conv_forward(&mut self, x: Var, w: Var, b: Var, batch: usize, geom: Geom, out_shape: Vec<usize>) -> Var {
        let cout = self.shape(w)[0];
        let (rows, cols) = (geom.rows(), geom.cols());
        let in_size = geom.c * geom.h * geom.w;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let mut out = vec![F::zero(); batch * cout * cols];
        let mut col = vec![F::zero(); rows * cols];
        for n in 0..batch {
            im2col(&xv[n * in_size..(n + 1) * in_size], &geom, &mut col);
            let dst = &mut out[n * cout * cols..(n + 1) * cout * cols];
            gemm(Mat::new(wv, cout, rows), Mat::new(&col, rows, cols), dst, false);
            for (o, chunk) in dst.chunks_mut(cols).enumerate() {
                let bias = bv[o];
                chunk.iter_mut().for_each(|v| *v += bias);
            }
        }
        self.push(
            Tensor::raw(out_shape, out),
            &[x, w, b],
            Conv {
                x,
                w,
                b,
                batch,
                geom,
                cout,
            },
        )
    }

    /// 1-D cross-correlation. `x: [c_in, t]`, `w: [c_out, c_in, k]`,
    /// `b: [c_out]`, zero padding `pad` on both ends. Output
    /// `[c_out, t + 2 pad - k + 1]`; `pad = (k - 1) / 2` keeps the length.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, pad: usize) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 2 || sw.len() != 3 || sw[1] != sx[0] || sb != [sw[0]] {
            return Err(TensorError::shape("conv1d", sx, sw));
        }
        let (c, t, k) = (sx[0], sx[1], sw[2]);
        if k > t + 2 * pad {
            return Err(TensorError::invalid(
                "conv1d",
                format!("kernel {k} exceeds padded length {}", t + 2 * pad),
            ));
        }
        let geom = Geom {
            c,
            h: 1,
            w: t,
            kh: 1,
            kw: k,
            pad_h: 0,
            pad_w: pad,
            ho: 1,
            wo: t + 2 * pad - k + 1,
        };
        let shape = vec![sw[0], geom.wo];
        Ok(self.conv_forward(x, w, b, 1, geom, shape))
    }

    /// 2-D cross-correlation over a batch. `x: [n, c, h, w]`,
    /// `w: [c_out, c, kh, kw]`, `b: [c_out]`, stride 1, zero padding `pad`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, pad: usize) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 4 || sw.len() != 4 || sw[1] != sx[1] || sb != [sw[0]] {
            return Err(TensorError::shape("conv2d", sx, sw));
        }
        let (n, c, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
        let (kh, kw) = (sw[2], sw[3]);
        if kh > h + 2 * pad || kw > wd + 2 * pad {
            return Err(TensorError::invalid(
                "conv2d",
                format!("kernel {kh}x{kw} exceeds padded input {}x{}", h + 2 * pad, wd + 2 * pad),
            ));
        }
        let geom = Geom {
            c,
            h,
            w: wd,
            kh,
            kw,
            pad_h: pad,
            pad_w: pad,
            ho: h + 2 * pad - kh + 1,
            wo: wd + 2 * pad - kw + 1,
        };
        let shape = vec![n, sw[0], geom.ho, geom.wo];
        Ok(self.conv_forward(x, w, b, n, geom, shape))
    }
}
