use crate::graph::{Backward, Ctx, Sink};
use crate::linalg::{gemm, Mat};
use crate::{Float, Graph, Result, Tensor, TensorError, Var};

struct MatMul {
    a: Var,
    b: Var,
}

impl<F: Float> Backward<F> for MatMul {
    fn backward(&self, ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        let a = ctx.value(self.a);
        let b = ctx.value(self.b);
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let dc = Mat::new(grad, m, n);
        if ctx.needs(self.a) {
            gemm(dc, Mat::new(b.data(), k, n).t(), sink.slot(self.a), true);
        }
        if ctx.needs(self.b) {
            gemm(Mat::new(a.data(), m, k).t(), dc, sink.slot(self.b), true);
        }
    }
}

impl<F: Float> Graph<F> {
    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![F::zero(); m * n];
        gemm(
            Mat::new(self.value(a).data(), m, k),
            Mat::new(self.value(b).data(), k, n),
            &mut out,
            false,
        );
        Ok(self.push(Tensor::raw(vec![m, n], out), &[a, b], MatMul { a, b }))
    }

    /// `x * w + b` for `x: [m, in]`, `w: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add(y, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::max_rel_error;
    use crate::Rng;

    #[test]
    fn identity_and_projector() {
        let mut g = Graph::<f64>::new();
        let i2 = g.constant(Tensor::from_f64(&[2, 2], &[1., 0., 0., 1.]).unwrap());
        let m = g.constant(Tensor::from_f64(&[2, 2], &[1., 2., 3., 4.]).unwrap());
        let p = g.matmul(i2, m).unwrap();
        assert_eq!(g.value(p).data(), &[1., 2., 3., 4.]);

        let proj = g.constant(Tensor::from_f64(&[2, 2], &[1., 0., 0., 0.]).unwrap());
        let n = g.constant(Tensor::from_f64(&[2, 2], &[5., 6., 7., 8.]).unwrap());
        let q = g.matmul(proj, n).unwrap();
        assert_eq!(g.value(q).data(), &[5., 6., 0., 0.]);
    }

    #[test]
    fn shape_error_names_both_shapes() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(&[3, 4]));
        let b = g.constant(Tensor::zeros(&[3, 2]));
        let err = g.matmul(a, b).unwrap_err();
        assert_eq!(err.to_string(), "matmul: incompatible shapes [3, 4] and [3, 2]");
    }

    #[test]
    fn gradient_of_sum_matches_finite_differences() {
        let mut rng = Rng::new(11);
        let a = Tensor::<f64>::from_fn(&[3, 4], |_| rng.normal());
        let b = Tensor::<f64>::from_fn(&[4, 2], |_| rng.normal());
        let err = max_rel_error(&[a, b], |g, v| {
            let c = g.matmul(v[0], v[1])?;
            Ok::<_, crate::TensorError>(g.sum(c))
        });
        assert!(err <= 1e-5, "rel err {err}");
    }
}
