use crate::graph::{Backward, Ctx, Sink};
use crate::{Float, Graph, Result, Rng, Tensor, TensorError, Var};

/// Negative slope of every leaky ReLU in the model.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

struct Binary {
    a: Var,
    b: Var,
    kind: BinaryKind,
}

/// Output shape under trailing-dimension broadcasting: the shorter operand
/// must equal the trailing dimensions of the longer one.
fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if long[long.len() - short.len()..] == *short {
        Ok(long.to_vec())
    } else {
        Err(TensorError::shape(op, a, b))
    }
}

impl<F: Float> Backward<F> for Binary {
    fn backward(&self, ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        let a = ctx.value(self.a).data();
        let b = ctx.value(self.b).data();
        let (la, lb) = (a.len(), b.len());
        if ctx.needs(self.a) {
            let da = sink.slot(self.a);
            for (i, &g) in grad.iter().enumerate() {
                da[i % la] += match self.kind {
                    BinaryKind::Add | BinaryKind::Sub => g,
                    BinaryKind::Mul => g * b[i % lb],
                };
            }
        }
        if ctx.needs(self.b) {
            let db = sink.slot(self.b);
            for (i, &g) in grad.iter().enumerate() {
                db[i % lb] += match self.kind {
                    BinaryKind::Add => g,
                    BinaryKind::Sub => -g,
                    BinaryKind::Mul => g * a[i % la],
                };
            }
        }
    }
}

#[derive(Clone, Copy)]
enum UnaryKind<F> {
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
    Log,
    Exp,
    Affine { scale: F },
    Clamp { lo: F, hi: F },
}

struct Unary<F> {
    x: Var,
    kind: UnaryKind<F>,
}

impl<F: Float> Backward<F> for Unary<F> {
    fn backward(&self, ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        let x = ctx.value(self.x).data();
        let y = ctx.out().data();
        let slope = F::of(LEAKY_SLOPE);
        let kind = self.kind;
        let dx = sink.slot(self.x);
        for i in 0..grad.len() {
            let g = grad[i];
            dx[i] += match kind {
                UnaryKind::Relu => {
                    if x[i] > F::zero() {
                        g
                    } else {
                        F::zero()
                    }
                }
                UnaryKind::LeakyRelu => {
                    if x[i] > F::zero() {
                        g
                    } else {
                        g * slope
                    }
                }
                UnaryKind::Tanh => g * (F::one() - y[i] * y[i]),
                UnaryKind::Sigmoid => g * y[i] * (F::one() - y[i]),
                UnaryKind::Log => g / x[i],
                UnaryKind::Exp => g * y[i],
                UnaryKind::Affine { scale } => g * scale,
                UnaryKind::Clamp { lo, hi } => {
                    if x[i] >= lo && x[i] <= hi {
                        g
                    } else {
                        F::zero()
                    }
                }
            };
        }
    }
}

struct Masked<F> {
    x: Var,
    mask: Vec<F>,
}

impl<F: Float> Backward<F> for Masked<F> {
    fn backward(&self, _ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>) {
        let dx = sink.slot(self.x);
        for ((d, &g), &m) in dx.iter_mut().zip(grad).zip(&self.mask) {
            *d += g * m;
        }
    }
}

pub(crate) fn sigmoid<F: Float>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}

pub(crate) fn leaky<F: Float>(v: F) -> F {
    if v > F::zero() {
        v
    } else {
        v * F::of(LEAKY_SLOPE)
    }
}

impl<F: Float> Graph<F> {
    fn binary(&mut self, op: &'static str, a: Var, b: Var, kind: BinaryKind) -> Result<Var> {
        let shape = broadcast_shape(op, self.shape(a), self.shape(b))?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let (la, lb) = (av.len(), bv.len());
        let n: usize = shape.iter().product();
        let data: Vec<F> = (0..n)
            .map(|i| {
                let (x, y) = (av[i % la], bv[i % lb]);
                match kind {
                    BinaryKind::Add => x + y,
                    BinaryKind::Sub => x - y,
                    BinaryKind::Mul => x * y,
                }
            })
            .collect();
        Ok(self.push(Tensor::raw(shape, data), &[a, b], Binary { a, b, kind }))
    }

    /// `a + b`; the shorter operand is repeated over leading dimensions.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, BinaryKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, BinaryKind::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, BinaryKind::Mul)
    }

    fn unary(&mut self, x: Var, kind: UnaryKind<F>, f: impl Fn(F) -> F) -> Var {
        let out = self.value(x).map(f);
        self.push(out, &[x], Unary { x, kind })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, UnaryKind::Relu, |v| v.max(F::zero()))
    }

    /// Leaky ReLU with the fixed negative slope [`LEAKY_SLOPE`].
    pub fn leaky_relu(&mut self, x: Var) -> Var {
        self.unary(x, UnaryKind::LeakyRelu, leaky)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, UnaryKind::Tanh, |v| v.tanh())
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, UnaryKind::Sigmoid, sigmoid)
    }

    pub fn scale(&mut self, x: Var, c: F) -> Var {
        self.affine(x, c, F::zero())
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: F, shift: F) -> Var {
        self.unary(x, UnaryKind::Affine { scale }, move |v| scale * v + shift)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: Var, lo: F, hi: F) -> Var {
        self.unary(x, UnaryKind::Clamp { lo, hi }, move |v| v.max(lo).min(hi))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.value(x).data().iter().find(|v| !(**v > F::zero())) {
            return Err(TensorError::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        Ok(self.unary(x, UnaryKind::Log, |v| v.ln()))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let limit = F::max_value().ln();
        if let Some(bad) = self.value(x).data().iter().find(|v| !(**v < limit)) {
            return Err(TensorError::Domain {
                op: "exp",
                detail: format!("input {bad} overflows"),
            });
        }
        Ok(self.unary(x, UnaryKind::Exp, |v| v.exp()))
    }

    /// Inverted dropout: in training each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    /// Evaluation mode (and `rate == 0`) returns `x` unchanged.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut Rng, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::invalid(
                "dropout",
                format!("rate {rate} outside [0, 1)"),
            ));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = F::of(1.0 / (1.0 - rate));
        let mask: Vec<F> = (0..self.value(x).len())
            .map(|_| if rng.bernoulli(rate) { F::zero() } else { keep })
            .collect();
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::raw(src.shape().to_vec(), data);
        Ok(self.push(out, &[x], Masked { x, mask }))
    }
}
