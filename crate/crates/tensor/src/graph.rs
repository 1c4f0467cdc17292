//! The define-by-run tape.

use crate::{Float, ParamStore, Result, Tensor, TensorError};

/// Handle to a node on a [`Graph`]. Only meaningful for the graph that
/// created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Reverse rule of one recorded operation.
pub(crate) trait Backward<F: Float> {
    /// Propagates `grad` (gradient of the loss w.r.t. this node's output)
    /// into the sink slots of the node's inputs.
    fn backward(&self, ctx: &Ctx<'_, F>, grad: &[F], sink: &mut Sink<F>);
}

struct Node<F: Float> {
    value: Tensor<F>,
    requires_grad: bool,
    backward: Option<Box<dyn Backward<F>>>,
}

/// Read access to recorded values during the reverse sweep.
pub(crate) struct Ctx<'a, F: Float> {
    nodes: &'a [Node<F>],
    out: usize,
}

impl<F: Float> Ctx<'_, F> {
    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn out(&self) -> &Tensor<F> {
        &self.nodes[self.out].value
    }

    pub fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }
}

/// Gradient accumulators, allocated lazily per node.
pub(crate) struct Sink<F> {
    slots: Vec<Option<Vec<F>>>,
    sizes: Vec<usize>,
}

impl<F: Float> Sink<F> {
    pub fn slot(&mut self, v: Var) -> &mut [F] {
        let size = self.sizes[v.0];
        self.slots[v.0].get_or_insert_with(|| vec![F::zero(); size])
    }

    pub fn add(&mut self, v: Var, grad: &[F]) {
        for (s, &g) in self.slot(v).iter_mut().zip(grad) {
            *s += g;
        }
    }
}

/// Operation tape. One per forward pass and per thread.
pub struct Graph<F: Float> {
    nodes: Vec<Node<F>>,
    params: Vec<(String, Var)>,
}

impl<F: Float> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Float> Graph<F> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            backward: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.leaf(value, false)
    }

    /// Differentiable leaf holding a copy of the named parameter.
    pub fn param(&mut self, store: &ParamStore<F>, name: &str) -> Result<Var> {
        let t = store
            .get(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
        let v = self.leaf(t.clone(), true);
        self.params.push((name.to_string(), v));
        Ok(v)
    }

    /// Non-differentiable copy of the named parameter (frozen weights).
    pub fn frozen(&mut self, store: &ParamStore<F>, name: &str) -> Result<Var> {
        let t = store
            .get(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
        Ok(self.constant(t.clone()))
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copies a value into a fresh constant leaf, cutting it off from the
    /// gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub(crate) fn push(
        &mut self,
        value: Tensor<F>,
        inputs: &[Var],
        backward: impl Backward<F> + 'static,
    ) -> Var {
        #[cfg(debug_assertions)]
        if !value.all_finite() && inputs.iter().all(|v| self.nodes[v.0].value.all_finite()) {
            panic!("non-finite output from finite inputs (shape {:?})", value.shape());
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            backward: if requires_grad {
                Some(Box::new(backward))
            } else {
                None
            },
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        let shape = self.shape(loss);
        if shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NotScalar(shape.to_vec()));
        }
        let mut sink = Sink {
            slots: (0..self.nodes.len()).map(|_| None).collect(),
            sizes: self.nodes.iter().map(|n| n.value.len()).collect(),
        };
        if !self.nodes[loss.0].requires_grad {
            return Ok(self.collect(sink));
        }
        sink.slots[loss.0] = Some(vec![F::one()]);
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            let Some(rule) = &node.backward else { continue };
            let Some(grad) = sink.slots[id].take() else { continue };
            let ctx = Ctx {
                nodes: &self.nodes,
                out: id,
            };
            rule.backward(&ctx, &grad, &mut sink);
        }
        Ok(self.collect(sink))
    }

    fn collect(&self, mut sink: Sink<F>) -> Gradients<F> {
        let grads = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                if n.backward.is_none() && n.requires_grad {
                    sink.slots[i]
                        .take()
                        .map(|g| Tensor::raw(n.value.shape().to_vec(), g))
                } else {
                    None
                }
            })
            .collect();
        Gradients {
            grads,
            params: self.params.clone(),
        }
    }
}

/// Gradients of a loss with respect to every differentiable leaf.
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
    params: Vec<(String, Var)>,
}

impl<F: Float> Gradients<F> {
    /// Gradient for a leaf; `None` if the leaf did not influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for a named parameter, summed over every leaf that was
    /// created from it.
    pub fn param(&self, name: &str) -> Option<Tensor<F>> {
        let mut acc: Option<Tensor<F>> = None;
        for (n, v) in &self.params {
            if n != name {
                continue;
            }
            if let Some(g) = self.wrt(*v) {
                match &mut acc {
                    None => acc = Some(g.clone()),
                    Some(a) => a
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .for_each(|(x, &y)| *x += y),
                }
            }
        }
        acc
    }

    /// Names of parameters that were pulled onto the tape.
    pub fn param_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for (n, _) in &self.params {
            if !names.contains(&n.as_str()) {
                names.push(n);
            }
        }
        names
    }
}
