//! Central finite-difference gradient checks in `f64`.
//!
//! The numeric side only ever evaluates forward values, so it stays
//! independent of the reverse rules it is checking.

use std::fmt::Debug;

use crate::{Graph, ParamStore, Rng, Tensor, Var};

/// Perturbation used by every check.
pub const STEP: f64 = 1e-6;

/// Norm-wise relative error `max|a - n| / max(max|n|, 1e-12)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = numeric.iter().map(|n| n.abs()).fold(0.0, f64::max);
    diff / scale.max(1e-12)
}

fn eval_scalar<E: Debug>(
    inputs: &[Tensor<f64>],
    f: &impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var, E>,
) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars).expect("forward failed during gradient check");
    g.value(out).sum()
}

/// Worst relative error over all inputs between reverse-mode gradients of
/// `sum(f(inputs))` and central differences.
pub fn max_rel_error<E: Debug>(
    inputs: &[Tensor<f64>],
    f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var, E>,
) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = f(&mut g, &vars).expect("forward failed during gradient check");
    let loss = g.sum(out);
    let grads = g.backward(loss).expect("backward failed");

    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads
            .wrt(vars[i])
            .map(|t| t.to_f64_vec())
            .unwrap_or_else(|| vec![0.0; input.len()]);
        let mut numeric = vec![0.0; input.len()];
        let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
        for (j, n) in numeric.iter_mut().enumerate() {
            let orig = input.data()[j];
            probe[i].data_mut()[j] = orig + STEP;
            let up = eval_scalar(&probe, &f);
            probe[i].data_mut()[j] = orig - STEP;
            let down = eval_scalar(&probe, &f);
            probe[i].data_mut()[j] = orig;
            *n = (up - down) / (2.0 * STEP);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// Convenience wrapper for a single input vector.
pub fn check_unary_op(xs: &[f64], f: impl Fn(&mut Graph<f64>, Var) -> crate::Result<Var>) -> f64 {
    let x = Tensor::from_f64(&[xs.len()], xs).expect("non-empty input");
    max_rel_error(&[x], |g, v| f(g, v[0]))
}

/// Result of checking one named parameter.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub rel_error: f64,
}

/// Checks the gradient of a scalar objective w.r.t. every parameter of a
/// store, probing up to `per_param` randomly chosen coordinates of each.
///
/// `objective` must be deterministic (seed any dropout inside it).
pub fn check_params<E: Debug>(
    store: &ParamStore<f64>,
    per_param: usize,
    rng: &mut Rng,
    objective: impl Fn(&ParamStore<f64>, &mut Graph<f64>) -> Result<Var, E>,
) -> Vec<ParamCheck> {
    let mut g = Graph::new();
    let loss = objective(store, &mut g).expect("objective failed");
    let grads = g.backward(loss).expect("backward failed");
    let value_at = |s: &ParamStore<f64>| {
        let mut g = Graph::new();
        let l = objective(s, &mut g).expect("objective failed");
        g.value(l).data()[0]
    };

    let mut probe = store.clone();
    let mut report = Vec::new();
    for name in store.names() {
        let size = store.get(name).unwrap().len();
        let analytic_full = grads
            .param(name)
            .map(|t| t.to_f64_vec())
            .unwrap_or_else(|| vec![0.0; size]);
        let coords: Vec<usize> = if size <= per_param {
            (0..size).collect()
        } else {
            (0..per_param).map(|_| rng.below(size)).collect()
        };
        let mut analytic = Vec::with_capacity(coords.len());
        let mut numeric = Vec::with_capacity(coords.len());
        for &c in &coords {
            let orig = store.get(name).unwrap().data()[c];
            probe.get_mut(name).unwrap().data_mut()[c] = orig + STEP;
            let up = value_at(&probe);
            probe.get_mut(name).unwrap().data_mut()[c] = orig - STEP;
            let down = value_at(&probe);
            probe.get_mut(name).unwrap().data_mut()[c] = orig;
            analytic.push(analytic_full[c]);
            numeric.push((up - down) / (2.0 * STEP));
        }
        // Scale by the largest gradient entry of the whole tensor so that
        // sampling only near-zero coordinates does not inflate the ratio.
        let scale = analytic_full
            .iter()
            .chain(&numeric)
            .map(|v| v.abs())
            .fold(1e-8, f64::max);
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).abs())
            .fold(0.0, f64::max);
        report.push(ParamCheck {
            name: name.to_string(),
            checked: coords.len(),
            rel_error: diff / scale,
        });
    }
    report
}
