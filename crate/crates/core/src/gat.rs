//! One multi-head graph-attention layer over the complete modality graph.

use grad_tensor::{gat_attention, Float, GatKernelOutput, Graph, ParamStore, Rng, Tensor, Var};

use crate::error::{data_err, Result};
use crate::layers::{init_matrix, Bind};

pub const HEADS: usize = 4;
pub const ATTENTION_DROPOUT: f64 = 0.5;

/// Projection `gat.proj.{name}` per node, plus `gat.att_src` and
/// `gat.att_dst` of shape `[heads, width / heads]`.
pub fn init_gat<F: Float>(store: &mut ParamStore<F>, nodes: &[&str], width: usize, heads: usize, rng: &mut Rng) -> Result<()> {
    if heads == 0 || width % heads != 0 {
        return Err(data_err(format!("{heads} heads do not divide width {width}")));
    }
    for n in nodes {
        init_matrix(store, &format!("gat.proj.{n}"), &[width, width], rng)?;
    }
    init_matrix(store, "gat.att_src", &[heads, width / heads], rng)?;
    init_matrix(store, "gat.att_dst", &[heads, width / heads], rng)?;
    Ok(())
}

pub struct GraphOutput<F> {
    /// Updated node features, each `[t, width]`, in input order.
    pub nodes: Vec<Var>,
    /// The same features side by side, `[t, nodes * width]`.
    pub joined: Var,
    pub attention: GatKernelOutput<F>,
}

/// Per head `k` and target `u`:
/// `out_u = leaky_relu(concat_k sum_v alpha_uv W^v x_v)` with
/// `alpha_u = softmax_v(leaky_relu(a_src . W^u x_u + a_dst . W^v x_v))`
/// over all nodes including `u` itself.
pub fn gat_forward<F: Float>(
    g: &mut Graph<F>,
    p: Bind<'_, F>,
    nodes: &[(&str, Var)],
    rng: &mut Rng,
    training: bool,
) -> Result<GraphOutput<F>> {
    let Some(&(_, first)) = nodes.first() else {
        return Err(data_err("graph with no nodes"));
    };
    let steps = g.shape(first)[0];
    let mut projected = Vec::with_capacity(nodes.len());
    for &(name, x) in nodes {
        if g.shape(x)[0] != steps {
            return Err(data_err(format!("node {name} has {} steps, expected {steps}", g.shape(x)[0])));
        }
        let w = p.get(g, &format!("gat.proj.{name}"))?;
        projected.push(g.matmul(x, w)?);
    }
    let width = g.shape(projected[0])[1];
    let n = nodes.len();
    let joined = g.concat(&projected, 1)?;
    let stacked = g.reshape(joined, &[steps, n, width])?;
    let a_src = p.get(g, "gat.att_src")?;
    let a_dst = p.get(g, "gat.att_dst")?;
    let (agg, attention) = g.gat_aggregate(stacked, a_src, a_dst, ATTENTION_DROPOUT, rng, training)?;
    let act = g.leaky_relu(agg);
    let joined = g.reshape(act, &[steps, n * width])?;
    let nodes = (0..n)
        .map(|i| g.slice(joined, 1, i * width, width))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(GraphOutput {
        nodes,
        joined,
        attention,
    })
}

/// Attention coefficients for plain node tensors `[t, width]`, without a
/// tape.
pub fn attention_scores<F: Float>(store: &ParamStore<F>, nodes: &[(&str, &Tensor<F>)]) -> Result<GatKernelOutput<F>> {
    let mut g = Graph::new();
    let p = Bind::frozen(store);
    let vars = nodes
        .iter()
        .map(|&(name, t)| (name, g.constant(t.clone())))
        .collect::<Vec<_>>();
    let mut projected = Vec::new();
    for &(name, x) in &vars {
        let w = p.get(&mut g, &format!("gat.proj.{name}"))?;
        projected.push(g.matmul(x, w)?);
    }
    let steps = g.shape(projected[0])[0];
    let width = g.shape(projected[0])[1];
    let joined = g.concat(&projected, 1)?;
    let stacked = g.reshape(joined, &[steps, nodes.len(), width])?;
    let src = store.get("gat.att_src").ok_or_else(|| data_err("missing gat.att_src"))?;
    let dst = store.get("gat.att_dst").ok_or_else(|| data_err("missing gat.att_dst"))?;
    Ok(gat_attention(g.value(stacked), src, dst)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use grad_tensor::gradcheck::check_params;
    use grad_tensor::LEAKY_SLOPE;

    const NAMES: [&str; 4] = ["spatial", "wavelet", "fourier", "kin"];

    fn store(width: usize, heads: usize, seed: u64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        init_gat(&mut s, &NAMES, width, heads, &mut Rng::new(seed)).unwrap();
        s
    }

    fn leaky(v: f64) -> f64 {
        if v > 0.0 {
            v
        } else {
            LEAKY_SLOPE * v
        }
    }

    #[test]
    fn uniform_attention_for_identical_nodes() {
        let mut s = store(8, 2, 1);
        let w = s.get("gat.proj.spatial").unwrap().clone();
        for n in NAMES {
            s.set(&format!("gat.proj.{n}"), w.clone()).unwrap();
        }
        let mut rng = Rng::new(2);
        let x = Tensor::from_fn(&[3, 8], |_| rng.normal());
        let nodes: Vec<_> = NAMES.iter().map(|&n| (n, &x)).collect();
        let a = attention_scores(&s, &nodes).unwrap();
        assert!(a.attention.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn dense_oracle_single_head() {
        let s = store(4, 1, 3);
        let mut rng = Rng::new(4);
        let xs: Vec<Tensor<f64>> = (0..4).map(|_| Tensor::from_fn(&[2, 4], |_| rng.normal())).collect();
        let mut g = Graph::new();
        let vars: Vec<_> = NAMES.iter().zip(&xs).map(|(&n, x)| (n, g.constant(x.clone()))).collect();
        let out = gat_forward(&mut g, Bind::frozen(&s), &vars, &mut Rng::new(0), false).unwrap();

        let w: Vec<&Tensor<f64>> = NAMES.iter().map(|n| s.get(&format!("gat.proj.{n}")).unwrap()).collect();
        let (asrc, adst) = (s.get("gat.att_src").unwrap().data(), s.get("gat.att_dst").unwrap().data());
        for t in 0..2 {
            let proj: Vec<Vec<f64>> = (0..4)
                .map(|v| {
                    (0..4)
                        .map(|j| (0..4).map(|i| xs[v].data()[t * 4 + i] * w[v].data()[i * 4 + j]).sum())
                        .collect()
                })
                .collect();
            for u in 0..4 {
                let e: Vec<f64> = (0..4)
                    .map(|v| {
                        let z: f64 = (0..4).map(|j| asrc[j] * proj[u][j] + adst[j] * proj[v][j]).sum();
                        leaky(z)
                    })
                    .collect();
                let m = e.iter().copied().fold(f64::MIN, f64::max);
                let den: f64 = e.iter().map(|x| (x - m).exp()).sum();
                for j in 0..4 {
                    let acc: f64 = (0..4).map(|v| (e[v] - m).exp() / den * proj[v][j]).sum();
                    let got = g.value(out.nodes[u]).data()[t * 4 + j];
                    assert!((got - leaky(acc)).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn equivariant_under_node_relabelling() {
        let s = store(8, 2, 5);
        let mut rng = Rng::new(6);
        let xs: Vec<Tensor<f64>> = (0..4).map(|_| Tensor::from_fn(&[3, 8], |_| rng.normal())).collect();
        let run = |order: [usize; 4]| {
            let mut g = Graph::new();
            let vars: Vec<_> = order.iter().map(|&i| (NAMES[i], g.constant(xs[i].clone()))).collect();
            let out = gat_forward(&mut g, Bind::frozen(&s), &vars, &mut Rng::new(0), false).unwrap();
            out.nodes.iter().map(|&v| g.value(v).clone()).collect::<Vec<_>>()
        };
        let a = run([0, 1, 2, 3]);
        let perm = [2, 0, 3, 1];
        let b = run(perm);
        for (k, &i) in perm.iter().enumerate() {
            assert!(a[i].max_abs_diff(&b[k]) < 1e-12);
        }
    }

    #[test]
    fn gradients_through_the_layer() {
        let s = store(8, 2, 7);
        let mut rng = Rng::new(8);
        let xs: Vec<Tensor<f64>> = (0..4).map(|_| Tensor::from_fn(&[3, 8], |_| rng.normal())).collect();
        let mix = Tensor::from_fn(&[3, 32], |_| rng.normal());
        for training in [false, true] {
            let report = check_params(&s, 16, &mut Rng::new(9), |store, g| {
                let vars: Vec<_> = NAMES.iter().zip(&xs).map(|(&n, x)| (n, g.constant(x.clone()))).collect();
                let out = gat_forward(g, Bind::train(store), &vars, &mut Rng::new(10), training)?;
                let m = g.constant(mix.clone());
                let prod = g.mul(out.joined, m)?;
                Ok::<_, crate::GradError>(g.sum(prod))
            });
            for r in report {
                assert!(r.rel_error <= 1e-4, "{} {}", r.name, r.rel_error);
            }
        }
    }

    #[test]
    fn rejects_bad_heads_and_lengths() {
        let mut s = ParamStore::<f64>::new();
        assert!(init_gat(&mut s, &NAMES, 64, 3, &mut Rng::new(0)).is_err());
        let s = store(8, 2, 1);
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[3, 8]));
        let b = g.constant(Tensor::zeros(&[4, 8]));
        assert!(gat_forward(&mut g, Bind::frozen(&s), &[("spatial", a), ("kin", b)], &mut Rng::new(0), false).is_err());
    }
}
