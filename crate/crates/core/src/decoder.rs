//! Embedding fusion, classification head and the training objective.

use std::fmt;
use std::str::FromStr;

use grad_tensor::{Float, Graph, ParamStore, Rng, Tensor, Var};

use crate::encoders::EMBED;
use crate::error::{config_err, data_err, GradError, Result};
use crate::layers::{init_linear, Bind};

/// How the modality embeddings are combined before the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    /// `alpha * l(concat nodes) + beta * l(concat graph nodes)`.
    Graph,
    /// The graph branch replaced by `l(sum of nodes)`.
    Add,
    /// `l(concat nodes)` alone.
    Concat,
}

impl Fusion {
    pub fn code(self) -> u32 {
        match self {
            Fusion::Graph => 0,
            Fusion::Add => 1,
            Fusion::Concat => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        [Fusion::Graph, Fusion::Add, Fusion::Concat].into_iter().find(|f| f.code() == code)
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fusion::Graph => "graph",
            Fusion::Add => "add",
            Fusion::Concat => "concat",
        })
    }
}

impl FromStr for Fusion {
    type Err = GradError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graph" => Ok(Fusion::Graph),
            "add" => Ok(Fusion::Add),
            "concat" => Ok(Fusion::Concat),
            other => Err(config_err(format!("unknown fusion mode {other:?}"))),
        }
    }
}

pub fn init_decoder<F: Float>(store: &mut ParamStore<F>, nodes: usize, classes: usize, fusion: Fusion, rng: &mut Rng) -> Result<()> {
    init_linear(store, "fuse.vk", nodes * EMBED, EMBED, rng)?;
    match fusion {
        Fusion::Graph => init_linear(store, "fuse.g", nodes * EMBED, EMBED, rng)?,
        Fusion::Add => init_linear(store, "fuse.add", EMBED, EMBED, rng)?,
        Fusion::Concat => {}
    }
    init_linear(store, "head", EMBED, classes, rng)
}

/// Mixing weights of the two fusion branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mix {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Mix {
    fn default() -> Self {
        Mix { alpha: 0.3, beta: 0.7 }
    }
}

/// `E = alpha * E_vk + beta * E_g` with `E_vk = l(x_1 | ... | x_n)` and
/// `E_g` from the graph output (`graph` must be `[t, n * 64]` for
/// [`Fusion::Graph`]).
pub fn fuse<F: Float>(
    g: &mut Graph<F>,
    p: Bind<'_, F>,
    nodes: &[Var],
    graph: Option<Var>,
    fusion: Fusion,
    mix: Mix,
) -> Result<Var> {
    if mix.alpha < 0.0 || mix.beta < 0.0 {
        return Err(config_err(format!("mixing weights must be non-negative, got {mix:?}")));
    }
    for &x in nodes {
        if g.shape(x).len() != 2 || g.shape(x)[1] != EMBED {
            return Err(data_err(format!("node of shape {:?}, expected [t, {EMBED}]", g.shape(x))));
        }
    }
    let cat = g.concat(nodes, 1)?;
    let e_vk = p.linear(g, cat, "fuse.vk")?;
    match fusion {
        Fusion::Concat => Ok(e_vk),
        Fusion::Graph | Fusion::Add => {
            let e_g = if fusion == Fusion::Graph {
                let joined = graph.ok_or_else(|| data_err("graph fusion without graph output"))?;
                p.linear(g, joined, "fuse.g")?
            } else {
                let mut sum = nodes[0];
                for &x in &nodes[1..] {
                    sum = g.add(sum, x)?;
                }
                p.linear(g, sum, "fuse.add")?
            };
            let a = g.scale(e_vk, F::of(mix.alpha));
            let b = g.scale(e_g, F::of(mix.beta));
            Ok(g.add(a, b)?)
        }
    }
}

pub fn classify<F: Float>(g: &mut Graph<F>, p: Bind<'_, F>, fused: Var) -> Result<Var> {
    p.linear(g, fused, "head")
}

/// Loss weights of the training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub gamma: f64,
    pub delta: f64,
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            gamma: 0.9,
            delta: 0.1,
            lambda: 0.02,
        }
    }
}

/// Mean over frames of `-(1 + lambda * p_y) ln p_y`.
pub fn calibrated_ce<F: Float>(g: &mut Graph<F>, logits: Var, labels: &[usize], lambda: f64) -> Result<Var> {
    Ok(g.calibrated_cross_entropy(logits, labels, lambda)?)
}

/// `gamma * l_cce + delta * l_al`; a missing adversarial term counts as 0.
pub fn total_loss<F: Float>(g: &mut Graph<F>, l_cce: Var, l_al: Option<Var>, w: LossWeights) -> Result<Var> {
    let a = g.scale(l_cce, F::of(w.gamma));
    match l_al {
        Some(l) if w.delta != 0.0 => {
            let b = g.scale(l, F::of(w.delta));
            Ok(g.add(a, b)?)
        }
        _ => Ok(a),
    }
}

/// Per-frame class distribution, arg-max label and its probability.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub probs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub confidence: Vec<f64>,
}

pub fn predict<F: Float>(logits: &Tensor<F>) -> Prediction {
    let classes = logits.shape()[1];
    let mut out = Prediction {
        probs: Vec::new(),
        labels: Vec::new(),
        confidence: Vec::new(),
    };
    for row in logits.data().chunks(classes) {
        let m = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v.as_f64() - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let p: Vec<f64> = e.iter().map(|v| v / s).collect();
        let (arg, &conf) = p
            .iter()
            .enumerate()
            .fold((0, &p[0]), |best, (i, v)| if *v > *best.1 { (i, v) } else { best });
        out.labels.push(arg);
        out.confidence.push(conf);
        out.probs.push(p);
    }
    out
}
