//! Vision-kinematic adversarial alignment.
//!
//! A small discriminator labels "source" embeddings true and "target"
//! embeddings false. The encoders are trained on
//! `L_AL = 0.5 * (sum_target mean_t ln(1 - D) + sum_source mean_t ln D)`
//! with the discriminator frozen, which pushes the two sides towards each
//! other's label.

use grad_tensor::{Adam, Float, Graph, ParamStore, Rng, Tensor, Var};

use crate::encoders::EMBED;
use crate::error::{data_err, Result};
use crate::layers::{init_linear, Bind};

/// Probability clamp applied before every logarithm.
pub const LOG_CLAMP: f64 = 1e-7;

const LAYERS: [(usize, usize); 3] = [(EMBED, 64), (64, 16), (16, 1)];

pub fn init_discriminator<F: Float>(store: &mut ParamStore<F>, rng: &mut Rng) -> Result<()> {
    for (i, (a, b)) in LAYERS.iter().enumerate() {
        init_linear(store, &format!("disc.{i}"), *a, *b, rng)?;
    }
    Ok(())
}

pub fn discriminator_names<F: Float>(store: &ParamStore<F>) -> Vec<String> {
    store.names().filter(|n| n.starts_with("disc.")).map(str::to_string).collect()
}

/// `sigmoid(l(tanh(l(leaky_relu(l(x))))))` row by row: `[t, 64] -> [t, 1]`.
pub fn discriminate<F: Float>(g: &mut Graph<F>, p: Bind<'_, F>, x: Var) -> Result<Var> {
    if g.shape(x).len() != 2 || g.shape(x)[1] != EMBED {
        return Err(data_err(format!("discriminator input {:?}, expected [t, {EMBED}]", g.shape(x))));
    }
    let h = p.linear(g, x, "disc.0")?;
    let h = g.leaky_relu(h);
    let h = p.linear(g, h, "disc.1")?;
    let h = g.tanh(h);
    let h = p.linear(g, h, "disc.2")?;
    Ok(g.sigmoid(h))
}

/// Mean over rows of `ln(clamp(d))` or `ln(1 - clamp(d))`.
fn mean_log<F: Float>(g: &mut Graph<F>, d: Var, complement: bool) -> Result<Var> {
    let d = if complement { g.affine(d, F::of(-1.0), F::one()) } else { d };
    let c = g.clamp(d, F::of(LOG_CLAMP), F::of(1.0 - LOG_CLAMP));
    let l = g.log(c)?;
    Ok(g.mean(l))
}

pub struct AdversarialLoss {
    pub l_fal: Var,
    pub l_tru: Var,
    pub l_al: Var,
}

fn sum_all<F: Float>(g: &mut Graph<F>, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(acc)
}

/// Adversarial objective for the encoders. Bind the discriminator frozen
/// so only the embeddings receive gradient.
pub fn vka_loss<F: Float>(g: &mut Graph<F>, disc: Bind<'_, F>, source: &[Var], target: &[Var]) -> Result<AdversarialLoss> {
    if source.is_empty() || target.is_empty() {
        return Err(data_err("adversarial loss needs source and target embeddings"));
    }
    let mut fal = Vec::new();
    for &x in target {
        let d = discriminate(g, disc, x)?;
        fal.push(mean_log(g, d, true)?);
    }
    let mut tru = Vec::new();
    for &x in source {
        let d = discriminate(g, disc, x)?;
        tru.push(mean_log(g, d, false)?);
    }
    let l_fal = sum_all(g, &fal)?;
    let l_tru = sum_all(g, &tru)?;
    let both = g.add(l_fal, l_tru)?;
    let l_al = g.scale(both, F::of(0.5));
    Ok(AdversarialLoss { l_fal, l_tru, l_al })
}

/// Binary cross-entropy of the discriminator, averaged over every row of
/// every stream: source rows have label 1, target rows label 0.
pub fn discriminator_bce<F: Float>(g: &mut Graph<F>, disc: Bind<'_, F>, source: &[Var], target: &[Var]) -> Result<Var> {
    let mut terms = Vec::new();
    let mut rows = 0;
    for (xs, complement) in [(source, false), (target, true)] {
        for &x in xs {
            let steps = g.shape(x)[0];
            let d = discriminate(g, disc, x)?;
            let m = mean_log(g, d, complement)?;
            terms.push(g.scale(m, F::of(steps as f64)));
            rows += steps;
        }
    }
    if terms.is_empty() {
        return Err(data_err("discriminator step without embeddings"));
    }
    let total = sum_all(g, &terms)?;
    Ok(g.scale(total, F::of(-1.0 / rows as f64)))
}

/// One optimiser step of the discriminator on detached embeddings.
/// Returns the cross-entropy before the update.
pub fn discriminator_step<F: Float>(
    store: &mut ParamStore<F>,
    opt: &mut Adam<F>,
    source: &[Tensor<F>],
    target: &[Tensor<F>],
) -> Result<f64> {
    let mut g = Graph::new();
    let s: Vec<Var> = source.iter().map(|t| g.constant(t.clone())).collect();
    let t: Vec<Var> = target.iter().map(|t| g.constant(t.clone())).collect();
    let loss = discriminator_bce(&mut g, Bind::train(store), &s, &t)?;
    let value = g.value(loss).data()[0].as_f64();
    let grads = g.backward(loss)?;
    let names = discriminator_names(store);
    opt.step_names(store, &grads, names.iter().map(String::as_str))?;
    Ok(value)
}
