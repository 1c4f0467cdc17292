//! Per-modality temporal encoders.
//!
//! Visual domains: a three-block CNN applied frame by frame, then dropout
//! and a TCN over time. Kinematics: the mean of an LSTM and a TCN.

use grad_tensor::{Float, Graph, ParamStore, Rng, Tensor, Var};

use crate::error::{data_err, Result};
use crate::layers::{init_conv, init_linear, Bind};

/// Width of every modality embedding and graph node.
pub const EMBED: usize = 64;
/// Output channels of the three CNN blocks.
pub const CNN_CHANNELS: [usize; 3] = [8, 16, 32];
pub const TCN_KERNEL: usize = 5;
/// Shortest sequence the encoders accept.
pub const MIN_STEPS: usize = 4;
/// Dropout on per-frame CNN features.
pub const FEATURE_DROPOUT: f64 = 0.5;

pub fn init_tcn<F: Float>(store: &mut ParamStore<F>, prefix: &str, c_in: usize, rng: &mut Rng) -> Result<()> {
    init_conv(store, &format!("{prefix}.0"), &[EMBED, c_in, TCN_KERNEL], rng)?;
    init_conv(store, &format!("{prefix}.1"), &[EMBED, EMBED, TCN_KERNEL], rng)?;
    init_conv(store, &format!("{prefix}.2"), &[EMBED, EMBED, TCN_KERNEL], rng)?;
    Ok(())
}

pub fn init_visual<F: Float>(store: &mut ParamStore<F>, prefix: &str, channels: usize, rng: &mut Rng) -> Result<()> {
    let mut c_in = channels;
    for (i, &c) in CNN_CHANNELS.iter().enumerate() {
        init_conv(store, &format!("{prefix}.conv{i}"), &[c, c_in, 3, 3], rng)?;
        c_in = c;
    }
    init_linear(store, &format!("{prefix}.fc"), c_in, EMBED, rng)?;
    init_tcn(store, &format!("{prefix}.tcn"), EMBED, rng)
}

pub fn init_kinematic<F: Float>(store: &mut ParamStore<F>, prefix: &str, dim: usize, rng: &mut Rng) -> Result<()> {
    let bound = 1.0 / (EMBED as f64).sqrt();
    let mut u = |shape: &[usize]| Tensor::from_fn(shape, |_| F::of(rng.uniform_in(-bound, bound)));
    store.insert(format!("{prefix}.lstm.w_ih"), u(&[dim, 4 * EMBED]))?;
    store.insert(format!("{prefix}.lstm.w_hh"), u(&[EMBED, 4 * EMBED]))?;
    store.insert(format!("{prefix}.lstm.b"), Tensor::zeros(&[4 * EMBED]))?;
    init_tcn(store, &format!("{prefix}.tcn"), dim, rng)
}

/// Encoder-decoder TCN over `x: [t, c_in]`, returning `[t, 64]`:
/// conv -> relu -> pool(2) -> conv -> relu -> upsample(2) -> conv.
pub fn tcn<F: Float>(g: &mut Graph<F>, p: Bind<'_, F>, prefix: &str, x: Var) -> Result<Var> {
    let steps = g.shape(x)[0];
    let h = g.transpose(x)?;
    let h = p.conv1d(g, h, &format!("{prefix}.0"))?;
    let h = g.relu(h);
    let h = g.max_pool1d(h)?;
    let h = p.conv1d(g, h, &format!("{prefix}.1"))?;
    let h = g.relu(h);
    let h = g.upsample1d(h)?;
    let h = if g.shape(h)[1] == steps { h } else { g.slice(h, 1, 0, steps)? };
    let h = p.conv1d(g, h, &format!("{prefix}.2"))?;
    Ok(g.transpose(h)?)
}

/// `x_t = TCN(Dropout(ReLU(CNN(I_t))))` for frames `[t, c, h, w]`.
pub fn encode_visual_domain<F: Float>(
    g: &mut Graph<F>,
    p: Bind<'_, F>,
    prefix: &str,
    frames: Var,
    rng: &mut Rng,
    training: bool,
) -> Result<Var> {
    let shape = g.shape(frames).to_vec();
    let expect = p
        .store
        .get(&format!("{prefix}.conv0.w"))
        .map(|w| w.shape()[1])
        .ok_or_else(|| data_err(format!("no encoder named {prefix}")))?;
    if shape.len() != 4 || shape[1] != expect {
        return Err(data_err(format!("{prefix}: frames {shape:?} do not have {expect} channels")));
    }
    if shape[0] < MIN_STEPS {
        return Err(data_err(format!("{prefix}: {} steps, need at least {MIN_STEPS}", shape[0])));
    }
    let mut h = frames;
    for i in 0..CNN_CHANNELS.len() {
        h = p.conv2d(g, h, &format!("{prefix}.conv{i}"))?;
        h = g.leaky_relu(h);
        h = g.max_pool2d(h)?;
    }
    let h = g.spatial_mean(h)?;
    let h = p.linear(g, h, &format!("{prefix}.fc"))?;
    let h = g.relu(h);
    let h = g.dropout(h, FEATURE_DROPOUT, rng, training)?;
    tcn(g, p, &format!("{prefix}.tcn"), h)
}

/// `x_k = (LSTM(x) + TCN(x)) * 0.5` for kinematics `[t, d]`.
pub fn encode_kinematics<F: Float>(g: &mut Graph<F>, p: Bind<'_, F>, prefix: &str, kin: Var) -> Result<Var> {
    let steps = g.shape(kin)[0];
    if steps < MIN_STEPS {
        return Err(data_err(format!("kinematics: {steps} steps, need at least {MIN_STEPS}")));
    }
    let w_ih = p.get(g, &format!("{prefix}.lstm.w_ih"))?;
    let w_hh = p.get(g, &format!("{prefix}.lstm.w_hh"))?;
    let b = p.get(g, &format!("{prefix}.lstm.b"))?;
    let rec = g.lstm(kin, w_ih, w_hh, b)?;
    let conv = tcn(g, p, &format!("{prefix}.tcn"), kin)?;
    let sum = g.add(rec, conv)?;
    Ok(g.scale(sum, F::of(0.5)))
}
