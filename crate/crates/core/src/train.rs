//! Training loop.
//!
//! Each optimiser step covers `batch_size / window` random windows. With
//! VKA enabled the discriminator first takes a step on the detached
//! embeddings of the batch, then encoders, graph and head take one joint
//! step on `gamma * L_CCE + delta * L_AL` with the discriminator frozen.

use grad_tensor::{Adam, AdamConfig, Graph, Rng, Tensor, Var};

use crate::config::RunConfig;
use crate::dataset::Split;
use crate::error::{data_err, GradError, Result};
use crate::eval::predict_sequence;
use crate::model::{objective, GradModel, WindowInputs};
use crate::synth::WorkflowSequence;
use crate::vka::discriminator_step;

/// Independent random streams derived from the run seed.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const WINDOWS: u64 = 2;
    pub const DROPOUT: u64 = 3;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean joint objective over the epoch's steps.
    pub loss: f64,
    pub l_cce: f64,
    /// Mean `L_AL`; NaN when the adversarial term is off.
    pub l_al: f64,
    /// Mean discriminator cross-entropy; NaN when VKA is off.
    pub disc: f64,
    /// Frame accuracy on the validation sequences, if any are held out.
    pub val_acc: Option<f64>,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,loss,l_cce,l_al,disc,val_acc";

    pub fn csv_row(&self) -> String {
        let val = self.val_acc.map_or(String::from("nan"), |v| format!("{v:.6}"));
        format!(
            "{},{:.9},{:.9},{:.9},{:.9},{val}",
            self.epoch, self.loss, self.l_cce, self.l_al, self.disc
        )
    }
}

pub struct TrainOutcome {
    pub model: GradModel<f32>,
    pub log: Vec<EpochLog>,
}

/// Number of trailing training sequences held out for validation.
pub fn validation_count(n: usize, fraction: f64) -> usize {
    if n < 2 {
        return 0;
    }
    ((n as f64 * fraction).round() as usize).min(n - 1)
}

pub fn init_model(cfg: &RunConfig) -> Result<GradModel<f32>> {
    GradModel::new(cfg.model_config(), &mut Rng::derive(cfg.seed, stream::INIT))
}

/// Start frames of this epoch's windows as `(sequence, start)` pairs, shuffled.
fn draw_windows(seqs: &[WorkflowSequence], cfg: &RunConfig, rng: &mut Rng) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (i, s) in seqs.iter().enumerate() {
        let len = cfg.window.min(s.steps);
        for _ in 0..cfg.windows_per_sequence {
            out.push((i, rng.below(s.steps - len + 1), len));
        }
    }
    rng.shuffle(&mut out);
    out
}

fn frame_accuracy(model: &GradModel<f32>, seqs: &[WorkflowSequence]) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for s in seqs {
        let (pred, _) = predict_sequence(model, s)?;
        hit += pred.iter().zip(&s.labels).filter(|(p, t)| p == t).count();
        total += s.steps;
    }
    Ok(100.0 * hit as f64 / total.max(1) as f64)
}

struct StepStats {
    loss: f64,
    l_cce: f64,
    l_al: Option<f64>,
    disc: Option<f64>,
}

fn train_step(
    model: &mut GradModel<f32>,
    opt: &mut Adam<f32>,
    cfg: &RunConfig,
    batch: &[(&WorkflowSequence, usize, usize)],
    dropout: &mut Rng,
) -> Result<StepStats> {
    let weights = cfg.loss_weights();
    let vka = cfg.enable_vka && weights.delta > 0.0;
    let mut g = Graph::<f32>::new();
    let mut outs = Vec::with_capacity(batch.len());
    for &(seq, start, len) in batch {
        let inputs = WindowInputs::<f32>::build(
            &model.config,
            seq.frames_range(start, len),
            seq.kinematics_range(start, len),
            len,
            seq.height,
            seq.width,
        )?;
        let out = model.forward(&mut g, &inputs, dropout, true, true)?;
        outs.push((out, &seq.labels[start..start + len]));
    }

    let mut disc = None;
    if vka {
        let mut src: Vec<Tensor<f32>> = Vec::new();
        let mut tgt: Vec<Tensor<f32>> = Vec::new();
        for (out, _) in &outs {
            let (s, t) = cfg.adversarial.resolve(out);
            src.extend(s.iter().map(|&v| g.value(v).clone()));
            tgt.extend(t.iter().map(|&v| g.value(v).clone()));
        }
        if !src.is_empty() && !tgt.is_empty() {
            disc = Some(discriminator_step(&mut model.params, opt, &src, &tgt)?);
        }
    }

    let sides = vka.then_some(&cfg.adversarial);
    let mut totals: Vec<Var> = Vec::new();
    let (mut l_cce, mut l_al, mut n_al) = (0.0, 0.0, 0);
    for (out, labels) in &outs {
        let terms = objective(&mut g, model, out, labels, weights, sides)?;
        l_cce += g.value(terms.l_cce).data()[0] as f64;
        if let Some(a) = &terms.adversarial {
            l_al += g.value(a.l_al).data()[0] as f64;
            n_al += 1;
        }
        totals.push(terms.total);
    }
    let mut total = totals[0];
    for &t in &totals[1..] {
        total = g.add(total, t)?;
    }
    let k = totals.len() as f32;
    let total = g.scale(total, 1.0 / k);
    let loss = g.value(total).data()[0] as f64;
    if !loss.is_finite() {
        return Err(GradError::Divergence(format!(
            "objective {loss} (L_CCE sum {l_cce}, L_AL sum {l_al})"
        )));
    }
    let grads = g.backward(total)?;
    opt.step(&mut model.params, &grads)?;
    Ok(StepStats {
        loss,
        l_cce: l_cce / k as f64,
        l_al: (n_al > 0).then(|| l_al / n_al as f64),
        disc,
    })
}

/// Trains on `split`, calling `on_epoch` after every epoch.
pub fn train_with(cfg: &RunConfig, split: &Split, mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainOutcome> {
    cfg.validate()?;
    split.validate()?;
    if split.classes != cfg.phases.classes {
        return Err(data_err(format!(
            "split has {} classes, configuration {}",
            split.classes, cfg.phases.classes
        )));
    }
    let n_val = validation_count(split.sequences.len(), cfg.val_fraction);
    let (fit, val) = split.sequences.split_at(split.sequences.len() - n_val);

    let mut model = init_model(cfg)?;
    let mut opt = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..Default::default()
    });
    let mut window_rng = Rng::derive(cfg.seed, stream::WINDOWS);
    let mut dropout = Rng::derive(cfg.seed, stream::DROPOUT);
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let windows = draw_windows(fit, cfg, &mut window_rng);
        let (mut loss, mut cce, mut al, mut disc) = (0.0, 0.0, Vec::new(), Vec::new());
        let mut steps = 0;
        for chunk in windows.chunks(cfg.windows_per_step()) {
            let batch: Vec<_> = chunk.iter().map(|&(i, s, l)| (&fit[i], s, l)).collect();
            let st = train_step(&mut model, &mut opt, cfg, &batch, &mut dropout)
                .map_err(|e| match e {
                    GradError::Divergence(m) => GradError::Divergence(format!("epoch {epoch}, step {}: {m}", steps + 1)),
                    other => other,
                })?;
            loss += st.loss;
            cce += st.l_cce;
            al.extend(st.l_al);
            disc.extend(st.disc);
            steps += 1;
        }
        if !model.params.all_finite() {
            return Err(GradError::Divergence(format!("non-finite parameters after epoch {epoch}")));
        }
        let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        let entry = EpochLog {
            epoch,
            loss: loss / steps as f64,
            l_cce: cce / steps as f64,
            l_al: mean(&al),
            disc: mean(&disc),
            val_acc: if val.is_empty() { None } else { Some(frame_accuracy(&model, val)?) },
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { model, log })
}

pub fn train(cfg: &RunConfig, split: &Split) -> Result<TrainOutcome> {
    train_with(cfg, split, |_| {})
}
