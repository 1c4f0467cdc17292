//! The assembled recognition network.

use std::fmt;

use grad_tensor::{Float, Graph, ParamStore, Rng, Tensor, Var};

use crate::decoder::{calibrated_ce, classify, fuse, init_decoder, total_loss, Fusion, LossWeights, Mix};
use crate::encoders::{encode_kinematics, encode_visual_domain, init_kinematic, init_visual, MIN_STEPS};
use crate::error::{config_err, data_err, Result};
use crate::freq::disentangle_frame;
use crate::gat::{gat_forward, init_gat, GraphOutput, HEADS};
use crate::layers::Bind;
use crate::vka::{init_discriminator, vka_loss, AdversarialLoss};

/// Graph node / embedding stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Spatial,
    Wavelet,
    Fourier,
    Kinematic,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Spatial, Modality::Wavelet, Modality::Fourier, Modality::Kinematic];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Spatial => "spatial",
            Modality::Wavelet => "wavelet",
            Modality::Fourier => "fourier",
            Modality::Kinematic => "kin",
        }
    }

    pub fn short(self) -> char {
        match self {
            Modality::Spatial => 'V',
            Modality::Wavelet => 'W',
            Modality::Fourier => 'F',
            Modality::Kinematic => 'K',
        }
    }

    pub fn from_short(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.short() == c.to_ascii_uppercase())
    }

    fn encoder(self) -> String {
        format!("enc.{}", self.name())
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture switches that decide which parameters exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub classes: usize,
    pub kin_dim: usize,
    pub wavelet: bool,
    pub fourier: bool,
    pub fusion: Fusion,
    pub mix: Mix,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            classes: 6,
            kin_dim: 14,
            wavelet: true,
            fourier: true,
            fusion: Fusion::Graph,
            mix: Mix::default(),
        }
    }
}

impl ModelConfig {
    /// Graph nodes in order: visual streams first, kinematics last.
    pub fn modalities(&self) -> Vec<Modality> {
        Modality::ALL
            .into_iter()
            .filter(|m| match m {
                Modality::Wavelet => self.wavelet,
                Modality::Fourier => self.fourier,
                _ => true,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(config_err(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.kin_dim == 0 {
            return Err(config_err("kinematic width must be positive"));
        }
        if self.mix.alpha < 0.0 || self.mix.beta < 0.0 {
            return Err(config_err(format!("alpha/beta must be non-negative, got {:?}", self.mix)));
        }
        Ok(())
    }
}

/// Network inputs for one window of `steps` frames.
#[derive(Debug, Clone)]
pub struct WindowInputs<F> {
    pub steps: usize,
    /// `[t, 3, h, w]`
    pub spatial: Tensor<F>,
    /// `[t, 4, h/2, w/2]`
    pub wavelet: Option<Tensor<F>>,
    /// `[t, 1, h, w]`
    pub fourier: Option<Tensor<F>>,
    /// `[t, d]`
    pub kinematics: Tensor<F>,
}

impl<F: Float> WindowInputs<F> {
    /// Builds every view the configuration needs from RGB frames
    /// `[t, 3, h, w]` and kinematics `[t, d]`.
    pub fn build(cfg: &ModelConfig, frames: &[f32], kinematics: &[f32], steps: usize, h: usize, w: usize) -> Result<Self> {
        let frame = 3 * h * w;
        if steps == 0 || frames.len() != steps * frame {
            return Err(data_err(format!("{} frame values for {steps} frames of 3x{h}x{w}", frames.len())));
        }
        if kinematics.len() != steps * cfg.kin_dim {
            return Err(data_err(format!(
                "{} kinematic values for {steps} frames of width {}",
                kinematics.len(),
                cfg.kin_dim
            )));
        }
        let cast = |v: &[f32], shape: &[usize]| Tensor::from_fn(shape, |i| F::of(v[i] as f64));
        let mut wav = Vec::new();
        let mut fou = Vec::new();
        if cfg.wavelet || cfg.fourier {
            for t in 0..steps {
                let v = disentangle_frame(&frames[t * frame..(t + 1) * frame], 3, h, w)?;
                if cfg.wavelet {
                    wav.extend_from_slice(&v.wavelet);
                }
                if cfg.fourier {
                    fou.extend_from_slice(&v.fourier);
                }
            }
        }
        let (h2, w2) = (h.div_ceil(2), w.div_ceil(2));
        let (hf, wf) = (h.next_power_of_two(), w.next_power_of_two());
        Ok(WindowInputs {
            steps,
            spatial: cast(frames, &[steps, 3, h, w]),
            wavelet: cfg.wavelet.then(|| cast(&wav, &[steps, 4, h2, w2])),
            fourier: cfg.fourier.then(|| cast(&fou, &[steps, 1, hf, wf])),
            kinematics: cast(kinematics, &[steps, cfg.kin_dim]),
        })
    }

    fn visual(&self, m: Modality) -> Option<&Tensor<F>> {
        match m {
            Modality::Spatial => Some(&self.spatial),
            Modality::Wavelet => self.wavelet.as_ref(),
            Modality::Fourier => self.fourier.as_ref(),
            Modality::Kinematic => None,
        }
    }
}

pub struct ForwardOutput<F> {
    /// Pre-graph embeddings `[t, 64]` keyed by modality.
    pub embeddings: Vec<(Modality, Var)>,
    pub graph: Option<GraphOutput<F>>,
    pub fused: Var,
    pub logits: Var,
}

impl<F> ForwardOutput<F> {
    pub fn embedding(&self, m: Modality) -> Option<Var> {
        self.embeddings.iter().find(|(k, _)| *k == m).map(|&(_, v)| v)
    }
}

/// Parameters plus the configuration that shaped them. The discriminator
/// lives in the same store under `disc.`.
#[derive(Debug, Clone)]
pub struct GradModel<F> {
    pub config: ModelConfig,
    pub params: ParamStore<F>,
}

impl<F: Float> GradModel<F> {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mods = config.modalities();
        for &m in &mods {
            match m {
                Modality::Spatial => init_visual(&mut params, &m.encoder(), 3, rng)?,
                Modality::Wavelet => init_visual(&mut params, &m.encoder(), 4, rng)?,
                Modality::Fourier => init_visual(&mut params, &m.encoder(), 1, rng)?,
                Modality::Kinematic => init_kinematic(&mut params, &m.encoder(), config.kin_dim, rng)?,
            }
        }
        if config.fusion == Fusion::Graph {
            let names: Vec<&str> = mods.iter().map(|m| m.name()).collect();
            init_gat(&mut params, &names, crate::encoders::EMBED, HEADS, rng)?;
        }
        init_decoder(&mut params, mods.len(), config.classes, config.fusion, rng)?;
        init_discriminator(&mut params, rng)?;
        Ok(GradModel { config, params })
    }

    pub fn cast<G: Float>(&self) -> GradModel<G> {
        GradModel {
            config: self.config,
            params: self.params.cast(),
        }
    }

    /// Encoders, graph, fusion and head. With `trainable` the weights are
    /// differentiable leaves; the discriminator is never touched.
    pub fn forward(
        &self,
        g: &mut Graph<F>,
        inputs: &WindowInputs<F>,
        rng: &mut Rng,
        training: bool,
        trainable: bool,
    ) -> Result<ForwardOutput<F>> {
        if inputs.steps < MIN_STEPS {
            return Err(data_err(format!("{} frames, need at least {MIN_STEPS}", inputs.steps)));
        }
        let p = Bind {
            store: &self.params,
            trainable,
        };
        let mut embeddings = Vec::new();
        for m in self.config.modalities() {
            let x = match m {
                Modality::Kinematic => {
                    let k = g.constant(inputs.kinematics.clone());
                    encode_kinematics(g, p, &m.encoder(), k)?
                }
                _ => {
                    let t = inputs
                        .visual(m)
                        .ok_or_else(|| data_err(format!("inputs lack the {m} view")))?;
                    let x = g.constant(t.clone());
                    encode_visual_domain(g, p, &m.encoder(), x, rng, training)?
                }
            };
            embeddings.push((m, x));
        }
        let graph = if self.config.fusion == Fusion::Graph {
            let named: Vec<(&str, Var)> = embeddings.iter().map(|&(m, v)| (m.name(), v)).collect();
            Some(gat_forward(g, p, &named, rng, training)?)
        } else {
            None
        };
        let nodes: Vec<Var> = embeddings.iter().map(|&(_, v)| v).collect();
        let fused = fuse(g, p, &nodes, graph.as_ref().map(|o| o.joined), self.config.fusion, self.config.mix)?;
        let logits = classify(g, p, fused)?;
        Ok(ForwardOutput {
            embeddings,
            graph,
            fused,
            logits,
        })
    }

    /// Logits `[t, classes]` in inference mode, without a backward tape.
    pub fn infer(&self, inputs: &WindowInputs<F>) -> Result<Tensor<F>> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, inputs, &mut Rng::new(0), false, false)?;
        Ok(g.value(out.logits).clone())
    }
}

/// Which embedding streams the discriminator treats as true (source) and
/// false (target).
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialSides {
    pub source: Vec<Modality>,
    pub target: Vec<Modality>,
}

impl Default for AdversarialSides {
    fn default() -> Self {
        AdversarialSides {
            source: vec![Modality::Spatial, Modality::Wavelet, Modality::Fourier],
            target: vec![Modality::Kinematic],
        }
    }
}

impl AdversarialSides {
    /// Parses `"VWF:K"` style descriptions.
    pub fn parse(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| config_err(format!("adversarial sides {s:?} need the form SOURCE:TARGET")))?;
        let side = |part: &str| -> Result<Vec<Modality>> {
            part.trim()
                .chars()
                .filter(|c| *c != '+')
                .map(|c| Modality::from_short(c).ok_or_else(|| config_err(format!("unknown modality letter {c:?}"))))
                .collect()
        };
        let sides = AdversarialSides {
            source: side(a)?,
            target: side(b)?,
        };
        if sides.source.is_empty() || sides.target.is_empty() || sides.source.iter().any(|m| sides.target.contains(m)) {
            return Err(config_err(format!("adversarial sides {s:?} must be non-empty and disjoint")));
        }
        Ok(sides)
    }

    pub fn describe(&self) -> String {
        let f = |v: &[Modality]| v.iter().map(|m| m.short()).collect::<String>();
        format!("{}:{}", f(&self.source), f(&self.target))
    }

    /// Streams present in the forward output, in declared order.
    pub fn resolve<F>(&self, out: &ForwardOutput<F>) -> (Vec<Var>, Vec<Var>) {
        let pick = |ms: &[Modality]| ms.iter().filter_map(|&m| out.embedding(m)).collect();
        (pick(&self.source), pick(&self.target))
    }
}

/// Scalar pieces of one objective evaluation.
pub struct ObjectiveTerms {
    pub total: Var,
    pub l_cce: Var,
    pub adversarial: Option<AdversarialLoss>,
}

/// `gamma * L_CCE + delta * L_AL` on an existing forward pass, with the
/// discriminator read as constants. Pass `sides = None` to leave the
/// adversarial term out.
pub fn objective<F: Float>(
    g: &mut Graph<F>,
    model: &GradModel<F>,
    out: &ForwardOutput<F>,
    labels: &[usize],
    weights: LossWeights,
    sides: Option<&AdversarialSides>,
) -> Result<ObjectiveTerms> {
    let l_cce = calibrated_ce(g, out.logits, labels, weights.lambda)?;
    let adversarial = match sides {
        Some(s) if weights.delta != 0.0 => {
            let (src, tgt) = s.resolve(out);
            if src.is_empty() || tgt.is_empty() {
                None
            } else {
                Some(vka_loss(g, Bind::frozen(&model.params), &src, &tgt)?)
            }
        }
        _ => None,
    };
    let total = total_loss(g, l_cce, adversarial.as_ref().map(|a| a.l_al), weights)?;
    Ok(ObjectiveTerms {
        total,
        l_cce,
        adversarial,
    })
}
