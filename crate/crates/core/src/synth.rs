//! Synthetic surgical workflows.
//!
//! Each sequence walks a left-to-right chain of phases. Every phase has a
//! fixed motion primitive for both 7-DoF arms and a render style (disc
//! radius and colour per arm). Frames show the two arms as discs at the
//! projection of their `(x, y)` coordinates over a textured background.

use grad_tensor::Rng;

use crate::error::{config_err, Result};

/// Values per arm: x, y, z, roll, pitch, yaw, gripper angle.
pub const ARM_DOF: usize = 7;
pub const KIN_DIM: usize = 2 * ARM_DOF;
/// Standard deviation of the additive kinematic noise.
pub const KIN_JITTER: f64 = 0.01;

/// One recorded procedure: frames `[t, 3, h, w]` in `[0, 1]`,
/// kinematics `[t, 14]` (left arm first) and per-frame phase labels.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowSequence {
    pub steps: usize,
    pub height: usize,
    pub width: usize,
    pub frames: Vec<f32>,
    pub kin_dim: usize,
    pub kinematics: Vec<f32>,
    pub labels: Vec<usize>,
}

impl WorkflowSequence {
    pub fn frame_len(&self) -> usize {
        3 * self.height * self.width
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.frame_len();
        &self.frames[t * n..(t + 1) * n]
    }

    pub fn frames_range(&self, start: usize, len: usize) -> &[f32] {
        let n = self.frame_len();
        &self.frames[start * n..(start + len) * n]
    }

    pub fn kinematics_range(&self, start: usize, len: usize) -> &[f32] {
        &self.kinematics[start * self.kin_dim..(start + len) * self.kin_dim]
    }
}

/// Generator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseModel {
    pub classes: usize,
    pub steps: usize,
    pub size: usize,
    /// Inclusive duration range drawn per phase before rescaling to `steps`.
    pub min_duration: usize,
    pub max_duration: usize,
    /// Chance that an interior phase is left out of a sequence.
    pub skip_prob: f64,
}

impl Default for PhaseModel {
    fn default() -> Self {
        PhaseModel {
            classes: 6,
            steps: 240,
            size: 64,
            min_duration: 24,
            max_duration: 56,
            skip_prob: 0.1,
        }
    }
}

impl PhaseModel {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(config_err(format!("need at least 2 phases, got {}", self.classes)));
        }
        if self.min_duration == 0 || self.min_duration > self.max_duration {
            return Err(config_err(format!(
                "degenerate phase durations [{}, {}]",
                self.min_duration, self.max_duration
            )));
        }
        if self.steps < self.classes {
            return Err(config_err(format!("{} frames cannot hold {} phases", self.steps, self.classes)));
        }
        if self.size < 16 || self.size % 8 != 0 {
            return Err(config_err(format!("frame size {} must be a multiple of 8, at least 16", self.size)));
        }
        if !(0.0..1.0).contains(&self.skip_prob) {
            return Err(config_err(format!("skip probability {} outside [0, 1)", self.skip_prob)));
        }
        Ok(())
    }
}

/// Pixel coordinates `(column, row)` of a normalised arm position
/// `(x, y) in [-1, 1]^2` on a `size x size` canvas.
pub fn project(x: f64, y: f64, size: usize) -> (f64, f64) {
    let s = (size - 1) as f64;
    ((x + 1.0) * 0.5 * s, (y + 1.0) * 0.5 * s)
}

#[derive(Debug, Clone)]
struct ArmPrimitive {
    center: [f64; ARM_DOF],
    amplitude: [f64; ARM_DOF],
    /// Cycles per phase.
    cycles: [f64; ARM_DOF],
    radius: f64,
    color: [f64; 3],
}

/// Motion and style of every phase, identical for all sequences.
fn phase_library(classes: usize) -> Vec<[ArmPrimitive; 2]> {
    let mut rng = Rng::new(0x9E37_79B9);
    (0..classes)
        .map(|p| {
            let arm = |side: usize, rng: &mut Rng| {
                let mut center = [0.0; ARM_DOF];
                let mut amplitude = [0.0; ARM_DOF];
                let mut cycles = [0.0; ARM_DOF];
                // left arm works on the left half of the field, right on the right
                let bias = if side == 0 { -0.3 } else { 0.3 };
                center[0] = bias + rng.uniform_in(-0.3, 0.3);
                center[1] = rng.uniform_in(-0.45, 0.45);
                for d in 2..6 {
                    center[d] = rng.uniform_in(-0.5, 0.5);
                }
                center[6] = rng.uniform_in(0.1, 0.9);
                for d in 0..ARM_DOF {
                    amplitude[d] = if d < 2 { rng.uniform_in(0.05, 0.2) } else { rng.uniform_in(0.05, 0.3) };
                    cycles[d] = rng.uniform_in(0.5, 2.5);
                }
                let hue = (p as f64 / classes as f64 + if side == 0 { 0.0 } else { 0.5 }) % 1.0;
                ArmPrimitive {
                    center,
                    amplitude,
                    cycles,
                    radius: 3.0 + 4.0 * ((p * 3 + side * 2) % classes) as f64 / classes as f64,
                    color: hue_to_rgb(hue),
                }
            };
            [arm(0, &mut rng), arm(1, &mut rng)]
        })
        .collect()
}

fn hue_to_rgb(h: f64) -> [f64; 3] {
    let f = |n: f64| {
        let k = (n + h * 6.0) % 6.0;
        let v = 1.0 - k.min(4.0 - k).clamp(0.0, 1.0);
        0.15 + 0.8 * v
    };
    [f(5.0), f(3.0), f(1.0)]
}

/// Phase sequence and durations summing to `model.steps`.
fn draw_schedule(model: &PhaseModel, rng: &mut Rng) -> Vec<(usize, usize)> {
    let mut phases: Vec<usize> = (0..model.classes)
        .filter(|&p| p == 0 || p + 1 == model.classes || !rng.bernoulli(model.skip_prob))
        .collect();
    if phases.len() > model.steps {
        phases.truncate(model.steps);
    }
    let raw: Vec<f64> = phases
        .iter()
        .map(|_| (model.min_duration + rng.below(model.max_duration - model.min_duration + 1)) as f64)
        .collect();
    let total: f64 = raw.iter().sum();
    // largest-remainder rounding, at least one frame per phase
    let scaled: Vec<f64> = raw.iter().map(|r| r / total * model.steps as f64).collect();
    let mut dur: Vec<usize> = scaled.iter().map(|v| (v.floor() as usize).max(1)).collect();
    let mut sum: usize = dur.iter().sum();
    let mut order: Vec<usize> = (0..dur.len()).collect();
    order.sort_by(|&a, &b| (scaled[b] - scaled[b].floor()).total_cmp(&(scaled[a] - scaled[a].floor())));
    let mut i = 0;
    while sum < model.steps {
        dur[order[i % order.len()]] += 1;
        sum += 1;
        i += 1;
    }
    while sum > model.steps {
        let j = (0..dur.len()).max_by_key(|&j| dur[j]).unwrap();
        dur[j] -= 1;
        sum -= 1;
    }
    phases.into_iter().zip(dur).collect()
}

fn background(size: usize, rng: &mut Rng) -> Vec<f64> {
    let n = size * size;
    let mut out = vec![0.0; 3 * n];
    let base = [rng.uniform_in(0.3, 0.45), rng.uniform_in(0.25, 0.4), rng.uniform_in(0.25, 0.4)];
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.uniform_in(0.5, 3.0),
                rng.uniform_in(0.5, 3.0),
                rng.uniform_in(0.0, std::f64::consts::TAU),
                rng.uniform_in(0.02, 0.06),
            )
        })
        .collect();
    for y in 0..size {
        for x in 0..size {
            let (u, v) = (x as f64 / size as f64, y as f64 / size as f64);
            let tex: f64 = waves
                .iter()
                .map(|&(fx, fy, ph, a)| a * (std::f64::consts::TAU * (fx * u + fy * v) + ph).sin())
                .sum();
            for c in 0..3 {
                out[c * n + y * size + x] = (base[c] + tex + 0.01 * rng.normal()).clamp(0.0, 1.0);
            }
        }
    }
    out
}

fn draw_disc(img: &mut [f64], size: usize, cx: f64, cy: f64, r: f64, color: [f64; 3]) {
    let n = size * size;
    let (y0, y1) = ((cy - r).floor().max(0.0) as usize, ((cy + r).ceil() as usize).min(size - 1));
    let (x0, x1) = ((cx - r).floor().max(0.0) as usize, ((cx + r).ceil() as usize).min(size - 1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy <= r * r {
                for c in 0..3 {
                    img[c * n + y * size + x] = color[c];
                }
            }
        }
    }
}

/// Render style of one arm at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscStyle {
    pub radius: f64,
    pub color: [f64; 3],
}

/// Generates sequence `index` of a dataset seeded with `seed`.
pub fn generate_sequence(model: &PhaseModel, seed: u64, index: u64) -> Result<WorkflowSequence> {
    Ok(generate_with_styles(model, seed, index)?.0)
}

/// As [`generate_sequence`], also returning the noise-free arm positions
/// and styles drawn on every frame (left, right).
pub fn generate_with_styles(
    model: &PhaseModel,
    seed: u64,
    index: u64,
) -> Result<(WorkflowSequence, Vec<[(f64, f64, DiscStyle); 2]>)> {
    model.validate()?;
    let lib = phase_library(model.classes);
    let mut rng = Rng::derive(seed, index);
    let schedule = draw_schedule(model, &mut rng);
    let bg = background(model.size, &mut rng);
    // per-sequence variation of the primitives
    let offset: Vec<f64> = (0..KIN_DIM).map(|_| rng.uniform_in(-0.06, 0.06)).collect();
    let gain = rng.uniform_in(0.8, 1.2);
    let phase_shift: Vec<f64> = (0..KIN_DIM).map(|_| rng.uniform_in(0.0, std::f64::consts::TAU)).collect();

    let size = model.size;
    let mut seq = WorkflowSequence {
        steps: model.steps,
        height: size,
        width: size,
        frames: Vec::with_capacity(model.steps * 3 * size * size),
        kin_dim: KIN_DIM,
        kinematics: Vec::with_capacity(model.steps * KIN_DIM),
        labels: Vec::with_capacity(model.steps),
    };
    let mut drawn = Vec::with_capacity(model.steps);
    for &(phase, len) in &schedule {
        for k in 0..len {
            let tau = (k as f64 + 0.5) / len as f64;
            let mut clean = [0.0; KIN_DIM];
            for arm in 0..2 {
                let prim = &lib[phase][arm];
                for d in 0..ARM_DOF {
                    let i = arm * ARM_DOF + d;
                    let wave = (std::f64::consts::TAU * prim.cycles[d] * tau + phase_shift[i]).sin();
                    clean[i] = prim.center[d] + offset[i] + gain * prim.amplitude[d] * wave;
                }
                clean[arm * ARM_DOF] = clean[arm * ARM_DOF].clamp(-0.95, 0.95);
                clean[arm * ARM_DOF + 1] = clean[arm * ARM_DOF + 1].clamp(-0.95, 0.95);
            }
            let mut img = bg.clone();
            let mut placed = [(0.0, 0.0, DiscStyle { radius: 0.0, color: [0.0; 3] }); 2];
            for arm in 0..2 {
                let prim = &lib[phase][arm];
                let (cx, cy) = project(clean[arm * ARM_DOF], clean[arm * ARM_DOF + 1], size);
                let style = DiscStyle {
                    radius: prim.radius * size as f64 / 64.0,
                    color: prim.color,
                };
                draw_disc(&mut img, size, cx, cy, style.radius, style.color);
                placed[arm] = (clean[arm * ARM_DOF], clean[arm * ARM_DOF + 1], style);
            }
            drawn.push(placed);
            seq.frames.extend(img.iter().map(|&v| v as f32));
            seq.kinematics
                .extend(clean.iter().map(|&v| (v + KIN_JITTER * rng.normal()) as f32));
            seq.labels.push(phase);
        }
    }
    Ok((seq, drawn))
}

/// Training and test splits; sequence `i` of the test split uses stream
/// `n_train + i` so the splits never share a sequence.
pub fn generate_dataset(
    seed: u64,
    n_train: usize,
    n_test: usize,
    model: &PhaseModel,
) -> Result<(Vec<WorkflowSequence>, Vec<WorkflowSequence>)> {
    if n_train == 0 || n_test == 0 {
        return Err(config_err("both splits need at least one sequence"));
    }
    let gen = |range: std::ops::Range<usize>| {
        range
            .map(|i| generate_sequence(model, seed, i as u64))
            .collect::<Result<Vec<_>>>()
    };
    Ok((gen(0..n_train)?, gen(n_train..n_train + n_test)?))
}
