//! Full-sequence inference and evaluation runs.

use grad_tensor::Float;

use crate::corrupt::{corrupt_dataset, CorruptionSpec};
use crate::decoder::predict;
use crate::error::{data_err, Result};
use crate::metrics::MetricsReport;
use crate::model::{GradModel, WindowInputs};
use crate::synth::WorkflowSequence;

/// Stream used for corruption noise so that every model sees identical
/// corrupted frames.
pub const CORRUPTION_STREAM: u64 = 0xC0DE;

/// Per-frame labels and confidences for a whole sequence in one pass.
pub fn predict_sequence<F: Float>(model: &GradModel<F>, seq: &WorkflowSequence) -> Result<(Vec<usize>, Vec<f64>)> {
    if seq.kin_dim != model.config.kin_dim {
        return Err(data_err(format!(
            "sequence has {} kinematic channels, model expects {}",
            seq.kin_dim, model.config.kin_dim
        )));
    }
    let inputs = WindowInputs::<F>::build(&model.config, &seq.frames, &seq.kinematics, seq.steps, seq.height, seq.width)?;
    let logits = model.infer(&inputs)?;
    let p = predict(&logits);
    Ok((p.labels, p.confidence))
}

/// Predictions for every sequence, optionally after corrupting its frames.
pub fn predict_split<F: Float>(
    model: &GradModel<F>,
    sequences: &[WorkflowSequence],
    corruption: Option<CorruptionSpec>,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let corrupted;
    let seqs = match corruption {
        Some(spec) if spec.severity > 0 => {
            corrupted = corrupt_dataset(sequences, spec, seed ^ CORRUPTION_STREAM)?;
            &corrupted[..]
        }
        _ => sequences,
    };
    seqs.iter().map(|s| predict_sequence(model, s).map(|p| p.0)).collect()
}

/// Metrics averaged over sequences.
pub fn evaluate<F: Float>(
    model: &GradModel<F>,
    sequences: &[WorkflowSequence],
    corruption: Option<CorruptionSpec>,
    seed: u64,
) -> Result<MetricsReport> {
    let preds = predict_split(model, sequences, corruption, seed)?;
    report(&preds, sequences)
}

pub fn report(preds: &[Vec<usize>], sequences: &[WorkflowSequence]) -> Result<MetricsReport> {
    let pairs: Vec<(Vec<usize>, Vec<usize>)> = preds
        .iter()
        .zip(sequences)
        .map(|(p, s)| (p.clone(), s.labels.clone()))
        .collect();
    MetricsReport::evaluate(&pairs)
}

/// Reports for every kind at severities 1..=5, kind-major.
pub fn corruption_sweep<F: Float>(
    model: &GradModel<F>,
    sequences: &[WorkflowSequence],
    seed: u64,
) -> Result<Vec<(CorruptionSpec, MetricsReport)>> {
    CorruptionSpec::grid()
        .into_iter()
        .map(|spec| Ok((spec, evaluate(model, sequences, Some(spec), seed)?)))
        .collect()
}

/// `sequence,frame,truth,pred,confidence` rows.
pub fn predictions_csv<F: Float>(model: &GradModel<F>, sequences: &[WorkflowSequence]) -> Result<String> {
    let mut out = String::from("sequence,frame,truth,pred,confidence\n");
    for (i, s) in sequences.iter().enumerate() {
        let (labels, conf) = predict_sequence(model, s)?;
        for t in 0..s.steps {
            out.push_str(&format!("{i},{t},{},{},{:.6}\n", s.labels[t], labels[t], conf[t]));
        }
    }
    Ok(out)
}
