//! Frame accuracy, segmental edit score and precision/recall/F1.
//!
//! "Overall" precision and recall are support-weighted means of the
//! per-class values, so overall recall equals frame accuracy whenever every
//! class occurs in the truth. Reports are computed per sequence and then
//! averaged over sequences.

use std::collections::BTreeMap;

use crate::error::{data_err, Result};

/// Run-length encoding `(label, length)` of a label sequence.
pub fn segments(labels: &[usize]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &l in labels {
        match out.last_mut() {
            Some((last, n)) if *last == l => *n += 1,
            _ => out.push((l, 1)),
        }
    }
    out
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(data_err(format!(
            "prediction has {} frames, truth {}",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(data_err("empty label sequence"));
    }
    Ok(())
}

pub fn frame_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / truth.len() as f64)
}

/// Unit-cost Levenshtein distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `100 (1 - d / max(x, y))` over the segment label sequences.
pub fn edit_score(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.is_empty() || truth.is_empty() {
        return Err(data_err("edit score of an empty sequence"));
    }
    let p: Vec<usize> = segments(pred).into_iter().map(|s| s.0).collect();
    let t: Vec<usize> = segments(truth).into_iter().map(|s| s.0).collect();
    let d = levenshtein(&p, &t) as f64;
    Ok(100.0 * (1.0 - d / p.len().max(t.len()) as f64))
}

/// One-vs-rest statistics of a class, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Set when nothing was predicted as this class, so precision fell back to 0.
    pub no_predictions: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrfSummary {
    pub op: f64,
    pub or_: f64,
    pub of1: f64,
    pub cp: f64,
    pub cr: f64,
    pub cf1: f64,
    /// Classes present in the truth.
    pub per_class: BTreeMap<usize, ClassStats>,
    /// Classes predicted but absent from the truth; excluded from every mean.
    pub absent: Vec<usize>,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

pub fn prf(pred: &[usize], truth: &[usize]) -> Result<PrfSummary> {
    check_lengths(pred, truth)?;
    let mut tp: BTreeMap<usize, usize> = BTreeMap::new();
    let mut predicted: BTreeMap<usize, usize> = BTreeMap::new();
    let mut support: BTreeMap<usize, usize> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *predicted.entry(p).or_default() += 1;
        *support.entry(t).or_default() += 1;
        if p == t {
            *tp.entry(t).or_default() += 1;
        }
    }
    let mut out = PrfSummary {
        absent: predicted.keys().filter(|c| !support.contains_key(c)).copied().collect(),
        ..Default::default()
    };
    let total = truth.len() as f64;
    for (&c, &n) in &support {
        let hit = tp.get(&c).copied().unwrap_or(0) as f64;
        let np = predicted.get(&c).copied().unwrap_or(0);
        let precision = if np > 0 { 100.0 * hit / np as f64 } else { 0.0 };
        let recall = 100.0 * hit / n as f64;
        let stats = ClassStats {
            precision,
            recall,
            f1: harmonic(precision, recall),
            support: n,
            no_predictions: np == 0,
        };
        let weight = n as f64 / total;
        out.op += weight * precision;
        out.or_ += weight * recall;
        out.per_class.insert(c, stats);
    }
    let k = out.per_class.len() as f64;
    out.cp = out.per_class.values().map(|s| s.precision).sum::<f64>() / k;
    out.cr = out.per_class.values().map(|s| s.recall).sum::<f64>() / k;
    out.cf1 = out.per_class.values().map(|s| s.f1).sum::<f64>() / k;
    out.of1 = harmonic(out.op, out.or_);
    Ok(out)
}

/// Aggregate measures of one evaluation run, in percent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub acc: f64,
    pub edit: f64,
    pub op: f64,
    pub or_: f64,
    pub of1: f64,
    pub cp: f64,
    pub cr: f64,
    pub cf1: f64,
    /// Per-class means over the sequences containing the class; support is summed.
    pub per_class: BTreeMap<usize, ClassStats>,
    pub sequences: usize,
}

impl MetricsReport {
    pub fn for_sequence(pred: &[usize], truth: &[usize]) -> Result<MetricsReport> {
        let s = prf(pred, truth)?;
        Ok(MetricsReport {
            acc: frame_accuracy(pred, truth)?,
            edit: edit_score(pred, truth)?,
            op: s.op,
            or_: s.or_,
            of1: s.of1,
            cp: s.cp,
            cr: s.cr,
            cf1: s.cf1,
            per_class: s.per_class,
            sequences: 1,
        })
    }

    /// Mean over sequences. OF1 is recomputed from the averaged OP and OR.
    pub fn average(reports: &[MetricsReport]) -> Result<MetricsReport> {
        if reports.is_empty() {
            return Err(data_err("no reports to average"));
        }
        let n = reports.len() as f64;
        let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let mut per_class: BTreeMap<usize, (ClassStats, usize)> = BTreeMap::new();
        for r in reports {
            for (&c, s) in &r.per_class {
                let (acc, k) = per_class.entry(c).or_default();
                acc.precision += s.precision;
                acc.recall += s.recall;
                acc.f1 += s.f1;
                acc.support += s.support;
                acc.no_predictions |= s.no_predictions;
                *k += 1;
            }
        }
        let (op, or_) = (mean(|r| r.op), mean(|r| r.or_));
        Ok(MetricsReport {
            acc: mean(|r| r.acc),
            edit: mean(|r| r.edit),
            op,
            or_,
            of1: harmonic(op, or_),
            cp: mean(|r| r.cp),
            cr: mean(|r| r.cr),
            cf1: mean(|r| r.cf1),
            per_class: per_class
                .into_iter()
                .map(|(c, (s, k))| {
                    let k = k as f64;
                    (
                        c,
                        ClassStats {
                            precision: s.precision / k,
                            recall: s.recall / k,
                            f1: s.f1 / k,
                            ..s
                        },
                    )
                })
                .collect(),
            sequences: reports.iter().map(|r| r.sequences).sum(),
        })
    }

    pub fn evaluate(pairs: &[(Vec<usize>, Vec<usize>)]) -> Result<MetricsReport> {
        let reports = pairs
            .iter()
            .map(|(p, t)| MetricsReport::for_sequence(p, t))
            .collect::<Result<Vec<_>>>()?;
        MetricsReport::average(&reports)
    }

    pub const CSV_HEADER: &'static str = "run,corruption,severity,acc,edit,op,or,of1,cp,cr,cf1";

    pub fn csv_row(&self, run: &str, corruption: &str, severity: u8) -> String {
        format!(
            "{run},{corruption},{severity},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.acc, self.edit, self.op, self.or_, self.of1, self.cp, self.cr, self.cf1
        )
    }
}
