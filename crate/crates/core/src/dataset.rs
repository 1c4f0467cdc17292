//! Split files.
//!
//! Layout, all integers little-endian: `b"GRD1"`, sequence count (u32), then
//! per sequence `T, C, H, W, D` (u32 each), frames `T x 3 x H x W` (f32),
//! kinematics `T x D` (f32) and labels `T` (u16).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{data_err, Result};
use crate::synth::WorkflowSequence;

pub const MAGIC: &[u8; 4] = b"GRD1";

/// Sequences of one split together with the number of phase classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub classes: usize,
    pub sequences: Vec<WorkflowSequence>,
}

impl Split {
    pub fn frames(&self) -> usize {
        self.sequences.iter().map(|s| s.steps).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sequences.is_empty() {
            return Err(data_err("split holds no sequences"));
        }
        for (i, s) in self.sequences.iter().enumerate() {
            if s.frames.len() != s.steps * 3 * s.height * s.width
                || s.kinematics.len() != s.steps * s.kin_dim
                || s.labels.len() != s.steps
            {
                return Err(data_err(format!("sequence {i}: streams disagree on length")));
            }
            if let Some(&bad) = s.labels.iter().find(|&&l| l >= self.classes) {
                return Err(data_err(format!("sequence {i}: label {bad} outside 0..{}", self.classes)));
            }
            if !s.kinematics.iter().chain(&s.frames).all(|v| v.is_finite()) {
                return Err(data_err(format!("sequence {i}: non-finite values")));
            }
        }
        Ok(())
    }
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| data_err(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f32s(w: &mut impl Write, values: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn write_split(mut w: impl Write, split: &Split) -> Result<()> {
    split.validate()?;
    w.write_all(MAGIC)?;
    put_u32(&mut w, split.sequences.len())?;
    for s in &split.sequences {
        for v in [s.steps, split.classes, s.height, s.width, s.kin_dim] {
            put_u32(&mut w, v)?;
        }
        put_f32s(&mut w, &s.frames)?;
        put_f32s(&mut w, &s.kinematics)?;
        let labels: Vec<u8> = s
            .labels
            .iter()
            .flat_map(|&l| (l as u16).to_le_bytes())
            .collect();
        w.write_all(&labels)?;
    }
    w.flush()?;
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| data_err(format!("truncated split file: {e}")))?;
    Ok(buf)
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    Ok(u32::from_le_bytes(take::<4>(r)?) as usize)
}

fn get_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| data_err(format!("truncated split file: {e}")))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn read_split(mut r: impl Read) -> Result<Split> {
    if &take::<4>(&mut r)? != MAGIC {
        return Err(data_err("not a GRD1 split file"));
    }
    let count = get_u32(&mut r)?;
    let mut classes = None;
    let mut sequences = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let (steps, c, height, width, kin_dim) =
            (get_u32(&mut r)?, get_u32(&mut r)?, get_u32(&mut r)?, get_u32(&mut r)?, get_u32(&mut r)?);
        if *classes.get_or_insert(c) != c {
            return Err(data_err(format!("sequence {i} declares {c} classes, expected {}", classes.unwrap())));
        }
        let len = steps
            .checked_mul(3 * height * width)
            .filter(|&n| n <= 1 << 31)
            .ok_or_else(|| data_err(format!("sequence {i}: implausible frame tensor")))?;
        let frames = get_f32s(&mut r, len)?;
        let kinematics = get_f32s(&mut r, steps * kin_dim)?;
        let mut labels = Vec::with_capacity(steps);
        for _ in 0..steps {
            labels.push(u16::from_le_bytes(take::<2>(&mut r)?) as usize);
        }
        sequences.push(WorkflowSequence {
            steps,
            height,
            width,
            frames,
            kin_dim,
            kinematics,
            labels,
        });
    }
    let split = Split {
        classes: classes.unwrap_or(0),
        sequences,
    };
    split.validate()?;
    Ok(split)
}

pub fn save_split(path: impl AsRef<Path>, split: &Split) -> Result<()> {
    write_split(BufWriter::new(File::create(path)?), split)
}

pub fn load_split(path: impl AsRef<Path>) -> Result<Split> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| data_err(format!("cannot open {}: {e}", path.display())))?;
    read_split(BufReader::new(file))
}
