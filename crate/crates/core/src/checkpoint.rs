//! Binary checkpoints.
//!
//! `b"GRAD"`, version (u32), entry count (u32), then per entry: name length
//! (u32), UTF-8 name, rank (u32), dims (u32 each) and f32 values, all
//! little-endian. The model configuration travels as `config.*` entries;
//! the f64 mixing weights are split into four 16-bit chunks so they survive
//! exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use grad_tensor::{ParamStore, Tensor};

use crate::decoder::{Fusion, Mix};
use crate::error::{data_err, Result};
use crate::model::{GradModel, ModelConfig};

pub const MAGIC: &[u8; 4] = b"GRAD";
pub const VERSION: u32 = 1;

fn split_f64(v: f64) -> Vec<f32> {
    let bits = v.to_bits();
    (0..4).map(|i| ((bits >> (16 * i)) & 0xFFFF) as f32).collect()
}

fn join_f64(parts: &[f32]) -> Result<f64> {
    if parts.len() != 4 || parts.iter().any(|&p| p.fract() != 0.0 || !(0.0..65536.0).contains(&p)) {
        return Err(data_err("malformed f64 entry"));
    }
    Ok(f64::from_bits(
        parts.iter().enumerate().fold(0u64, |acc, (i, &p)| acc | ((p as u64) << (16 * i))),
    ))
}

fn config_entries(c: &ModelConfig) -> Vec<(&'static str, Tensor<f32>)> {
    let s = |v: f32| Tensor::scalar(v);
    let wide = |v: f64| Tensor::from_vec(vec![4], split_f64(v)).expect("four chunks");
    vec![
        ("config.classes", s(c.classes as f32)),
        ("config.kin_dim", s(c.kin_dim as f32)),
        ("config.wavelet", s(c.wavelet as u8 as f32)),
        ("config.fourier", s(c.fourier as u8 as f32)),
        ("config.fusion", s(c.fusion.code() as f32)),
        ("config.alpha", wide(c.mix.alpha)),
        ("config.beta", wide(c.mix.beta)),
    ]
}

pub fn write_checkpoint(mut w: impl Write, model: &GradModel<f32>) -> Result<()> {
    let cfg = config_entries(&model.config);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&((cfg.len() + model.params.len()) as u32).to_le_bytes())?;
    let mut entry = |name: &str, t: &Tensor<f32>| -> Result<()> {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        w.write_all(&bytes)?;
        Ok(())
    };
    for (name, t) in &cfg {
        entry(name, t)?;
    }
    for (name, t) in model.params.iter() {
        entry(name, t)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| data_err(format!("truncated checkpoint: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint(mut r: impl Read) -> Result<GradModel<f32>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| data_err(format!("truncated checkpoint: {e}")))?;
    if &magic != MAGIC {
        return Err(data_err("not a GRAD checkpoint"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(data_err(format!("checkpoint version {version}, expected {VERSION}")));
    }
    let count = read_u32(&mut r)?;
    let mut params = ParamStore::new();
    let mut cfg = std::collections::HashMap::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        if len > 4096 {
            return Err(data_err(format!("implausible entry name length {len}")));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| data_err(format!("truncated checkpoint: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| data_err("entry name is not UTF-8"))?;
        let rank = read_u32(&mut r)? as usize;
        if rank > 8 {
            return Err(data_err(format!("entry {name} has rank {rank}")));
        }
        let dims = (0..rank)
            .map(|_| read_u32(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        if n > 1 << 28 {
            return Err(data_err(format!("entry {name} is implausibly large")));
        }
        let mut bytes = vec![0u8; 4 * n];
        r.read_exact(&mut bytes)
            .map_err(|e| data_err(format!("truncated checkpoint: {e}")))?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if let Some(key) = name.strip_prefix("config.") {
            cfg.insert(key.to_string(), data);
        } else {
            params.insert(name, Tensor::from_vec(dims, data)?)?;
        }
    }
    let entry = |k: &str| cfg.get(k).ok_or_else(|| data_err(format!("checkpoint lacks config.{k}")));
    let get = |k: &str| -> Result<f32> {
        entry(k)?.first().copied().ok_or_else(|| data_err(format!("empty config.{k}")))
    };
    let config = ModelConfig {
        classes: get("classes")? as usize,
        kin_dim: get("kin_dim")? as usize,
        wavelet: get("wavelet")? != 0.0,
        fourier: get("fourier")? != 0.0,
        fusion: Fusion::from_code(get("fusion")? as u32).ok_or_else(|| data_err("unknown fusion code"))?,
        mix: Mix {
            alpha: join_f64(entry("alpha")?)?,
            beta: join_f64(entry("beta")?)?,
        },
    };
    // the parameter set must be exactly what this configuration builds
    let reference = GradModel::<f32>::new(config, &mut grad_tensor::Rng::new(0))?;
    if reference.params.len() != params.len() {
        return Err(data_err(format!(
            "checkpoint holds {} parameters, configuration needs {}",
            params.len(),
            reference.params.len()
        )));
    }
    for (name, t) in reference.params.iter() {
        match params.get(name) {
            Some(p) if p.shape() == t.shape() => {}
            Some(p) => {
                return Err(data_err(format!("{name}: shape {:?}, expected {:?}", p.shape(), t.shape())));
            }
            None => return Err(data_err(format!("checkpoint lacks {name}"))),
        }
    }
    Ok(GradModel { config, params })
}

pub fn save(path: impl AsRef<Path>, model: &GradModel<f32>) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), model)
}

pub fn load(path: impl AsRef<Path>) -> Result<GradModel<f32>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| data_err(format!("cannot open {}: {e}", path.display())))?;
    read_checkpoint(BufReader::new(f))
}

pub fn to_bytes(model: &GradModel<f32>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, model)?;
    Ok(buf)
}
