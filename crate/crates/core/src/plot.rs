//! Portable-pixmap figures: phase ribbons and accuracy-versus-severity curves.

use std::collections::BTreeMap;

use crate::error::{data_err, Result};

pub type Rgb = [u8; 3];

/// RGB image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Pixmap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl Pixmap {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Pixmap {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        if x < self.width && y < self.height {
            self.pixels[y * self.width + x] = c;
        }
    }

    /// Binary `P6` encoding.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().flatten());
        out
    }

    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            if x >= 0 && y >= 0 {
                self.set(x as usize, y as usize, c);
            }
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }
}

/// Fixed colour per class.
pub fn class_color(c: usize) -> Rgb {
    const PALETTE: [Rgb; 10] = [
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
        [128, 128, 0],
        [0, 0, 128],
    ];
    PALETTE[c % PALETTE.len()]
}

/// One band per label row, `T` pixels wide; put the ground truth first.
pub fn ribbon(rows: &[&[usize]], band_height: usize, gap: usize) -> Result<Pixmap> {
    let t = rows.first().map(|r| r.len()).ok_or_else(|| data_err("ribbon needs at least one row"))?;
    if t == 0 || rows.iter().any(|r| r.len() != t) {
        return Err(data_err("ribbon rows must share a non-zero length"));
    }
    let height = rows.len() * band_height + (rows.len() - 1) * gap;
    let mut img = Pixmap::new(t, height, [255, 255, 255]);
    for (i, row) in rows.iter().enumerate() {
        let top = i * (band_height + gap);
        for (x, &l) in row.iter().enumerate() {
            for y in top..top + band_height {
                img.set(x, y, class_color(l));
            }
        }
    }
    Ok(img)
}

pub struct Curve {
    pub name: String,
    /// Accuracy at severities 1..=5.
    pub values: [f64; 5],
}

pub const CURVE_SIZE: (usize, usize) = (320, 200);
const MARGIN: usize = 20;

/// X pixel of severity `s` (1..=5).
pub fn severity_x(s: usize) -> usize {
    let span = CURVE_SIZE.0 - 2 * MARGIN;
    MARGIN + (s - 1) * span / 4
}

/// Accuracy (0..100, bottom to top) against severity, one polyline per curve,
/// with a tick under each of the five severities.
pub fn severity_curves(curves: &[Curve]) -> Pixmap {
    let (w, h) = CURVE_SIZE;
    let mut img = Pixmap::new(w, h, [255, 255, 255]);
    let axis = [0, 0, 0];
    let bottom = h - MARGIN;
    img.line((MARGIN as i64, bottom as i64), ((w - MARGIN) as i64, bottom as i64), axis);
    img.line((MARGIN as i64, MARGIN as i64), (MARGIN as i64, bottom as i64), axis);
    for s in 1..=5 {
        let x = severity_x(s) as i64;
        img.line((x, bottom as i64), (x, bottom as i64 + 5), axis);
    }
    let y_of = |v: f64| (bottom as f64 - v.clamp(0.0, 100.0) / 100.0 * (bottom - MARGIN) as f64).round() as i64;
    for (i, c) in curves.iter().enumerate() {
        let color = class_color(i);
        for s in 1..5 {
            img.line(
                (severity_x(s) as i64, y_of(c.values[s - 1])),
                (severity_x(s + 1) as i64, y_of(c.values[s])),
                color,
            );
        }
    }
    img
}

/// Mean accuracy per run and severity from a metrics CSV
/// (`run,corruption,severity,acc,...`), averaged over corruption kinds.
/// Rows with severity 0 are ignored.
pub fn curves_from_csv(text: &str) -> Result<Vec<Curve>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| data_err("empty CSV"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| cols.iter().position(|c| *c == name).ok_or_else(|| data_err(format!("CSV lacks a `{name}` column")));
    let (run, sev, acc) = (find("run")?, find("severity")?, find("acc")?);
    let mut sums: BTreeMap<String, [(f64, usize); 5]> = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(data_err(format!("CSV line {} has {} fields, expected {}", n + 2, f.len(), cols.len())));
        }
        let s: usize = f[sev].parse().map_err(|_| data_err(format!("CSV line {}: bad severity", n + 2)))?;
        let a: f64 = f[acc].parse().map_err(|_| data_err(format!("CSV line {}: bad accuracy", n + 2)))?;
        if s == 0 {
            continue;
        }
        if s > 5 {
            return Err(data_err(format!("CSV line {}: severity {s}", n + 2)));
        }
        let e = &mut sums.entry(f[run].to_string()).or_insert([(0.0, 0); 5])[s - 1];
        e.0 += a;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(name, s)| {
            let mut values = [0.0; 5];
            for (v, (sum, k)) in values.iter_mut().zip(s) {
                if k == 0 {
                    return Err(data_err(format!("run {name} lacks a severity")));
                }
                *v = sum / k as f64;
            }
            Ok(Curve { name, values })
        })
        .collect()
}

/// Label rows per sequence from a predictions CSV
/// (`sequence,frame,truth,pred,confidence`): `(truth, pred)` per sequence.
pub fn ribbons_from_predictions(text: &str) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let mut out: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let parse = |i: usize| -> Result<usize> {
            f.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| data_err(format!("predictions line {}: bad field {i}", n + 1)))
        };
        let (seq, truth, pred) = (parse(0)?, parse(2)?, parse(3)?);
        if seq > out.len() {
            return Err(data_err(format!("predictions line {}: sequence {seq} out of order", n + 1)));
        }
        if seq == out.len() {
            out.push((Vec::new(), Vec::new()));
        }
        out[seq].0.push(truth);
        out[seq].1.push(pred);
    }
    if out.is_empty() {
        return Err(data_err("predictions CSV holds no rows"));
    }
    Ok(out)
}
