//! Frame corruptions for robustness sweeps.
//!
//! Severity parameters are rescaled for 64x64 frames so that each ladder
//! roughly matches the PSNR drop of the 224x224 benchmark it follows.
//!
//! | kind          | parameter                         | severities 1..5                                 |
//! |---------------|-----------------------------------|-------------------------------------------------|
//! | gauss_noise   | sigma                             | 0.04, 0.06, 0.08, 0.09, 0.10                    |
//! | shot          | photons per unit intensity        | 60, 25, 12, 5, 3                                |
//! | impulse       | salt-and-pepper fraction          | 0.01, 0.02, 0.04, 0.07, 0.10                    |
//! | speckle       | multiplicative sigma              | 0.15, 0.20, 0.35, 0.45, 0.60                    |
//! | defocus       | disc radius (px)                  | 1.0, 1.5, 2.0, 2.5, 3.0                         |
//! | motion_blur   | streak length (px)                | 3, 4, 5, 7, 9                                   |
//! | glass_blur    | (sigma, swap distance, passes)    | (0.4,1,1) (0.5,1,2) (0.6,1,3) (0.7,2,2) (0.8,2,3) |
//! | gauss_blur    | sigma (px)                        | 0.5, 0.6, 0.8, 1.0, 1.4                         |
//! | zoom_blur     | largest zoom factor               | 1.06, 1.11, 1.16, 1.21, 1.26                    |
//! | brightness    | added HSV value                   | 0.1, 0.2, 0.3, 0.4, 0.5                         |
//! | spatter       | (covered fraction, opacity)       | (0.04,0.6) (0.08,0.6) (0.12,0.65) (0.18,0.7) (0.25,0.75) |
//! | smoke         | haze strength                     | 0.15, 0.25, 0.35, 0.45, 0.55                    |
//! | contrast      | contrast factor                   | 0.4, 0.3, 0.2, 0.1, 0.05                        |
//! | elastic       | (displacement px, smoothing px)   | (1,3) (1.5,3) (2,3) (2.5,2.5) (3,2.5)           |
//! | gamma         | exponent                          | 1.3, 1.6, 2.0, 2.5, 3.0                         |
//! | jpeg_like     | quality                           | 80, 60, 40, 25, 10                              |
//! | pixelate      | resize factor                     | 0.6, 0.5, 0.4, 0.3, 0.25                        |
//! | saturate      | fraction of missing saturation added | 0.1, 0.2, 0.35, 0.5, 0.7                     |
//!
//! Severity 0 is the identity. Outputs are clamped to `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use grad_tensor::Rng;

use crate::error::{config_err, data_err, Result};
use crate::synth::WorkflowSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorruptionKind {
    GaussNoise,
    Shot,
    Impulse,
    Speckle,
    Defocus,
    MotionBlur,
    GlassBlur,
    GaussBlur,
    ZoomBlur,
    Brightness,
    Spatter,
    Smoke,
    Contrast,
    Elastic,
    Gamma,
    JpegLike,
    Pixelate,
    Saturate,
}

use CorruptionKind::*;

pub const ALL_KINDS: [CorruptionKind; 18] = [
    GaussNoise, Shot, Impulse, Speckle, Defocus, MotionBlur, GlassBlur, GaussBlur, ZoomBlur, Brightness,
    Spatter, Smoke, Contrast, Elastic, Gamma, JpegLike, Pixelate, Saturate,
];

pub const MAX_SEVERITY: u8 = 5;

impl CorruptionKind {
    pub fn name(self) -> &'static str {
        match self {
            GaussNoise => "gauss_noise",
            Shot => "shot",
            Impulse => "impulse",
            Speckle => "speckle",
            Defocus => "defocus",
            MotionBlur => "motion_blur",
            GlassBlur => "glass_blur",
            GaussBlur => "gauss_blur",
            ZoomBlur => "zoom_blur",
            Brightness => "brightness",
            Spatter => "spatter",
            Smoke => "smoke",
            Contrast => "contrast",
            Elastic => "elastic",
            Gamma => "gamma",
            JpegLike => "jpeg_like",
            Pixelate => "pixelate",
            Saturate => "saturate",
        }
    }

    pub fn group(self) -> &'static str {
        match self {
            GaussNoise | Shot | Impulse | Speckle => "noise",
            Defocus | MotionBlur | GlassBlur | GaussBlur | ZoomBlur => "blur",
            Brightness | Spatter | Smoke => "weather",
            Contrast | Elastic | Gamma | JpegLike | Pixelate | Saturate => "digital",
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = crate::GradError;

    fn from_str(s: &str) -> Result<Self> {
        ALL_KINDS
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| config_err(format!("unknown corruption kind `{s}`")))
    }
}

/// A corruption kind at a severity in `0..=5`; severity 0 leaves frames untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: u8,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u8) -> Result<Self> {
        if severity > MAX_SEVERITY {
            return Err(config_err(format!("severity {severity} outside 0..=5")));
        }
        Ok(CorruptionSpec { kind, severity })
    }

    /// Every kind at every severity 1..=5, kind-major.
    pub fn grid() -> Vec<CorruptionSpec> {
        ALL_KINDS
            .iter()
            .flat_map(|&kind| (1..=MAX_SEVERITY).map(move |severity| CorruptionSpec { kind, severity }))
            .collect()
    }
}

impl fmt::Display for CorruptionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.severity)
    }
}

/// Parses `KIND:SEVERITY`.
impl FromStr for CorruptionSpec {
    type Err = crate::GradError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, sev) = s
            .split_once(':')
            .ok_or_else(|| config_err(format!("corruption `{s}` is not KIND:SEVERITY")))?;
        let severity = sev
            .trim()
            .parse::<u8>()
            .map_err(|_| config_err(format!("bad severity `{sev}`")))?;
        CorruptionSpec::new(kind.trim().parse()?, severity)
    }
}

/// Planar image `[c, h, w]` in f64.
struct Img {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Img {
    fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    fn plane(&self, c: usize) -> &[f64] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }

    fn map_pixels(&mut self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) {
        let n = self.h * self.w;
        for i in 0..n {
            let out = f([self.data[i], self.data[n + i], self.data[2 * n + i]]);
            for c in 0..3 {
                self.data[c * n + i] = out[c];
            }
        }
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * n - 2;
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

fn gauss_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// `table[i + r]` is the reflected source index of position `i` for `i in -r..n + r`.
fn reflect_table(n: usize, r: usize) -> Vec<usize> {
    (0..n + 2 * r).map(|i| reflect(i as isize - r as isize, n)).collect()
}

fn blur_plane(p: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return p.to_vec();
    }
    let k = gauss_kernel(sigma);
    let r = k.len() / 2;
    let (cols, rows) = (reflect_table(w, r), reflect_table(h, r));
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        let row = &p[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = k.iter().zip(&cols[x..x + k.len()]).map(|(&kv, &c)| kv * row[c]).sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for (&kv, &src) in k.iter().zip(&rows[y..y + k.len()]) {
            let (dst, from) = (&mut out[y * w..(y + 1) * w], &tmp[src * w..(src + 1) * w]);
            dst.iter_mut().zip(from).for_each(|(o, &v)| *o += kv * v);
        }
    }
    out
}

fn blur(img: &Img, sigma: f64) -> Img {
    let mut data = Vec::with_capacity(img.data.len());
    for c in 0..img.c {
        data.extend(blur_plane(img.plane(c), img.h, img.w, sigma));
    }
    Img { data, ..*img }
}

/// Correlates every channel with a normalised 2-D kernel given as `(dy, dx, weight)` taps.
fn filter(img: &Img, taps: &[(isize, isize, f64)]) -> Img {
    let total: f64 = taps.iter().map(|t| t.2).sum();
    let r = taps.iter().map(|t| t.0.unsigned_abs().max(t.1.unsigned_abs())).max().unwrap_or(0);
    let (rows, cols) = (reflect_table(img.h, r), reflect_table(img.w, r));
    let mut data = vec![0.0; img.data.len()];
    for c in 0..img.c {
        let plane = img.plane(c);
        let out = &mut data[c * img.h * img.w..(c + 1) * img.h * img.w];
        for &(dy, dx, wt) in taps {
            let wt = wt / total;
            for y in 0..img.h {
                let src = rows[(y as isize + dy + r as isize) as usize] * img.w;
                let col = &cols[(dx + r as isize) as usize..];
                let dst = &mut out[y * img.w..(y + 1) * img.w];
                for (x, o) in dst.iter_mut().enumerate() {
                    *o += wt * plane[src + col[x]];
                }
            }
        }
    }
    Img { data, ..*img }
}

/// Bilinear sample with edge clamping.
fn sample(p: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
    let bot = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
    top * (1.0 - fy) + bot * fy
}

/// Smooth random field rescaled to `[0, 1]`.
fn smooth_field(h: usize, w: usize, sigma: f64, rng: &mut Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..h * w).map(|_| rng.uniform()).collect();
    let f = blur_plane(&raw, h, w, sigma);
    let (lo, hi) = f.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (hi - lo).max(1e-12);
    f.into_iter().map(|v| (v - lo) / span).collect()
}

fn poisson(mean: f64, rng: &mut Rng) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if mean < 30.0 {
        let limit = (-mean).exp();
        let mut k = 0.0;
        let mut p = rng.uniform();
        while p > limit {
            k += 1.0;
            p *= rng.uniform();
        }
        k
    } else {
        (mean + mean.sqrt() * rng.normal()).round().max(0.0)
    }
}

fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let v = r.max(g).max(b);
    let m = r.min(g).min(b);
    let d = v - m;
    let s = if v > 0.0 { d / v } else { 0.0 };
    let h = if d == 0.0 {
        0.0
    } else if v == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if v == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    [h, s, v]
}

fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let f = |n: f64| {
        let k = (n + h * 6.0) % 6.0;
        v - v * s * k.min(4.0 - k).clamp(0.0, 1.0)
    };
    [f(5.0), f(3.0), f(1.0)]
}

const JPEG_LUMA: [f64; 64] = [
    16., 11., 10., 16., 24., 40., 51., 61., 12., 12., 14., 19., 26., 58., 60., 55., 14., 13., 16., 24., 40., 57., 69.,
    56., 14., 17., 22., 29., 51., 87., 80., 62., 18., 22., 37., 56., 68., 109., 103., 77., 24., 35., 55., 64., 81.,
    104., 113., 92., 49., 64., 78., 87., 103., 121., 120., 101., 72., 92., 95., 98., 112., 100., 103., 99.,
];

const JPEG_CHROMA: [f64; 64] = [
    17., 18., 24., 47., 99., 99., 99., 99., 18., 21., 26., 66., 99., 99., 99., 99., 24., 26., 56., 99., 99., 99., 99.,
    99., 47., 66., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99.,
    99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99.,
];

fn scaled_table(base: &[f64; 64], quality: f64) -> [f64; 64] {
    let s = if quality < 50.0 { 5000.0 / quality } else { 200.0 - 2.0 * quality };
    let mut out = [0.0; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        *o = ((b * s + 50.0) / 100.0).floor().max(1.0);
    }
    out
}

fn dct_basis() -> [[f64; 8]; 8] {
    let mut m = [[0.0; 8]; 8];
    for (k, row) in m.iter_mut().enumerate() {
        let a = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (n, v) in row.iter_mut().enumerate() {
            *v = a * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / 16.0).cos();
        }
    }
    m
}

/// Quantises the orthonormal 8x8 DCT of one plane (values on a 0..255 scale).
fn quantize_plane(p: &mut [f64], h: usize, w: usize, table: &[f64; 64], basis: &[[f64; 8]; 8]) {
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let mut block = [[0.0; 8]; 8];
            for (i, row) in block.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = p[(by + i).min(h - 1) * w + (bx + j).min(w - 1)] - 128.0;
                }
            }
            let mut coef = [[0.0; 8]; 8];
            for u in 0..8 {
                for v in 0..8 {
                    let mut acc = 0.0;
                    for i in 0..8 {
                        for j in 0..8 {
                            acc += basis[u][i] * basis[v][j] * block[i][j];
                        }
                    }
                    let q = table[u * 8 + v];
                    coef[u][v] = (acc / q).round() * q;
                }
            }
            for i in 0..8 {
                for j in 0..8 {
                    if by + i >= h || bx + j >= w {
                        continue;
                    }
                    let mut acc = 0.0;
                    for u in 0..8 {
                        for v in 0..8 {
                            acc += basis[u][i] * basis[v][j] * coef[u][v];
                        }
                    }
                    p[(by + i) * w + bx + j] = acc + 128.0;
                }
            }
        }
    }
}

fn jpeg_like(img: &mut Img, quality: f64) {
    let n = img.h * img.w;
    let mut ycc = vec![0.0; 3 * n];
    for i in 0..n {
        let (r, g, b) = (img.data[i] * 255.0, img.data[n + i] * 255.0, img.data[2 * n + i] * 255.0);
        ycc[i] = 0.299 * r + 0.587 * g + 0.114 * b;
        ycc[n + i] = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
        ycc[2 * n + i] = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    }
    let basis = dct_basis();
    let luma = scaled_table(&JPEG_LUMA, quality);
    let chroma = scaled_table(&JPEG_CHROMA, quality);
    for c in 0..3 {
        let table = if c == 0 { &luma } else { &chroma };
        quantize_plane(&mut ycc[c * n..(c + 1) * n], img.h, img.w, table, &basis);
    }
    for i in 0..n {
        let (y, cb, cr) = (ycc[i], ycc[n + i] - 128.0, ycc[2 * n + i] - 128.0);
        img.data[i] = (y + 1.402 * cr) / 255.0;
        img.data[n + i] = (y - 0.344136 * cb - 0.714136 * cr) / 255.0;
        img.data[2 * n + i] = (y + 1.772 * cb) / 255.0;
    }
}

fn pixelate(img: &Img, factor: f64) -> Img {
    let (h, w) = (img.h, img.w);
    let (sh, sw) = (((h as f64 * factor).round() as usize).max(1), ((w as f64 * factor).round() as usize).max(1));
    let mut data = vec![0.0; img.data.len()];
    for c in 0..img.c {
        // area average into the small grid, nearest back up
        let mut small = vec![0.0; sh * sw];
        let mut count = vec![0.0; sh * sw];
        for y in 0..h {
            for x in 0..w {
                let cell = (y * sh / h) * sw + x * sw / w;
                small[cell] += img.at(c, y, x);
                count[cell] += 1.0;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let cell = (y * sh / h) * sw + x * sw / w;
                data[(c * h + y) * w + x] = small[cell] / count[cell];
            }
        }
    }
    Img { data, ..*img }
}

fn apply(img: &mut Img, kind: CorruptionKind, s: usize, rng: &mut Rng) {
    let (h, w) = (img.h, img.w);
    match kind {
        GaussNoise => {
            let sigma = [0.04, 0.06, 0.08, 0.09, 0.10][s];
            img.data.iter_mut().for_each(|v| *v += sigma * rng.normal());
        }
        Shot => {
            let lam = [60.0, 25.0, 12.0, 5.0, 3.0][s];
            img.data.iter_mut().for_each(|v| *v = poisson(v.max(0.0) * lam, rng) / lam);
        }
        Impulse => {
            let amount = [0.01, 0.02, 0.04, 0.07, 0.10][s];
            for v in img.data.iter_mut() {
                if rng.bernoulli(amount) {
                    *v = if rng.bernoulli(0.5) { 1.0 } else { 0.0 };
                }
            }
        }
        Speckle => {
            let sigma = [0.15, 0.20, 0.35, 0.45, 0.60][s];
            img.data.iter_mut().for_each(|v| *v += *v * sigma * rng.normal());
        }
        Defocus => {
            let r: f64 = [1.0, 1.5, 2.0, 2.5, 3.0][s];
            let ri = r.ceil() as isize;
            let mut taps = Vec::new();
            for dy in -ri..=ri {
                for dx in -ri..=ri {
                    if ((dy * dy + dx * dx) as f64) <= r * r {
                        taps.push((dy, dx, 1.0));
                    }
                }
            }
            *img = blur(&filter(img, &taps), 0.5);
        }
        MotionBlur => {
            let len = [3.0, 4.0, 5.0, 7.0, 9.0][s];
            let angle = rng.uniform_in(-std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4);
            // one-sided streak, as from a moving camera
            let taps: Vec<_> = (0..len as usize)
                .map(|i| {
                    let d = i as f64;
                    ((d * angle.sin()).round() as isize, (d * angle.cos()).round() as isize, 1.0)
                })
                .collect();
            *img = filter(img, &taps);
        }
        GlassBlur => {
            let (sigma, delta, passes) = [(0.4, 1, 1), (0.5, 1, 2), (0.6, 1, 3), (0.7, 2, 2), (0.8, 2, 3)][s];
            *img = blur(img, sigma);
            for _ in 0..passes {
                for y in (delta..h - delta).rev() {
                    for x in (delta..w - delta).rev() {
                        let dy = rng.below(2 * delta + 1) as isize - delta as isize;
                        let dx = rng.below(2 * delta + 1) as isize - delta as isize;
                        let (y2, x2) = ((y as isize + dy) as usize, (x as isize + dx) as usize);
                        for c in 0..img.c {
                            img.data.swap((c * h + y) * w + x, (c * h + y2) * w + x2);
                        }
                    }
                }
            }
            *img = blur(img, sigma);
        }
        GaussBlur => {
            *img = blur(img, [0.5, 0.6, 0.8, 1.0, 1.4][s]);
        }
        ZoomBlur => {
            let zmax = [1.06, 1.11, 1.16, 1.21, 1.26][s];
            let zooms = 6;
            let (cy, cx) = ((h - 1) as f64 / 2.0, (w - 1) as f64 / 2.0);
            let mut acc = img.data.clone();
            for k in 1..=zooms {
                let z = 1.0 + (zmax - 1.0) * k as f64 / zooms as f64;
                for c in 0..img.c {
                    let p = img.plane(c);
                    for y in 0..h {
                        for x in 0..w {
                            let v = sample(p, h, w, cy + (y as f64 - cy) / z, cx + (x as f64 - cx) / z);
                            acc[(c * h + y) * w + x] += v;
                        }
                    }
                }
            }
            img.data = acc.into_iter().map(|v| v / (zooms + 1) as f64).collect();
        }
        Brightness => {
            let add = [0.1, 0.2, 0.3, 0.4, 0.5][s];
            img.map_pixels(|rgb| {
                let [hh, ss, v] = rgb_to_hsv(rgb);
                hsv_to_rgb([hh, ss, (v + add).min(1.0)])
            });
        }
        Spatter => {
            let (cover, opacity) = [(0.04, 0.6), (0.08, 0.6), (0.12, 0.65), (0.18, 0.7), (0.25, 0.75)][s];
            let field = smooth_field(h, w, 2.0, rng);
            let mut sorted = field.clone();
            sorted.sort_by(f64::total_cmp);
            let cut = sorted[((1.0 - cover) * (h * w) as f64) as usize];
            let mud = [0.35, 0.22, 0.12];
            let n = h * w;
            for i in 0..n {
                if field[i] >= cut {
                    for c in 0..3 {
                        let v = &mut img.data[c * n + i];
                        *v = (1.0 - opacity) * *v + opacity * mud[c];
                    }
                }
            }
        }
        Smoke => {
            let a = [0.15, 0.25, 0.35, 0.45, 0.55][s];
            let haze = smooth_field(h, w, 8.0, rng);
            let n = h * w;
            for c in 0..3 {
                for i in 0..n {
                    let k = a * (0.5 + 0.5 * haze[i]);
                    let v = &mut img.data[c * n + i];
                    *v = *v * (1.0 - k) + k * 0.85;
                }
            }
        }
        Contrast => {
            let f = [0.4, 0.3, 0.2, 0.1, 0.05][s];
            let mean = img.data.iter().sum::<f64>() / img.data.len() as f64;
            img.data.iter_mut().for_each(|v| *v = (*v - mean) * f + mean);
        }
        Elastic => {
            let (alpha, sigma) = [(1.0, 3.0), (1.5, 3.0), (2.0, 3.0), (2.5, 2.5), (3.0, 2.5)][s];
            let field = |rng: &mut Rng| {
                let raw: Vec<f64> = (0..h * w).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
                let f = blur_plane(&raw, h, w, sigma);
                let peak = f.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
                f.into_iter().map(|v| alpha * v / peak).collect::<Vec<_>>()
            };
            let (dy, dx) = (field(rng), field(rng));
            let src = img.data.clone();
            for c in 0..img.c {
                let p = &src[c * h * w..(c + 1) * h * w];
                for y in 0..h {
                    for x in 0..w {
                        let i = y * w + x;
                        img.data[c * h * w + i] = sample(p, h, w, y as f64 + dy[i], x as f64 + dx[i]);
                    }
                }
            }
        }
        Gamma => {
            let g = [1.3, 1.6, 2.0, 2.5, 3.0][s];
            img.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0).powf(g));
        }
        JpegLike => jpeg_like(img, [80.0, 60.0, 40.0, 25.0, 10.0][s]),
        Pixelate => *img = pixelate(img, [0.6, 0.5, 0.4, 0.3, 0.25][s]),
        Saturate => {
            let push = [0.1, 0.2, 0.35, 0.5, 0.7][s];
            img.map_pixels(|rgb| {
                let [hh, ss, v] = rgb_to_hsv(rgb);
                hsv_to_rgb([hh, ss + push * (1.0 - ss), v])
            });
        }
    }
}

/// Corrupts one `[3, h, w]` frame.
pub fn corrupt(frame: &[f32], h: usize, w: usize, spec: CorruptionSpec, rng: &mut Rng) -> Result<Vec<f32>> {
    if h == 0 || w == 0 || frame.len() != 3 * h * w {
        return Err(data_err(format!("frame of {} values is not 3x{h}x{w}", frame.len())));
    }
    if spec.severity > MAX_SEVERITY {
        return Err(config_err(format!("severity {} outside 0..=5", spec.severity)));
    }
    if spec.severity == 0 {
        return Ok(frame.to_vec());
    }
    let mut img = Img {
        c: 3,
        h,
        w,
        data: frame.iter().map(|&v| v as f64).collect(),
    };
    apply(&mut img, spec.kind, spec.severity as usize - 1, rng);
    Ok(img.data.into_iter().map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) as f32 }).collect())
}

/// Corrupted copies of `sequences`; sequence `i` draws from stream `(seed, i)`.
/// Kinematics and labels are copied unchanged.
pub fn corrupt_dataset(sequences: &[WorkflowSequence], spec: CorruptionSpec, seed: u64) -> Result<Vec<WorkflowSequence>> {
    sequences
        .iter()
        .enumerate()
        .map(|(i, seq)| {
            if spec.severity == 0 {
                return Ok(seq.clone());
            }
            let mut rng = Rng::derive(seed, i as u64);
            let mut frames = Vec::with_capacity(seq.frames.len());
            for t in 0..seq.steps {
                frames.extend(corrupt(seq.frame(t), seq.height, seq.width, spec, &mut rng)?);
            }
            Ok(WorkflowSequence { frames, ..seq.clone() })
        })
        .collect()
}

/// Peak signal-to-noise ratio in dB for signals in `[0, 1]`; infinite for identical inputs.
pub fn psnr(a: &[f32], b: &[f32]) -> f64 {
    let mse = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.len().max(1) as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}
