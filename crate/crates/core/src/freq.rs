//! Wavelet and Fourier views of a frame.
//!
//! Level-1 orthonormal Haar analysis with subbands ordered
//! (A, LZ, ZL, ZZ), and a log-compressed, DC-centred FFT amplitude.
//! Both views are computed on luminance.

use std::f64::consts::PI;

use crate::error::{data_err, Result};

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Luminance weights applied to (R, G, B).
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// A single-channel image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 || data.len() != h * w {
            return Err(data_err(format!("plane {h}x{w} with {} values", data.len())));
        }
        Ok(Plane { h, w, data })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Plane {
            h,
            w,
            data: vec![0.0; h * w],
        }
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.w + x]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Haar subbands: approximation, then the three detail bands.
#[derive(Debug, Clone, PartialEq)]
pub struct Subbands {
    pub a: Plane,
    pub lz: Plane,
    pub zl: Plane,
    pub zz: Plane,
}

impl Subbands {
    pub fn bands(&self) -> [&Plane; 4] {
        [&self.a, &self.lz, &self.zl, &self.zz]
    }
}

/// Pads an odd dimension by reflecting the last row / column.
fn even(image: &Plane) -> Plane {
    let (h, w) = (image.h + image.h % 2, image.w + image.w % 2);
    if (h, w) == (image.h, image.w) {
        return image.clone();
    }
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        let sy = y.min(image.h - 1);
        for x in 0..w {
            data.push(image.at(sy, x.min(image.w - 1)));
        }
    }
    Plane { h, w, data }
}

/// One-level 2-D Haar analysis. Rows use the low-pass `(1,1)/sqrt 2` and
/// high-pass `(1,-1)/sqrt 2` filters, then columns; `LZ` is low along
/// rows and high along columns, `ZL` the converse, `ZZ` high on both.
pub fn dwt2_haar(image: &Plane) -> Result<Subbands> {
    if image.data.is_empty() {
        return Err(data_err("dwt2 of an empty image"));
    }
    let img = even(image);
    let (h2, w2) = (img.h / 2, img.w / 2);
    let mut bands = [
        Plane::zeros(h2, w2),
        Plane::zeros(h2, w2),
        Plane::zeros(h2, w2),
        Plane::zeros(h2, w2),
    ];
    for y in 0..h2 {
        for x in 0..w2 {
            let p = img.at(2 * y, 2 * x);
            let q = img.at(2 * y, 2 * x + 1);
            let r = img.at(2 * y + 1, 2 * x);
            let s = img.at(2 * y + 1, 2 * x + 1);
            // horizontal pass
            let (lo0, hi0) = ((p + q) * INV_SQRT2, (p - q) * INV_SQRT2);
            let (lo1, hi1) = ((r + s) * INV_SQRT2, (r - s) * INV_SQRT2);
            let i = y * w2 + x;
            bands[0].data[i] = (lo0 + lo1) * INV_SQRT2;
            bands[1].data[i] = (lo0 - lo1) * INV_SQRT2;
            bands[2].data[i] = (hi0 + hi1) * INV_SQRT2;
            bands[3].data[i] = (hi0 - hi1) * INV_SQRT2;
        }
    }
    let [a, lz, zl, zz] = bands;
    Ok(Subbands { a, lz, zl, zz })
}

/// Exact inverse of [`dwt2_haar`] for even-sized images.
pub fn idwt2_haar(bands: &Subbands) -> Result<Plane> {
    let (h2, w2) = (bands.a.h, bands.a.w);
    if bands.bands().iter().any(|b| b.h != h2 || b.w != w2) {
        return Err(data_err("subbands of unequal shape"));
    }
    let mut out = Plane::zeros(2 * h2, 2 * w2);
    let w = 2 * w2;
    for y in 0..h2 {
        for x in 0..w2 {
            let i = y * w2 + x;
            let (a, lz, zl, zz) = (bands.a.data[i], bands.lz.data[i], bands.zl.data[i], bands.zz.data[i]);
            let lo0 = (a + lz) * INV_SQRT2;
            let lo1 = (a - lz) * INV_SQRT2;
            let hi0 = (zl + zz) * INV_SQRT2;
            let hi1 = (zl - zz) * INV_SQRT2;
            out.data[2 * y * w + 2 * x] = (lo0 + hi0) * INV_SQRT2;
            out.data[2 * y * w + 2 * x + 1] = (lo0 - hi0) * INV_SQRT2;
            out.data[(2 * y + 1) * w + 2 * x] = (lo1 + hi1) * INV_SQRT2;
            out.data[(2 * y + 1) * w + 2 * x + 1] = (lo1 - hi1) * INV_SQRT2;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Complex {
    re: f64,
    im: f64,
}

/// `e^{-2 pi i k / n}` for `k < n / 2`.
fn twiddles(n: usize) -> Vec<Complex> {
    (0..n / 2)
        .map(|k| {
            let (s, c) = (-2.0 * PI * k as f64 / n as f64).sin_cos();
            Complex { re: c, im: s }
        })
        .collect()
}

/// In-place iterative radix-2 FFT (unnormalised, `e^{-i...}` kernel);
/// `tw` comes from [`twiddles`] for the same length.
fn fft_inplace(buf: &mut [Complex], tw: &[Complex]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two() && tw.len() == n / 2);
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let Complex { re: c, im: s } = tw[k * stride];
                let a = buf[start + k];
                let b = buf[start + k + len / 2];
                let t = Complex {
                    re: b.re * c - b.im * s,
                    im: b.re * s + b.im * c,
                };
                buf[start + k] = Complex {
                    re: a.re + t.re,
                    im: a.im + t.im,
                };
                buf[start + k + len / 2] = Complex {
                    re: a.re - t.re,
                    im: a.im - t.im,
                };
            }
        }
        len <<= 1;
    }
}

/// Raw 2-D DFT magnitude `sqrt(R^2 + I^2)`, uncentred. Dimensions that
/// are not powers of two are zero-padded up; the returned plane has the
/// padded size.
pub fn fft2_magnitude(image: &Plane) -> Result<Plane> {
    if image.h == 0 || image.w == 0 {
        return Err(data_err("fft of an empty image"));
    }
    let (h, w) = (image.h.next_power_of_two(), image.w.next_power_of_two());
    let zero = Complex { re: 0.0, im: 0.0 };
    let mut grid = vec![zero; h * w];
    for y in 0..image.h {
        for x in 0..image.w {
            grid[y * w + x].re = image.at(y, x);
        }
    }
    let (tw_w, tw_h) = (twiddles(w), twiddles(h));
    for row in grid.chunks_mut(w) {
        fft_inplace(row, &tw_w);
    }
    let mut col = vec![zero; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = grid[y * w + x];
        }
        fft_inplace(&mut col, &tw_h);
        for y in 0..h {
            grid[y * w + x] = col[y];
        }
    }
    let data = grid.iter().map(|c| c.re.hypot(c.im)).collect();
    Ok(Plane { h, w, data })
}

/// Network-facing Fourier view: magnitude, quadrant-swapped so DC sits at
/// `(h/2, w/2)`, compressed by `ln(1 + .)` and divided by its maximum.
pub fn fft2_amplitude(image: &Plane) -> Result<Plane> {
    let raw = fft2_magnitude(image)?;
    let (h, w) = (raw.h, raw.w);
    let mut out = Plane::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            out.data[((y + h / 2) % h) * w + (x + w / 2) % w] = raw.at(y, x).ln_1p();
        }
    }
    let max = out.data.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        out.data.iter_mut().for_each(|v| *v /= max);
    }
    Ok(out)
}

pub fn luminance(rgb: &[f32], h: usize, w: usize) -> Plane {
    let n = h * w;
    let data = (0..n)
        .map(|i| LUMA[0] * rgb[i] as f64 + LUMA[1] * rgb[n + i] as f64 + LUMA[2] * rgb[2 * n + i] as f64)
        .collect();
    Plane { h, w, data }
}

/// The three network inputs derived from one frame.
#[derive(Debug, Clone)]
pub struct FrameViews {
    /// `[3, h, w]`, the frame itself.
    pub spatial: Vec<f32>,
    /// `[4, h/2, w/2]`, subbands in (A, LZ, ZL, ZZ) order.
    pub wavelet: Vec<f32>,
    /// `[1, h, w]`.
    pub fourier: Vec<f32>,
}

/// Splits an RGB frame `[3, h, w]` into spatial, wavelet and Fourier views.
pub fn disentangle_frame(rgb: &[f32], channels: usize, h: usize, w: usize) -> Result<FrameViews> {
    if channels != 3 {
        return Err(data_err(format!("expected 3 colour channels, got {channels}")));
    }
    if rgb.len() != 3 * h * w || h == 0 || w == 0 {
        return Err(data_err(format!("frame buffer of {} values for 3x{h}x{w}", rgb.len())));
    }
    let luma = luminance(rgb, h, w);
    let bands = dwt2_haar(&luma)?;
    let wavelet = bands
        .bands()
        .iter()
        .flat_map(|b| b.data.iter().map(|&v| v as f32))
        .collect();
    let fourier = fft2_amplitude(&luma)?.data.iter().map(|&v| v as f32).collect();
    Ok(FrameViews {
        spatial: rgb.to_vec(),
        wavelet,
        fourier,
    })
}
