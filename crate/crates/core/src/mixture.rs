//! Discretized logistic mixtures over the 256 intensity levels.
//!
//! Bins are centred on the integer grid `0..=255` with edges at `k ± 0.5`;
//! the outermost bins absorb the tails, so the bin masses telescope to one.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

/// Number of intensity levels.
pub const LEVELS: usize = 256;
/// Lower bound on the logistic scale `exp(s)`.
pub const MIN_SCALE: f64 = 1e-5;
/// Lower bound on a bin probability before taking its log.
pub const MIN_PROB: f64 = 1e-12;

/// Per-pixel analyzer outputs: edge logit `e` plus mixture logits, means
/// (intensity units) and log-scales, each mixture field holding `m` values
/// per pixel, pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadActivations {
    pub height: usize,
    pub width: usize,
    pub components: usize,
    pub edge_logits: Vec<f64>,
    pub logits: Vec<f64>,
    pub means: Vec<f64>,
    pub log_scales: Vec<f64>,
}

impl HeadActivations {
    /// Zero edge logits, uniform weights, every mean at `mean`, every
    /// log-scale at `log_scale`.
    pub fn constant(
        height: usize,
        width: usize,
        components: usize,
        mean: f64,
        log_scale: f64,
    ) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            components,
            edge_logits: vec![0.0; n],
            logits: vec![0.0; n * components],
            means: vec![mean; n * components],
            log_scales: vec![log_scale; n * components],
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn mixture_at(&self, pixel: usize) -> MixtureRef<'_> {
        let m = self.components;
        let range = pixel * m..(pixel + 1) * m;
        MixtureRef {
            logits: &self.logits[range.clone()],
            means: &self.means[range.clone()],
            log_scales: &self.log_scales[range],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.pixel_count();
        let m = self.components;
        if m == 0
            || self.edge_logits.len() != n
            || self.logits.len() != n * m
            || self.means.len() != n * m
            || self.log_scales.len() != n * m
        {
            return Err(Error::InvalidImage("inconsistent head activation sizes".into()));
        }
        let all = self
            .edge_logits
            .iter()
            .chain(&self.logits)
            .chain(&self.means)
            .chain(&self.log_scales);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("head activations".into()));
        }
        Ok(())
    }
}

/// Borrowed mixture parameters for a single pixel.
#[derive(Debug, Clone, Copy)]
pub struct MixtureRef<'a> {
    pub logits: &'a [f64],
    pub means: &'a [f64],
    pub log_scales: &'a [f64],
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax written into `out`.
pub fn softmax(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

#[inline]
fn scale_of(log_scale: f64) -> (f64, bool) {
    let s = log_scale.exp();
    if s < MIN_SCALE {
        (MIN_SCALE, true)
    } else {
        (s, false)
    }
}

/// Mass of bin `k` under one logistic component, and its partial
/// derivatives with respect to the mean and the log-scale.
#[inline]
fn component_bin(k: usize, mean: f64, log_scale: f64) -> (f64, f64, f64) {
    let (scale, floored) = scale_of(log_scale);
    let inv = 1.0 / scale;
    let upper = (k < LEVELS - 1).then_some((k as f64 + 0.5 - mean) * inv);
    let lower = (k > 0).then_some((k as f64 - 0.5 - mean) * inv);
    // σ(a) - σ(b) loses precision when both are near 1; mirror into the
    // lower tail in that case.
    let mass = match (upper, lower) {
        (Some(a), Some(b)) if b > 0.0 => sigmoid(-b) - sigmoid(-a),
        (Some(a), Some(b)) => sigmoid(a) - sigmoid(b),
        (Some(a), None) => sigmoid(a),
        (None, Some(b)) => sigmoid(-b),
        (None, None) => 1.0,
    };
    let dens = |t: Option<f64>| {
        t.map_or((0.0, 0.0), |t| {
            let s = sigmoid(t);
            let d = s * (1.0 - s);
            (d, d * t)
        })
    };
    let (da, ta) = dens(upper);
    let (db, tb) = dens(lower);
    let d_mean = -(da - db) * inv;
    let d_log_scale = if floored { 0.0 } else { -(ta - tb) };
    (mass.max(0.0), d_mean, d_log_scale)
}

/// Probability of bin `k` under a mixture (unfloored).
pub fn bin_probability(mix: MixtureRef<'_>, k: usize) -> f64 {
    let m = mix.logits.len();
    let mut w = vec![0.0; m];
    softmax(mix.logits, &mut w);
    (0..m)
        .map(|c| w[c] * component_bin(k, mix.means[c], mix.log_scales[c]).0)
        .sum()
}

/// Floored log-probability of bin `k`, together with its gradient with
/// respect to the logits, means and log-scales (each of length `m`).
pub fn log_prob_with_grad(
    mix: MixtureRef<'_>,
    k: usize,
    d_logits: &mut [f64],
    d_means: &mut [f64],
    d_log_scales: &mut [f64],
) -> f64 {
    let m = mix.logits.len();
    assert!(m <= MAX_COMPONENTS, "at most {MAX_COMPONENTS} mixture components");
    let mut w = [0.0f64; MAX_COMPONENTS];
    let mut parts = [(0.0f64, 0.0f64, 0.0f64); MAX_COMPONENTS];
    let (w, parts) = (&mut w[..m], &mut parts[..m]);
    softmax(mix.logits, w);
    let mut p = 0.0;
    for c in 0..m {
        parts[c] = component_bin(k, mix.means[c], mix.log_scales[c]);
        p += w[c] * parts[c].0;
    }
    if p < MIN_PROB {
        d_logits.fill(0.0);
        d_means.fill(0.0);
        d_log_scales.fill(0.0);
        return MIN_PROB.ln();
    }
    for c in 0..m {
        let (mass, dm, ds) = parts[c];
        d_logits[c] = w[c] * mass / p - w[c];
        d_means[c] = w[c] * dm / p;
        d_log_scales[c] = w[c] * ds / p;
    }
    p.ln()
}

/// Maximum number of mixture components supported by the gradient kernels.
pub const MAX_COMPONENTS: usize = 16;

/// An `I × J × 256` categorical distribution, one row of 256 probabilities
/// per pixel in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelDistribution {
    height: usize,
    width: usize,
    probs: Vec<f64>,
}

impl PixelDistribution {
    pub fn new(height: usize, width: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != height * width * LEVELS {
            return Err(Error::InvalidImage(format!(
                "{} probabilities for a {width}x{height} distribution",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::NonFinite("pixel distribution".into()));
        }
        Ok(Self {
            height,
            width,
            probs,
        })
    }

    /// Every pixel uniform over the 256 levels.
    pub fn uniform(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            probs: vec![1.0 / LEVELS as f64; height * width * LEVELS],
        }
    }

    /// Every pixel a point mass at the value returned by `f(row, col)`.
    pub fn point_masses(height: usize, width: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let mut probs = vec![0.0; height * width * LEVELS];
        for r in 0..height {
            for c in 0..width {
                probs[(r * width + c) * LEVELS + f(r, c) as usize] = 1.0;
            }
        }
        Self {
            height,
            width,
            probs,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.probs[index * LEVELS..(index + 1) * LEVELS]
    }

    pub fn at(&self, row: usize, col: usize) -> &[f64] {
        self.pixel(row * self.width + col)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Writes the tensor as `b"PXDIST01"`, then `I`, `J`, `K` as little-endian
    /// u32, then `I·J·K` little-endian f64 in row-major order.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        out.write_all(DIST_MAGIC)?;
        for d in [self.height, self.width, LEVELS] {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for p in &self.probs {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::MalformedHeader(format!("pixel distribution: {m}"));
        if data.len() < 20 || &data[..8] != DIST_MAGIC {
            return Err(bad("bad magic"));
        }
        let dim = |i: usize| u32::from_le_bytes(data[8 + 4 * i..12 + 4 * i].try_into().unwrap());
        let (h, w, k) = (dim(0) as usize, dim(1) as usize, dim(2) as usize);
        if k != LEVELS {
            return Err(bad("depth must be 256"));
        }
        let body = &data[20..];
        if body.len() != h * w * k * 8 {
            return Err(Error::TruncatedPayload {
                expected: h * w * k * 8,
                found: body.len(),
            });
        }
        let probs = body
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::new(h, w, probs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = std::io::BufWriter::new(file);
        self.write_to(&mut buf)
            .and_then(|_| buf.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}

const DIST_MAGIC: &[u8; 8] = b"PXDIST01";

/// Fills `out` (length 256) with the bin masses of one pixel's mixture.
pub fn pixel_probabilities(mix: MixtureRef<'_>, out: &mut [f64]) {
    let m = mix.logits.len();
    let mut w = [0.0f64; MAX_COMPONENTS];
    softmax(mix.logits, &mut w[..m]);
    out.fill(0.0);
    for ((&weight, &log_scale), &mean) in w[..m].iter().zip(mix.log_scales).zip(mix.means) {
        let (scale, _) = scale_of(log_scale);
        let inv = 1.0 / scale;
        // CDF evaluated at the 255 interior edges; bins are differences
        let mut prev_t = f64::NEG_INFINITY;
        let mut prev_lo = 0.0; // CDF at the previous edge
        let mut prev_hi = 1.0; // survival at the previous edge
        for (k, o) in out.iter_mut().enumerate() {
            let mass = if k == LEVELS - 1 {
                prev_hi
            } else {
                let t = (k as f64 + 0.5 - mean) * inv;
                let lo = sigmoid(t);
                let hi = sigmoid(-t);
                // difference in whichever tail keeps precision
                let mass = if prev_t > 0.0 { prev_hi - hi } else { lo - prev_lo };
                prev_t = t;
                prev_lo = lo;
                prev_hi = hi;
                mass
            };
            *o += weight * mass.max(0.0);
        }
    }
}

/// Expands head activations into explicit per-pixel distributions.
pub fn to_pixel_distribution(h: &HeadActivations) -> Result<PixelDistribution> {
    h.validate()?;
    if h.components > MAX_COMPONENTS {
        return Err(Error::Config(format!(
            "{} mixture components exceed the limit of {MAX_COMPONENTS}",
            h.components
        )));
    }
    let mut probs = vec![0.0; h.pixel_count() * LEVELS];
    crate::par::for_each_chunk_mut(&mut probs, LEVELS, |i, out| {
        pixel_probabilities(h.mixture_at(i), out)
    });
    Ok(PixelDistribution {
        height: h.height,
        width: h.width,
        probs,
    })
}

/// Floored natural-log probability of each true pixel value.
pub fn pixel_log_prob(h: &HeadActivations, img: &Image) -> Result<Vec<f64>> {
    h.validate()?;
    if (h.height, h.width) != img.dims() {
        return Err(Error::DimensionMismatch {
            left: (h.height, h.width),
            right: img.dims(),
        });
    }
    Ok(img
        .pixels()
        .iter()
        .enumerate()
        .map(|(i, &x)| log_prob(h.mixture_at(i), x as usize))
        .collect())
}

/// Floored log-probability of a single bin.
pub fn log_prob(mix: MixtureRef<'_>, k: usize) -> f64 {
    let m = mix.logits.len();
    let mut scratch = [0.0f64; 3 * MAX_COMPONENTS];
    let (a, rest) = scratch.split_at_mut(m);
    let (b, c) = rest.split_at_mut(m);
    log_prob_with_grad(mix, k, a, b, &mut c[..m])
}
