//! Edge-adaptive pixel replacement.
//!
//! Each pixel may move at most `e_norm` intensity levels, where `e_norm`
//! grows from `ε` on flat regions to `2ε` on the strongest edge. Within that
//! window the pixel takes the most probable value under the analyzer's
//! per-pixel distribution. The approximate mode reads one frozen
//! distribution; the exact mode re-queries the model before every pixel,
//! in raster order, on the partially purified image.

use crate::edge::EdgeMap;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::mixture::{PixelDistribution, LEVELS};

/// Source of per-pixel distributions and edge maps for the eraser.
pub trait PixelModel: Sync {
    fn pixel_distribution(&self, img: &Image) -> Result<PixelDistribution>;

    /// Edge map normalized to a maximum of 1 (or all-zero).
    fn edge_map(&self, img: &Image) -> Result<EdgeMap>;

    fn analyze(&self, img: &Image) -> Result<(PixelDistribution, EdgeMap)> {
        Ok((self.pixel_distribution(img)?, self.edge_map(img)?))
    }

    /// Distribution of pixel `index` given the current image. Autoregressive
    /// models may restrict work to the pixels before `index`.
    fn conditional(&self, img: &Image, index: usize) -> Result<Vec<f64>> {
        Ok(self.pixel_distribution(img)?.pixel(index).to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EraserMode {
    Exact,
    #[serde(alias = "approximate")]
    Approx,
}

impl std::str::FromStr for EraserMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "approx" | "approximate" => Ok(Self::Approx),
            other => Err(Error::Config(format!("unknown eraser mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EraserConfig {
    epsilon: u32,
    pub mode: EraserMode,
    /// When false, `e_norm` is pinned to `ε` (edge guidance disabled).
    pub edge_guided: bool,
}

impl EraserConfig {
    pub fn new(epsilon: u32, mode: EraserMode) -> Result<Self> {
        if epsilon < 1 {
            return Err(Error::Config("epsilon must be at least 1".into()));
        }
        if epsilon > 255 {
            return Err(Error::Config(format!("epsilon {epsilon} exceeds the intensity range")));
        }
        Ok(Self {
            epsilon,
            mode,
            edge_guided: true,
        })
    }

    pub fn unguided(mut self) -> Self {
        self.edge_guided = false;
        self
    }

    pub fn epsilon(&self) -> u32 {
        self.epsilon
    }

    pub fn epsilon_max(&self) -> u32 {
        2 * self.epsilon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRange {
    pub e_norm: u32,
    pub r_min: u8,
    pub r_max: u8,
}

/// `ceil(p / p_max · (ε_max − ε)) + ε`, with the map already divided by its
/// maximum so the ratio is the stored value.
pub fn compute_e_norm(edge: &EdgeMap, row: usize, col: usize, cfg: &EraserConfig) -> u32 {
    if !cfg.edge_guided {
        return cfg.epsilon;
    }
    let ratio = edge.get(row, col).clamp(0.0, 1.0);
    let extra = (ratio * (cfg.epsilon_max() - cfg.epsilon) as f64).ceil() as u32;
    extra + cfg.epsilon
}

pub fn adaptive_range(x: u8, e_norm: u32) -> PixelRange {
    let x = x as i64;
    let e = e_norm as i64;
    PixelRange {
        e_norm,
        r_min: (x - e).max(0) as u8,
        r_max: (x + e).min(255) as u8,
    }
}

/// Most probable value in `[r_min, r_max]`. Ties go to the candidate closest
/// to `current`, then to the smaller value.
pub fn restricted_argmax(probs: &[f64], range: PixelRange, current: u8) -> u8 {
    debug_assert_eq!(probs.len(), LEVELS);
    let mut best = current;
    let mut best_p = f64::NEG_INFINITY;
    for k in range.r_min..=range.r_max {
        let p = probs[k as usize];
        let better = p > best_p
            || (p == best_p && {
                let dk = (k as i32 - current as i32).abs();
                let db = (best as i32 - current as i32).abs();
                dk < db || (dk == db && k < best)
            });
        if better {
            best = k;
            best_p = p;
        }
    }
    best
}

/// Purified image together with the per-pixel ranges that bounded it.
#[derive(Debug, Clone, PartialEq)]
pub struct Purified {
    pub image: Image,
    pub ranges: Vec<PixelRange>,
}

impl Purified {
    pub fn max_abs_change(&self, original: &Image) -> u32 {
        self.image
            .pixels()
            .iter()
            .zip(original.pixels())
            .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    pub fn e_norm_bounds(&self) -> (u32, u32) {
        let lo = self.ranges.iter().map(|r| r.e_norm).min().unwrap_or(0);
        let hi = self.ranges.iter().map(|r| r.e_norm).max().unwrap_or(0);
        (lo, hi)
    }
}

fn check_dims(stego: &Image, dist: &PixelDistribution, edge: &EdgeMap) -> Result<()> {
    for other in [dist.dims(), edge.dims()] {
        if other != stego.dims() {
            return Err(Error::DimensionMismatch {
                left: stego.dims(),
                right: other,
            });
        }
    }
    Ok(())
}

/// Every pixel replaced independently from a single frozen distribution.
pub fn purify_approx_traced(
    stego: &Image,
    dist: &PixelDistribution,
    edge: &EdgeMap,
    cfg: &EraserConfig,
) -> Result<Purified> {
    check_dims(stego, dist, edge)?;
    let (h, w) = stego.dims();
    let rows = crate::par::map_range(h, |r| {
        (0..w)
            .map(|c| {
                let x = stego.get(r, c);
                let range = adaptive_range(x, compute_e_norm(edge, r, c, cfg));
                (restricted_argmax(dist.at(r, c), range, x), range)
            })
            .collect::<Vec<_>>()
    });
    let (pixels, ranges): (Vec<u8>, Vec<PixelRange>) = rows.into_iter().flatten().unzip();
    Ok(Purified {
        image: Image::new(w, h, pixels)?,
        ranges,
    })
}

pub fn purify_approx(
    stego: &Image,
    dist: &PixelDistribution,
    edge: &EdgeMap,
    cfg: &EraserConfig,
) -> Result<Image> {
    Ok(purify_approx_traced(stego, dist, edge, cfg)?.image)
}

/// Sequential raster-order purification. The edge map is taken once from
/// the original stego image; the distribution is re-queried before every
/// pixel from the partially purified image.
pub fn purify_exact_traced(
    stego: &Image,
    model: &dyn PixelModel,
    cfg: &EraserConfig,
) -> Result<Purified> {
    let edge = model.edge_map(stego)?;
    if edge.dims() != stego.dims() {
        return Err(Error::DimensionMismatch {
            left: stego.dims(),
            right: edge.dims(),
        });
    }
    let (h, w) = stego.dims();
    let mut current = stego.clone();
    let mut ranges = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let index = r * w + c;
            let probs = model.conditional(&current, index)?;
            if probs.len() != LEVELS || probs.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite(format!("model output at pixel {index}")));
            }
            let x = current.get(r, c);
            let range = adaptive_range(x, compute_e_norm(&edge, r, c, cfg));
            current.pixels_mut()[index] = restricted_argmax(&probs, range, x);
            ranges.push(range);
        }
    }
    Ok(Purified {
        image: current,
        ranges,
    })
}

pub fn purify_exact(stego: &Image, model: &dyn PixelModel, cfg: &EraserConfig) -> Result<Image> {
    Ok(purify_exact_traced(stego, model, cfg)?.image)
}

/// Runs whichever mode `cfg` selects against `model`.
pub fn purify(stego: &Image, model: &dyn PixelModel, cfg: &EraserConfig) -> Result<Purified> {
    match cfg.mode {
        EraserMode::Approx => {
            let (dist, edge) = model.analyze(stego)?;
            purify_approx_traced(stego, &dist, &edge, cfg)
        }
        EraserMode::Exact => purify_exact_traced(stego, model, cfg),
    }
}
