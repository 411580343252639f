//! Deterministic synthetic grayscale scenes for desk-scale experiments.
//!
//! Scenes are a smooth background with a handful of flat or shaded shapes,
//! lightly blurred and perturbed by sensor-like noise. The edge-rich variant
//! packs in more, higher-contrast shapes and stripe patches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::image::{clamp_to_u8, Image};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneStyle {
    pub min_shapes: usize,
    pub max_shapes: usize,
    /// Largest intensity jump between a shape and its surroundings.
    pub contrast: f64,
    /// Probability that a shape is a stripe patch.
    pub stripe_probability: f64,
    pub noise_std: f64,
    pub blur: bool,
}

impl SceneStyle {
    pub const NATURAL: SceneStyle = SceneStyle {
        min_shapes: 2,
        max_shapes: 5,
        contrast: 90.0,
        stripe_probability: 0.1,
        noise_std: 1.0,
        blur: true,
    };

    pub const EDGE_RICH: SceneStyle = SceneStyle {
        min_shapes: 6,
        max_shapes: 10,
        contrast: 160.0,
        stripe_probability: 0.4,
        noise_std: 1.0,
        blur: false,
    };
}

enum Shape {
    Rect { r0: f64, c0: f64, r1: f64, c1: f64 },
    Ellipse { cr: f64, cc: f64, rr: f64, rc: f64 },
    Stripes { r0: f64, c0: f64, r1: f64, c1: f64, period: f64, vertical: bool },
}

impl Shape {
    fn covers(&self, r: f64, c: f64) -> bool {
        match *self {
            Shape::Rect { r0, c0, r1, c1 } => r >= r0 && r < r1 && c >= c0 && c < c1,
            Shape::Ellipse { cr, cc, rr, rc } => {
                let (dr, dc) = ((r - cr) / rr, (c - cc) / rc);
                dr * dr + dc * dc <= 1.0
            }
            Shape::Stripes {
                r0,
                c0,
                r1,
                c1,
                period,
                vertical,
            } => {
                let inside = r >= r0 && r < r1 && c >= c0 && c < c1;
                let t = if vertical { c - c0 } else { r - r0 };
                inside && (t / period).floor() as i64 % 2 == 0
            }
        }
    }
}

pub fn scene(side: usize, seed: u64, style: SceneStyle) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = side as f64;
    let base = rng.random_range(50.0..200.0);
    let gr = rng.random_range(-60.0..60.0) / s;
    let gc = rng.random_range(-60.0..60.0) / s;
    let wave_amp = rng.random_range(0.0..15.0);
    let wave_freq = rng.random_range(0.5..2.0) * std::f64::consts::TAU / s;
    let wave_phase = rng.random_range(0.0..std::f64::consts::TAU);

    let mut field: Vec<f64> = (0..side * side)
        .map(|i| {
            let (r, c) = ((i / side) as f64, (i % side) as f64);
            base + gr * (r - s / 2.0)
                + gc * (c - s / 2.0)
                + wave_amp * (wave_freq * (r + c) + wave_phase).sin()
        })
        .collect();

    let count = rng.random_range(style.min_shapes..=style.max_shapes);
    for _ in 0..count {
        let shape = random_shape(&mut rng, s, style.stripe_probability);
        let level = rng.random_range(-style.contrast..style.contrast);
        let shade_r = rng.random_range(-20.0..20.0) / s;
        let shade_c = rng.random_range(-20.0..20.0) / s;
        for (i, v) in field.iter_mut().enumerate() {
            let (r, c) = ((i / side) as f64, (i % side) as f64);
            if shape.covers(r + 0.5, c + 0.5) {
                *v = (*v + level + shade_r * r + shade_c * c).clamp(0.0, 255.0);
            }
        }
    }

    if style.blur {
        field = box_blur(&field, side);
    }
    let noise = Normal::new(0.0, style.noise_std.max(1e-9)).unwrap();
    Image::from_fn(side, side, |r, c| {
        clamp_to_u8(field[r * side + c] + noise.sample(&mut rng))
    })
    .expect("side is validated by the caller")
}

fn random_shape(rng: &mut ChaCha8Rng, s: f64, stripe_probability: f64) -> Shape {
    let roll: f64 = rng.random();
    let r0 = rng.random_range(-0.1 * s..0.8 * s);
    let c0 = rng.random_range(-0.1 * s..0.8 * s);
    let h = rng.random_range(0.15 * s..0.6 * s);
    let w = rng.random_range(0.15 * s..0.6 * s);
    if roll < stripe_probability {
        Shape::Stripes {
            r0,
            c0,
            r1: r0 + h,
            c1: c0 + w,
            period: rng.random_range(1.5..4.0),
            vertical: rng.random(),
        }
    } else if roll < stripe_probability + (1.0 - stripe_probability) / 2.0 {
        Shape::Rect {
            r0,
            c0,
            r1: r0 + h,
            c1: c0 + w,
        }
    } else {
        Shape::Ellipse {
            cr: r0 + h / 2.0,
            cc: c0 + w / 2.0,
            rr: h / 2.0,
            rc: w / 2.0,
        }
    }
}

/// 3×3 box filter with replicate padding.
fn box_blur(field: &[f64], side: usize) -> Vec<f64> {
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, side as isize - 1) as usize;
        let c = c.clamp(0, side as isize - 1) as usize;
        field[r * side + c]
    };
    (0..side * side)
        .map(|i| {
            let (r, c) = ((i / side) as isize, (i % side) as isize);
            let mut acc = 0.0;
            for dr in -1..=1 {
                for dc in -1..=1 {
                    acc += at(r + dr, c + dc);
                }
            }
            acc / 9.0
        })
        .collect()
}

pub fn natural(side: usize, seed: u64) -> Image {
    scene(side, seed, SceneStyle::NATURAL)
}

pub fn edge_rich(side: usize, seed: u64) -> Image {
    scene(side, seed, SceneStyle::EDGE_RICH)
}

/// A straight step edge at a random position and orientation.
pub fn step_edge(side: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let (sin, cos) = angle.sin_cos();
    let s = side as f64;
    let offset = rng.random_range(-0.25 * s..0.25 * s);
    let lo = rng.random_range(0.0..100.0);
    let hi = rng.random_range(155.0..255.0);
    Image::from_fn(side, side, |r, c| {
        let d = (r as f64 - s / 2.0) * cos + (c as f64 - s / 2.0) * sin - offset;
        if d < 0.0 {
            clamp_to_u8(lo)
        } else {
            clamp_to_u8(hi)
        }
    })
    .expect("side is validated by the caller")
}

/// Derives a child seed; distinct `(seed, stream, index)` give unrelated values.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut x = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge::prewitt_response;

    fn mean_gradient(img: &Image) -> f64 {
        let (h, w) = img.dims();
        let mut acc = 0.0;
        for r in 0..h {
            for c in 0..w {
                let (gx, gy) = prewitt_response(img, r, c);
                acc += gx.hypot(gy);
            }
        }
        acc / (h * w) as f64
    }

    #[test]
    fn deterministic_and_varied() {
        assert_eq!(natural(16, 4), natural(16, 4));
        assert_ne!(natural(16, 4), natural(16, 5));
        assert_eq!(step_edge(16, 1), step_edge(16, 1));
    }

    #[test]
    fn edge_rich_has_more_edges() {
        let n: f64 = (0..20).map(|s| mean_gradient(&natural(32, s))).sum();
        let e: f64 = (0..20).map(|s| mean_gradient(&edge_rich(32, s))).sum();
        assert!(e > 1.5 * n, "{e} vs {n}");
    }

    #[test]
    fn seeds_are_spread() {
        let a = derive_seed(1, 2, 3);
        assert_ne!(a, derive_seed(1, 2, 4));
        assert_ne!(a, derive_seed(1, 3, 3));
        assert_ne!(a, derive_seed(2, 2, 3));
    }
}
