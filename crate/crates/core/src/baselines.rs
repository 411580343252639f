//! Conventional active-steganalysis comparators: additive Gaussian noise,
//! median filtering and local-statistics Wiener restoration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{clamp_to_u8, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Gaussian,
    Median,
    Wiener,
}

impl std::str::FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "median" => Ok(Self::Median),
            "wiener" => Ok(Self::Wiener),
            other => Err(Error::Config(format!("unknown baseline {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    /// Noise standard deviation (Gaussian only).
    pub epsilon: u32,
    /// Odd window side (median and Wiener).
    pub window: usize,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "window {} must be odd and at least 3",
                self.window
            )));
        }
        Ok(())
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        self.validate()?;
        Ok(match self.method {
            BaselineMethod::Gaussian => gaussian_noise(img, self.epsilon, self.seed),
            BaselineMethod::Median => median_filter(img, self.window)?,
            BaselineMethod::Wiener => wiener_restore(img, self.window)?,
        })
    }
}

/// Adds rounded `Normal(0, ε)` noise to every pixel and clamps.
pub fn gaussian_noise(img: &Image, epsilon: u32, seed: u64) -> Image {
    if epsilon == 0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, epsilon as f64).expect("positive standard deviation");
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| clamp_to_u8(p as f64 + normal.sample(&mut rng).round()))
        .collect();
    Image::new(img.width(), img.height(), pixels).expect("same dimensions")
}

fn check_window(window: usize) -> Result<()> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "window {window} must be odd and at least 3"
        )));
    }
    Ok(())
}

/// Window values around `(r, c)` with replicate padding, written into `buf`.
fn gather(img: &Image, r: usize, c: usize, window: usize, buf: &mut Vec<u8>) {
    let half = (window / 2) as isize;
    buf.clear();
    for dr in -half..=half {
        for dc in -half..=half {
            buf.push(img.get_clamped(r as isize + dr, c as isize + dc));
        }
    }
}

pub fn median_filter(img: &Image, window: usize) -> Result<Image> {
    check_window(window)?;
    let (h, w) = img.dims();
    let rows = crate::par::map_range(h, |r| {
        let mut buf = Vec::with_capacity(window * window);
        (0..w)
            .map(|c| {
                gather(img, r, c, window, &mut buf);
                let mid = buf.len() / 2;
                *buf.select_nth_unstable(mid).1
            })
            .collect::<Vec<u8>>()
    });
    Image::new(w, h, rows.concat())
}

/// Local mean and (population) variance over each window.
fn local_stats(img: &Image, window: usize) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = img.dims();
    let n = (window * window) as f64;
    let mut means = Vec::with_capacity(h * w);
    let mut vars = Vec::with_capacity(h * w);
    let mut buf = Vec::with_capacity(window * window);
    for r in 0..h {
        for c in 0..w {
            gather(img, r, c, window, &mut buf);
            let m = buf.iter().map(|&v| v as f64).sum::<f64>() / n;
            let v = buf.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / n;
            means.push(m);
            vars.push(v);
        }
    }
    (means, vars)
}

/// `m + max(v − v_n, 0) / max(v, v_n) · (x − m)` with `v_n` the mean local
/// variance; a pixel whose gain is undefined (`v = v_n = 0`) keeps the local
/// mean.
pub fn wiener_restore(img: &Image, window: usize) -> Result<Image> {
    check_window(window)?;
    let (means, vars) = local_stats(img, window);
    let noise = vars.iter().sum::<f64>() / vars.len() as f64;
    let pixels = img
        .pixels()
        .iter()
        .zip(means.iter().zip(&vars))
        .map(|(&x, (&m, &v))| {
            let denom = v.max(noise);
            let gain = if denom > 0.0 {
                (v - noise).max(0.0) / denom
            } else {
                0.0
            };
            clamp_to_u8(m + gain * (x as f64 - m))
        })
        .collect();
    Image::new(img.width(), img.height(), pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_zero_is_identity_and_seeded() {
        let img = Image::from_fn(8, 8, |r, c| (r * 20 + c) as u8).unwrap();
        assert_eq!(gaussian_noise(&img, 0, 1), img);
        assert_eq!(gaussian_noise(&img, 3, 42), gaussian_noise(&img, 3, 42));
        assert_ne!(gaussian_noise(&img, 3, 42), gaussian_noise(&img, 3, 43));
    }

    #[test]
    fn gaussian_std_matches_epsilon() {
        let img = Image::filled(200, 200, 128).unwrap();
        for eps in [2u32, 4, 8] {
            let out = gaussian_noise(&img, eps, 7);
            let diffs: Vec<f64> = out
                .pixels()
                .iter()
                .map(|&p| p as f64 - 128.0)
                .collect();
            let n = diffs.len() as f64;
            let mean = diffs.iter().sum::<f64>() / n;
            let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!((std - eps as f64).abs() / (eps as f64) < 0.05, "eps {eps}: std {std}");
        }
    }

    #[test]
    fn median_examples() {
        let flat = Image::filled(6, 6, 90).unwrap();
        assert_eq!(median_filter(&flat, 3).unwrap(), flat);

        let impulse = Image::from_fn(7, 7, |r, c| if (r, c) == (3, 3) { 255 } else { 40 }).unwrap();
        assert_eq!(median_filter(&impulse, 3).unwrap(), Image::filled(7, 7, 40).unwrap());

        let ramp = Image::from_fn(8, 8, |r, c| (r * 10 + c * 3) as u8).unwrap();
        let out = median_filter(&ramp, 3).unwrap();
        for r in 1..7 {
            for c in 1..7 {
                assert_eq!(out.get(r, c), ramp.get(r, c));
            }
        }
        assert!(median_filter(&ramp, 4).is_err());
    }

    #[test]
    fn median_idempotent_on_binary_image() {
        let img = Image::from_fn(9, 9, |r, c| if (r / 3 + c / 2) % 2 == 0 { 0 } else { 255 }).unwrap();
        let once = median_filter(&img, 3).unwrap();
        // a second pass may still erode thin features; iterate to the root
        let mut root = once;
        for _ in 0..20 {
            let next = median_filter(&root, 3).unwrap();
            if next == root {
                break;
            }
            root = next;
        }
        assert_eq!(median_filter(&root, 3).unwrap(), root);
    }

    #[test]
    fn wiener_constant_and_edges() {
        let flat = Image::filled(7, 7, 33).unwrap();
        assert_eq!(wiener_restore(&flat, 3).unwrap(), flat);

        // one strong step in a mostly flat field: v at the step far exceeds v_n
        let step = Image::from_fn(16, 16, |_, c| if c < 8 { 20 } else { 230 }).unwrap();
        let out = wiener_restore(&step, 3).unwrap();
        for r in 0..16 {
            for c in 6..10 {
                assert!((out.get(r, c) as i32 - step.get(r, c) as i32).abs() <= 40);
            }
        }
    }

    #[test]
    fn wiener_matches_two_pass_formula() {
        let img = Image::from_fn(6, 5, |r, c| ((r * 37 + c * 91) % 256) as u8).unwrap();
        let out = wiener_restore(&img, 3).unwrap();
        // pass 1: local statistics by explicit neighbourhood loops
        let (h, w) = (5i32, 6i32);
        let mut m = vec![0.0; 30];
        let mut v = vec![0.0; 30];
        for r in 0..h {
            for c in 0..w {
                let mut vals = vec![];
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let rr = (r + dr).clamp(0, h - 1) as usize;
                        let cc = (c + dc).clamp(0, w - 1) as usize;
                        vals.push(img.get(rr, cc) as f64);
                    }
                }
                let mean = vals.iter().sum::<f64>() / 9.0;
                m[(r * w + c) as usize] = mean;
                v[(r * w + c) as usize] = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 9.0;
            }
        }
        let vn = v.iter().sum::<f64>() / 30.0;
        // pass 2: apply the gain
        for i in 0..30 {
            let x = img.pixels()[i] as f64;
            let gain = (v[i] - vn).max(0.0) / v[i].max(vn);
            let expected = (m[i] + gain * (x - m[i])).round().clamp(0.0, 255.0) as u8;
            assert_eq!(out.pixels()[i], expected, "pixel {i}");
        }
    }

    #[test]
    fn config_validation() {
        let cfg = BaselineConfig {
            method: BaselineMethod::Median,
            epsilon: 0,
            window: 2,
            seed: 0,
        };
        assert!(cfg.apply(&Image::filled(4, 4, 0).unwrap()).is_err());
    }
}
