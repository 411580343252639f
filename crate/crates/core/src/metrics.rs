//! Image-quality and secret-removal metrics.
//!
//! Decoded and destruction rates are computed on intensities scaled to
//! `[0, 1]`, averaged over the `I·J` pixels.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::Image;

/// Value reported by [`psnr`] for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub decoded_rate: f64,
    pub destruction_rate: f64,
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// `10·log10(255² / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (255.0 * 255.0 / m).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / s).collect();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for a in &g {
        for b in &g {
            w.push(a * b);
        }
    }
    w
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), averaged
/// over every window position that fits inside the image.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidImage(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let win = gaussian_window();
    let positions: Vec<(usize, usize)> = (0..=h - SSIM_WINDOW)
        .flat_map(|r| (0..=w - SSIM_WINDOW).map(move |c| (r, c)))
        .collect();
    let scores = crate::par::map(&positions, |&(r0, c0)| {
        let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..SSIM_WINDOW {
            for j in 0..SSIM_WINDOW {
                let wt = win[i * SSIM_WINDOW + j];
                let x = a.get(r0 + i, c0 + j) as f64;
                let y = b.get(r0 + i, c0 + j) as f64;
                ma += wt * x;
                mb += wt * y;
                saa += wt * (x * x);
                sbb += wt * (y * y);
                sab += wt * (x * y);
            }
        }
        let va = saa - ma * ma;
        let vb = sbb - mb * mb;
        let cov = sab - ma * mb;
        ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
    });
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

fn mean_abs_normalized(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let sum: u64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| (x as i32 - y as i32).unsigned_abs() as u64)
        .sum();
    Ok(sum as f64 / 255.0 / a.len() as f64)
}

/// `1 − mean |H − D|` between the original secret and a decoded secret.
pub fn decoded_rate(secret: &Image, decoded: &Image) -> Result<f64> {
    Ok(1.0 - mean_abs_normalized(secret, decoded)?)
}

/// `mean |D_o − D_d|` between the secret decoded before and after removal.
/// The original secret is deliberately not an input.
///
/// Evaluated as the complement of the decoded rate against `D_o`, so
/// `destruction_rate(a, b) == 1 - decoded_rate(a, b)` holds bit for bit.
pub fn destruction_rate(decoded_original: &Image, decoded_destroyed: &Image) -> Result<f64> {
    Ok(1.0 - decoded_rate(decoded_original, decoded_destroyed)?)
}

/// All four metrics. PSNR and SSIM compare `reference` with `modified`.
pub fn evaluate(
    reference: &Image,
    modified: &Image,
    secret: &Image,
    decoded_original: &Image,
    decoded_destroyed: &Image,
) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr: psnr(reference, modified)?,
        ssim: ssim(reference, modified)?,
        decoded_rate: decoded_rate(secret, decoded_destroyed)?,
        destruction_rate: destruction_rate(decoded_original, decoded_destroyed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img_from(seed: u64, w: usize, h: usize) -> Image {
        let mut s = seed;
        Image::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 56) as u8
        })
        .unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = img_from(1, 8, 8);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
        let base = Image::filled(8, 8, 100).unwrap();
        let plus = Image::filled(8, 8, 101).unwrap();
        let expected = 10.0 * (255.0f64 * 255.0).log10();
        assert!((psnr(&base, &plus).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 48.13).abs() < 0.01);
        let black = Image::filled(8, 8, 0).unwrap();
        let white = Image::filled(8, 8, 255).unwrap();
        assert_eq!(psnr(&black, &white).unwrap(), 0.0);
        assert!(psnr(&black, &Image::filled(9, 8, 0).unwrap()).is_err());
    }

    #[test]
    fn ssim_examples() {
        let a = img_from(3, 16, 16);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = img_from(4, 16, 16);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert!(ssim(&Image::filled(10, 12, 0).unwrap(), &Image::filled(10, 12, 0).unwrap()).is_err());
    }

    #[test]
    fn ssim_constant_offset_matches_formula() {
        let a = Image::filled(12, 12, 100).unwrap();
        let b = Image::filled(12, 12, 150).unwrap();
        // zero variance in both windows: structure term is exactly 1 and the
        // score reduces to the luminance term
        let luminance = (2.0 * 100.0 * 150.0 + SSIM_C1) / (100.0f64.powi(2) + 150.0f64.powi(2) + SSIM_C1);
        let s = ssim(&a, &b).unwrap();
        assert!(luminance < 1.0);
        assert!((s - luminance).abs() < 1e-9, "{s} vs {luminance}");
    }

    #[test]
    fn decoded_and_destruction_examples() {
        let zero = Image::filled(4, 4, 0).unwrap();
        let full = Image::filled(4, 4, 255).unwrap();
        let half = Image::filled(4, 4, 128).unwrap();
        assert_eq!(decoded_rate(&zero, &zero).unwrap(), 1.0);
        assert_eq!(decoded_rate(&zero, &full).unwrap(), 0.0);
        assert!((decoded_rate(&zero, &half).unwrap() - (1.0 - 128.0 / 255.0)).abs() < 1e-15);
        assert_eq!(destruction_rate(&zero, &zero).unwrap(), 0.0);
        assert_eq!(destruction_rate(&zero, &full).unwrap(), 1.0);
        // agrees with the direct mean absolute difference up to rounding
        let a = img_from(8, 6, 6);
        let b = img_from(9, 6, 6);
        let direct = mean_abs_normalized(&a, &b).unwrap();
        assert!((destruction_rate(&a, &b).unwrap() - direct).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn rate_identities(s1 in any::<u64>(), s2 in any::<u64>()) {
            let a = img_from(s1, 5, 4);
            let b = img_from(s2, 5, 4);
            prop_assert_eq!(decoded_rate(&a, &a).unwrap(), 1.0);
            prop_assert_eq!(destruction_rate(&a, &a).unwrap(), 0.0);
            prop_assert_eq!(destruction_rate(&a, &b).unwrap(), 1.0 - decoded_rate(&a, &b).unwrap());
            prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        }
    }
}
