//! k-plane LSB insertion: the secret's top `k` bits replace the cover's low
//! `k` bits, and extraction shifts them back up with zero fill.

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LsbConfig {
    k: u8,
}

impl LsbConfig {
    pub fn new(k: u8) -> Result<Self> {
        if !(1..=8).contains(&k) {
            return Err(Error::Config(format!("LSB plane count {k} not in [1, 8]")));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> u8 {
        self.k
    }

    #[inline]
    fn low_mask(&self) -> u8 {
        ((1u16 << self.k) - 1) as u8
    }

    /// The secret value as it survives a lossless embed/extract cycle.
    #[inline]
    pub fn quantize(&self, secret: u8) -> u8 {
        secret & ((0xFFu16 << (8 - self.k)) as u8)
    }

    #[inline]
    pub fn embed_pixel(&self, cover: u8, secret: u8) -> u8 {
        (cover & !self.low_mask()) | (secret >> (8 - self.k))
    }

    #[inline]
    pub fn extract_pixel(&self, stego: u8) -> u8 {
        (((stego & self.low_mask()) as u16) << (8 - self.k)) as u8
    }
}

impl Default for LsbConfig {
    fn default() -> Self {
        Self { k: 4 }
    }
}

pub fn embed(cover: &Image, secret: &Image, cfg: LsbConfig) -> Result<Image> {
    cover.ensure_same_dims(secret)?;
    let pixels = cover
        .pixels()
        .iter()
        .zip(secret.pixels())
        .map(|(&c, &s)| cfg.embed_pixel(c, s))
        .collect();
    Image::new(cover.width(), cover.height(), pixels)
}

pub fn extract(stego: &Image, cfg: LsbConfig) -> Image {
    stego.map(|p| cfg.extract_pixel(p))
}
