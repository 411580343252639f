//! Grayscale raster and binary PGM (P5) I/O.
//!
//! Pixels are stored row-major with the origin at the top-left corner, which
//! is also the raster order used for autoregressive conditioning.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Smallest admissible side length; every 3×3 kernel needs a full neighborhood.
pub const MIN_SIDE: usize = 3;

/// An 8-bit grayscale image of `height` rows and `width` columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} is smaller than the {MIN_SIDE}x{MIN_SIDE} minimum"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(height, width)`, i.e. `(I, J)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Pixel lookup with coordinates clamped into the image (replicate padding).
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> u8 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.pixels[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    /// Applies `f` to every pixel, producing a new image of the same size.
    pub fn map(&self, f: impl Fn(u8) -> u8) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }

    /// Encodes the image as binary PGM (P5, maxval 255).
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let header = format!("P5\n{} {}\n255\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + self.pixels.len());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Decodes a binary PGM (P5) byte stream. Only maxval 255 is accepted.
    pub fn from_pgm_bytes(data: &[u8]) -> Result<Self> {
        let mut cursor = HeaderCursor { data, pos: 0 };
        let magic = cursor.token()?;
        if magic != b"P5" {
            return Err(Error::MalformedHeader(format!(
                "magic {:?} is not P5",
                String::from_utf8_lossy(magic)
            )));
        }
        let width = cursor.number("width")?;
        let height = cursor.number("height")?;
        let maxval = cursor.number("maxval")?;
        // exactly one whitespace byte separates the header from the raster
        match data.get(cursor.pos) {
            Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
            _ => return Err(Error::MalformedHeader("missing separator after maxval".into())),
        }
        if maxval != 255 {
            return Err(Error::UnsupportedBitDepth(maxval));
        }
        let (width, height) = (width as usize, height as usize);
        let expected = width * height;
        let payload = &data[cursor.pos..];
        if payload.len() < expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: payload.len(),
            });
        }
        Image::new(width, height, payload[..expected].to_vec())
    }
}

struct HeaderCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.data.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while let Some(&b) = self.data.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader("unexpected end of header".into()));
        }
        Ok(&self.data[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                Error::MalformedHeader(format!(
                    "{what} {:?} is not a number",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

/// Reads a binary PGM file.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    Image::from_pgm_bytes(&data)
}

/// Writes `img` as binary PGM (P5, maxval 255).
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&img.to_pgm_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Rounds and clamps a real intensity into `[0, 255]`.
#[inline]
pub fn clamp_to_u8(v: f64) -> u8 {
    if v.is_nan() {
        0
    } else {
        v.round().clamp(0.0, 255.0) as u8
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_all_zero_3x3() {
        let mut data = b"P5\n3 3 255\n".to_vec();
        data.extend_from_slice(&[0u8; 9]);
        let img = Image::from_pgm_bytes(&data).unwrap();
        assert_eq!(img.dims(), (3, 3));
        assert!(img.pixels().iter().all(|&p| p == 0));
    }

    #[test]
    fn rejects_16_bit() {
        let mut data = b"P5\n3 3 65535\n".to_vec();
        data.extend_from_slice(&[0u8; 18]);
        let err = Image::from_pgm_bytes(&data).unwrap_err();
        assert!(matches!(err, Error::UnsupportedBitDepth(65535)));
        assert!(err.to_string().contains("unsupported bit depth"));
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(
            Image::from_pgm_bytes(b"P2\n3 3 255\n"),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            Image::from_pgm_bytes(b"P5\n3 x 255\n"),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            Image::from_pgm_bytes(b"P5\n3 3 255\n\x01\x02"),
            Err(Error::TruncatedPayload {
                expected: 9,
                found: 2
            })
        ));
        assert!(matches!(
            load_image("/definitely/not/here.pgm"),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut data = b"P5\n# made by hand\n3 3\n# depth\n255\n".to_vec();
        data.extend_from_slice(&[7u8; 9]);
        let img = Image::from_pgm_bytes(&data).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 7));
    }

    #[test]
    fn all_white_payload() {
        let img = Image::filled(3, 3, 255).unwrap();
        let bytes = img.to_pgm_bytes();
        assert_eq!(&bytes[..11], b"P5\n3 3\n255\n");
        assert_eq!(&bytes[11..], &[0xFF; 9]);
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(Image::new(2, 5, vec![0; 10]).is_err());
        assert!(Image::new(4, 4, vec![0; 15]).is_err());
    }

    #[test]
    fn unwritable_path() {
        let img = Image::filled(3, 3, 1).unwrap();
        let err = save_image(&img, "/nonexistent-dir/x/y.pgm").unwrap_err();
        assert!(matches!(err, Error::NotFound(_) | Error::Io { .. }));
    }

    #[test]
    fn file_round_trip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = Image::from_fn(5, 4, |r, c| (r * 40 + c * 7) as u8).unwrap();
        save_image(&img, &path).unwrap();
        let original = fs::read(&path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back, img);
        let path2 = dir.path().join("b.pgm");
        save_image(&back, &path2).unwrap();
        assert_eq!(fs::read(&path2).unwrap(), original);
    }

    proptest! {
        #[test]
        fn bytes_round_trip(w in 3usize..12, h in 3usize..12, seed in any::<u64>()) {
            let mut s = seed;
            let img = Image::from_fn(w, h, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 56) as u8
            }).unwrap();
            prop_assert_eq!(Image::from_pgm_bytes(&img.to_pgm_bytes()).unwrap(), img);
        }
    }
}
