//! Binary PPM (`P6`) reading and writing.

use std::io::Write;

use crate::error::{Error, Result};
use crate::patchgrid::FeatureMap;

/// RGB raster, row-major, three samples per pixel, each in `0..=maxval`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PpmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl PpmImage {
    pub fn new(width: usize, height: usize, maxval: u16, samples: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Ppm(format!("empty image {width}x{height}")));
        }
        if maxval == 0 {
            return Err(Error::Ppm("maxval must be positive".into()));
        }
        if samples.len() != width * height * 3 {
            return Err(Error::Ppm(format!(
                "{} samples for a {width}x{height} RGB image",
                samples.len()
            )));
        }
        if let Some(v) = samples.iter().find(|&&v| v > maxval) {
            return Err(Error::Ppm(format!("sample {v} exceeds maxval {maxval}")));
        }
        Ok(Self {
            width,
            height,
            maxval,
            samples,
        })
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, 255, bytes.iter().map(|&b| b as u16).collect())
    }

    /// White where `mask` is set, black elsewhere.
    pub fn from_mask(width: usize, height: usize, mask: &[bool]) -> Result<Self> {
        let samples = mask
            .iter()
            .flat_map(|&m| [if m { 255 } else { 0 }; 3])
            .collect();
        Self::new(width, height, 255, samples)
    }

    /// Samples divided by `maxval`.
    pub fn to_feature_map(&self) -> FeatureMap {
        let scale = self.maxval as f64;
        let data = self.samples.iter().map(|&v| v as f64 / scale).collect();
        FeatureMap::new(self.height, self.width, 3, data).expect("shape checked on construction")
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n' && c != b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Ppm(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Ppm(format!("{what} out of range")))
    }
}

/// Parses a `P6` file. Samples are one byte for `maxval < 256`, otherwise
/// two bytes, big-endian.
pub fn decode(bytes: &[u8]) -> Result<PpmImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::Ppm("not a binary PPM (missing P6 magic)".into()));
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if !(1..=65535).contains(&maxval) {
        return Err(Error::Ppm(format!("maxval {maxval} outside 1..=65535")));
    }
    if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Ppm("header must end with one whitespace byte".into()));
    }
    let body = &bytes[h.pos + 1..];
    let per_sample = if maxval > 255 { 2 } else { 1 };
    let need = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(3 * per_sample))
        .ok_or_else(|| Error::Ppm("image dimensions overflow".into()))?;
    if body.len() < need {
        return Err(Error::Ppm(format!("truncated raster: {} of {need} bytes", body.len())));
    }
    let samples = if per_sample == 2 {
        body[..need]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    } else {
        body[..need].iter().map(|&b| b as u16).collect()
    };
    PpmImage::new(width, height, maxval as u16, samples)
}

pub fn encode(img: &PpmImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval > 255 {
        out.extend(img.samples.iter().flat_map(|v| v.to_be_bytes()));
    } else {
        out.extend(img.samples.iter().map(|&v| v as u8));
    }
    out
}

pub fn read(path: &std::path::Path) -> Result<PpmImage> {
    decode(&std::fs::read(path)?)
}

pub fn write(path: &std::path::Path, img: &PpmImage) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(img))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let img = PpmImage::from_rgb8(2, 1, &[1, 2, 3, 250, 251, 252]).unwrap();
        assert_eq!(decode(&encode(&img)).unwrap(), img);
        let wide = PpmImage::new(1, 1, 1000, vec![0, 999, 1000]).unwrap();
        assert_eq!(decode(&encode(&wide)).unwrap(), wide);
    }

    #[test]
    fn comments_and_odd_spacing() {
        let mut bytes = b"P6 # made by hand\n 1\t# w\n1\n# max\n255 ".to_vec();
        bytes.extend_from_slice(&[9, 8, 7]);
        assert_eq!(decode(&bytes).unwrap().samples, vec![9, 8, 7]);
    }

    #[test]
    fn scaled_by_maxval() {
        let mut bytes = b"P6 1 1 65535\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xff, 0x00, 0x00, 0x80, 0x00]);
        let f = decode(&bytes).unwrap().to_feature_map();
        assert_eq!(f.pixel(0, 0), &[1.0, 0.0, 32768.0 / 65535.0]);
        let f = decode(b"P6 1 1 4\n\x04\x02\x00").unwrap().to_feature_map();
        assert_eq!(f.pixel(0, 0), &[1.0, 0.5, 0.0]);
    }

    #[test]
    fn malformed_inputs() {
        for bad in [
            &b"P5 1 1 255\n\0"[..],
            b"P6 1 1 255\n\x01\x02",
            b"P6 1 1",
            b"P6 1 1 0\n\0\0\0",
            b"P6 x 1 255\n",
            b"P6 99999999999999999999999 1 255\n",
            b"P6 1 1 4\n\x05\x00\x00",
            b"",
        ] {
            assert!(matches!(decode(bad), Err(Error::Ppm(_))), "{bad:?}");
        }
    }

    #[test]
    fn mask_image() {
        let img = PpmImage::from_mask(2, 1, &[true, false]).unwrap();
        assert_eq!(img.samples, vec![255, 255, 255, 0, 0, 0]);
        assert!(PpmImage::from_mask(3, 1, &[true]).is_err());
    }
}
