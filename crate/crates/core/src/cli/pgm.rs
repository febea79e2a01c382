//! Binary greymap (P5) reading and writing.

use std::fs;
use std::path::Path;

use crate::error::{DeconvError, Result};

/// Row-major intensities in `[0, 1]`, remembering the depth they were
/// stored at.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
    pub maxval: u16,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height * width != pixels.len() || pixels.is_empty() {
            return Err(DeconvError::Dimension(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        Ok(GrayImage {
            height,
            width,
            pixels,
            maxval: 255,
        })
    }

    /// Clamps into `[0, 1]`; reconstructions can over- or undershoot.
    pub fn from_unclamped(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        Self::new(height, width, values.iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn with_maxval(mut self, maxval: u16) -> Self {
        self.maxval = maxval;
        self
    }
}

fn format_err(msg: impl Into<String>) -> DeconvError {
    DeconvError::Format(msg.into())
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn header_token(data: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() && data[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(format_err("truncated PGM header"));
    }
    Ok(String::from_utf8_lossy(&data[start..*pos]).into_owned())
}

pub fn decode_pgm(data: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let magic = header_token(data, &mut pos)?;
    match magic.as_str() {
        "P5" => {}
        "P2" => return Err(format_err("ASCII PGM (P2) is not supported; convert to binary P5")),
        other => return Err(format_err(format!("not a binary PGM (magic '{other}')"))),
    }
    let mut number = |what: &str| -> Result<usize> {
        let tok = header_token(data, &mut pos)?;
        tok.parse::<usize>()
            .map_err(|_| format_err(format!("bad PGM {what} '{tok}'")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if width == 0 || height == 0 {
        return Err(format_err("PGM has zero size"));
    }
    if maxval != 255 && maxval != 65535 {
        return Err(format_err(format!("unsupported PGM maxval {maxval} (expected 255 or 65535)")));
    }
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(format_err("missing separator after PGM header"));
    }
    pos += 1;
    let bytes = if maxval == 255 { 1 } else { 2 };
    let need = width * height * bytes;
    let payload = &data[pos..];
    if payload.len() < need {
        return Err(format_err(format!("truncated PGM payload: {} of {need} bytes", payload.len())));
    }
    let mv = maxval as f64;
    let pixels = if bytes == 1 {
        payload[..need].iter().map(|&b| b as f64 / mv).collect()
    } else {
        payload[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / mv)
            .collect()
    };
    Ok(GrayImage::new(height, width, pixels)?.with_maxval(maxval as u16))
}

pub fn encode_pgm(image: &GrayImage) -> Result<Vec<u8>> {
    if image.maxval != 255 && image.maxval != 65535 {
        return Err(format_err(format!("unsupported PGM maxval {}", image.maxval)));
    }
    let mut out = format!("P5\n{} {}\n{}\n", image.width, image.height, image.maxval).into_bytes();
    let mv = image.maxval as f64;
    for &p in &image.pixels {
        let q = (p.clamp(0.0, 1.0) * mv).round();
        if image.maxval == 255 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        }
    }
    Ok(out)
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(image: &GrayImage, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(image)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_round_trip() {
        let px: Vec<f64> = (0..12).map(|i| (i * 20) as f64 / 255.0).collect();
        let img = GrayImage::new(3, 4, px).unwrap();
        let back = decode_pgm(&encode_pgm(&img).unwrap()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn sixteen_bit_values_survive() {
        let raw = [0u16, 1, 257, 40000, 65535, 12345];
        let img = GrayImage::new(2, 3, raw.iter().map(|&v| v as f64 / 65535.0).collect())
            .unwrap()
            .with_maxval(65535);
        let back = decode_pgm(&encode_pgm(&img).unwrap()).unwrap();
        let again: Vec<u16> = back.pixels.iter().map(|p| (p * 65535.0).round() as u16).collect();
        assert_eq!(again, raw);
        assert_eq!(back.maxval, 65535);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut data = b"P5 # made by hand\n2 # width\n1\n255\n".to_vec();
        data.extend_from_slice(&[0, 255]);
        let img = decode_pgm(&data).unwrap();
        assert_eq!((img.height, img.width), (1, 2));
        assert_eq!(img.pixels, vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_ascii_truncated_and_odd_depths() {
        let e = decode_pgm(b"P2\n1 1\n255\n0\n").unwrap_err();
        assert!(e.to_string().contains("P2"));
        assert!(decode_pgm(b"P5\n2 2\n255\n\x01\x02").is_err());
        assert!(decode_pgm(b"P5\n1 1\n15\n\x01").is_err());
        assert!(decode_pgm(b"P5\n1").is_err());
    }
}
