//! Grayscale image decoding: PGM (P2, P5) and PNG, 8 or 16 bit.
//!
//! File row `r` becomes lattice row `j = r`, so SVG output, whose y axis
//! points down, overlays the picture the way a viewer shows it.

use std::io::Cursor;
use std::path::Path;

use crate::raster::{Image, RasterError};

#[derive(Debug, thiserror::Error)]
pub enum ImageIoError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("unrecognised image format")]
    UnknownFormat,
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error("malformed PNG: {0}")]
    Png(String),
    #[error("only grayscale images are accepted, found {0}")]
    NotGrayscale(String),
    #[error("unsupported bit depth {0}")]
    BitDepth(u8),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Loads a PGM or PNG file, detected by content.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image, ImageIoError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ImageIoError::Read { path: path.display().to_string(), source })?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<Image, ImageIoError> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(b"P3") || bytes.starts_with(b"P6") {
        Err(ImageIoError::NotGrayscale("PPM colour image".into()))
    } else {
        Err(ImageIoError::UnknownFormat)
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, ImageIoError> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageIoError::Pgm(format!("expected {what} at byte {start}")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image, ImageIoError> {
    let binary = match bytes.get(..2) {
        Some(b"P2") => false,
        Some(b"P5") => true,
        _ => return Err(ImageIoError::Pgm("missing P2/P5 magic".into())),
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")? as usize;
    let height = h.number("height")? as usize;
    let maxval = h.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(ImageIoError::Pgm(format!("maxval {maxval} out of range")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| ImageIoError::Pgm("dimensions overflow".into()))?;
    let mut values = Vec::with_capacity(n);
    if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        if !bytes.get(h.pos).is_some_and(|c| c.is_ascii_whitespace()) {
            return Err(ImageIoError::Pgm("missing separator before raster".into()));
        }
        let data = &bytes[h.pos + 1..];
        let wide = maxval > 255;
        let need = if wide { 2 * n } else { n };
        if data.len() < need {
            return Err(ImageIoError::Pgm(format!("raster has {} bytes, need {need}", data.len())));
        }
        if wide {
            values.extend(data[..need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64));
        } else {
            values.extend(data[..n].iter().map(|&b| b as f64));
        }
    } else {
        for k in 0..n {
            let v = h.number("sample")?;
            if v > maxval {
                return Err(ImageIoError::Pgm(format!("sample {k} = {v} exceeds maxval {maxval}")));
            }
            values.push(v as f64);
        }
    }
    Ok(Image::new(width, height, values)?)
}

pub fn decode_png(bytes: &[u8]) -> Result<Image, ImageIoError> {
    let perr = |e: png::DecodingError| ImageIoError::Png(e.to_string());
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(perr)?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale {
        return Err(ImageIoError::NotGrayscale(format!("{color:?}")));
    }
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| ImageIoError::Png("image too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(perr)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let mut values = Vec::with_capacity(w * h);
    for row in buf[..info.buffer_size()].chunks_exact(info.line_size) {
        match depth {
            png::BitDepth::Eight => values.extend(row[..w].iter().map(|&b| b as f64)),
            png::BitDepth::Sixteen => {
                values.extend(row[..2 * w].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64))
            }
            d => return Err(ImageIoError::BitDepth(d as u8)),
        }
    }
    Ok(Image::new(w, h, values)?)
}

/// Writes a binary PGM, quantizing values to `0..=maxval` by rounding.
pub fn encode_pgm(img: &Image, maxval: u16) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width(), img.height(), maxval).into_bytes();
    for &v in img.values() {
        let q = v.round().clamp(0.0, maxval as f64) as u16;
        if maxval > 255 {
            out.extend_from_slice(&q.to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn png_bytes(w: u32, h: u32, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(color);
        enc.set_depth(depth);
        enc.write_header().unwrap().write_image_data(data).unwrap();
        out
    }

    #[test]
    fn ascii_pgm_with_comments() {
        let src = b"P2\n# a comment\n3 2 # trailing\n255\n0 1 2\n# mid\n3 4 255\n";
        let img = decode_image(src).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.values(), &[0.0, 1.0, 2.0, 3.0, 4.0, 255.0]);
    }

    #[test]
    fn binary_pgm_round_trips_8_and_16_bit() {
        let img = Image::new(3, 2, vec![0.0, 7.0, 200.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(decode_image(&encode_pgm(&img, 255)).unwrap(), img);
        let wide = Image::new(2, 2, vec![0.0, 65535.0, 300.0, 1.0]).unwrap();
        let bytes = encode_pgm(&wide, 65535);
        assert_eq!(bytes.len(), "P5\n2 2\n65535\n".len() + 8);
        assert_eq!(decode_image(&bytes).unwrap(), wide);
    }

    #[test]
    fn malformed_pgm_is_rejected() {
        assert!(matches!(decode_image(b"P5\n2 2\n255\n\x00\x01"), Err(ImageIoError::Pgm(_))));
        assert!(matches!(decode_image(b"P2\n2 2\n9\n1 2 3 10\n"), Err(ImageIoError::Pgm(_))));
        assert!(matches!(decode_image(b"P2\n1 1\n9\n1\n"), Err(ImageIoError::Raster(_))));
        assert!(matches!(decode_image(b"P6\n1 1\n255\nabc"), Err(ImageIoError::NotGrayscale(_))));
        assert!(matches!(decode_image(b"GIF89a"), Err(ImageIoError::UnknownFormat)));
    }

    #[test]
    fn png_grayscale_8_and_16_bit() {
        let img = decode_image(&png_bytes(2, 2, png::ColorType::Grayscale, png::BitDepth::Eight, &[0, 1, 2, 3])).unwrap();
        assert_eq!(img.values(), &[0.0, 1.0, 2.0, 3.0]);
        let data = [0x01, 0x00, 0xff, 0xff, 0x00, 0x02, 0x00, 0x00];
        let img = decode_image(&png_bytes(2, 2, png::ColorType::Grayscale, png::BitDepth::Sixteen, &data)).unwrap();
        assert_eq!(img.values(), &[256.0, 65535.0, 2.0, 0.0]);
    }

    #[test]
    fn png_rgb_is_rejected() {
        let bytes = png_bytes(2, 2, png::ColorType::Rgb, png::BitDepth::Eight, &[0; 12]);
        assert!(matches!(decode_image(&bytes), Err(ImageIoError::NotGrayscale(_))));
    }
}
