//! Netpbm image files: 8-bit PPM (P6) and PGM (P5) in and out, and CMYK
//! rasters as PAM (P7).

use std::path::Path;

use crate::chart::InkCoverage;
use crate::color::{lab_to_srgb, LabImage, Rgb8};
use crate::error::{Error, Result};
use crate::profile::CmykImage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb8>,
}

impl RgbImage {
    pub fn to_lab(&self) -> Result<LabImage> {
        LabImage::from_srgb(self.width, self.height, &self.pixels)
    }

    pub fn from_lab(img: &LabImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            pixels: img.pixels().iter().map(|&p| lab_to_srgb(p)).collect(),
        }
    }
}

struct Header<'a> {
    magic: &'a [u8],
    values: Vec<usize>,
    body: &'a [u8],
}

/// Splits a P5/P6 header: magic, width, height, maxval, then exactly one
/// whitespace byte before the raster. `#` comments run to end of line.
fn parse_header(data: &[u8]) -> Result<Header<'_>> {
    if data.len() < 2 || data[0] != b'P' {
        return Err(Error::Unsupported("not a Netpbm file".into()));
    }
    let magic = &data[..2];
    let mut pos = 2;
    let mut values = Vec::with_capacity(3);
    while values.len() < 3 {
        while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
            if data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < data.len() && data[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(0, "truncated or malformed Netpbm header"));
        }
        let text = std::str::from_utf8(&data[start..pos]).expect("ascii digits");
        values.push(
            text.parse()
                .map_err(|_| Error::parse(0, format!("header value `{text}` too large")))?,
        );
    }
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(Error::parse(0, "missing whitespace after Netpbm header"));
    }
    Ok(Header {
        magic,
        values,
        body: &data[pos + 1..],
    })
}

/// Decodes an 8-bit binary PPM or PGM; gray pixels are replicated to RGB.
pub fn decode_netpbm(data: &[u8]) -> Result<RgbImage> {
    let h = parse_header(data)?;
    let channels = match h.magic {
        b"P6" => 3,
        b"P5" => 1,
        other => {
            return Err(Error::Unsupported(format!(
                "Netpbm variant {}; only binary P5 and P6 are read",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let (width, height, maxval) = (h.values[0], h.values[1], h.values[2]);
    if width == 0 || height == 0 {
        return Err(Error::DimensionMismatch(format!("{width}x{height} image")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Unsupported(format!(
            "maxval {maxval}; only 8-bit images are read"
        )));
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::DimensionMismatch("image too large".into()))?;
    if h.body.len() < need {
        return Err(Error::parse(
            0,
            format!("raster truncated: {} of {need} bytes", h.body.len()),
        ));
    }
    let scale = |v: u8| -> u8 {
        if maxval == 255 {
            v
        } else {
            ((u32::from(v.min(maxval as u8)) * 255 + maxval as u32 / 2) / maxval as u32) as u8
        }
    };
    let pixels = h.body[..need]
        .chunks_exact(channels)
        .map(|c| match c {
            [g] => Rgb8::gray(scale(*g)),
            [r, g, b] => Rgb8::new(scale(*r), scale(*g), scale(*b)),
            _ => unreachable!(),
        })
        .collect();
    Ok(RgbImage { width, height, pixels })
}

pub fn read_image(path: &Path) -> Result<RgbImage> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_netpbm(&data)
}

pub fn read_lab_image(path: &Path) -> Result<LabImage> {
    read_image(path)?.to_lab()
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(img.pixels.len() * 3);
    for p in &img.pixels {
        out.extend([p.r, p.g, p.b]);
    }
    out
}

/// Gray image from the green channel of `img`.
pub fn encode_pgm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|p| p.g));
    out
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    std::fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(path: &Path, img: &RgbImage) -> Result<()> {
    std::fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// CMYK raster as a 4-channel PAM with coverages scaled to 0–255.
pub fn encode_pam_cmyk(img: &CmykImage) -> Vec<u8> {
    let mut out = format!(
        "P7\nWIDTH {}\nHEIGHT {}\nDEPTH 4\nMAXVAL 255\nTUPLTYPE CMYK\nENDHDR\n",
        img.width(),
        img.height()
    )
    .into_bytes();
    for c in img.pixels() {
        out.extend(c.to_array().map(to_byte));
    }
    out
}

pub fn decode_pam_cmyk(data: &[u8]) -> Result<CmykImage> {
    let end = data
        .windows(7)
        .position(|w| w == b"ENDHDR\n")
        .ok_or_else(|| Error::parse(0, "PAM header lacks ENDHDR"))?;
    let header = std::str::from_utf8(&data[..end]).map_err(|_| Error::parse(0, "PAM header is not text"))?;
    let mut lines = header.lines();
    if lines.next() != Some("P7") {
        return Err(Error::Unsupported("not a PAM file".into()));
    }
    let (mut width, mut height, mut depth, mut maxval, mut tupl) = (0, 0, 0, 0, "");
    for line in lines {
        let mut it = line.split_whitespace();
        match (it.next(), it.next()) {
            (Some("WIDTH"), Some(v)) => width = v.parse().unwrap_or(0),
            (Some("HEIGHT"), Some(v)) => height = v.parse().unwrap_or(0),
            (Some("DEPTH"), Some(v)) => depth = v.parse().unwrap_or(0),
            (Some("MAXVAL"), Some(v)) => maxval = v.parse().unwrap_or(0),
            (Some("TUPLTYPE"), Some(v)) => tupl = v,
            _ => {}
        }
    }
    if depth != 4 || maxval != 255 || tupl != "CMYK" {
        return Err(Error::Unsupported("only 8-bit CMYK PAM is read".into()));
    }
    let body = &data[end + 7..];
    let need = width * height * 4;
    if body.len() < need {
        return Err(Error::parse(0, "PAM raster truncated"));
    }
    let pixels = body[..need]
        .chunks_exact(4)
        .map(|c| InkCoverage {
            c: f64::from(c[0]) / 255.0,
            m: f64::from(c[1]) / 255.0,
            y: f64::from(c[2]) / 255.0,
            k: f64::from(c[3]) / 255.0,
        })
        .collect();
    CmykImage::new(width, height, pixels)
}

pub fn write_pam_cmyk(path: &Path, img: &CmykImage) -> Result<()> {
    std::fs::write(path, encode_pam_cmyk(img)).map_err(|e| Error::io(path, e))
}
