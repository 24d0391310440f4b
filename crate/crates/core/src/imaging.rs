//! 2D DCT sparsification, best s-term truncation, PGM image I/O, and PSNR.
//!
//! The transform is the orthonormal type-II DCT applied separably to rows and
//! columns, so `idct2(dct2(x)) == x` up to rounding and the Frobenius norm is
//! preserved. Orthonormality is what lets the secrecy tests relate ciphertext
//! power directly to pixel-domain power.

use crate::error::{Error, Result};
use crate::Signal2D;
use std::io::{Read, Write};
use std::path::Path;

/// Smallest accepted PGM dimension.
pub const MIN_IMAGE_DIM: usize = 16;
/// Largest accepted PGM dimension.
pub const MAX_IMAGE_DIM: usize = 4096;

/// Peak value for PSNR; all images here are 8-bit.
const PSNR_PEAK: f64 = 255.0;

/// An 8-bit grayscale image held as real values in `[0, 255]`.
///
/// Values stay real (unrounded) through the whole pipeline; rounding happens
/// only when a PGM file is written.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Signal2D,
}

impl Image {
    /// Validates positive dimensions and the `[0, 255]` range.
    pub fn new(pixels: Signal2D) -> Result<Self> {
        if pixels.nrows() == 0 || pixels.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                context: "image dimensions",
                expected: 1,
                found: 0,
            });
        }
        for &v in pixels.as_slice() {
            if !(0.0..=255.0).contains(&v) || !v.is_finite() {
                return Err(Error::Domain {
                    what: "pixel value",
                    value: v,
                    expected: "finite and within [0, 255]",
                });
            }
        }
        Ok(Self { pixels })
    }

    /// Clamps an arbitrary real signal into image range without rounding.
    pub fn from_signal_clamped(signal: &Signal2D) -> Self {
        let pixels = signal.map(|v| if v.is_finite() { v.clamp(0.0, 255.0) } else { 0.0 });
        Self { pixels }
    }

    pub fn pixels(&self) -> &Signal2D {
        &self.pixels
    }

    pub fn to_signal(&self) -> Signal2D {
        self.pixels.clone()
    }

    /// Rows (image height).
    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    /// Columns (image width).
    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }
}

/// Orthonormal DCT-II basis matrix of size n x n.
fn dct_basis(n: usize) -> Signal2D {
    let scale0 = (1.0 / n as f64).sqrt();
    let scale = (2.0 / n as f64).sqrt();
    Signal2D::from_fn(n, n, |k, j| {
        let a = if k == 0 { scale0 } else { scale };
        a * (std::f64::consts::PI * (2.0 * j as f64 + 1.0) * k as f64 / (2.0 * n as f64)).cos()
    })
}

/// Orthonormal 2D DCT of an M x N signal.
pub fn dct2(x: &Signal2D) -> Signal2D {
    let cm = dct_basis(x.nrows());
    let cn = dct_basis(x.ncols());
    &cm * x * cn.transpose()
}

/// Inverse of [`dct2`].
pub fn idct2(coeffs: &Signal2D) -> Signal2D {
    let cm = dct_basis(coeffs.nrows());
    let cn = dct_basis(coeffs.ncols());
    cm.transpose() * coeffs * cn
}

/// Keeps the `s` largest-magnitude coefficients, zeroing the rest.
///
/// Ties break in favour of the smaller column-major index.
pub fn best_s_term(coeffs: &Signal2D, s: usize) -> Signal2D {
    let total = coeffs.len();
    if s >= total {
        return coeffs.clone();
    }
    let mut by_magnitude: Vec<usize> = (0..total).collect();
    let flat = coeffs.as_slice();
    by_magnitude.sort_by(|&a, &b| {
        flat[b]
            .abs()
            .total_cmp(&flat[a].abs())
            .then(a.cmp(&b))
    });
    let mut out = vec![0.0; total];
    for &idx in by_magnitude.iter().take(s) {
        out[idx] = flat[idx];
    }
    Signal2D::from_vec(coeffs.nrows(), coeffs.ncols(), out)
}

/// Peak signal-to-noise ratio in dB against an 8-bit peak of 255.
///
/// Identical images produce the `f64::INFINITY` sentinel.
pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    if reference.pixels.shape() != test.pixels.shape() {
        return Err(Error::DimensionMismatch {
            context: "psnr operands",
            expected: reference.pixels.len(),
            found: test.pixels.len(),
        });
    }
    let n = reference.pixels.len() as f64;
    let mse = reference
        .pixels
        .as_slice()
        .iter()
        .zip(test.pixels.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (PSNR_PEAK * PSNR_PEAK / mse).log10())
    }
}

/// Reads a binary PGM (P5, maxval 255) with dimensions in
/// `[MIN_IMAGE_DIM, MAX_IMAGE_DIM]`.
pub fn read_pgm<P: AsRef<Path>>(path: P) -> Result<Image> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_pgm(&bytes)
}

/// Writes a binary PGM, rounding each pixel to the nearest integer.
///
/// This is the only place pixel values are quantized.
pub fn write_pgm<P: AsRef<Path>>(path: P, image: &Image) -> Result<()> {
    let bytes = encode_pgm(image)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let mut cursor = 0usize;
    let magic = next_token(bytes, &mut cursor).ok_or(format_err("missing magic number"))?;
    if magic != b"P5" {
        return Err(format_err("magic number is not P5"));
    }
    let width = parse_header_number(bytes, &mut cursor, "width")?;
    let height = parse_header_number(bytes, &mut cursor, "height")?;
    let maxval = parse_header_number(bytes, &mut cursor, "maxval")?;
    if maxval != 255 {
        return Err(format_err("only maxval 255 is supported"));
    }
    for (dim, name) in [(width, "width"), (height, "height")] {
        if !(MIN_IMAGE_DIM..=MAX_IMAGE_DIM).contains(&dim) {
            return Err(Error::Format {
                what: "pgm file",
                detail: format!(
                    "{name} = {dim} outside supported range {MIN_IMAGE_DIM}..={MAX_IMAGE_DIM}"
                ),
            });
        }
    }
    // The header ends with exactly one whitespace byte before the raster.
    let raster = &bytes[cursor..];
    if raster.len() < width * height {
        return Err(format_err("truncated raster"));
    }
    // Raster is row-major, top to bottom.
    let pixels = Signal2D::from_fn(height, width, |r, c| raster[r * width + c] as f64);
    Ok(Image { pixels })
}

pub fn encode_pgm(image: &Image) -> Result<Vec<u8>> {
    let (height, width) = image.pixels.shape();
    for (dim, name) in [(width, "width"), (height, "height")] {
        if !(MIN_IMAGE_DIM..=MAX_IMAGE_DIM).contains(&dim) {
            return Err(Error::Format {
                what: "pgm file",
                detail: format!(
                    "{name} = {dim} outside supported range {MIN_IMAGE_DIM}..={MAX_IMAGE_DIM}"
                ),
            });
        }
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.reserve(width * height);
    for r in 0..height {
        for c in 0..width {
            out.push(image.pixels[(r, c)].round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(out)
}

fn format_err(detail: &str) -> Error {
    Error::Format {
        what: "pgm file",
        detail: detail.into(),
    }
}

/// Returns the next whitespace-delimited header token, skipping `#` comments.
fn next_token<'a>(bytes: &'a [u8], cursor: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
            continue;
        }
        break;
    }
    if *cursor >= bytes.len() {
        return None;
    }
    let start = *cursor;
    while *cursor < bytes.len() && !bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    let token = &bytes[start..*cursor];
    // Consume the single whitespace byte terminating the token.
    if *cursor < bytes.len() {
        *cursor += 1;
    }
    Some(token)
}

fn parse_header_number(bytes: &[u8], cursor: &mut usize, name: &str) -> Result<usize> {
    let token = next_token(bytes, cursor).ok_or_else(|| Error::Format {
        what: "pgm file",
        detail: format!("missing {name}"),
    })?;
    std::str::from_utf8(token)
        .ok()
        .and_then(|t| t.parse::<usize>().ok())
        .ok_or_else(|| Error::Format {
            what: "pgm file",
            detail: format!("{name} is not a decimal integer"),
        })
}
