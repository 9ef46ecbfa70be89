//! Image files: binary/ASCII PGM for counts and float CSV for intensities.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{CountImage, IntensityImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// Binary PGM, 8-bit samples.
    Pgm8,
    /// Binary PGM, 16-bit big-endian samples.
    Pgm16,
    /// Decimal text, comma separated, one image row per line.
    FloatCsv,
}

impl ImageFormat {
    /// Guess from the file extension: `.csv` is float CSV, `.pgm` is 16-bit PGM.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("csv") => Ok(ImageFormat::FloatCsv),
            Some("pgm") => Ok(ImageFormat::Pgm16),
            _ => Err(Error::invalid(format!(
                "cannot infer image format of '{}' (use .pgm or .csv)",
                path.display()
            ))),
        }
    }

    pub fn max_count(&self) -> Option<u32> {
        match self {
            ImageFormat::Pgm8 => Some(255),
            ImageFormat::Pgm16 => Some(65535),
            ImageFormat::FloatCsv => None,
        }
    }
}

impl fmt::Display for ImageFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImageFormat::Pgm8 => "pgm8",
            ImageFormat::Pgm16 => "pgm16",
            ImageFormat::FloatCsv => "float_csv",
        })
    }
}

impl FromStr for ImageFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pgm8" => Ok(ImageFormat::Pgm8),
            "pgm16" => Ok(ImageFormat::Pgm16),
            "float_csv" | "csv" => Ok(ImageFormat::FloatCsv),
            other => Err(Error::invalid(format!("unknown image format '{other}'"))),
        }
    }
}

struct Header {
    ascii: bool,
    width: usize,
    height: usize,
    maxval: u32,
    raster_start: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        if self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            return Err(Error::parse(self.pos, format!("unexpected byte in {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(start, format!("{what} does not fit in 64 bits")))
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let ascii = match bytes.get(..2) {
        Some(b"P2") => true,
        Some(b"P5") => false,
        _ => return Err(Error::parse(0, "missing PGM magic number (P2 or P5)")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if !cur
        .bytes
        .get(2)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err(Error::parse(
            2,
            "magic number must be followed by whitespace",
        ));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = {
        cur.skip_space_and_comments();
        cur.pos
    };
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::parse(0, "image dimensions must be positive"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Range(format!(
            "PGM maxval {maxval} at byte {maxval_at} outside 1..=65535"
        )));
    }
    // exactly one whitespace byte separates maxval from a binary raster
    if cur.pos >= bytes.len() && !ascii {
        return Err(Error::parse(cur.pos, "missing whitespace after maxval"));
    }
    Ok(Header {
        ascii,
        width: width as usize,
        height: height as usize,
        maxval: maxval as u32,
        raster_start: cur.pos + 1,
    })
}

/// Decode a P2 or P5 image. Grids must be square.
pub fn decode_pgm(bytes: &[u8]) -> Result<CountImage> {
    let h = parse_header(bytes)?;
    if h.width != h.height {
        return Err(Error::invalid(format!(
            "only square images are supported, got {}x{}",
            h.width, h.height
        )));
    }
    let count = h.width * h.height;
    let data = if h.ascii {
        let mut cur = Cursor {
            bytes,
            pos: h.raster_start - 1,
        };
        let mut data = Vec::with_capacity(count);
        for i in 0..count {
            cur.skip_space_and_comments();
            let at = cur.pos;
            if at >= bytes.len() {
                return Err(Error::parse(
                    at,
                    format!("expected {count} samples, found {i}"),
                ));
            }
            let v = cur.number("sample")?;
            data.push(check_sample(v, h.maxval, at)?);
        }
        data
    } else {
        let wide = h.maxval > 255;
        let needed = count * if wide { 2 } else { 1 };
        let raster = &bytes[h.raster_start.min(bytes.len())..];
        if raster.len() < needed {
            return Err(Error::parse(
                h.raster_start + raster.len(),
                format!(
                    "truncated raster: expected {needed} bytes, found {}",
                    raster.len()
                ),
            ));
        }
        (0..count)
            .map(|i| {
                let (v, at) = if wide {
                    (
                        u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as u64,
                        2 * i,
                    )
                } else {
                    (raster[i] as u64, i)
                };
                check_sample(v, h.maxval, h.raster_start + at)
            })
            .collect::<Result<Vec<u32>>>()?
    };
    CountImage::new(h.width, data)
}

fn check_sample(v: u64, maxval: u32, at: usize) -> Result<u32> {
    if v > maxval as u64 {
        return Err(Error::Range(format!(
            "sample {v} at byte {at} exceeds maxval {maxval}"
        )));
    }
    Ok(v as u32)
}

/// Encode counts as PGM. `maxval` is the larger of 1 and the image maximum.
pub fn encode_pgm(img: &CountImage, format: ImageFormat, ascii: bool) -> Result<Vec<u8>> {
    let limit = format
        .max_count()
        .ok_or_else(|| Error::invalid("encode_pgm needs a PGM format"))?;
    let maxval = img.as_slice().iter().copied().max().unwrap_or(0).max(1);
    if maxval > limit {
        return Err(Error::Range(format!(
            "count {maxval} does not fit {format} (max {limit})"
        )));
    }
    // keep the sample width implied by the format even for dim images
    let maxval = match format {
        ImageFormat::Pgm8 => maxval.min(255),
        _ => maxval.max(256),
    };
    let side = img.side();
    let mut out = format!(
        "{}\n{side} {side}\n{maxval}\n",
        if ascii { "P2" } else { "P5" }
    )
    .into_bytes();
    if ascii {
        for row in img.as_slice().chunks(side) {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    } else if maxval > 255 {
        for &v in img.as_slice() {
            out.extend_from_slice(&(v as u16).to_be_bytes());
        }
    } else {
        out.extend(img.as_slice().iter().map(|&v| v as u8));
    }
    Ok(out)
}

/// Decode float CSV (one row per line, comma separated).
pub fn decode_float_csv(text: &str) -> Result<IntensityImage> {
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let content = line.trim_end_matches(['\n', '\r']);
        if content.trim().is_empty() {
            offset += line.len();
            continue;
        }
        let mut field_at = offset;
        let mut n = 0;
        for field in content.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(field_at, format!("invalid number '{}'", field.trim()))
            })?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Range(format!(
                    "intensity {v} at byte {field_at} must be finite and >= 0"
                )));
            }
            data.push(v);
            n += 1;
            field_at += field.len() + 1;
        }
        match width {
            None => width = Some(n),
            Some(w) if w != n => {
                return Err(Error::parse(
                    offset,
                    format!("row {rows} has {n} fields, expected {w}"),
                ))
            }
            _ => {}
        }
        rows += 1;
        offset += line.len();
    }
    let width = width.ok_or_else(|| Error::parse(0, "empty CSV image"))?;
    if width != rows {
        return Err(Error::invalid(format!(
            "only square images are supported, got {rows}x{width}"
        )));
    }
    IntensityImage::new(width, data)
}

/// Encode intensities as CSV using the shortest round-trip decimal form.
pub fn encode_float_csv(img: &IntensityImage) -> String {
    let mut out = String::new();
    for row in img.as_slice().chunks(img.side()) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn intensity_to_counts(img: &IntensityImage) -> Result<CountImage> {
    let data = img
        .as_slice()
        .iter()
        .map(|&v| {
            if v.fract() != 0.0 || v > u32::MAX as f64 {
                Err(Error::Range(format!("value {v} is not a count")))
            } else {
                Ok(v as u32)
            }
        })
        .collect::<Result<Vec<u32>>>()?;
    CountImage::new(img.side(), data)
}

/// Read counts from PGM, or from CSV holding whole numbers.
pub fn read_counts(path: &Path) -> Result<CountImage> {
    let bytes = fs::read(path)?;
    match ImageFormat::from_path(path)? {
        ImageFormat::FloatCsv => intensity_to_counts(&decode_float_csv(&utf8(&bytes)?)?),
        _ => decode_pgm(&bytes),
    }
}

/// Read intensities from CSV, or counts from PGM.
pub fn read_intensity(path: &Path) -> Result<IntensityImage> {
    let bytes = fs::read(path)?;
    match ImageFormat::from_path(path)? {
        ImageFormat::FloatCsv => decode_float_csv(&utf8(&bytes)?),
        _ => Ok(decode_pgm(&bytes)?.to_intensity()),
    }
}

fn utf8(bytes: &[u8]) -> Result<String> {
    String::from_utf8(bytes.to_vec())
        .map_err(|e| Error::parse(e.utf8_error().valid_up_to(), "file is not UTF-8 text"))
}

pub fn write_counts(img: &CountImage, path: &Path, format: ImageFormat) -> Result<()> {
    let bytes = match format {
        ImageFormat::FloatCsv => encode_float_csv(&img.to_intensity()).into_bytes(),
        _ => encode_pgm(img, format, false)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}

/// Write intensities; PGM output rounds to the nearest count (visualisation only).
pub fn write_intensity(img: &IntensityImage, path: &Path, format: ImageFormat) -> Result<()> {
    let bytes = match format {
        ImageFormat::FloatCsv => encode_float_csv(img).into_bytes(),
        _ => {
            let limit = format.max_count().unwrap_or(u32::MAX) as f64;
            let data = img
                .as_slice()
                .iter()
                .map(|&v| {
                    let r = v.round();
                    if r > limit {
                        Err(Error::Range(format!("value {v} does not fit {format}")))
                    } else {
                        Ok(r as u32)
                    }
                })
                .collect::<Result<Vec<u32>>>()?;
            encode_pgm(&CountImage::new(img.side(), data)?, format, false)?
        }
    };
    fs::write(path, bytes)?;
    Ok(())
}
