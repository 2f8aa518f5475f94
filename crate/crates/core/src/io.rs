//! Field serialization: portable float map, 8-bit grayscale PNG and CSV.
//!
//! PFM stores `f32`, so a round trip is bit-exact for samples that are
//! representable in single precision and rounds everything else once.

use std::fs;
use std::io::{BufReader, Cursor};
use std::path::Path;

use crate::{Error, Result, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Pfm,
    Png,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("pfm") => Ok(Format::Pfm),
            Some("png") => Ok(Format::Png),
            Some("csv") => Ok(Format::Csv),
            _ => Err(Error::Config(format!(
                "cannot infer image format from {}",
                path.display()
            ))),
        }
    }
}

/// How real samples are quantized into 8-bit PNG levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PngScaling {
    /// `[0, 1] → [0, 255]`, clamping outside values.
    Unit,
    /// Linear map of `[lo, hi] → [0, 255]`, clamping outside values.
    Range(f64, f64),
}

pub fn load_field(path: &Path, format: Format) -> Result<ScalarField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Pfm => decode_pfm(&bytes),
        Format::Png => decode_png(&bytes),
        Format::Csv => decode_csv(&bytes),
    }
}

pub fn save_field(field: &ScalarField, path: &Path, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Pfm => encode_pfm(field)?,
        Format::Png => encode_png(field, PngScaling::Unit)?,
        Format::Csv => encode_csv(field).into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Load with the format inferred from the file extension.
pub fn load(path: &Path) -> Result<ScalarField> {
    load_field(path, Format::from_path(path)?)
}

pub fn save(field: &ScalarField, path: &Path) -> Result<()> {
    save_field(field, path, Format::from_path(path)?)
}

pub fn save_png(field: &ScalarField, path: &Path, scaling: PngScaling) -> Result<()> {
    let bytes = encode_png(field, scaling)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

// ── PFM ────────────────────────────────────────────────────────────────────

pub fn encode_pfm(field: &ScalarField) -> Result<Vec<u8>> {
    let (w, h) = (field.width(), field.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    // Scanlines run bottom to top.
    for r in (0..h).rev() {
        for (c, &v) in field.row(r).iter().enumerate() {
            let s = v as f32;
            if !s.is_finite() {
                return Err(Error::Invariant(format!(
                    "sample {v} at ({r}, {c}) does not fit in f32"
                )));
            }
            out.extend_from_slice(&s.to_le_bytes());
        }
    }
    Ok(out)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn token(&mut self) -> Result<(usize, &'a str)> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Parse {
                offset: start,
                message: "unexpected end of header".into(),
            });
        }
        let tok = std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| Error::Parse {
            offset: start,
            message: "header is not ASCII".into(),
        })?;
        Ok((start, tok))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let (offset, tok) = self.token()?;
        tok.parse().map_err(|_| Error::Parse {
            offset,
            message: format!("invalid {what} '{tok}'"),
        })
    }
}

pub fn decode_pfm(bytes: &[u8]) -> Result<ScalarField> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let (_, magic) = cur.token()?;
    let channels = match magic {
        "Pf" => 1usize,
        "PF" => 3,
        _ => {
            return Err(Error::Parse {
                offset: 0,
                message: format!("bad magic '{magic}', expected Pf or PF"),
            })
        }
    };
    let width: usize = cur.number("width")?;
    let height: usize = cur.number("height")?;
    let scale: f32 = cur.number("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Parse {
            offset: cur.pos,
            message: "scale must be finite and non-zero".into(),
        });
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data_start = cur.pos + 1;
    let needed = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels * 4))
        .ok_or_else(|| Error::Size(format!("{width}x{height} PFM overflows")))?;
    if width == 0 || height == 0 {
        return Err(Error::Size(format!("empty {width}x{height} PFM")));
    }
    let available = bytes.len().saturating_sub(data_start);
    if available < needed {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!("raster truncated: need {needed} bytes, found {available}"),
        });
    }
    let little = scale < 0.0;
    let raster = &bytes[data_start..data_start + needed];
    let read = |i: usize| -> f64 {
        let b: [u8; 4] = raster[i * 4..i * 4 + 4].try_into().unwrap();
        f64::from(if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        })
    };
    let mut samples = vec![0.0; width * height];
    for (file_row, r) in (0..height).rev().enumerate() {
        for c in 0..width {
            let base = (file_row * width + c) * channels;
            let v = if channels == 1 {
                read(base)
            } else {
                (read(base) + read(base + 1) + read(base + 2)) / 3.0
            };
            if !v.is_finite() {
                return Err(Error::Parse {
                    offset: data_start + base * 4,
                    message: "non-finite sample".into(),
                });
            }
            samples[r * width + c] = v;
        }
    }
    ScalarField::new(width, height, samples)
}

// ── PNG ────────────────────────────────────────────────────────────────────

pub fn encode_png(field: &ScalarField, scaling: PngScaling) -> Result<Vec<u8>> {
    let (lo, hi) = match scaling {
        PngScaling::Unit => (0.0, 1.0),
        PngScaling::Range(lo, hi) => (lo, hi),
    };
    if !(hi > lo) {
        return Err(Error::Config(format!("empty PNG range [{lo}, {hi}]")));
    }
    let data: Vec<u8> = field
        .samples()
        .iter()
        .map(|&v| (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let w = u32::try_from(field.width()).map_err(|_| Error::Size("PNG width".into()))?;
    let h = u32::try_from(field.height()).map_err(|_| Error::Size("PNG height".into()))?;
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let png_err = |e: png::EncodingError| Error::Config(format!("png encode: {e}"));
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(&data).map_err(png_err)?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<ScalarField> {
    let png_err = |e: png::DecodingError| Error::Parse {
        offset: 0,
        message: format!("png: {e}"),
    };
    let mut dec = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Size("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let stride = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        other => {
            return Err(Error::Parse {
                offset: 0,
                message: format!("expected a grayscale PNG, found {other:?}"),
            })
        }
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let samples = (0..w * h)
        .map(|i| {
            let (r, c) = (i / w, i % w);
            f64::from(buf[r * info.line_size + c * stride]) / 255.0
        })
        .collect();
    ScalarField::new(w, h, samples)
}

// ── CSV ────────────────────────────────────────────────────────────────────

pub fn encode_csv(field: &ScalarField) -> String {
    let mut out = String::new();
    for r in 0..field.height() {
        let row: Vec<String> = field.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn decode_csv(bytes: &[u8]) -> Result<ScalarField> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        offset: e.valid_up_to(),
        message: "CSV is not valid UTF-8".into(),
    })?;
    let mut width = None;
    let mut samples = Vec::new();
    let mut height = 0;
    let mut line_start = 0;
    for line in text.split_inclusive('\n') {
        let body = line.trim_end_matches(['\n', '\r']);
        if body.trim().is_empty() {
            line_start += line.len();
            continue;
        }
        let mut cells = 0;
        let mut cell_start = line_start;
        for cell in body.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                offset: cell_start,
                message: format!("invalid number '{}'", cell.trim()),
            })?;
            samples.push(v);
            cells += 1;
            cell_start += cell.len() + 1;
        }
        match width {
            None => width = Some(cells),
            Some(w) if w != cells => {
                return Err(Error::Parse {
                    offset: line_start,
                    message: format!("row has {cells} columns, expected {w}"),
                })
            }
            _ => {}
        }
        height += 1;
        line_start += line.len();
    }
    let width = width.ok_or(Error::Parse {
        offset: 0,
        message: "empty CSV".into(),
    })?;
    ScalarField::new(width, height, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pfm_round_trip_2x2() {
        let f = ScalarField::new(2, 2, vec![0.25, -1.5, 3.0, 1e-3f32 as f64]).unwrap();
        let back = decode_pfm(&encode_pfm(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn pfm_rows_are_stored_bottom_up() {
        let f = ScalarField::new(1, 2, vec![1.0, 2.0]).unwrap();
        let bytes = encode_pfm(&f).unwrap();
        let raster = &bytes[bytes.len() - 8..];
        assert_eq!(f32::from_le_bytes(raster[..4].try_into().unwrap()), 2.0);
    }

    #[test]
    fn pfm_big_endian_and_color() {
        let mut bytes = b"PF\n1 1\n1.0\n".to_vec();
        for v in [1.0f32, 2.0, 6.0] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let f = decode_pfm(&bytes).unwrap();
        assert_eq!(f.samples(), &[3.0]);
    }

    #[test]
    fn pfm_errors_carry_offsets() {
        match decode_pfm(b"Pf\n2 x\n-1\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            decode_pfm(b"P5\n1 1\n-1\n"),
            Err(Error::Parse { offset: 0, .. })
        ));
        assert!(matches!(
            decode_pfm(b"Pf\n2 2\n-1\n\0\0\0\0"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            decode_pfm(format!("Pf\n{} {}\n-1\n", usize::MAX, 2).as_bytes()),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn pfm_rejects_values_outside_f32() {
        let f = ScalarField::new(1, 1, vec![1e300]).unwrap();
        assert!(matches!(encode_pfm(&f), Err(Error::Invariant(_))));
    }

    #[test]
    fn black_png_loads_as_zero() {
        let f = ScalarField::constant(3, 2, 0.0).unwrap();
        let back = decode_png(&encode_png(&f, PngScaling::Unit).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let f = ScalarField::new(3, 2, vec![0.1, -2.0, 1e-17, 4.0, 5.5, 6.0]).unwrap();
        assert_eq!(decode_csv(encode_csv(&f).as_bytes()).unwrap(), f);
        match decode_csv(b"1,2\n3,oops\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("{other:?}"),
        }
        assert!(decode_csv(b"1,2\n3\n").is_err());
        assert!(decode_csv(b"").is_err());
    }

    #[test]
    fn files_dispatch_on_extension() {
        let dir = tempfile::tempdir().unwrap();
        let f = ScalarField::new(2, 1, vec![0.5, 1.0]).unwrap();
        for name in ["a.pfm", "a.png", "a.csv"] {
            let p = dir.path().join(name);
            save(&f, &p).unwrap();
            let back = load(&p).unwrap();
            assert!(back
                .samples()
                .iter()
                .zip(f.samples())
                .all(|(a, b)| (a - b).abs() <= 0.5 / 255.0));
        }
        assert!(save(&f, &dir.path().join("a.tiff")).is_err());
    }

    proptest! {
        #[test]
        fn pfm_round_trip_is_bit_exact(
            w in 1usize..8, h in 1usize..8,
            seed in prop::collection::vec(-1e6f32..1e6, 64),
        ) {
            let samples: Vec<f64> = (0..w * h).map(|i| f64::from(seed[i % 64])).collect();
            let f = ScalarField::new(w, h, samples).unwrap();
            let back = decode_pfm(&encode_pfm(&f).unwrap()).unwrap();
            for (a, b) in back.samples().iter().zip(f.samples()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn png_round_trip_within_one_level(samples in prop::collection::vec(0.0f64..=1.0, 1..64)) {
            let n = samples.len();
            let f = ScalarField::new(n, 1, samples).unwrap();
            let back = decode_png(&encode_png(&f, PngScaling::Unit).unwrap()).unwrap();
            for (a, b) in back.samples().iter().zip(f.samples()) {
                prop_assert!((a - b).abs() <= 1.0 / 255.0);
            }
        }
    }
}
