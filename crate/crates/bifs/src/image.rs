//! Grayscale image file I/O.
//!
//! Supported formats, detected by magic bytes on load and by extension on
//! save:
//!
//! - portable graymap, ASCII `P2` or binary `P5` (`.pgm`), maxval up to
//!   65535;
//! - PNG grayscale, 8- or 16-bit (`.png`); saved as 16-bit;
//! - raw float32 (`.f32`): one ASCII header line `f32grid <width> <height>`
//!   followed by little-endian row-major `f32` samples — lossless for
//!   pipeline intermediates;
//! - stacked raw float32 (`.f32s`): header `f32stack <count> <width>
//!   <height>` then the images back to back, used for sample sets and
//!   image databases.
//!
//! Loading an integer format returns the raw sample values as `f64`.
//! Saving to an integer format either rescales `[min, max]` linearly onto
//! the full output range (`rescale = true`; a constant image maps to
//! mid-range) or rounds and clips (`rescale = false`). Raw float saves are
//! exact and ignore the flag.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kspace::RealGrid;

pub fn load_image(path: impl AsRef<Path>) -> Result<RealGrid> {
    let path = path.as_ref();
    let mut file = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    let got = file.read(&mut magic)?;
    let mut rest = Vec::new();
    file.read_to_end(&mut rest)?;
    let mut bytes = magic[..got].to_vec();
    bytes.extend(rest);

    if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(&bytes)
    } else if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else if bytes.starts_with(b"f32grid") {
        decode_f32(&bytes)
    } else {
        Err(Error::Parse(format!(
            "unrecognized image format in {}",
            path.display()
        )))
    }
}

pub fn save_image(grid: &RealGrid, path: impl AsRef<Path>, rescale: bool) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "png" => save_png(grid, path, rescale),
        "pgm" => save_pgm(grid, path, rescale),
        "f32" => save_f32(grid, path),
        other => Err(Error::Parse(format!(
            "unknown output extension {other:?} (expected png, pgm, or f32)"
        ))),
    }
}

/// Map pixel values onto `[0, max_out]` as integers.
fn quantize(grid: &RealGrid, max_out: f64, rescale: bool) -> Vec<u16> {
    let (lo, hi) = (grid.min(), grid.max());
    grid.data()
        .iter()
        .map(|&v| {
            let scaled = if rescale {
                if hi > lo {
                    (v - lo) / (hi - lo) * max_out
                } else {
                    // Degenerate range: a constant image maps to mid-range.
                    max_out / 2.0
                }
            } else {
                v
            };
            scaled.round().clamp(0.0, max_out) as u16
        })
        .collect()
}

fn save_png(grid: &RealGrid, path: &Path, rescale: bool) -> Result<()> {
    let samples = quantize(grid, 65535.0, rescale);
    let file = BufWriter::new(File::create(path)?);
    let mut encoder = png::Encoder::new(file, grid.n_x() as u32, grid.n_y() as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Parse(format!("png encode: {e}")))?;
    let mut bytes = Vec::with_capacity(samples.len() * 2);
    for s in samples {
        bytes.extend_from_slice(&s.to_be_bytes());
    }
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::Parse(format!("png encode: {e}")))?;
    Ok(())
}

fn decode_png(bytes: &[u8]) -> Result<RealGrid> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Parse(format!("png decode: {e}")))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Parse(format!("png decode: {e}")))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::Parse(format!(
            "only grayscale PNG is supported, got {:?}",
            info.color_type
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data: Vec<f64> = match info.bit_depth {
        png::BitDepth::Eight => buf[..w * h].iter().map(|&b| b as f64).collect(),
        png::BitDepth::Sixteen => buf[..w * h * 2]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect(),
        other => {
            return Err(Error::Parse(format!(
                "unsupported PNG bit depth {other:?}"
            )))
        }
    };
    RealGrid::from_vec(w, h, data)
}

fn save_pgm(grid: &RealGrid, path: &Path, rescale: bool) -> Result<()> {
    let samples = quantize(grid, 65535.0, rescale);
    let mut file = BufWriter::new(File::create(path)?);
    write!(file, "P5\n{} {}\n65535\n", grid.n_x(), grid.n_y())?;
    for s in samples {
        file.write_all(&s.to_be_bytes())?;
    }
    Ok(())
}

fn decode_pgm(bytes: &[u8]) -> Result<RealGrid> {
    let binary = bytes.starts_with(b"P5");
    // Header tokens (width, height, maxval) allow '#' comments.
    let mut pos = 2;
    let mut tokens = Vec::new();
    while tokens.len() < 3 && pos < bytes.len() {
        match bytes[pos] {
            b'#' => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => pos += 1,
            _ => {
                let start = pos;
                while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                let tok = std::str::from_utf8(&bytes[start..pos])
                    .map_err(|_| Error::Parse("pgm header is not ASCII".into()))?;
                tokens.push(
                    tok.parse::<usize>()
                        .map_err(|_| Error::Parse(format!("bad pgm header token {tok:?}")))?,
                );
            }
        }
    }
    if tokens.len() < 3 {
        return Err(Error::Parse("truncated pgm header".into()));
    }
    let (w, h, maxval) = (tokens[0], tokens[1], tokens[2]);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("pgm maxval {maxval} out of range")));
    }

    if binary {
        pos += 1; // single whitespace after maxval
        let data = &bytes[pos..];
        let wide = maxval > 255;
        let expected = w * h * if wide { 2 } else { 1 };
        if data.len() < expected {
            return Err(Error::Parse(format!(
                "pgm payload truncated: {} of {expected} bytes",
                data.len()
            )));
        }
        let values: Vec<f64> = if wide {
            data[..expected]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
                .collect()
        } else {
            data[..expected].iter().map(|&b| b as f64).collect()
        };
        RealGrid::from_vec(w, h, values)
    } else {
        let text = std::str::from_utf8(&bytes[pos..])
            .map_err(|_| Error::Parse("P2 payload is not ASCII".into()))?;
        let values: Vec<f64> = text
            .split_ascii_whitespace()
            .take(w * h)
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad P2 sample {t:?}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != w * h {
            return Err(Error::Parse(format!(
                "P2 payload has {} of {} samples",
                values.len(),
                w * h
            )));
        }
        RealGrid::from_vec(w, h, values)
    }
}

fn save_f32(grid: &RealGrid, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "f32grid {} {}", grid.n_x(), grid.n_y())?;
    for &v in grid.data() {
        file.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn decode_f32(bytes: &[u8]) -> Result<RealGrid> {
    let (header, payload) = split_header(bytes)?;
    let mut parts = header.split_ascii_whitespace();
    let tag = parts.next();
    if tag != Some("f32grid") {
        return Err(Error::Parse(format!("expected f32grid header, got {tag:?}")));
    }
    let w: usize = parse_dim(parts.next())?;
    let h: usize = parse_dim(parts.next())?;
    read_f32_plane(payload, w * h).and_then(|data| RealGrid::from_vec(w, h, data))
}

fn split_header(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::Parse("header is not ASCII".into()))?;
    Ok((header, &bytes[nl + 1..]))
}

fn parse_dim(tok: Option<&str>) -> Result<usize> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad dimension token {tok:?}")))
}

fn read_f32_plane(bytes: &[u8], count: usize) -> Result<Vec<f64>> {
    if bytes.len() < count * 4 {
        return Err(Error::Parse(format!(
            "raw payload truncated: {} of {} bytes",
            bytes.len(),
            count * 4
        )));
    }
    Ok(bytes[..count * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Write a sample set as stacked raw float32.
pub fn write_stack(images: &[RealGrid], path: impl AsRef<Path>) -> Result<()> {
    if images.is_empty() {
        return Err(Error::Input("cannot write an empty stack".into()));
    }
    let (w, h) = (images[0].n_x(), images[0].n_y());
    if images.iter().any(|i| i.n_x() != w || i.n_y() != h) {
        return Err(Error::Input("stack images must share dimensions".into()));
    }
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "f32stack {} {} {}", images.len(), w, h)?;
    for img in images {
        for &v in img.data() {
            file.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read a stacked raw float32 sample set.
pub fn read_stack(path: impl AsRef<Path>) -> Result<Vec<RealGrid>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let (header, payload) = split_header(&bytes)?;
    let mut parts = header.split_ascii_whitespace();
    if parts.next() != Some("f32stack") {
        return Err(Error::Parse("expected f32stack header".into()));
    }
    let count = parse_dim(parts.next())?;
    let w = parse_dim(parts.next())?;
    let h = parse_dim(parts.next())?;
    let per = w * h;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let data = read_f32_plane(&payload[i * per * 4..], per)?;
        out.push(RealGrid::from_vec(w, h, data)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("bifs-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn f32_round_trip_is_exact() {
        // Values chosen representable in f32.
        let grid = RealGrid::from_vec(4, 4, (0..16).map(|i| i as f64 * 0.5 - 3.0).collect()).unwrap();
        let path = tmpdir().join("grid.f32");
        save_image(&grid, &path, false).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(grid.data(), back.data());
    }

    #[test]
    fn png16_round_trip_within_one_step() {
        let n = 16;
        let ramp: Vec<f64> = (0..n * n).map(|i| 3.0 + i as f64 * 0.01).collect();
        let grid = RealGrid::from_vec(n, n, ramp).unwrap();
        let path = tmpdir().join("ramp.png");
        save_image(&grid, &path, true).unwrap();
        let raw = load_image(&path).unwrap();
        // Map the 16-bit samples back onto [min, max].
        let (lo, hi) = (grid.min(), grid.max());
        let step = (hi - lo) / 65535.0;
        for (&orig, &s) in grid.data().iter().zip(raw.data()) {
            let v = lo + s / 65535.0 * (hi - lo);
            assert!((v - orig).abs() <= step, "{v} vs {orig}");
        }
    }

    #[test]
    fn constant_image_rescales_to_midrange() {
        let grid = RealGrid::from_vec(4, 4, vec![7.0; 16]).unwrap();
        let path = tmpdir().join("const.pgm");
        save_image(&grid, &path, true).unwrap();
        let back = load_image(&path).unwrap();
        for &v in back.data() {
            assert_eq!(v, 32768.0);
        }
    }

    #[test]
    fn pgm_ascii_and_binary_parse() {
        let dir = tmpdir();
        let p2 = dir.join("a.pgm");
        std::fs::write(&p2, b"P2\n# comment\n2 2\n255\n0 10\n20 255\n").unwrap();
        let img = load_image(&p2).unwrap();
        assert_eq!(img.data(), &[0.0, 10.0, 20.0, 255.0]);

        let grid = RealGrid::from_vec(4, 4, (0..16).map(|i| i as f64 * 100.0).collect()).unwrap();
        let p5 = dir.join("b.pgm");
        save_image(&grid, &p5, false).unwrap();
        let back = load_image(&p5).unwrap();
        for (&a, &b) in grid.data().iter().zip(back.data()) {
            assert_eq!(a.round().clamp(0.0, 65535.0), b);
        }
    }

    #[test]
    fn unknown_format_is_an_error() {
        let path = tmpdir().join("bogus.dat");
        std::fs::write(&path, b"not an image").unwrap();
        assert!(matches!(load_image(&path), Err(Error::Parse(_))));
        let grid = RealGrid::zeros(4, 4);
        assert!(save_image(&grid, tmpdir().join("out.bmp"), true).is_err());
    }

    #[test]
    fn stack_round_trip() {
        let images: Vec<RealGrid> = (0..3)
            .map(|s| {
                RealGrid::from_vec(4, 2, (0..8).map(|i| (i + s * 8) as f64).collect()).unwrap()
            })
            .collect();
        let path = tmpdir().join("set.f32s");
        write_stack(&images, &path).unwrap();
        let back = read_stack(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in images.iter().zip(&back) {
            assert_eq!(a.data(), b.data());
        }
    }
}
