//! File formats.
//!
//! Images: one ASCII header line `rows cols`, then `rows * cols` raw
//! little-endian float64 values in row-major order.
//!
//! Sinograms: header line `n_angles n_det`, a second line with the angles in
//! radians separated by single spaces, then the raw little-endian float64
//! payload (one row per angle).
//!
//! Bilevel traces: CSV with the header
//! `k,lambda,lambda_hat,loss,grad,step,backtracks,tape_bytes`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Image, Sinogram, VectorSpace};

pub const TRACE_HEADER: &str = "k,lambda,lambda_hat,loss,grad,step,backtracks,tape_bytes";

/// One CSV row of a bilevel trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub lambda: f64,
    pub lambda_hat: f64,
    pub loss: f64,
    pub grad: f64,
    pub step: f64,
    pub backtracks: usize,
    pub tape_bytes: usize,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn header_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Header {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Splits off one `\n`-terminated ASCII line.
fn take_line<'a>(path: &Path, bytes: &'a [u8]) -> Result<(&'a str, &'a [u8])> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| header_err(path, "missing newline after header"))?;
    let line = std::str::from_utf8(&bytes[..end])
        .map_err(|_| header_err(path, "header is not ASCII text"))?;
    Ok((line, &bytes[end + 1..]))
}

fn parse_dims(path: &Path, line: &str) -> Result<(usize, usize)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(header_err(path, format!("expected `rows cols`, got `{line}`")));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| header_err(path, format!("bad dimension `{s}`")))
    };
    Ok((parse(fields[0])?, parse(fields[1])?))
}

fn decode_payload(path: &Path, bytes: &[u8], count: usize) -> Result<Vec<f64>> {
    let expected = count * 8;
    if bytes.len() != expected {
        return Err(Error::Payload {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn encode_payload(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let mut out = format!("{} {}\n", img.rows(), img.cols()).into_bytes();
    encode_payload(&mut out, img.as_slice());
    write_bytes(path.as_ref(), &out)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let (line, rest) = take_line(path, &bytes)?;
    let (rows, cols) = parse_dims(path, line)?;
    let data = decode_payload(path, rest, rows * cols)?;
    Image::from_vec(rows, cols, data)
}

pub fn write_sinogram(path: impl AsRef<Path>, s: &Sinogram) -> Result<()> {
    let angles: Vec<String> = s.angles().iter().map(|a| a.to_string()).collect();
    let mut out = format!("{} {}\n{}\n", s.n_angles(), s.n_det(), angles.join(" ")).into_bytes();
    encode_payload(&mut out, s.as_slice());
    write_bytes(path.as_ref(), &out)
}

pub fn read_sinogram(path: impl AsRef<Path>) -> Result<Sinogram> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let (line, rest) = take_line(path, &bytes)?;
    let (n_angles, n_det) = parse_dims(path, line)?;
    let (line, rest) = take_line(path, rest)?;
    let angles = line
        .split_whitespace()
        .map(|a| {
            a.parse::<f64>()
                .map_err(|_| header_err(path, format!("bad angle `{a}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if angles.len() != n_angles {
        return Err(header_err(
            path,
            format!("header announces {n_angles} angles, found {}", angles.len()),
        ));
    }
    let data = decode_payload(path, rest, n_angles * n_det)?;
    Sinogram::from_vec(angles, n_det, data).map_err(|e| header_err(path, e.to_string()))
}

pub fn write_trace(path: impl AsRef<Path>, rows: &[TraceRow]) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        wtr.write_record(TRACE_HEADER.split(','))?;
    }
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != TRACE_HEADER {
        return Err(header_err(path, format!("unexpected trace header `{header}`")));
    }
    rdr.deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub const OBJECTIVE_HEADER: &str = "k,objective";

/// Objective value per iteration, header `k,objective`.
pub fn write_objective(path: impl AsRef<Path>, values: &[(usize, f64)]) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(OBJECTIVE_HEADER.split(','))?;
    for (k, v) in values {
        wtr.write_record([k.to_string(), format!("{v:e}")])?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// 8-bit grayscale PNG, linearly rescaled from `[min, max]` to `[0, 255]`.
pub fn export_png(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let (lo, hi) = (img.min(), img.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = img
        .as_slice()
        .iter()
        .map(|&x| ((x - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let buf = image::GrayImage::from_raw(img.cols() as u32, img.rows() as u32, pixels)
        .expect("buffer length matches image shape");
    buf.save(path.as_ref())?;
    Ok(())
}
