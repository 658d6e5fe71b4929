//! Image error metrics, the temporal-flicker series, and PFM/PPM/CSV output.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Rgb;

/// Linear RGB image, row-major with row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRGB {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f32; 3]>,
}

impl ImageRGB {
    pub fn new(width: usize, height: usize) -> Self {
        ImageRGB {
            width,
            height,
            data: vec![[0.0; 3]; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, v: f32) -> Self {
        ImageRGB {
            width,
            height,
            data: vec![[v; 3]; width * height],
        }
    }

    pub fn from_rgb(width: usize, height: usize, pixels: &[Rgb]) -> Self {
        assert_eq!(pixels.len(), width * height);
        ImageRGB {
            width,
            height,
            data: pixels.iter().map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect(),
        }
    }

    fn check_same(&self, other: &ImageRGB) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) || self.data.len() != other.data.len() {
            return Err(Error::DimensionMismatch(self.width, self.height, other.width, other.height));
        }
        Ok(())
    }

    fn channels(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().flat_map(|p| p.iter().map(|&c| c as f64))
    }
}

/// Mean over all pixels and channels of `(a − b)²`.
pub fn mse(a: &ImageRGB, b: &ImageRGB) -> Result<f64> {
    a.check_same(b)?;
    let n = a.data.len() * 3;
    let sum: f64 = a.channels().zip(b.channels()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Mean of `(a − ref)² / (ref² + 0.01)` over all pixels and channels.
pub fn rel_mse(a: &ImageRGB, reference: &ImageRGB) -> Result<f64> {
    a.check_same(reference)?;
    let n = a.data.len() * 3;
    let sum: f64 = a
        .channels()
        .zip(reference.channels())
        .map(|(x, r)| (x - r) * (x - r) / (r * r + 0.01))
        .sum();
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MetricRow {
    pub frame: usize,
    pub metric: String,
    pub value: f64,
}

/// `temporal_mse` between each pair of consecutive frames.
pub fn flicker_series(frames: &[ImageRGB]) -> Result<Vec<MetricRow>> {
    if frames.len() < 2 {
        return Err(Error::Usage(format!(
            "flicker series needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    frames
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            Ok(MetricRow {
                frame: i,
                metric: "temporal_mse".into(),
                value: mse(&w[0], &w[1])?,
            })
        })
        .collect()
}

pub fn encode_pfm(img: &ImageRGB) -> Vec<u8> {
    let mut out = format!("PF\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len() * 12);
    for row in (0..img.height).rev() {
        for p in &img.data[row * img.width..(row + 1) * img.width] {
            for c in p {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    out
}

/// Splits the next whitespace-delimited header token off `bytes`.
fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::MalformedImage("unexpected end of header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::MalformedImage("header is not ASCII".into()))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<ImageRGB> {
    let mut pos = 0;
    if header_token(bytes, &mut pos)? != "PF" {
        return Err(Error::MalformedImage("expected colour PFM magic `PF`".into()));
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::MalformedImage(format!("bad dimension `{s}`")))
    };
    let width = parse_dim(header_token(bytes, &mut pos)?)?;
    let height = parse_dim(header_token(bytes, &mut pos)?)?;
    let scale: f64 = header_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::MalformedImage("bad scale".into()))?;
    if !(scale < 0.0) {
        return Err(Error::MalformedImage("only little-endian PFM (negative scale) is supported".into()));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::MalformedImage("missing payload".into()));
    }
    let payload = &bytes[pos + 1..];
    let expected = width * height * 12;
    if payload.len() != expected {
        return Err(Error::MalformedImage(format!(
            "payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let mut img = ImageRGB::new(width, height);
    for (k, px) in payload.chunks_exact(12).enumerate() {
        let (x, file_row) = (k % width, k / width);
        let row = height - 1 - file_row;
        let mut p = [0f32; 3];
        for (c, b) in p.iter_mut().zip(px.chunks_exact(4)) {
            *c = f32::from_le_bytes(b.try_into().unwrap());
        }
        img.data[row * width + x] = p;
    }
    Ok(img)
}

pub fn write_pfm(img: &ImageRGB, path: &Path) -> Result<()> {
    std::fs::write(path, encode_pfm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<ImageRGB> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)
}

/// `round(255 · clamp01(v · exposure)^(1/2.2))`, halves rounded up.
pub fn tonemap_byte(v: f32, exposure: f64) -> u8 {
    let x = (v as f64 * exposure).clamp(0.0, 1.0);
    let x = if x.is_nan() { 0.0 } else { x };
    (255.0 * x.powf(1.0 / 2.2) + 0.5).floor() as u8
}

pub fn encode_ppm(img: &ImageRGB, exposure: f64) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().flat_map(|p| p.map(|c| tonemap_byte(c, exposure))));
    out
}

pub fn write_ppm_tonemapped(img: &ImageRGB, path: &Path, exposure: f64) -> Result<()> {
    std::fs::write(path, encode_ppm(img, exposure)).map_err(|e| Error::io(path, e))
}

/// Writes rows as `frame,metric,value` CSV.
pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn save_metrics_csv(rows: &[MetricRow], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    if rows.is_empty() {
        let mut f = f;
        return f.write_all(b"frame,metric,value\n").map_err(|e| Error::io(path, e));
    }
    write_metrics_csv(rows, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_arithmetic() {
        let a = ImageRGB::filled(2, 2, 1.0);
        let b = ImageRGB::filled(2, 2, 0.0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 1.0);
        let mut c = b.clone();
        c.data[3][1] = 3.0;
        assert_eq!(mse(&c, &b).unwrap(), 0.75);
        assert!(mse(&a, &ImageRGB::new(3, 1)).is_err());
    }

    #[test]
    fn rel_mse_arithmetic() {
        let r = ImageRGB::filled(3, 2, 1.0);
        assert_eq!(rel_mse(&r, &r).unwrap(), 0.0);
        let z = ImageRGB::new(3, 2);
        assert!((rel_mse(&z, &r).unwrap() - 1.0 / 1.01).abs() < 1e-12);
    }

    #[test]
    fn flicker_rows() {
        let f = vec![ImageRGB::filled(2, 2, 0.5); 4];
        let rows = flicker_series(&f).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.value == 0.0 && r.metric == "temporal_mse"));
        assert!(flicker_series(&f[..1]).is_err());
    }

    #[test]
    fn pfm_layout() {
        let mut img = ImageRGB::new(2, 2);
        img.data[0] = [1.0, 2.0, 3.0];
        let bytes = encode_pfm(&img);
        let header = b"PF\n2 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 48);
        // Top-left pixel is written in the last row of the file.
        assert_eq!(&bytes[header.len() + 24..header.len() + 28], &1.0f32.to_le_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap(), img);
        assert!(decode_pfm(&bytes[..bytes.len() - 4]).is_err());
        assert!(decode_pfm(b"P6\n2 2\n255\n").is_err());
    }

    #[test]
    fn tonemap_values() {
        assert_eq!(tonemap_byte(1.0, 1.0), 255);
        assert_eq!(tonemap_byte(0.0, 1.0), 0);
        assert_eq!(tonemap_byte(0.5, 1.0), 186);
        assert_eq!(tonemap_byte(7.0, 1.0), 255);
    }

    #[test]
    fn csv_format() {
        let rows = vec![MetricRow {
            frame: 0,
            metric: "temporal_mse".into(),
            value: 0.25,
        }];
        let mut buf = Vec::new();
        write_metrics_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "frame,metric,value\n0,temporal_mse,0.25\n");
    }
}
