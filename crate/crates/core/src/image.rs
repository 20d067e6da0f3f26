//! Netpbm and PFM encoders, plus buffer comparison.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::tracer::GBuffer;

/// Binary 8-bit RGB pixmap (P6).
pub fn write_ppm<W: Write>(mut w: W, width: u32, height: u32, rgb: &[[u8; 3]]) -> io::Result<()> {
    assert_eq!(rgb.len(), (width * height) as usize);
    write!(w, "P6\n{width} {height}\n255\n")?;
    let flat: Vec<u8> = rgb.iter().flatten().copied().collect();
    w.write_all(&flat)
}

/// Binary 16-bit graymap (P5, big-endian samples).
pub fn write_pgm16<W: Write>(mut w: W, width: u32, height: u32, gray: &[u16]) -> io::Result<()> {
    assert_eq!(gray.len(), (width * height) as usize);
    write!(w, "P5\n{width} {height}\n65535\n")?;
    let flat: Vec<u8> = gray.iter().flat_map(|v| v.to_be_bytes()).collect();
    w.write_all(&flat)
}

/// Single-channel float map ("Pf", little-endian, rows stored bottom-up).
/// Non-finite values are stored as is; misses are `+inf`.
pub fn write_pfm<W: Write>(mut w: W, width: u32, height: u32, data: &[f32]) -> io::Result<()> {
    assert_eq!(data.len(), (width * height) as usize);
    write!(w, "Pf\n{width} {height}\n-1.0\n")?;
    let mut flat = Vec::with_capacity(data.len() * 4);
    for row in data.chunks(width as usize).rev() {
        for v in row {
            flat.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&flat)
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad float map: {0}")]
    Format(String),
    #[error("size mismatch: {a_w}x{a_h} vs {b_w}x{b_h}")]
    Dimensions { a_w: u32, a_h: u32, b_w: u32, b_h: u32 },
}

fn header_token<R: BufRead>(r: &mut R) -> Result<String, ImageError> {
    let mut tok = Vec::new();
    let mut byte = [0u8];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(byte[0]);
    }
    String::from_utf8(tok).map_err(|_| ImageError::Format("non-ASCII header".into()))
}

/// Reads a grayscale PFM. Returns (width, height, row-major top-down data).
pub fn read_pfm<R: BufRead>(mut r: R) -> Result<(u32, u32, Vec<f32>), ImageError> {
    let magic = header_token(&mut r)?;
    if magic != "Pf" {
        return Err(ImageError::Format(format!("expected \"Pf\" magic, found {magic:?}")));
    }
    let parse = |s: String, what: &str| s.parse::<u32>().map_err(|_| ImageError::Format(format!("bad {what} {s:?}")));
    let width = parse(header_token(&mut r)?, "width")?;
    let height = parse(header_token(&mut r)?, "height")?;
    let scale: f32 = header_token(&mut r)?.parse().map_err(|_| ImageError::Format("bad scale".into()))?;
    if width == 0 || height == 0 || width > 1 << 15 || height > 1 << 15 {
        return Err(ImageError::Format(format!("unsupported size {width}x{height}")));
    }
    let mut raw = vec![0u8; width as usize * height as usize * 4];
    r.read_exact(&mut raw).map_err(|_| ImageError::Format("truncated pixel data".into()))?;
    let decode = |b: &[u8]| {
        let b = [b[0], b[1], b[2], b[3]];
        if scale < 0.0 {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        }
    };
    let mut data = Vec::with_capacity(raw.len() / 4);
    for row in raw.chunks(width as usize * 4).rev() {
        data.extend(row.chunks(4).map(decode));
    }
    Ok((width, height, data))
}

/// Hit-mask and depth agreement between two depth planes (non-finite = miss).
#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub pixels: usize,
    pub agreement: f64,
    pub matched_hits: usize,
    pub depth_rms: f64,
    pub depth_max: f64,
    /// Matched hits whose depth error exceeds the tolerance.
    pub depth_outliers: usize,
    /// Up to 16 pixels whose hit state differs, in scan order.
    pub mismatches: Vec<(u32, u32)>,
}

const MISMATCH_SAMPLE: usize = 16;

pub fn compare_depths(
    width: u32,
    height: u32,
    a: &[f32],
    b: &[f32],
    depth_tol: f32,
) -> CompareReport {
    assert_eq!(a.len(), b.len());
    let mut agree = 0usize;
    let mut matched = 0usize;
    let mut sq = 0f64;
    let mut max = 0f64;
    let mut outliers = 0usize;
    let mut mismatches = Vec::new();
    for (i, (&da, &db)) in a.iter().zip(b).enumerate() {
        let (ha, hb) = (da.is_finite(), db.is_finite());
        if ha == hb {
            agree += 1;
            if ha {
                matched += 1;
                let e = (da as f64 - db as f64).abs();
                sq += e * e;
                max = max.max(e);
                if e > depth_tol as f64 {
                    outliers += 1;
                }
            }
        } else if mismatches.len() < MISMATCH_SAMPLE {
            mismatches.push((i as u32 % width, i as u32 / width));
        }
    }
    let pixels = (width * height) as usize;
    CompareReport {
        pixels,
        agreement: if pixels == 0 { 1.0 } else { agree as f64 / pixels as f64 },
        matched_hits: matched,
        depth_rms: if matched == 0 { 0.0 } else { (sq / matched as f64).sqrt() },
        depth_max: max,
        depth_outliers: outliers,
        mismatches,
    }
}

pub fn compare_gbuffers(a: &GBuffer, b: &GBuffer, depth_tol: f32) -> Result<CompareReport, ImageError> {
    if a.width != b.width || a.height != b.height {
        return Err(ImageError::Dimensions { a_w: a.width, a_h: a.height, b_w: b.width, b_h: b.height });
    }
    Ok(compare_depths(a.width, a.height, &a.depth, &b.depth, depth_tol))
}

impl std::fmt::Display for CompareReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "pixels {}", self.pixels)?;
        writeln!(f, "hit_agreement {:.6}", self.agreement)?;
        writeln!(f, "matched_hits {}", self.matched_hits)?;
        writeln!(f, "depth_rms {:.6e}", self.depth_rms)?;
        writeln!(f, "depth_max {:.6e}", self.depth_max)?;
        writeln!(f, "depth_outliers {}", self.depth_outliers)?;
        let list: Vec<String> = self.mismatches.iter().map(|(x, y)| format!("{x},{y}")).collect();
        write!(f, "mismatch_sample {}", list.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip() {
        let data = vec![1.0, f32::INFINITY, -2.5, 0.125, 7.0, 1e-9];
        let mut buf = Vec::new();
        write_pfm(&mut buf, 3, 2, &data).unwrap();
        let (w, h, back) = read_pfm(&buf[..]).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(back, data);
        assert!(read_pfm(&buf[..buf.len() - 1]).is_err());
        assert!(read_pfm(&b"P6\n1 1\n255\n..."[..]).is_err());
    }

    #[test]
    fn headers() {
        let mut buf = Vec::new();
        write_pgm16(&mut buf, 2, 1, &[1, 0x0102]).unwrap();
        assert_eq!(buf, b"P5\n2 1\n65535\n\x00\x01\x01\x02");
        buf.clear();
        write_ppm(&mut buf, 1, 1, &[[255, 0, 255]]).unwrap();
        assert_eq!(buf, b"P6\n1 1\n255\n\xff\x00\xff");
    }

    #[test]
    fn identical_and_one_flip() {
        let mut g = GBuffer::empty(4, 4);
        for i in 0..8 {
            g.depth[i] = 1.0 + i as f32;
            g.hit[i] = true;
        }
        let r = compare_gbuffers(&g, &g, 0.0).unwrap();
        assert_eq!(r.agreement, 1.0);
        assert_eq!(r.depth_rms, 0.0);
        assert!(r.mismatches.is_empty());
        let mut h = g.clone();
        h.depth[13] = 3.0;
        let r = compare_gbuffers(&g, &h, 0.0).unwrap();
        assert_eq!(r.agreement, 1.0 - 1.0 / 16.0);
        assert_eq!(r.mismatches, vec![(1, 3)]);
        assert!(compare_gbuffers(&g, &GBuffer::empty(4, 5), 0.0).is_err());
    }
}
