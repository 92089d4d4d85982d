//! Binary PGM (`P5`) reading and writing.
//!
//! Samples are one byte when maxval <= 255, otherwise two bytes big-endian.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, CineStack, ImageSlice};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            self.pos = start;
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                offset: start,
                message: format!("{what} out of range"),
            })
    }
}

pub fn decode_pgm(buf: &[u8]) -> Result<Pgm> {
    let mut cur = Cursor { buf, pos: 0 };
    if buf.len() < 2 || &buf[..2] != b"P5" {
        return Err(cur.err("missing P5 magic"));
    }
    cur.pos = 2;
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(cur.err(format!("maxval {maxval} outside 1..=65535")));
    }
    match buf.get(cur.pos) {
        Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.err("expected a single whitespace before the raster")),
    }
    let bytes_per = if maxval > 255 { 2 } else { 1 };
    let need = width * height * bytes_per;
    let raster = &buf[cur.pos..];
    if raster.len() < need {
        return Err(Error::Parse {
            offset: buf.len(),
            message: format!("raster truncated: {} of {} bytes", raster.len(), need),
        });
    }
    if raster.len() > need {
        return Err(Error::Parse {
            offset: cur.pos + need,
            message: format!("{} trailing bytes after the raster", raster.len() - need),
        });
    }
    let samples: Vec<u16> = if bytes_per == 1 {
        raster.iter().map(|&b| u16::from(b)).collect()
    } else {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    if let Some(i) = samples.iter().position(|&v| u32::from(v) > maxval) {
        return Err(Error::Parse {
            offset: cur.pos + i * bytes_per,
            message: format!("sample {} exceeds maxval {maxval}", samples[i]),
        });
    }
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

pub fn encode_pgm(pgm: &Pgm) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", pgm.width, pgm.height, pgm.maxval).into_bytes();
    if pgm.maxval > 255 {
        for v in &pgm.samples {
            out.extend_from_slice(&v.to_be_bytes());
        }
    } else {
        out.extend(pgm.samples.iter().map(|&v| v as u8));
    }
    out
}

fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path)?;
    decode_pgm(&bytes).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Validation {
            path: path.to_path_buf(),
            message: format!("byte {offset}: {message}"),
        },
        other => other,
    })
}

pub fn load_slice(path: &Path) -> Result<ImageSlice> {
    let pgm = read_pgm(path)?;
    let depth = if pgm.maxval > 255 { 16 } else { 8 };
    ImageSlice::new(pgm.width, pgm.height, depth, pgm.samples)
}

pub fn save_slice(slice: &ImageSlice, path: &Path) -> Result<()> {
    let maxval = if slice.bit_depth() == 16 { 65535 } else { 255 };
    let pgm = Pgm {
        width: slice.width(),
        height: slice.height(),
        maxval,
        samples: slice.intensities().to_vec(),
    };
    fs::write(path, encode_pgm(&pgm))?;
    Ok(())
}

/// `*.pgm` files in `dir`, sorted by file name.
pub fn list_pgm(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

pub fn load_stack(dir: &Path) -> Result<CineStack> {
    let files = list_pgm(dir)?;
    if files.len() < 2 {
        return Err(Error::Validation {
            path: dir.to_path_buf(),
            message: format!("need at least 2 slice files, found {}", files.len()),
        });
    }
    let mut slices = Vec::with_capacity(files.len());
    let mut first: Option<(usize, usize, u16)> = None;
    for f in &files {
        let pgm = read_pgm(f)?;
        let key = (pgm.width, pgm.height, pgm.maxval);
        match first {
            None => first = Some(key),
            Some(k) if k != key => {
                return Err(Error::Validation {
                    path: f.clone(),
                    message: format!(
                        "{}x{} maxval {} differs from the stack's {}x{} maxval {}",
                        key.0, key.1, key.2, k.0, k.1, k.2
                    ),
                });
            }
            _ => {}
        }
        let depth = if pgm.maxval > 255 { 16 } else { 8 };
        slices.push(ImageSlice::new(pgm.width, pgm.height, depth, pgm.samples)?);
    }
    CineStack::new(slices)
}

/// A mask file: maxval 255, samples 0 (background) or 255 (foreground).
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let pgm = read_pgm(path)?;
    let invalid = |message: String| Error::Validation {
        path: path.to_path_buf(),
        message,
    };
    if pgm.maxval != 255 {
        return Err(invalid(format!("mask maxval must be 255, got {}", pgm.maxval)));
    }
    if let Some(v) = pgm.samples.iter().find(|&&v| v != 0 && v != 255) {
        return Err(invalid(format!("mask holds value {v}; only 0 and 255 are allowed")));
    }
    BinaryMask::new(pgm.width, pgm.height, pgm.samples.iter().map(|&v| v == 255).collect())
}

pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    let pgm = Pgm {
        width: mask.width(),
        height: mask.height(),
        maxval: 255,
        samples: mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect(),
    };
    fs::write(path, encode_pgm(&pgm))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_with_comments() {
        let mut buf = b"P5 # comment\n3 # w\n2\n255\n".to_vec();
        buf.extend_from_slice(&[0, 1, 2, 3, 4, 255]);
        let p = decode_pgm(&buf).unwrap();
        assert_eq!((p.width, p.height, p.maxval), (3, 2, 255));
        assert_eq!(p.samples, vec![0, 1, 2, 3, 4, 255]);
    }

    #[test]
    fn sixteen_bit_is_big_endian() {
        let p = Pgm { width: 2, height: 1, maxval: 1000, samples: vec![258, 999] };
        let bytes = encode_pgm(&p);
        assert!(bytes.ends_with(&[1, 2, 3, 231]));
        assert_eq!(decode_pgm(&bytes).unwrap(), p);
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        match decode_pgm(b"P2\n1 1\n255\n\x00") {
            Err(Error::Parse { offset: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
        match decode_pgm(b"P5\n1 x\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        assert!(matches!(decode_pgm(b"P5\n2 2\n255\n\x00"), Err(Error::Parse { .. })));
        assert!(matches!(decode_pgm(b"P5\n1 1\n100\n\xff"), Err(Error::Parse { offset: 11, .. })));
        assert!(matches!(decode_pgm(b"P5\n1 1\n255\n\x00\x00"), Err(Error::Parse { offset: 12, .. })));
    }
}
