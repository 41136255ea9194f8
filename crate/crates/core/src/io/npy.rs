//! Reader and writer for `.npy` (format version 1.0) activation dumps.
//!
//! Reading accepts 2-D `f4`/`f8` arrays in either byte order and either
//! memory order, and header versions 1.0 and 2.0. Writing always produces
//! version 1.0, little-endian `f8`, C order, with the header padded with
//! spaces so the payload starts on a 64-byte boundary, matching what numpy
//! itself writes.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::activation::ActivationMatrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dtype {
    endian: Endian,
    width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Header {
    dtype: Dtype,
    fortran_order: bool,
    shape: Vec<usize>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn read_activation_dump(path: impl AsRef<Path>) -> Result<ActivationMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_activation_dump(path: impl AsRef<Path>, matrix: &ActivationMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(matrix)).map_err(|e| Error::io(path, e))
}

pub fn encode(matrix: &ActivationMatrix) -> Vec<u8> {
    let (m, n) = matrix.shape();
    let dict = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': ({m}, {n}), }}");
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    let header_len = dict.len() + padding + 1;

    let mut out = Vec::with_capacity(unpadded + padding + m * n * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat_n(b' ', padding));
    out.push(b'\n');
    for v in matrix.to_row_major() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ActivationMatrix> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(format_err("missing .npy magic string"));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, header_start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(format_err("truncated header length"));
            }
            (u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize, 12)
        }
        _ => return Err(format_err(format!("unsupported format version {major}.{minor}"))),
    };
    let payload_start = header_start + header_len;
    if bytes.len() < payload_start {
        return Err(format_err("truncated header"));
    }
    let text = std::str::from_utf8(&bytes[header_start..payload_start])
        .map_err(|_| format_err("header is not valid text"))?;
    let header = parse_header(text)?;
    let [m, n] = header.shape[..] else {
        return Err(format_err(format!("expected a 2-D array, got shape {:?}", header.shape)));
    };

    let width = header.dtype.width;
    let payload = &bytes[payload_start..];
    let expected = m
        .checked_mul(n)
        .and_then(|c| c.checked_mul(width))
        .ok_or_else(|| format_err("shape overflows"))?;
    if payload.len() != expected {
        return Err(format_err(format!(
            "payload holds {} bytes, shape ({m}, {n}) needs {expected}",
            payload.len()
        )));
    }

    let values: Vec<f64> = payload
        .chunks_exact(width)
        .map(|c| match (width, header.dtype.endian) {
            (8, Endian::Little) => f64::from_le_bytes(c.try_into().unwrap()),
            (8, Endian::Big) => f64::from_be_bytes(c.try_into().unwrap()),
            (4, Endian::Little) => f32::from_le_bytes(c.try_into().unwrap()) as f64,
            (_, _) => f32::from_be_bytes(c.try_into().unwrap()) as f64,
        })
        .collect();
    let data = if header.fortran_order {
        DMatrix::from_column_slice(m, n, &values)
    } else {
        DMatrix::from_row_slice(m, n, &values)
    };
    ActivationMatrix::new(data)
}

/// Parses the Python dict literal holding `descr`, `fortran_order` and
/// `shape`.
fn parse_header(text: &str) -> Result<Header> {
    let mut p = Parser { s: text.trim_end().as_bytes(), pos: 0 };
    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    p.expect(b'{')?;
    loop {
        p.skip_ws();
        if p.eat(b'}') {
            break;
        }
        let key = p.string()?;
        p.skip_ws();
        p.expect(b':')?;
        p.skip_ws();
        match key.as_str() {
            "descr" => descr = Some(p.string()?),
            "fortran_order" => fortran = Some(p.boolean()?),
            "shape" => shape = Some(p.tuple()?),
            other => return Err(format_err(format!("unexpected header key '{other}'"))),
        }
        p.skip_ws();
        if !p.eat(b',') {
            p.skip_ws();
            p.expect(b'}')?;
            break;
        }
    }
    let descr = descr.ok_or_else(|| format_err("header lacks 'descr'"))?;
    Ok(Header {
        dtype: parse_descr(&descr)?,
        fortran_order: fortran.ok_or_else(|| format_err("header lacks 'fortran_order'"))?,
        shape: shape.ok_or_else(|| format_err("header lacks 'shape'"))?,
    })
}

fn parse_descr(descr: &str) -> Result<Dtype> {
    let (endian, kind) = match descr.as_bytes().first() {
        Some(b'<') | Some(b'=') => (Endian::Little, &descr[1..]),
        Some(b'>') => (Endian::Big, &descr[1..]),
        _ => (Endian::Little, descr),
    };
    let width = match kind {
        "f8" => 8,
        "f4" => 4,
        _ => return Err(format_err(format!("unsupported dtype '{descr}', need f4 or f8"))),
    };
    Ok(Dtype { endian, width })
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(format_err(format!("malformed header: expected '{}' at byte {}", c as char, self.pos)))
        }
    }

    fn string(&mut self) -> Result<String> {
        let quote = match self.s.get(self.pos) {
            Some(&q @ (b'\'' | b'"')) => q,
            _ => return Err(format_err("malformed header: expected a quoted string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos >= self.s.len() {
            return Err(format_err("malformed header: unterminated string"));
        }
        let out = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(out)
    }

    fn boolean(&mut self) -> Result<bool> {
        let rest = &self.s[self.pos..];
        if rest.starts_with(b"True") {
            self.pos += 4;
            Ok(true)
        } else if rest.starts_with(b"False") {
            self.pos += 5;
            Ok(false)
        } else {
            Err(format_err("malformed header: expected True or False"))
        }
    }

    fn tuple(&mut self) -> Result<Vec<usize>> {
        self.expect(b'(')?;
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            if self.eat(b')') {
                return Ok(out);
            }
            let start = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let digits = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
            // numpy may write `2L` on very old versions
            self.eat(b'L');
            out.push(
                digits
                    .parse()
                    .map_err(|_| format_err("malformed header: bad shape entry"))?,
            );
            self.skip_ws();
            if !self.eat(b',') {
                self.skip_ws();
                self.expect(b')')?;
                return Ok(out);
            }
        }
    }
}
