//! Minimal MATLAB level-5 container reader for the public bearing datasets,
//! plus a small writer used to build test fixtures.
//!
//! Supports little-endian files with numeric, char, struct, and cell
//! arrays, and zlib-compressed elements. Numeric data is widened to `f64`
//! in file (column-major) order.

use crate::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt};
use flate2::read::ZlibDecoder;
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

// data-element type tags
const MI_INT8: u32 = 1;
const MI_UINT8: u32 = 2;
const MI_INT16: u32 = 3;
const MI_UINT16: u32 = 4;
const MI_INT32: u32 = 5;
const MI_UINT32: u32 = 6;
const MI_SINGLE: u32 = 7;
const MI_DOUBLE: u32 = 9;
const MI_INT64: u32 = 12;
const MI_UINT64: u32 = 13;
const MI_MATRIX: u32 = 14;
const MI_COMPRESSED: u32 = 15;
const MI_UTF8: u32 = 16;

// array classes
const MX_CELL: u8 = 1;
const MX_STRUCT: u8 = 2;
const MX_OBJECT: u8 = 3;
const MX_CHAR: u8 = 4;

/// One MATLAB array.
#[derive(Debug, Clone, PartialEq)]
pub enum MatValue {
    Numeric { dims: Vec<usize>, data: Vec<f64> },
    Char(String),
    Struct { dims: Vec<usize>, fields: BTreeMap<String, Vec<MatValue>> },
    Cell { dims: Vec<usize>, values: Vec<MatValue> },
    /// Array class this reader does not interpret.
    Unsupported(u8),
}

impl MatValue {
    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            MatValue::Numeric { data, .. } => Some(data),
            _ => None,
        }
    }

    pub fn as_char(&self) -> Option<&str> {
        match self {
            MatValue::Char(s) => Some(s),
            _ => None,
        }
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_string(), msg: msg.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(self.err(format!("unexpected end of file at offset {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let mut s = self.take(4)?;
        Ok(s.read_u32::<LittleEndian>().unwrap())
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Tag of the next data element: `(type, size, small)`. Small elements
    /// pack up to 4 data bytes into the tag's second word.
    fn tag(&mut self) -> Result<(u32, usize, bool)> {
        let first = self.u32()?;
        if first >> 16 != 0 {
            Ok((first & 0xFFFF, (first >> 16) as usize, true))
        } else {
            let size = self.u32()? as usize;
            Ok((first, size, false))
        }
    }

    /// Read one data element's payload, handling small format and padding.
    fn element(&mut self) -> Result<(u32, &'a [u8])> {
        let (ty, size, small) = self.tag()?;
        if small {
            let data = self.take(4)?;
            Ok((ty, &data[..size]))
        } else {
            let data = self.take(size)?;
            let pad = (8 - size % 8) % 8;
            // compressed elements are written without padding
            if ty != MI_COMPRESSED {
                let pad = pad.min(self.remaining());
                self.pos += pad;
            }
            Ok((ty, data))
        }
    }
}

fn decode_numeric(path: &str, ty: u32, bytes: &[u8]) -> Result<Vec<f64>> {
    let mut r = bytes;
    let mut out = Vec::new();
    macro_rules! pump {
        ($read:ident, $w:expr) => {
            while r.len() >= $w {
                out.push(r.$read::<LittleEndian>().unwrap() as f64);
            }
        };
    }
    match ty {
        MI_INT8 => out.extend(bytes.iter().map(|&b| b as i8 as f64)),
        MI_UINT8 => out.extend(bytes.iter().map(|&b| b as f64)),
        MI_INT16 => pump!(read_i16, 2),
        MI_UINT16 => pump!(read_u16, 2),
        MI_INT32 => pump!(read_i32, 4),
        MI_UINT32 => pump!(read_u32, 4),
        MI_SINGLE => pump!(read_f32, 4),
        MI_DOUBLE => pump!(read_f64, 8),
        MI_INT64 => pump!(read_i64, 8),
        MI_UINT64 => pump!(read_u64, 8),
        other => {
            return Err(Error::Parse { path: path.to_string(), msg: format!("unsupported numeric type {other}") })
        }
    }
    Ok(out)
}

fn decode_char(path: &str, ty: u32, bytes: &[u8]) -> Result<String> {
    match ty {
        MI_UTF8 | MI_INT8 | MI_UINT8 => Ok(String::from_utf8_lossy(bytes).into_owned()),
        MI_UINT16 | MI_INT16 => {
            let mut r = bytes;
            let mut units = Vec::with_capacity(bytes.len() / 2);
            while r.len() >= 2 {
                units.push(r.read_u16::<LittleEndian>().unwrap());
            }
            Ok(String::from_utf16_lossy(&units))
        }
        other => Err(Error::Parse { path: path.to_string(), msg: format!("unsupported char storage {other}") }),
    }
}

/// Parse one miMATRIX payload into `(name, value)`.
fn parse_matrix(path: &str, bytes: &[u8]) -> Result<(String, MatValue)> {
    let mut c = Cursor { buf: bytes, pos: 0, path };
    if bytes.is_empty() {
        // empty matrix element (struct field placeholder)
        return Ok((String::new(), MatValue::Numeric { dims: vec![0, 0], data: Vec::new() }));
    }
    let (ty, flags) = c.element()?;
    if ty != MI_UINT32 || flags.len() < 8 {
        return Err(c.err("malformed array-flags subelement"));
    }
    let class = flags[0];
    let (ty, dim_bytes) = c.element()?;
    if ty != MI_INT32 {
        return Err(c.err("malformed dimensions subelement"));
    }
    let dims: Vec<usize> = decode_numeric(path, MI_INT32, dim_bytes)?.iter().map(|&d| d as usize).collect();
    let (_ty, name_bytes) = c.element()?;
    let name = String::from_utf8_lossy(name_bytes).trim_end_matches('\0').to_string();
    let count: usize = dims.iter().product();

    let value = match class {
        MX_CHAR => {
            let (ty, data) = c.element()?;
            MatValue::Char(decode_char(path, ty, data)?)
        }
        MX_STRUCT | MX_OBJECT => {
            if class == MX_OBJECT {
                // class name subelement precedes the field names
                let _ = c.element()?;
            }
            let (_ty, len_bytes) = c.element()?;
            let name_len = decode_numeric(path, MI_INT32, len_bytes)?
                .first()
                .map(|&v| v as usize)
                .ok_or_else(|| c.err("missing struct field-name length"))?;
            let (_ty, names_bytes) = c.element()?;
            if name_len == 0 {
                return Err(c.err("zero struct field-name length"));
            }
            let field_names: Vec<String> = names_bytes
                .chunks(name_len)
                .map(|chunk| String::from_utf8_lossy(chunk).trim_end_matches('\0').to_string())
                .filter(|s| !s.is_empty())
                .collect();
            let mut fields: BTreeMap<String, Vec<MatValue>> =
                field_names.iter().map(|n| (n.clone(), Vec::new())).collect();
            for _elem in 0..count {
                for fname in &field_names {
                    let (ty, data) = c.element()?;
                    if ty != MI_MATRIX {
                        return Err(c.err(format!("struct field {fname} is not a matrix element")));
                    }
                    let (_, v) = parse_matrix(path, data)?;
                    fields.get_mut(fname).unwrap().push(v);
                }
            }
            MatValue::Struct { dims, fields }
        }
        MX_CELL => {
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                let (ty, data) = c.element()?;
                if ty != MI_MATRIX {
                    return Err(c.err("cell entry is not a matrix element"));
                }
                let (_, v) = parse_matrix(path, data)?;
                values.push(v);
            }
            MatValue::Cell { dims, values }
        }
        cls if (6..=15).contains(&cls) => {
            let (ty, data) = c.element()?;
            let real = decode_numeric(path, ty, data)?;
            // imaginary part, if present, is ignored
            MatValue::Numeric { dims, data: real }
        }
        other => MatValue::Unsupported(other),
    };
    Ok((name, value))
}

/// Read every top-level variable of a level-5 MAT file.
pub fn read_mat(path: &Path) -> Result<BTreeMap<String, MatValue>> {
    let bytes = std::fs::read(path)?;
    let path_str = path.display().to_string();
    parse_mat_bytes(&bytes, &path_str)
}

/// Parse a level-5 MAT container from memory.
pub fn parse_mat_bytes(bytes: &[u8], path: &str) -> Result<BTreeMap<String, MatValue>> {
    if bytes.len() < 128 {
        return Err(Error::Parse { path: path.into(), msg: "file shorter than the 128-byte header".into() });
    }
    if &bytes[126..128] != b"IM" {
        return Err(Error::Parse {
            path: path.into(),
            msg: "not a little-endian level-5 MAT file (endian indicator mismatch)".into(),
        });
    }
    let mut c = Cursor { buf: &bytes[128..], pos: 0, path };
    let mut vars = BTreeMap::new();
    while c.remaining() >= 8 {
        let (ty, data) = c.element()?;
        match ty {
            MI_MATRIX => {
                let (name, value) = parse_matrix(path, data)?;
                vars.insert(name, value);
            }
            MI_COMPRESSED => {
                let mut decoder = ZlibDecoder::new(data);
                let mut inner = Vec::new();
                decoder
                    .read_to_end(&mut inner)
                    .map_err(|e| Error::Parse { path: path.into(), msg: format!("zlib: {e}") })?;
                let mut ic = Cursor { buf: &inner, pos: 0, path };
                let (ity, idata) = ic.element()?;
                if ity == MI_MATRIX {
                    let (name, value) = parse_matrix(path, idata)?;
                    vars.insert(name, value);
                }
            }
            _ => {} // skip unknown top-level elements
        }
    }
    Ok(vars)
}

// ── writer (fixtures and round-trip tests) ──────────────────────────────────

fn pad8(out: &mut Vec<u8>) {
    while out.len() % 8 != 0 {
        out.push(0);
    }
}

fn write_element(out: &mut Vec<u8>, ty: u32, data: &[u8]) {
    out.extend_from_slice(&ty.to_le_bytes());
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out.extend_from_slice(data);
    pad8(out);
}

fn encode_matrix(name: &str, value: &MatValue) -> Vec<u8> {
    let mut body = Vec::new();
    let (class, dims): (u8, Vec<usize>) = match value {
        MatValue::Numeric { dims, .. } => (6, dims.clone()),
        MatValue::Char(s) => (MX_CHAR, vec![1, s.chars().count()]),
        MatValue::Struct { dims, .. } => (MX_STRUCT, dims.clone()),
        MatValue::Cell { dims, .. } => (MX_CELL, dims.clone()),
        MatValue::Unsupported(_) => (6, vec![0, 0]),
    };
    // array flags
    let flags = [class as u32, 0u32];
    let mut fb = Vec::new();
    fb.extend_from_slice(&flags[0].to_le_bytes());
    fb.extend_from_slice(&flags[1].to_le_bytes());
    write_element(&mut body, MI_UINT32, &fb);
    // dimensions
    let mut db = Vec::new();
    for d in &dims {
        db.extend_from_slice(&(*d as i32).to_le_bytes());
    }
    write_element(&mut body, MI_INT32, &db);
    // name
    write_element(&mut body, MI_INT8, name.as_bytes());
    // payload
    match value {
        MatValue::Numeric { data, .. } => {
            let mut nb = Vec::with_capacity(data.len() * 8);
            for v in data {
                nb.extend_from_slice(&v.to_le_bytes());
            }
            write_element(&mut body, MI_DOUBLE, &nb);
        }
        MatValue::Char(s) => {
            let mut cb = Vec::new();
            for u in s.encode_utf16() {
                cb.extend_from_slice(&u.to_le_bytes());
            }
            write_element(&mut body, MI_UINT16, &cb);
        }
        MatValue::Struct { dims, fields } => {
            let name_len: usize = 32;
            write_element(&mut body, MI_INT32, &(name_len as i32).to_le_bytes());
            let mut names = Vec::new();
            for fname in fields.keys() {
                let mut padded = fname.as_bytes().to_vec();
                padded.resize(name_len, 0);
                names.extend_from_slice(&padded);
            }
            write_element(&mut body, MI_INT8, &names);
            let count: usize = dims.iter().product();
            let empty = MatValue::Numeric { dims: vec![0, 0], data: Vec::new() };
            for elem in 0..count {
                for values in fields.values() {
                    let inner = encode_matrix("", values.get(elem).unwrap_or(&empty));
                    write_element(&mut body, MI_MATRIX, &inner);
                }
            }
        }
        MatValue::Cell { values, .. } => {
            for v in values {
                let inner = encode_matrix("", v);
                write_element(&mut body, MI_MATRIX, &inner);
            }
        }
        MatValue::Unsupported(_) => {}
    }
    body
}

/// Serialize variables into a level-5 MAT container (uncompressed).
pub fn write_mat(path: &Path, vars: &[(&str, &MatValue)]) -> Result<()> {
    let mut out = Vec::new();
    let mut header = vec![0u8; 128];
    let text = b"MATLAB 5.0 MAT-file (udabench fixture writer)";
    header[..text.len()].copy_from_slice(text);
    header[124] = 0x00;
    header[125] = 0x01; // version 0x0100
    header[126] = b'I';
    header[127] = b'M';
    out.extend_from_slice(&header);
    for (name, value) in vars {
        let body = encode_matrix(name, value);
        write_element(&mut out, MI_MATRIX, &body);
    }
    std::fs::write(path, out)?;
    Ok(())
}
