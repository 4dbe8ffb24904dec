//! Minimal NPY reader/writer for the unsigned 8-bit C-order arrays the
//! MedMNIST archives contain.
//!
//! The header is parsed by hand against the NPY format: 6-byte magic, a
//! (major, minor) version pair, a little-endian header length (u16 for
//! version 1, u32 for version 2), then an ASCII python-dict literal with the
//! keys descr, fortran_order and shape. Errors carry the absolute byte
//! offset where parsing stopped.

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

impl NpyArray {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn fail(offset: usize, message: impl Into<String>) -> Error {
    Error::Npy { offset, message: message.into() }
}

/// Parses one NPY byte stream into shape plus raw u8 data.
pub fn parse_npy(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 8 {
        return Err(fail(bytes.len(), "file shorter than the fixed preamble"));
    }
    if &bytes[..6] != MAGIC {
        return Err(fail(0, format!("bad magic {:02x?}, expected \\x93NUMPY", &bytes[..6])));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, header_start) = match major {
        1 => {
            if bytes.len() < 10 {
                return Err(fail(8, "truncated version-1 header length"));
            }
            (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10)
        }
        2 => {
            if bytes.len() < 12 {
                return Err(fail(8, "truncated version-2 header length"));
            }
            (u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize, 12)
        }
        _ => return Err(fail(6, format!("unsupported NPY version {major}.{minor}"))),
    };
    let data_start = header_start + header_len;
    if bytes.len() < data_start {
        return Err(fail(bytes.len(), "header extends past end of file"));
    }
    let header = std::str::from_utf8(&bytes[header_start..data_start])
        .map_err(|e| fail(header_start + e.valid_up_to(), "header is not ASCII"))?;

    let descr = dict_str_value(header, "descr", header_start)?;
    if descr != "|u1" && descr != "<u1" {
        return Err(fail(
            header_start,
            format!("dtype {descr:?} unsupported, need unsigned 8-bit ('|u1' or '<u1')"),
        ));
    }
    let fortran = dict_raw_value(header, "fortran_order", header_start)?;
    match fortran.0.as_str() {
        "False" => {}
        "True" => {
            return Err(fail(header_start + fortran.1, "Fortran-order arrays are not supported"))
        }
        other => {
            return Err(fail(header_start + fortran.1, format!("bad fortran_order value {other:?}")))
        }
    }
    let (shape_text, shape_off) = dict_raw_value(header, "shape", header_start)?;
    let shape = parse_shape(&shape_text)
        .ok_or_else(|| fail(header_start + shape_off, format!("bad shape tuple {shape_text:?}")))?;

    let expected: usize = shape.iter().product();
    let available = bytes.len() - data_start;
    if available != expected {
        return Err(fail(
            data_start + available.min(expected),
            format!("data length {available} does not match shape {shape:?} ({expected} bytes)"),
        ));
    }
    Ok(NpyArray { shape, data: bytes[data_start..].to_vec() })
}

/// Finds `'key':` in the header dict and returns (raw value text, offset of
/// the value within the header).
fn dict_raw_value(header: &str, key: &str, base: usize) -> Result<(String, usize)> {
    let needle = format!("'{key}':");
    let pos = header
        .find(&needle)
        .ok_or_else(|| fail(base, format!("header dict is missing key '{key}'")))?;
    let rest = &header[pos + needle.len()..];
    let skipped = rest.len() - rest.trim_start().len();
    let value_start = pos + needle.len() + skipped;
    let value = &header[value_start..];
    // value ends at the first comma or brace that is not inside parentheses
    let mut depth = 0usize;
    let mut end = value.len();
    for (i, ch) in value.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' | '}' if depth == 0 => {
                end = i;
                break;
            }
            _ => {}
        }
    }
    Ok((value[..end].trim().to_string(), value_start))
}

fn dict_str_value(header: &str, key: &str, base: usize) -> Result<String> {
    let (raw, off) = dict_raw_value(header, key, base)?;
    let trimmed = raw.trim_matches(|c| c == '\'' || c == '"');
    if trimmed.len() + 2 != raw.len() {
        return Err(fail(base + off, format!("expected a quoted string for '{key}', got {raw:?}")));
    }
    Ok(trimmed.to_string())
}

fn parse_shape(text: &str) -> Option<Vec<usize>> {
    let inner = text.strip_prefix('(')?.strip_suffix(')')?;
    let mut shape = Vec::new();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue; // trailing comma of 1-tuples
        }
        shape.push(part.parse().ok()?);
    }
    Some(shape)
}

/// Serializes a u8 array as NPY version 1.0 with the conventional 64-byte
/// header alignment.
pub fn write_npy(shape: &[usize], data: &[u8]) -> Result<Vec<u8>> {
    let expected: usize = shape.iter().product();
    if data.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: data.len() });
    }
    let shape_text = match shape.len() {
        1 => format!("({},)", shape[0]),
        _ => format!("({})", shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")),
    };
    let mut header =
        format!("{{'descr': '|u1', 'fortran_order': False, 'shape': {shape_text}, }}");
    let unpadded = 10 + header.len() + 1;
    header.push_str(&" ".repeat(unpadded.div_ceil(64) * 64 - unpadded));
    header.push('\n');

    let mut out = Vec::with_capacity(10 + header.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(data);
    Ok(out)
}
