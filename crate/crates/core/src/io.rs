//! Binary and text formats shared by every stage.
//!
//! Map files: magic `MRFM`, version `u32`, dtype tag `u8` (0 = f64, 1 = i32),
//! rows `u32`, cols `u32`, then the row-major little-endian payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

pub const MAP_MAGIC: &[u8; 4] = b"MRFM";
pub const MAP_VERSION: u32 = 1;
const DTYPE_F64: u8 = 0;
const DTYPE_I32: u8 = 1;

/// Little-endian append-only byte buffer.
#[derive(Default)]
pub(crate) struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Cursor over a byte slice; every read reports truncation as a format error.
pub(crate) struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
    context: String,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8], context: impl Into<String>) -> Self {
        Self {
            data,
            pos: 0,
            context: context.into(),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::format(
                self.context.clone(),
                format!("truncated payload at byte {}", self.pos),
            ));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(Error::format(
                self.context.clone(),
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Length-checked element count for a payload of `n` items of `size` bytes.
    pub fn expect_items(&self, n: usize, size: usize) -> Result<()> {
        let need = n.checked_mul(size).ok_or_else(|| {
            Error::format(self.context.clone(), "payload size overflows".to_string())
        })?;
        if self.data.len() - self.pos < need {
            return Err(Error::format(
                self.context.clone(),
                format!(
                    "truncated payload: need {need} bytes, have {}",
                    self.data.len() - self.pos
                ),
            ));
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::format(
                self.context.clone(),
                format!("{} trailing bytes", self.data.len() - self.pos),
            ));
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    Ok(fs::read(path)?)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

fn map_header(w: &mut ByteWriter, dtype: u8, rows: usize, cols: usize) {
    w.bytes(MAP_MAGIC);
    w.u32(MAP_VERSION);
    w.u8(dtype);
    w.u32(rows as u32);
    w.u32(cols as u32);
}

fn read_map_header(r: &mut ByteReader, dtype: u8) -> Result<(usize, usize)> {
    r.magic(MAP_MAGIC)?;
    let version = r.u32()?;
    if version != MAP_VERSION {
        return Err(Error::format("map", format!("unsupported version {version}")));
    }
    let tag = r.u8()?;
    if tag != dtype {
        return Err(Error::format(
            "map",
            format!("dtype tag {tag}, expected {dtype}"),
        ));
    }
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    Ok((rows, cols))
}

pub fn encode_real_map(map: &Array2<f64>) -> Vec<u8> {
    let mut w = ByteWriter::default();
    map_header(&mut w, DTYPE_F64, map.nrows(), map.ncols());
    for &v in map.iter() {
        w.f64(v);
    }
    w.buf
}

pub fn decode_real_map(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut r = ByteReader::new(bytes, "map");
    let (rows, cols) = read_map_header(&mut r, DTYPE_F64)?;
    r.expect_items(rows * cols, 8)?;
    let data = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}

pub fn encode_int_map(map: &Array2<i32>) -> Vec<u8> {
    let mut w = ByteWriter::default();
    map_header(&mut w, DTYPE_I32, map.nrows(), map.ncols());
    for &v in map.iter() {
        w.i32(v);
    }
    w.buf
}

pub fn decode_int_map(bytes: &[u8]) -> Result<Array2<i32>> {
    let mut r = ByteReader::new(bytes, "map");
    let (rows, cols) = read_map_header(&mut r, DTYPE_I32)?;
    r.expect_items(rows * cols, 4)?;
    let data = (0..rows * cols).map(|_| r.i32()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}

pub fn write_real_map(path: impl AsRef<Path>, map: &Array2<f64>) -> Result<()> {
    write_file(path.as_ref(), &encode_real_map(map))
}

pub fn read_real_map(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    decode_real_map(&read_file(path.as_ref())?)
}

pub fn write_int_map(path: impl AsRef<Path>, map: &Array2<i32>) -> Result<()> {
    write_file(path.as_ref(), &encode_int_map(map))
}

pub fn read_int_map(path: impl AsRef<Path>) -> Result<Array2<i32>> {
    decode_int_map(&read_file(path.as_ref())?)
}

/// Affine display window shared by every rendering of the same quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplayRange {
    pub lo: f64,
    pub hi: f64,
}

impl DisplayRange {
    /// Window spanning the min/max of a reference (ground-truth) map.
    pub fn of(map: &Array2<f64>) -> Self {
        let lo = map.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = map.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self { lo, hi }
    }

    pub fn quantize(&self, v: f64) -> u16 {
        if self.hi <= self.lo {
            return 0;
        }
        let s = ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0);
        (s * 65535.0).round() as u16
    }
}

/// 16-bit binary PGM (P5, big-endian samples, row-major).
pub fn encode_pgm(map: &Array2<f64>, range: DisplayRange) -> Result<Vec<u8>> {
    if map.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("map contains non-finite values".into()));
    }
    let mut out = format!("P5\n{} {}\n65535\n", map.ncols(), map.nrows()).into_bytes();
    for &v in map.iter() {
        out.extend_from_slice(&range.quantize(v).to_be_bytes());
    }
    Ok(out)
}

pub fn export_pgm(map: &Array2<f64>, range: DisplayRange, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_pgm(map, range)?)
}

/// Reads back a 16-bit PGM produced by [`export_pgm`].
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Array2<u16>> {
    let bytes = read_file(path.as_ref())?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("pgm", "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(Error::format("pgm", "expected 16-bit P5"));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::format("pgm", format!("bad dimension {s}")))
    };
    let (cols, rows) = (parse(&fields[1])?, parse(&fields[2])?);
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != rows * cols * 2 {
        return Err(Error::format("pgm", "payload size mismatch"));
    }
    let data = payload
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}
