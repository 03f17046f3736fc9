//! `MSEQ` motion-sequence files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "MSEQ" | version u32 | frame_width u32 | frame_height u32
//!        | grid_width u32 | grid_height u32 | scale u32 | frame_count u32
//! frame_count × (grid_height × grid_width × [dx f32, dy f32]), row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::motion::{GridGeometry, MotionField};

pub const MAGIC: &[u8; 4] = b"MSEQ";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 7 * 4;

/// Header of an `MSEQ` stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MseqHeader {
    pub geometry: GridGeometry,
    pub frame_count: usize,
}

impl MseqHeader {
    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.geometry;
        let mut out = Vec::with_capacity(HEADER_LEN);
        out.extend_from_slice(MAGIC);
        for v in [
            VERSION as usize,
            g.frame_width,
            g.frame_height,
            g.grid_width,
            g.grid_height,
            g.scale,
            self.frame_count,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out
    }

    pub fn read_from(reader: &mut impl Read, context: &str) -> Result<Self> {
        let mut buf = [0u8; HEADER_LEN];
        reader
            .read_exact(&mut buf)
            .map_err(|e| Error::format(context, format!("truncated header: {e}")))?;
        if &buf[..4] != MAGIC {
            return Err(Error::format(context, "bad magic, expected \"MSEQ\""));
        }
        let word = |i: usize| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        let version = word(0);
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                what: "MSEQ",
                found: version,
                expected: VERSION,
            });
        }
        let geometry = GridGeometry::with_frame(
            word(1) as usize,
            word(2) as usize,
            word(3) as usize,
            word(4) as usize,
            word(5) as usize,
        )
        .map_err(|e| Error::format(context, e.to_string()))?;
        Ok(MseqHeader {
            geometry,
            frame_count: word(6) as usize,
        })
    }
}

/// Serializes a whole sequence into a byte buffer.
pub fn encode(geometry: GridGeometry, fields: &[MotionField]) -> Result<Vec<u8>> {
    let mut out = MseqHeader {
        geometry,
        frame_count: fields.len(),
    }
    .to_bytes();
    out.reserve(fields.len() * geometry.value_count() * 4);
    for f in fields {
        geometry.ensure_same(f.geometry())?;
        encode_field(f, &mut out);
    }
    Ok(out)
}

fn encode_field(f: &MotionField, out: &mut Vec<u8>) {
    for v in f.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn decode(bytes: &[u8]) -> Result<(GridGeometry, Vec<MotionField>)> {
    let mut reader = MseqReader::new(bytes, "<memory>")?;
    let fields = reader.by_ref().collect::<Result<Vec<_>>>()?;
    reader.expect_end()?;
    Ok((reader.header.geometry, fields))
}

pub fn write_file(path: &Path, geometry: GridGeometry, fields: &[MotionField]) -> Result<()> {
    let bytes = encode(geometry, fields)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<(GridGeometry, Vec<MotionField>)> {
    let mut reader = MseqReader::open(path)?;
    let fields = reader.by_ref().collect::<Result<Vec<_>>>()?;
    reader.expect_end()?;
    Ok((reader.header.geometry, fields))
}

/// Incremental reader yielding one field at a time.
pub struct MseqReader<R> {
    inner: R,
    header: MseqHeader,
    remaining: usize,
    context: String,
    buf: Vec<u8>,
}

impl MseqReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        MseqReader::new(BufReader::new(file), &path.display().to_string())
    }
}

impl<R: Read> MseqReader<R> {
    pub fn new(mut inner: R, context: &str) -> Result<Self> {
        let header = MseqHeader::read_from(&mut inner, context)?;
        Ok(MseqReader {
            inner,
            remaining: header.frame_count,
            buf: vec![0u8; header.geometry.value_count() * 4],
            header,
            context: context.to_string(),
        })
    }

    pub fn header(&self) -> &MseqHeader {
        &self.header
    }

    /// Fails if bytes remain after the declared frames.
    pub fn expect_end(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::format(&self.context, "trailing bytes after last frame")),
            Err(e) => Err(Error::format(&self.context, e.to_string())),
        }
    }

    fn read_field(&mut self) -> Result<MotionField> {
        let index = self.header.frame_count - self.remaining;
        self.inner.read_exact(&mut self.buf).map_err(|e| {
            Error::format(
                &self.context,
                format!("truncated payload at frame {index} of {}: {e}", self.header.frame_count),
            )
        })?;
        let data = self
            .buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        MotionField::new(self.header.geometry, data)
            .map_err(|e| Error::format(&self.context, format!("frame {index}: {e}")))
    }
}

impl<R: Read> Iterator for MseqReader<R> {
    type Item = Result<MotionField>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        let field = self.read_field();
        self.remaining = if field.is_ok() { self.remaining - 1 } else { 0 };
        Some(field)
    }
}

/// Incremental writer; the frame count is fixed up front.
pub struct MseqWriter<W: Write> {
    inner: W,
    geometry: GridGeometry,
    expected: usize,
    written: usize,
    buf: Vec<u8>,
}

impl MseqWriter<BufWriter<File>> {
    pub fn create(path: &Path, geometry: GridGeometry, frame_count: usize) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        MseqWriter::new(BufWriter::new(file), geometry, frame_count)
            .map_err(|e| match e {
                Error::Io { source, .. } => Error::io(path, source),
                other => other,
            })
    }
}

impl<W: Write> MseqWriter<W> {
    pub fn new(mut inner: W, geometry: GridGeometry, frame_count: usize) -> Result<Self> {
        let header = MseqHeader {
            geometry,
            frame_count,
        };
        inner
            .write_all(&header.to_bytes())
            .map_err(|e| Error::io("<mseq>", e))?;
        Ok(MseqWriter {
            inner,
            geometry,
            expected: frame_count,
            written: 0,
            buf: Vec::new(),
        })
    }

    pub fn write(&mut self, field: &MotionField) -> Result<()> {
        self.geometry.ensure_same(field.geometry())?;
        if self.written == self.expected {
            return Err(Error::InvalidInput(format!(
                "MSEQ writer declared {} frames",
                self.expected
            )));
        }
        self.buf.clear();
        encode_field(field, &mut self.buf);
        self.inner
            .write_all(&self.buf)
            .map_err(|e| Error::io("<mseq>", e))?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.written != self.expected {
            return Err(Error::InvalidInput(format!(
                "MSEQ writer declared {} frames but received {}",
                self.expected, self.written
            )));
        }
        self.inner.flush().map_err(|e| Error::io("<mseq>", e))?;
        Ok(self.inner)
    }
}
