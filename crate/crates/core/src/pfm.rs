//! Portable float map (PFM) reading and writing.
//!
//! Samples are kept in file order: the first scanline in the file is the
//! bottom row of the picture.

use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    /// 1 for `Pf`, 3 for `PF`.
    pub channels: usize,
    /// `width·height·channels` samples, bottom scanline first.
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PfmError {
    pub offset: usize,
    pub msg: String,
}

impl fmt::Display for PfmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "byte {}: {}", self.offset, self.msg)
    }
}

impl std::error::Error for PfmError {}

fn err(offset: usize, msg: impl Into<String>) -> PfmError {
    PfmError { offset, msg: msg.into() }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn token(&mut self, what: &str) -> Result<(usize, &str), PfmError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(err(start, format!("expected {what}, found end of file")));
        }
        let s = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| err(start, format!("{what} is not ASCII")))?;
        Ok((start, s))
    }
}

impl Pfm {
    pub fn parse(bytes: &[u8]) -> Result<Pfm, PfmError> {
        let mut c = Cursor { bytes, pos: 0 };
        let (off, magic) = c.token("magic")?;
        let channels = match magic {
            "PF" => 3,
            "Pf" => 1,
            other => return Err(err(off, format!("bad magic {other:?}, expected \"PF\" or \"Pf\""))),
        };
        let (off, w) = c.token("width")?;
        let width: usize = w.parse().map_err(|_| err(off, format!("bad width {w:?}")))?;
        let (off, h) = c.token("height")?;
        let height: usize = h.parse().map_err(|_| err(off, format!("bad height {h:?}")))?;
        let (off, s) = c.token("scale")?;
        let scale: f64 = s.parse().map_err(|_| err(off, format!("bad scale {s:?}")))?;
        if width == 0 || height == 0 {
            return Err(err(off, "zero-sized image"));
        }
        if scale == 0.0 || !scale.is_finite() {
            return Err(err(off, "scale must be a nonzero finite number"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        if c.pos >= bytes.len() || !bytes[c.pos].is_ascii_whitespace() {
            return Err(err(c.pos, "missing separator after scale"));
        }
        let start = c.pos + 1;
        let n = width * height * channels;
        let need = n * 4;
        let have = bytes.len() - start;
        if have < need {
            return Err(err(bytes.len(), format!("raster truncated: need {need} bytes, have {have}")));
        }
        let little = scale < 0.0;
        let data = bytes[start..start + need]
            .chunks_exact(4)
            .map(|b| {
                let b = [b[0], b[1], b[2], b[3]];
                if little {
                    f32::from_le_bytes(b)
                } else {
                    f32::from_be_bytes(b)
                }
            })
            .collect();
        Ok(Pfm { width, height, channels, data })
    }

    /// Little-endian encoding with scale `-1`.
    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "PF" } else { "Pf" };
        let mut out = format!("{magic}\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        out.reserve(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Sample `(x, row)` with `row` counted from the bottom (file order).
    pub fn get(&self, x: usize, row_from_bottom: usize, ch: usize) -> f32 {
        self.data[(row_from_bottom * self.width + x) * self.channels + ch]
    }

    /// Sample `(x, y)` with `y` counted from the top of the picture.
    pub fn get_top_down(&self, x: usize, y: usize, ch: usize) -> f32 {
        self.get(x, self.height - 1 - y, ch)
    }
}
