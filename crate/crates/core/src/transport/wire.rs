//! Little-endian message encoding helpers.

use crate::error::{Error, Result};

#[derive(Default, Debug)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Writer { buf: Vec::with_capacity(n) }
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    /// Length-prefixed (u32) byte string.
    pub fn blob(&mut self, v: &[u8]) -> &mut Self {
        self.u32(v.len() as u32).bytes(v)
    }

    pub fn buf_mut(&mut self) -> &mut Vec<u8> {
        &mut self.buf
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::decode(format!("need {n} bytes at offset {}, have {}", self.pos, self.buf.len() - self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn blob(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    /// Advance past bytes consumed by an external parser.
    pub fn skip(&mut self, n: usize) -> Result<()> {
        self.take(n).map(|_| ())
    }

    pub fn remaining(&self) -> &'a [u8] {
        &self.buf[self.pos..]
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::decode(format!("{} trailing bytes", self.buf.len() - self.pos)))
        }
    }
}

/// Pack values of `width` bits each (LSB first) into a byte string.
pub fn pack_bits(values: &[u64], width: u32) -> Vec<u8> {
    assert!((1..=64).contains(&width));
    let total = values.len() * width as usize;
    let mut out = vec![0u8; total.div_ceil(8)];
    let mut bit = 0usize;
    for &v in values {
        let v = if width == 64 { v } else { v & ((1u64 << width) - 1) };
        let mut remaining = width as usize;
        let mut v = v;
        while remaining > 0 {
            let byte = bit / 8;
            let off = bit % 8;
            let take = (8 - off).min(remaining);
            out[byte] |= ((v & ((1u64 << take) - 1)) as u8) << off;
            v >>= take;
            bit += take;
            remaining -= take;
        }
    }
    out
}

pub fn unpack_bits(bytes: &[u8], width: u32, count: usize) -> Result<Vec<u64>> {
    assert!((1..=64).contains(&width));
    let need = (count * width as usize).div_ceil(8);
    if bytes.len() != need {
        return Err(Error::decode(format!("packed field has {} bytes, expected {need}", bytes.len())));
    }
    let mut out = Vec::with_capacity(count);
    let mut bit = 0usize;
    for _ in 0..count {
        let mut v = 0u64;
        let mut got = 0usize;
        while got < width as usize {
            let byte = bit / 8;
            let off = bit % 8;
            let take = (8 - off).min(width as usize - got);
            let chunk = (bytes[byte] >> off) as u64 & ((1u64 << take) - 1);
            v |= chunk << got;
            got += take;
            bit += take;
        }
        out.push(v);
    }
    Ok(out)
}

pub fn packed_len(count: usize, width: u32) -> usize {
    (count * width as usize).div_ceil(8)
}
