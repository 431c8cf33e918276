//! Little-endian byte and bit I/O.

use super::CodecError;

#[derive(Debug, Default, Clone)]
pub(crate) struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn varint(&mut self, mut v: u64) {
        while v >= 0x80 {
            self.buf.push((v as u8) | 0x80);
            v >>= 7;
        }
        self.buf.push(v as u8);
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    /// `u64` length followed by the bytes.
    pub fn blob(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.bytes(b);
    }

    /// Varint length followed by the bytes.
    pub fn short_blob(&mut self, b: &[u8]) {
        self.varint(b.len() as u64);
        self.bytes(b);
    }
}

/// Cursor over a byte slice. `base` is the absolute offset of `data[0]`
/// within the enclosing file, so errors point at file positions.
#[derive(Debug, Clone)]
pub(crate) struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8], base: usize) -> Self {
        Self { data, pos: 0, base }
    }

    /// Absolute offset of the next byte.
    pub fn offset(&self) -> usize {
        self.base + self.pos
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CodecError> {
        if n > self.remaining() {
            return Err(CodecError::Truncated {
                offset: self.offset(),
                what,
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self, what: &'static str) -> Result<u8, CodecError> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u16(&mut self, what: &'static str) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub fn u32(&mut self, what: &'static str) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &'static str) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f32(&mut self, what: &'static str) -> Result<f32, CodecError> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn varint(&mut self, what: &'static str) -> Result<u64, CodecError> {
        let start = self.offset();
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.u8(what)?;
            let bits = u64::from(b & 0x7f);
            if shift == 63 && bits > 1 {
                break;
            }
            v |= bits << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(CodecError::Corrupt {
            offset: start,
            reason: "varint overflows 64 bits",
        })
    }

    /// Varint that must not exceed `limit`.
    pub fn bounded(&mut self, limit: u64, what: &'static str) -> Result<u64, CodecError> {
        let offset = self.offset();
        let v = self.varint(what)?;
        if v > limit {
            return Err(CodecError::Corrupt {
                offset,
                reason: what,
            });
        }
        Ok(v)
    }

    /// Reads a `u64` length and returns a reader over that many bytes.
    pub fn blob(&mut self, what: &'static str) -> Result<ByteReader<'a>, CodecError> {
        let len = self.u64(what)?;
        let base = self.offset();
        let len = usize::try_from(len).map_err(|_| CodecError::Truncated { offset: base, what })?;
        Ok(ByteReader::new(self.take(len, what)?, base))
    }

    pub fn short_blob(&mut self, what: &'static str) -> Result<ByteReader<'a>, CodecError> {
        let len = self.varint(what)?;
        let base = self.offset();
        let len = usize::try_from(len).map_err(|_| CodecError::Truncated { offset: base, what })?;
        Ok(ByteReader::new(self.take(len, what)?, base))
    }

    /// Fails unless every byte was consumed.
    pub fn finish(&self, what: &'static str) -> Result<(), CodecError> {
        if self.remaining() != 0 {
            return Err(CodecError::TrailingBytes {
                offset: self.offset(),
                what,
            });
        }
        Ok(())
    }
}

/// LSB-first bit packer.
#[derive(Debug, Default)]
pub(crate) struct BitWriter {
    buf: Vec<u8>,
    acc: u64,
    n: u32,
}

impl BitWriter {
    /// Appends the low `bits` bits of `v` (`bits <= 64`).
    pub fn write(&mut self, v: u64, bits: u32) {
        if bits == 0 {
            return;
        }
        if bits > 32 {
            self.write(v & 0xffff_ffff, 32);
            self.write(v >> 32, bits - 32);
            return;
        }
        self.acc |= (v & ((1u64 << bits) - 1)) << self.n;
        self.n += bits;
        while self.n >= 8 {
            self.buf.push(self.acc as u8);
            self.acc >>= 8;
            self.n -= 8;
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        if self.n > 0 {
            self.buf.push(self.acc as u8);
        }
        self.buf
    }
}

#[derive(Debug)]
pub(crate) struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u64,
    n: u32,
    base: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8], base: usize) -> Self {
        Self {
            data,
            pos: 0,
            acc: 0,
            n: 0,
            base,
        }
    }

    pub fn read(&mut self, bits: u32) -> Result<u64, CodecError> {
        if bits == 0 {
            return Ok(0);
        }
        if bits > 32 {
            let lo = self.read(32)?;
            let hi = self.read(bits - 32)?;
            return Ok(lo | (hi << 32));
        }
        while self.n < bits {
            let Some(&b) = self.data.get(self.pos) else {
                return Err(CodecError::Truncated {
                    offset: self.base + self.pos,
                    what: "raw bits",
                });
            };
            self.acc |= u64::from(b) << self.n;
            self.pos += 1;
            self.n += 8;
        }
        let v = self.acc & ((1u64 << bits) - 1);
        self.acc >>= bits;
        self.n -= bits;
        Ok(v)
    }

    /// Fails if whole unread bytes remain or the padding bits are not zero.
    pub fn finish(&self) -> Result<(), CodecError> {
        if self.pos != self.data.len() || self.acc != 0 {
            return Err(CodecError::Corrupt {
                offset: self.base + self.pos,
                reason: "unused raw bits",
            });
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

#[inline]
pub(crate) fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn varints_roundtrip() {
        let values = [0u64, 1, 127, 128, 300, u32::MAX as u64, u64::MAX];
        let mut w = ByteWriter::new();
        for &v in &values {
            w.varint(v);
        }
        let mut r = ByteReader::new(&w.buf, 0);
        for &v in &values {
            assert_eq!(r.varint("v").unwrap(), v);
        }
        r.finish("end").unwrap();
    }

    #[test]
    fn overlong_varint_is_rejected() {
        let bytes = [0xffu8; 11];
        assert!(ByteReader::new(&bytes, 0).varint("v").is_err());
    }

    #[test]
    fn bits_roundtrip() {
        let items = [(5u64, 3u32), (0, 0), (1, 1), (u64::MAX, 64), (0x1234_5678_9abc, 47), (3, 2)];
        let mut w = BitWriter::default();
        for &(v, b) in &items {
            w.write(v, b);
        }
        let bytes = w.finish();
        let mut r = BitReader::new(&bytes, 0);
        for &(v, b) in &items {
            let mask = if b == 64 { u64::MAX } else { (1u64 << b) - 1 };
            assert_eq!(r.read(b).unwrap(), v & mask);
        }
        r.finish().unwrap();
    }

    #[test]
    fn zigzag_roundtrip() {
        for v in [0i64, 1, -1, 2, -2, i64::MAX, i64::MIN, 123_456, -987_654] {
            assert_eq!(unzigzag(zigzag(v)), v);
        }
        assert_eq!(zigzag(-1), 1);
        assert_eq!(zigzag(1), 2);
    }
}
