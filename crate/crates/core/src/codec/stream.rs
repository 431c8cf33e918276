//! Entropy-coded integer streams.
//!
//! Values are split into a token and raw low bits: values below 16 are their
//! own token; larger values with top bit `n` send `n` and the bit below it
//! in the token, the remaining `n - 1` bits raw. Tokens go through rANS.
//!
//! Layout: nothing for an empty stream; otherwise a mode byte, then either
//! the repeated value (mode 0) or the frequency table, the rANS payload and
//! the raw bits (mode 1).

use super::bits::{unzigzag, zigzag, BitReader, BitWriter, ByteReader, ByteWriter};
use super::rans::{self, FrequencyTable, MAX_ALPHABET};
use super::CodecError;

const DIRECT: u64 = 16;
const MODE_CONSTANT: u8 = 0;
const MODE_ENTROPY: u8 = 1;
/// Tokens needed for any `u64`.
const TOKENS: usize = 16 + 2 * 60;

#[inline]
fn split(v: u64) -> (u32, u64, u32) {
    if v < DIRECT {
        return (v as u32, 0, 0);
    }
    let n = 63 - v.leading_zeros();
    let token = 16 + (n - 4) * 2 + ((v >> (n - 1)) & 1) as u32;
    let extra_bits = n - 1;
    (token, v & ((1u64 << extra_bits) - 1), extra_bits)
}

#[inline]
fn extra_bits(token: u32) -> u32 {
    if u64::from(token) < DIRECT {
        0
    } else {
        (token - 16) / 2 + 3
    }
}

#[inline]
fn join(token: u32, extra: u64) -> u64 {
    if u64::from(token) < DIRECT {
        return u64::from(token);
    }
    let n = (token - 16) / 2 + 4;
    let mid = u64::from((token - 16) & 1);
    (1u64 << n) | (mid << (n - 1)) | extra
}

pub fn encode_unsigned(values: &[u64]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    let Some(&first) = values.first() else {
        return w.buf;
    };
    if values.iter().all(|&v| v == first) {
        w.u8(MODE_CONSTANT);
        w.varint(first);
        return w.buf;
    }
    let mut tokens = Vec::with_capacity(values.len());
    let mut raw = BitWriter::default();
    let mut counts = vec![0u64; TOKENS];
    for &v in values {
        let (t, extra, bits) = split(v);
        tokens.push(t);
        counts[t as usize] += 1;
        raw.write(extra, bits);
    }
    let table = FrequencyTable::from_counts(&counts).expect("token alphabet fits the table");
    w.u8(MODE_ENTROPY);
    table.write(&mut w);
    w.short_blob(&rans::encode(&tokens, &table));
    w.bytes(&raw.finish());
    w.buf
}

/// Decodes `count` values from one whole stream.
pub fn decode_unsigned(bytes: &[u8], count: usize) -> Result<Vec<u64>, CodecError> {
    read_unsigned(&mut ByteReader::new(bytes, 0), count)
}

/// Decodes `count` values; `data` must be exactly one encoded stream.
pub(crate) fn read_unsigned(data: &mut ByteReader, count: usize) -> Result<Vec<u64>, CodecError> {
    if count == 0 {
        data.finish("empty stream")?;
        return Ok(Vec::new());
    }
    let offset = data.offset();
    if count > super::MAX_ELEMENTS {
        return Err(CodecError::Corrupt {
            offset,
            reason: "stream length out of range",
        });
    }
    match data.u8("stream mode")? {
        MODE_CONSTANT => {
            let v = data.varint("stream value")?;
            data.finish("constant stream")?;
            Ok(vec![v; count])
        }
        MODE_ENTROPY => {
            let table = FrequencyTable::read(data, TOKENS)?;
            let mut payload = data.short_blob("entropy payload")?;
            let base = payload.offset();
            let bytes = payload.take(payload.remaining(), "entropy payload")?;
            let tokens = rans::decode(bytes, base, count, &table)?;
            let raw_base = data.offset();
            let raw_bytes = data.take(data.remaining(), "raw bits")?;
            let mut raw = BitReader::new(raw_bytes, raw_base);
            let mut out = Vec::with_capacity(count);
            for t in tokens {
                out.push(join(t, raw.read(extra_bits(t))?));
            }
            raw.finish()?;
            Ok(out)
        }
        _ => Err(CodecError::Corrupt {
            offset,
            reason: "unknown stream mode",
        }),
    }
}

pub fn encode_signed(values: &[i64]) -> Vec<u8> {
    let z: Vec<u64> = values.iter().map(|&v| zigzag(v)).collect();
    encode_unsigned(&z)
}

pub fn decode_signed(bytes: &[u8], count: usize) -> Result<Vec<i64>, CodecError> {
    read_signed(&mut ByteReader::new(bytes, 0), count)
}

pub(crate) fn read_signed(data: &mut ByteReader, count: usize) -> Result<Vec<i64>, CodecError> {
    Ok(read_unsigned(data, count)?.into_iter().map(unzigzag).collect())
}

/// Symbols below `alphabet` (at most 4096), each coded directly through
/// one static table.
pub fn encode_symbols(symbols: &[u32], alphabet: usize) -> Result<Vec<u8>, CodecError> {
    if alphabet == 0 || alphabet > MAX_ALPHABET {
        return Err(CodecError::InvalidParams(format!("alphabet of {alphabet} symbols")));
    }
    if let Some(&s) = symbols.iter().find(|&&s| s as usize >= alphabet) {
        return Err(CodecError::InvalidParams(format!("symbol {s} outside an alphabet of {alphabet}")));
    }
    Ok(symbol_stream(symbols, alphabet))
}

pub(crate) fn symbol_stream(symbols: &[u32], alphabet: usize) -> Vec<u8> {
    let mut w = ByteWriter::new();
    let Some(&first) = symbols.first() else {
        return w.buf;
    };
    if symbols.iter().all(|&s| s == first) {
        w.u8(MODE_CONSTANT);
        w.varint(u64::from(first));
        return w.buf;
    }
    let mut counts = vec![0u64; alphabet];
    for &s in symbols {
        counts[s as usize] += 1;
    }
    let table = FrequencyTable::from_counts(&counts).expect("alphabet fits the table");
    w.u8(MODE_ENTROPY);
    table.write(&mut w);
    w.short_blob(&rans::encode(symbols, &table));
    w.buf
}

pub fn decode_symbols(bytes: &[u8], count: usize, alphabet: usize) -> Result<Vec<u32>, CodecError> {
    if alphabet == 0 || alphabet > MAX_ALPHABET {
        return Err(CodecError::InvalidParams(format!("alphabet of {alphabet} symbols")));
    }
    read_symbols(&mut ByteReader::new(bytes, 0), count, alphabet)
}

pub(crate) fn read_symbols(data: &mut ByteReader, count: usize, alphabet: usize) -> Result<Vec<u32>, CodecError> {
    if count == 0 {
        data.finish("empty stream")?;
        return Ok(Vec::new());
    }
    let offset = data.offset();
    let corrupt = |reason| CodecError::Corrupt { offset, reason };
    if count > super::MAX_ELEMENTS {
        return Err(corrupt("stream length out of range"));
    }
    match data.u8("stream mode")? {
        MODE_CONSTANT => {
            let v = data.bounded(alphabet as u64 - 1, "symbol out of range")?;
            data.finish("constant stream")?;
            Ok(vec![v as u32; count])
        }
        MODE_ENTROPY => {
            let table = FrequencyTable::read(data, alphabet)?;
            let mut payload = data.short_blob("entropy payload")?;
            let base = payload.offset();
            let bytes = payload.take(payload.remaining(), "entropy payload")?;
            let out = rans::decode(bytes, base, count, &table)?;
            data.finish("symbol stream")?;
            Ok(out)
        }
        _ => Err(corrupt("unknown stream mode")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn token_split_covers_boundaries() {
        for v in [0u64, 15, 16, 17, 23, 24, 31, 32, 1000, u32::MAX as u64, u64::MAX - 1, u64::MAX] {
            let (t, extra, bits) = split(v);
            assert!((t as usize) < TOKENS);
            assert_eq!(bits, extra_bits(t));
            assert_eq!(join(t, extra), v, "{v}");
        }
        assert_eq!(split(16).0, 16);
        assert_eq!(split(24).0, 17);
        assert_eq!(split(32).0, 18);
    }

    #[test]
    fn constant_stream_is_small() {
        let bytes = encode_unsigned(&[7; 10_000]);
        assert!(bytes.len() <= 8);
        assert_eq!(decode_unsigned(&bytes, 10_000).unwrap(), vec![7; 10_000]);
    }

    #[test]
    fn empty_stream_is_empty() {
        assert!(encode_unsigned(&[]).is_empty());
        assert!(decode_unsigned(&[], 0).unwrap().is_empty());
    }

    #[test]
    fn huge_claimed_count_is_rejected() {
        let bytes = encode_unsigned(&[1, 2, 3]);
        assert!(decode_unsigned(&bytes, usize::MAX / 2).is_err());
    }

    proptest! {
        #[test]
        fn signed_streams_roundtrip(values in prop::collection::vec(any::<i64>(), 0..300)) {
            let bytes = encode_signed(&values);
            prop_assert_eq!(decode_signed(&bytes, values.len()).unwrap(), values);
        }

        #[test]
        fn small_unsigned_streams_roundtrip(values in prop::collection::vec(0u64..40, 0..500)) {
            let bytes = encode_unsigned(&values);
            prop_assert_eq!(decode_unsigned(&bytes, values.len()).unwrap(), values);
        }

        #[test]
        fn symbol_streams_roundtrip(values in prop::collection::vec(0u32..7, 0..500)) {
            let bytes = encode_symbols(&values, 7).unwrap();
            prop_assert_eq!(decode_symbols(&bytes, values.len(), 7).unwrap(), values);
        }
    }
}
