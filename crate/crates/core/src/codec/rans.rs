//! Static-table rANS: 32-bit state, 16-bit renormalization, 12-bit
//! quantized frequencies. The table is serialized ahead of the payload.

use super::bits::{ByteReader, ByteWriter};
use super::CodecError;

pub(crate) const PROB_BITS: u32 = 12;
pub(crate) const PROB_SCALE: u32 = 1 << PROB_BITS;
const LOWER: u32 = 1 << 16;

/// Largest alphabet a table can describe (every symbol needs frequency >= 1).
pub(crate) const MAX_ALPHABET: usize = PROB_SCALE as usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct FrequencyTable {
    freq: Vec<u32>,
    start: Vec<u32>,
}

impl FrequencyTable {
    fn from_freqs(freq: Vec<u32>) -> Self {
        let mut start = Vec::with_capacity(freq.len());
        let mut acc = 0;
        for &f in &freq {
            start.push(acc);
            acc += f;
        }
        debug_assert_eq!(acc, PROB_SCALE);
        Self { freq, start }
    }

    /// Quantizes symbol counts to frequencies summing to `PROB_SCALE`, keeping
    /// every used symbol at frequency >= 1. Starts from proportional
    /// rounding, then moves single units where they cost the fewest bits.
    pub fn from_counts(counts: &[u64]) -> Option<Self> {
        let used = counts.iter().filter(|&&c| c > 0).count();
        if used == 0 || used > MAX_ALPHABET {
            return None;
        }
        let total: u64 = counts.iter().sum();
        let scale = f64::from(PROB_SCALE);
        let mut freq: Vec<u32> = counts
            .iter()
            .map(|&c| {
                if c == 0 {
                    0
                } else {
                    ((c as f64 * scale / total as f64).floor() as u32).max(1)
                }
            })
            .collect();
        let mut sum: i64 = freq.iter().map(|&f| i64::from(f)).sum();
        let target = i64::from(PROB_SCALE);

        // Gain in coded bits from giving symbol `s` one more unit, and the
        // loss from taking one away.
        let gain = |c: u64, f: u32| c as f64 * ((f as f64 + 1.0) / f as f64).log2();
        let loss = |c: u64, f: u32| c as f64 * (f as f64 / (f as f64 - 1.0)).log2();
        while sum < target {
            let best = (0..freq.len())
                .filter(|&s| counts[s] > 0)
                .max_by(|&a, &b| gain(counts[a], freq[a]).total_cmp(&gain(counts[b], freq[b])))?;
            freq[best] += 1;
            sum += 1;
        }
        while sum > target {
            let best = (0..freq.len())
                .filter(|&s| freq[s] > 1)
                .min_by(|&a, &b| loss(counts[a], freq[a]).total_cmp(&loss(counts[b], freq[b])))?;
            freq[best] -= 1;
            sum -= 1;
        }
        Some(Self::from_freqs(freq))
    }

    #[cfg(test)]
    pub fn freq(&self, s: usize) -> u32 {
        self.freq[s]
    }

    /// Alphabet size, then per symbol its frequency; a zero frequency is
    /// followed by the count of further zeros in the run.
    pub fn write(&self, w: &mut ByteWriter) {
        let n = self.freq.iter().rposition(|&f| f > 0).map_or(0, |i| i + 1);
        w.varint(n as u64);
        let mut s = 0;
        while s < n {
            let f = self.freq[s];
            w.varint(u64::from(f));
            s += 1;
            if f == 0 {
                let run = self.freq[s..n].iter().take_while(|&&f| f == 0).count();
                w.varint(run as u64);
                s += run;
            }
        }
    }

    pub fn read(r: &mut ByteReader, max_alphabet: usize) -> Result<Self, CodecError> {
        let offset = r.offset();
        let corrupt = |reason| CodecError::Corrupt { offset, reason };
        let n = r.bounded(max_alphabet as u64, "frequency table size")? as usize;
        let mut freq = Vec::with_capacity(n);
        let mut sum = 0u64;
        while freq.len() < n {
            let f = r.bounded(u64::from(PROB_SCALE), "symbol frequency")?;
            freq.push(f as u32);
            sum += f;
            if f == 0 {
                let run = r.bounded((n - freq.len()) as u64, "zero run")? as usize;
                freq.resize(freq.len() + run, 0);
            }
        }
        if sum != u64::from(PROB_SCALE) {
            return Err(corrupt("frequencies do not sum to the table scale"));
        }
        Ok(Self::from_freqs(freq))
    }

    fn slot_table(&self) -> Vec<u16> {
        let mut slots = vec![0u16; PROB_SCALE as usize];
        for (s, (&st, &f)) in self.start.iter().zip(&self.freq).enumerate() {
            slots[st as usize..(st + f) as usize].fill(s as u16);
        }
        slots
    }
}

/// Encodes `symbols` (each `< table.alphabet()` with nonzero frequency).
/// Output: final state as `u32`, then the 16-bit words in decode order.
pub(crate) fn encode(symbols: &[u32], table: &FrequencyTable) -> Vec<u8> {
    let mut words: Vec<u16> = Vec::with_capacity(symbols.len() / 2 + 2);
    let mut x: u32 = LOWER;
    for &s in symbols.iter().rev() {
        let s = s as usize;
        let f = table.freq[s];
        debug_assert!(f > 0, "symbol {s} has no frequency");
        let x_max = ((u64::from(LOWER) >> PROB_BITS) << 16) * u64::from(f);
        while u64::from(x) >= x_max {
            words.push(x as u16);
            x >>= 16;
        }
        x = ((x / f) << PROB_BITS) + (x % f) + table.start[s];
    }
    let mut out = Vec::with_capacity(4 + 2 * words.len());
    out.extend_from_slice(&x.to_le_bytes());
    for w in words.iter().rev() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

/// Decodes exactly `count` symbols and requires the payload to be consumed
/// with the state back at its initial value.
pub(crate) fn decode(payload: &[u8], base: usize, count: usize, table: &FrequencyTable) -> Result<Vec<u32>, CodecError> {
    let corrupt = |offset, reason| CodecError::Corrupt { offset, reason };
    if payload.len() < 4 || !payload.len().is_multiple_of(2) {
        return Err(corrupt(base, "entropy payload has an invalid length"));
    }
    let slots = table.slot_table();
    let mut x = u32::from_le_bytes(payload[..4].try_into().unwrap());
    let mut pos = 4;
    let mut out = Vec::with_capacity(count.min(payload.len() * 8));
    for _ in 0..count {
        if x < LOWER {
            return Err(corrupt(base + pos, "entropy state out of range"));
        }
        let slot = x & (PROB_SCALE - 1);
        let s = slots[slot as usize] as usize;
        x = table.freq[s] * (x >> PROB_BITS) + slot - table.start[s];
        while x < LOWER {
            let Some(w) = payload.get(pos..pos + 2) else {
                return Err(CodecError::Truncated {
                    offset: base + pos,
                    what: "entropy payload",
                });
            };
            x = (x << 16) | u32::from(u16::from_le_bytes(w.try_into().unwrap()));
            pos += 2;
        }
        out.push(s as u32);
    }
    if pos != payload.len() || x != LOWER {
        return Err(corrupt(base + pos, "entropy payload does not end cleanly"));
    }
    Ok(out)
}
