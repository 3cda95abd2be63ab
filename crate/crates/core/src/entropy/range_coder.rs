//! Carry-less range coder with 32-bit state and 16-bit probabilities.
//!
//! Each symbol narrows `[low, low + range)` to the exact sub-interval
//! `[low + (range * c_lo) >> 16, low + (range * c_hi) >> 16)`, so no code
//! space is wasted on rounding. Renormalization emits the top byte whenever
//! it is settled; if it is not settled but `range` has dropped below 2^16,
//! `range` is shortened so that it no longer straddles the byte boundary
//! (the carry-less step). The final flush writes the fewest bytes that pin
//! a value inside the last interval; trailing zero bytes are dropped and the
//! decoder reads zeros past the end.
//!
//! Framed streams are `[u32 length][u32 crc32][payload]`, little-endian.

use super::cdf::{CdfTable, PRECISION_BITS};
use crate::error::{Error, Result};

const MASK: u64 = 0xFFFF_FFFF;
const TOP: u64 = 1 << 24;
const BOT: u64 = 1 << 16;

fn split(range: u64, cum: u32) -> u64 {
    (range * cum as u64) >> PRECISION_BITS
}

struct Encoder {
    low: u64,
    range: u64,
    out: Vec<u8>,
}

impl Encoder {
    fn new() -> Self {
        Encoder { low: 0, range: MASK, out: Vec::new() }
    }

    fn encode(&mut self, c_lo: u32, c_hi: u32) {
        let a = split(self.range, c_lo);
        let b = split(self.range, c_hi);
        self.low += a;
        self.range = b - a;
        loop {
            if (self.low ^ (self.low + self.range)) < TOP {
            } else if self.range < BOT {
                self.range = self.low.wrapping_neg() & (BOT - 1);
            } else {
                break;
            }
            self.out.push((self.low >> 24) as u8);
            self.low = (self.low << 8) & MASK;
            self.range <<= 8;
        }
    }

    fn finish(mut self) -> Vec<u8> {
        for k in 0..=4u32 {
            let unit = 1u64 << (32 - 8 * k);
            let v = self.low.div_ceil(unit) * unit;
            if v < self.low + self.range {
                for i in 0..k {
                    self.out.push((v >> (24 - 8 * i)) as u8);
                }
                break;
            }
        }
        while self.out.last() == Some(&0) {
            self.out.pop();
        }
        self.out
    }
}

/// Codes `symbols[i]` with `tables[i]`. Every symbol must lie in its
/// table's alphabet.
pub fn range_encode(symbols: &[i32], tables: &[&CdfTable]) -> Result<Vec<u8>> {
    if symbols.len() != tables.len() {
        return Err(Error::Shape(format!("{} symbols but {} tables", symbols.len(), tables.len())));
    }
    let mut enc = Encoder::new();
    for (&s, t) in symbols.iter().zip(tables) {
        if s < t.min_sym || s > t.max_sym() {
            return Err(Error::Invalid(format!("symbol {s} outside alphabet [{}, {}]", t.min_sym, t.max_sym())));
        }
        let i = (s - t.min_sym) as usize;
        enc.encode(t.cum[i], t.cum[i + 1]);
    }
    Ok(enc.finish())
}

/// Decodes `tables.len()` symbols.
pub fn range_decode(bytes: &[u8], tables: &[&CdfTable]) -> Result<Vec<i32>> {
    let mut pos = 0;
    let mut next = || {
        let b = bytes.get(pos).copied().unwrap_or(0);
        pos += 1;
        b as u64
    };
    let mut code = 0u64;
    for _ in 0..4 {
        code = (code << 8) | next();
    }
    let (mut low, mut range) = (0u64, MASK);
    let mut out = Vec::with_capacity(tables.len());
    for t in tables {
        let d = code.wrapping_sub(low) & MASK;
        if d >= range {
            return Err(Error::Corrupt("range decoder left its interval".into()));
        }
        // Largest s with split(range, cum[s]) <= d.
        let n = t.len();
        let (mut lo, mut hi) = (0usize, n - 1);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if split(range, t.cum[mid]) <= d {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        out.push(t.min_sym + lo as i32);
        let a = split(range, t.cum[lo]);
        let b = split(range, t.cum[lo + 1]);
        low += a;
        range = b - a;
        loop {
            if (low ^ (low + range)) < TOP {
            } else if range < BOT {
                range = low.wrapping_neg() & (BOT - 1);
            } else {
                break;
            }
            low = (low << 8) & MASK;
            range <<= 8;
            code = ((code << 8) | next()) & MASK;
        }
    }
    if pos > bytes.len() + 4 + 4 * tables.len() {
        return Err(Error::Corrupt("range decoder overran its input".into()));
    }
    Ok(out)
}

/// Ideal code length in bits for `symbols` under their tables.
pub fn information_bits(symbols: &[i32], tables: &[&CdfTable]) -> f64 {
    symbols.iter().zip(tables).map(|(&s, t)| -t.probability(s).log2()).sum()
}

/// Frames a payload as `[u32 length][u32 crc32][payload]`.
pub fn write_stream(payload: &[u8], out: &mut Vec<u8>) {
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    out.extend_from_slice(payload);
}

/// Reads one framed stream from the front of `bytes`, verifying the
/// checksum, and returns the payload and the remaining bytes.
pub fn read_stream(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    if bytes.len() < 8 {
        return Err(Error::Corrupt("truncated stream header".into()));
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let crc = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let rest = &bytes[8..];
    if rest.len() < len {
        return Err(Error::Corrupt(format!("stream needs {len} bytes, {} remain", rest.len())));
    }
    let (payload, rest) = rest.split_at(len);
    if crc32fast::hash(payload) != crc {
        return Err(Error::Corrupt("stream checksum mismatch".into()));
    }
    Ok((payload, rest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::cdf::gaussian_tables;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize) -> CdfTable {
        CdfTable::from_pmf(0, &vec![1.0; n]).unwrap()
    }

    #[test]
    fn empty_input_is_empty_stream() {
        let bytes = range_encode(&[], &[]).unwrap();
        assert!(bytes.is_empty());
        assert!(range_decode(&bytes, &[]).unwrap().is_empty());
        let mut framed = Vec::new();
        write_stream(&bytes, &mut framed);
        assert_eq!(framed.len(), 8);
        assert_eq!(read_stream(&framed).unwrap().0, &[] as &[u8]);
    }

    #[test]
    fn uniform_bytes_cost_one_byte_each() {
        let t = uniform(256);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let syms: Vec<i32> = (0..1000).map(|_| rng.gen_range(0..256)).collect();
        let tabs = vec![&t; 1000];
        let bytes = range_encode(&syms, &tabs).unwrap();
        assert!((997..=1003).contains(&bytes.len()), "{}", bytes.len());
        assert_eq!(range_decode(&bytes, &tabs).unwrap(), syms);
    }

    #[test]
    fn fuzz_round_trip_and_overhead() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gauss = gaussian_tables();
        for trial in 0..2000 {
            let n = rng.gen_range(0..200);
            let own: Vec<CdfTable> = (0..4)
                .map(|_| {
                    let k = rng.gen_range(1..40);
                    let pmf: Vec<f64> = (0..k).map(|_| rng.gen::<f64>().powi(4)).collect();
                    CdfTable::from_pmf(rng.gen_range(-20..20), &pmf).unwrap()
                })
                .collect();
            let tabs: Vec<&CdfTable> = (0..n)
                .map(|_| if rng.gen_bool(0.5) { &own[rng.gen_range(0..4)] } else { &gauss[rng.gen_range(0..64)] })
                .collect();
            let syms: Vec<i32> = tabs.iter().map(|t| rng.gen_range(t.min_sym..=t.max_sym())).collect();
            let bytes = range_encode(&syms, &tabs).unwrap();
            assert_eq!(range_decode(&bytes, &tabs).unwrap(), syms, "trial {trial}");
            let ideal = information_bits(&syms, &tabs) / 8.0;
            assert!(bytes.len() as f64 <= ideal + 2.0, "trial {trial}: {} vs {ideal}", bytes.len());
        }
    }

    #[test]
    fn rejects_bad_input() {
        let t = uniform(4);
        assert!(range_encode(&[4], &[&t]).is_err());
        let mut framed = Vec::new();
        write_stream(&[1, 2, 3], &mut framed);
        framed[9] ^= 1;
        assert!(matches!(read_stream(&framed), Err(Error::Corrupt(_))));
        assert!(read_stream(&framed[..10]).is_err());
    }
}
