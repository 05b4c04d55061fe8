//! Binary hash codes: thresholding, bit packing and the codes file.
//!
//! Bit `i` of a code lives in word `i / 64` at position `i % 64`
//! (LSB-first). Bits past the code length are always zero, so XOR plus
//! popcount over whole words gives the Hamming distance directly.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_exact_at, read_u32, read_u64};

pub const CODES_MAGIC: &[u8; 4] = b"WDHC";
pub const CODES_VERSION: u32 = 1;

#[inline]
pub fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HashCode {
    bits: usize,
    words: Vec<u64>,
}

impl HashCode {
    pub fn zeros(bits: usize) -> Self {
        Self {
            bits,
            words: vec![0; words_for(bits)],
        }
    }

    pub fn from_words(bits: usize, words: Vec<u64>) -> Result<Self> {
        if words.len() != words_for(bits) {
            return Err(Error::Shape(format!(
                "{bits} bits need {} words, got {}",
                words_for(bits),
                words.len()
            )));
        }
        if let Some(&last) = words.last() {
            if last & !last_word_mask(bits) != 0 {
                return Err(Error::Format("padding bits are not zero".into()));
            }
        }
        Ok(Self { bits, words })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.bits);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, on: bool) {
        assert!(i < self.bits);
        let mask = 1u64 << (i % 64);
        if on {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }
}

fn last_word_mask(bits: usize) -> u64 {
    match bits % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

pub fn pack(bits: &[bool]) -> HashCode {
    let mut code = HashCode::zeros(bits.len());
    for (i, &b) in bits.iter().enumerate() {
        if b {
            code.words[i / 64] |= 1 << (i % 64);
        }
    }
    code
}

pub fn unpack(code: &HashCode) -> Vec<bool> {
    (0..code.bits).map(|i| code.get(i)).collect()
}

/// Thresholds sigmoid outputs at 0.5; exactly 0.5 becomes a 1 bit.
pub fn binarize(h1: &[f64]) -> Result<HashCode> {
    let mut code = HashCode::zeros(h1.len());
    for (i, &h) in h1.iter().enumerate() {
        if !h.is_finite() {
            return Err(Error::Numeric(format!("non-finite activation at bit {i}")));
        }
        if h >= 0.5 {
            code.words[i / 64] |= 1 << (i % 64);
        }
    }
    Ok(code)
}

/// Codes for a set of samples, stored contiguously in sample order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeMatrix {
    bits: usize,
    words_per_code: usize,
    data: Vec<u64>,
}

impl CodeMatrix {
    pub fn new(bits: usize) -> Self {
        Self {
            bits,
            words_per_code: words_for(bits),
            data: Vec::new(),
        }
    }

    pub fn from_codes(bits: usize, codes: &[HashCode]) -> Result<Self> {
        let mut m = Self::new(bits);
        for c in codes {
            m.push(c)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, code: &HashCode) -> Result<()> {
        if code.bits != self.bits {
            return Err(Error::Shape(format!(
                "code has {} bits, matrix holds {}-bit codes",
                code.bits, self.bits
            )));
        }
        self.data.extend_from_slice(&code.words);
        Ok(())
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words_per_code(&self) -> usize {
        self.words_per_code
    }

    pub fn len(&self) -> usize {
        if self.words_per_code == 0 {
            0
        } else {
            self.data.len() / self.words_per_code
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Packed words of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.words_per_code..(i + 1) * self.words_per_code]
    }

    pub fn code(&self, i: usize) -> HashCode {
        HashCode {
            bits: self.bits,
            words: self.row(i).to_vec(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u64]> + '_ {
        self.data.chunks_exact(self.words_per_code.max(1))
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(CODES_MAGIC)?;
        out.write_all(&CODES_VERSION.to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        out.write_all(&(self.bits as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for w in &self.data {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut offset = 0u64;
        let mut magic = [0u8; 4];
        read_exact_at(&mut input, &mut magic, &mut offset)?;
        if &magic != CODES_MAGIC {
            return Err(Error::Format(format!("bad codes magic {magic:?}")));
        }
        let version = read_u32(&mut input, &mut offset)?;
        if version != CODES_VERSION {
            return Err(Error::Format(format!("unsupported codes version {version}")));
        }
        let count = read_u64(&mut input, &mut offset)?;
        let bits = read_u32(&mut input, &mut offset)? as usize;
        if bits == 0 {
            return Err(Error::Format("codes file declares 0 bits".into()));
        }
        let total = (count as usize)
            .checked_mul(words_for(bits))
            .filter(|&n| n.checked_mul(8).is_some())
            .ok_or_else(|| Error::Format("codes file size overflows".into()))?;
        let mut m = Self::new(bits);
        m.data.reserve_exact(total.min(1 << 24));
        let mask = last_word_mask(bits);
        let wpc = m.words_per_code;
        for i in 0..total {
            let w = read_u64(&mut input, &mut offset)?;
            if i % wpc == wpc - 1 && w & !mask != 0 {
                return Err(Error::Format(format!(
                    "padding bits set in code {} (byte offset {})",
                    i / wpc,
                    offset - 8
                )));
            }
            m.data.push(w);
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binarize_examples() {
        let c = binarize(&[0.7, 0.2, 0.5]).unwrap();
        assert_eq!(unpack(&c), vec![true, false, true]);
        assert!(unpack(&binarize(&[0.9; 10]).unwrap()).iter().all(|&b| b));
        assert!(unpack(&binarize(&[0.1; 10]).unwrap()).iter().all(|&b| !b));
        assert!(binarize(&[0.3, f64::NAN]).is_err());
    }

    #[test]
    fn pack_layout_is_lsb_first() {
        let c = pack(&[true, false, true, false]);
        assert_eq!(c.words(), &[0b0101]);

        let c = pack(&[true; 64]);
        assert_eq!(c.words(), &[u64::MAX]);

        let mut bits = vec![false; 65];
        bits[64] = true;
        let c = pack(&bits);
        assert_eq!(c.words(), &[0, 1]);
        let c = pack(&[false; 65]);
        assert_eq!(c.words(), &[0, 0]);
    }

    #[test]
    fn from_words_rejects_dirty_padding() {
        assert!(HashCode::from_words(4, vec![0b1_0000]).is_err());
        assert!(HashCode::from_words(4, vec![0b1111]).is_ok());
        assert!(HashCode::from_words(65, vec![0]).is_err());
    }

    #[test]
    fn matrix_rejects_mixed_lengths() {
        let mut m = CodeMatrix::new(8);
        m.push(&HashCode::zeros(8)).unwrap();
        assert!(m.push(&HashCode::zeros(9)).is_err());
    }

    #[test]
    fn codes_file_header() {
        let m = CodeMatrix::from_codes(3, &[pack(&[true, true, false])]).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"WDHC");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..16], &1u64.to_le_bytes());
        assert_eq!(&buf[16..20], &3u32.to_le_bytes());
        assert_eq!(&buf[20..], &3u64.to_le_bytes());
    }

    #[test]
    fn codes_file_errors() {
        assert!(CodeMatrix::read(&b"WDHX"[..]).is_err());
        let m = CodeMatrix::from_codes(70, &vec![HashCode::zeros(70); 2]).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let err = CodeMatrix::read(&buf[..buf.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("offset"), "{err}");
        // set a padding bit in the last word of the first code
        buf[20 + 8 + 7] = 0x80;
        assert!(CodeMatrix::read(buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn pack_unpack_roundtrip(bits in prop::collection::vec(any::<bool>(), 1..=256)) {
            let code = pack(&bits);
            prop_assert_eq!(unpack(&code), bits.clone());
            prop_assert_eq!(pack(&unpack(&code)), code.clone());
            let back = HashCode::from_words(code.bits(), code.words().to_vec()).unwrap();
            prop_assert_eq!(back, code);
        }

        #[test]
        fn binarize_is_stable_under_rethresholding(h in prop::collection::vec(0.0f64..1.0, 1..130)) {
            let code = binarize(&h).unwrap();
            let as_real: Vec<f64> = unpack(&code).iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            prop_assert_eq!(binarize(&as_real).unwrap(), code);
        }

        #[test]
        fn codes_file_roundtrip(bits in 1usize..200, seeds in prop::collection::vec(any::<u64>(), 0..20)) {
            let codes: Vec<HashCode> = seeds.iter().map(|s| {
                let v: Vec<bool> = (0..bits).map(|i| (s.rotate_left(i as u32 % 64) ^ i as u64) & 1 == 1).collect();
                pack(&v)
            }).collect();
            let m = CodeMatrix::from_codes(bits, &codes).unwrap();
            let mut buf = Vec::new();
            m.write(&mut buf).unwrap();
            let back = CodeMatrix::read(buf.as_slice()).unwrap();
            prop_assert_eq!(&back, &m);
            let mut again = Vec::new();
            back.write(&mut again).unwrap();
            prop_assert_eq!(again, buf);
        }
    }
}
