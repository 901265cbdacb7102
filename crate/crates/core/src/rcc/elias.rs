//! MSB-first bit I/O and the Elias-delta code for PFR seed indices.

use super::RccError;

#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    /// Bits used in the last byte, 0..8 (0 means byte-aligned).
    used: u8,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write_bit(&mut self, bit: bool) {
        if self.used == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> self.used;
        }
        self.used = (self.used + 1) % 8;
    }

    /// Writes the low `count` bits of `value`, most significant first.
    pub fn write_bits(&mut self, value: u64, count: u32) {
        for i in (0..count).rev() {
            self.write_bit((value >> i) & 1 == 1);
        }
    }

    pub fn bit_len(&self) -> u64 {
        if self.used == 0 {
            self.bytes.len() as u64 * 8
        } else {
            (self.bytes.len() as u64 - 1) * 8 + u64::from(self.used)
        }
    }

    /// Zero-pads to a byte boundary and returns the buffer.
    pub fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn remaining(&self) -> u64 {
        self.bytes.len() as u64 * 8 - self.pos
    }

    pub fn read_bit(&mut self) -> Option<bool> {
        let byte = *self.bytes.get((self.pos / 8) as usize)?;
        let bit = byte & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Some(bit)
    }

    pub fn read_bits(&mut self, count: u32) -> Option<u64> {
        let mut v = 0u64;
        for _ in 0..count {
            v = (v << 1) | u64::from(self.read_bit()?);
        }
        Some(v)
    }
}

/// Length in bits of the Elias-delta codeword for `n >= 1`.
pub fn seed_code_len(n: u64) -> u32 {
    debug_assert!(n >= 1);
    let nbits = 63 - n.leading_zeros(); // floor(log2 n)
    let lbits = 31 - (nbits + 1).leading_zeros(); // floor(log2(floor(log2 n) + 1))
    nbits + 2 * lbits + 1
}

/// Appends the Elias-delta codeword of `n`.
pub fn code_seed_index(w: &mut BitWriter, n: u64) -> Result<(), RccError> {
    if n == 0 {
        return Err(RccError::InvalidSeed(0));
    }
    let nbits = 63 - n.leading_zeros();
    let len = u64::from(nbits) + 1;
    let lbits = 63 - len.leading_zeros();
    w.write_bits(0, lbits);
    w.write_bits(len, lbits + 1);
    w.write_bits(n, nbits);
    Ok(())
}

pub fn decode_seed_index(r: &mut BitReader<'_>) -> Result<u64, RccError> {
    let start = r.position();
    let truncated = || RccError::MalformedCode { bit_offset: start };
    let mut zeros = 0u32;
    while !r.read_bit().ok_or_else(truncated)? {
        zeros += 1;
        if zeros > 6 {
            return Err(truncated());
        }
    }
    let len = (1u64 << zeros) | r.read_bits(zeros).ok_or_else(truncated)?;
    if len > 64 {
        return Err(truncated());
    }
    let nbits = (len - 1) as u32;
    let low = r.read_bits(nbits).ok_or_else(truncated)?;
    Ok((1u64 << nbits) | low)
}

/// Renders the codeword of `n` as a `0`/`1` string.
pub fn seed_code_string(n: u64) -> Result<String, RccError> {
    let mut w = BitWriter::new();
    code_seed_index(&mut w, n)?;
    let len = w.bit_len();
    let bytes = w.finish();
    let mut r = BitReader::new(&bytes);
    Ok((0..len)
        .map(|_| if r.read_bit().unwrap() { '1' } else { '0' })
        .collect())
}
