//! Hamming(7,4) encoding, syndrome computation, and single-bit correction
//! over GF(2), plus chunked encode/decode for data words wider than 4 bits.
//!
//! The code is systematic: codeword bits 0..=3 are the data bits (LSB-first)
//! and bits 4..=6 are parity bits
//!
//! ```text
//!   p0 = d0 ^ d1 ^ d3
//!   p1 = d0 ^ d2 ^ d3
//!   p2 = d1 ^ d2 ^ d3
//! ```
//!
//! Every pair of the 16 codewords differs in at least 3 positions, so any
//! single flipped bit is correctable. Words wider than 4 data bits are split
//! LSB-first into 4-bit chunks (the last chunk zero-padded in its high bits)
//! and each chunk is encoded and corrected independently.

use crate::error::{Error, Result};

/// A data word of explicit bit width. Bit `k` of `value` is `(value >> k) & 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataWord {
    value: u32,
    width: usize,
}

impl DataWord {
    /// Requires `width` in 1..=32 and `value < 2^width`.
    pub fn new(value: u32, width: usize) -> Result<Self> {
        if width == 0 || width > 32 {
            return Err(Error::invalid(format!(
                "data word width must be in 1..=32, got {width}"
            )));
        }
        if width < 32 && value >> width != 0 {
            return Err(Error::invalid(format!(
                "data word value {value} does not fit in {width} bits"
            )));
        }
        Ok(DataWord { value, width })
    }

    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// The word as individual bits, LSB-first.
    pub fn bits(&self) -> Vec<u8> {
        (0..self.width).map(|k| ((self.value >> k) & 1) as u8).collect()
    }
}

/// Number of 7-bit Hamming chunks needed for `data_width` data bits.
pub fn chunk_count(data_width: usize) -> usize {
    data_width.div_ceil(4)
}

/// Parity of `word` restricted to the positions selected by `mask`.
#[inline]
fn gf2_dot(mask: u8, word: u8) -> u8 {
    ((mask & word).count_ones() & 1) as u8
}

/// The Hamming(7,4) code: generator and parity-check matrices plus the
/// syndrome-to-position lookup table.
///
/// Matrices are stored as row bitmasks, LSB-first: bit `j` of `generator[i]`
/// is the entry G[i][j] (7 rows over 4 data bits), and bit `j` of
/// `parity_check[i]` is P[i][j] (3 rows over 7 codeword bits).
#[derive(Debug, Clone)]
pub struct HammingCode74 {
    generator: [u8; 7],
    parity_check: [u8; 3],
    /// Indexed by syndrome value; entry is the erroneous bit position. The
    /// zero syndrome means "no error" and is stored as `NO_ERROR`.
    syndrome_table: [u8; 8],
}

/// Sentinel in the syndrome table for the zero (no-error) syndrome.
pub const NO_ERROR: u8 = u8::MAX;

impl Default for HammingCode74 {
    fn default() -> Self {
        Self::new()
    }
}

impl HammingCode74 {
    pub fn new() -> Self {
        // Rows 0..=3 copy the data bits; rows 4..=6 are the parity equations.
        let generator: [u8; 7] = [
            0b0001, // c0 = d0
            0b0010, // c1 = d1
            0b0100, // c2 = d2
            0b1000, // c3 = d3
            0b1011, // c4 = d0 ^ d1 ^ d3
            0b1101, // c5 = d0 ^ d2 ^ d3
            0b1110, // c6 = d1 ^ d2 ^ d3
        ];
        // Each row re-checks one parity equation against its parity bit.
        let parity_check: [u8; 3] = [
            0b0011011, // d0 d1 d3 p0
            0b0101101, // d0 d2 d3 p1
            0b1001110, // d1 d2 d3 p2
        ];
        let mut syndrome_table = [NO_ERROR; 8];
        for pos in 0..7u8 {
            let mut syndrome = 0u8;
            for (i, row) in parity_check.iter().enumerate() {
                syndrome |= gf2_dot(*row, 1 << pos) << i;
            }
            debug_assert_ne!(syndrome, 0, "parity-check columns must be nonzero");
            syndrome_table[syndrome as usize] = pos;
        }
        HammingCode74 {
            generator,
            parity_check,
            syndrome_table,
        }
    }

    pub fn generator(&self) -> &[u8; 7] {
        &self.generator
    }

    pub fn parity_check(&self) -> &[u8; 3] {
        &self.parity_check
    }

    /// Erroneous bit position for a nonzero syndrome, `None` for syndrome 0.
    pub fn error_position(&self, syndrome: u8) -> Option<usize> {
        match self.syndrome_table[(syndrome & 0b111) as usize] {
            NO_ERROR => None,
            pos => Some(pos as usize),
        }
    }

    /// Encode a 4-bit data word into a 7-bit codeword.
    pub fn encode4(&self, data: u8) -> u8 {
        debug_assert!(data < 16, "data word must be 4 bits");
        let mut codeword = 0u8;
        for (i, row) in self.generator.iter().enumerate() {
            codeword |= gf2_dot(*row, data) << i;
        }
        codeword
    }

    /// Syndrome of a received 7-bit word; zero iff the word is a codeword.
    pub fn syndrome(&self, received: u8) -> u8 {
        let mut syndrome = 0u8;
        for (i, row) in self.parity_check.iter().enumerate() {
            syndrome |= gf2_dot(*row, received) << i;
        }
        syndrome
    }

    /// Correct at most one flipped bit and extract the 4 data bits.
    ///
    /// Always returns a 4-bit word; words at distance 2 from a codeword are
    /// silently miscorrected to a different word.
    pub fn correct_decode7(&self, received: u8) -> u8 {
        let received = received & 0b111_1111;
        let corrected = match self.error_position(self.syndrome(received)) {
            Some(pos) => received ^ (1 << pos),
            None => received,
        };
        corrected & 0b1111
    }

    /// Encode a data word of arbitrary width as a sequence of 7-bit chunks.
    ///
    /// The word is split LSB-first into 4-bit chunks, the last chunk padded
    /// with zero bits, and the 7-bit codewords are concatenated in chunk
    /// order. Output length is `7 * ceil(width / 4)` bits.
    pub fn encode_chunked(&self, word: DataWord) -> Vec<u8> {
        let n_chunks = chunk_count(word.width());
        let mut bits = Vec::with_capacity(7 * n_chunks);
        for chunk in 0..n_chunks {
            let data = ((word.value() >> (4 * chunk)) & 0b1111) as u8;
            let codeword = self.encode4(data);
            for k in 0..7 {
                bits.push((codeword >> k) & 1);
            }
        }
        bits
    }

    /// Decode a chunked bit sequence back to a data word of `data_width` bits.
    ///
    /// Each 7-bit chunk is syndrome-corrected independently; padding bits are
    /// dropped after decoding. `bits` must hold exactly `7 * ceil(data_width / 4)`
    /// entries.
    pub fn decode_chunked(&self, bits: &[u8], data_width: usize) -> Result<DataWord> {
        let n_chunks = chunk_count(data_width);
        if bits.len() != 7 * n_chunks {
            return Err(Error::invalid(format!(
                "expected {} encoded bits for a {}-bit data word, got {}",
                7 * n_chunks,
                data_width,
                bits.len()
            )));
        }
        let mut value = 0u32;
        for chunk in 0..n_chunks {
            let mut received = 0u8;
            for k in 0..7 {
                received |= (bits[7 * chunk + k] & 1) << k;
            }
            let data = self.correct_decode7(received);
            value |= (data as u32) << (4 * chunk);
        }
        if data_width < 32 {
            value &= (1u32 << data_width) - 1;
        }
        DataWord::new(value, data_width)
    }
}
