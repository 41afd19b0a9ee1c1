//! LSB-first bit packing shared by every on-disk and in-array bit layout.

/// Appends bits into bytes, least significant bit first.
#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity_bits(bits: usize) -> Self {
        Self {
            bytes: Vec::with_capacity(bits.div_ceil(8)),
            len: 0,
        }
    }

    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 1 << (self.len % 8);
        }
        self.len += 1;
    }

    /// Writes the low `width` bits of `value`, LSB first.
    pub fn push_bits(&mut self, value: u64, width: u32) {
        for b in 0..width {
            self.push((value >> b) & 1 == 1);
        }
    }

    pub fn len_bits(&self) -> usize {
        self.len
    }

    pub fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

/// Reads bits written by [`BitWriter`].
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn read_bit(&mut self) -> Option<bool> {
        let byte = *self.bytes.get(self.pos / 8)?;
        let bit = (byte >> (self.pos % 8)) & 1 == 1;
        self.pos += 1;
        Some(bit)
    }

    pub fn read_bits(&mut self, width: u32) -> Option<u64> {
        let mut value = 0u64;
        for b in 0..width {
            if self.read_bit()? {
                value |= 1 << b;
            }
        }
        Some(value)
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}

pub fn pack_lsb_first(bits: &[bool]) -> Vec<u8> {
    let mut w = BitWriter::with_capacity_bits(bits.len());
    for &b in bits {
        w.push(b);
    }
    w.finish()
}

/// Unpacks `n` bits. Panics if `bytes` holds fewer than `n` bits.
pub fn unpack_lsb_first(bytes: &[u8], n: usize) -> Vec<bool> {
    assert!(bytes.len() * 8 >= n, "not enough bytes for {n} bits");
    (0..n).map(|i| (bytes[i / 8] >> (i % 8)) & 1 == 1).collect()
}

/// Number of bits needed to address `n` distinct values.
pub fn index_bits(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}
