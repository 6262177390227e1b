use std::fmt;

/// A bit string packed MSB-first into bytes.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    bytes: Vec<u8>,
    len: usize,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps whole bytes; the length is `8 * bytes.len()` bits.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self { bytes: bytes.to_vec(), len: bytes.len() * 8 }
    }

    /// Takes the first `len` bits of `bytes`. Trailing bits of the last
    /// byte are cleared.
    pub fn from_bytes_truncated(bytes: &[u8], len: usize) -> Option<Self> {
        if len > bytes.len() * 8 {
            return None;
        }
        let mut out = bytes[..len.div_ceil(8)].to_vec();
        if !len.is_multiple_of(8) {
            if let Some(last) = out.last_mut() {
                *last &= 0xFFu8 << (8 - len % 8);
            }
        }
        Some(Self { bytes: out, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn bit(&self, index: usize) -> bool {
        assert!(index < self.len, "bit {index} out of range for {} bits", self.len);
        self.bytes[index / 8] & (0x80 >> (index % 8)) != 0
    }

    pub fn flip(&mut self, index: usize) {
        assert!(index < self.len, "bit {index} out of range for {} bits", self.len);
        self.bytes[index / 8] ^= 0x80 >> (index % 8);
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push(&mut self, value: u64, width: usize) {
        debug_assert!(width <= 64);
        debug_assert!(width == 64 || value >> width == 0, "{value} does not fit in {width} bits");
        for i in (0..width).rev() {
            self.push_bit((value >> i) & 1 == 1);
        }
    }

    pub fn push_bytes(&mut self, bytes: &[u8]) {
        if self.len.is_multiple_of(8) {
            self.bytes.extend_from_slice(bytes);
            self.len += bytes.len() * 8;
        } else {
            for &b in bytes {
                self.push(u64::from(b), 8);
            }
        }
    }

    fn push_bit(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.len() - 1;
            self.bytes[last] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader { bits: self, pos: 0 }
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({} bits, {})", self.len, self.to_hex())
    }
}

/// Sequential MSB-first reader. Callers check the total length up front.
pub struct BitReader<'a> {
    bits: &'a BitString,
    pos: usize,
}

impl BitReader<'_> {
    pub fn take(&mut self, width: usize) -> u64 {
        let mut value = 0u64;
        for _ in 0..width {
            value = (value << 1) | u64::from(self.bits.bit(self.pos));
            self.pos += 1;
        }
        value
    }

    pub fn take_bytes<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        for b in &mut out {
            *b = self.take(8) as u8;
        }
        out
    }
}
