//! MSB-first bit packing.

#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    len: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bit: bool) {
        let offset = (self.len % 8) as u8;
        if offset == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> offset;
        }
        self.len += 1;
    }

    pub fn push_repeated(&mut self, bit: bool, count: u64) {
        for _ in 0..count {
            self.push(bit);
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.len
    }

    pub fn into_parts(self) -> (Vec<u8>, u64) {
        (self.bytes, self.len)
    }
}

/// Reads the first `bit_length` bits of a payload, then an endless run of
/// zeros. Bits past `bit_length` are synthesized, never read from the buffer.
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    bit_length: u64,
    pos: u64,
}

/// The payload ended before `bit_length` bits were available.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutOfData;

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], bit_length: u64) -> Self {
        BitReader {
            bytes,
            bit_length,
            pos: 0,
        }
    }

    pub fn next_bit(&mut self) -> Result<u64, OutOfData> {
        let pos = self.pos;
        self.pos += 1;
        if pos >= self.bit_length {
            return Ok(0);
        }
        let byte = self.bytes.get((pos / 8) as usize).ok_or(OutOfData)?;
        Ok(u64::from((byte >> (7 - pos % 8)) & 1))
    }

    /// Number of bits consumed so far, including synthesized zeros.
    pub fn position(&self) -> u64 {
        self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packs_msb_first() {
        let mut w = BitWriter::new();
        for b in [true, false, true, true, false, false, false, false, true] {
            w.push(b);
        }
        let (bytes, len) = w.into_parts();
        assert_eq!(bytes, vec![0b1011_0000, 0b1000_0000]);
        assert_eq!(len, 9);

        let mut r = BitReader::new(&bytes, len);
        let read: Vec<u64> = (0..12).map(|_| r.next_bit().unwrap()).collect();
        assert_eq!(read, vec![1, 0, 1, 1, 0, 0, 0, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn padding_bits_are_not_read() {
        // Bits 3.. of the byte are padding and set here on purpose.
        let bytes = [0b1011_1111];
        let mut r = BitReader::new(&bytes, 3);
        let read: Vec<u64> = (0..6).map(|_| r.next_bit().unwrap()).collect();
        assert_eq!(read, vec![1, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn short_buffer_is_detected() {
        let bytes = [0xff];
        let mut r = BitReader::new(&bytes, 12);
        for _ in 0..8 {
            r.next_bit().unwrap();
        }
        assert_eq!(r.next_bit(), Err(OutOfData));
    }
}
