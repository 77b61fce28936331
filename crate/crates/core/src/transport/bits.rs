use std::collections::BTreeMap;

use crate::error::ProtocolError;
use crate::ring::width_mask;

/// Packs values of arbitrary width, least-significant bit first.
///
/// Bits are attributed to the current protocol tag for the meter breakdown.
#[derive(Debug, Default)]
pub struct BitWriter {
    buf: Vec<u8>,
    acc: u128,
    pending: u32,
    bits: u64,
    tag: &'static str,
    by_tag: BTreeMap<&'static str, u64>,
}

impl BitWriter {
    pub fn new(tag: &'static str) -> Self {
        Self { tag, ..Default::default() }
    }

    pub fn set_tag(&mut self, tag: &'static str) {
        self.tag = tag;
    }

    pub fn push(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        if width == 0 {
            return;
        }
        self.acc |= ((value & width_mask(width)) as u128) << self.pending;
        self.pending += width;
        while self.pending >= 8 {
            self.buf.push(self.acc as u8);
            self.acc >>= 8;
            self.pending -= 8;
        }
        self.bits += width as u64;
        *self.by_tag.entry(self.tag).or_default() += width as u64;
    }

    pub fn push_all(&mut self, values: &[u64], width: u32) {
        for &v in values {
            self.push(v, width);
        }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    /// Pads to a byte boundary and returns the payload with its bit breakdown.
    pub fn finish(mut self) -> (Vec<u8>, u64, BTreeMap<&'static str, u64>) {
        if self.pending > 0 {
            self.buf.push(self.acc as u8);
        }
        (self.buf, self.bits, self.by_tag)
    }
}

/// Reads back what a [`BitWriter`] produced.
#[derive(Debug)]
pub struct BitReader {
    buf: Vec<u8>,
    pos: usize,
    acc: u128,
    avail: u32,
}

impl BitReader {
    pub fn new(buf: Vec<u8>) -> Self {
        Self { buf, pos: 0, acc: 0, avail: 0 }
    }

    pub fn read(&mut self, width: u32) -> Result<u64, ProtocolError> {
        if width == 0 {
            return Ok(0);
        }
        while self.avail < width {
            let byte = *self
                .buf
                .get(self.pos)
                .ok_or_else(|| ProtocolError::Length(format!("frame exhausted at byte {}", self.pos)))?;
            self.acc |= (byte as u128) << self.avail;
            self.pos += 1;
            self.avail += 8;
        }
        let v = (self.acc as u64) & width_mask(width);
        self.acc >>= width;
        self.avail -= width;
        Ok(v)
    }

    pub fn read_vec(&mut self, n: usize, width: u32) -> Result<Vec<u64>, ProtocolError> {
        (0..n).map(|_| self.read(width)).collect()
    }

    /// Bytes not yet consumed.
    pub fn remaining_bytes(&self) -> usize {
        self.buf.len() - self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn packs_nineteen_bit_records() {
        let mut w = BitWriter::new("agg");
        for i in 0..100u64 {
            w.push(i & 1, 1);
            w.push(i * 977, 18);
        }
        let (buf, bits, tags) = w.finish();
        assert_eq!(bits, 1900);
        assert_eq!(buf.len(), 238);
        assert_eq!(tags["agg"], 1900);
        let mut r = BitReader::new(buf);
        for i in 0..100u64 {
            assert_eq!(r.read(1).unwrap(), i & 1);
            assert_eq!(r.read(18).unwrap(), (i * 977) & 0x3ffff);
        }
    }

    #[test]
    fn reading_past_end_fails() {
        let mut r = BitReader::new(vec![0xff]);
        assert!(r.read(8).is_ok());
        assert!(r.read(1).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(items in proptest::collection::vec((any::<u64>(), 1u32..=64), 0..64)) {
            let mut w = BitWriter::new("t");
            for &(v, width) in &items {
                w.push(v, width);
            }
            let total: u64 = items.iter().map(|&(_, w)| w as u64).sum();
            let (buf, bits, _) = w.finish();
            prop_assert_eq!(bits, total);
            prop_assert_eq!(buf.len() as u64, total.div_ceil(8));
            let mut r = BitReader::new(buf);
            for &(v, width) in &items {
                prop_assert_eq!(r.read(width).unwrap(), v & width_mask(width));
            }
        }
    }
}
