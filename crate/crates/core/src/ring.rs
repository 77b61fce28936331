//! Arithmetic in Z_{2^l} and the signed fixed-point encoding on top of it.
//!
//! Elements are carried in a `u64` and kept reduced by [`RingConfig::reduce`].
//! Widths below 64 exist so that small rings can be tested exhaustively.

use serde::{Deserialize, Serialize};

use crate::error::{RangeError, SetupError};

/// An element of Z_{2^l}, always reduced.
pub type RingElement = u64;

/// An element of the compressed ring Z_{2^{l'}} with l' = frac_bits + 2.
pub type CompressedElement = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RingConfig {
    pub bits: u32,
    pub frac_bits: u32,
}

impl Default for RingConfig {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl RingConfig {
    pub const DEFAULT: RingConfig = RingConfig { bits: 64, frac_bits: 16 };
    pub const SMALL: RingConfig = RingConfig { bits: 8, frac_bits: 3 };

    pub fn new(bits: u32, frac_bits: u32) -> Result<Self, SetupError> {
        if bits > 64 || frac_bits + 2 >= bits {
            return Err(SetupError::RingWidth { bits, frac_bits });
        }
        Ok(Self { bits, frac_bits })
    }

    #[inline]
    pub fn mask(&self) -> u64 {
        width_mask(self.bits)
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> RingElement {
        x & self.mask()
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> RingElement {
        a.wrapping_add(b) & self.mask()
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> RingElement {
        a.wrapping_sub(b) & self.mask()
    }

    #[inline]
    pub fn neg(&self, a: u64) -> RingElement {
        a.wrapping_neg() & self.mask()
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> RingElement {
        a.wrapping_mul(b) & self.mask()
    }

    /// Two's-complement reading of a reduced element.
    #[inline]
    pub fn to_signed(&self, x: RingElement) -> i64 {
        let shift = 64 - self.bits;
        ((x << shift) as i64) >> shift
    }

    #[inline]
    pub fn from_signed(&self, x: i64) -> RingElement {
        (x as u64) & self.mask()
    }

    #[inline]
    pub fn msb(&self, x: RingElement) -> u64 {
        (x >> (self.bits - 1)) & 1
    }

    /// Width of the compressed ring used by aggregation.
    pub fn compressed_bits(&self) -> u32 {
        self.frac_bits + 2
    }

    pub fn compressed_mask(&self) -> u64 {
        width_mask(self.compressed_bits())
    }

    /// `1.0` in fixed point.
    pub fn one(&self) -> RingElement {
        1u64 << self.frac_bits
    }

    /// Largest magnitude accepted by [`encode`](Self::encode).
    pub fn encode_limit(&self) -> f64 {
        2f64.powi((self.bits - self.frac_bits - 1) as i32)
    }

    /// round(x * 2^f) mod 2^l.
    pub fn encode(&self, x: f64) -> Result<RingElement, RangeError> {
        let limit = self.encode_limit();
        if !x.is_finite() || x.abs() >= limit {
            return Err(RangeError { value: x, limit });
        }
        let scaled = (x * 2f64.powi(self.frac_bits as i32)).round();
        Ok(self.from_signed(scaled as i64))
    }

    pub fn decode(&self, x: RingElement) -> f64 {
        self.decode_scaled(x, self.frac_bits)
    }

    /// Signed value divided by 2^scale.
    pub fn decode_scaled(&self, x: RingElement, scale: u32) -> f64 {
        self.to_signed(x) as f64 / 2f64.powi(scale as i32)
    }

    /// Arithmetic shift of a public value: floor(x / 2^k).
    pub fn truncate(&self, x: RingElement, k: u32) -> RingElement {
        self.from_signed(self.to_signed(x) >> k)
    }

    /// Fixed-point product of two public values with floor rounding.
    pub fn fixed_mul(&self, a: RingElement, b: RingElement) -> RingElement {
        let p = self.to_signed(a) as i128 * self.to_signed(b) as i128;
        self.from_signed((p >> self.frac_bits) as i64)
    }
}

#[inline]
pub fn width_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Top bit of `x` read as a `width`-bit value.
#[inline]
pub fn msb(x: u64, width: u32) -> u64 {
    (x >> (width - 1)) & 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const R: RingConfig = RingConfig::DEFAULT;

    #[test]
    fn encode_decode_examples() {
        assert_eq!(R.encode(1.5).unwrap(), 98304);
        assert_eq!(R.encode(-0.25).unwrap(), 18446744073709535232);
        assert_eq!(R.decode(98304), 1.5);
        assert_eq!(R.decode(18446744073709535232), -0.25);
        assert_eq!(R.encode(0.0).unwrap(), 0);
    }

    #[test]
    fn encode_range_errors() {
        assert!(R.encode(2f64.powi(47)).is_err());
        assert!(R.encode(-(2f64.powi(47))).is_err());
        assert!(R.encode(f64::NAN).is_err());
        assert!(R.encode(2f64.powi(47) - 1.0).is_ok());
    }

    #[test]
    fn small_ring_roundtrip_is_exhaustive() {
        let r = RingConfig::SMALL;
        for x in (0u64..256).filter(|&x| x != 0x80) {
            let v = r.decode(x);
            assert_eq!(r.encode(v).unwrap(), x, "x={x}");
        }
        assert!(r.encode(r.decode(0x80)).is_err());
        assert_eq!(r.to_signed(0x80), -128);
        assert_eq!(r.to_signed(0x7f), 127);
    }

    #[test]
    fn msb_examples() {
        assert_eq!(msb(0b1000_0000, 8), 1);
        assert_eq!(msb(0b0111_1111, 8), 0);
        assert_eq!(msb(1 << 17, 18), 1);
        assert_eq!(R.msb(R.encode(-1.0).unwrap()), 1);
    }

    #[test]
    fn config_validation() {
        assert!(RingConfig::new(64, 16).is_ok());
        assert!(RingConfig::new(8, 3).is_ok());
        assert!(RingConfig::new(65, 16).is_err());
        assert!(RingConfig::new(8, 6).is_err());
        assert_eq!(R.compressed_bits(), 18);
        assert_eq!(RingConfig::SMALL.compressed_bits(), 5);
    }

    proptest! {
        #[test]
        fn roundtrip_within_half_ulp(x in -1.0e6f64..1.0e6) {
            let e = R.encode(x).unwrap();
            prop_assert!((R.decode(e) - x).abs() <= 2f64.powi(-17));
        }

        #[test]
        fn ring_ops_match_wrapping(a: u64, b: u64) {
            prop_assert_eq!(R.add(a, b), a.wrapping_add(b));
            prop_assert_eq!(R.sub(R.add(a, b), b), a);
            prop_assert_eq!(R.add(a, R.neg(a)), 0);
        }

        #[test]
        fn small_ring_ops_stay_reduced(a in 0u64..256, b in 0u64..256) {
            let r = RingConfig::SMALL;
            prop_assert!(r.add(a, b) < 256);
            prop_assert!(r.mul(a, b) < 256);
            prop_assert_eq!(r.add(a, b), (a + b) % 256);
        }

        #[test]
        fn truncate_is_floor(x in -1_000_000i64..1_000_000, k in 0u32..20) {
            prop_assert_eq!(R.to_signed(R.truncate(R.from_signed(x), k)), x.div_euclid(1 << k));
        }
    }
}
