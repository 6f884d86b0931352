//! Fixed-width bit strings.
//!
//! A [`BitString`] is the value type used for every identifier, key, nonce,
//! mask and ciphertext in the protocols. Bits are ordered most-significant
//! first and stored right-aligned in a big-endian byte vector, so the unused
//! high bits of the first byte are always zero.
//!
//! The canonical text form is `"<width>:<hex>"`, e.g. `"16:ff00"`, with
//! exactly `ceil(width / 4)` lowercase hex digits.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BitsError {
    #[error("width mismatch: {left} bits vs {right} bits")]
    WidthMismatch { left: usize, right: usize },
    #[error("split point {at} is beyond width {width}")]
    SplitOutOfRange { at: usize, width: usize },
    #[error("value does not fit in {width} bits")]
    Overflow { width: usize },
    #[error("malformed bit string text {0:?}")]
    Malformed(String),
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    width: usize,
    bytes: Vec<u8>,
}

fn byte_len(width: usize) -> usize {
    width.div_ceil(8)
}

impl BitString {
    /// The zero-width string, identity for [`BitString::concat`].
    pub fn empty() -> Self {
        Self {
            width: 0,
            bytes: Vec::new(),
        }
    }

    pub fn zeros(width: usize) -> Self {
        Self {
            width,
            bytes: vec![0; byte_len(width)],
        }
    }

    /// Builds a string from right-aligned big-endian bytes. The byte count
    /// must be exactly `ceil(width / 8)` and the padding bits must be clear.
    pub fn from_bytes(width: usize, bytes: Vec<u8>) -> Result<Self, BitsError> {
        if bytes.len() != byte_len(width) {
            return Err(BitsError::Overflow { width });
        }
        let pad = bytes.len() * 8 - width;
        if pad > 0 && bytes[0] >> (8 - pad) != 0 {
            return Err(BitsError::Overflow { width });
        }
        Ok(Self { width, bytes })
    }

    pub fn from_u64(width: usize, value: u64) -> Result<Self, BitsError> {
        if width < 64 && value >> width != 0 {
            return Err(BitsError::Overflow { width });
        }
        let mut out = Self::zeros(width);
        for i in 0..width.min(64) {
            if value >> i & 1 == 1 {
                out.set_bit(width - 1 - i, true);
            }
        }
        Ok(out)
    }

    /// Takes the first `width` bits of a most-significant-first bit stream.
    pub fn from_msb_stream(stream: &[u8], width: usize) -> Self {
        assert!(stream.len() * 8 >= width, "stream too short for {width} bits");
        let len = byte_len(width);
        let pad = len * 8 - width;
        let mut bytes = stream[..len].to_vec();
        if pad > 0 {
            // shift right by pad bits across the whole buffer
            let mut carry = 0u8;
            for b in bytes.iter_mut() {
                let next = *b << (8 - pad);
                *b = (*b >> pad) | carry;
                carry = next;
            }
        }
        Self { width, bytes }
    }

    pub fn random<R: RngCore + ?Sized>(width: usize, rng: &mut R) -> Self {
        let mut bytes = vec![0; byte_len(width)];
        rng.fill_bytes(&mut bytes);
        let pad = bytes.len() * 8 - width;
        if pad > 0 {
            bytes[0] &= 0xff >> pad;
        }
        Self { width, bytes }
    }

    /// Uniform non-zero string; `width` must be positive.
    pub fn random_nonzero<R: RngCore + ?Sized>(width: usize, rng: &mut R) -> Self {
        assert!(width > 0, "no non-zero value of width 0");
        loop {
            let candidate = Self::random(width, rng);
            if !candidate.is_zero() {
                return candidate;
            }
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn is_zero(&self) -> bool {
        self.bytes.iter().all(|&b| b == 0)
    }

    fn pad(&self) -> usize {
        self.bytes.len() * 8 - self.width
    }

    /// Bit `index`, counted from the most significant end.
    pub fn bit(&self, index: usize) -> bool {
        assert!(index < self.width);
        let p = self.pad() + index;
        self.bytes[p / 8] >> (7 - p % 8) & 1 == 1
    }

    pub fn set_bit(&mut self, index: usize, value: bool) {
        assert!(index < self.width);
        let p = self.pad() + index;
        let mask = 1u8 << (7 - p % 8);
        if value {
            self.bytes[p / 8] |= mask;
        } else {
            self.bytes[p / 8] &= !mask;
        }
    }

    pub fn flip_bit(&mut self, index: usize) {
        let v = self.bit(index);
        self.set_bit(index, !v);
    }

    /// Value of a string of at most 64 bits.
    pub fn to_u64(&self) -> Option<u64> {
        if self.width > 64 {
            return None;
        }
        Some(self.bytes.iter().fold(0u64, |acc, &b| acc << 8 | u64::from(b)))
    }

    pub fn xor(&self, other: &Self) -> Result<Self, BitsError> {
        if self.width != other.width {
            return Err(BitsError::WidthMismatch {
                left: self.width,
                right: other.width,
            });
        }
        let bytes = self.bytes.iter().zip(&other.bytes).map(|(a, b)| a ^ b).collect();
        Ok(Self {
            width: self.width,
            bytes,
        })
    }

    /// `self ∥ other`, with `self` in the high-order bits.
    pub fn concat(&self, other: &Self) -> Self {
        let width = self.width + other.width;
        if other.pad() == 0 {
            // other is byte aligned: prepend self's bytes
            let mut bytes = self.bytes.clone();
            bytes.extend_from_slice(&other.bytes);
            return Self { width, bytes };
        }
        let mut out = Self::zeros(width);
        for i in 0..self.width {
            if self.bit(i) {
                out.set_bit(i, true);
            }
        }
        for i in 0..other.width {
            if other.bit(i) {
                out.set_bit(self.width + i, true);
            }
        }
        out
    }

    /// Splits into the first `at` bits and the remainder.
    pub fn split_at(&self, at: usize) -> Result<(Self, Self), BitsError> {
        if at > self.width {
            return Err(BitsError::SplitOutOfRange { at, width: self.width });
        }
        let mut high = Self::zeros(at);
        let mut low = Self::zeros(self.width - at);
        for i in 0..self.width {
            if self.bit(i) {
                if i < at {
                    high.set_bit(i, true);
                } else {
                    low.set_bit(i - at, true);
                }
            }
        }
        Ok((high, low))
    }

    /// The first `width` bits.
    pub fn prefix(&self, width: usize) -> Result<Self, BitsError> {
        self.split_at(width).map(|(high, _)| high)
    }

    pub fn to_text(&self) -> String {
        let digits = self.width.div_ceil(4);
        let mut hex = String::with_capacity(self.bytes.len() * 2);
        for b in &self.bytes {
            hex.push_str(&format!("{b:02x}"));
        }
        // byte rendering may carry one leading zero nibble too many
        let start = hex.len() - digits;
        format!("{}:{}", self.width, &hex[start..])
    }

    pub fn parse_text(text: &str) -> Result<Self, BitsError> {
        let malformed = || BitsError::Malformed(text.to_string());
        let (w, hex) = text.split_once(':').ok_or_else(malformed)?;
        let width: usize = w.parse().map_err(|_| malformed())?;
        if hex.len() != width.div_ceil(4) || !hex.bytes().all(|c| c.is_ascii_hexdigit()) {
            return Err(malformed());
        }
        let mut padded = String::with_capacity(hex.len() + 1);
        if hex.len() % 2 == 1 {
            padded.push('0');
        }
        padded.push_str(hex);
        let mut bytes = Vec::with_capacity(padded.len() / 2);
        for i in (0..padded.len()).step_by(2) {
            bytes.push(u8::from_str_radix(&padded[i..i + 2], 16).map_err(|_| malformed())?);
        }
        Self::from_bytes(width, bytes).map_err(|_| malformed())
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({})", self.to_text())
    }
}

impl FromStr for BitString {
    type Err = BitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_text(s)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_text())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Self::parse_text(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bs(text: &str) -> BitString {
        text.parse().unwrap()
    }

    #[test]
    fn xor_zero_identity() {
        assert_eq!(bs("16:ff00").xor(&bs("16:0000")).unwrap(), bs("16:ff00"));
    }

    #[test]
    fn xor_truth_table() {
        // 1010 ^ 0110 evaluated bit by bit: 1^0 0^1 1^1 0^0
        let expected = BitString::from_u64(4, 0b1100).unwrap();
        let a = BitString::from_u64(4, 0b1010).unwrap();
        let b = BitString::from_u64(4, 0b0110).unwrap();
        assert_eq!(a.xor(&b).unwrap(), expected);
        assert_eq!(expected.to_text(), "4:c");
    }

    #[test]
    fn xor_rejects_width_mismatch() {
        let err = bs("8:ff").xor(&bs("16:00ff")).unwrap_err();
        assert_eq!(err, BitsError::WidthMismatch { left: 8, right: 16 });
    }

    #[test]
    fn concat_examples() {
        assert_eq!(BitString::empty().concat(&bs("12:abc")), bs("12:abc"));
        assert_eq!(bs("8:ab").concat(&bs("8:cd")), bs("16:abcd"));
        assert_eq!(bs("3:5").concat(&bs("5:1f")), bs("8:bf"));
    }

    #[test]
    fn text_form() {
        assert_eq!(bs("16:ff00").to_string(), "16:ff00");
        assert_eq!(BitString::zeros(5).to_text(), "5:00");
        assert_eq!(BitString::empty().to_text(), "0:");
        assert!("5:40".parse::<BitString>().is_err());
        assert!("8:f".parse::<BitString>().is_err());
        assert!("8:zz".parse::<BitString>().is_err());
        assert!("ff".parse::<BitString>().is_err());
    }

    #[test]
    fn msb_stream_takes_leading_bits() {
        let s = BitString::from_msb_stream(&[0b1011_0110, 0xff], 3);
        assert_eq!(s.to_u64(), Some(0b101));
        let s = BitString::from_msb_stream(&[0xab, 0xcd, 0xef], 12);
        assert_eq!(s, bs("12:abc"));
    }

    fn arb_bits(width: usize) -> impl Strategy<Value = BitString> {
        proptest::collection::vec(any::<bool>(), width).prop_map(move |v| {
            let mut s = BitString::zeros(width);
            for (i, b) in v.into_iter().enumerate() {
                s.set_bit(i, b);
            }
            s
        })
    }

    fn arb_triple() -> impl Strategy<Value = (BitString, BitString, BitString)> {
        (1usize..200).prop_flat_map(|w| (arb_bits(w), arb_bits(w), arb_bits(w)))
    }

    proptest! {
        #[test]
        fn xor_laws((a, b, c) in arb_triple()) {
            prop_assert_eq!(a.xor(&b).unwrap(), b.xor(&a).unwrap());
            prop_assert_eq!(
                a.xor(&b).unwrap().xor(&c).unwrap(),
                a.xor(&b.xor(&c).unwrap()).unwrap()
            );
            prop_assert!(a.xor(&a).unwrap().is_zero());
            prop_assert_eq!(a.xor(&b).unwrap().xor(&b).unwrap(), a);
        }

        #[test]
        fn text_round_trip(a in (0usize..300).prop_flat_map(arb_bits)) {
            prop_assert_eq!(BitString::parse_text(&a.to_text()).unwrap(), a);
        }

        #[test]
        fn split_inverts_concat(
            a in (0usize..100).prop_flat_map(arb_bits),
            b in (0usize..100).prop_flat_map(arb_bits),
        ) {
            let joined = a.concat(&b);
            prop_assert_eq!(joined.width(), a.width() + b.width());
            prop_assert_eq!(joined.split_at(a.width()).unwrap(), (a, b));
        }
    }
}
