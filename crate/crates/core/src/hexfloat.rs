//! Exact text encoding of `f64` as C99-style hexadecimal floats
//! (`0x1.8p+1` == 3.0). Round-trips every finite value bit-for-bit.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub fn format(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, e) = if exp == 0 { (0, -1022) } else { (1, exp - 1023) };
    let mut digits = format!("{frac:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let point = if digits.is_empty() { String::new() } else { format!(".{digits}") };
    let esign = if e >= 0 { "+" } else { "-" };
    format!("{sign}0x{lead}{point}p{esign}{}", e.abs())
}

pub fn parse(s: &str) -> Result<f64> {
    let bad = || Error::Format(format!("invalid hex float `{s}`"));
    let t = s.trim();
    match t {
        "nan" => return Ok(f64::NAN),
        "inf" | "+inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    let (neg, t) = match t.as_bytes().first() {
        Some(b'-') => (true, &t[1..]),
        Some(b'+') => (false, &t[1..]),
        _ => (false, t),
    };
    let t = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")).ok_or_else(bad)?;
    let (mant, exp) = t.split_once(['p', 'P']).ok_or_else(bad)?;
    let mut exp2: i64 = exp.parse().map_err(|_| bad())?;
    let (int_part, frac_part) = mant.split_once('.').unwrap_or((mant, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let mut m: u128 = 0;
    for c in int_part.chars().chain(frac_part.chars()) {
        let d = c.to_digit(16).ok_or_else(bad)? as u128;
        if m >> 120 != 0 {
            return Err(bad());
        }
        m = (m << 4) | d;
    }
    exp2 -= 4 * frac_part.len() as i64;
    let value = if m == 0 { 0.0 } else { compose(m, exp2) };
    Ok(if neg { -value } else { value })
}

/// `m * 2^exp2` rounded to nearest-even.
fn compose(mut m: u128, mut exp2: i64) -> f64 {
    let width = 128 - m.leading_zeros() as i64;
    // normalize to a 53-bit significand
    let shift = width - 53;
    let mut sticky = false;
    let mut round_bit = false;
    let mut drop = |m: &mut u128, k: i64| {
        for _ in 0..k {
            if round_bit {
                sticky = true;
            }
            round_bit = *m & 1 == 1;
            *m >>= 1;
        }
    };
    if shift > 0 {
        drop(&mut m, shift);
        exp2 += shift;
    } else {
        m <<= -shift;
        exp2 += shift;
    }
    // value = m * 2^exp2 with m in [2^52, 2^53)
    let unbiased = exp2 + 52;
    if unbiased < -1022 {
        let k = -1022 - unbiased;
        drop(&mut m, k.min(60));
        exp2 += k;
    }
    let mut bits_m = m as u64;
    if round_bit && (sticky || bits_m & 1 == 1) {
        bits_m += 1;
    }
    let mut unbiased = exp2 + 52;
    if bits_m >> 53 != 0 {
        bits_m >>= 1;
        unbiased += 1;
    }
    if unbiased > 1023 {
        return f64::INFINITY;
    }
    if bits_m >> 52 == 0 {
        // subnormal
        return f64::from_bits(bits_m);
    }
    let biased = (unbiased + 1023) as u64;
    f64::from_bits((biased << 52) | (bits_m & ((1u64 << 52) - 1)))
}

/// Serde adapter storing an `f64` as a hex-float string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hex(pub f64);

impl Serialize for Hex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format(self.0))
    }
}

impl<'de> Deserialize<'de> for Hex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map(Hex).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert_eq!(format(3.0), "0x1.8p+1");
        assert_eq!(format(1.0), "0x1p+0");
        assert_eq!(format(-0.5), "-0x1p-1");
        assert_eq!(format(0.0), "0x0p+0");
        assert_eq!(format(f64::MIN_POSITIVE / 2.0), "0x0.8p-1022");
        assert_eq!(parse("0x3p+1").unwrap(), 6.0);
        assert_eq!(parse("0x.8p0").unwrap(), 0.5);
        assert!(parse("1.5").is_err());
        assert!(parse("0x1.gp+0").is_err());
        assert_eq!(parse("-0x0p+0").unwrap().to_bits(), (-0.0f64).to_bits());
    }

    proptest! {
        #[test]
        fn round_trips_bits(bits: u64) {
            let v = f64::from_bits(bits);
            prop_assume!(!v.is_nan());
            prop_assert_eq!(parse(&format(v)).unwrap().to_bits(), bits);
        }
    }
}
