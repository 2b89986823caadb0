// SPDX-License-Identifier: MIT OR Apache-2.0

//! Bit-exact text encoding of `f64` as C99-style hexadecimal floating point
//! (`0x1.8p+1`), used by checkpoints.

use crate::{Error, Result};

const FRAC_BITS: u32 = 52;
const FRAC_MASK: u64 = (1 << FRAC_BITS) - 1;

pub fn format(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    let sign = if x.is_sign_negative() { "-" } else { "" };
    if x.is_infinite() {
        return format!("{sign}inf");
    }
    let bits = x.to_bits();
    let biased = ((bits >> FRAC_BITS) & 0x7ff) as i32;
    let frac = bits & FRAC_MASK;
    if biased == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if biased == 0 { (0, -1022) } else { (1, biased - 1023) };
    let digits = format!("{frac:013x}");
    let digits = digits.trim_end_matches('0');
    if digits.is_empty() {
        format!("{sign}0x{lead}p{exp:+}")
    } else {
        format!("{sign}0x{lead}.{digits}p{exp:+}")
    }
}

pub fn parse(s: &str) -> Result<f64> {
    let bad = || Error::Format(format!("invalid hex float `{s}`"));
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let signed = |v: f64| if negative { -v } else { v };
    match body {
        "nan" if !negative => return Ok(f64::NAN),
        "inf" => return Ok(signed(f64::INFINITY)),
        _ => {}
    }
    let body = body.strip_prefix("0x").ok_or_else(bad)?;
    let (mantissa, exp) = body.split_once('p').ok_or_else(bad)?;
    let exp: i32 = exp.parse().map_err(|_| bad())?;
    let (lead, digits) = match mantissa.split_once('.') {
        Some((l, d)) if !d.is_empty() => (l, d),
        Some(_) => return Err(bad()),
        None => (mantissa, ""),
    };
    if digits.len() > 13 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(bad());
    }
    let frac = if digits.is_empty() {
        0
    } else {
        u64::from_str_radix(&format!("{digits:0<13}"), 16).map_err(|_| bad())?
    };
    let sign_bit = if negative { 1u64 << 63 } else { 0 };
    let bits = match lead {
        "1" => {
            let biased = exp + 1023;
            if !(1..=2046).contains(&biased) {
                return Err(bad());
            }
            sign_bit | ((biased as u64) << FRAC_BITS) | frac
        }
        "0" if frac == 0 && exp == 0 => sign_bit,
        "0" if exp == -1022 => sign_bit | frac,
        _ => return Err(bad()),
    };
    Ok(f64::from_bits(bits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert_eq!(format(1.0), "0x1p+0");
        assert_eq!(format(3.0), "0x1.8p+1");
        assert_eq!(format(-0.0), "-0x0p+0");
        assert_eq!(format(f64::NEG_INFINITY), "-inf");
        assert_eq!(format(f64::MIN_POSITIVE / 2.0), "0x0.8p-1022");
        assert_eq!(parse("0x1.8p+1").unwrap(), 3.0);
        assert!(parse("nan").unwrap().is_nan());
        assert!(parse("0x2p+0").is_err());
        assert!(parse("0x1.p+0").is_err());
        assert!(parse("1.5").is_err());
    }

    proptest! {
        #[test]
        fn round_trips_every_bit_pattern(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            let back = parse(&format(x)).unwrap();
            if x.is_nan() {
                prop_assert!(back.is_nan());
            } else {
                prop_assert_eq!(back.to_bits(), bits);
            }
        }
    }
}
