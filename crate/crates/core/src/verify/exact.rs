// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exact comparison of sums of `f64` values: every finite double is an
//! integer multiple of `2^-1074`, so scaling by `2^1074` turns sums into
//! big-integer arithmetic with no rounding at all.

use num_bigint::BigInt;

pub(crate) fn scaled(x: f64) -> BigInt {
    assert!(x.is_finite() && x >= 0.0, "exact scaling expects a finite non-negative value, got {x}");
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, exp) = if biased == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), biased - 1075)
    };
    BigInt::from(mantissa) << ((exp + 1074) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_is_exact() {
        assert_eq!(scaled(0.0), BigInt::from(0));
        assert_eq!(scaled(1.0), BigInt::from(1) << 1074usize);
        assert_eq!(scaled(0.5) * 2, scaled(1.0));
        assert_eq!(scaled(f64::from_bits(1)), BigInt::from(1));
        // 0.1 + 0.2 != 0.3 in doubles, and the exact sums say so too.
        assert_ne!(scaled(0.1) + scaled(0.2), scaled(0.3));
    }
}
