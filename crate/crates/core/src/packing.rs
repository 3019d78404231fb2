//! Decimal digit arithmetic for the block design: width-aware
//! concatenation, digit slicing, slot packing and the enlarged modulus
//! bound that keeps slot sums from carrying into each other.
//!
//! Slot 1 is the least-significant (rightmost) slot: blocks are built by
//! concatenating slot `count` down to slot 1 and are cut from right to
//! left.

use crate::numtheory::BigNat;
use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PackingError {
    #[error("value {value} does not fit in {width} decimal digits")]
    SlotOverflow { value: BigUint, width: u32 },
    #[error("input does not match the pack spec: {0}")]
    SpecMismatch(String),
    #[error("digit range {a}..{b} out of bounds for width {total_width}")]
    IndexError { a: u32, b: u32, total_width: u32 },
}

/// Fixed-width slot layout: `count` slots of `width` decimal digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackSpec {
    pub width: u32,
    pub count: u32,
}

impl PackSpec {
    pub fn new(width: u32, count: u32) -> Self {
        assert!(width >= 1 && count >= 1, "pack spec must be non-trivial");
        Self { width, count }
    }

    pub fn total_width(&self) -> u32 {
        self.width * self.count
    }
}

pub(crate) fn pow10(k: u32) -> BigUint {
    BigUint::from(10u32).pow(k)
}

/// Number of decimal digits; `num_digits(0) = 1`.
pub fn num_digits(x: &BigNat) -> u32 {
    if x.is_zero() {
        1
    } else {
        x.to_str_radix(10).len() as u32
    }
}

/// Width-aware concatenation: `x` followed by `y` left-padded with zeros
/// to `y_width` digits, i.e. `x * 10^y_width + y`.
pub fn concat(x: &BigNat, y: &BigNat, y_width: u32) -> Result<BigNat, PackingError> {
    if num_digits(y) > y_width {
        return Err(PackingError::SlotOverflow {
            value: y.clone(),
            width: y_width,
        });
    }
    Ok(x * pow10(y_width) + y)
}

/// Digits `a..=b` (1-based, leftmost first) of `x` left-padded with zeros
/// to `total_width` digits, returned as an integer.
pub fn slice_digits(x: &BigNat, a: u32, b: u32, total_width: u32) -> Result<BigNat, PackingError> {
    if a < 1 || a > b || b > total_width || num_digits(x) > total_width {
        return Err(PackingError::IndexError { a, b, total_width });
    }
    Ok(x / pow10(total_width - b) % pow10(b - a + 1))
}

/// Packs slot values into one integer, slot 1 least significant:
/// the sum of `values[l] * 10^(l * width)` over 0-based `l`.
pub fn pack(values: &[BigNat], spec: &PackSpec) -> Result<BigNat, PackingError> {
    if values.len() != spec.count as usize {
        return Err(PackingError::SpecMismatch(format!(
            "{} values for {} slots",
            values.len(),
            spec.count
        )));
    }
    let shift = pow10(spec.width);
    let mut acc = BigUint::zero();
    for v in values.iter().rev() {
        if num_digits(v) > spec.width {
            return Err(PackingError::SlotOverflow {
                value: v.clone(),
                width: spec.width,
            });
        }
        acc = acc * &shift + v;
    }
    Ok(acc)
}

/// Cuts a packed integer back into its slot values, least-significant
/// slot first. Inverse of [`pack`] as long as no slot ever overflowed.
pub fn unpack(packed: &BigNat, spec: &PackSpec) -> Result<Vec<BigNat>, PackingError> {
    if *packed >= pow10(spec.total_width()) {
        return Err(PackingError::SpecMismatch(format!(
            "packed value has more than {} digits",
            spec.total_width()
        )));
    }
    let shift = pow10(spec.width);
    let mut rest = packed.clone();
    let mut out = Vec::with_capacity(spec.count as usize);
    for _ in 0..spec.count {
        out.push(&rest % &shift);
        rest /= &shift;
    }
    Ok(out)
}

/// The enlarged modulus bound for packed operation: with `w =
/// num_digits(column_bound)`,
///
/// ```text
/// (10^(count*w) - 1) / (10^w - 1) * column_bound
/// ```
///
/// which strictly exceeds every possible sum of `count`-slot packings
/// whose per-slot column sums stay below `column_bound` (the repunit
/// factor places `column_bound` in every slot).
pub fn packed_alpha_bound(count: u32, column_bound: &BigNat) -> BigNat {
    let w = num_digits(column_bound);
    let repunit = (pow10(count * w) - 1u32) / (pow10(w) - 1u32);
    repunit * column_bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n(v: u64) -> BigNat {
        BigUint::from(v)
    }

    #[test]
    fn num_digits_cases() {
        assert_eq!(num_digits(&n(123)), 3);
        assert_eq!(num_digits(&n(0)), 1);
        for k in [0u32, 1, 5, 40] {
            assert_eq!(num_digits(&pow10(k)), k + 1);
        }
    }

    #[test]
    fn concat_cases() {
        assert_eq!(concat(&n(12), &n(345), 3).unwrap(), n(12345));
        assert_eq!(concat(&n(17), &n(9), 3).unwrap(), n(17009));
        for x in [1u64, 7, 1234] {
            assert_eq!(concat(&n(x), &n(0), 1).unwrap(), n(10 * x));
        }
        assert!(matches!(
            concat(&n(1), &n(345), 2),
            Err(PackingError::SlotOverflow { .. })
        ));
    }

    #[test]
    fn slice_digits_cases() {
        assert_eq!(slice_digits(&n(12345), 2, 4, 5).unwrap(), n(234));
        assert_eq!(slice_digits(&n(12345), 3, 5, 5).unwrap(), n(345));
        // 32033 left-padded to 032033; digits 1..3 are 032.
        assert_eq!(slice_digits(&n(32033), 1, 3, 6).unwrap(), n(32));
        assert!(matches!(
            slice_digits(&n(12345), 2, 6, 5),
            Err(PackingError::IndexError { .. })
        ));
        assert!(matches!(
            slice_digits(&n(12345), 0, 3, 5),
            Err(PackingError::IndexError { .. })
        ));
        assert!(matches!(
            slice_digits(&n(12345), 1, 3, 4),
            Err(PackingError::IndexError { .. })
        ));
    }

    #[test]
    fn pack_matches_worked_examples() {
        let spec = PackSpec::new(3, 2);
        assert_eq!(pack(&[n(9), n(17)], &spec).unwrap(), n(17009));
        assert_eq!(pack(&[n(24), n(15)], &spec).unwrap(), n(15024));
        assert_eq!(pack(&[n(0), n(0)], &spec).unwrap(), n(0));
        assert!(matches!(
            pack(&[n(1000), n(1)], &spec),
            Err(PackingError::SlotOverflow { .. })
        ));
        assert!(matches!(
            pack(&[n(1)], &spec),
            Err(PackingError::SpecMismatch(_))
        ));
    }

    #[test]
    fn unpack_matches_worked_example() {
        let spec = PackSpec::new(3, 2);
        assert_eq!(unpack(&n(32033), &spec).unwrap(), vec![n(33), n(32)]);
        // Leading-zero restoration: 5 is conceptually 000005.
        assert_eq!(unpack(&n(5), &spec).unwrap(), vec![n(5), n(0)]);
        assert!(matches!(
            unpack(&n(1_000_000), &spec),
            Err(PackingError::SpecMismatch(_))
        ));
    }

    #[test]
    fn block_sum_cut_worked_example() {
        // 017009 + 015024 = 032033, cut right-to-left every 3 digits
        // into 33 and 32.
        let spec = PackSpec::new(3, 2);
        let a = pack(&[n(9), n(17)], &spec).unwrap();
        let b = pack(&[n(24), n(15)], &spec).unwrap();
        let sum = a + b;
        assert_eq!(sum, n(32033));
        assert_eq!(unpack(&sum, &spec).unwrap(), vec![n(33), n(32)]);
    }

    #[test]
    fn packed_alpha_bound_cases() {
        // count=2, bound=200: w=3, (10^6-1)/(10^3-1) = 1001, times 200.
        // Equals the maximal packed sum 200<->200.
        let b = packed_alpha_bound(2, &n(200));
        assert_eq!(b, n(200_200));
        assert_eq!(
            b,
            pack(&[n(200), n(200)], &PackSpec::new(3, 2)).unwrap()
        );
        for bound in [1u64, 9, 42, 65000] {
            assert_eq!(packed_alpha_bound(1, &n(bound)), n(bound));
        }
        // count=3, bound=9: w=1, repunit 111, times 9 = 999.
        assert_eq!(packed_alpha_bound(3, &n(9)), n(999));
    }

    proptest! {
        #[test]
        fn concat_slice_duality(x in 0u64..10_000_000_000, y in 0u64..10_000_000_000, pad in 0u32..5) {
            let y_width = num_digits(&n(y)) + pad;
            let z = concat(&n(x), &n(y), y_width).unwrap();
            let total = num_digits(&n(x)) + y_width;
            let left = slice_digits(&z, 1, num_digits(&n(x)), total).unwrap();
            let right = slice_digits(&z, num_digits(&n(x)) + 1, total, total).unwrap();
            prop_assert_eq!(left, n(x));
            prop_assert_eq!(right, n(y));
        }

        #[test]
        fn pack_unpack_roundtrip(values in prop::collection::vec(0u64..100_000, 1..20)) {
            let spec = PackSpec::new(5, values.len() as u32);
            let vals: Vec<BigNat> = values.iter().map(|&v| n(v)).collect();
            let packed = pack(&vals, &spec).unwrap();
            prop_assert_eq!(unpack(&packed, &spec).unwrap(), vals);
        }

        #[test]
        fn num_digits_of_concat_adds_widths(x in 1u64..u64::MAX, y in 0u64..1_000_000, pad in 0u32..4) {
            let w = num_digits(&n(y)) + pad;
            let z = concat(&n(x), &n(y), w).unwrap();
            prop_assert_eq!(num_digits(&z), num_digits(&n(x)) + w);
        }

        #[test]
        fn pack_sum_homomorphism(
            rows in prop::collection::vec(prop::collection::vec(0u64..1000, 4), 1..50)
        ) {
            // Column sums stay below 50 * 1000 <= 10^width for width 5.
            let spec = PackSpec::new(5, 4);
            let mut total = BigUint::zero();
            let mut col_sums = [0u64; 4];
            for row in &rows {
                let vals: Vec<BigNat> = row.iter().map(|&v| n(v)).collect();
                total += pack(&vals, &spec).unwrap();
                for (c, &v) in col_sums.iter_mut().zip(row) {
                    *c += v;
                }
            }
            let want: Vec<BigNat> = col_sums.iter().map(|&v| n(v)).collect();
            prop_assert_eq!(unpack(&total, &spec).unwrap(), want);
        }

        #[test]
        fn packed_bound_prevents_carry(
            rows in prop::collection::vec(prop::collection::vec(0u64..700, 3), 1..30),
            column_bound in 21_000u64..100_000,
        ) {
            // Each column sum is below 30*700 = 21000 <= column_bound.
            let w = num_digits(&n(column_bound));
            let spec = PackSpec::new(w, 3);
            let mut total = BigUint::zero();
            for row in &rows {
                let vals: Vec<BigNat> = row.iter().map(|&v| n(v)).collect();
                total += pack(&vals, &spec).unwrap();
            }
            prop_assert!(total < packed_alpha_bound(3, &n(column_bound)));
        }
    }
}
