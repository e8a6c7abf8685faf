//! Half-range signed encoding of plaintexts.
//!
//! A signed value `v` with `|v| < n/2` is stored as `v mod n`. Residues up
//! to `floor(n/2)` decode as themselves, larger ones as `m - n`.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{Signed, ToPrimitive};

use super::{PaillierError, PublicKey, Result};

impl PublicKey {
    pub fn encode_signed(&self, v: &BigInt) -> Result<BigUint> {
        let n = BigInt::from(self.n.clone());
        // |v| < n/2  <=>  2|v| < n
        if v.abs() * 2 >= n {
            return Err(PaillierError::SignedOutOfRange);
        }
        let m = ((v % &n) + &n) % &n;
        Ok(m.to_biguint().expect("reduced residue is non-negative"))
    }

    pub fn decode_signed(&self, m: &BigUint) -> BigInt {
        let half = &self.n >> 1u32;
        let m = m % &self.n;
        if m <= half {
            BigInt::from_biguint(Sign::Plus, m)
        } else {
            BigInt::from_biguint(Sign::Plus, m) - BigInt::from(self.n.clone())
        }
    }

    pub fn encode_i64(&self, v: i64) -> Result<BigUint> {
        self.encode_signed(&BigInt::from(v))
    }

    /// Decodes into an `i64`, failing if the value does not fit.
    pub fn decode_i64(&self, m: &BigUint) -> Result<i64> {
        self.decode_signed(m)
            .to_i64()
            .ok_or(PaillierError::SignedOutOfRange)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny_key;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tiny_key_vectors() {
        let (pk, _) = tiny_key();
        assert_eq!(pk.encode_i64(-3).unwrap(), BigUint::from(32u32));
        assert_eq!(pk.decode_i64(&BigUint::from(32u32)).unwrap(), -3);
        assert_eq!(pk.decode_i64(&BigUint::from(17u32)).unwrap(), 17);
        assert_eq!(pk.decode_i64(&BigUint::from(18u32)).unwrap(), -17);
    }

    #[test]
    fn tiny_key_exhaustive() {
        let (pk, _) = tiny_key();
        for v in -17i64..=17 {
            assert_eq!(pk.decode_i64(&pk.encode_i64(v).unwrap()).unwrap(), v);
        }
        for v in [18i64, -18, 35, i64::MIN] {
            assert_eq!(pk.encode_i64(v), Err(PaillierError::SignedOutOfRange));
        }
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(v in -(1i64 << 40)..(1i64 << 40)) {
            let (pk, _) = crate::paillier::keygen_seeded(
                96, crate::paillier::GeneratorMode::NPlusOne, Some(4)).unwrap();
            prop_assert_eq!(pk.decode_i64(&pk.encode_i64(v).unwrap()).unwrap(), v);
        }
    }
}
