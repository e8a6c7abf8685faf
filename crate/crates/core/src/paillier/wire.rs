//! Byte and JSON encodings of ciphertexts.
//!
//! Binary layout: `key_id (16 bytes) || len (u32, big-endian) || c (len
//! bytes, big-endian)`.

use num_bigint::BigUint;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Ciphertext, KeyId, PaillierError, PublicKey, Result};

const HEADER_LEN: usize = 16 + 4;

impl Ciphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let body = self.c.to_bytes_be();
        let mut out = Vec::with_capacity(HEADER_LEN + body.len());
        out.extend_from_slice(&self.key_id.0);
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }

    /// Parses the binary layout without checking the value against a key;
    /// use [`PublicKey::ciphertext_from_bytes`] for untrusted input.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(PaillierError::Malformed("truncated header"));
        }
        let mut id = [0u8; 16];
        id.copy_from_slice(&bytes[..16]);
        let len = u32::from_be_bytes(bytes[16..20].try_into().unwrap()) as usize;
        let body = &bytes[HEADER_LEN..];
        if body.len() != len {
            return Err(PaillierError::Malformed("length prefix mismatch"));
        }
        Ok(Ciphertext {
            c: BigUint::from_bytes_be(body),
            key_id: KeyId(id),
        })
    }

    /// Size of [`Ciphertext::to_bytes`] without allocating.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.c.bits().div_ceil(8) as usize
    }
}

impl PublicKey {
    /// Parses and validates a ciphertext addressed to this key.
    pub fn ciphertext_from_bytes(&self, bytes: &[u8]) -> Result<Ciphertext> {
        let ct = Ciphertext::from_bytes(bytes)?;
        self.check_key(&ct)?;
        self.ciphertext_from_value(ct.c)
    }
}

#[derive(Serialize, Deserialize)]
struct CiphertextRepr {
    key_id: KeyId,
    #[serde(with = "hex::serde")]
    c: Vec<u8>,
}

impl Serialize for Ciphertext {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CiphertextRepr {
            key_id: self.key_id,
            c: self.c.to_bytes_be(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ciphertext {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = CiphertextRepr::deserialize(d)?;
        Ok(Ciphertext {
            c: BigUint::from_bytes_be(&repr.c),
            key_id: repr.key_id,
        })
    }
}
