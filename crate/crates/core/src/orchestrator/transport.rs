//! Hand-over of the round secret key to matched users.
//!
//! The factors `p || q` are written as fixed-width big-endian bytes, cut into
//! chunks that stay below half the recipient's modulus, and each chunk is
//! encrypted with the recipient's `g = n + 1` personal key.

use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};

use crate::error::{Error, Result};
use crate::paillier::{Ciphertext, PrivateKey, PublicKey};

/// Byte width of one round-key factor, derived from the round modulus alone.
pub fn factor_width(round_pk: &PublicKey) -> usize {
    let factor_bits = round_pk.bits().div_ceil(2);
    factor_bits.div_ceil(8) as usize
}

/// Largest chunk, in bytes, whose value is always below `n / 2`.
pub fn chunk_bytes(personal_pk: &PublicKey) -> Result<usize> {
    let c = personal_pk.bits().saturating_sub(2) / 8;
    if c == 0 {
        return Err(Error::KeyTransport("personal key too small to carry any chunk"));
    }
    Ok(c as usize)
}

fn to_fixed(v: &BigUint, width: usize) -> Result<Vec<u8>> {
    let raw = v.to_bytes_be();
    if raw.len() > width {
        return Err(Error::KeyTransport("factor wider than the round modulus allows"));
    }
    let mut out = vec![0u8; width - raw.len()];
    out.extend_from_slice(&raw);
    Ok(out)
}

/// `p || q` as `2 * factor_width` bytes.
pub fn serialize_secret(round_sk: &PrivateKey) -> Result<Vec<u8>> {
    let width = factor_width(round_sk.public_key());
    let mut bytes = to_fixed(round_sk.p(), width)?;
    bytes.extend(to_fixed(round_sk.q(), width)?);
    Ok(bytes)
}

/// Rebuilds the round key from `p || q`; fails if the factors do not
/// reproduce the round modulus.
pub fn deserialize_secret(round_pk: &PublicKey, bytes: &[u8]) -> Result<PrivateKey> {
    let width = factor_width(round_pk);
    if bytes.len() != 2 * width {
        return Err(Error::KeyTransport("secret has the wrong length"));
    }
    let p = BigUint::from_bytes_be(&bytes[..width]);
    let q = BigUint::from_bytes_be(&bytes[width..]);
    Ok(PrivateKey::from_factors(round_pk.clone(), p, q)?)
}

/// Encrypts `secret` chunk-wise under `personal_pk` with the optimized
/// encryption. Returns one ciphertext per chunk.
pub fn seal<R: RngCore + CryptoRng>(
    secret: &[u8],
    personal_pk: &PublicKey,
    rng: &mut R,
) -> Result<Vec<Ciphertext>> {
    let size = chunk_bytes(personal_pk)?;
    secret
        .chunks(size)
        .map(|chunk| {
            let m = BigUint::from_bytes_be(chunk);
            Ok(personal_pk.encrypt_optimized(&m, rng)?)
        })
        .collect()
}

/// Inverse of [`seal`]; `total_len` is the secret length in bytes.
pub fn open(sealed: &[Ciphertext], personal_sk: &PrivateKey, total_len: usize) -> Result<Vec<u8>> {
    let size = chunk_bytes(personal_sk.public_key())?;
    if sealed.len() != total_len.div_ceil(size) {
        return Err(Error::KeyTransport("unexpected chunk count"));
    }
    let mut out = Vec::with_capacity(total_len);
    for (i, ct) in sealed.iter().enumerate() {
        let want = size.min(total_len - i * size);
        let m = personal_sk.decrypt_optimized(ct)?;
        let raw = m.to_bytes_be();
        let raw: &[u8] = if m == BigUint::default() { &[] } else { &raw };
        if raw.len() > want {
            return Err(Error::KeyTransport("chunk exceeds its width"));
        }
        out.resize(out.len() + want - raw.len(), 0);
        out.extend_from_slice(raw);
    }
    Ok(out)
}
