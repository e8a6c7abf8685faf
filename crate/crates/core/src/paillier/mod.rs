//! Additively homomorphic Paillier encryption.
//!
//! Three encryption/decryption paths are provided over the same key
//! material:
//!
//! * the textbook scheme, `c = g^m * r^n mod n^2` with an arbitrary
//!   generator and `m = L(c^lambda mod n^2) * mu mod n`;
//! * the `g = n + 1` variant, where `g^m mod n^2` collapses to `1 + m*n`
//!   and encryption costs a single exponentiation (`r^n`);
//! * CRT decryption, which performs the exponentiation modulo `p^2` and
//!   `q^2` with half-size exponents and recombines the residues.
//!
//! Every ciphertext carries the [`KeyId`] of the public key that produced
//! it, so ciphertexts from a retired key are rejected instead of silently
//! decrypting to garbage.

mod prime;
mod signed;
mod wire;

pub use prime::{is_probable_prime, random_prime, MR_ROUNDS};

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Smallest accepted modulus size. Anything this small is for tests only.
pub const MIN_KEY_BITS: u64 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PaillierError {
    #[error("invalid key size {bits}: must be even and at least {MIN_KEY_BITS}")]
    InvalidKeySize { bits: u64 },
    #[error("no {bits}-bit prime found after {attempts} candidates")]
    PrimeSearchExhausted { bits: u64, attempts: u64 },
    #[error("invalid prime factors: {0}")]
    InvalidPrimes(&'static str),
    #[error("generator does not satisfy gcd(L(g^lambda mod n^2), n) = 1")]
    InvalidGenerator,
    #[error("plaintext out of range [0, n)")]
    PlaintextOutOfRange,
    #[error("signed plaintext out of range (-n/2, n/2)")]
    SignedOutOfRange,
    #[error("value is not a unit modulo n")]
    NotAUnit,
    #[error("ciphertext out of range [0, n^2)")]
    CiphertextOutOfRange,
    #[error("key mismatch: expected {expected}, found {found}")]
    KeyMismatch { expected: KeyId, found: KeyId },
    #[error("operation requires a key with g = n + 1")]
    RequiresNPlusOne,
    #[error("malformed ciphertext encoding: {0}")]
    Malformed(&'static str),
}

pub type Result<T, E = PaillierError> = std::result::Result<T, E>;

/// How the public generator `g` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    /// `g` sampled uniformly from `Z*_{n^2}`.
    RandomG,
    /// `g = n + 1`.
    NPlusOne,
}

/// Truncated SHA-256 fingerprint of a modulus.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeyId(#[serde(with = "hex::serde")] pub [u8; 16]);

impl KeyId {
    pub fn of_modulus(n: &BigUint) -> Self {
        let digest = Sha256::digest(n.to_bytes_be());
        let mut id = [0u8; 16];
        id.copy_from_slice(&digest[..16]);
        KeyId(id)
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(&self.0[..8]))
    }
}

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId({self})")
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    g: BigUint,
    n_sq: BigUint,
    mode: GeneratorMode,
    key_id: KeyId,
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PublicKey")
            .field("bits", &self.n.bits())
            .field("mode", &self.mode)
            .field("key_id", &self.key_id)
            .finish()
    }
}

/// Values needed by CRT decryption.
#[derive(Clone, PartialEq, Eq)]
pub struct CrtPrecomp {
    pub p_sq: BigUint,
    pub q_sq: BigUint,
    p_minus_1: BigUint,
    q_minus_1: BigUint,
    /// `L_p(g^(p-1) mod p^2)^-1 mod p`
    pub h_p: BigUint,
    /// `L_q(g^(q-1) mod q^2)^-1 mod q`
    pub h_q: BigUint,
    pub p_inv_mod_q: BigUint,
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey {
    public: PublicKey,
    p: BigUint,
    q: BigUint,
    lambda: BigUint,
    mu: BigUint,
    crt: CrtPrecomp,
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivateKey")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

/// An element of `Z*_{n^2}` tagged with the key that produced it.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    c: BigUint,
    key_id: KeyId,
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({}, {} bits)", self.key_id, self.c.bits())
    }
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.c
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }
}

/// `L(x) = (x - 1) / d`.
fn ell(x: &BigUint, d: &BigUint) -> BigUint {
    (x - 1u32) / d
}

/// Generates a fresh keypair with a `bits`-bit modulus.
pub fn keygen<R: RngCore + CryptoRng>(
    bits: u64,
    mode: GeneratorMode,
    rng: &mut R,
) -> Result<(PublicKey, PrivateKey)> {
    if bits < MIN_KEY_BITS || !bits.is_multiple_of(2) {
        return Err(PaillierError::InvalidKeySize { bits });
    }
    let half = bits / 2;
    // A few redraws cover p == q and the (rare) gcd(n, phi) != 1 case.
    for _ in 0..64 {
        let p = random_prime(half, rng)?;
        let q = random_prime(half, rng)?;
        match keypair_from_primes(p, q, mode, rng) {
            Ok(pair) => return Ok(pair),
            Err(PaillierError::InvalidPrimes(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(PaillierError::PrimeSearchExhausted {
        bits: half,
        attempts: 64,
    })
}

/// [`keygen`] driven by a ChaCha20 stream, seeded from `seed` or the OS.
pub fn keygen_seeded(
    bits: u64,
    mode: GeneratorMode,
    seed: Option<u64>,
) -> Result<(PublicKey, PrivateKey)> {
    let mut rng = match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    };
    keygen(bits, mode, &mut rng)
}

/// Builds a keypair from caller-chosen primes.
///
/// This is the hook used for the small hand-checkable keys in tests. In
/// [`GeneratorMode::RandomG`] the generator is drawn from `rng` until the
/// `gcd(L(g^lambda mod n^2), n) = 1` condition holds.
pub fn keypair_from_primes<R: RngCore + CryptoRng>(
    p: BigUint,
    q: BigUint,
    mode: GeneratorMode,
    rng: &mut R,
) -> Result<(PublicKey, PrivateKey)> {
    if p == q {
        return Err(PaillierError::InvalidPrimes("p == q"));
    }
    if p.bits() != q.bits() {
        return Err(PaillierError::InvalidPrimes("p and q differ in bit length"));
    }
    if !is_probable_prime(&p, rng) || !is_probable_prime(&q, rng) {
        return Err(PaillierError::InvalidPrimes("factor is not prime"));
    }
    let n = &p * &q;
    let phi = (&p - 1u32) * (&q - 1u32);
    if !n.gcd(&phi).is_one() {
        return Err(PaillierError::InvalidPrimes("gcd(n, (p-1)(q-1)) != 1"));
    }
    let n_sq = &n * &n;
    let lambda = (&p - 1u32).lcm(&(&q - 1u32));

    let g = match mode {
        GeneratorMode::NPlusOne => &n + 1u32,
        GeneratorMode::RandomG => loop {
            let g = rng.gen_biguint_below(&n_sq);
            if g.is_zero() || !g.gcd(&n).is_one() {
                continue;
            }
            let l = ell(&g.modpow(&lambda, &n_sq), &n);
            if l.gcd(&n).is_one() {
                break g;
            }
        },
    };
    let public = PublicKey::from_parts(n, g)?;
    debug_assert_eq!(public.n_sq, n_sq);
    let private = PrivateKey::from_factors(public.clone(), p, q)?;
    Ok((public, private))
}

impl PublicKey {
    /// Assembles a public key from `(n, g)`, e.g. after receiving it over the
    /// wire. The mode is [`GeneratorMode::NPlusOne`] exactly when `g = n + 1`.
    pub fn from_parts(n: BigUint, g: BigUint) -> Result<Self> {
        if n < BigUint::from(6u32) {
            return Err(PaillierError::InvalidKeySize { bits: n.bits() });
        }
        let n_sq = &n * &n;
        if g.is_zero() || g >= n_sq || !g.gcd(&n).is_one() {
            return Err(PaillierError::InvalidGenerator);
        }
        let mode = if g == &n + 1u32 {
            GeneratorMode::NPlusOne
        } else {
            GeneratorMode::RandomG
        };
        let key_id = KeyId::of_modulus(&n);
        Ok(PublicKey {
            n,
            g,
            n_sq,
            mode,
            key_id,
        })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_sq
    }

    pub fn mode(&self) -> GeneratorMode {
        self.mode
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    /// Uniform `r` in `[1, n)` with `gcd(r, n) = 1`.
    pub fn random_unit<R: RngCore + CryptoRng>(&self, rng: &mut R) -> BigUint {
        loop {
            let r = rng.gen_biguint_range(&BigUint::one(), &self.n);
            if r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }

    fn check_plaintext(&self, m: &BigUint) -> Result<()> {
        if m >= &self.n {
            return Err(PaillierError::PlaintextOutOfRange);
        }
        Ok(())
    }

    fn check_unit(&self, r: &BigUint) -> Result<()> {
        if r.is_zero() || !r.gcd(&self.n).is_one() {
            return Err(PaillierError::NotAUnit);
        }
        Ok(())
    }

    fn wrap(&self, c: BigUint) -> Ciphertext {
        Ciphertext {
            c,
            key_id: self.key_id,
        }
    }

    pub(crate) fn check_key(&self, ct: &Ciphertext) -> Result<()> {
        if ct.key_id != self.key_id {
            return Err(PaillierError::KeyMismatch {
                expected: self.key_id,
                found: ct.key_id,
            });
        }
        Ok(())
    }

    /// `c = g^m * r^n mod n^2` with explicit randomness.
    pub fn encrypt_standard_with(&self, m: &BigUint, r: &BigUint) -> Result<Ciphertext> {
        self.check_plaintext(m)?;
        self.check_unit(r)?;
        let gm = self.g.modpow(m, &self.n_sq);
        let rn = r.modpow(&self.n, &self.n_sq);
        Ok(self.wrap(gm * rn % &self.n_sq))
    }

    pub fn encrypt_standard<R: RngCore + CryptoRng>(
        &self,
        m: &BigUint,
        rng: &mut R,
    ) -> Result<Ciphertext> {
        let r = self.random_unit(rng);
        self.encrypt_standard_with(m, &r)
    }

    /// `c = (1 + m*n) * r^n mod n^2`. Only valid when `g = n + 1`.
    pub fn encrypt_optimized_with(&self, m: &BigUint, r: &BigUint) -> Result<Ciphertext> {
        if self.mode != GeneratorMode::NPlusOne {
            return Err(PaillierError::RequiresNPlusOne);
        }
        self.check_plaintext(m)?;
        self.check_unit(r)?;
        let gm = (m * &self.n + 1u32) % &self.n_sq;
        let rn = r.modpow(&self.n, &self.n_sq);
        Ok(self.wrap(gm * rn % &self.n_sq))
    }

    pub fn encrypt_optimized<R: RngCore + CryptoRng>(
        &self,
        m: &BigUint,
        rng: &mut R,
    ) -> Result<Ciphertext> {
        let r = self.random_unit(rng);
        self.encrypt_optimized_with(m, &r)
    }

    /// Encrypts with the cheapest path the key supports.
    pub fn encrypt<R: RngCore + CryptoRng>(&self, m: &BigUint, rng: &mut R) -> Result<Ciphertext> {
        match self.mode {
            GeneratorMode::NPlusOne => self.encrypt_optimized(m, rng),
            GeneratorMode::RandomG => self.encrypt_standard(m, rng),
        }
    }

    /// `E(a) * E(b) mod n^2`, an encryption of `a + b mod n`.
    pub fn he_add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check_key(a)?;
        self.check_key(b)?;
        Ok(self.wrap(&a.c * &b.c % &self.n_sq))
    }

    /// `E(a) * E(b)^-1 mod n^2`, an encryption of `a - b mod n`.
    pub fn he_sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check_key(a)?;
        self.check_key(b)?;
        let inv = b.c.modinv(&self.n_sq).ok_or(PaillierError::NotAUnit)?;
        Ok(self.wrap(&a.c * inv % &self.n_sq))
    }

    /// Re-tags a raw residue as a ciphertext under this key after checking
    /// that it is a unit of `Z_{n^2}`.
    pub fn ciphertext_from_value(&self, c: BigUint) -> Result<Ciphertext> {
        if c >= self.n_sq {
            return Err(PaillierError::CiphertextOutOfRange);
        }
        self.check_unit(&c)?;
        Ok(self.wrap(c))
    }
}

impl PrivateKey {
    /// Derives `lambda`, `mu` and the CRT constants from the factorization of
    /// `public.n()`.
    pub fn from_factors(public: PublicKey, p: BigUint, q: BigUint) -> Result<Self> {
        if &p * &q != public.n {
            return Err(PaillierError::InvalidPrimes("p * q != n"));
        }
        if p == q {
            return Err(PaillierError::InvalidPrimes("p == q"));
        }
        let n = &public.n;
        let p_minus_1 = &p - 1u32;
        let q_minus_1 = &q - 1u32;
        let lambda = p_minus_1.lcm(&q_minus_1);

        let mu = match public.mode {
            // L((1+n)^lambda mod n^2) = lambda mod n
            GeneratorMode::NPlusOne => lambda.modinv(n),
            GeneratorMode::RandomG => {
                ell(&public.g.modpow(&lambda, &public.n_sq), n).modinv(n)
            }
        }
        .ok_or(PaillierError::InvalidGenerator)?;

        let p_sq = &p * &p;
        let q_sq = &q * &q;
        let h_p = ell(&public.g.modpow(&p_minus_1, &p_sq), &p)
            .modinv(&p)
            .ok_or(PaillierError::InvalidGenerator)?;
        let h_q = ell(&public.g.modpow(&q_minus_1, &q_sq), &q)
            .modinv(&q)
            .ok_or(PaillierError::InvalidGenerator)?;
        let p_inv_mod_q = p
            .modinv(&q)
            .ok_or(PaillierError::InvalidPrimes("p not invertible mod q"))?;

        Ok(PrivateKey {
            public,
            p,
            q,
            lambda,
            mu,
            crt: CrtPrecomp {
                p_sq,
                q_sq,
                p_minus_1,
                q_minus_1,
                h_p,
                h_q,
                p_inv_mod_q,
            },
        })
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }

    pub fn crt(&self) -> &CrtPrecomp {
        &self.crt
    }

    fn check(&self, ct: &Ciphertext) -> Result<()> {
        self.public.check_key(ct)?;
        if ct.c >= self.public.n_sq {
            return Err(PaillierError::CiphertextOutOfRange);
        }
        Ok(())
    }

    /// `m = L(c^lambda mod n^2) * mu mod n`.
    pub fn decrypt_standard(&self, ct: &Ciphertext) -> Result<BigUint> {
        self.check(ct)?;
        let n = &self.public.n;
        let u = ct.c.modpow(&self.lambda, &self.public.n_sq);
        Ok(ell(&u, n) * &self.mu % n)
    }

    /// Decryption for `g = n + 1` keys, where `mu = lambda^-1 mod n` and the
    /// generator never enters the computation.
    pub fn decrypt_optimized(&self, ct: &Ciphertext) -> Result<BigUint> {
        if self.public.mode != GeneratorMode::NPlusOne {
            return Err(PaillierError::RequiresNPlusOne);
        }
        self.check(ct)?;
        let n = &self.public.n;
        let u = ct.c.modpow(&self.lambda, &self.public.n_sq);
        Ok(ell(&u, n) * &self.mu % n)
    }

    /// CRT decryption: exponentiate modulo `p^2` and `q^2` separately, then
    /// recombine with `m = m_p + ((m_q - m_p) * p^-1 mod q) * p`.
    pub fn decrypt_crt(&self, ct: &Ciphertext) -> Result<BigUint> {
        self.check(ct)?;
        let (m_p, m_q) = self.crt_residues(&ct.c);
        Ok(self.crt_combine(&m_p, &m_q))
    }

    /// `(m mod p, m mod q)` computed in `Z_{p^2}` and `Z_{q^2}`.
    pub fn crt_residues(&self, c: &BigUint) -> (BigUint, BigUint) {
        let k = &self.crt;
        let up = (c % &k.p_sq).modpow(&k.p_minus_1, &k.p_sq);
        let m_p = ell(&up, &self.p) * &k.h_p % &self.p;
        let uq = (c % &k.q_sq).modpow(&k.q_minus_1, &k.q_sq);
        let m_q = ell(&uq, &self.q) * &k.h_q % &self.q;
        (m_p, m_q)
    }

    /// Garner recombination of residues mod `p` and mod `q` into `Z_n`.
    pub fn crt_combine(&self, m_p: &BigUint, m_q: &BigUint) -> BigUint {
        let q = &self.q;
        // (m_q - m_p) mod q without going negative
        let diff = (m_q + q - (m_p % q)) % q;
        let t = diff * &self.crt.p_inv_mod_q % q;
        m_p + t * &self.p
    }

    /// Default decryption path (CRT).
    pub fn decrypt(&self, ct: &Ciphertext) -> Result<BigUint> {
        self.decrypt_crt(ct)
    }
}
