//! Probabilistic prime generation.
//!
//! Candidates are sieved by trial division against the primes below
//! [`SIEVE_LIMIT`] and then put through Miller-Rabin with random bases.
//! [`MR_ROUNDS`] rounds bound the error probability by `4^-64 = 2^-128`.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, ToPrimitive, Zero};
use rand::{CryptoRng, RngCore};
use std::sync::OnceLock;

use super::PaillierError;

/// Miller-Rabin rounds with independent random bases.
pub const MR_ROUNDS: usize = 64;

const SIEVE_LIMIT: u32 = 2000;

fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let mut composite = vec![false; SIEVE_LIMIT as usize];
        let mut primes = Vec::new();
        for i in 2..SIEVE_LIMIT as usize {
            if !composite[i] {
                primes.push(i as u32);
                let mut j = i * i;
                while j < SIEVE_LIMIT as usize {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        primes
    })
}

/// Returns `true` if `n` is prime with error probability at most `2^-128`.
///
/// Numbers below `SIEVE_LIMIT^2` are decided exactly by trial division.
pub fn is_probable_prime<R: RngCore + CryptoRng>(n: &BigUint, rng: &mut R) -> bool {
    if n < &BigUint::from(2u32) {
        return false;
    }
    for &sp in small_primes() {
        let sp_big = BigUint::from(sp);
        if n == &sp_big {
            return true;
        }
        if (n % sp).is_zero() {
            return false;
        }
    }
    let limit = u64::from(SIEVE_LIMIT);
    if n.to_u64().is_some_and(|v| v < limit * limit) {
        return true;
    }
    miller_rabin(n, MR_ROUNDS, rng)
}

fn miller_rabin<R: RngCore + CryptoRng>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let one = BigUint::one();
    let two = BigUint::from(2u32);
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;

    'witness: for _ in 0..rounds {
        // base in [2, n-2]
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
            if x == one {
                return false;
            }
        }
        return false;
    }
    true
}

/// Draws a random prime of exactly `bits` bits with its two top bits set,
/// so that the product of two such primes has exactly `2 * bits` bits.
pub fn random_prime<R: RngCore + CryptoRng>(
    bits: u64,
    rng: &mut R,
) -> Result<BigUint, PaillierError> {
    if bits < 3 {
        return Err(PaillierError::InvalidKeySize { bits: bits * 2 });
    }
    let max_attempts = 64 * bits.max(64);
    for _ in 0..max_attempts {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, rng) {
            return Ok(candidate);
        }
    }
    Err(PaillierError::PrimeSearchExhausted {
        bits,
        attempts: max_attempts,
    })
}
