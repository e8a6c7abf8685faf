//! Timing of the encryption and decryption variants.
//!
//! Both keys share the same primes: the `RandomG` key is the baseline for
//! standard encryption and for both decryptions, the `g = n + 1` key is used
//! for optimized encryption. Plaintexts are uniform in `[0, n)` so the
//! baseline pays a full `g^m` exponentiation.
//!
//! Warmup iterations are discarded. Each of `repeats` outer runs times
//! `trials` calls per operation, interleaved call by call so that load drift
//! hits every variant alike; the reported median is the median of the
//! per-run medians, while mean and standard deviation cover every sample.

use std::fmt;
use std::hint::black_box;
use std::time::Instant;

use num_bigint::{BigUint, RandBigInt};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paillier::{keypair_from_primes, random_prime, Ciphertext, GeneratorMode, PrivateKey, PublicKey};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub bits: u64,
    pub trials: usize,
    pub warmup: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            bits: 2048,
            trials: 200,
            warmup: 20,
            repeats: 50,
            seed: 1,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.trials <= self.warmup {
            return Err(Error::InvalidConfig("bench needs trials > warmup".into()));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("bench needs at least one repeat".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchOp {
    EncryptStandard,
    EncryptOptimized,
    DecryptStandard,
    DecryptCrt,
}

impl BenchOp {
    pub const ALL: [BenchOp; 4] = [
        BenchOp::EncryptStandard,
        BenchOp::EncryptOptimized,
        BenchOp::DecryptStandard,
        BenchOp::DecryptCrt,
    ];

    pub fn variant(self) -> &'static str {
        match self {
            BenchOp::EncryptStandard => "random_g",
            BenchOp::EncryptOptimized => "n_plus_one",
            BenchOp::DecryptStandard => "standard",
            BenchOp::DecryptCrt => "crt",
        }
    }

    pub fn op(self) -> &'static str {
        match self {
            BenchOp::EncryptStandard => "encrypt_standard",
            BenchOp::EncryptOptimized => "encrypt_optimized",
            BenchOp::DecryptStandard => "decrypt_standard",
            BenchOp::DecryptCrt => "decrypt_crt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub variant: &'static str,
    pub op: &'static str,
    pub bits: u64,
    pub trials: usize,
    pub mean_ns: f64,
    pub median_ns: f64,
    pub stddev_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, op: BenchOp) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.op == op.op())
    }

    fn ratio(&self, num: BenchOp, den: BenchOp) -> Option<f64> {
        Some(self.row(num)?.median_ns / self.row(den)?.median_ns)
    }

    /// `median(decrypt_crt) / median(decrypt_standard)`.
    pub fn crt_ratio(&self) -> Option<f64> {
        self.ratio(BenchOp::DecryptCrt, BenchOp::DecryptStandard)
    }

    /// `median(encrypt_optimized) / median(encrypt_standard)`.
    pub fn encrypt_ratio(&self) -> Option<f64> {
        self.ratio(BenchOp::EncryptOptimized, BenchOp::EncryptStandard)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,op,bits,trials,mean_ns,median_ns,stddev_ns\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.0},{:.0},{:.0}\n",
                r.variant, r.op, r.bits, r.trials, r.mean_ns, r.median_ns, r.stddev_ns
            ));
        }
        out
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            writeln!(
                f,
                "{:<18} {:>5} bits  median {:>10.3} ms  mean {:>10.3} ms  sd {:>8.3} ms  (n={})",
                r.op,
                r.bits,
                r.median_ns / 1e6,
                r.mean_ns / 1e6,
                r.stddev_ns / 1e6,
                r.trials
            )?;
        }
        if let Some(r) = self.crt_ratio() {
            writeln!(f, "crt / standard decryption:     {r:.3}")?;
        }
        if let Some(r) = self.encrypt_ratio() {
            writeln!(f, "optimized / standard encryption: {r:.3}")?;
        }
        Ok(())
    }
}

struct Fixture {
    random_g: PublicKey,
    n_plus_one: PublicKey,
    sk: PrivateKey,
    plaintexts: Vec<BigUint>,
    units: Vec<BigUint>,
    ciphertexts: Vec<Ciphertext>,
}

const POOL: usize = 16;

fn fixture(cfg: &BenchConfig) -> Result<Fixture> {
    if cfg.bits < 16 || !cfg.bits.is_multiple_of(2) {
        return Err(crate::paillier::PaillierError::InvalidKeySize { bits: cfg.bits }.into());
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let (random_g, sk, n_plus_one) = loop {
        let p = random_prime(cfg.bits / 2, &mut rng)?;
        let q = random_prime(cfg.bits / 2, &mut rng)?;
        let Ok((pk_g, sk)) = keypair_from_primes(p.clone(), q.clone(), GeneratorMode::RandomG, &mut rng)
        else {
            continue;
        };
        let (pk_n, _) = keypair_from_primes(p, q, GeneratorMode::NPlusOne, &mut rng)?;
        break (pk_g, sk, pk_n);
    };
    let n = random_g.n().clone();
    let plaintexts: Vec<BigUint> = (0..POOL).map(|_| rng.gen_biguint_below(&n)).collect();
    let units: Vec<BigUint> = (0..POOL).map(|_| random_g.random_unit(&mut rng)).collect();
    let ciphertexts = plaintexts
        .iter()
        .zip(&units)
        .map(|(m, r)| random_g.encrypt_standard_with(m, r))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Fixture {
        random_g,
        n_plus_one,
        sk,
        plaintexts,
        units,
        ciphertexts,
    })
}

/// Checks every variant on the fixture inputs. Runs outside timing.
fn validate(fx: &Fixture) -> Result<()> {
    let bad = || Error::InvalidConfig("benchmark variants disagree".into());
    for ((m, r), ct) in fx.plaintexts.iter().zip(&fx.units).zip(&fx.ciphertexts) {
        let std = fx.sk.decrypt_standard(ct)?;
        let crt = fx.sk.decrypt_crt(ct)?;
        if &std != m || &crt != m {
            return Err(bad());
        }
        let opt = fx.n_plus_one.encrypt_optimized_with(m, r)?;
        let via_std = fx.n_plus_one.encrypt_standard_with(m, r)?;
        if opt != via_std {
            return Err(bad());
        }
    }
    Ok(())
}

fn run_once(fx: &Fixture, op: BenchOp, i: usize) -> Result<()> {
    let j = i % POOL;
    match op {
        BenchOp::EncryptStandard => {
            black_box(fx.random_g.encrypt_standard_with(&fx.plaintexts[j], &fx.units[j])?);
        }
        BenchOp::EncryptOptimized => {
            black_box(fx.n_plus_one.encrypt_optimized_with(&fx.plaintexts[j], &fx.units[j])?);
        }
        BenchOp::DecryptStandard => {
            black_box(fx.sk.decrypt_standard(&fx.ciphertexts[j])?);
        }
        BenchOp::DecryptCrt => {
            black_box(fx.sk.decrypt_crt(&fx.ciphertexts[j])?);
        }
    }
    Ok(())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Times the given operations. Single-threaded.
pub fn bench_ops(cfg: &BenchConfig, ops: &[BenchOp]) -> Result<BenchReport> {
    cfg.validate()?;
    let fx = fixture(cfg)?;
    validate(&fx)?;

    for &op in ops {
        for i in 0..cfg.warmup {
            run_once(&fx, op, i)?;
        }
    }
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.trials * cfg.repeats); ops.len()];
    let mut run_medians: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.repeats); ops.len()];
    for _ in 0..cfg.repeats {
        let mut runs: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.trials); ops.len()];
        for i in 0..cfg.trials {
            for (slot, &op) in ops.iter().enumerate() {
                let start = Instant::now();
                run_once(&fx, op, i)?;
                runs[slot].push(start.elapsed().as_nanos() as f64);
            }
        }
        for (slot, run) in runs.iter_mut().enumerate() {
            samples[slot].extend_from_slice(run);
            run_medians[slot].push(median(run));
        }
    }

    let rows = ops
        .iter()
        .enumerate()
        .map(|(slot, &op)| {
            let all = &samples[slot];
            let mean = all.iter().sum::<f64>() / all.len() as f64;
            let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / all.len() as f64;
            BenchRow {
                variant: op.variant(),
                op: op.op(),
                bits: cfg.bits,
                trials: cfg.trials,
                mean_ns: mean,
                median_ns: median(&mut run_medians[slot]),
                stddev_ns: var.sqrt(),
            }
        })
        .collect();
    Ok(BenchReport { rows })
}

/// Times all four variants.
pub fn bench_crypto(cfg: &BenchConfig) -> Result<BenchReport> {
    bench_ops(cfg, &BenchOp::ALL)
}
