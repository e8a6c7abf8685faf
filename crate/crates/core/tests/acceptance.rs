//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use pcpshare::bench::{bench_ops, BenchConfig, BenchOp};
use pcpshare::counters::OpCounters;
use pcpshare::matching::DemandPolicy;
use pcpshare::oracle::oracle_match;
use pcpshare::orchestrator::{Market, MarketConfig};
use pcpshare::paillier::{
    keygen, keypair_from_primes, Ciphertext, GeneratorMode, PaillierError, PrivateKey, PublicKey,
};
use pcpshare::protocol::{encrypt_buyer, pair_process, Role, Scenario, SellerOffer};
use pcpshare::sim::{cost_report, gen_scenario, sweep_scenario, ScenarioConfig};
use pcpshare::Error;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Every valid (encryption, decryption) pairing for one keypair.
fn round_trip_all(pk: &PublicKey, sk: &PrivateKey, m: &BigUint, r: &mut ChaCha20Rng) -> Result<u64, String> {
    let mut cts: Vec<(&str, Ciphertext)> = vec![("standard", pk.encrypt_standard(m, r).map_err(|e| e.to_string())?)];
    if pk.mode() == GeneratorMode::NPlusOne {
        cts.push(("optimized", pk.encrypt_optimized(m, r).map_err(|e| e.to_string())?));
    }
    let mut checked = 0;
    for (enc, ct) in &cts {
        let mut outs = vec![("standard", sk.decrypt_standard(ct)), ("crt", sk.decrypt_crt(ct))];
        if pk.mode() == GeneratorMode::NPlusOne {
            outs.push(("optimized", sk.decrypt_optimized(ct)));
        }
        for (dec, got) in outs {
            let got = got.map_err(|e| format!("{enc}/{dec}: {e}"))?;
            ensure(&got == m, || format!("{} bits {enc}/{dec}: {m} -> {got}", pk.bits()))?;
            checked += 1;
        }
    }
    Ok(checked)
}

fn criterion_1() -> Outcome {
    let mut r = rng(101);
    let mut checked = 0u64;
    for mode in [GeneratorMode::NPlusOne, GeneratorMode::RandomG] {
        let (pk, sk) = keypair_from_primes(5u32.into(), 7u32.into(), mode, &mut r).map_err(|e| e.to_string())?;
        for m in 0u32..35 {
            checked += round_trip_all(&pk, &sk, &BigUint::from(m), &mut r)?;
        }
    }
    for bits in [32u64, 512, 1024] {
        for mode in [GeneratorMode::NPlusOne, GeneratorMode::RandomG] {
            let (pk, sk) = keygen(bits, mode, &mut r).map_err(|e| e.to_string())?;
            for _ in 0..1000 {
                let m = r.gen_biguint_below(pk.n());
                checked += round_trip_all(&pk, &sk, &m, &mut r)?;
            }
        }
    }
    Ok(format!("{checked} exact round trips; n = 35 exhaustive; 32/512/1024-bit x 1000 plaintexts"))
}

fn random_ciphertext(pk: &PublicKey, r: &mut ChaCha20Rng) -> Ciphertext {
    // Every unit of Z_{n^2} is the encryption of some plaintext.
    loop {
        let c = r.gen_biguint_below(pk.n_squared());
        if c.gcd(pk.n()).is_one() {
            return pk.ciphertext_from_value(c).expect("unit");
        }
    }
}

fn criterion_2() -> Outcome {
    let mut r = rng(202);
    let mut checked = 0;
    for bits in [32u64, 512, 1024] {
        for mode in [GeneratorMode::NPlusOne, GeneratorMode::RandomG] {
            let (pk, sk) = keygen(bits, mode, &mut r).map_err(|e| e.to_string())?;
            for _ in 0..500 {
                let ct = random_ciphertext(&pk, &mut r);
                let std = sk.decrypt_standard(&ct).map_err(|e| e.to_string())?;
                let crt = sk.decrypt_crt(&ct).map_err(|e| e.to_string())?;
                ensure(std == crt, || format!("{bits} bits: crt {crt} != standard {std}"))?;
                if mode == GeneratorMode::NPlusOne {
                    let opt = sk.decrypt_optimized(&ct).map_err(|e| e.to_string())?;
                    ensure(opt == std, || format!("{bits} bits: optimized {opt} != standard {std}"))?;
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} uniformly random ciphertexts, all decryption paths identical"))
}

fn criterion_3() -> Outcome {
    let mut r = rng(303);
    let mut pairs = 0;
    for bits in [32u64, 512] {
        let (pk, sk) = keygen(bits, GeneratorMode::NPlusOne, &mut r).map_err(|e| e.to_string())?;
        let n = pk.n().clone();
        let quarter = BigInt::from(&n >> 2u32);
        for _ in 0..1000 {
            let a = r.gen_biguint_below(&n);
            let b = r.gen_biguint_below(&n);
            let ca = pk.encrypt(&a, &mut r).map_err(|e| e.to_string())?;
            let cb = pk.encrypt(&b, &mut r).map_err(|e| e.to_string())?;
            let sum = sk.decrypt(&pk.he_add(&ca, &cb).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            ensure(sum == (&a + &b) % &n, || format!("{bits} bits: {a} + {b} -> {sum}"))?;

            let x = r.gen_bigint_range(&-quarter.clone(), &quarter);
            let y = r.gen_bigint_range(&-quarter.clone(), &quarter);
            let cx = pk.encrypt(&pk.encode_signed(&x).map_err(|e| e.to_string())?, &mut r).map_err(|e| e.to_string())?;
            let cy = pk.encrypt(&pk.encode_signed(&y).map_err(|e| e.to_string())?, &mut r).map_err(|e| e.to_string())?;
            let diff = sk.decrypt(&pk.he_sub(&cx, &cy).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            let diff = pk.decode_signed(&diff);
            ensure(diff == &x - &y, || format!("{bits} bits: {x} - {y} -> {diff}"))?;
            pairs += 1;
        }
    }
    Ok(format!("{pairs} random pairs: sums mod n and signed differences exact"))
}

fn timing(ops: [BenchOp; 2], seed: u64) -> Result<(f64, f64, f64), String> {
    let cfg = BenchConfig {
        bits: 2048,
        trials: 200,
        warmup: 20,
        repeats: 1,
        seed,
    };
    let report = bench_ops(&cfg, &ops).map_err(|e| e.to_string())?;
    for row in &report.rows {
        ensure(row.mean_ns > 0.0 && row.median_ns > 0.0 && row.stddev_ns < row.mean_ns, || {
            format!("implausible timing row {row:?}")
        })?;
    }
    let num = report.row(ops[1]).unwrap().median_ns;
    let den = report.row(ops[0]).unwrap().median_ns;
    Ok((num / den, num / 1e6, den / 1e6))
}

fn criterion_4() -> Outcome {
    let (ratio, crt, std) = timing([BenchOp::DecryptStandard, BenchOp::DecryptCrt], 404)?;
    ensure(ratio <= 0.45, || format!("crt/standard = {ratio:.3} > 0.45"))?;
    Ok(format!("2048-bit median crt {crt:.2} ms / standard {std:.2} ms = {ratio:.3} <= 0.45"))
}

fn criterion_5() -> Outcome {
    let (ratio, opt, std) = timing([BenchOp::EncryptStandard, BenchOp::EncryptOptimized], 505)?;
    ensure(ratio <= 0.75, || format!("optimized/standard = {ratio:.3} > 0.75"))?;
    Ok(format!("2048-bit median optimized {opt:.2} ms / random-g {std:.2} ms = {ratio:.3} <= 0.75"))
}

/// What criteria 6, 8 and 9 need from one encrypted run.
struct RunSummary {
    seed: u64,
    policy: DemandPolicy,
    scenario: Scenario,
    equal: bool,
    matches: usize,
    rounds: usize,
    proxy_decryptions: u64,
    audit_findings: usize,
    returns: Vec<pcpshare::orchestrator::ReturnRecord>,
}

fn run_sweep() -> Result<Vec<RunSummary>, String> {
    let mut out = Vec::new();
    for seed in 1..=200u64 {
        let scenario = sweep_scenario(seed, 10, 4).map_err(|e| e.to_string())?;
        for policy in [DemandPolicy::Strict, DemandPolicy::Relaxed] {
            let cfg = MarketConfig {
                bits: 512,
                policy,
                ..MarketConfig::default()
            };
            let run = Market::new(scenario.clone(), cfg, seed)
                .and_then(Market::run)
                .map_err(|e| format!("seed {seed} {policy:?}: {e}"))?;
            let pipeline = run.matches();
            out.push(RunSummary {
                seed,
                policy,
                equal: pipeline == oracle_match(&scenario, policy),
                matches: pipeline.len(),
                rounds: run.rounds.len(),
                proxy_decryptions: run.total_counts().proxy.decryptions,
                audit_findings: run.log.audit_plaintext().len(),
                returns: run.returns,
                scenario: scenario.clone(),
            });
        }
    }
    Ok(out)
}

fn criterion_6(runs: &[RunSummary]) -> Outcome {
    if let Some(bad) = runs.iter().find(|r| !r.equal) {
        return Err(format!("seed {} {:?}: pipeline differs from oracle", bad.seed, bad.policy));
    }
    let per = |p: DemandPolicy| runs.iter().filter(|r| r.policy == p).map(|r| r.matches).sum::<usize>();
    let multi = runs.iter().filter(|r| r.rounds > 1).count();
    Ok(format!(
        "{} runs (seeds 1-200 x 2 policies, 512-bit keys) identical to oracle; {} strict / {} relaxed matches; {} multi-round runs",
        runs.len(),
        per(DemandPolicy::Strict),
        per(DemandPolicy::Relaxed),
        multi
    ))
}

fn criterion_7() -> Outcome {
    let mut cells = 0;
    for i in [0usize, 1, 2, 5] {
        for j in [0usize, 1, 2, 5] {
            for k in [0usize, 1, 3] {
                let cfg = ScenarioConfig {
                    buyers: i,
                    sellers: j,
                    k,
                    seed: (i * 100 + j * 10 + k) as u64,
                    ..ScenarioConfig::default()
                };
                let s = gen_scenario(&cfg).map_err(|e| e.to_string())?;
                let run = Market::new(s, MarketConfig { bits: 256, ..MarketConfig::default() }, 7)
                    .and_then(Market::run)
                    .map_err(|e| e.to_string())?;
                let report = cost_report(&run.rounds[0].counts, i, j, k);
                ensure(report.holds(), || format!("I={i} J={j} k={k}\n{report}"))?;
                cells += 1;
            }
        }
    }
    Ok(format!("{cells} (I, J, k) cells: proxy ops, cloud decryptions, entity encryptions exact"))
}

fn criterion_8(runs: &[RunSummary]) -> Outcome {
    // (a) probabilistic encryption
    let mut r = rng(808);
    for mode in [GeneratorMode::RandomG, GeneratorMode::NPlusOne] {
        let (pk, _) = keygen(512, mode, &mut r).map_err(|e| e.to_string())?;
        let m = BigUint::from(42u32);
        let distinct: BTreeSet<BigUint> =
            (0..100).map(|_| pk.encrypt(&m, &mut r).unwrap().value().clone()).collect();
        ensure(distinct.len() == 100, || format!("{mode:?}: only {} distinct", distinct.len()))?;
    }

    // (b) role isolation
    let proxy_decs: u64 = runs.iter().map(|r| r.proxy_decryptions).sum();
    ensure(proxy_decs == 0, || format!("proxy decrypted {proxy_decs} times"))?;

    // (c) cross-round rejection
    let mut rejected = 0;
    for seed in 1..=20u64 {
        let mut s = sweep_scenario(seed, 4, 2).map_err(|e| e.to_string())?;
        s.buyers.push(pcpshare::protocol::BuyerRequest {
            id: 1000,
            x: 0,
            y: 0,
            price: 0,
            d_max: 1,
            demands: vec![0; s.k],
            demand_prices: vec![0; s.k],
            weights: pcpshare::protocol::PreferenceWeights { w_d: 1, w_r: 0, w_alpha: vec![0; s.k] },
            arrival_round: 0,
            withdraw_round: None,
        });
        s.sellers.push(SellerOffer {
            id: 1000,
            x: s.area,
            y: s.area,
            price: 0,
            demands: vec![0; s.k],
            demand_prices: vec![0; s.k],
            arrival_round: 3,
        });
        let mut market = Market::new(s.clone(), MarketConfig { bits: 256, ..MarketConfig::default() }, seed)
            .map_err(|e| e.to_string())?;
        let old_pk = market.round_public_key().unwrap().clone();
        market.step_round().map_err(|e| e.to_string())?;
        let new_pk = market.round_public_key().ok_or("second round did not open")?.clone();
        let buyer = s.buyers.iter().find(|b| b.id == 1000).unwrap();
        let stale = encrypt_buyer(&old_pk, buyer, &OpCounters::default(), &mut r).map_err(|e| e.to_string())?;
        let fresh = encrypt_buyer(&new_pk, buyer, &OpCounters::default(), &mut r).map_err(|e| e.to_string())?;
        let is_mismatch =
            |e: &Error| matches!(e, Error::Paillier(PaillierError::KeyMismatch { .. }));
        ensure(market.submit_encrypted(stale.clone()).as_ref().is_err_and(is_mismatch), || {
            format!("seed {seed}: stale profile accepted")
        })?;
        ensure(
            matches!(new_pk.he_add(&stale.ct_x, &fresh.ct_x), Err(PaillierError::KeyMismatch { .. })),
            || format!("seed {seed}: mixed-round addition accepted"),
        )?;
        let mut seller_view = fresh.clone();
        seller_view.role = Role::Seller;
        seller_view.ct_dmax = None;
        seller_view.ct_weights.clear();
        ensure(
            pair_process(&new_pk, &stale, &seller_view, &OpCounters::default())
                .as_ref()
                .is_err_and(is_mismatch),
            || format!("seed {seed}: mixed-round pair accepted"),
        )?;
        rejected += 3;
    }

    // (d) no plaintext on the wire
    let findings: usize = runs.iter().map(|r| r.audit_findings).sum();
    ensure(findings == 0, || format!("{findings} plaintext findings in message logs"))?;

    Ok(format!(
        "200 ciphertexts of one plaintext distinct; 0 proxy decryptions over {} runs; {rejected} cross-round uses rejected; message logs plaintext-free",
        runs.len()
    ))
}

fn criterion_9(runs: &[RunSummary]) -> Outcome {
    let mut checked = 0;
    let mut max_chunks = 0;
    for run in runs {
        let expected: usize = run.matches;
        ensure(run.returns.len() == expected, || {
            format!("seed {}: {} matches, {} returns", run.seed, expected, run.returns.len())
        })?;
        for ret in &run.returns {
            let b = run.scenario.buyers.iter().find(|b| b.id == ret.buyer_id).unwrap();
            let s = run.scenario.sellers.iter().find(|s| s.id == ret.seller_id).unwrap();
            ensure(
                (ret.buyer_view.x, ret.buyer_view.y, ret.buyer_view.price) == (s.x, s.y, Some(s.price)),
                || format!("seed {}: buyer {} got {:?}", run.seed, b.id, ret.buyer_view),
            )?;
            ensure(
                (ret.seller_view.x, ret.seller_view.y, ret.seller_view.price) == (b.x, b.y, None),
                || format!("seed {}: seller {} got {:?}", run.seed, s.id, ret.seller_view),
            )?;
            ensure(ret.sk_chunks > 1, || "round key was not chunked".to_string())?;
            max_chunks = max_chunks.max(ret.sk_chunks);
            checked += 1;
        }
    }
    ensure(checked > 0, || "no matches to check".to_string())?;
    Ok(format!("{checked} matches: both parties recovered exact counterparty data via {max_chunks}-chunk key transport"))
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = guarded(f);
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {id} ({name}, {secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}, {secs:.1}s): {why}");
            }
        }
    };

    report(1, "crypto round trips", &mut criterion_1);
    report(2, "decryption variant equivalence", &mut criterion_2);
    report(3, "homomorphic properties", &mut criterion_3);
    report(4, "crt decryption speedup", &mut criterion_4);
    report(5, "optimized encryption speedup", &mut criterion_5);

    let start = Instant::now();
    let runs = guarded(run_sweep);
    let sweep_secs = start.elapsed().as_secs_f64();
    match &runs {
        Ok(runs) => {
            report(6, "matching equals plaintext reference", &mut || {
                criterion_6(runs).map(|d| format!("{d}; sweep {sweep_secs:.1}s"))
            });
            report(7, "operation counts", &mut criterion_7);
            report(8, "security behaviors", &mut || criterion_8(runs));
            report(9, "result return fidelity", &mut || criterion_9(runs));
        }
        Err(e) => {
            for (id, name) in [(6, "matching equals plaintext reference"), (8, "security behaviors"), (9, "result return fidelity")] {
                report(id, name, &mut || Err(format!("sweep failed: {e}")));
            }
            report(7, "operation counts", &mut criterion_7);
        }
    }

    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
