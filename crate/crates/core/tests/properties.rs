use std::collections::BTreeSet;

use num_bigint::BigUint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use pcpshare::matching::{demand_ok, DemandPolicy};
use pcpshare::oracle::oracle_match;
use pcpshare::orchestrator::{Market, MarketConfig};
use pcpshare::paillier::{keygen_seeded, GeneratorMode};
use pcpshare::protocol::Scenario;
use pcpshare::sim::{check_run, gen_scenario, sweep_scenario, ScenarioConfig};

fn policy() -> impl Strategy<Value = DemandPolicy> {
    prop_oneof![Just(DemandPolicy::Strict), Just(DemandPolicy::Relaxed)]
}

fn mode() -> impl Strategy<Value = GeneratorMode> {
    prop_oneof![Just(GeneratorMode::RandomG), Just(GeneratorMode::NPlusOne)]
}

fn small_scenario() -> impl Strategy<Value = Scenario> {
    (0usize..6, 0usize..6, 0usize..3, 20u32..3000, 0u32..3, any::<u64>()).prop_map(
        |(buyers, sellers, k, area, arrival_rounds, seed)| {
            gen_scenario(&ScenarioConfig {
                buyers,
                sellers,
                k,
                area,
                d_max_range: 1..=area,
                demand_density: 0.5,
                arrival_rounds,
                seed,
                ..ScenarioConfig::default()
            })
            .unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encryption_round_trips_and_adds(
        seed in 0u64..8, mode in mode(),
        a in any::<u64>(), b in any::<u64>(), x in any::<i32>(), y in any::<i32>(),
    ) {
        let (pk, sk) = keygen_seeded(160, mode, Some(seed)).unwrap();
        let n = pk.n().clone();
        let mut rng = ChaCha20Rng::seed_from_u64(a ^ b);
        let (ma, mb) = (BigUint::from(a) % &n, BigUint::from(b) % &n);
        let ca = pk.encrypt(&ma, &mut rng).unwrap();
        let cb = pk.encrypt(&mb, &mut rng).unwrap();
        prop_assert_eq!(sk.decrypt(&ca).unwrap(), ma.clone());
        prop_assert_eq!(sk.decrypt_standard(&ca).unwrap(), ma.clone());
        prop_assert_eq!(sk.decrypt(&pk.he_add(&ca, &cb).unwrap()).unwrap(), (&ma + &mb) % &n);

        let cx = pk.encrypt(&pk.encode_i64(i64::from(x)).unwrap(), &mut rng).unwrap();
        let cy = pk.encrypt(&pk.encode_i64(i64::from(y)).unwrap(), &mut rng).unwrap();
        let diff = sk.decrypt(&pk.he_sub(&cx, &cy).unwrap()).unwrap();
        prop_assert_eq!(pk.decode_i64(&diff).unwrap(), i64::from(x) - i64::from(y));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn reference_matches_are_sound(s in small_scenario(), policy in policy()) {
        let matches = oracle_match(&s, policy);
        let mut sellers = BTreeSet::new();
        let mut buyers = BTreeSet::new();
        for m in &matches {
            prop_assert!(sellers.insert(m.seller_id), "seller {} matched twice", m.seller_id);
            prop_assert!(buyers.insert(m.buyer_id), "buyer {} matched twice", m.buyer_id);
            let b = s.buyers.iter().find(|b| b.id == m.buyer_id).unwrap();
            let o = s.sellers.iter().find(|o| o.id == m.seller_id).unwrap();
            prop_assert!(b.active_in(m.round) && o.active_in(m.round));
            let dx = i64::from(b.x) - i64::from(o.x);
            let dy = i64::from(b.y) - i64::from(o.y);
            prop_assert!(dx * dx + dy * dy < i64::from(b.d_max).pow(2));
            let alpha: Vec<u8> = b.demands.iter().zip(&o.demands).map(|(p, q)| p + q).collect();
            let dr: Vec<i64> = b.demand_prices.iter().zip(&o.demand_prices)
                .map(|(p, q)| i64::from(*p) - i64::from(*q)).collect();
            prop_assert!(demand_ok(&alpha, &dr, policy).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn encrypted_pipeline_equals_reference(seed in any::<u64>(), policy in policy(), proxies in 1u32..4) {
        let s = sweep_scenario(seed, 6, 3).unwrap();
        let cfg = MarketConfig { bits: 128, policy, proxies, ..MarketConfig::default() };
        let run = Market::new(s.clone(), cfg, seed).unwrap().run().unwrap();
        prop_assert_eq!(run.matches(), oracle_match(&s, policy));
        prop_assert!(check_run(&s, &run).is_empty());
        let keys: BTreeSet<_> = run.rounds.iter().map(|r| r.key_id).collect();
        prop_assert_eq!(keys.len(), run.rounds.len());
        for r in &run.rounds {
            prop_assert_eq!(r.counts.proxy.decryptions, 0);
        }
    }
}
