//! Scenario generation, end-to-end verification against the plaintext
//! oracle, and the closed-form operation counts.

use std::fmt;
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::counters::RoleCounts;
use crate::error::{Error, Result};
use crate::matching::MatchResult;
use crate::oracle::oracle_match;
use crate::orchestrator::{Market, MarketConfig, RunReport};
use crate::protocol::{BuyerRequest, PreferenceWeights, Scenario, SellerOffer, WEIGHT_SCALE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub buyers: usize,
    pub sellers: usize,
    pub k: usize,
    pub area: u32,
    pub price_range: RangeInclusive<u32>,
    pub demand_price_range: RangeInclusive<u32>,
    pub d_max_range: RangeInclusive<u32>,
    /// Probability that any one demand bit is set.
    pub demand_density: f64,
    /// Entities arrive uniformly in rounds `0..=arrival_rounds`.
    pub arrival_rounds: u32,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            buyers: 5,
            sellers: 5,
            k: 2,
            area: 3000,
            price_range: 100..=1000,
            demand_price_range: 10..=200,
            d_max_range: 500..=2500,
            demand_density: 0.5,
            arrival_rounds: 0,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.area == 0 {
            return bad("area must be positive");
        }
        for (name, r) in [
            ("price_range", &self.price_range),
            ("demand_price_range", &self.demand_price_range),
            ("d_max_range", &self.d_max_range),
        ] {
            if r.is_empty() {
                return Err(Error::InvalidConfig(format!("{name} is empty")));
            }
        }
        if *self.d_max_range.start() == 0 {
            return bad("d_max_range must exclude 0");
        }
        if !(0.0..=1.0).contains(&self.demand_density) {
            return bad("demand_density must lie in [0, 1]");
        }
        Ok(())
    }
}

fn demands(rng: &mut ChaCha20Rng, cfg: &ScenarioConfig) -> (Vec<u8>, Vec<u32>) {
    (0..cfg.k)
        .map(|_| {
            if rng.gen_bool(cfg.demand_density) {
                (1, rng.gen_range(cfg.demand_price_range.clone()))
            } else {
                (0, 0)
            }
        })
        .unzip()
}

/// Random scenario; a pure function of `cfg`.
pub fn gen_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut buyers = Vec::with_capacity(cfg.buyers);
    for i in 0..cfg.buyers {
        let (d, dp) = demands(&mut rng, cfg);
        buyers.push(BuyerRequest {
            id: i as u32 + 1,
            x: rng.gen_range(0..=cfg.area),
            y: rng.gen_range(0..=cfg.area),
            price: rng.gen_range(cfg.price_range.clone()),
            d_max: rng.gen_range(cfg.d_max_range.clone()),
            demands: d,
            demand_prices: dp,
            weights: PreferenceWeights {
                w_d: rng.gen_range(1..=WEIGHT_SCALE),
                w_r: rng.gen_range(0..=WEIGHT_SCALE),
                w_alpha: (0..cfg.k).map(|_| rng.gen_range(0..=WEIGHT_SCALE)).collect(),
            },
            arrival_round: rng.gen_range(0..=cfg.arrival_rounds),
            withdraw_round: None,
        });
    }
    let mut sellers = Vec::with_capacity(cfg.sellers);
    for j in 0..cfg.sellers {
        let (d, dp) = demands(&mut rng, cfg);
        sellers.push(SellerOffer {
            id: j as u32 + 1,
            x: rng.gen_range(0..=cfg.area),
            y: rng.gen_range(0..=cfg.area),
            price: rng.gen_range(cfg.price_range.clone()),
            demands: d,
            demand_prices: dp,
            arrival_round: rng.gen_range(0..=cfg.arrival_rounds),
        });
    }
    let s = Scenario {
        k: cfg.k,
        area: cfg.area,
        buyers,
        sellers,
    };
    s.validate()?;
    Ok(s)
}

/// A varied configuration for randomized checks: sizes, demand density,
/// area and arrival spread all depend on `seed`. Small areas make ties in
/// the matching index likely.
pub fn sweep_config(seed: u64, max_entities: usize, max_k: usize) -> ScenarioConfig {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let area = [3000, 3000, 400, 20][rng.gen_range(0..4)];
    ScenarioConfig {
        buyers: rng.gen_range(0..=max_entities),
        sellers: rng.gen_range(0..=max_entities),
        k: rng.gen_range(0..=max_k),
        area,
        d_max_range: 1..=area,
        demand_density: [0.0, 0.1, 0.5, 1.0][rng.gen_range(0..4)],
        arrival_rounds: rng.gen_range(0..=2),
        seed,
        ..ScenarioConfig::default()
    }
}

/// [`gen_scenario`] on [`sweep_config`], with a few buyers scheduled to
/// withdraw.
pub fn sweep_scenario(seed: u64, max_entities: usize, max_k: usize) -> Result<Scenario> {
    let mut s = gen_scenario(&sweep_config(seed, max_entities, max_k))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xd1ce);
    for b in &mut s.buyers {
        if rng.gen_bool(0.15) {
            b.withdraw_round = Some(b.arrival_round + rng.gen_range(1..=2));
        }
    }
    Ok(s)
}

/// One closed-form operation count checked against a counter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostLine {
    pub name: &'static str,
    pub formula: &'static str,
    pub expected: u64,
    pub observed: u64,
}

impl CostLine {
    pub fn holds(&self) -> bool {
        self.expected == self.observed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub buyers: u64,
    pub sellers: u64,
    pub k: u64,
    pub lines: Vec<CostLine>,
}

impl CostReport {
    pub fn holds(&self) -> bool {
        self.lines.iter().all(CostLine::holds)
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "check,formula,I,J,k,expected,observed,status")?;
        for l in &self.lines {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{}",
                l.name,
                l.formula,
                self.buyers,
                self.sellers,
                self.k,
                l.expected,
                l.observed,
                if l.holds() { "ok" } else { "MISMATCH" }
            )?;
        }
        Ok(())
    }
}

pub fn expected_proxy_ops(i: u64, j: u64, k: u64) -> u64 {
    i * j * (2 * k + 3)
}

pub fn expected_cloud_decryptions(i: u64, j: u64, k: u64) -> u64 {
    i * j * (2 * k + 3) + i * (3 + k)
}

pub fn expected_entity_encryptions(i: u64, j: u64, k: u64) -> u64 {
    i * (6 + 3 * k) + j * (3 + 2 * k)
}

/// Compares one round's counters with the closed forms for `i` buyers,
/// `j` sellers and `k` demands.
pub fn cost_report(counts: &RoleCounts, i: usize, j: usize, k: usize) -> CostReport {
    let (i, j, k) = (i as u64, j as u64, k as u64);
    CostReport {
        buyers: i,
        sellers: j,
        k,
        lines: vec![
            CostLine {
                name: "proxy_he_ops",
                formula: "I*J*(2k+3)",
                expected: expected_proxy_ops(i, j, k),
                observed: counts.proxy.he_ops(),
            },
            CostLine {
                name: "proxy_decryptions",
                formula: "0",
                expected: 0,
                observed: counts.proxy.decryptions,
            },
            CostLine {
                name: "cloud_decryptions",
                formula: "I*J*(2k+3)+I*(3+k)",
                expected: expected_cloud_decryptions(i, j, k),
                observed: counts.cloud.decryptions,
            },
            CostLine {
                name: "entity_encryptions",
                formula: "I*(6+3k)+J*(3+2k)",
                expected: expected_entity_encryptions(i, j, k),
                observed: counts.buyers.encryptions + counts.sellers.encryptions,
            },
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Divergence {
    PipelineOnly(MatchResult),
    OracleOnly(MatchResult),
}

/// Outcome of running a scenario through the encrypted pipeline and the
/// oracle side by side.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub pipeline: Vec<MatchResult>,
    pub oracle: Vec<MatchResult>,
    pub diff: Vec<Divergence>,
    /// Invariant failures other than match divergence.
    pub violations: Vec<String>,
    #[serde(skip)]
    pub run: RunReport,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.diff.is_empty() && self.violations.is_empty() && self.pipeline == self.oracle
    }
}

fn match_diff(pipeline: &[MatchResult], oracle: &[MatchResult]) -> Vec<Divergence> {
    let mut diff: Vec<Divergence> = pipeline
        .iter()
        .filter(|m| !oracle.contains(m))
        .map(|m| Divergence::PipelineOnly(*m))
        .collect();
    diff.extend(
        oracle
            .iter()
            .filter(|m| !pipeline.contains(m))
            .map(|m| Divergence::OracleOnly(*m)),
    );
    diff
}

/// Every invariant a completed run must satisfy.
pub fn check_run(scenario: &Scenario, run: &RunReport) -> Vec<String> {
    let mut v = Vec::new();
    for r in &run.rounds {
        let cost = cost_report(&r.counts, r.buyers.len(), r.sellers.len(), scenario.k);
        for line in cost.lines.iter().filter(|l| !l.holds()) {
            v.push(format!(
                "round {}: {} expected {} observed {}",
                r.round, line.name, line.expected, line.observed
            ));
        }
    }
    let mut keys: Vec<_> = run.rounds.iter().map(|r| r.key_id).collect();
    keys.sort();
    keys.dedup();
    if keys.len() != run.rounds.len() {
        v.push("a round key was reused".into());
    }
    for f in run.log.audit_plaintext() {
        v.push(format!("message {} {}: {}", f.index, f.path, f.reason));
    }
    let matches = run.matches();
    if run.returns.len() != matches.len() {
        v.push(format!("{} matches but {} returns", matches.len(), run.returns.len()));
    }
    for r in &run.returns {
        let b = scenario.buyers.iter().find(|b| b.id == r.buyer_id);
        let s = scenario.sellers.iter().find(|s| s.id == r.seller_id);
        let (Some(b), Some(s)) = (b, s) else {
            v.push(format!("return for unknown pair ({}, {})", r.buyer_id, r.seller_id));
            continue;
        };
        let bv = r.buyer_view;
        if (bv.x, bv.y, bv.price) != (s.x, s.y, Some(s.price)) {
            v.push(format!("buyer {} recovered wrong seller data", b.id));
        }
        let sv = r.seller_view;
        if (sv.x, sv.y, sv.price) != (b.x, b.y, None) {
            v.push(format!("seller {} recovered wrong buyer data", s.id));
        }
    }
    v
}

/// Runs the encrypted pipeline and the oracle and reports any divergence.
pub fn verify(scenario: &Scenario, cfg: MarketConfig, seed: u64) -> Result<VerifyReport> {
    let policy = cfg.policy;
    let run = Market::new(scenario.clone(), cfg, seed)?.run()?;
    let pipeline = run.matches();
    let oracle = oracle_match(scenario, policy);
    Ok(VerifyReport {
        diff: match_diff(&pipeline, &oracle),
        violations: check_run(scenario, &run),
        pipeline,
        oracle,
        run,
    })
}

/// `buyer_id,seller_id,w_index,round` with a header line.
pub fn matches_csv(matches: &[MatchResult]) -> String {
    let mut out = String::from("buyer_id,seller_id,w_index,round\n");
    for m in matches {
        out.push_str(&format!("{},{},{},{}\n", m.buyer_id, m.seller_id, m.w_index, m.round));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = ScenarioConfig {
            buyers: 5,
            sellers: 5,
            k: 2,
            seed: 1,
            ..ScenarioConfig::default()
        };
        let a = gen_scenario(&cfg).unwrap().to_json();
        let b = gen_scenario(&cfg).unwrap().to_json();
        assert_eq!(a, b);
        let c = gen_scenario(&ScenarioConfig { seed: 2, ..cfg }).unwrap().to_json();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_values_respect_ranges() {
        let cfg = ScenarioConfig {
            buyers: 50,
            sellers: 50,
            k: 3,
            arrival_rounds: 3,
            ..ScenarioConfig::default()
        };
        let s = gen_scenario(&cfg).unwrap();
        for b in &s.buyers {
            assert!(b.x <= 3000 && b.y <= 3000);
            assert!(cfg.d_max_range.contains(&b.d_max));
            assert!(b.arrival_round <= 3);
            for (a, p) in b.demands.iter().zip(&b.demand_prices) {
                assert_eq!(*a == 0, *p == 0);
            }
        }
        for s in &s.sellers {
            assert!(s.x <= 3000 && s.y <= 3000);
            assert!(cfg.price_range.contains(&s.price));
        }
    }

    #[test]
    fn zero_density_clears_every_demand() {
        let cfg = ScenarioConfig {
            buyers: 20,
            sellers: 20,
            k: 4,
            demand_density: 0.0,
            ..ScenarioConfig::default()
        };
        let s = gen_scenario(&cfg).unwrap();
        assert!(s.buyers.iter().all(|b| b.demands.iter().all(|&a| a == 0)));
        assert!(s.sellers.iter().all(|s| s.demand_prices.iter().all(|&p| p == 0)));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let base = ScenarioConfig::default();
        for cfg in [
            ScenarioConfig { area: 0, ..base.clone() },
            ScenarioConfig { demand_density: 1.5, ..base.clone() },
            #[allow(clippy::reversed_empty_ranges)]
            ScenarioConfig { price_range: 10..=5, ..base.clone() },
            ScenarioConfig { d_max_range: 0..=5, ..base.clone() },
        ] {
            assert!(gen_scenario(&cfg).is_err());
        }
    }

    #[test]
    fn closed_forms() {
        assert_eq!(expected_proxy_ops(1, 1, 0), 3);
        assert_eq!(expected_proxy_ops(3, 4, 2), 84);
        assert_eq!(expected_proxy_ops(2, 3, 2), 42);
        assert_eq!(expected_cloud_decryptions(0, 7, 3), 0);
        assert_eq!(expected_entity_encryptions(0, 0, 5), 0);
        assert_eq!(expected_entity_encryptions(1, 1, 1), 9 + 5);
    }

    #[test]
    fn cost_report_flags_mismatch() {
        let mut counts = RoleCounts::default();
        counts.proxy.he_subs = 3;
        counts.cloud.decryptions = 3 + 3;
        counts.buyers.encryptions = 6;
        counts.sellers.encryptions = 3;
        assert!(cost_report(&counts, 1, 1, 0).holds());
        counts.proxy.decryptions = 1;
        let r = cost_report(&counts, 1, 1, 0);
        assert!(!r.holds());
        assert!(r.to_string().contains("proxy_decryptions,0,1,1,0,0,1,MISMATCH"));
    }

    #[test]
    fn csv_shape() {
        let csv = matches_csv(&[MatchResult { buyer_id: 1, seller_id: 2, w_index: 3, round: 0 }]);
        assert_eq!(csv, "buyer_id,seller_id,w_index,round\n1,2,3,0\n");
    }
}
