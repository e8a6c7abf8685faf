//! Plaintext reference matcher.
//!
//! Runs the complete multi-round market directly on the scenario's
//! plaintext profiles, with no encryption and without calling into
//! [`crate::matching`]. The encrypted pipeline must reproduce its output
//! exactly.

use std::collections::BTreeSet;

use crate::matching::{DemandPolicy, MatchResult};
use crate::protocol::{BuyerRequest, EntityId, Scenario, SellerOffer};

/// Whether round `round` should run, given what has been matched so far.
///
/// Round 0 always runs. Later rounds run while some unmatched seller and
/// some unmatched, not-yet-withdrawn buyer remain, and either entities are
/// still due to arrive or the previous round matched somebody.
pub fn round_should_open(
    scenario: &Scenario,
    round: u32,
    matched_buyers: &BTreeSet<EntityId>,
    matched_sellers: &BTreeSet<EntityId>,
    previous_round_matches: Option<usize>,
) -> bool {
    if round == 0 {
        return true;
    }
    let sellers_left = scenario
        .sellers
        .iter()
        .any(|s| !matched_sellers.contains(&s.id));
    let buyers_left = scenario
        .buyers
        .iter()
        .any(|b| !matched_buyers.contains(&b.id) && b.withdraw_round.is_none_or(|w| round < w));
    let stalled = previous_round_matches == Some(0) && round > scenario.last_arrival();
    sellers_left && buyers_left && !stalled
}

fn oracle_distance(b: &BuyerRequest, s: &SellerOffer) -> (f64, u128) {
    let dx = f64::from(b.x) - f64::from(s.x);
    let dy = f64::from(b.y) - f64::from(s.y);
    let sq = (i128::from(b.x) - i128::from(s.x)).pow(2) + (i128::from(b.y) - i128::from(s.y)).pow(2);
    let sq = sq as u128;
    let mut root = dx.hypot(dy).floor() as u128;
    while root * root > sq {
        root -= 1;
    }
    while (root + 1) * (root + 1) <= sq {
        root += 1;
    }
    (dx.hypot(dy), root)
}

fn oracle_demands_pass(b: &BuyerRequest, s: &SellerOffer, policy: DemandPolicy) -> bool {
    (0..b.demands.len()).all(|t| {
        let both = b.demands[t] == 1 && s.demands[t] == 1;
        let neither = b.demands[t] == 0 && s.demands[t] == 0;
        if both {
            b.demand_prices[t] >= s.demand_prices[t]
        } else if neither {
            matches!(policy, DemandPolicy::Relaxed)
        } else {
            false
        }
    })
}

fn oracle_score(b: &BuyerRequest, s: &SellerOffer, root: u128) -> u128 {
    let w = &b.weights;
    let mut score = root * u128::from(w.w_d);
    score += u128::from(b.price.abs_diff(s.price)) * u128::from(w.w_r);
    for t in 0..b.demands.len() {
        score += u128::from(b.demand_prices[t].abs_diff(s.demand_prices[t])) * u128::from(w.w_alpha[t]);
    }
    score
}

/// One round on explicit participant lists.
pub fn oracle_round(
    round: u32,
    buyers: &[&BuyerRequest],
    sellers: &[&SellerOffer],
    policy: DemandPolicy,
) -> Vec<MatchResult> {
    let mut buyers = buyers.to_vec();
    buyers.sort_by_key(|b| b.id);
    let mut taken: Vec<EntityId> = Vec::new();
    let mut out = Vec::new();
    for b in buyers {
        let mut scored: Vec<(u128, EntityId)> = sellers
            .iter()
            .filter(|s| !taken.contains(&s.id))
            .filter_map(|s| {
                let (dist, root) = oracle_distance(b, s);
                let ok = dist < f64::from(b.d_max) && oracle_demands_pass(b, s, policy);
                ok.then(|| (oracle_score(b, s, root), s.id))
            })
            .collect();
        scored.sort();
        if let Some(&(w_index, seller_id)) = scored.first() {
            taken.push(seller_id);
            out.push(MatchResult {
                buyer_id: b.id,
                seller_id,
                w_index,
                round,
            });
        }
    }
    out
}

/// All matches of the multi-round market, in round then buyer order.
pub fn oracle_match(scenario: &Scenario, policy: DemandPolicy) -> Vec<MatchResult> {
    let mut matched_buyers = BTreeSet::new();
    let mut matched_sellers = BTreeSet::new();
    let mut all = Vec::new();
    let mut previous = None;
    let mut round = 0u32;
    while round_should_open(scenario, round, &matched_buyers, &matched_sellers, previous) {
        let buyers: Vec<&BuyerRequest> = scenario
            .buyers
            .iter()
            .filter(|b| b.active_in(round) && !matched_buyers.contains(&b.id))
            .collect();
        let sellers: Vec<&SellerOffer> = scenario
            .sellers
            .iter()
            .filter(|s| s.active_in(round) && !matched_sellers.contains(&s.id))
            .collect();
        let results = oracle_round(round, &buyers, &sellers, policy);
        for m in &results {
            matched_buyers.insert(m.buyer_id);
            matched_sellers.insert(m.seller_id);
        }
        previous = Some(results.len());
        all.extend(results);
        round += 1;
    }
    all
}
