//! Cloud-side matching on decrypted pair differences.
//!
//! For each buyer, in ascending id order, sellers still in the pool are
//! filtered by distance and by demand compatibility, scored with the
//! weighted matching index `W`, and the lowest-scoring seller is taken out
//! of the pool.

use std::collections::{BTreeSet, HashMap};

use num_integer::Roots;
use serde::{Deserialize, Serialize};

use crate::counters::{Op, OpCounters};
use crate::error::{Error, Result};
use crate::protocol::{DecryptedPair, EntityId, PreferenceWeights};

/// Treatment of a demand that neither side declared (`alpha_i + alpha_j = 0`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandPolicy {
    /// Drop the pair, following the literal case analysis.
    Strict,
    /// Ignore demands nobody asked for.
    #[default]
    Relaxed,
}

impl std::str::FromStr for DemandPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "strict" => Ok(DemandPolicy::Strict),
            "relaxed" => Ok(DemandPolicy::Relaxed),
            other => Err(format!("unknown policy {other:?} (expected strict or relaxed)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCandidate {
    pub seller_id: EntityId,
    pub w_index: u128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchResult {
    pub buyer_id: EntityId,
    pub seller_id: EntityId,
    pub w_index: u128,
    pub round: u32,
}

/// The decrypted per-buyer inputs the cloud needs besides pair data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuyerTerms {
    pub buyer_id: EntityId,
    pub d_max: u32,
    pub weights: PreferenceWeights,
}

fn squared_distance(dx: i64, dy: i64) -> u128 {
    let dx = dx.unsigned_abs() as u128;
    let dy = dy.unsigned_abs() as u128;
    dx * dx + dy * dy
}

/// `sqrt(dx^2 + dy^2) < d_max`, evaluated without a square root.
pub fn distance_ok(pair: &DecryptedPair, d_max: u32) -> bool {
    let d = u128::from(d_max);
    squared_distance(pair.dx, pair.dy) < d * d
}

/// Demand compatibility over all `k` demands.
///
/// A demand both sides hold passes when the buyer's demand price covers the
/// seller's (`dr_alpha >= 0`). A demand only one side holds always fails.
/// A demand neither side holds fails only under [`DemandPolicy::Strict`].
pub fn demand_ok(alpha_sum: &[u8], dr_alpha: &[i64], policy: DemandPolicy) -> Result<bool> {
    if alpha_sum.len() != dr_alpha.len() {
        return Err(Error::DimensionMismatch(alpha_sum.len(), dr_alpha.len()));
    }
    let mut ok = true;
    for (&a, &dr) in alpha_sum.iter().zip(dr_alpha) {
        ok &= match a {
            2 => dr >= 0,
            1 => false,
            0 => policy == DemandPolicy::Relaxed,
            other => return Err(Error::InvalidDemandSum(i64::from(other))),
        };
    }
    Ok(ok)
}

/// `W = isqrt(dx^2 + dy^2) * w_d + |dr| * w_r + sum_t |dr_alpha[t]| * w_alpha[t]`.
pub fn matching_index(pair: &DecryptedPair, weights: &PreferenceWeights) -> u128 {
    let distance = squared_distance(pair.dx, pair.dy).sqrt();
    let demand_terms: u128 = pair
        .dr_alpha
        .iter()
        .zip(&weights.w_alpha)
        .map(|(&d, &w)| u128::from(d.unsigned_abs()) * u128::from(w))
        .sum();
    distance * u128::from(weights.w_d)
        + u128::from(pair.dr.unsigned_abs()) * u128::from(weights.w_r)
        + demand_terms
}

/// Lowest `w_index`, ties to the smallest seller id.
pub fn select_for_buyer(candidates: &[MatchCandidate]) -> Option<EntityId> {
    candidates
        .iter()
        .min_by_key(|c| (c.w_index, c.seller_id))
        .map(|c| c.seller_id)
}

/// One round of greedy matching.
///
/// `pairs` must hold an entry for every (buyer, seller) combination that is
/// eligible this round; the seller pool is the set of seller ids appearing in
/// `pairs`. Each call to [`matching_index`] is recorded on `counters`.
pub fn run_round_matching(
    round: u32,
    buyers: &[BuyerTerms],
    pairs: &[DecryptedPair],
    policy: DemandPolicy,
    counters: &OpCounters,
) -> Result<Vec<MatchResult>> {
    let mut pool: BTreeSet<EntityId> = pairs.iter().map(|p| p.seller_id).collect();
    let by_buyer: HashMap<EntityId, Vec<&DecryptedPair>> =
        pairs.iter().fold(HashMap::new(), |mut acc, p| {
            acc.entry(p.buyer_id).or_default().push(p);
            acc
        });

    let mut order: Vec<&BuyerTerms> = buyers.iter().collect();
    order.sort_by_key(|b| b.buyer_id);

    let mut results = Vec::new();
    for buyer in order {
        if pool.is_empty() {
            break;
        }
        let Some(rows) = by_buyer.get(&buyer.buyer_id) else {
            continue;
        };
        let mut candidates = Vec::new();
        for pair in rows.iter().filter(|p| pool.contains(&p.seller_id)) {
            if !distance_ok(pair, buyer.d_max) {
                continue;
            }
            if !demand_ok(&pair.alpha_sum, &pair.dr_alpha, policy)? {
                continue;
            }
            counters.record(Op::Match);
            candidates.push(MatchCandidate {
                seller_id: pair.seller_id,
                w_index: matching_index(pair, &buyer.weights),
            });
        }
        if let Some(seller_id) = select_for_buyer(&candidates) {
            let w_index = candidates
                .iter()
                .find(|c| c.seller_id == seller_id)
                .map(|c| c.w_index)
                .expect("selected seller is a candidate");
            pool.remove(&seller_id);
            results.push(MatchResult {
                buyer_id: buyer.buyer_id,
                seller_id,
                w_index,
                round,
            });
        }
    }
    Ok(results)
}
