//! Buyer and seller profiles, their encrypted form, and the per-pair
//! homomorphic processing done by the proxy.
//!
//! All plaintext quantities are non-negative integers: coordinates in whole
//! meters, prices in minor currency units, and preference weights in fixed
//! point with [`WEIGHT_SCALE`]. The JSON form of [`Scenario`] is the
//! scenario-file format read by the command-line tool.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::counters::{Op, OpCounters};
use crate::error::{Error, Result};
use crate::paillier::{Ciphertext, PublicKey};

pub type EntityId = u32;

/// Fixed-point scale of [`PreferenceWeights`]: 1000 means a weight of 1.0.
pub const WEIGHT_SCALE: u32 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceWeights {
    pub w_d: u32,
    pub w_r: u32,
    pub w_alpha: Vec<u32>,
}

impl PreferenceWeights {
    /// `[w_d, w_r, w_alpha...]`, the order used on the wire.
    pub fn to_vec(&self) -> Vec<u32> {
        let mut v = vec![self.w_d, self.w_r];
        v.extend_from_slice(&self.w_alpha);
        v
    }

    pub fn from_slice(v: &[u32]) -> Option<Self> {
        match v {
            [w_d, w_r, rest @ ..] => Some(PreferenceWeights {
                w_d: *w_d,
                w_r: *w_r,
                w_alpha: rest.to_vec(),
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuyerRequest {
    pub id: EntityId,
    pub x: u32,
    pub y: u32,
    pub price: u32,
    pub d_max: u32,
    pub demands: Vec<u8>,
    pub demand_prices: Vec<u32>,
    pub weights: PreferenceWeights,
    /// First round in which the buyer takes part.
    #[serde(default)]
    pub arrival_round: u32,
    /// Round from which an unmatched buyer no longer takes part.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub withdraw_round: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SellerOffer {
    pub id: EntityId,
    pub x: u32,
    pub y: u32,
    pub price: u32,
    pub demands: Vec<u8>,
    pub demand_prices: Vec<u32>,
    #[serde(default)]
    pub arrival_round: u32,
}

impl BuyerRequest {
    pub fn active_in(&self, round: u32) -> bool {
        self.arrival_round <= round && self.withdraw_round.is_none_or(|w| round < w)
    }
}

impl SellerOffer {
    pub fn active_in(&self, round: u32) -> bool {
        self.arrival_round <= round
    }
}

fn check_demands(id: EntityId, k: usize, demands: &[u8], prices: &[u32]) -> Result<()> {
    let bad = |reason: String| Err(Error::InvalidProfile { id, reason });
    if demands.len() != k || prices.len() != k {
        return bad(format!(
            "expected {k} demands and demand prices, got {} and {}",
            demands.len(),
            prices.len()
        ));
    }
    for (t, (&a, &r)) in demands.iter().zip(prices).enumerate() {
        if a > 1 {
            return bad(format!("demand bit {t} is {a}"));
        }
        if a == 0 && r != 0 {
            return bad(format!("demand price {t} set without the demand"));
        }
    }
    Ok(())
}

fn check_location(id: EntityId, x: u32, y: u32, area: u32) -> Result<()> {
    if x > area || y > area {
        return Err(Error::InvalidProfile {
            id,
            reason: format!("location ({x}, {y}) outside [0, {area}]"),
        });
    }
    Ok(())
}

impl BuyerRequest {
    pub fn validate(&self, k: usize, area: u32) -> Result<()> {
        check_location(self.id, self.x, self.y, area)?;
        check_demands(self.id, k, &self.demands, &self.demand_prices)?;
        let bad = |reason: &str| {
            Err(Error::InvalidProfile {
                id: self.id,
                reason: reason.to_owned(),
            })
        };
        if self.d_max == 0 {
            return bad("d_max must be positive");
        }
        if self.weights.w_alpha.len() != k {
            return bad("w_alpha length differs from the demand count");
        }
        if self.weights.to_vec().iter().all(|&w| w == 0) {
            return bad("all preference weights are zero");
        }
        Ok(())
    }
}

impl SellerOffer {
    pub fn validate(&self, k: usize, area: u32) -> Result<()> {
        check_location(self.id, self.x, self.y, area)?;
        check_demands(self.id, k, &self.demands, &self.demand_prices)
    }
}

/// A complete market description: who takes part and when.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    /// Number of optional demands per profile.
    pub k: usize,
    /// Side of the square service area in meters.
    pub area: u32,
    pub buyers: Vec<BuyerRequest>,
    pub sellers: Vec<SellerOffer>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.area == 0 {
            return Err(Error::InvalidScenario("area must be positive".into()));
        }
        let mut seen = BTreeSet::new();
        for b in &self.buyers {
            b.validate(self.k, self.area)?;
            if !seen.insert(b.id) {
                return Err(Error::InvalidScenario(format!("duplicate buyer id {}", b.id)));
            }
        }
        seen.clear();
        for s in &self.sellers {
            s.validate(self.k, self.area)?;
            if !seen.insert(s.id) {
                return Err(Error::InvalidScenario(format!("duplicate seller id {}", s.id)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| Error::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Last round in which any entity arrives.
    pub fn last_arrival(&self) -> u32 {
        let b = self.buyers.iter().map(|b| b.arrival_round);
        let s = self.sellers.iter().map(|s| s.arrival_round);
        b.chain(s).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Buyer,
    Seller,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Buyer => "buyer",
            Role::Seller => "seller",
        }
    }
}

/// Field-wise encryption of a buyer or seller profile. Only `id` and `role`
/// travel in the clear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedProfile {
    pub id: EntityId,
    pub role: Role,
    pub ct_x: Ciphertext,
    pub ct_y: Ciphertext,
    pub ct_price: Ciphertext,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ct_dmax: Option<Ciphertext>,
    pub ct_demands: Vec<Ciphertext>,
    pub ct_demand_prices: Vec<Ciphertext>,
    /// `[w_d, w_r, w_alpha...]`; empty for sellers.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ct_weights: Vec<Ciphertext>,
}

impl EncryptedProfile {
    pub fn ciphertexts(&self) -> impl Iterator<Item = &Ciphertext> {
        [&self.ct_x, &self.ct_y, &self.ct_price]
            .into_iter()
            .chain(self.ct_dmax.as_ref())
            .chain(&self.ct_demands)
            .chain(&self.ct_demand_prices)
            .chain(&self.ct_weights)
    }

    pub fn k(&self) -> usize {
        self.ct_demands.len()
    }
}

struct FieldEncryptor<'a, R> {
    pk: &'a PublicKey,
    counters: &'a OpCounters,
    rng: &'a mut R,
}

impl<R: RngCore + CryptoRng> FieldEncryptor<'_, R> {
    fn enc(&mut self, v: u32) -> Result<Ciphertext> {
        let m: BigUint = self.pk.encode_i64(i64::from(v))?;
        let ct = self.pk.encrypt(&m, self.rng)?;
        self.counters.record(Op::Encrypt);
        Ok(ct)
    }

    fn enc_all<I: IntoIterator<Item = u32>>(&mut self, vs: I) -> Result<Vec<Ciphertext>> {
        vs.into_iter().map(|v| self.enc(v)).collect()
    }
}

/// Encrypts every numeric field of a buyer request, including `d_max` and
/// the preference weights, with fresh randomness per field.
pub fn encrypt_buyer<R: RngCore + CryptoRng>(
    pk: &PublicKey,
    req: &BuyerRequest,
    counters: &OpCounters,
    rng: &mut R,
) -> Result<EncryptedProfile> {
    let k = req.demands.len();
    if req.demand_prices.len() != k || req.weights.w_alpha.len() != k {
        return Err(Error::DimensionMismatch(k, req.demand_prices.len()));
    }
    let mut e = FieldEncryptor { pk, counters, rng };
    Ok(EncryptedProfile {
        id: req.id,
        role: Role::Buyer,
        ct_x: e.enc(req.x)?,
        ct_y: e.enc(req.y)?,
        ct_price: e.enc(req.price)?,
        ct_dmax: Some(e.enc(req.d_max)?),
        ct_demands: e.enc_all(req.demands.iter().map(|&a| u32::from(a)))?,
        ct_demand_prices: e.enc_all(req.demand_prices.iter().copied())?,
        ct_weights: e.enc_all(req.weights.to_vec())?,
    })
}

pub fn encrypt_seller<R: RngCore + CryptoRng>(
    pk: &PublicKey,
    offer: &SellerOffer,
    counters: &OpCounters,
    rng: &mut R,
) -> Result<EncryptedProfile> {
    let k = offer.demands.len();
    if offer.demand_prices.len() != k {
        return Err(Error::DimensionMismatch(k, offer.demand_prices.len()));
    }
    let mut e = FieldEncryptor { pk, counters, rng };
    Ok(EncryptedProfile {
        id: offer.id,
        role: Role::Seller,
        ct_x: e.enc(offer.x)?,
        ct_y: e.enc(offer.y)?,
        ct_price: e.enc(offer.price)?,
        ct_dmax: None,
        ct_demands: e.enc_all(offer.demands.iter().map(|&a| u32::from(a)))?,
        ct_demand_prices: e.enc_all(offer.demand_prices.iter().copied())?,
        ct_weights: Vec::new(),
    })
}

/// Homomorphic sums and differences for one (buyer, seller) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub buyer_id: EntityId,
    pub seller_id: EntityId,
    pub ct_dx: Ciphertext,
    pub ct_dy: Ciphertext,
    pub ct_dr: Ciphertext,
    pub ct_alpha_sum: Vec<Ciphertext>,
    pub ct_dr_alpha: Vec<Ciphertext>,
}

/// Decrypted, sign-decoded counterpart of [`PairRecord`]. Differences are
/// buyer minus seller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecryptedPair {
    pub buyer_id: EntityId,
    pub seller_id: EntityId,
    pub dx: i64,
    pub dy: i64,
    pub dr: i64,
    pub alpha_sum: Vec<u8>,
    pub dr_alpha: Vec<i64>,
}

/// Number of homomorphic operations [`pair_process`] performs per pair.
pub fn he_ops_per_pair(k: usize) -> u64 {
    2 * k as u64 + 3
}

/// Combines one buyer and one seller profile: differences of location,
/// price and demand prices, sums of demand bits. Never decrypts.
pub fn pair_process(
    pk: &PublicKey,
    buyer: &EncryptedProfile,
    seller: &EncryptedProfile,
    counters: &OpCounters,
) -> Result<PairRecord> {
    if buyer.role != Role::Buyer {
        return Err(Error::RoleMismatch {
            expected: "buyer",
            found: buyer.role.name(),
        });
    }
    if seller.role != Role::Seller {
        return Err(Error::RoleMismatch {
            expected: "seller",
            found: seller.role.name(),
        });
    }
    if buyer.k() != seller.k()
        || buyer.ct_demand_prices.len() != buyer.k()
        || seller.ct_demand_prices.len() != seller.k()
    {
        return Err(Error::DimensionMismatch(buyer.k(), seller.k()));
    }
    let sub = |a: &Ciphertext, b: &Ciphertext| -> Result<Ciphertext> {
        let c = pk.he_sub(a, b)?;
        counters.record(Op::HeSub);
        Ok(c)
    };
    let add = |a: &Ciphertext, b: &Ciphertext| -> Result<Ciphertext> {
        let c = pk.he_add(a, b)?;
        counters.record(Op::HeAdd);
        Ok(c)
    };
    Ok(PairRecord {
        buyer_id: buyer.id,
        seller_id: seller.id,
        ct_dx: sub(&buyer.ct_x, &seller.ct_x)?,
        ct_dy: sub(&buyer.ct_y, &seller.ct_y)?,
        ct_dr: sub(&buyer.ct_price, &seller.ct_price)?,
        ct_alpha_sum: buyer
            .ct_demands
            .iter()
            .zip(&seller.ct_demands)
            .map(|(a, b)| add(a, b))
            .collect::<Result<_>>()?,
        ct_dr_alpha: buyer
            .ct_demand_prices
            .iter()
            .zip(&seller.ct_demand_prices)
            .map(|(a, b)| sub(a, b))
            .collect::<Result<_>>()?,
    })
}
