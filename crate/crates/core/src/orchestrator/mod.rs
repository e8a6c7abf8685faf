//! In-process simulation of the five-party protocol.
//!
//! A [`Market`] plays the CA, the proxy servers, the cloud server and every
//! buyer and seller. Parties interact through direct calls, and every
//! message that would cross the network is recorded in a [`MessageLog`].
//!
//! One round runs as
//! [`submit_all`](Market::submit_all) → [`proxy_phase`](Market::proxy_phase)
//! → [`cloud_phase`](Market::cloud_phase) →
//! [`return_all`](Market::return_all) → [`advance_round`](Market::advance_round).
//! [`Market::run`] drives the whole thing.
//!
//! Matched users receive the round secret key, as the protocol prescribes.
//! That lets them decrypt anything else sent under that round's key; fresh
//! keys every round limit the exposure to the closing round.

mod log;
pub mod transport;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

pub use log::{AuditFinding, Message, MessageLog, Party, Step};

use crate::counters::{Op, RoleCounters, RoleCounts};
use crate::error::{Error, Result};
use crate::matching::{run_round_matching, BuyerTerms, DemandPolicy, MatchResult};
use crate::oracle::round_should_open;
use crate::paillier::{keygen, Ciphertext, GeneratorMode, KeyId, PaillierError, PrivateKey, PublicKey};
use crate::protocol::{
    encrypt_buyer, encrypt_seller, pair_process, BuyerRequest, DecryptedPair, EncryptedProfile,
    EntityId, PairRecord, PreferenceWeights, Role, Scenario, SellerOffer,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarketConfig {
    /// Round key modulus size.
    pub bits: u64,
    pub round_key_mode: GeneratorMode,
    /// Personal key size; defaults to `bits`.
    pub personal_bits: Option<u64>,
    pub policy: DemandPolicy,
    /// Number of proxy servers; entities are sharded by `id % proxies`.
    pub proxies: u32,
    /// Hard stop for pathological scenarios.
    pub max_rounds: u32,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            bits: 1024,
            round_key_mode: GeneratorMode::RandomG,
            personal_bits: None,
            policy: DemandPolicy::Relaxed,
            proxies: 1,
            max_rounds: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Accepting submissions.
    Open,
    /// Pair records computed by the proxies.
    Paired,
    /// Cloud has matched; results may be returned.
    Matched,
    /// No further rounds.
    Finished,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::Open => "open",
            Phase::Paired => "paired",
            Phase::Matched => "matched",
            Phase::Finished => "finished",
        }
    }
}

/// A proxy server. It only ever holds the round public key.
#[derive(Debug)]
pub struct Proxy {
    index: u32,
    pk: PublicKey,
    store: BTreeMap<(Role, EntityId), EncryptedProfile>,
}

impl Proxy {
    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.pk
    }

    pub fn stored(&self, role: Role, id: EntityId) -> Option<&EncryptedProfile> {
        self.store.get(&(role, id))
    }

    pub fn stored_profiles(&self) -> impl Iterator<Item = &EncryptedProfile> {
        self.store.values()
    }
}

/// Encrypted per-buyer inputs forwarded to the cloud with the pair batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EncryptedBuyerTerms {
    pub buyer_id: EntityId,
    pub ct_dmax: Ciphertext,
    pub ct_weights: Vec<Ciphertext>,
}

#[derive(Debug)]
struct Cloud {
    sk: Option<PrivateKey>,
    inbox_terms: Vec<EncryptedBuyerTerms>,
    decrypted_fields: BTreeSet<&'static str>,
}

/// What the proxy hands a matched user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReturnPackage {
    pub round: u32,
    pub recipient: Party,
    pub counterparty: Party,
    pub chunk_bytes: usize,
    /// The round secret key sealed under the recipient's personal key.
    pub ct_sk: Vec<Ciphertext>,
    pub ct_counterparty_x: Ciphertext,
    pub ct_counterparty_y: Ciphertext,
    /// Seller's price; present only in the buyer's package.
    pub ct_counterparty_price: Option<Ciphertext>,
}

/// What a recipient recovers from its [`ReturnPackage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Recovered {
    pub x: u32,
    pub y: u32,
    pub price: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Delivery {
    pub package: ReturnPackage,
    pub recovered: Recovered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReturnRecord {
    pub round: u32,
    pub buyer_id: EntityId,
    pub seller_id: EntityId,
    /// What the buyer learned about the seller.
    pub buyer_view: Recovered,
    /// What the seller learned about the buyer.
    pub seller_view: Recovered,
    /// Ciphertext chunks needed to carry the round key to each party.
    pub sk_chunks: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundReport {
    pub round: u32,
    pub key_id: KeyId,
    pub buyers: Vec<EntityId>,
    pub sellers: Vec<EntityId>,
    pub matches: Vec<MatchResult>,
    pub counts: RoleCounts,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub k: usize,
    pub rounds: Vec<RoundReport>,
    pub returns: Vec<ReturnRecord>,
    #[serde(skip)]
    pub log: MessageLog,
}

impl RunReport {
    pub fn matches(&self) -> Vec<MatchResult> {
        self.rounds.iter().flat_map(|r| r.matches.iter().copied()).collect()
    }

    /// Counters summed over all rounds.
    pub fn total_counts(&self) -> RoleCounts {
        let mut t = RoleCounts::default();
        for r in &self.rounds {
            for (acc, c) in [
                (&mut t.buyers, &r.counts.buyers),
                (&mut t.sellers, &r.counts.sellers),
                (&mut t.proxy, &r.counts.proxy),
                (&mut t.cloud, &r.counts.cloud),
            ] {
                acc.encryptions += c.encryptions;
                acc.he_adds += c.he_adds;
                acc.he_subs += c.he_subs;
                acc.decryptions += c.decryptions;
                acc.matchings += c.matchings;
            }
        }
        t
    }
}

#[derive(Serialize)]
struct KeyPayload<'a> {
    round: u32,
    #[serde(with = "hex_big")]
    n: &'a num_bigint::BigUint,
    #[serde(with = "hex_big")]
    g: &'a num_bigint::BigUint,
}

#[derive(Serialize)]
struct SecretPayload<'a> {
    round: u32,
    #[serde(with = "hex_big")]
    p: &'a num_bigint::BigUint,
    #[serde(with = "hex_big")]
    q: &'a num_bigint::BigUint,
}

#[derive(Serialize)]
struct ProfilePayload<'a> {
    round: u32,
    profile: &'a EncryptedProfile,
}

#[derive(Serialize)]
struct SellerForward<'a> {
    round: u32,
    profiles: Vec<&'a EncryptedProfile>,
}

#[derive(Serialize)]
struct PairBatch<'a> {
    round: u32,
    pairs: &'a [PairRecord],
    buyer_terms: &'a [EncryptedBuyerTerms],
}

#[derive(Serialize)]
struct MatchNotice {
    round: u32,
    buyer_id: EntityId,
    seller_id: EntityId,
}

#[derive(Serialize)]
struct SealedKey<'a> {
    round: u32,
    recipient: Party,
    chunk_bytes: usize,
    ct_sk: &'a [Ciphertext],
}

#[derive(Serialize)]
struct LocationForward<'a> {
    round: u32,
    id: EntityId,
    ct_x: &'a Ciphertext,
    ct_y: &'a Ciphertext,
}

mod hex_big {
    use num_bigint::BigUint;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &&BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_str_radix(16))
    }
}

/// The simulated market.
pub struct Market {
    scenario: Scenario,
    cfg: MarketConfig,
    rng: ChaCha20Rng,
    round: u32,
    phase: Phase,
    round_pk: Option<PublicKey>,
    proxies: Vec<Proxy>,
    cloud: Cloud,
    counters: RoleCounters,
    personal: BTreeMap<Party, (PublicKey, PrivateKey)>,
    matched_buyers: BTreeSet<EntityId>,
    matched_sellers: BTreeSet<EntityId>,
    round_matches: Vec<MatchResult>,
    returned: BTreeSet<(EntityId, EntityId)>,
    history: Vec<RoundReport>,
    returns: Vec<ReturnRecord>,
    issued_keys: Vec<KeyId>,
    log: MessageLog,
}

impl Market {
    /// Validates the scenario and opens round 0.
    pub fn new(scenario: Scenario, cfg: MarketConfig, seed: u64) -> Result<Self> {
        scenario.validate()?;
        if cfg.proxies == 0 {
            return Err(Error::InvalidScenario("at least one proxy is required".into()));
        }
        let mut market = Market {
            scenario,
            cfg,
            rng: ChaCha20Rng::seed_from_u64(seed),
            round: 0,
            phase: Phase::Finished,
            round_pk: None,
            proxies: Vec::new(),
            cloud: Cloud {
                sk: None,
                inbox_terms: Vec::new(),
                decrypted_fields: BTreeSet::new(),
            },
            counters: RoleCounters::default(),
            personal: BTreeMap::new(),
            matched_buyers: BTreeSet::new(),
            matched_sellers: BTreeSet::new(),
            round_matches: Vec::new(),
            returned: BTreeSet::new(),
            history: Vec::new(),
            returns: Vec::new(),
            issued_keys: Vec::new(),
            log: MessageLog::default(),
        };
        market.ca_issue_round_keys()?;
        Ok(market)
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &MarketConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// The current round's public key, as broadcast by the CA.
    pub fn round_public_key(&self) -> Option<&PublicKey> {
        self.round_pk.as_ref()
    }

    pub fn proxies(&self) -> &[Proxy] {
        &self.proxies
    }

    /// Whether the cloud currently holds a round secret key.
    pub fn cloud_holds_secret(&self) -> bool {
        self.cloud.sk.is_some()
    }

    /// Labels of every field the cloud has decrypted so far.
    pub fn cloud_decrypted_fields(&self) -> &BTreeSet<&'static str> {
        &self.cloud.decrypted_fields
    }

    pub fn counters(&self) -> RoleCounts {
        self.counters.snapshot()
    }

    pub fn log(&self) -> &MessageLog {
        &self.log
    }

    pub fn history(&self) -> &[RoundReport] {
        &self.history
    }

    pub fn current_matches(&self) -> &[MatchResult] {
        &self.round_matches
    }

    fn wrong_phase(&self, action: &'static str) -> Error {
        Error::WrongPhase {
            round: self.round,
            phase: self.phase.name(),
            action,
        }
    }

    fn shard(&self, id: EntityId) -> u32 {
        id % self.cfg.proxies
    }

    fn ca_issue_round_keys(&mut self) -> Result<()> {
        let (pk, sk) = keygen(self.cfg.bits, self.cfg.round_key_mode, &mut self.rng)?;
        self.issued_keys.push(pk.key_id());
        let key_msg = KeyPayload {
            round: self.round,
            n: pk.n(),
            g: pk.g(),
        };
        for index in 0..self.cfg.proxies {
            self.log
                .record(self.round, Step::KeyIssue, Party::Ca, Party::Proxy(index), "round_public_key", &key_msg);
        }
        for id in self.active_buyers() {
            self.log
                .record(self.round, Step::KeyIssue, Party::Ca, Party::Buyer(id), "round_public_key", &key_msg);
        }
        for id in self.active_sellers() {
            self.log
                .record(self.round, Step::KeyIssue, Party::Ca, Party::Seller(id), "round_public_key", &key_msg);
        }
        self.log.record(
            self.round,
            Step::KeyIssue,
            Party::Ca,
            Party::Cloud,
            "round_secret_key",
            &SecretPayload {
                round: self.round,
                p: sk.p(),
                q: sk.q(),
            },
        );
        self.proxies = (0..self.cfg.proxies)
            .map(|index| Proxy {
                index,
                pk: pk.clone(),
                store: BTreeMap::new(),
            })
            .collect();
        self.cloud.sk = Some(sk);
        self.cloud.inbox_terms.clear();
        self.round_pk = Some(pk);
        self.counters = RoleCounters::default();
        self.round_matches.clear();
        self.returned.clear();
        self.phase = Phase::Open;
        Ok(())
    }

    fn buyer(&self, id: EntityId) -> Option<&BuyerRequest> {
        self.scenario.buyers.iter().find(|b| b.id == id)
    }

    fn seller(&self, id: EntityId) -> Option<&SellerOffer> {
        self.scenario.sellers.iter().find(|s| s.id == id)
    }

    /// Buyers taking part in the current round.
    pub fn active_buyers(&self) -> Vec<EntityId> {
        let mut ids: Vec<EntityId> = self
            .scenario
            .buyers
            .iter()
            .filter(|b| b.active_in(self.round) && !self.matched_buyers.contains(&b.id))
            .map(|b| b.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Sellers still in the pool for the current round.
    pub fn active_sellers(&self) -> Vec<EntityId> {
        let mut ids: Vec<EntityId> = self
            .scenario
            .sellers
            .iter()
            .filter(|s| s.active_in(self.round) && !self.matched_sellers.contains(&s.id))
            .map(|s| s.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    fn party_of(role: Role, id: EntityId) -> Party {
        match role {
            Role::Buyer => Party::Buyer(id),
            Role::Seller => Party::Seller(id),
        }
    }

    /// Encrypts the entity's scenario profile under the current round key
    /// and submits it to its proxy.
    pub fn submit(&mut self, role: Role, id: EntityId) -> Result<()> {
        if self.phase != Phase::Open {
            return Err(self.wrong_phase("submit"));
        }
        let pk = self.round_pk.clone().expect("open round has a key");
        let profile = match role {
            Role::Buyer => {
                let b = self
                    .buyer(id)
                    .cloned()
                    .ok_or_else(|| Error::UnknownEntity(format!("buyer {id}")))?;
                encrypt_buyer(&pk, &b, &self.counters.buyers, &mut self.rng)?
            }
            Role::Seller => {
                let s = self
                    .seller(id)
                    .cloned()
                    .ok_or_else(|| Error::UnknownEntity(format!("seller {id}")))?;
                encrypt_seller(&pk, &s, &self.counters.sellers, &mut self.rng)?
            }
        };
        self.submit_encrypted(profile)
    }

    /// Delivers an already-encrypted profile to the sender's proxy.
    ///
    /// Every ciphertext must carry the current round's key id. A second
    /// submission from the same entity replaces the first.
    pub fn submit_encrypted(&mut self, profile: EncryptedProfile) -> Result<()> {
        if self.phase != Phase::Open {
            return Err(self.wrong_phase("submit"));
        }
        let active = match profile.role {
            Role::Buyer => self.active_buyers(),
            Role::Seller => self.active_sellers(),
        };
        if !active.contains(&profile.id) {
            return Err(Error::UnknownEntity(format!(
                "{} {} is not active in round {}",
                profile.role.name(),
                profile.id,
                self.round
            )));
        }
        let pk = self.round_pk.as_ref().expect("open round has a key");
        for ct in profile.ciphertexts() {
            if ct.key_id() != pk.key_id() {
                return Err(PaillierError::KeyMismatch {
                    expected: pk.key_id(),
                    found: ct.key_id(),
                }
                .into());
            }
        }
        let k = self.scenario.k;
        let shape_ok = profile.ct_demands.len() == k
            && profile.ct_demand_prices.len() == k
            && match profile.role {
                Role::Buyer => profile.ct_dmax.is_some() && profile.ct_weights.len() == k + 2,
                Role::Seller => profile.ct_dmax.is_none() && profile.ct_weights.is_empty(),
            };
        if !shape_ok {
            return Err(Error::InvalidProfile {
                id: profile.id,
                reason: "encrypted profile has the wrong shape".into(),
            });
        }
        let shard = self.shard(profile.id);
        self.log.record(
            self.round,
            Step::Submit,
            Self::party_of(profile.role, profile.id),
            Party::Proxy(shard),
            "encrypted_profile",
            &ProfilePayload {
                round: self.round,
                profile: &profile,
            },
        );
        self.proxies[shard as usize]
            .store
            .insert((profile.role, profile.id), profile);
        Ok(())
    }

    /// Every active buyer, then every active seller, submits in id order.
    pub fn submit_all(&mut self) -> Result<()> {
        for id in self.active_buyers() {
            self.submit(Role::Buyer, id)?;
        }
        for id in self.active_sellers() {
            self.submit(Role::Seller, id)?;
        }
        Ok(())
    }

    /// Homomorphic processing of the full buyer × seller grid.
    ///
    /// With several proxies, seller profiles are first exchanged so each
    /// proxy can pair its own buyers with every seller. Each proxy then
    /// uploads its pair records and its buyers' encrypted `d_max` and
    /// weights to the cloud.
    pub fn proxy_phase(&mut self) -> Result<Vec<PairRecord>> {
        if self.phase != Phase::Open {
            return Err(self.wrong_phase("run the proxy phase"));
        }
        let sellers: Vec<EncryptedProfile> = self
            .proxies
            .iter()
            .flat_map(|p| p.store.values().filter(|e| e.role == Role::Seller).cloned())
            .collect();
        let mut sellers = sellers;
        sellers.sort_by_key(|s| s.id);

        if self.proxies.len() > 1 {
            for from in &self.proxies {
                let own: Vec<&EncryptedProfile> =
                    from.store.values().filter(|e| e.role == Role::Seller).collect();
                if own.is_empty() {
                    continue;
                }
                for to in self.proxies.iter().filter(|p| p.index != from.index) {
                    self.log.record(
                        self.round,
                        Step::ProxyExchange,
                        Party::Proxy(from.index),
                        Party::Proxy(to.index),
                        "seller_profiles",
                        &SellerForward {
                            round: self.round,
                            profiles: own.clone(),
                        },
                    );
                }
            }
        }

        let mut all_pairs = Vec::new();
        let mut all_terms = Vec::new();
        for proxy in &self.proxies {
            let mut pairs = Vec::new();
            let mut terms = Vec::new();
            for buyer in proxy.store.values().filter(|e| e.role == Role::Buyer) {
                for seller in &sellers {
                    pairs.push(pair_process(&proxy.pk, buyer, seller, &self.counters.proxy)?);
                }
                terms.push(EncryptedBuyerTerms {
                    buyer_id: buyer.id,
                    ct_dmax: buyer.ct_dmax.clone().expect("buyer shape checked on submit"),
                    ct_weights: buyer.ct_weights.clone(),
                });
            }
            if pairs.is_empty() && terms.is_empty() {
                continue;
            }
            self.log.record(
                self.round,
                Step::PairUpload,
                Party::Proxy(proxy.index),
                Party::Cloud,
                "pair_batch",
                &PairBatch {
                    round: self.round,
                    pairs: &pairs,
                    buyer_terms: &terms,
                },
            );
            all_pairs.extend(pairs);
            all_terms.extend(terms);
        }
        all_pairs.sort_by_key(|p| (p.buyer_id, p.seller_id));
        all_terms.sort_by_key(|t| t.buyer_id);
        self.cloud.inbox_terms = all_terms;
        self.phase = Phase::Paired;
        Ok(all_pairs)
    }

    fn cloud_decrypt(&mut self, label: &'static str, ct: &Ciphertext) -> Result<i64> {
        let sk = self.cloud.sk.as_ref().expect("cloud holds the round key while matching");
        let m = sk.decrypt_crt(ct)?;
        self.counters.cloud.record(Op::Decrypt);
        self.cloud.decrypted_fields.insert(label);
        Ok(sk.public_key().decode_i64(&m)?)
    }

    fn cloud_decrypt_u32(&mut self, label: &'static str, ct: &Ciphertext, owner: EntityId) -> Result<u32> {
        let v = self.cloud_decrypt(label, ct)?;
        u32::try_from(v).map_err(|_| Error::InvalidProfile {
            id: owner,
            reason: format!("{label} decrypts to {v}"),
        })
    }

    /// Decrypts the buyers' terms and every pair record with the CRT path,
    /// then runs the round's matching.
    pub fn cloud_phase(&mut self, pairs: &[PairRecord]) -> Result<Vec<MatchResult>> {
        if self.phase != Phase::Paired {
            return Err(self.wrong_phase("run the cloud phase"));
        }
        let inbox = std::mem::take(&mut self.cloud.inbox_terms);
        let mut terms = Vec::with_capacity(inbox.len());
        for t in &inbox {
            let d_max = self.cloud_decrypt_u32("d_max", &t.ct_dmax, t.buyer_id)?;
            let mut w = Vec::with_capacity(t.ct_weights.len());
            for (i, ct) in t.ct_weights.iter().enumerate() {
                let label = match i {
                    0 => "w_d",
                    1 => "w_r",
                    _ => "w_alpha",
                };
                w.push(self.cloud_decrypt_u32(label, ct, t.buyer_id)?);
            }
            let weights = PreferenceWeights::from_slice(&w).ok_or(Error::InvalidProfile {
                id: t.buyer_id,
                reason: "missing preference weights".into(),
            })?;
            terms.push(BuyerTerms {
                buyer_id: t.buyer_id,
                d_max,
                weights,
            });
        }

        let mut decrypted = Vec::with_capacity(pairs.len());
        for p in pairs {
            let dx = self.cloud_decrypt("dx", &p.ct_dx)?;
            let dy = self.cloud_decrypt("dy", &p.ct_dy)?;
            let dr = self.cloud_decrypt("dr", &p.ct_dr)?;
            let mut alpha_sum = Vec::with_capacity(p.ct_alpha_sum.len());
            for ct in &p.ct_alpha_sum {
                let a = self.cloud_decrypt("alpha_sum", ct)?;
                alpha_sum.push(u8::try_from(a).map_err(|_| Error::InvalidDemandSum(a))?);
            }
            let mut dr_alpha = Vec::with_capacity(p.ct_dr_alpha.len());
            for ct in &p.ct_dr_alpha {
                dr_alpha.push(self.cloud_decrypt("dr_alpha", ct)?);
            }
            decrypted.push(DecryptedPair {
                buyer_id: p.buyer_id,
                seller_id: p.seller_id,
                dx,
                dy,
                dr,
                alpha_sum,
                dr_alpha,
            });
        }

        let results = run_round_matching(
            self.round,
            &terms,
            &decrypted,
            self.cfg.policy,
            &self.counters.cloud,
        )?;
        for m in &results {
            let notice = MatchNotice {
                round: self.round,
                buyer_id: m.buyer_id,
                seller_id: m.seller_id,
            };
            for proxy in [self.shard(m.buyer_id), self.shard(m.seller_id)]
                .into_iter()
                .collect::<BTreeSet<_>>()
            {
                self.log
                    .record(self.round, Step::MatchNotice, Party::Cloud, Party::Proxy(proxy), "match_notice", &notice);
            }
        }
        self.round_matches = results.clone();
        self.phase = Phase::Matched;
        Ok(results)
    }

    fn personal_key(&mut self, party: Party) -> Result<PublicKey> {
        if let Some((pk, _)) = self.personal.get(&party) {
            return Ok(pk.clone());
        }
        let bits = self.cfg.personal_bits.unwrap_or(self.cfg.bits);
        let pair = keygen(bits, GeneratorMode::NPlusOne, &mut self.rng)?;
        let pk = pair.0.clone();
        self.personal.insert(party, pair);
        Ok(pk)
    }

    fn stored_profile(&self, role: Role, id: EntityId) -> Result<&EncryptedProfile> {
        self.proxies[self.shard(id) as usize]
            .stored(role, id)
            .ok_or_else(|| Error::UnknownEntity(format!("{} {id} in proxy store", role.name())))
    }

    fn deliver_to(&mut self, recipient: Party, counterparty: Party) -> Result<Delivery> {
        let (recipient_role, recipient_id) = match recipient {
            Party::Buyer(id) => (Role::Buyer, id),
            Party::Seller(id) => (Role::Seller, id),
            _ => unreachable!("only users receive packages"),
        };
        let (counter_role, counter_id) = match counterparty {
            Party::Buyer(id) => (Role::Buyer, id),
            Party::Seller(id) => (Role::Seller, id),
            _ => unreachable!("only users are counterparties"),
        };
        let round = self.round;

        // The recipient registers a fresh g = n + 1 personal key with the cloud.
        let personal_pk = self.personal_key(recipient)?;
        self.log.record(
            round,
            Step::PersonalKey,
            recipient,
            Party::Cloud,
            "personal_public_key",
            &KeyPayload {
                round,
                n: personal_pk.n(),
                g: personal_pk.g(),
            },
        );

        // Cloud seals the round secret under it.
        let round_sk = self.cloud.sk.as_ref().expect("cloud holds the round key");
        let secret = transport::serialize_secret(round_sk)?;
        let chunk_bytes = transport::chunk_bytes(&personal_pk)?;
        let ct_sk = transport::seal(&secret, &personal_pk, &mut self.rng)?;
        self.counters.cloud.record_n(Op::Encrypt, ct_sk.len() as u64);
        let home = self.shard(recipient_id);
        self.log.record(
            round,
            Step::KeyHandover,
            Party::Cloud,
            Party::Proxy(home),
            "sealed_round_key",
            &SealedKey {
                round,
                recipient,
                chunk_bytes,
                ct_sk: &ct_sk,
            },
        );

        // The recipient's proxy attaches the stored counterparty ciphertexts.
        let counter_profile = self.stored_profile(counter_role, counter_id)?.clone();
        let counter_home = self.shard(counter_id);
        if counter_home != home && counter_role == Role::Buyer {
            self.log.record(
                round,
                Step::KeyHandover,
                Party::Proxy(counter_home),
                Party::Proxy(home),
                "location_forward",
                &LocationForward {
                    round,
                    id: counter_id,
                    ct_x: &counter_profile.ct_x,
                    ct_y: &counter_profile.ct_y,
                },
            );
        }
        let package = ReturnPackage {
            round,
            recipient,
            counterparty,
            chunk_bytes,
            ct_sk,
            ct_counterparty_x: counter_profile.ct_x.clone(),
            ct_counterparty_y: counter_profile.ct_y.clone(),
            ct_counterparty_price: (recipient_role == Role::Buyer).then(|| counter_profile.ct_price.clone()),
        };
        self.log
            .record(round, Step::ReturnDelivery, Party::Proxy(home), recipient, "return_package", &package);

        let recovered = self.open_package(&package)?;
        Ok(Delivery { package, recovered })
    }

    /// The recipient's side: unseal the round key with its personal key,
    /// then decrypt the counterparty fields with the recovered round key.
    fn open_package(&self, package: &ReturnPackage) -> Result<Recovered> {
        let counters = match package.recipient {
            Party::Buyer(_) => &self.counters.buyers,
            _ => &self.counters.sellers,
        };
        let (_, personal_sk) = self
            .personal
            .get(&package.recipient)
            .ok_or(Error::KeyTransport("recipient has no personal key"))?;
        let round_pk = self.round_pk.as_ref().expect("round key during return");
        let width = transport::factor_width(round_pk);
        let secret = transport::open(&package.ct_sk, personal_sk, 2 * width)?;
        counters.record_n(Op::Decrypt, package.ct_sk.len() as u64);
        let round_sk = transport::deserialize_secret(round_pk, &secret)?;

        let dec = |ct: &Ciphertext| -> Result<u32> {
            let m = round_sk.decrypt_standard(ct)?;
            counters.record(Op::Decrypt);
            let v = round_pk.decode_i64(&m)?;
            u32::try_from(v).map_err(|_| Error::KeyTransport("counterparty field out of range"))
        };
        Ok(Recovered {
            x: dec(&package.ct_counterparty_x)?,
            y: dec(&package.ct_counterparty_y)?,
            price: package.ct_counterparty_price.as_ref().map(dec).transpose()?,
        })
    }

    /// Result return for one match of the current round. Returns the
    /// buyer's delivery and the seller's delivery.
    pub fn result_return(&mut self, m: &MatchResult) -> Result<(Delivery, Delivery)> {
        if self.phase != Phase::Matched {
            return Err(self.wrong_phase("return results"));
        }
        if !self.round_matches.contains(m) {
            return Err(Error::UnknownEntity(format!(
                "match ({}, {}) in round {}",
                m.buyer_id, m.seller_id, self.round
            )));
        }
        let to_buyer = self.deliver_to(Party::Buyer(m.buyer_id), Party::Seller(m.seller_id))?;
        let to_seller = self.deliver_to(Party::Seller(m.seller_id), Party::Buyer(m.buyer_id))?;
        if self.returned.insert((m.buyer_id, m.seller_id)) {
            self.returns.push(ReturnRecord {
                round: self.round,
                buyer_id: m.buyer_id,
                seller_id: m.seller_id,
                buyer_view: to_buyer.recovered,
                seller_view: to_seller.recovered,
                sk_chunks: to_buyer.package.ct_sk.len(),
            });
        }
        Ok((to_buyer, to_seller))
    }

    pub fn return_all(&mut self) -> Result<Vec<(Delivery, Delivery)>> {
        let matches = self.round_matches.clone();
        matches.iter().map(|m| self.result_return(m)).collect()
    }

    /// Closes the current round and opens the next one with fresh keys, or
    /// finishes the market. Returns the report of the closed round.
    pub fn advance_round(&mut self) -> Result<RoundReport> {
        if self.phase != Phase::Matched {
            return Err(self.wrong_phase("advance"));
        }
        if self.returned.len() != self.round_matches.len() {
            return Err(self.wrong_phase("advance before every result is returned"));
        }
        let pk = self.round_pk.as_ref().expect("round key");
        let mut buyers: Vec<EntityId> = Vec::new();
        let mut sellers: Vec<EntityId> = Vec::new();
        for p in &self.proxies {
            for e in p.store.values() {
                match e.role {
                    Role::Buyer => buyers.push(e.id),
                    Role::Seller => sellers.push(e.id),
                }
            }
        }
        buyers.sort_unstable();
        sellers.sort_unstable();
        let report = RoundReport {
            round: self.round,
            key_id: pk.key_id(),
            buyers,
            sellers,
            matches: self.round_matches.clone(),
            counts: self.counters.snapshot(),
        };
        for m in &self.round_matches {
            self.matched_buyers.insert(m.buyer_id);
            self.matched_sellers.insert(m.seller_id);
        }
        self.history.push(report.clone());

        // Retire the round key everywhere.
        self.cloud.sk = None;
        for p in &mut self.proxies {
            p.store.clear();
        }

        let next = self.round + 1;
        let open = next < self.cfg.max_rounds
            && round_should_open(
                &self.scenario,
                next,
                &self.matched_buyers,
                &self.matched_sellers,
                Some(report.matches.len()),
            );
        self.round = next;
        if open {
            self.ca_issue_round_keys()?;
        } else {
            self.round_pk = None;
            self.phase = Phase::Finished;
        }
        Ok(report)
    }

    /// Runs one full round. `None` once the market has finished.
    pub fn step_round(&mut self) -> Result<Option<RoundReport>> {
        if self.phase == Phase::Finished {
            return Ok(None);
        }
        if self.phase != Phase::Open {
            return Err(self.wrong_phase("start a full round"));
        }
        self.submit_all()?;
        let pairs = self.proxy_phase()?;
        self.cloud_phase(&pairs)?;
        self.return_all()?;
        self.advance_round().map(Some)
    }

    /// Runs rounds until the market finishes.
    pub fn run(mut self) -> Result<RunReport> {
        while self.step_round()?.is_some() {}
        Ok(self.into_report())
    }

    pub fn into_report(self) -> RunReport {
        RunReport {
            k: self.scenario.k,
            rounds: self.history,
            returns: self.returns,
            log: self.log,
        }
    }

    /// Every round key issued so far, in order.
    pub fn issued_keys(&self) -> &[KeyId] {
        &self.issued_keys
    }
}
