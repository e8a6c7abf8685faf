//! Operation counters per protocol role.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Encrypt,
    HeAdd,
    HeSub,
    Decrypt,
    Match,
}

/// Monotone counters for one role. Shared by reference across threads.
#[derive(Debug, Default)]
pub struct OpCounters {
    encryptions: AtomicU64,
    he_adds: AtomicU64,
    he_subs: AtomicU64,
    decryptions: AtomicU64,
    matchings: AtomicU64,
}

impl OpCounters {
    pub fn record(&self, op: Op) {
        self.record_n(op, 1);
    }

    pub fn record_n(&self, op: Op, count: u64) {
        let slot = match op {
            Op::Encrypt => &self.encryptions,
            Op::HeAdd => &self.he_adds,
            Op::HeSub => &self.he_subs,
            Op::Decrypt => &self.decryptions,
            Op::Match => &self.matchings,
        };
        slot.fetch_add(count, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            encryptions: self.encryptions.load(Ordering::Relaxed),
            he_adds: self.he_adds.load(Ordering::Relaxed),
            he_subs: self.he_subs.load(Ordering::Relaxed),
            decryptions: self.decryptions.load(Ordering::Relaxed),
            matchings: self.matchings.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    pub encryptions: u64,
    pub he_adds: u64,
    pub he_subs: u64,
    pub decryptions: u64,
    pub matchings: u64,
}

impl OpCounts {
    pub fn he_ops(&self) -> u64 {
        self.he_adds + self.he_subs
    }
}

/// Counters for every role taking part in one round.
#[derive(Debug, Default)]
pub struct RoleCounters {
    pub buyers: OpCounters,
    pub sellers: OpCounters,
    pub proxy: OpCounters,
    pub cloud: OpCounters,
}

impl RoleCounters {
    pub fn snapshot(&self) -> RoleCounts {
        RoleCounts {
            buyers: self.buyers.snapshot(),
            sellers: self.sellers.snapshot(),
            proxy: self.proxy.snapshot(),
            cloud: self.cloud.snapshot(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RoleCounts {
    pub buyers: OpCounts,
    pub sellers: OpCounts,
    pub proxy: OpCounts,
    pub cloud: OpCounts,
}

impl fmt::Display for RoleCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "role,encryptions,he_adds,he_subs,decryptions,matchings")?;
        for (name, c) in [
            ("buyers", &self.buyers),
            ("sellers", &self.sellers),
            ("proxy", &self.proxy),
            ("cloud", &self.cloud),
        ] {
            writeln!(
                f,
                "{name},{},{},{},{},{}",
                c.encryptions, c.he_adds, c.he_subs, c.decryptions, c.matchings
            )?;
        }
        Ok(())
    }
}
