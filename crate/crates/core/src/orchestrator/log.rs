//! Simulated network: every message between parties is recorded here.

use std::fmt;

use serde::{Serialize, Serializer};
use serde_json::Value;

use crate::protocol::EntityId;

/// A participant in the simulated network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Party {
    Ca,
    Cloud,
    Proxy(u32),
    Buyer(EntityId),
    Seller(EntityId),
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Ca => f.write_str("ca"),
            Party::Cloud => f.write_str("cloud"),
            Party::Proxy(i) => write!(f, "proxy{i}"),
            Party::Buyer(id) => write!(f, "buyer{id}"),
            Party::Seller(id) => write!(f, "seller{id}"),
        }
    }
}

impl Serialize for Party {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    KeyIssue,
    Submit,
    ProxyExchange,
    PairUpload,
    MatchNotice,
    PersonalKey,
    KeyHandover,
    ReturnDelivery,
}

#[derive(Debug, Clone, Serialize)]
pub struct Message {
    pub round: u32,
    pub step: Step,
    pub sender: Party,
    pub receiver: Party,
    pub payload_kind: &'static str,
    /// The payload exactly as it went on the wire (JSON).
    #[serde(skip)]
    pub payload: String,
}

impl Message {
    pub fn bytes(&self) -> usize {
        self.payload.len()
    }
}

/// Keys whose numeric values are routing metadata rather than profile data.
const ROUTING_KEYS: &[&str] = &["round", "id", "buyer_id", "seller_id", "chunk_bytes"];

/// Keys that name plaintext profile fields or their decrypted combinations.
const PROFILE_KEYS: &[&str] = &[
    "x", "y", "price", "d_max", "demands", "demand_prices", "weights", "w_d", "w_r", "w_alpha",
    "dx", "dy", "dr", "alpha_sum", "dr_alpha",
];

/// A message that carries something other than ciphertexts and routing ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditFinding {
    pub index: usize,
    pub path: String,
    pub reason: &'static str,
}

#[derive(Debug, Clone, Default)]
pub struct MessageLog {
    messages: Vec<Message>,
}

impl MessageLog {
    pub(crate) fn record<T: Serialize>(
        &mut self,
        round: u32,
        step: Step,
        sender: Party,
        receiver: Party,
        payload_kind: &'static str,
        payload: &T,
    ) {
        let payload = serde_json::to_string(payload).expect("payload serializes");
        self.messages.push(Message {
            round,
            step,
            sender,
            receiver,
            payload_kind,
            payload,
        });
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn total_bytes(&self) -> usize {
        self.messages.iter().map(Message::bytes).sum()
    }

    /// One JSON object per line:
    /// `{"round","step","sender","receiver","payload_kind","bytes"}`.
    pub fn export_lines(&self) -> String {
        #[derive(Serialize)]
        struct Record {
            round: u32,
            step: Step,
            sender: Party,
            receiver: Party,
            payload_kind: &'static str,
            bytes: usize,
        }
        let mut out = String::new();
        for m in &self.messages {
            let rec = Record {
                round: m.round,
                step: m.step,
                sender: m.sender,
                receiver: m.receiver,
                payload_kind: m.payload_kind,
                bytes: m.bytes(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("log record serializes"));
            out.push('\n');
        }
        out
    }

    /// Walks every payload and reports numbers outside routing fields and
    /// any field named after a plaintext profile value.
    pub fn audit_plaintext(&self) -> Vec<AuditFinding> {
        let mut findings = Vec::new();
        for (index, m) in self.messages.iter().enumerate() {
            let value: Value = match serde_json::from_str(&m.payload) {
                Ok(v) => v,
                Err(_) => {
                    findings.push(AuditFinding {
                        index,
                        path: String::new(),
                        reason: "payload is not JSON",
                    });
                    continue;
                }
            };
            audit_value(index, "", None, &value, &mut findings);
        }
        findings
    }
}

fn audit_value(
    index: usize,
    path: &str,
    key: Option<&str>,
    v: &Value,
    out: &mut Vec<AuditFinding>,
) {
    match v {
        Value::Number(_) if !key.is_some_and(|k| ROUTING_KEYS.contains(&k)) => {
            out.push(AuditFinding {
                index,
                path: path.to_owned(),
                reason: "numeric value outside routing fields",
            });
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                audit_value(index, &format!("{path}[{i}]"), key, item, out);
            }
        }
        Value::Object(map) => {
            for (k, item) in map {
                let child = format!("{path}.{k}");
                if PROFILE_KEYS.contains(&k.as_str()) {
                    out.push(AuditFinding {
                        index,
                        path: child.clone(),
                        reason: "plaintext profile field name",
                    });
                }
                audit_value(index, &child, Some(k), item, out);
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn party_names() {
        assert_eq!(Party::Proxy(2).to_string(), "proxy2");
        assert_eq!(Party::Buyer(7).to_string(), "buyer7");
        assert_eq!(serde_json::to_string(&Party::Cloud).unwrap(), "\"cloud\"");
    }

    #[test]
    fn audit_flags_leaks() {
        let mut log = MessageLog::default();
        log.record(0, Step::Submit, Party::Buyer(1), Party::Proxy(0), "ok", &serde_json::json!({
            "round": 0, "id": 1, "ct": {"c": "abcd"}
        }));
        log.record(0, Step::Submit, Party::Buyer(1), Party::Proxy(0), "leak", &serde_json::json!({
            "id": 1, "x": "12"
        }));
        log.record(0, Step::Submit, Party::Buyer(1), Party::Proxy(0), "leak", &serde_json::json!({
            "id": 1, "extra": [3, 4]
        }));
        let findings = log.audit_plaintext();
        let indices: Vec<usize> = findings.iter().map(|f| f.index).collect();
        assert_eq!(indices, vec![1, 2, 2]);
        assert_eq!(findings[0].path, ".x");
    }

    #[test]
    fn export_is_one_record_per_line() {
        let mut log = MessageLog::default();
        log.record(3, Step::KeyIssue, Party::Ca, Party::Cloud, "k", &"abc");
        let text = log.export_lines();
        assert_eq!(
            text,
            "{\"round\":3,\"step\":\"key_issue\",\"sender\":\"ca\",\"receiver\":\"cloud\",\"payload_kind\":\"k\",\"bytes\":5}\n"
        );
        let v: Value = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(v["round"], 3);
        assert_eq!(v["step"], "key_issue");
        assert_eq!(v["receiver"], "cloud");
        assert_eq!(v["bytes"], 5);
    }
}
