//! Registry state as a fold over the event log.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::attestation::CapabilityCommitment;
use crate::identity::{CertificateChain, Did, Timestamp};
use crate::name::{compare_versions, AnsName, Label, NameQuery};
use crate::policy::{evaluate, EvaluationContext, Phase, Policy, PolicySubject};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Active,
    Revoked,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub name: AnsName,
    pub did: Did,
    pub endpoint: String,
    pub chain: CertificateChain,
    pub commitments: Vec<CapabilityCommitment>,
    pub namespace: Label,
    pub registered_at: Timestamp,
    pub expires_at: Timestamp,
    pub status: RecordStatus,
}

impl AgentRecord {
    pub fn is_live(&self, now: Timestamp) -> bool {
        self.status == RecordStatus::Active && now <= self.expires_at
    }

    /// Capabilities this record is indexed under.
    pub fn indexed_capabilities(&self) -> BTreeSet<Label> {
        let mut caps: BTreeSet<Label> = self.commitments.iter().map(|c| c.capability.clone()).collect();
        caps.insert(self.name.capability.clone());
        caps
    }

    pub fn policy_subject(&self) -> PolicySubject {
        let caps: Vec<&Label> = self.commitments.iter().map(|c| &c.capability).collect();
        let mut subject = PolicySubject::new(self.name.clone(), self.namespace.clone()).with_capabilities(caps);
        subject.cert_validity_seconds = Some(self.chain.agent.validity_seconds());
        subject
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventKind {
    Registered(Box<AgentRecord>),
    Renewed { name: AnsName, expires_at: Timestamp },
    Revoked { name: AnsName, by: Did },
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::Registered(_) => "Registered",
            EventKind::Renewed { .. } => "Renewed",
            EventKind::Revoked { .. } => "Revoked",
        }
    }
}

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEvent {
    pub seq: u64,
    pub at: Timestamp,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApplyError {
    #[error("expected seq {expected}, found {found}")]
    SeqGap { expected: u64, found: u64 },
    #[error("event refers to unknown agent {0}")]
    UnknownAgent(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RegistryState {
    records: BTreeMap<String, AgentRecord>,
    capability_index: HashMap<Label, BTreeSet<String>>,
    last_seq: u64,
}

impl RegistryState {
    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn get(&self, name: &str) -> Option<&AgentRecord> {
        self.records.get(name)
    }

    pub fn records(&self) -> impl Iterator<Item = &AgentRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn index_insert(&mut self, record: &AgentRecord) {
        if record.status != RecordStatus::Active {
            return;
        }
        let key = record.name.to_string();
        for cap in record.indexed_capabilities() {
            self.capability_index.entry(cap).or_default().insert(key.clone());
        }
    }

    fn index_remove(&mut self, record: &AgentRecord) {
        let key = record.name.to_string();
        for cap in record.indexed_capabilities() {
            if let Some(set) = self.capability_index.get_mut(&cap) {
                set.remove(&key);
                if set.is_empty() {
                    self.capability_index.remove(&cap);
                }
            }
        }
    }

    fn put(&mut self, record: AgentRecord) {
        if let Some(old) = self.records.remove(&record.name.to_string()) {
            self.index_remove(&old);
        }
        self.index_insert(&record);
        self.records.insert(record.name.to_string(), record);
    }

    /// Applies the next event. `seq` must be exactly `last_seq + 1`.
    pub fn apply(&mut self, event: &RegistryEvent) -> Result<(), ApplyError> {
        let expected = self.last_seq + 1;
        if event.seq != expected {
            return Err(ApplyError::SeqGap { expected, found: event.seq });
        }
        match &event.kind {
            EventKind::Registered(record) => self.put((**record).clone()),
            EventKind::Renewed { name, expires_at } => {
                let record = self
                    .records
                    .get_mut(&name.to_string())
                    .ok_or_else(|| ApplyError::UnknownAgent(name.to_string()))?;
                record.expires_at = *expires_at;
            }
            EventKind::Revoked { name, .. } => {
                let key = name.to_string();
                let mut record =
                    self.records.remove(&key).ok_or_else(|| ApplyError::UnknownAgent(key.clone()))?;
                self.index_remove(&record);
                record.status = RecordStatus::Revoked;
                self.records.insert(key, record);
            }
        }
        self.last_seq = event.seq;
        Ok(())
    }

    /// Drops records whose TTL has lapsed. Returns how many were removed.
    pub fn sweep_expired(&mut self, now: Timestamp) -> usize {
        let expired: Vec<String> =
            self.records.iter().filter(|(_, r)| now > r.expires_at).map(|(k, _)| k.clone()).collect();
        for key in &expired {
            if let Some(record) = self.records.remove(key) {
                self.index_remove(&record);
            }
        }
        expired.len()
    }

    /// Names indexed under `capability`.
    pub fn names_with_capability(&self, capability: &Label) -> impl Iterator<Item = &String> {
        self.capability_index.get(capability).into_iter().flatten()
    }

    /// True when the capability index equals a brute-force scan of active
    /// records.
    pub fn audit_index(&self) -> bool {
        let mut expected: HashMap<Label, BTreeSet<String>> = HashMap::new();
        for record in self.records.values().filter(|r| r.status == RecordStatus::Active) {
            for cap in record.indexed_capabilities() {
                expected.entry(cap).or_default().insert(record.name.to_string());
            }
        }
        expected == self.capability_index
    }

    /// Live records matching `query` that runtime policy still allows,
    /// newest version first, then by name.
    pub fn resolve(&self, query: &NameQuery, policies: &[Policy], now: Timestamp) -> Vec<AgentRecord> {
        let allowed = |r: &AgentRecord| {
            let subject = r.policy_subject();
            evaluate(&EvaluationContext { subject: &subject, phase: Phase::Runtime, now }, policies).allowed
        };
        let admit = |r: &&AgentRecord| r.is_live(now) && r.name.matches(query) && allowed(r);

        let mut hits: Vec<&AgentRecord> = match &query.capability {
            Some(cap) => self.names_with_capability(cap).filter_map(|n| self.records.get(n)).filter(admit).collect(),
            None => self.records.values().filter(admit).collect(),
        };

        if query.wants_latest() {
            // one winner per name with the version left out
            let mut best: BTreeMap<(&str, &str, &str, &str, &str), &AgentRecord> = BTreeMap::new();
            for r in hits {
                let n = &r.name;
                let key = (n.protocol.as_str(), n.agent_id.as_str(), n.capability.as_str(), n.provider.as_str(), n.extension.as_str());
                let slot = best.entry(key).or_insert(r);
                if order_records(r, slot) == Ordering::Less {
                    *slot = r;
                }
            }
            hits = best.into_values().collect();
        }
        // render each name once rather than on every comparison
        let mut keyed: Vec<(String, &AgentRecord)> = hits.into_iter().map(|r| (r.name.to_string(), r)).collect();
        keyed.sort_by(|(an, a), (bn, b)| compare_versions(&b.name.version, &a.name.version).then_with(|| an.cmp(bn)));
        keyed.into_iter().map(|(_, r)| r.clone()).collect()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot { last_seq: self.last_seq, records: self.records.values().cloned().collect() }
    }

    pub fn from_snapshot(snapshot: Snapshot) -> Self {
        let mut state = RegistryState { last_seq: snapshot.last_seq, ..Default::default() };
        for record in snapshot.records {
            state.put(record);
        }
        state
    }
}

/// Resolution order: version descending, then rendered name ascending.
pub fn order_records(a: &AgentRecord, b: &AgentRecord) -> Ordering {
    compare_versions(&b.name.version, &a.name.version).then_with(|| a.name.to_string().cmp(&b.name.to_string()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub last_seq: u64,
    pub records: Vec<AgentRecord>,
}
