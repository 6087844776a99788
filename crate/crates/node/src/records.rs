//! The controller's global view of every intent: current state, history,
//! lineage and latest assurance metrics.
//!
//! Every mutation is expressed as a [`RecordLogEntry`] and applied through
//! [`IntentStore::apply`], so replaying the persisted log reproduces the
//! in-memory store exactly.

use std::collections::BTreeMap;

use ibn_core::intent::{
    decode_intent, encode_intent, event_for_report, transition_for_scope, Intent, IntentId,
    LifecycleEvent, LifecycleState,
};
use ibn_core::pki::StakeholderRole;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("unknown intent")]
    UnknownIntent,
    #[error("sender is not the intent's owner")]
    OwnerSpoof,
    #[error("reporter does not handle this intent or any descendant")]
    UnauthorizedReporter,
    #[error("illegal lifecycle transition")]
    IllegalTransition,
    #[error("malformed submission")]
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub at: u64,
    pub state: LifecycleState,
    pub by: StakeholderRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalIntentRecord {
    pub intent: Intent,
    pub history: Vec<HistoryEntry>,
    pub child_ids: Vec<IntentId>,
    /// Latest assurance metrics per reporting role.
    pub metrics: BTreeMap<StakeholderRole, Vec<(String, f64)>>,
    /// Whether the handler acknowledged delivery.
    pub delivered: bool,
}

impl GlobalIntentRecord {
    pub fn state(&self) -> LifecycleState {
        self.intent.state
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordLogEntry {
    Created { intent: String, at: u64, by: StakeholderRole },
    State { id: IntentId, state: LifecycleState, at: u64, by: StakeholderRole },
    Delivered { id: IntentId },
    Metrics { id: IntentId, by: StakeholderRole, metrics: Vec<(String, f64)> },
}

impl RecordLogEntry {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log entries serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

/// What a submission did.
#[derive(Debug, Clone, PartialEq)]
pub enum Submitted {
    /// New record; deliver to its handler.
    New(Vec<RecordLogEntry>),
    /// Same intent seen before; nothing changed.
    Duplicate,
}

#[derive(Debug, Default, Clone)]
pub struct IntentStore {
    records: BTreeMap<IntentId, GlobalIntentRecord>,
}

fn rank(s: LifecycleState) -> u8 {
    match s {
        LifecycleState::Received => 0,
        LifecycleState::Translated => 1,
        LifecycleState::Deployed => 2,
        LifecycleState::Assured | LifecycleState::Degraded => 3,
        LifecycleState::Failed => 4,
    }
}

impl IntentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &IntentId) -> Option<&GlobalIntentRecord> {
        self.records.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &GlobalIntentRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Applies one log entry. Entries produced by this store always apply;
    /// entries from a damaged log that reference unknown ids are skipped.
    pub fn apply(&mut self, entry: &RecordLogEntry) {
        match entry {
            RecordLogEntry::Created { intent, at, by } => {
                let Ok(bytes) = hex::decode(intent) else { return };
                let Ok(intent) = decode_intent(&bytes) else { return };
                if let Some(parent) = intent.parent_id.and_then(|p| self.records.get_mut(&p)) {
                    if !parent.child_ids.contains(&intent.id) {
                        parent.child_ids.push(intent.id);
                    }
                }
                let history = vec![HistoryEntry { at: *at, state: intent.state, by: *by }];
                self.records.insert(
                    intent.id,
                    GlobalIntentRecord {
                        intent,
                        history,
                        child_ids: Vec::new(),
                        metrics: BTreeMap::new(),
                        delivered: false,
                    },
                );
            }
            RecordLogEntry::State { id, state, at, by } => {
                if let Some(r) = self.records.get_mut(id) {
                    r.intent.state = *state;
                    let at = r.history.last().map_or(*at, |h| h.at.max(*at));
                    r.history.push(HistoryEntry { at, state: *state, by: *by });
                }
            }
            RecordLogEntry::Delivered { id } => {
                if let Some(r) = self.records.get_mut(id) {
                    r.delivered = true;
                }
            }
            RecordLogEntry::Metrics { id, by, metrics } => {
                if let Some(r) = self.records.get_mut(id) {
                    r.metrics.insert(*by, metrics.clone());
                }
            }
        }
    }

    fn commit(&mut self, out: &mut Vec<RecordLogEntry>, entry: RecordLogEntry) {
        self.apply(&entry);
        out.push(entry);
    }

    fn step(
        &mut self,
        out: &mut Vec<RecordLogEntry>,
        id: IntentId,
        event: LifecycleEvent,
        at: u64,
        by: StakeholderRole,
    ) -> Result<LifecycleState, RecordError> {
        let r = self.records.get(&id).ok_or(RecordError::UnknownIntent)?;
        let next = transition_for_scope(r.intent.scope, r.intent.state, event)
            .map_err(|_| RecordError::IllegalTransition)?;
        self.commit(out, RecordLogEntry::State { id, state: next, at, by });
        Ok(next)
    }

    /// Registers a new intent submitted by `by`.
    pub fn submit(&mut self, intent: Intent, by: StakeholderRole, at: u64) -> Result<Submitted, RecordError> {
        if intent.owner != by {
            return Err(RecordError::OwnerSpoof);
        }
        if let Some(existing) = self.records.get(&intent.id) {
            return if existing.intent.owner == by { Ok(Submitted::Duplicate) } else { Err(RecordError::OwnerSpoof) };
        }
        if intent.state != LifecycleState::Received || intent.validate().is_err() {
            return Err(RecordError::Malformed);
        }
        let mut out = Vec::new();
        if let Some(pid) = intent.parent_id {
            let parent = self.records.get(&pid).ok_or(RecordError::UnknownIntent)?;
            if parent.intent.handler != by {
                return Err(RecordError::OwnerSpoof);
            }
            if parent.intent.scope.next() != Some(intent.scope) {
                return Err(RecordError::Malformed);
            }
            match parent.intent.state {
                LifecycleState::Received => {
                    self.step(&mut out, pid, LifecycleEvent::Translate, at, by)?;
                }
                LifecycleState::Failed => return Err(RecordError::IllegalTransition),
                _ => {}
            }
        }
        self.commit(&mut out, RecordLogEntry::Created { intent: hex::encode(encode_intent(&intent)), at, by });
        Ok(Submitted::New(out))
    }

    /// Whether `role` handles `id` or any of its descendants.
    fn handles_lineage(&self, id: &IntentId, role: StakeholderRole) -> bool {
        let Some(r) = self.records.get(id) else { return false };
        r.intent.handler == role || r.child_ids.iter().any(|c| self.handles_lineage(c, role))
    }

    /// Applies a handler's progress report and propagates it to ancestors.
    /// Repeated or superseded reports are accepted without effect.
    pub fn record_report(
        &mut self,
        by: StakeholderRole,
        id: IntentId,
        state: LifecycleState,
        metrics: Vec<(String, f64)>,
        at: u64,
    ) -> Result<Vec<RecordLogEntry>, RecordError> {
        let r = self.records.get(&id).ok_or(RecordError::UnknownIntent)?;
        if !self.handles_lineage(&id, by) {
            return Err(RecordError::UnauthorizedReporter);
        }
        let current = r.intent.state;
        let scope = r.intent.scope;
        let mut out = Vec::new();
        if !metrics.is_empty() && r.metrics.get(&by) != Some(&metrics) {
            self.commit(&mut out, RecordLogEntry::Metrics { id, by, metrics });
        }
        if state == current {
            return Ok(out);
        }
        if current != LifecycleState::Failed && state != LifecycleState::Failed && rank(state) < rank(current) {
            return Ok(out);
        }
        let event = event_for_report(scope, state).ok_or(RecordError::IllegalTransition)?;
        if event == LifecycleEvent::Assure && !self.children_assured(&id) {
            return Err(RecordError::IllegalTransition);
        }
        if event == LifecycleEvent::ChildDeployed && current == LifecycleState::Received {
            self.step(&mut out, id, LifecycleEvent::Translate, at, by)?;
        }
        self.step(&mut out, id, event, at, by)?;
        self.propagate(&mut out, id, at);
        Ok(out)
    }

    fn children_assured(&self, id: &IntentId) -> bool {
        self.records[id]
            .child_ids
            .iter()
            .all(|c| self.records.get(c).is_some_and(|r| r.intent.state == LifecycleState::Assured))
    }

    /// Moves ancestors of `child` as its new state requires.
    fn propagate(&mut self, out: &mut Vec<RecordLogEntry>, child: IntentId, at: u64) {
        let me = StakeholderRole::Ibnsc;
        let mut cur = child;
        loop {
            let c = &self.records[&cur];
            let Some(pid) = c.intent.parent_id else { return };
            let child_state = c.intent.state;
            let Some(p) = self.records.get(&pid) else { return };
            let parent_state = p.intent.state;
            use LifecycleState as S;
            let events: &[LifecycleEvent] = match (child_state, parent_state) {
                (S::Deployed, S::Received) => &[LifecycleEvent::Translate, LifecycleEvent::ChildDeployed],
                (S::Deployed, S::Translated) => &[LifecycleEvent::ChildDeployed],
                (S::Assured, S::Deployed | S::Degraded) if self.children_assured(&pid) => &[LifecycleEvent::Assure],
                (S::Degraded, S::Deployed) => &[LifecycleEvent::Degrade],
                (S::Failed, s) if s != S::Failed => &[LifecycleEvent::Fail],
                _ => return,
            };
            for e in events {
                if self.step(out, pid, *e, at, me).is_err() {
                    return;
                }
            }
            cur = pid;
        }
    }

    /// Marks the record delivered; returns the entry if it changed anything.
    pub fn mark_delivered(&mut self, id: IntentId) -> Option<RecordLogEntry> {
        let r = self.records.get(&id)?;
        if r.delivered {
            return None;
        }
        let e = RecordLogEntry::Delivered { id };
        self.apply(&e);
        Some(e)
    }

    /// Follows parent links to the root, starting with `id` itself.
    pub fn lineage(&self, id: &IntentId) -> Vec<&GlobalIntentRecord> {
        let mut out = Vec::new();
        let mut cur = self.records.get(id);
        while let Some(r) = cur {
            out.push(r);
            cur = r.intent.parent_id.and_then(|p| self.records.get(&p));
        }
        out
    }

    /// All descendants of `id`, breadth first.
    pub fn descendants(&self, id: &IntentId) -> Vec<&GlobalIntentRecord> {
        let mut out = Vec::new();
        let mut queue: std::collections::VecDeque<IntentId> =
            self.records.get(id).map(|r| r.child_ids.iter().copied().collect()).unwrap_or_default();
        while let Some(c) = queue.pop_front() {
            if let Some(r) = self.records.get(&c) {
                queue.extend(r.child_ids.iter().copied());
                out.push(r);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ibn_core::intent::{default_rules, new_intent, translate, Expectation, IntentScope};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use LifecycleState as S;
    use StakeholderRole as R;

    struct Chain {
        store: IntentStore,
        csc: IntentId,
        csp: IntentId,
        nop: IntentId,
        log: Vec<RecordLogEntry>,
    }

    fn chain() -> Chain {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut store = IntentStore::new();
        let mut log = Vec::new();
        let mut a = new_intent(
            IntentScope::IntentCsc,
            R::Csc,
            vec![Expectation::new("service", "remote-industrial-control"), Expectation::new("area", "A")],
            1,
            &mut rng,
        )
        .unwrap();
        let Submitted::New(e) = store.submit(a.clone(), R::Csc, 1).unwrap() else { panic!() };
        log.extend(e);
        let mut b = translate(&mut a, &default_rules(), 2, &mut rng).unwrap();
        let Submitted::New(e) = store.submit(b.clone(), R::Csp, 2).unwrap() else { panic!() };
        log.extend(e);
        let c = translate(&mut b, &default_rules(), 3, &mut rng).unwrap();
        let Submitted::New(e) = store.submit(c.clone(), R::Nop, 3).unwrap() else { panic!() };
        log.extend(e);
        Chain { store, csc: a.id, csp: b.id, nop: c.id, log }
    }

    #[test]
    fn child_submission_translates_parent() {
        let c = chain();
        assert_eq!(c.store.get(&c.csc).unwrap().state(), S::Translated);
        assert_eq!(c.store.get(&c.csp).unwrap().state(), S::Translated);
        assert_eq!(c.store.get(&c.nop).unwrap().state(), S::Received);
        assert_eq!(c.store.get(&c.csc).unwrap().child_ids, vec![c.csp]);
    }

    #[test]
    fn terminal_deploy_and_assure_propagate() {
        let mut c = chain();
        c.store.record_report(R::Visp, c.nop, S::Deployed, vec![], 4).unwrap();
        assert_eq!(c.store.get(&c.csp).unwrap().state(), S::Deployed);
        assert_eq!(c.store.get(&c.csc).unwrap().state(), S::Deployed);
        c.store.record_report(R::Visp, c.nop, S::Assured, vec![("latency_ms".into(), 3.0)], 5).unwrap();
        for id in [c.nop, c.csp, c.csc] {
            assert_eq!(c.store.get(&id).unwrap().state(), S::Assured);
        }
        let lineage = c.store.lineage(&c.nop);
        assert_eq!(lineage.len(), 3);
        assert_eq!(lineage[2].intent.scope, IntentScope::IntentCsc);
    }

    #[test]
    fn reports_are_idempotent() {
        let mut c = chain();
        c.store.record_report(R::Visp, c.nop, S::Deployed, vec![], 4).unwrap();
        let before = c.store.get(&c.nop).unwrap().history.len();
        assert!(c.store.record_report(R::Visp, c.nop, S::Deployed, vec![], 4).unwrap().is_empty());
        // A Translated report arriving after the child already moved the parent on.
        assert!(c.store.record_report(R::Csp, c.csc, S::Translated, vec![], 4).unwrap().is_empty());
        assert_eq!(c.store.get(&c.nop).unwrap().history.len(), before);
    }

    #[test]
    fn failure_propagates_to_root() {
        let mut c = chain();
        c.store.record_report(R::Visp, c.nop, S::Failed, vec![], 4).unwrap();
        for id in [c.nop, c.csp, c.csc] {
            assert_eq!(c.store.get(&id).unwrap().state(), S::Failed);
        }
    }

    #[test]
    fn reporter_authorization() {
        let mut c = chain();
        assert_eq!(
            c.store.record_report(R::Csc, c.csc, S::Assured, vec![], 4),
            Err(RecordError::UnauthorizedReporter)
        );
        assert_eq!(
            c.store.record_report(R::Csp, IntentId([0; 16]), S::Deployed, vec![], 4),
            Err(RecordError::UnknownIntent)
        );
        // Only the VISP handles the terminal intent.
        assert_eq!(
            c.store.record_report(R::Nop, c.nop, S::Deployed, vec![], 4),
            Err(RecordError::UnauthorizedReporter)
        );
    }

    #[test]
    fn parent_never_assured_before_children() {
        let mut c = chain();
        c.store.record_report(R::Visp, c.nop, S::Deployed, vec![], 4).unwrap();
        assert_eq!(
            c.store.record_report(R::Csp, c.csc, S::Assured, vec![], 5),
            Err(RecordError::IllegalTransition)
        );
    }

    #[test]
    fn owner_spoof_and_duplicates() {
        let mut c = chain();
        let rec = c.store.get(&c.csc).unwrap().intent.clone();
        let mut fresh = rec.clone();
        fresh.state = S::Received;
        assert_eq!(c.store.submit(fresh.clone(), R::Csc, 9), Ok(Submitted::Duplicate));
        assert_eq!(c.store.submit(fresh.clone(), R::Nop, 9), Err(RecordError::OwnerSpoof));
        fresh.id = IntentId([9; 16]);
        assert_eq!(c.store.submit(fresh, R::Nop, 9), Err(RecordError::OwnerSpoof));
    }

    #[test]
    fn log_replay_reproduces_store() {
        let mut c = chain();
        c.log.extend(c.store.record_report(R::Visp, c.nop, S::Deployed, vec![], 4).unwrap());
        c.log.extend(c.store.record_report(R::Visp, c.nop, S::Assured, vec![("x".into(), 1.0)], 5).unwrap());
        let mut replayed = IntentStore::new();
        for e in &c.log {
            replayed.apply(&RecordLogEntry::from_line(&e.to_line()).unwrap());
        }
        for id in [c.csc, c.csp, c.nop] {
            assert_eq!(replayed.get(&id), c.store.get(&id));
        }
    }

    #[test]
    fn history_follows_state_machine() {
        let mut c = chain();
        c.store.record_report(R::Visp, c.nop, S::Deployed, vec![], 4).unwrap();
        c.store.record_report(R::Visp, c.nop, S::Degraded, vec![], 5).unwrap();
        c.store.record_report(R::Visp, c.nop, S::Assured, vec![], 6).unwrap();
        for r in c.store.iter() {
            for w in r.history.windows(2) {
                assert!(w[0].at <= w[1].at);
                let ok = ibn_core::intent::LifecycleEvent::ALL
                    .iter()
                    .any(|e| transition_for_scope(r.intent.scope, w[0].state, *e) == Ok(w[1].state));
                assert!(ok, "{:?} -> {:?}", w[0].state, w[1].state);
            }
        }
        assert_eq!(c.store.get(&c.csc).unwrap().state(), S::Assured);
    }
}
