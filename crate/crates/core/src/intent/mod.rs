//! Intent records, their scope taxonomy, the lifecycle state machine and
//! scope-to-scope translation.
//!
//! An intent is owned by the management-service consumer that raised it and
//! handled by the producer one level down:
//!
//! | scope      | owner | handler |
//! |------------|-------|---------|
//! | Intent-CSC | CSC   | CSP     |
//! | Intent-CSP | CSP   | NOP     |
//! | Intent-NOP | NOP   | VISP    |

mod codec;
mod lifecycle;
mod translate;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pki::StakeholderRole;

pub use codec::{decode_intent, encode_intent};
pub use lifecycle::{
    event_for_report, transition, transition_for_scope, LifecycleEvent, LifecycleState,
};
pub use translate::{default_rules, translate, ExpectationTemplate, TranslationRule};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntentError {
    #[error("{owner} cannot own an intent of scope {scope}")]
    ScopeOwnerMismatch { scope: IntentScope, owner: StakeholderRole },
    #[error("no translation rule matches")]
    NoMatchingRule,
    #[error("{0} is fulfilled by its handler and cannot be translated further")]
    TerminalScope(IntentScope),
    #[error("illegal lifecycle transition from {from:?} on {event:?}")]
    IllegalTransition { from: LifecycleState, event: LifecycleEvent },
    #[error("malformed intent envelope: {0}")]
    MalformedEnvelope(&'static str),
}

/// 128-bit intent identifier. Displays and serializes as 32 hex digits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct IntentId(pub [u8; 16]);

impl From<IntentId> for String {
    fn from(id: IntentId) -> Self {
        id.to_string()
    }
}

impl TryFrom<String> for IntentId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl IntentId {
    pub fn random<R: RngCore>(rng: &mut R) -> Self {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        Self(b)
    }
}

impl fmt::Display for IntentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for IntentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IntentId({self})")
    }
}

impl FromStr for IntentId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut b = [0u8; 16];
        hex::decode_to_slice(s.trim(), &mut b).map_err(|e| format!("bad intent id `{s}`: {e}"))?;
        Ok(Self(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntentScope {
    #[serde(rename = "intent-csc")]
    IntentCsc,
    #[serde(rename = "intent-csp")]
    IntentCsp,
    #[serde(rename = "intent-nop")]
    IntentNop,
}

impl IntentScope {
    pub const ALL: [IntentScope; 3] = [Self::IntentCsc, Self::IntentCsp, Self::IntentNop];

    pub fn owner(self) -> StakeholderRole {
        match self {
            Self::IntentCsc => StakeholderRole::Csc,
            Self::IntentCsp => StakeholderRole::Csp,
            Self::IntentNop => StakeholderRole::Nop,
        }
    }

    pub fn handler(self) -> StakeholderRole {
        match self {
            Self::IntentCsc => StakeholderRole::Csp,
            Self::IntentCsp => StakeholderRole::Nop,
            Self::IntentNop => StakeholderRole::Visp,
        }
    }

    /// The scope a translation of this one produces.
    pub fn next(self) -> Option<Self> {
        match self {
            Self::IntentCsc => Some(Self::IntentCsp),
            Self::IntentCsp => Some(Self::IntentNop),
            Self::IntentNop => None,
        }
    }

    pub fn is_terminal(self) -> bool {
        self.next().is_none()
    }

    pub fn for_owner(owner: StakeholderRole) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.owner() == owner)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Self::IntentCsc => 1,
            Self::IntentCsp => 2,
            Self::IntentNop => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.code() == c)
    }
}

impl fmt::Display for IntentScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::IntentCsc => "Intent-CSC",
            Self::IntentCsp => "Intent-CSP",
            Self::IntentNop => "Intent-NOP",
        })
    }
}

/// Numeric objective attached to an expectation, e.g. `100 Mbps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub key: String,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
}

impl Expectation {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        Self { key: key.into(), value: value.into(), target: None }
    }

    pub fn with_target(mut self, value: f64, unit: impl Into<String>) -> Self {
        self.target = Some(Target { value, unit: unit.into() });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub id: IntentId,
    pub scope: IntentScope,
    pub owner: StakeholderRole,
    pub handler: StakeholderRole,
    pub parent_id: Option<IntentId>,
    pub expectations: Vec<Expectation>,
    pub state: LifecycleState,
    pub created_at: u64,
}

impl Intent {
    pub fn expectation(&self, key: &str) -> Option<&Expectation> {
        self.expectations.iter().find(|e| e.key == key)
    }

    /// Checks the (scope, owner, handler) pairing and the lineage rule.
    pub fn validate(&self) -> Result<(), IntentError> {
        if self.owner != self.scope.owner() || self.handler != self.scope.handler() {
            return Err(IntentError::ScopeOwnerMismatch { scope: self.scope, owner: self.owner });
        }
        let needs_parent = self.scope != IntentScope::IntentCsc;
        if needs_parent != self.parent_id.is_some() {
            return Err(IntentError::MalformedEnvelope("parent id presence does not match scope"));
        }
        Ok(())
    }

    /// Applies `event` to this intent's state, honouring scope restrictions.
    pub fn apply(&mut self, event: LifecycleEvent) -> Result<LifecycleState, IntentError> {
        self.state = transition_for_scope(self.scope, self.state, event)?;
        Ok(self.state)
    }
}

/// Creates a top-level (or derived, when `parent_id` is given) intent in
/// state `Received`.
pub fn new_intent<R: RngCore>(
    scope: IntentScope,
    owner: StakeholderRole,
    expectations: Vec<Expectation>,
    created_at: u64,
    rng: &mut R,
) -> Result<Intent, IntentError> {
    if scope != IntentScope::IntentCsc {
        // Derived scopes only come out of `translate`.
        return Err(IntentError::ScopeOwnerMismatch { scope, owner });
    }
    new_intent_with_parent(scope, owner, None, expectations, created_at, rng)
}

pub(crate) fn new_intent_with_parent<R: RngCore>(
    scope: IntentScope,
    owner: StakeholderRole,
    parent_id: Option<IntentId>,
    expectations: Vec<Expectation>,
    created_at: u64,
    rng: &mut R,
) -> Result<Intent, IntentError> {
    if scope.owner() != owner {
        return Err(IntentError::ScopeOwnerMismatch { scope, owner });
    }
    let intent = Intent {
        id: IntentId::random(rng),
        scope,
        owner,
        handler: scope.handler(),
        parent_id,
        expectations,
        state: LifecycleState::Received,
        created_at,
    };
    intent.validate()?;
    Ok(intent)
}
