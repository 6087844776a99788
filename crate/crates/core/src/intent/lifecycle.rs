use serde::{Deserialize, Serialize};

use super::{IntentError, IntentScope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LifecycleState {
    Received,
    Translated,
    Deployed,
    Assured,
    Degraded,
    Failed,
}

impl LifecycleState {
    pub const ALL: [LifecycleState; 6] = [
        Self::Received,
        Self::Translated,
        Self::Deployed,
        Self::Assured,
        Self::Degraded,
        Self::Failed,
    ];

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Received => "received",
            Self::Translated => "translated",
            Self::Deployed => "deployed",
            Self::Assured => "assured",
            Self::Degraded => "degraded",
            Self::Failed => "failed",
        }
    }
}

impl std::fmt::Display for LifecycleState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LifecycleState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown lifecycle state `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LifecycleEvent {
    /// A derived intent was produced for the next scope.
    Translate,
    /// A terminal-scope handler finished deployment itself.
    DeployTerminal,
    /// The derived child intent reported itself deployed.
    ChildDeployed,
    Assure,
    Degrade,
    Fail,
}

impl LifecycleEvent {
    pub const ALL: [LifecycleEvent; 6] = [
        Self::Translate,
        Self::DeployTerminal,
        Self::ChildDeployed,
        Self::Assure,
        Self::Degrade,
        Self::Fail,
    ];
}

/// The scope-agnostic edge set.
pub fn transition(state: LifecycleState, event: LifecycleEvent) -> Result<LifecycleState, IntentError> {
    use LifecycleEvent as E;
    use LifecycleState as S;
    match (state, event) {
        (_, E::Fail) => Ok(S::Failed),
        (S::Received, E::Translate) => Ok(S::Translated),
        (S::Received, E::DeployTerminal) => Ok(S::Deployed),
        (S::Translated, E::ChildDeployed) => Ok(S::Deployed),
        (S::Deployed, E::Assure) | (S::Degraded, E::Assure) => Ok(S::Assured),
        (S::Deployed, E::Degrade) => Ok(S::Degraded),
        (from, event) => Err(IntentError::IllegalTransition { from, event }),
    }
}

/// [`transition`] restricted by scope: only non-terminal scopes translate
/// and wait on children, only the terminal scope deploys directly.
pub fn transition_for_scope(
    scope: IntentScope,
    state: LifecycleState,
    event: LifecycleEvent,
) -> Result<LifecycleState, IntentError> {
    let allowed = match event {
        LifecycleEvent::Translate | LifecycleEvent::ChildDeployed => !scope.is_terminal(),
        LifecycleEvent::DeployTerminal => scope.is_terminal(),
        _ => true,
    };
    if !allowed {
        return Err(IntentError::IllegalTransition { from: state, event });
    }
    transition(state, event)
}

/// The event a handler's report of `to` stands for on an intent of `scope`.
pub fn event_for_report(scope: IntentScope, to: LifecycleState) -> Option<LifecycleEvent> {
    Some(match to {
        LifecycleState::Received => return None,
        LifecycleState::Translated => LifecycleEvent::Translate,
        LifecycleState::Deployed if scope.is_terminal() => LifecycleEvent::DeployTerminal,
        LifecycleState::Deployed => LifecycleEvent::ChildDeployed,
        LifecycleState::Assured => LifecycleEvent::Assure,
        LifecycleState::Degraded => LifecycleEvent::Degrade,
        LifecycleState::Failed => LifecycleEvent::Fail,
    })
}
