//! The lifecycle edge list as plain data, and the full (state, event) table
//! it implies.

use ibn_core::intent::{LifecycleEvent, LifecycleState};

/// The documented edges, written as data rather than as a match.
pub fn documented_edges() -> Vec<(LifecycleState, LifecycleEvent, LifecycleState)> {
    use LifecycleEvent as E;
    use LifecycleState as S;
    let mut edges = vec![
        (S::Received, E::Translate, S::Translated),
        (S::Received, E::DeployTerminal, S::Deployed),
        (S::Translated, E::ChildDeployed, S::Deployed),
        (S::Deployed, E::Assure, S::Assured),
        (S::Deployed, E::Degrade, S::Degraded),
        (S::Degraded, E::Assure, S::Assured),
    ];
    for s in S::ALL {
        edges.push((s, E::Fail, S::Failed));
    }
    edges
}

pub fn oracle_table() -> Vec<((LifecycleState, LifecycleEvent), Option<LifecycleState>)> {
    let edges = documented_edges();
    let mut table = Vec::new();
    for s in LifecycleState::ALL {
        for e in LifecycleEvent::ALL {
            let to = edges.iter().find(|(f, ev, _)| *f == s && *ev == e).map(|(_, _, t)| *t);
            table.push(((s, e), to));
        }
    }
    table
}
