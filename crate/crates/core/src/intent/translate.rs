//! Rule-driven translation of an intent into the next scope down.
//!
//! A rule matches one expectation of the source intent by scope, key and
//! (optionally) value, then emits templated expectations. Templates may
//! reference `{value}` (the matched expectation's value) or `{<key>}` (any
//! other expectation of the source intent); a rule whose references cannot
//! be resolved does not apply.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{new_intent_with_parent, Expectation, Intent, IntentError, IntentScope, LifecycleEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationTemplate {
    pub key: String,
    pub value: String,
    /// Copy the matched expectation's numeric target onto this one.
    #[serde(default)]
    pub carry_target: bool,
}

impl ExpectationTemplate {
    pub fn new(key: &str, value: &str) -> Self {
        Self { key: key.into(), value: value.into(), carry_target: false }
    }

    fn carrying(mut self) -> Self {
        self.carry_target = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationRule {
    pub name: String,
    /// Source scope; `None` matches every translatable scope.
    #[serde(default)]
    pub scope: Option<IntentScope>,
    pub key: String,
    /// Required value; `None` matches any.
    #[serde(default)]
    pub value: Option<String>,
    pub produce: Vec<ExpectationTemplate>,
}

impl TranslationRule {
    fn apply(&self, intent: &Intent) -> Option<Vec<Expectation>> {
        if self.scope.is_some_and(|s| s != intent.scope) {
            return None;
        }
        let matched = intent
            .expectations
            .iter()
            .find(|e| e.key == self.key && self.value.as_ref().is_none_or(|v| *v == e.value))?;
        self.produce
            .iter()
            .map(|t| {
                Some(Expectation {
                    key: t.key.clone(),
                    value: render(&t.value, &matched.value, intent)?,
                    target: if t.carry_target { matched.target.clone() } else { None },
                })
            })
            .collect()
    }
}

fn render(template: &str, matched: &str, intent: &Intent) -> Option<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = open + rest[open..].find('}')?;
        let name = &rest[open + 1..close];
        if name == "value" {
            out.push_str(matched);
        } else {
            out.push_str(&intent.expectation(name)?.value);
        }
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    Some(out)
}

/// The shipped rule set: the industrial-control example carried through
/// both translation levels, plus pass-through bandwidth and latency rules.
pub fn default_rules() -> Vec<TranslationRule> {
    let t = ExpectationTemplate::new;
    vec![
        TranslationRule {
            name: "industrial-control-service".into(),
            scope: Some(IntentScope::IntentCsc),
            key: "service".into(),
            value: Some("remote-industrial-control".into()),
            produce: vec![
                t("network-capability", "industrial-control"),
                t("area", "{area}"),
            ],
        },
        TranslationRule {
            name: "industrial-control-network".into(),
            scope: Some(IntentScope::IntentCsp),
            key: "network-capability".into(),
            value: Some("industrial-control".into()),
            produce: vec![
                t("radio-access-network", "{area}"),
                t("core-network", "ultra-reliable-communications"),
            ],
        },
        TranslationRule {
            name: "bandwidth".into(),
            scope: None,
            key: "bandwidth".into(),
            value: None,
            produce: vec![t("bandwidth", "{value}").carrying()],
        },
        TranslationRule {
            name: "latency".into(),
            scope: None,
            key: "latency".into(),
            value: None,
            produce: vec![t("latency", "{value}").carrying()],
        },
    ]
}

/// Produces the derived intent one scope below `intent` and moves `intent`
/// to `Translated`. Outputs of all applicable rules are concatenated in
/// rule order; on duplicate keys the first wins.
pub fn translate<R: RngCore>(
    intent: &mut Intent,
    rules: &[TranslationRule],
    now: u64,
    rng: &mut R,
) -> Result<Intent, IntentError> {
    let next = intent.scope.next().ok_or(IntentError::TerminalScope(intent.scope))?;
    let mut derived: Vec<Expectation> = Vec::new();
    let mut any = false;
    for produced in rules.iter().filter_map(|r| r.apply(intent)) {
        any = true;
        for e in produced {
            if !derived.iter().any(|d| d.key == e.key) {
                derived.push(e);
            }
        }
    }
    if !any {
        return Err(IntentError::NoMatchingRule);
    }
    let next_state = super::transition_for_scope(intent.scope, intent.state, LifecycleEvent::Translate)?;
    let child = new_intent_with_parent(next, intent.handler, Some(intent.id), derived, now, rng)?;
    intent.state = next_state;
    Ok(child)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intent::{new_intent, LifecycleState};
    use crate::pki::StakeholderRole;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn area_a(rng: &mut ChaCha20Rng) -> Intent {
        new_intent(
            IntentScope::IntentCsc,
            StakeholderRole::Csc,
            vec![
                Expectation::new("service", "remote-industrial-control"),
                Expectation::new("area", "A"),
            ],
            0,
            rng,
        )
        .unwrap()
    }

    #[test]
    fn industrial_control_chain() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut csc = area_a(&mut rng);
        let mut csp = translate(&mut csc, &default_rules(), 1, &mut rng).unwrap();
        assert_eq!(csc.state, LifecycleState::Translated);
        assert_eq!(csp.scope, IntentScope::IntentCsp);
        assert_eq!(csp.parent_id, Some(csc.id));
        assert_eq!(csp.owner, csc.handler);
        assert_eq!(csp.expectation("network-capability").unwrap().value, "industrial-control");
        assert_eq!(csp.expectation("area").unwrap().value, "A");

        let nop = translate(&mut csp, &default_rules(), 2, &mut rng).unwrap();
        assert_eq!(nop.scope, IntentScope::IntentNop);
        assert_eq!(nop.handler, StakeholderRole::Visp);
        assert_eq!(nop.expectation("radio-access-network").unwrap().value, "A");
        assert_eq!(nop.expectation("core-network").unwrap().value, "ultra-reliable-communications");
    }

    #[test]
    fn terminal_scope_cannot_translate() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut csc = area_a(&mut rng);
        let mut csp = translate(&mut csc, &default_rules(), 1, &mut rng).unwrap();
        let mut nop = translate(&mut csp, &default_rules(), 2, &mut rng).unwrap();
        assert_eq!(
            translate(&mut nop, &default_rules(), 3, &mut rng),
            Err(IntentError::TerminalScope(IntentScope::IntentNop))
        );
    }

    #[test]
    fn empty_rules() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut csc = area_a(&mut rng);
        assert_eq!(translate(&mut csc, &[], 1, &mut rng), Err(IntentError::NoMatchingRule));
        assert_eq!(csc.state, LifecycleState::Received);
    }

    #[test]
    fn targets_carry_through() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut csc = new_intent(
            IntentScope::IntentCsc,
            StakeholderRole::Csc,
            vec![Expectation::new("bandwidth", "guaranteed").with_target(100.0, "Mbps")],
            0,
            &mut rng,
        )
        .unwrap();
        let csp = translate(&mut csc, &default_rules(), 1, &mut rng).unwrap();
        assert_eq!(csp.expectations, csc.expectations);
    }

    #[test]
    fn unresolved_reference_skips_rule() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut csc = new_intent(
            IntentScope::IntentCsc,
            StakeholderRole::Csc,
            vec![Expectation::new("service", "remote-industrial-control")],
            0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(translate(&mut csc, &default_rules(), 1, &mut rng), Err(IntentError::NoMatchingRule));
    }

    #[test]
    fn already_translated_is_illegal() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut csc = area_a(&mut rng);
        translate(&mut csc, &default_rules(), 1, &mut rng).unwrap();
        assert!(matches!(
            translate(&mut csc, &default_rules(), 1, &mut rng),
            Err(IntentError::IllegalTransition { .. })
        ));
    }

    #[test]
    fn rules_roundtrip_json() {
        let text = serde_json::to_string(&default_rules()).unwrap();
        let back: Vec<TranslationRule> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, default_rules());
    }
}
