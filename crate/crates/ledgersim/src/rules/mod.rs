//! Declarative rule framework.
//!
//! Every rule supplies three behaviors: `check` (side-effect-free plan
//! validation), `update` (bank-initiated events for the day), and
//! `prompt_fragments` (state-aware guidance for the proposal source).
//! Invariant rules gate acceptance; realism rules only shape prompts unless
//! configured strict. The registry evaluates invariant rules before realism
//! rules, in registration order within each class.

mod builtin;
mod prompt;

pub use builtin::{default_registry, liquidity_check, maybe_random_event, RuleConfig};
pub use prompt::{build_next_prompt, PromptFragment, PromptSpec};

use crate::ledger::{LedgerError, LedgerState, PostingOutcome, TransactionEvent};
use crate::proposer::DailyPlan;
use chrono::NaiveDate;
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Machine-readable violation codes. Each rule documents its closed set.
pub mod codes {
    // ledger / structural
    pub const WRONG_DATE: &str = "WRONG_DATE";
    pub const AFTER_TERMINATION: &str = "AFTER_TERMINATION";
    pub const SIGN_MISMATCH: &str = "SIGN_MISMATCH";
    pub const BAD_SEQUENCE: &str = "BAD_SEQUENCE";
    pub const UNKNOWN_SCHEDULE: &str = "UNKNOWN_SCHEDULE";
    pub const TOO_MANY_EVENTS: &str = "TOO_MANY_EVENTS";
    pub const EMPTY_MERCHANT: &str = "EMPTY_MERCHANT";
    // cash_conservation
    pub const PAYMENT_EXCEEDS_CASH: &str = "PAYMENT_EXCEEDS_CASH";
    pub const INCOME_NOT_PROPOSABLE: &str = "INCOME_NOT_PROPOSABLE";
    // credit_balance
    pub const CREDIT_LIMIT_EXCEEDED: &str = "CREDIT_LIMIT_EXCEEDED";
    pub const OVERPAYMENT: &str = "OVERPAYMENT";
    // due_date_compliance
    pub const UNSOLICITED_REMEDIATION: &str = "UNSOLICITED_REMEDIATION";
    // subscription_carryover
    pub const DUPLICATE_SCHEDULED_CHARGE: &str = "DUPLICATE_SCHEDULED_CHARGE";
    // liquidity
    pub const LIQUIDITY: &str = "LIQUIDITY";
    // purchase_cadence
    pub const CADENCE_TOO_FREQUENT: &str = "CADENCE_TOO_FREQUENT";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// Hard accounting constraint; violations block acceptance.
    Invariant,
    /// Soft behavioral constraint; violations feed back through prompts.
    Realism,
}

/// Severity of a single violation. Realism rules emit soft violations unless
/// configured strict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Hard,
    Soft,
}

/// One violated constraint, with enough context to build targeted feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule_id: String,
    pub code: String,
    pub message: String,
    pub severity: Severity,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub offending_event_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub suggested_remedy: Option<String>,
}

impl Violation {
    pub fn rule(rule_id: &str, code: &str, message: impl Into<String>) -> Violation {
        Violation {
            rule_id: rule_id.to_string(),
            code: code.to_string(),
            message: message.into(),
            severity: Severity::Hard,
            offending_event_index: None,
            suggested_remedy: None,
        }
    }

    /// Structural ledger violation not owned by a registered rule.
    pub fn ledger(code: &str, message: impl Into<String>) -> Violation {
        Violation::rule("ledger", code, message)
    }

    pub fn soft(mut self) -> Violation {
        self.severity = Severity::Soft;
        self
    }

    pub fn at_index(mut self, index: usize) -> Violation {
        self.offending_event_index = Some(index);
        self
    }

    pub fn with_remedy(mut self, remedy: impl Into<String>) -> Violation {
        self.suggested_remedy = Some(remedy.into());
        self
    }

    pub fn is_hard(&self) -> bool {
        self.severity == Severity::Hard
    }
}

/// Aggregated result of one rule pass.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub violations: Vec<Violation>,
    pub forced_events: Vec<TransactionEvent>,
    pub fragments: Vec<PromptFragment>,
}

impl RuleOutcome {
    pub fn hard_violations(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.is_hard())
    }

    pub fn has_hard_violations(&self) -> bool {
        self.violations.iter().any(|v| v.is_hard())
    }
}

/// The rule template: check, update, next-prompt.
pub trait Rule: Send + Sync {
    fn rule_id(&self) -> &str;

    fn kind(&self) -> RuleKind;

    /// Validates a full daily plan against the state, walking hypothetical
    /// prefix state where needed. Must not mutate anything.
    fn check(&self, state: &LedgerState, plan: &DailyPlan) -> Vec<Violation>;

    /// Bank-initiated events for this date. The returned outcome carries the
    /// successor state with the events already applied, so forced sequences
    /// (headroom payments before charges) stay exact.
    fn update(
        &self,
        state: &LedgerState,
        date: NaiveDate,
        rng: &mut dyn RngCore,
    ) -> Result<PostingOutcome, LedgerError> {
        let _ = (date, rng);
        Ok(PostingOutcome {
            state: state.clone(),
            events: Vec::new(),
        })
    }

    /// Prompt guidance for the day: notices, reminders, instructions.
    /// `outstanding` carries violations from the previous evaluation round.
    fn prompt_fragments(
        &self,
        state: &LedgerState,
        date: NaiveDate,
        outstanding: &[Violation],
        rng: &mut dyn RngCore,
    ) -> Vec<PromptFragment> {
        let _ = (state, date, outstanding, rng);
        Vec::new()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RuleError {
    #[error("duplicate rule id {0:?}")]
    DuplicateRuleId(String),
}

/// Ordered rule collection. Immutable once built; shared across workers.
pub struct RuleRegistry {
    rules: Vec<Box<dyn Rule>>,
    max_events_per_day: usize,
}

impl RuleRegistry {
    pub fn new(max_events_per_day: usize) -> RuleRegistry {
        RuleRegistry {
            rules: Vec::new(),
            max_events_per_day,
        }
    }

    /// Registers a rule; evaluation order is registration order within each
    /// kind, invariants first.
    pub fn register(&mut self, rule: Box<dyn Rule>) -> Result<(), RuleError> {
        if self.rules.iter().any(|r| r.rule_id() == rule.rule_id()) {
            return Err(RuleError::DuplicateRuleId(rule.rule_id().to_string()));
        }
        self.rules.push(rule);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rule_ids(&self) -> Vec<&str> {
        self.ordered().map(|r| r.rule_id()).collect()
    }

    /// Invariant rules first, then realism rules, registration order within.
    fn ordered(&self) -> impl Iterator<Item = &Box<dyn Rule>> {
        let invariants = self
            .rules
            .iter()
            .filter(|r| r.kind() == RuleKind::Invariant);
        let realism = self.rules.iter().filter(|r| r.kind() == RuleKind::Realism);
        invariants.chain(realism)
    }

    /// Runs every rule's check over the plan. Never mutates state; the plan
    /// is evaluated hypothetically inside each rule.
    pub fn evaluate_plan(&self, state: &LedgerState, plan: &DailyPlan) -> RuleOutcome {
        let mut violations = Vec::new();
        if plan.proposed_events.len() > self.max_events_per_day {
            violations.push(
                Violation::ledger(
                    codes::TOO_MANY_EVENTS,
                    format!(
                        "plan has {} events, limit {}",
                        plan.proposed_events.len(),
                        self.max_events_per_day
                    ),
                )
                .with_remedy(format!(
                    "propose at most {} events",
                    self.max_events_per_day
                )),
            );
        }
        for (i, draft) in plan.proposed_events.iter().enumerate() {
            if draft.merchant_name.trim().is_empty() || draft.merchant_type.trim().is_empty() {
                violations.push(
                    Violation::ledger(codes::EMPTY_MERCHANT, "merchant fields must be non-empty")
                        .at_index(i),
                );
            }
        }
        for rule in self.ordered() {
            violations.extend(rule.check(state, plan));
        }
        RuleOutcome {
            violations,
            forced_events: Vec::new(),
            fragments: Vec::new(),
        }
    }

    /// Applies every rule's update for the day, threading state through in
    /// evaluation order. Returns the successor state and all posted events.
    pub fn run_updates(
        &self,
        state: &LedgerState,
        date: NaiveDate,
        rng: &mut dyn RngCore,
    ) -> Result<PostingOutcome, LedgerError> {
        let mut current = state.clone();
        let mut events = Vec::new();
        for (_, outcome) in self.run_updates_by_rule(state, date, rng)? {
            current = outcome.state;
            events.extend(outcome.events);
        }
        Ok(PostingOutcome {
            state: current,
            events,
        })
    }

    /// Like [`RuleRegistry::run_updates`], but keeps each rule's posting
    /// outcome separate so callers can attribute events to their rule.
    pub fn run_updates_by_rule(
        &self,
        state: &LedgerState,
        date: NaiveDate,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<(String, PostingOutcome)>, LedgerError> {
        let mut current = state.clone();
        let mut out = Vec::new();
        for rule in self.ordered() {
            let outcome = rule.update(&current, date, rng)?;
            current = outcome.state.clone();
            out.push((rule.rule_id().to_string(), outcome));
        }
        Ok(out)
    }

    /// Collects prompt fragments from every rule in evaluation order.
    pub fn collect_fragments(
        &self,
        state: &LedgerState,
        date: NaiveDate,
        outstanding: &[Violation],
        rng: &mut dyn RngCore,
    ) -> Vec<PromptFragment> {
        let mut fragments = Vec::new();
        for rule in self.ordered() {
            fragments.extend(rule.prompt_fragments(state, date, outstanding, rng));
        }
        fragments
    }
}
