//! Proposal sources: where candidate daily plans come from.
//!
//! Two variants ship with the engine. The mock source is a deterministic,
//! persona-conditioned generator over the bundled catalog, good for desk-scale
//! corpora with no model in the loop. The external source speaks a
//! chat-completion wire protocol to whatever backend the config names. Both
//! produce the same [`DailyPlan`] shape; the engine does not care which is
//! which.

mod external;
mod mock;

pub use external::ExternalProposer;
pub use mock::MockProposer;

use crate::backend::BackendError;
use crate::ledger::{EventDraft, EventKind, LedgerState};
use crate::money::Money;
use crate::persona::AugmentedPersona;
use crate::rules::PromptSpec;
use chrono::{NaiveDate, NaiveTime};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// A candidate set of transactions for one simulated day.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DailyPlan {
    pub reasoning: Option<String>,
    pub proposed_events: Vec<EventDraft>,
}

impl DailyPlan {
    pub fn empty() -> DailyPlan {
        DailyPlan::default()
    }

    /// Wire form: the JSON schema proposal sources are asked to emit.
    pub fn to_wire_json(&self) -> String {
        let transactions: Vec<serde_json::Value> = self
            .proposed_events
            .iter()
            .map(|d| {
                serde_json::json!({
                    "merchant_name": d.merchant_name,
                    "merchant_type": d.merchant_type,
                    "card_present_or_not": d.card_present_or_not,
                    "amount": d.amount.to_decimal_string(),
                    "kind": d.kind.label(),
                })
            })
            .collect();
        let mut body = serde_json::Map::new();
        if let Some(reasoning) = &self.reasoning {
            body.insert("reasoning".to_string(), serde_json::json!(reasoning));
        }
        body.insert("transactions".to_string(), serde_json::json!(transactions));
        serde_json::Value::Object(body).to_string()
    }
}

/// Rolling window of the last seven (prompt, plan) exchanges.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConversationWindow {
    entries: VecDeque<WindowEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowEntry {
    pub date: NaiveDate,
    pub prompt_text: String,
    pub plan_json: String,
}

pub const WINDOW_DAYS: usize = 7;

impl ConversationWindow {
    pub fn new() -> ConversationWindow {
        ConversationWindow::default()
    }

    /// Appends a day's exchange, evicting the oldest beyond seven days.
    pub fn push(&mut self, entry: WindowEntry) {
        self.entries.push_back(entry);
        while self.entries.len() > WINDOW_DAYS {
            self.entries.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &WindowEntry> {
        self.entries.iter()
    }

    /// One line per remembered day, for prompt assembly.
    pub fn summary_lines(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| format!("{}: {}", e.date, e.plan_json))
            .collect()
    }
}

/// Plan parse failures, each with a distinct code used to build reprompts.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanParseError {
    #[error("MALFORMED_JSON: {0}")]
    MalformedJson(String),
    #[error("MISSING_FIELD: {0}")]
    MissingField(String),
    #[error("NON_NUMERIC_AMOUNT: {0:?}")]
    NonNumericAmount(String),
    #[error("INVALID_KIND: {0:?}")]
    InvalidKind(String),
}

impl PlanParseError {
    pub fn code(&self) -> &'static str {
        match self {
            PlanParseError::MalformedJson(_) => "MALFORMED_JSON",
            PlanParseError::MissingField(_) => "MISSING_FIELD",
            PlanParseError::NonNumericAmount(_) => "NON_NUMERIC_AMOUNT",
            PlanParseError::InvalidKind(_) => "INVALID_KIND",
        }
    }
}

fn parse_kind(raw: &str) -> Result<EventKind, PlanParseError> {
    match raw {
        "purchase" => Ok(EventKind::Purchase),
        "payment" => Ok(EventKind::Payment),
        "subscription_charge" => Ok(EventKind::SubscriptionCharge),
        "recurring_bill" => Ok(EventKind::RecurringBill),
        "interest" => Ok(EventKind::Interest),
        "fee" => Ok(EventKind::Fee),
        "income_deposit" => Ok(EventKind::IncomeDeposit),
        "cancel_subscription" => Ok(EventKind::CancelSubscription),
        other => Err(PlanParseError::InvalidKind(other.to_string())),
    }
}

/// Deterministic intra-day timestamp for the i-th plan event.
pub fn plan_event_time(date: NaiveDate, index: usize) -> chrono::NaiveDateTime {
    let minutes = (9 * 60 + index as u32 * 30).min(22 * 60);
    date.and_time(NaiveTime::from_hms_opt(minutes / 60, minutes % 60, 0).unwrap())
}

/// Parses a proposal source's raw text into a daily plan for `date`.
///
/// Strict on shape: `transactions` must be an array of objects carrying the
/// five draft fields. Amounts are decimal strings or numbers, converted to
/// cents without binary-float drift. Signs are normalized from the kind
/// (payments negative, charges positive, cancels zero). Unknown fields are
/// ignored.
pub fn parse_plan(raw: &str, date: NaiveDate) -> Result<DailyPlan, PlanParseError> {
    let value: serde_json::Value = serde_json::from_str(raw.trim())
        .map_err(|e| PlanParseError::MalformedJson(e.to_string()))?;
    let object = value
        .as_object()
        .ok_or_else(|| PlanParseError::MalformedJson("top level must be an object".to_string()))?;
    let reasoning = object
        .get("reasoning")
        .and_then(|v| v.as_str())
        .map(|s| s.to_string());
    let transactions = object
        .get("transactions")
        .ok_or_else(|| PlanParseError::MissingField("transactions".to_string()))?
        .as_array()
        .ok_or_else(|| {
            PlanParseError::MalformedJson("transactions must be an array".to_string())
        })?;

    let mut proposed_events = Vec::with_capacity(transactions.len());
    for (i, tx) in transactions.iter().enumerate() {
        let tx = tx.as_object().ok_or_else(|| {
            PlanParseError::MalformedJson(format!("transactions[{i}] must be an object"))
        })?;
        let field = |name: &str| -> Result<&serde_json::Value, PlanParseError> {
            tx.get(name)
                .ok_or_else(|| PlanParseError::MissingField(format!("transactions[{i}].{name}")))
        };
        let merchant_name = field("merchant_name")?
            .as_str()
            .ok_or_else(|| {
                PlanParseError::MissingField(format!("transactions[{i}].merchant_name"))
            })?
            .to_string();
        let merchant_type = field("merchant_type")?
            .as_str()
            .ok_or_else(|| {
                PlanParseError::MissingField(format!("transactions[{i}].merchant_type"))
            })?
            .to_string();
        let card_present_or_not = field("card_present_or_not")?.as_bool().ok_or_else(|| {
            PlanParseError::MissingField(format!("transactions[{i}].card_present_or_not"))
        })?;
        let amount_value = field("amount")?;
        let amount_text = match amount_value {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            _ => return Err(PlanParseError::NonNumericAmount(amount_value.to_string())),
        };
        let magnitude = Money::parse_decimal(&amount_text)
            .map_err(|_| PlanParseError::NonNumericAmount(amount_text.clone()))?;
        let kind_text = field("kind")?
            .as_str()
            .ok_or_else(|| PlanParseError::MissingField(format!("transactions[{i}].kind")))?;
        let kind = parse_kind(kind_text)?;
        let amount = match kind {
            EventKind::Payment => -magnitude.abs(),
            EventKind::CancelSubscription => Money::ZERO,
            _ => magnitude.abs(),
        };
        proposed_events.push(EventDraft {
            timestamp: plan_event_time(date, i),
            merchant_name,
            merchant_type,
            card_present_or_not,
            amount,
            kind,
        });
    }
    Ok(DailyPlan {
        reasoning,
        proposed_events,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum ProposeError {
    /// The backend answered but never produced a parseable plan.
    #[error("plan unavailable after {attempts} attempt(s): {last_error}; raw: {raw}")]
    PlanUnavailable {
        attempts: u32,
        last_error: String,
        raw: String,
    },
    /// The backend itself failed (network, auth, bad status).
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// A proposal source: the mock generator or an external backend.
pub enum ProposalSource {
    Mock(MockProposer),
    External(ExternalProposer),
}

impl ProposalSource {
    pub fn mock() -> ProposalSource {
        ProposalSource::Mock(MockProposer::new())
    }

    /// Mock source with preset scaling applied.
    pub fn mock_with(config: crate::engine::MockConfig) -> ProposalSource {
        ProposalSource::Mock(MockProposer::with_scales(
            config.spend_scale,
            config.rate_scale,
        ))
    }

    /// Draws a daily plan conditioned on the persona, current state, and the
    /// assembled prompt. Deterministic for the mock given the rng stream.
    pub fn propose(
        &self,
        prompt: &PromptSpec,
        persona: &AugmentedPersona,
        state: &LedgerState,
        window: &ConversationWindow,
        rng: &mut dyn RngCore,
    ) -> Result<DailyPlan, ProposeError> {
        match self {
            ProposalSource::Mock(mock) => Ok(mock.propose(prompt, persona, state, rng)),
            ProposalSource::External(external) => external.propose(prompt, persona, window),
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self, ProposalSource::External(_))
    }
}
