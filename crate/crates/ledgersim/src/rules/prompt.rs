//! Deterministic next-prompt assembly.
//!
//! The prompt the proposal source sees each day is assembled from fixed
//! blocks: calendar context, account state, rule fragments (scheduled-charge
//! notices, cadence reminders, payment-due lines, forced-event instructions),
//! violation feedback with remedies, and the trailing conversation window.
//! Identical inputs yield byte-identical text.

use crate::calendar::holiday_name;
use crate::ledger::{EventKind, LedgerState};
use crate::money::Money;
use crate::proposer::ConversationWindow;
use crate::rules::{RuleOutcome, RuleRegistry, Violation};
use chrono::{Datelike, NaiveDate};
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Structured prompt building block. The mock proposer consumes these
/// directly; the rendered text goes to external backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fragment", rename_all = "snake_case")]
pub enum PromptFragment {
    /// A charge the bank posted today; informational.
    ScheduledNotice {
        merchant_name: String,
        amount: Money,
        kind: EventKind,
    },
    /// Statement payment reminder.
    PaymentDue {
        remaining: Money,
        minimum: Money,
        due_date: NaiveDate,
    },
    /// Cadence status for a tracked category.
    CadenceReminder {
        category: String,
        days_since: Option<i64>,
        min_gap_days: i64,
    },
    /// The plan must include this exact charge (random events, remedies).
    ForcedCharge {
        description: String,
        merchant_name: String,
        merchant_type: String,
        amount: Money,
    },
}

impl PromptFragment {
    pub fn render(&self) -> String {
        match self {
            PromptFragment::ScheduledNotice {
                merchant_name,
                amount,
                kind,
            } => format!(
                "Posted today: {merchant_name} {amount} ({}).",
                kind.label()
            ),
            PromptFragment::PaymentDue {
                remaining,
                minimum,
                due_date,
            } => format!(
                "Statement payment of {remaining} is due by {due_date} (minimum {minimum})."
            ),
            PromptFragment::CadenceReminder {
                category,
                days_since,
                min_gap_days,
            } => match days_since {
                Some(days) => format!(
                    "Last {category} purchase was {days} day(s) ago; typical gap is at least {min_gap_days} day(s)."
                ),
                None => format!(
                    "No {category} purchase yet; typical gap is at least {min_gap_days} day(s)."
                ),
            },
            PromptFragment::ForcedCharge {
                description,
                merchant_name,
                merchant_type,
                amount,
            } => format!(
                "Unexpected expense today: {description}. Include a purchase of {amount} at {merchant_name} ({merchant_type}) in the plan."
            ),
        }
    }
}

/// The assembled, state- and rule-aware prompt for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub date: NaiveDate,
    pub calendar_line: String,
    pub state_lines: Vec<String>,
    pub fragments: Vec<PromptFragment>,
    /// Violations from the previous evaluation round, verbatim.
    pub feedback: Vec<Violation>,
    pub history_lines: Vec<String>,
}

impl PromptSpec {
    /// Full prompt text; byte-stable for identical inputs.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.calendar_line);
        out.push('\n');
        for line in &self.state_lines {
            out.push_str(line);
            out.push('\n');
        }
        for fragment in &self.fragments {
            out.push_str(&fragment.render());
            out.push('\n');
        }
        for line in self.feedback_lines() {
            out.push_str(&line);
            out.push('\n');
        }
        if !self.history_lines.is_empty() {
            out.push_str("Recent days:\n");
            for line in &self.history_lines {
                out.push_str(line);
                out.push('\n');
            }
        }
        out.push_str(
            "Respond with JSON: {\"reasoning\": string, \"transactions\": [{\"merchant_name\", \"merchant_type\", \"card_present_or_not\", \"amount\", \"kind\"}]}.\n",
        );
        out
    }

    /// Violation feedback rendered as remediation lines.
    pub fn feedback_lines(&self) -> Vec<String> {
        self.feedback
            .iter()
            .map(|v| {
                let mut line = format!("Rejected [{}] {}.", v.code, v.message);
                if let Some(remedy) = &v.suggested_remedy {
                    line.push_str(&format!(" Remedy: {remedy}."));
                }
                line
            })
            .collect()
    }

    pub fn forced_charges(&self) -> impl Iterator<Item = &PromptFragment> {
        self.fragments
            .iter()
            .filter(|f| matches!(f, PromptFragment::ForcedCharge { .. }))
    }
}

fn calendar_line(date: NaiveDate) -> String {
    let weekday = date.weekday();
    match holiday_name(date) {
        Some(name) => format!("Today is {date} ({weekday}). Today is {name}."),
        None => format!("Today is {date} ({weekday})."),
    }
}

fn state_lines(state: &LedgerState) -> Vec<String> {
    let mut lines = vec![format!(
        "Checking cash: {}. Credit balance: {} of {} limit.",
        state.cash, state.credit_balance, state.credit_limit
    )];
    if let Some(due) = state.due_date {
        let remaining =
            (state.statement_balance_due - state.paid_toward_statement).max(Money::ZERO);
        lines.push(format!(
            "Open statement: {} due by {due} ({} already paid).",
            remaining, state.paid_toward_statement
        ));
    }
    lines
}

/// Assembles the next prompt: calendar block, state summary, rule fragments,
/// violation feedback with remedies, and the 7-day history window.
pub fn build_next_prompt(
    registry: &RuleRegistry,
    state: &LedgerState,
    date: NaiveDate,
    outcome: &RuleOutcome,
    window: &ConversationWindow,
    rng: &mut dyn RngCore,
) -> PromptSpec {
    let mut fragments = registry.collect_fragments(state, date, &outcome.violations, rng);
    fragments.extend(outcome.fragments.iter().cloned());
    PromptSpec {
        date,
        calendar_line: calendar_line(date),
        state_lines: state_lines(state),
        fragments,
        feedback: outcome.violations.clone(),
        history_lines: window.summary_lines(),
    }
}
