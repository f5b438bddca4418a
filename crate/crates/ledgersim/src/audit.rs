//! Append-only audit log: every check, prompt, plan, rejection, and state
//! transition, with a hash chain over canonical state snapshots.
//!
//! Replay re-applies every TRANSITION through [`crate::ledger::apply_event`],
//! re-running the deterministic day-roll bookkeeping (statement roll at close,
//! day advance) between days, and confirms each recorded pre/post hash. A
//! single flipped byte anywhere in a payload breaks the chain at that index.

use crate::ledger::{
    advance_day, apply_event, check_event, is_statement_close_day, roll_statement, state_hash,
    AccountPolicy, ExportEvent, LedgerState, TransactionEvent,
};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditKind {
    #[serde(rename = "CHECK")]
    Check,
    #[serde(rename = "TRANSITION")]
    Transition,
    #[serde(rename = "PROMPT")]
    Prompt,
    #[serde(rename = "PLAN")]
    Plan,
    #[serde(rename = "REJECTION")]
    Rejection,
    #[serde(rename = "DROPPED")]
    Dropped,
    #[serde(rename = "TERMINATION")]
    Termination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Where a transitioned event came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventOrigin {
    /// Accepted from a proposed daily plan.
    Plan,
    /// Payroll deposit.
    Income,
    /// Subscription or bill posting, including forced cancellations.
    Scheduled,
    /// Habit-driven statement payment.
    Autopay,
    /// Payment forced to make room for a mandatory charge.
    ForcedHeadroom,
    /// Late fee or interest at statement close.
    Remediation,
}

/// One check-or-transition entry. Per-user records are strictly ordered by
/// `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub user_id: String,
    pub day: NaiveDate,
    pub step: u64,
    pub kind: AuditKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rule_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub event: Option<TransactionEvent>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub origin: Option<EventOrigin>,
    /// Hex of the canonical pre-state hash (TRANSITION only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pre_state_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub post_state_hash: Option<String>,
    /// Free-form payload: plan JSON, violation codes, prompt hash, reason.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

pub fn hash_hex(hash: u64) -> String {
    format!("{hash:016x}")
}

/// Per-user audit writer assigning step indices.
#[derive(Debug, Default)]
pub struct AuditLog {
    records: Vec<AuditRecord>,
}

impl AuditLog {
    pub fn new() -> AuditLog {
        AuditLog::default()
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<AuditRecord> {
        self.records
    }

    fn base(&self, user_id: &str, day: NaiveDate, kind: AuditKind) -> AuditRecord {
        AuditRecord {
            user_id: user_id.to_string(),
            day,
            step: self.records.len() as u64,
            kind,
            rule_id: None,
            verdict: None,
            event: None,
            origin: None,
            pre_state_hash: None,
            post_state_hash: None,
            detail: None,
        }
    }

    pub fn check(
        &mut self,
        user_id: &str,
        day: NaiveDate,
        rule_id: &str,
        verdict: Verdict,
        detail: Option<String>,
    ) {
        let mut record = self.base(user_id, day, AuditKind::Check);
        record.rule_id = Some(rule_id.to_string());
        record.verdict = Some(verdict);
        record.detail = detail;
        self.records.push(record);
    }

    pub fn prompt(&mut self, user_id: &str, day: NaiveDate, prompt_hash: u64) {
        let mut record = self.base(user_id, day, AuditKind::Prompt);
        record.detail = Some(hash_hex(prompt_hash));
        self.records.push(record);
    }

    pub fn plan(&mut self, user_id: &str, day: NaiveDate, plan_json: String) {
        let mut record = self.base(user_id, day, AuditKind::Plan);
        record.detail = Some(plan_json);
        self.records.push(record);
    }

    pub fn rejection(&mut self, user_id: &str, day: NaiveDate, detail: String) {
        let mut record = self.base(user_id, day, AuditKind::Rejection);
        record.verdict = Some(Verdict::Fail);
        record.detail = Some(detail);
        self.records.push(record);
    }

    pub fn dropped(&mut self, user_id: &str, day: NaiveDate, detail: String) {
        let mut record = self.base(user_id, day, AuditKind::Dropped);
        record.detail = Some(detail);
        self.records.push(record);
    }

    pub fn transition(
        &mut self,
        user_id: &str,
        day: NaiveDate,
        event: TransactionEvent,
        origin: EventOrigin,
        pre_hash: u64,
        post_hash: u64,
    ) {
        let mut record = self.base(user_id, day, AuditKind::Transition);
        record.event = Some(event);
        record.origin = Some(origin);
        record.pre_state_hash = Some(hash_hex(pre_hash));
        record.post_state_hash = Some(hash_hex(post_hash));
        self.records.push(record);
    }

    pub fn termination(&mut self, user_id: &str, day: NaiveDate, reason: &str) {
        let mut record = self.base(user_id, day, AuditKind::Termination);
        record.detail = Some(reason.to_string());
        self.records.push(record);
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReplayError {
    #[error("replay divergence at record index {index}: {detail}")]
    Divergence { index: usize, detail: String },
}

/// Re-derives the final state from one user's ordered audit records.
///
/// Runs the deterministic day-roll (statement bookkeeping on close days, then
/// day advance) between event days, applies every TRANSITION, and verifies
/// the recorded hash chain. The first mismatch reports its record index.
pub fn replay(
    records: &[AuditRecord],
    initial: &LedgerState,
    policy: &AccountPolicy,
) -> Result<LedgerState, ReplayError> {
    let mut state = initial.clone();
    let last_day = match records.last() {
        Some(record) => record.day,
        None => return Ok(state),
    };
    for (index, record) in records.iter().enumerate() {
        match record.kind {
            AuditKind::Transition => {
                let event = record.event.as_ref().ok_or(ReplayError::Divergence {
                    index,
                    detail: "transition without event payload".to_string(),
                })?;
                while state.current_date < event.date() {
                    state = end_of_day(&state, policy);
                }
                let pre = hash_hex(state_hash(&state));
                if record.pre_state_hash.as_deref() != Some(pre.as_str()) {
                    return Err(ReplayError::Divergence {
                        index,
                        detail: format!(
                            "pre-state hash mismatch: recorded {:?}, replayed {}",
                            record.pre_state_hash, pre
                        ),
                    });
                }
                state = apply_event(&state, event).map_err(|e| ReplayError::Divergence {
                    index,
                    detail: e.to_string(),
                })?;
                let post = hash_hex(state_hash(&state));
                if record.post_state_hash.as_deref() != Some(post.as_str()) {
                    return Err(ReplayError::Divergence {
                        index,
                        detail: format!(
                            "post-state hash mismatch: recorded {:?}, replayed {}",
                            record.post_state_hash, post
                        ),
                    });
                }
            }
            AuditKind::Termination => {
                while state.current_date < record.day {
                    state = end_of_day(&state, policy);
                }
                if record.detail.as_deref() == Some("illiquid") {
                    state.terminated_illiquid = true;
                }
            }
            _ => {}
        }
    }
    while state.current_date < last_day {
        state = end_of_day(&state, policy);
    }
    if is_statement_close_day(state.current_date) {
        state = roll_statement(&state, state.current_date, policy);
    }
    Ok(state)
}

/// Day boundary during replay: close bookkeeping (events were already
/// replayed), then advance.
fn end_of_day(state: &LedgerState, policy: &AccountPolicy) -> LedgerState {
    let state = if is_statement_close_day(state.current_date) {
        roll_statement(state, state.current_date, policy)
    } else {
        state.clone()
    };
    advance_day(&state)
}

/// One verification finding; an empty report is a clean corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Finding {
    pub user_id: String,
    pub category: String,
    pub detail: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct VerifyReport {
    pub users_checked: usize,
    pub transitions_checked: usize,
    pub exported_events_checked: usize,
    pub findings: Vec<Finding>,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Verifies a corpus: (a) hash chains replay intact, (b) every exported
/// event has a matching TRANSITION, (c) every exportable TRANSITION was
/// exported, (d) no accepted plan event violates an invariant rule when
/// re-checked against its replayed pre-state.
///
/// Read-only and idempotent; findings are report content, not errors.
pub fn verify(
    records_by_user: &BTreeMap<String, Vec<AuditRecord>>,
    exported: &[ExportEvent],
    initial_states: &BTreeMap<String, LedgerState>,
    policy: &AccountPolicy,
) -> VerifyReport {
    let mut report = VerifyReport::default();

    let mut exported_by_user: BTreeMap<&str, BTreeMap<u64, &ExportEvent>> = BTreeMap::new();
    for event in exported {
        exported_by_user
            .entry(event.user_id.as_str())
            .or_default()
            .insert(event.seq, event);
    }

    for (user_id, records) in records_by_user {
        report.users_checked += 1;
        let Some(initial) = initial_states.get(user_id) else {
            report.findings.push(Finding {
                user_id: user_id.clone(),
                category: "missing_initial_state".to_string(),
                detail: "no initial state for user".to_string(),
            });
            continue;
        };

        // (a) + (d): walk the replay, re-checking plan events as we go.
        let mut state = initial.clone();
        let mut replay_broken = false;
        for (index, record) in records.iter().enumerate() {
            if record.kind != AuditKind::Transition {
                continue;
            }
            let Some(event) = record.event.as_ref() else {
                report.findings.push(Finding {
                    user_id: user_id.clone(),
                    category: "hash_chain".to_string(),
                    detail: format!("record {index}: transition without event"),
                });
                replay_broken = true;
                break;
            };
            while state.current_date < event.date() {
                state = end_of_day(&state, policy);
            }
            let pre = hash_hex(state_hash(&state));
            if record.pre_state_hash.as_deref() != Some(pre.as_str()) {
                report.findings.push(Finding {
                    user_id: user_id.clone(),
                    category: "hash_chain".to_string(),
                    detail: format!("record {index}: pre-state hash mismatch"),
                });
                replay_broken = true;
                break;
            }
            report.transitions_checked += 1;
            if record.origin == Some(EventOrigin::Plan) {
                let violations: Vec<String> = check_event(&state, event)
                    .into_iter()
                    .filter(|v| v.is_hard())
                    .map(|v| v.code)
                    .collect();
                if !violations.is_empty() {
                    report.findings.push(Finding {
                        user_id: user_id.clone(),
                        category: "invariant_check".to_string(),
                        detail: format!("record {index}: accepted event violates {:?}", violations),
                    });
                }
            }
            match apply_event(&state, event) {
                Ok(next) => {
                    let post = hash_hex(state_hash(&next));
                    if record.post_state_hash.as_deref() != Some(post.as_str()) {
                        report.findings.push(Finding {
                            user_id: user_id.clone(),
                            category: "hash_chain".to_string(),
                            detail: format!("record {index}: post-state hash mismatch"),
                        });
                        replay_broken = true;
                        break;
                    }
                    state = next;
                }
                Err(e) => {
                    report.findings.push(Finding {
                        user_id: user_id.clone(),
                        category: "invariant_check".to_string(),
                        detail: format!("record {index}: {e}"),
                    });
                    replay_broken = true;
                    break;
                }
            }
        }
        // A broken chain already produced a finding; export checks still run.
        let _ = replay_broken;

        // (b)/(c): exported stream and exportable transitions must match 1:1.
        let empty = BTreeMap::new();
        let exported_for_user = exported_by_user.get(user_id.as_str()).unwrap_or(&empty);
        let mut transition_seqs: BTreeMap<u64, &TransactionEvent> = BTreeMap::new();
        for record in records {
            if record.kind == AuditKind::Transition {
                if let Some(event) = record.event.as_ref() {
                    transition_seqs.insert(event.seq, event);
                }
            }
        }
        for (seq, event) in &transition_seqs {
            if event.kind.exportable() && !exported_for_user.contains_key(seq) {
                report.findings.push(Finding {
                    user_id: user_id.clone(),
                    category: "missing_export".to_string(),
                    detail: format!("transition seq {seq} ({}) not exported", event.kind.label()),
                });
            }
        }
        for (seq, export) in exported_for_user {
            report.exported_events_checked += 1;
            match transition_seqs.get(seq) {
                None => report.findings.push(Finding {
                    user_id: user_id.clone(),
                    category: "missing_transition".to_string(),
                    detail: format!("exported event seq {seq} has no transition"),
                }),
                Some(event) => {
                    let matches = event.merchant_name == export.merchant_name
                        && event.merchant_type == export.merchant_type
                        && event.card_present_or_not == export.card_present_or_not
                        && event.timestamp == export.timestamp
                        && event.kind == export.kind
                        && event.amount == export.amount_money();
                    if !matches {
                        report.findings.push(Finding {
                            user_id: user_id.clone(),
                            category: "export_mismatch".to_string(),
                            detail: format!("exported event seq {seq} differs from transition"),
                        });
                    }
                }
            }
        }
    }
    report
}
