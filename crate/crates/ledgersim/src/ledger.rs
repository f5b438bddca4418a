//! Canonical per-user ledger state and its deterministic transition.
//!
//! All amounts are integer cents. Two identities hold at every accepted
//! event, exactly:
//!
//! ```text
//! cash'    = cash + income - payments
//! balance' = balance + spending - payments + interest + fees
//! ```
//!
//! with `0 <= balance <= limit` after every transition. Plan-proposed events
//! must pass [`check_event`] before application. Bank-initiated events
//! (scheduled charges, statement autopay, remediation fees) are posted by the
//! scheduling operations below; payments among them may overdraw the checking
//! account, which is the one path by which cash can sink below the overdraft
//! allowance and terminate the simulation.

use crate::calendar::{
    add_months_clamped, first_occurrence_on_or_after, last_day_of_month, next_paydays,
};
use crate::catalog::cadence_category;
use crate::hash::fnv1a64;
use crate::money::Money;
use crate::persona::{FinancialProfile, IncomeLevel, PaymentHabit, ScheduledCharge};
use crate::rules::{codes, Violation};
use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Purchase,
    Payment,
    SubscriptionCharge,
    RecurringBill,
    Interest,
    Fee,
    IncomeDeposit,
    CancelSubscription,
}

impl EventKind {
    /// Charges post to the credit balance with positive amounts.
    pub fn is_charge(self) -> bool {
        matches!(
            self,
            EventKind::Purchase
                | EventKind::SubscriptionCharge
                | EventKind::RecurringBill
                | EventKind::Interest
                | EventKind::Fee
        )
    }

    /// Income deposits stay in the audit log; everything else is exported
    /// in the public event stream.
    pub fn exportable(self) -> bool {
        self != EventKind::IncomeDeposit
    }

    pub fn label(self) -> &'static str {
        match self {
            EventKind::Purchase => "purchase",
            EventKind::Payment => "payment",
            EventKind::SubscriptionCharge => "subscription_charge",
            EventKind::RecurringBill => "recurring_bill",
            EventKind::Interest => "interest",
            EventKind::Fee => "fee",
            EventKind::IncomeDeposit => "income_deposit",
            EventKind::CancelSubscription => "cancel_subscription",
        }
    }
}

/// One transaction event. Sign convention: positive for purchases and
/// charges, negative for payments; income deposits carry a positive amount
/// into cash; cancellations carry zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionEvent {
    pub timestamp: NaiveDateTime,
    pub merchant_name: String,
    pub merchant_type: String,
    pub card_present_or_not: bool,
    pub amount: Money,
    pub kind: EventKind,
    pub seq: u64,
}

impl TransactionEvent {
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date()
    }

    /// Whether `amount`'s sign matches the kind's convention.
    pub fn sign_consistent(&self) -> bool {
        match self.kind {
            EventKind::Payment => self.amount.is_negative(),
            EventKind::CancelSubscription => self.amount.is_zero(),
            EventKind::IncomeDeposit => self.amount.is_positive(),
            _ => self.amount.is_positive(),
        }
    }
}

/// Event draft as proposed in a daily plan: no sequence number yet; the
/// timestamp is assigned by the proposer within the plan's day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDraft {
    pub timestamp: NaiveDateTime,
    pub merchant_name: String,
    pub merchant_type: String,
    pub card_present_or_not: bool,
    pub amount: Money,
    pub kind: EventKind,
}

impl EventDraft {
    pub fn into_event(self, seq: u64) -> TransactionEvent {
        TransactionEvent {
            timestamp: self.timestamp,
            merchant_name: self.merchant_name,
            merchant_type: self.merchant_type,
            card_present_or_not: self.card_present_or_not,
            amount: self.amount,
            kind: self.kind,
            seq,
        }
    }
}

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

/// A subscription or bill with its next posting date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSchedule {
    pub charge: ScheduledCharge,
    pub next_charge_date: NaiveDate,
}

/// Running totals for the current day, reset when the date advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DayDeltas {
    pub spending: Money,
    pub payments: Money,
    pub income: Money,
    pub interest: Money,
    pub fees: Money,
}

/// The canonical per-user financial state.
///
/// Field order matters: the canonical snapshot serialization (and therefore
/// the audit hash chain) follows declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerState {
    pub user_id: String,
    pub current_date: NaiveDate,
    pub cash: Money,
    pub credit_balance: Money,
    pub credit_limit: Money,
    pub statement_balance_due: Money,
    pub due_date: Option<NaiveDate>,
    /// Payments made on or before the due date since the statement opened.
    pub paid_toward_statement: Money,
    pub income_per_paycheck: Money,
    pub next_income_dates: Vec<NaiveDate>,
    pub active_subscriptions: Vec<ActiveSchedule>,
    pub recurring_bills: Vec<ActiveSchedule>,
    /// Cadence tracker: category -> date of last purchase.
    pub last_purchase_dates: BTreeMap<String, NaiveDate>,
    pub accrued_interest_this_cycle: Money,
    pub accrued_fees_this_cycle: Money,
    /// Profile constants the rules consult during transitions.
    pub payment_habit: PaymentHabit,
    pub owns_car: bool,
    pub terminated_illiquid: bool,
    pub next_seq: u64,
    pub day_deltas: DayDeltas,
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    /// apply_event was handed an event that violates a hard contract.
    /// This is an engine bug, not bad data.
    #[error("contract violation [{code}]: {message}")]
    ContractViolation { code: &'static str, message: String },
}

/// Engine-level accounting knobs. Lives here because ledger transitions need
/// it; the engine module re-exports it inside its run configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AccountPolicy {
    /// Paychecks in dollars per semi-monthly payday, by income level.
    pub paycheck_low: u32,
    pub paycheck_med: u32,
    pub paycheck_high: u32,
    /// Opening cash as a multiple of one paycheck.
    pub starting_cash_multiple: f64,
    /// Interest applied to the carried statement balance at close.
    pub monthly_interest_rate: f64,
    /// Flat fee charged when a statement misses its minimum by the due date.
    pub late_fee: Money,
    pub grace_days: i64,
    /// Fraction of the statement that must be paid by the due date.
    pub min_payment_fraction: f64,
    /// Checking may sink to this floor before the user is illiquid.
    pub overdraft_allowance: Money,
}

impl Default for AccountPolicy {
    fn default() -> Self {
        AccountPolicy {
            paycheck_low: 1_400,
            paycheck_med: 2_600,
            paycheck_high: 5_200,
            starting_cash_multiple: 1.5,
            monthly_interest_rate: 0.02,
            late_fee: Money::from_dollars(35),
            grace_days: 21,
            min_payment_fraction: 0.03,
            overdraft_allowance: Money::from_dollars(-100),
        }
    }
}

impl AccountPolicy {
    pub fn paycheck(&self, level: IncomeLevel) -> Money {
        match level {
            IncomeLevel::Low => Money::from_dollars(self.paycheck_low as i64),
            IncomeLevel::Med => Money::from_dollars(self.paycheck_med as i64),
            IncomeLevel::High => Money::from_dollars(self.paycheck_high as i64),
        }
    }

    /// Minimum payment owed on a statement to avoid late remediation.
    pub fn min_required(&self, statement: Money) -> Money {
        statement
            .scale_half_up(self.min_payment_fraction)
            .min(statement)
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Initial state for a profile: configured starting cash, zero balance, no
/// statement, schedules anchored to their first occurrence on or after
/// `start_date`.
pub fn init_state(
    user_id: &str,
    profile: &FinancialProfile,
    start_date: NaiveDate,
    policy: &AccountPolicy,
) -> LedgerState {
    let paycheck = policy.paycheck(profile.income_level);
    let cash = paycheck.scale_half_up(policy.starting_cash_multiple);
    let schedule = |charges: &[ScheduledCharge]| -> Vec<ActiveSchedule> {
        charges
            .iter()
            .map(|c| ActiveSchedule {
                charge: c.clone(),
                next_charge_date: first_occurrence_on_or_after(start_date, c.date_to_charge),
            })
            .collect()
    };
    LedgerState {
        user_id: user_id.to_string(),
        current_date: start_date,
        cash,
        credit_balance: Money::ZERO,
        credit_limit: profile.credit_limit_money(),
        statement_balance_due: Money::ZERO,
        due_date: None,
        paid_toward_statement: Money::ZERO,
        income_per_paycheck: paycheck,
        next_income_dates: next_paydays(start_date, 2),
        active_subscriptions: schedule(&profile.subscriptions),
        recurring_bills: schedule(&profile.recurring_variable_bills),
        last_purchase_dates: BTreeMap::new(),
        accrued_interest_this_cycle: Money::ZERO,
        accrued_fees_this_cycle: Money::ZERO,
        payment_habit: profile.payment_habit,
        owns_car: profile.owns_car(),
        terminated_illiquid: false,
        next_seq: 0,
        day_deltas: DayDeltas::default(),
    }
}

/// 64-bit hash of the canonical snapshot serialization.
pub fn state_hash(state: &LedgerState) -> u64 {
    let canonical = serde_json::to_string(state).expect("state serializes");
    fnv1a64(canonical.as_bytes())
}

/// Checks a single event against the current state and returns every violated
/// constraint. An empty list means the event is acceptable as a plan event.
///
/// `PAYMENT_EXCEEDS_CASH` is a plan-level constraint: it steers proposal
/// repair. Bank-initiated autopay is posted without it, so checking overdrafts
/// remain reachable.
pub fn check_event(state: &LedgerState, event: &TransactionEvent) -> Vec<Violation> {
    let mut violations = Vec::new();
    if state.terminated_illiquid {
        violations.push(Violation::ledger(
            codes::AFTER_TERMINATION,
            "no events accepted after illiquid termination",
        ));
        return violations;
    }
    if event.date() != state.current_date {
        violations.push(Violation::ledger(
            codes::WRONG_DATE,
            format!(
                "event dated {} but ledger is at {}",
                event.date(),
                state.current_date
            ),
        ));
    }
    if !event.sign_consistent() {
        violations.push(Violation::ledger(
            codes::SIGN_MISMATCH,
            format!(
                "{} amount {} breaks the sign convention",
                event.kind.label(),
                event.amount
            ),
        ));
    }
    if event.kind.is_charge() && event.sign_consistent() {
        let would_be = state.credit_balance + event.amount;
        if would_be > state.credit_limit {
            violations.push(
                Violation::rule(
                    "credit_balance",
                    codes::CREDIT_LIMIT_EXCEEDED,
                    format!(
                        "charge {} would push balance to {} over limit {}",
                        event.amount, would_be, state.credit_limit
                    ),
                )
                .with_remedy(format!(
                    "keep total new charges at or below {}",
                    state.credit_limit - state.credit_balance
                )),
            );
        }
    }
    if event.kind == EventKind::Payment && event.sign_consistent() {
        let magnitude = event.amount.abs();
        if magnitude > state.credit_balance {
            violations.push(
                Violation::rule(
                    "credit_balance",
                    codes::OVERPAYMENT,
                    format!(
                        "payment {} exceeds current credit balance {}",
                        magnitude, state.credit_balance
                    ),
                )
                .with_remedy(format!(
                    "pay at most the current balance of {}",
                    state.credit_balance
                )),
            );
        }
        if magnitude > state.cash {
            violations.push(
                Violation::rule(
                    "cash_conservation",
                    codes::PAYMENT_EXCEEDS_CASH,
                    format!(
                        "payment {} exceeds available cash {}",
                        magnitude, state.cash
                    ),
                )
                .with_remedy(format!("pay at most the cash on hand, {}", state.cash)),
            );
        }
    }
    if event.kind == EventKind::CancelSubscription {
        let known = state
            .active_subscriptions
            .iter()
            .chain(&state.recurring_bills)
            .any(|s| s.charge.merchant_name == event.merchant_name);
        if !known {
            violations.push(Violation::ledger(
                codes::UNKNOWN_SCHEDULE,
                format!("no active schedule named {:?}", event.merchant_name),
            ));
        }
    }
    violations
}

/// Applies one event, returning the successor state.
///
/// Callers must have established the event's feasibility: plan events via
/// [`check_event`], bank-initiated events via the posting operations below.
/// Hard accounting contracts (dates, signs, balance bounds) are re-verified
/// here and breaking one is an engine bug.
pub fn apply_event(
    state: &LedgerState,
    event: &TransactionEvent,
) -> Result<LedgerState, LedgerError> {
    let fail =
        |code: &'static str, message: String| Err(LedgerError::ContractViolation { code, message });
    if state.terminated_illiquid {
        return fail(codes::AFTER_TERMINATION, "state is terminated".to_string());
    }
    if event.date() != state.current_date {
        return fail(
            codes::WRONG_DATE,
            format!("{} != {}", event.date(), state.current_date),
        );
    }
    if !event.sign_consistent() {
        return fail(codes::SIGN_MISMATCH, format!("{event:?}"));
    }
    if event.seq != state.next_seq {
        return fail(
            codes::BAD_SEQUENCE,
            format!(
                "event seq {} but state expects {}",
                event.seq, state.next_seq
            ),
        );
    }

    let mut next = state.clone();
    next.next_seq += 1;
    match event.kind {
        k if k.is_charge() => {
            let would_be = state.credit_balance + event.amount;
            if would_be > state.credit_limit {
                return fail(
                    codes::CREDIT_LIMIT_EXCEEDED,
                    format!("{} > {}", would_be, state.credit_limit),
                );
            }
            next.credit_balance = would_be;
            match event.kind {
                EventKind::Interest => {
                    next.day_deltas.interest += event.amount;
                    next.accrued_interest_this_cycle += event.amount;
                }
                EventKind::Fee => {
                    next.day_deltas.fees += event.amount;
                    next.accrued_fees_this_cycle += event.amount;
                }
                _ => {
                    next.day_deltas.spending += event.amount;
                }
            }
            if event.kind == EventKind::Purchase {
                if let Some(category) = cadence_category(&event.merchant_type) {
                    next.last_purchase_dates
                        .insert(category.to_string(), state.current_date);
                }
            }
        }
        EventKind::Payment => {
            let magnitude = event.amount.abs();
            if magnitude > state.credit_balance {
                return fail(
                    codes::OVERPAYMENT,
                    format!("{} > {}", magnitude, state.credit_balance),
                );
            }
            next.cash -= magnitude;
            next.credit_balance -= magnitude;
            next.day_deltas.payments += magnitude;
            if let Some(due) = state.due_date {
                if state.current_date <= due {
                    next.paid_toward_statement += magnitude;
                }
            }
        }
        EventKind::IncomeDeposit => {
            next.cash += event.amount;
            next.day_deltas.income += event.amount;
            next.next_income_dates = next_paydays(event.date() + Duration::days(1), 2);
        }
        EventKind::CancelSubscription => {
            // Removes the first schedule with the event's merchant name,
            // searching subscriptions before bills.
            let name = &event.merchant_name;
            if let Some(idx) = next
                .active_subscriptions
                .iter()
                .position(|s| &s.charge.merchant_name == name)
            {
                next.active_subscriptions.remove(idx);
            } else if let Some(idx) = next
                .recurring_bills
                .iter()
                .position(|s| &s.charge.merchant_name == name)
            {
                next.recurring_bills.remove(idx);
            }
        }
        _ => unreachable!(),
    }
    // Schedule advancement is part of the transition so replaying events
    // alone reconstructs the state exactly.
    match event.kind {
        EventKind::SubscriptionCharge => {
            if let Some(s) = next.active_subscriptions.iter_mut().find(|s| {
                s.charge.merchant_name == event.merchant_name && s.next_charge_date <= event.date()
            }) {
                s.next_charge_date = add_months_clamped(
                    s.next_charge_date,
                    s.charge.charge_frequency_month,
                    s.charge.date_to_charge,
                );
            }
        }
        EventKind::RecurringBill => {
            if let Some(s) = next.recurring_bills.iter_mut().find(|s| {
                s.charge.merchant_name == event.merchant_name && s.next_charge_date <= event.date()
            }) {
                s.next_charge_date = add_months_clamped(
                    s.next_charge_date,
                    s.charge.charge_frequency_month,
                    s.charge.date_to_charge,
                );
            }
        }
        _ => {}
    }
    Ok(next)
}

/// Variable bill amount: `max($0.01, mean + std * z)` rounded half-up.
pub fn bill_amount(mean: Money, std: Money, z: f64) -> Money {
    let dollars = mean.to_f64_dollars() + std.to_f64_dollars() * z;
    Money::from_f64_dollars_half_up(dollars).max(Money::from_cents(1))
}

fn at(date: NaiveDate, hour: u32, minute: u32) -> NaiveDateTime {
    date.and_time(NaiveTime::from_hms_opt(hour, minute, 0).unwrap())
}

/// Outcome of posting scheduled items for one day.
pub struct PostingOutcome {
    pub state: LedgerState,
    pub events: Vec<TransactionEvent>,
}

fn make_event(
    state: &LedgerState,
    timestamp: NaiveDateTime,
    merchant_name: &str,
    merchant_type: &str,
    card_present: bool,
    amount: Money,
    kind: EventKind,
) -> TransactionEvent {
    TransactionEvent {
        timestamp,
        merchant_name: merchant_name.to_string(),
        merchant_type: merchant_type.to_string(),
        card_present_or_not: card_present,
        amount,
        kind,
        seq: state.next_seq,
    }
}

/// Posts a bank-initiated charge, forcing a card payment first when the
/// charge lacks credit headroom. If the charge cannot fit even against an
/// empty balance, the schedule is cancelled instead (service cut off).
fn post_forced_charge(
    state: LedgerState,
    events: &mut Vec<TransactionEvent>,
    timestamp: NaiveDateTime,
    merchant_name: &str,
    merchant_type: &str,
    amount: Money,
    kind: EventKind,
) -> Result<LedgerState, LedgerError> {
    let mut state = state;
    let headroom = state.credit_limit - state.credit_balance;
    if amount > headroom {
        let needed = amount - headroom;
        if needed > state.credit_balance || amount > state.credit_limit {
            // Unfundable even after paying the whole balance down.
            let cancel = make_event(
                &state,
                timestamp,
                merchant_name,
                merchant_type,
                false,
                Money::ZERO,
                EventKind::CancelSubscription,
            );
            state = apply_event(&state, &cancel)?;
            events.push(cancel);
            return Ok(state);
        }
        let payment = make_event(
            &state,
            timestamp - Duration::minutes(1),
            "Card Services",
            "Credit Card Payment",
            false,
            -needed,
            EventKind::Payment,
        );
        state = apply_event(&state, &payment)?;
        events.push(payment);
    }
    let charge = make_event(
        &state,
        timestamp,
        merchant_name,
        merchant_type,
        false,
        amount,
        kind,
    );
    state = apply_event(&state, &charge)?;
    events.push(charge);
    Ok(state)
}

/// Posts the paycheck if `date` is a payday.
pub fn post_income(state: &LedgerState, date: NaiveDate) -> Result<PostingOutcome, LedgerError> {
    let mut state = state.clone();
    let mut events = Vec::new();
    if crate::calendar::is_payday(date) {
        let income = make_event(
            &state,
            at(date, 6, 0),
            "Employer Payroll",
            "Income",
            false,
            state.income_per_paycheck,
            EventKind::IncomeDeposit,
        );
        state = apply_event(&state, &income)?;
        events.push(income);
    }
    Ok(PostingOutcome { state, events })
}

/// Posts every subscription due on or before `date` at its fixed amount,
/// advancing each schedule by its frequency.
pub fn post_subscription_charges(
    state: &LedgerState,
    date: NaiveDate,
) -> Result<PostingOutcome, LedgerError> {
    let mut state = state.clone();
    let mut events = Vec::new();
    let mut minute = 0u32;
    loop {
        let due_idx = state
            .active_subscriptions
            .iter()
            .position(|s| s.next_charge_date <= date);
        let Some(idx) = due_idx else { break };
        let sched = state.active_subscriptions[idx].clone();
        state = post_forced_charge(
            state,
            &mut events,
            at(date, 7, minute % 60),
            &sched.charge.merchant_name,
            "Subscription Services",
            sched.charge.amount,
            EventKind::SubscriptionCharge,
        )?;
        minute += 1;
    }
    Ok(PostingOutcome { state, events })
}

/// Posts every recurring bill due on or before `date`. Amounts draw one
/// standard-normal value each from `rng`, scaled by the bill's std.
pub fn post_recurring_bills(
    state: &LedgerState,
    date: NaiveDate,
    rng: &mut dyn rand::RngCore,
) -> Result<PostingOutcome, LedgerError> {
    let mut state = state.clone();
    let mut events = Vec::new();
    let mut minute = 0u32;
    loop {
        let due_idx = state
            .recurring_bills
            .iter()
            .position(|s| s.next_charge_date <= date);
        let Some(idx) = due_idx else { break };
        let sched = state.recurring_bills[idx].clone();
        let z: f64 = StandardNormal.sample(rng);
        let amount = bill_amount(sched.charge.amount, sched.charge.std, z);
        state = post_forced_charge(
            state,
            &mut events,
            at(date, 8, minute % 60),
            &sched.charge.merchant_name,
            "Utilities & Bills",
            amount,
            EventKind::RecurringBill,
        )?;
        minute += 1;
    }
    Ok(PostingOutcome { state, events })
}

/// Posts everything the bank initiates on `date`, in deterministic order:
/// income deposits, subscription charges, then recurring bills.
pub fn post_scheduled_items(
    state: &LedgerState,
    date: NaiveDate,
    rng: &mut impl Rng,
) -> Result<PostingOutcome, LedgerError> {
    assert_eq!(
        date, state.current_date,
        "post_scheduled_items date contract"
    );
    let mut outcome = post_income(state, date)?;
    let mut events = std::mem::take(&mut outcome.events);
    let subs = post_subscription_charges(&outcome.state, date)?;
    events.extend(subs.events);
    let bills = post_recurring_bills(&subs.state, date, rng)?;
    events.extend(bills.events);
    Ok(PostingOutcome {
        state: bills.state,
        events,
    })
}

/// Posts a bank-initiated statement payment (autopay). May overdraw cash;
/// the amount is capped at the credit balance so the credit side stays sound.
pub fn post_autopay(
    state: &LedgerState,
    date: NaiveDate,
    amount: Money,
) -> Result<PostingOutcome, LedgerError> {
    let mut events = Vec::new();
    let amount = amount.min(state.credit_balance);
    let mut next = state.clone();
    if amount.is_positive() {
        let payment = make_event(
            state,
            at(date, 6, 30),
            "Card Services",
            "Credit Card Payment",
            false,
            -amount,
            EventKind::Payment,
        );
        next = apply_event(state, &payment)?;
        events.push(payment);
    }
    Ok(PostingOutcome {
        state: next,
        events,
    })
}

/// Closes the statement cycle on a close day.
///
/// If the previous statement missed its minimum by the due date, posts one
/// late-fee event and one interest event on the carried balance (half-up,
/// floored at one cent), then opens the next statement: the full current
/// balance, due `grace_days` out.
pub fn close_statement(
    state: &LedgerState,
    date: NaiveDate,
    policy: &AccountPolicy,
) -> Result<PostingOutcome, LedgerError> {
    let mut state = state.clone();
    let mut events = Vec::new();

    let statement = state.statement_balance_due;
    if statement.is_positive() {
        let satisfied = state.paid_toward_statement >= policy.min_required(statement);
        if !satisfied {
            let carried = (statement - state.paid_toward_statement).max(Money::from_cents(1));
            state = post_forced_charge(
                state,
                &mut events,
                at(date, 23, 40),
                "Card Services",
                "Late Fee",
                policy.late_fee,
                EventKind::Fee,
            )?;
            let interest = carried
                .scale_half_up(policy.monthly_interest_rate)
                .max(Money::from_cents(1));
            state = post_forced_charge(
                state,
                &mut events,
                at(date, 23, 45),
                "Card Services",
                "Interest Charge",
                interest,
                EventKind::Interest,
            )?;
        }
    }

    let state = roll_statement(&state, date, policy);
    Ok(PostingOutcome { state, events })
}

/// Pure statement bookkeeping at close: the current balance becomes the
/// statement due `grace_days` out; paid and accrual trackers reset. Replay
/// re-runs this at every close day.
pub fn roll_statement(state: &LedgerState, date: NaiveDate, policy: &AccountPolicy) -> LedgerState {
    let mut state = state.clone();
    state.statement_balance_due = state.credit_balance;
    state.due_date = if state.credit_balance.is_positive() {
        Some(date + Duration::days(policy.grace_days))
    } else {
        None
    };
    state.paid_toward_statement = Money::ZERO;
    state.accrued_interest_this_cycle = Money::ZERO;
    state.accrued_fees_this_cycle = Money::ZERO;
    state
}

/// True on statement-close days (calendar month end).
pub fn is_statement_close_day(date: NaiveDate) -> bool {
    date.day() == last_day_of_month(date.year(), date.month())
}

/// Advances the ledger to the next day, resetting day deltas.
pub fn advance_day(state: &LedgerState) -> LedgerState {
    let mut next = state.clone();
    next.current_date = state.current_date + Duration::days(1);
    next.day_deltas = DayDeltas::default();
    next
}

// ---------------------------------------------------------------------------
// Export encoding
// ---------------------------------------------------------------------------

/// Wire form of an exported event: the five-field public schema plus the
/// `user_id`/`seq` envelope and the kind tag that downstream builders need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportEvent {
    pub user_id: String,
    pub seq: u64,
    pub timestamp: NaiveDateTime,
    pub merchant_name: String,
    pub merchant_type: String,
    pub card_present_or_not: bool,
    /// Signed decimal string, two places: `"15.49"`, `"-200.00"`.
    pub amount: String,
    pub kind: EventKind,
}

impl ExportEvent {
    pub fn from_event(user_id: &str, event: &TransactionEvent) -> ExportEvent {
        ExportEvent {
            user_id: user_id.to_string(),
            seq: event.seq,
            timestamp: event.timestamp,
            merchant_name: event.merchant_name.clone(),
            merchant_type: event.merchant_type.clone(),
            card_present_or_not: event.card_present_or_not,
            amount: event.amount.to_decimal_string(),
            kind: event.kind,
        }
    }

    pub fn amount_money(&self) -> Money {
        Money::parse_decimal(&self.amount).expect("exported amounts are canonical")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::bundled_sample_personas;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn jonathan_profile() -> FinancialProfile {
        bundled_sample_personas()[0].user_financial_profile.clone()
    }

    fn fresh_state() -> LedgerState {
        init_state(
            "u-test",
            &jonathan_profile(),
            d(2024, 3, 2),
            &AccountPolicy::default(),
        )
    }

    fn purchase(state: &LedgerState, cents: i64, name: &str, mtype: &str) -> TransactionEvent {
        TransactionEvent {
            timestamp: at(state.current_date, 12, 0),
            merchant_name: name.to_string(),
            merchant_type: mtype.to_string(),
            card_present_or_not: true,
            amount: Money::from_cents(cents),
            kind: EventKind::Purchase,
            seq: state.next_seq,
        }
    }

    fn payment(state: &LedgerState, cents: i64) -> TransactionEvent {
        TransactionEvent {
            timestamp: at(state.current_date, 13, 0),
            merchant_name: "Card Services".to_string(),
            merchant_type: "Credit Card Payment".to_string(),
            card_present_or_not: false,
            amount: Money::from_cents(-cents),
            kind: EventKind::Payment,
            seq: state.next_seq,
        }
    }

    #[test]
    fn init_matches_profile_and_policy() {
        let state = fresh_state();
        assert_eq!(state.credit_limit, Money::from_cents(950_000));
        assert_eq!(state.credit_balance, Money::ZERO);
        // med income, default multiple 1.5: 2600 * 1.5 = 3900
        assert_eq!(state.cash, Money::from_cents(390_000));
        assert_eq!(state.active_subscriptions.len(), 5);
        assert_eq!(state.recurring_bills.len(), 5);
        assert!(state.due_date.is_none());

        let unit_cash = init_state(
            "u",
            &jonathan_profile(),
            d(2024, 3, 2),
            &AccountPolicy {
                starting_cash_multiple: 1.0,
                ..AccountPolicy::default()
            },
        );
        assert_eq!(unit_cash.cash, Money::from_cents(260_000));
    }

    #[test]
    fn purchase_and_payment_arithmetic() {
        let state = fresh_state();
        let netflix = purchase(&state, 1549, "Netflix", "Subscription Services");
        let s1 = apply_event(&state, &netflix).unwrap();
        assert_eq!(s1.credit_balance, Money::from_cents(1549));
        assert_eq!(s1.cash, state.cash);

        let mut big = fresh_state();
        big.cash = Money::from_cents(100_000);
        big.credit_balance = Money::from_cents(50_000);
        let pay = payment(&big, 20_000);
        let s2 = apply_event(&big, &pay).unwrap();
        assert_eq!(s2.cash, Money::from_cents(80_000));
        assert_eq!(s2.credit_balance, Money::from_cents(30_000));
    }

    #[test]
    fn check_event_flags_overpayment() {
        let mut state = fresh_state();
        state.credit_balance = Money::from_cents(5_000);
        state.cash = Money::from_cents(1_000_000);
        let pay = payment(&state, 6_000);
        let violations = check_event(&state, &pay);
        assert!(violations.iter().any(|v| v.code == codes::OVERPAYMENT));
        // and apply refuses it too
        assert!(apply_event(&state, &pay).is_err());
    }

    #[test]
    fn check_event_flags_limit_overflow() {
        let mut state = fresh_state();
        state.credit_balance = Money::from_cents(949_900);
        let buy = purchase(&state, 200, "Kroger", "Grocery Store");
        let violations = check_event(&state, &buy);
        assert!(violations
            .iter()
            .any(|v| v.code == codes::CREDIT_LIMIT_EXCEEDED));
    }

    #[test]
    fn check_event_flags_wrong_date_and_termination() {
        let state = fresh_state();
        let mut buy = purchase(&state, 100, "Kroger", "Grocery Store");
        buy.timestamp = at(d(2024, 3, 3), 12, 0);
        assert!(check_event(&state, &buy)
            .iter()
            .any(|v| v.code == codes::WRONG_DATE));

        let mut dead = fresh_state();
        dead.terminated_illiquid = true;
        let buy = purchase(&dead, 100, "Kroger", "Grocery Store");
        assert!(check_event(&dead, &buy)
            .iter()
            .any(|v| v.code == codes::AFTER_TERMINATION));
    }

    #[test]
    fn payment_exceeding_cash_is_plan_violation_but_autopay_posts() {
        let mut state = fresh_state();
        state.cash = Money::from_cents(1_000);
        state.credit_balance = Money::from_cents(600_000);
        state.statement_balance_due = Money::from_cents(600_000);
        state.due_date = Some(state.current_date);
        let pay = payment(&state, 500_000);
        assert!(check_event(&state, &pay)
            .iter()
            .any(|v| v.code == codes::PAYMENT_EXCEEDS_CASH));
        // Bank-initiated autopay overdraws instead of bouncing.
        let outcome = post_autopay(&state, state.current_date, Money::from_cents(500_000)).unwrap();
        assert_eq!(outcome.state.cash, Money::from_cents(-499_000));
        assert_eq!(outcome.state.credit_balance, Money::from_cents(100_000));
        assert_eq!(outcome.events.len(), 1);
    }

    #[test]
    fn netflix_posts_on_the_25th_and_advances_a_month() {
        let profile = jonathan_profile();
        let mut state = init_state("u", &profile, d(2024, 3, 25), &AccountPolicy::default());
        state.current_date = d(2024, 3, 25);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let outcome = post_scheduled_items(&state, d(2024, 3, 25), &mut rng).unwrap();
        let netflix: Vec<_> = outcome
            .events
            .iter()
            .filter(|e| e.merchant_name == "Netflix")
            .collect();
        assert_eq!(netflix.len(), 1);
        assert_eq!(netflix[0].amount, Money::from_cents(1549));
        assert_eq!(netflix[0].kind, EventKind::SubscriptionCharge);
        let sched = outcome
            .state
            .active_subscriptions
            .iter()
            .find(|s| s.charge.merchant_name == "Netflix")
            .unwrap();
        assert_eq!(sched.next_charge_date, d(2024, 4, 25));
    }

    #[test]
    fn bill_amount_zero_deviation_is_exact() {
        assert_eq!(
            bill_amount(Money::from_cents(12_000), Money::from_cents(3_000), 0.0),
            Money::from_cents(12_000)
        );
        // floor at one cent for extreme negative draws
        assert_eq!(
            bill_amount(Money::from_cents(100), Money::from_cents(10_000), -3.0),
            Money::from_cents(1)
        );
    }

    #[test]
    fn quarterly_schedule_posts_every_third_month() {
        let mut profile = jonathan_profile();
        profile.subscriptions = vec![ScheduledCharge {
            date_to_charge: 15,
            amount: Money::from_cents(3_000),
            charge_frequency_month: 3,
            std: Money::ZERO,
            merchant_name: "Woodcraft Magazine".to_string(),
            product_description: "Woodworking Magazine".to_string(),
        }];
        profile.recurring_variable_bills.clear();
        let mut state = init_state("u", &profile, d(2024, 1, 1), &AccountPolicy::default());
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut charges_by_month = Vec::new();
        for _ in 0..130 {
            let date = state.current_date;
            let outcome = post_scheduled_items(&state, date, &mut rng).unwrap();
            let count = outcome
                .events
                .iter()
                .filter(|e| e.kind == EventKind::SubscriptionCharge)
                .count();
            if count > 0 {
                charges_by_month.push((date.month(), date.day()));
            }
            state = advance_day(&outcome.state);
        }
        assert_eq!(charges_by_month, vec![(1, 15), (4, 15)]);
    }

    #[test]
    fn ingested_day_31_schedule_clamps_to_short_months() {
        let mut profile = jonathan_profile();
        profile.subscriptions = vec![ScheduledCharge {
            date_to_charge: 31,
            amount: Money::from_cents(500),
            charge_frequency_month: 1,
            std: Money::ZERO,
            merchant_name: "Month End Club".to_string(),
            product_description: "Posts on the last day".to_string(),
        }];
        profile.recurring_variable_bills.clear();
        let mut state = init_state("u", &profile, d(2024, 1, 1), &AccountPolicy::default());
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut charge_dates = Vec::new();
        for _ in 0..91 {
            let outcome = post_scheduled_items(&state, state.current_date, &mut rng).unwrap();
            for event in &outcome.events {
                if event.kind == EventKind::SubscriptionCharge {
                    charge_dates.push(event.timestamp.date());
                }
            }
            state = advance_day(&outcome.state);
        }
        assert_eq!(
            charge_dates,
            vec![d(2024, 1, 31), d(2024, 2, 29), d(2024, 3, 31)]
        );
    }

    #[test]
    fn close_statement_clean_cycle_posts_nothing() {
        let mut state = fresh_state();
        state.current_date = d(2024, 3, 31);
        let outcome = close_statement(&state, d(2024, 3, 31), &AccountPolicy::default()).unwrap();
        assert!(outcome.events.is_empty());
        assert_eq!(outcome.state.statement_balance_due, Money::ZERO);
        assert!(outcome.state.due_date.is_none());
    }

    #[test]
    fn late_statement_costs_fee_plus_interest() {
        let policy = AccountPolicy::default();
        let mut state = fresh_state();
        state.current_date = d(2024, 4, 30);
        state.credit_balance = Money::from_cents(100_000);
        state.statement_balance_due = Money::from_cents(100_000);
        state.due_date = Some(d(2024, 4, 21));
        state.paid_toward_statement = Money::ZERO;
        let outcome = close_statement(&state, d(2024, 4, 30), &policy).unwrap();
        let fee: Vec<_> = outcome
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Fee)
            .collect();
        let interest: Vec<_> = outcome
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Interest)
            .collect();
        assert_eq!(fee.len(), 1);
        assert_eq!(interest.len(), 1);
        assert_eq!(fee[0].amount, Money::from_cents(3_500));
        assert_eq!(interest[0].amount, Money::from_cents(2_000));
        // next statement captures balance + remediation
        assert_eq!(
            outcome.state.statement_balance_due,
            Money::from_cents(105_500)
        );
        assert_eq!(outcome.state.due_date, Some(d(2024, 5, 21)));
    }

    #[test]
    fn on_time_payment_avoids_remediation_over_two_cycles() {
        let policy = AccountPolicy::default();
        let mut state = fresh_state();
        // Cycle 1: spend, close, pay in full before due, close again: no fees.
        let buy = purchase(&state, 40_000, "Kroger", "Grocery Store");
        state = apply_event(&state, &buy).unwrap();
        state.current_date = d(2024, 3, 31);
        let outcome = close_statement(&state, d(2024, 3, 31), &policy).unwrap();
        state = outcome.state;
        assert_eq!(state.statement_balance_due, Money::from_cents(40_000));

        state.current_date = d(2024, 4, 10);
        let pay = payment(&state, 40_000);
        state = apply_event(&state, &pay).unwrap();

        state.current_date = d(2024, 4, 30);
        let outcome = close_statement(&state, d(2024, 4, 30), &policy).unwrap();
        assert!(outcome.events.is_empty(), "{:?}", outcome.events);
        assert_eq!(outcome.state.statement_balance_due, Money::ZERO);
    }

    #[test]
    fn forced_headroom_payment_keeps_balance_in_bounds() {
        let mut state = fresh_state();
        state.credit_balance = state.credit_limit; // pinned at the limit
        state.cash = Money::from_cents(50_000);
        let mut events = Vec::new();
        let next = post_forced_charge(
            state.clone(),
            &mut events,
            at(state.current_date, 7, 0),
            "Netflix",
            "Subscription Services",
            Money::from_cents(1549),
            EventKind::SubscriptionCharge,
        )
        .unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].kind, EventKind::Payment);
        assert_eq!(events[0].amount, Money::from_cents(-1549));
        assert_eq!(events[1].kind, EventKind::SubscriptionCharge);
        assert_eq!(next.credit_balance, state.credit_limit);
        assert_eq!(next.cash, Money::from_cents(50_000 - 1549));
    }

    #[test]
    fn unfundable_charge_cancels_the_schedule() {
        let mut profile = jonathan_profile();
        profile.credit_limit = 10; // $10 card
        profile.subscriptions = vec![ScheduledCharge {
            date_to_charge: 2,
            amount: Money::from_dollars(50),
            charge_frequency_month: 1,
            std: Money::ZERO,
            merchant_name: "Big Sub".to_string(),
            product_description: "Too big".to_string(),
        }];
        profile.recurring_variable_bills.clear();
        let state = init_state("u", &profile, d(2024, 3, 2), &AccountPolicy::default());
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let outcome = post_scheduled_items(&state, d(2024, 3, 2), &mut rng).unwrap();
        assert!(outcome
            .events
            .iter()
            .any(|e| e.kind == EventKind::CancelSubscription));
        assert!(outcome.state.active_subscriptions.is_empty());
    }

    #[test]
    fn apply_event_is_pure() {
        let state = fresh_state();
        let buy = purchase(&state, 777, "Kroger", "Grocery Store");
        let a = apply_event(&state, &buy).unwrap();
        let b = apply_event(&state, &buy).unwrap();
        assert_eq!(a, b);
        assert_eq!(state_hash(&a), state_hash(&b));
    }

    #[test]
    fn conservation_identities_hold_over_random_walks() {
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let mut state = fresh_state();
            for _ in 0..50 {
                let roll: f64 = rng.gen();
                let (cash0, bal0) = (state.cash, state.credit_balance);
                let event = if roll < 0.55 {
                    let headroom = (state.credit_limit - state.credit_balance).cents();
                    if headroom == 0 {
                        continue;
                    }
                    purchase(
                        &state,
                        rng.gen_range(1..=headroom.min(20_000)),
                        "Kroger",
                        "Grocery Store",
                    )
                } else if roll < 0.8 {
                    let payable = state
                        .credit_balance
                        .min(state.cash.max(Money::ZERO))
                        .cents();
                    if payable == 0 {
                        continue;
                    }
                    payment(&state, rng.gen_range(1..=payable))
                } else {
                    TransactionEvent {
                        timestamp: at(state.current_date, 6, 0),
                        merchant_name: "Employer Payroll".to_string(),
                        merchant_type: "Income".to_string(),
                        card_present_or_not: false,
                        amount: Money::from_cents(rng.gen_range(1..=300_000)),
                        kind: EventKind::IncomeDeposit,
                        seq: state.next_seq,
                    }
                };
                let next = apply_event(&state, &event).unwrap();
                let again = apply_event(&state, &event).unwrap();
                assert_eq!(next, again, "apply_event must be pure");
                // cash' = cash + income - payment
                let income = if event.kind == EventKind::IncomeDeposit {
                    event.amount
                } else {
                    Money::ZERO
                };
                let paid = if event.kind == EventKind::Payment {
                    event.amount.abs()
                } else {
                    Money::ZERO
                };
                let spent = if event.kind.is_charge() {
                    event.amount
                } else {
                    Money::ZERO
                };
                assert_eq!(next.cash, cash0 + income - paid);
                assert_eq!(next.credit_balance, bal0 + spent - paid);
                assert!(next.credit_balance >= Money::ZERO);
                assert!(next.credit_balance <= next.credit_limit);
                state = next;
            }
        }
    }

    #[test]
    fn export_event_round_trips_amount() {
        let state = fresh_state();
        let pay = payment(&state, 20_000);
        let export = ExportEvent::from_event("u-test", &pay);
        assert_eq!(export.amount, "-200.00");
        assert_eq!(export.amount_money(), Money::from_cents(-20_000));
        let json = serde_json::to_string(&export).unwrap();
        let back: ExportEvent = serde_json::from_str(&json).unwrap();
        assert_eq!(back, export);
    }

    #[test]
    fn cancel_removes_named_schedule() {
        let state = fresh_state();
        let cancel = TransactionEvent {
            timestamp: at(state.current_date, 12, 0),
            merchant_name: "Netflix".to_string(),
            merchant_type: "Subscription Services".to_string(),
            card_present_or_not: false,
            amount: Money::ZERO,
            kind: EventKind::CancelSubscription,
            seq: state.next_seq,
        };
        assert!(check_event(&state, &cancel).is_empty());
        let next = apply_event(&state, &cancel).unwrap();
        assert_eq!(next.active_subscriptions.len(), 4);
        assert!(!next
            .active_subscriptions
            .iter()
            .any(|s| s.charge.merchant_name == "Netflix"));
    }
}
