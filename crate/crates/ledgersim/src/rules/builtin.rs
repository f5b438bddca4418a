//! The seven built-in rules.
//!
//! Invariant rules, in documented order: cash conservation, credit balance,
//! due date compliance, subscription carryover, liquidity. Realism rules:
//! purchase cadence, random events.

use crate::calendar::paydays_in_range;
use crate::catalog::{cadence_category, catalog};
use crate::ledger::{
    post_autopay, post_income, post_recurring_bills, post_subscription_charges, AccountPolicy,
    EventKind, LedgerError, LedgerState, PostingOutcome,
};
use crate::money::Money;
use crate::persona::PaymentHabit;
use crate::proposer::DailyPlan;
use crate::rules::prompt::PromptFragment;
use crate::rules::{codes, Rule, RuleKind, RuleRegistry, Violation};
use chrono::{Duration, NaiveDate};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

/// Parameters for the built-in rules. Serialized as part of the run config.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RuleConfig {
    #[serde(default = "default_liquidity_window")]
    pub liquidity_window_days: i64,
    #[serde(default = "default_gap_groceries")]
    pub min_gap_groceries_days: i64,
    #[serde(default = "default_gap_fuel")]
    pub min_gap_fuel_days: i64,
    /// When set, cadence violations hard-reject instead of prompting.
    #[serde(default)]
    pub strict_cadence: bool,
    #[serde(default = "default_random_event_prob")]
    pub random_event_prob: f64,
    #[serde(default = "default_max_events")]
    pub max_events_per_day: usize,
    /// Chance an irregular payer covers the minimum in a given cycle.
    #[serde(default = "default_irregular_payment_prob")]
    pub irregular_payment_prob: f64,
    /// Built-in rule ids to register; `None` enables all seven.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled_rules: Option<Vec<String>>,
    #[serde(default)]
    pub policy: AccountPolicy,
}

fn default_liquidity_window() -> i64 {
    30
}
fn default_gap_groceries() -> i64 {
    3
}
fn default_gap_fuel() -> i64 {
    5
}
fn default_random_event_prob() -> f64 {
    0.10
}
fn default_max_events() -> usize {
    25
}
fn default_irregular_payment_prob() -> f64 {
    0.3
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            liquidity_window_days: default_liquidity_window(),
            min_gap_groceries_days: default_gap_groceries(),
            min_gap_fuel_days: default_gap_fuel(),
            strict_cadence: false,
            random_event_prob: default_random_event_prob(),
            max_events_per_day: default_max_events(),
            irregular_payment_prob: default_irregular_payment_prob(),
            enabled_rules: None,
            policy: AccountPolicy::default(),
        }
    }
}

/// The default registry: the five invariant rules then the two realism
/// rules, filtered to `enabled_rules` when the config names a subset.
pub fn default_registry(config: &RuleConfig) -> RuleRegistry {
    let mut registry = RuleRegistry::new(config.max_events_per_day);
    let enabled = |id: &str| {
        config
            .enabled_rules
            .as_ref()
            .is_none_or(|ids| ids.iter().any(|x| x == id))
    };
    let builtins: Vec<Box<dyn Rule>> = vec![
        Box::new(CashConservationRule),
        Box::new(CreditBalanceRule),
        Box::new(DueDateComplianceRule {
            policy: config.policy.clone(),
            irregular_payment_prob: config.irregular_payment_prob,
        }),
        Box::new(SubscriptionCarryoverRule),
        liquidity_rule(config),
        Box::new(PurchaseCadenceRule {
            min_gap_groceries_days: config.min_gap_groceries_days,
            min_gap_fuel_days: config.min_gap_fuel_days,
            strict: config.strict_cadence,
        }),
        Box::new(RandomEventsRule {
            prob: config.random_event_prob,
        }),
    ];
    for rule in builtins {
        if enabled(rule.rule_id()) {
            registry.register(rule).expect("fresh registry");
        }
    }
    registry
}

pub(crate) fn liquidity_rule(config: &RuleConfig) -> Box<dyn Rule> {
    Box::new(LiquidityRule {
        window_days: config.liquidity_window_days,
    })
}

// ---------------------------------------------------------------------------
// cash_conservation
// ---------------------------------------------------------------------------

/// Cash changes only through income and payments. Plans cannot mint income,
/// and planned payments must fit the cash on hand.
struct CashConservationRule;

impl Rule for CashConservationRule {
    fn rule_id(&self) -> &str {
        "cash_conservation"
    }

    fn kind(&self) -> RuleKind {
        RuleKind::Invariant
    }

    fn check(&self, state: &LedgerState, plan: &DailyPlan) -> Vec<Violation> {
        let mut violations = Vec::new();
        let mut cash = state.cash;
        for (i, draft) in plan.proposed_events.iter().enumerate() {
            match draft.kind {
                EventKind::IncomeDeposit => {
                    violations.push(
                        Violation::rule(
                            self.rule_id(),
                            codes::INCOME_NOT_PROPOSABLE,
                            "income is deposited by the payroll schedule, not proposed",
                        )
                        .at_index(i)
                        .with_remedy("remove the income event from the plan"),
                    );
                }
                EventKind::Payment => {
                    let magnitude = draft.amount.abs();
                    if magnitude > cash {
                        violations.push(
                            Violation::rule(
                                self.rule_id(),
                                codes::PAYMENT_EXCEEDS_CASH,
                                format!("payment {magnitude} exceeds available cash {cash}"),
                            )
                            .at_index(i)
                            .with_remedy(format!("pay at most the cash on hand, {cash}")),
                        );
                    } else {
                        cash -= magnitude;
                    }
                }
                _ => {}
            }
        }
        violations
    }

    fn update(
        &self,
        state: &LedgerState,
        date: NaiveDate,
        _rng: &mut dyn RngCore,
    ) -> Result<PostingOutcome, LedgerError> {
        post_income(state, date)
    }
}

// ---------------------------------------------------------------------------
// credit_balance
// ---------------------------------------------------------------------------

/// Keeps `0 <= balance <= limit` across the hypothetically applied plan.
struct CreditBalanceRule;

impl Rule for CreditBalanceRule {
    fn rule_id(&self) -> &str {
        "credit_balance"
    }

    fn kind(&self) -> RuleKind {
        RuleKind::Invariant
    }

    fn check(&self, state: &LedgerState, plan: &DailyPlan) -> Vec<Violation> {
        let mut violations = Vec::new();
        let mut balance = state.credit_balance;
        for (i, draft) in plan.proposed_events.iter().enumerate() {
            if draft.kind.is_charge() && draft.amount.is_positive() {
                let would_be = balance + draft.amount;
                if would_be > state.credit_limit {
                    violations.push(
                        Violation::rule(
                            self.rule_id(),
                            codes::CREDIT_LIMIT_EXCEEDED,
                            format!(
                                "charge {} would push balance to {} over limit {}",
                                draft.amount, would_be, state.credit_limit
                            ),
                        )
                        .at_index(i)
                        .with_remedy(format!(
                            "keep total new charges at or below {}",
                            state.credit_limit - balance
                        )),
                    );
                } else {
                    balance = would_be;
                }
            } else if draft.kind == EventKind::Payment {
                let magnitude = draft.amount.abs();
                if magnitude > balance {
                    violations.push(
                        Violation::rule(
                            self.rule_id(),
                            codes::OVERPAYMENT,
                            format!("payment {magnitude} exceeds current credit balance {balance}"),
                        )
                        .at_index(i)
                        .with_remedy(format!("pay at most the current balance of {balance}")),
                    );
                } else {
                    balance -= magnitude;
                }
            }
        }
        violations
    }
}

// ---------------------------------------------------------------------------
// due_date_compliance
// ---------------------------------------------------------------------------

/// Owns the statement lifecycle on the payer side: autopay habits on the due
/// date, payment-due reminders, and the monopoly on remediation charges.
struct DueDateComplianceRule {
    policy: AccountPolicy,
    irregular_payment_prob: f64,
}

impl Rule for DueDateComplianceRule {
    fn rule_id(&self) -> &str {
        "due_date_compliance"
    }

    fn kind(&self) -> RuleKind {
        RuleKind::Invariant
    }

    fn check(&self, _state: &LedgerState, plan: &DailyPlan) -> Vec<Violation> {
        let mut violations = Vec::new();
        for (i, draft) in plan.proposed_events.iter().enumerate() {
            if matches!(draft.kind, EventKind::Fee | EventKind::Interest) {
                violations.push(
                    Violation::rule(
                        self.rule_id(),
                        codes::UNSOLICITED_REMEDIATION,
                        "late fees and interest are posted by the card issuer, not proposed",
                    )
                    .at_index(i)
                    .with_remedy("remove the fee/interest event from the plan"),
                );
            }
        }
        violations
    }

    fn update(
        &self,
        state: &LedgerState,
        date: NaiveDate,
        rng: &mut dyn RngCore,
    ) -> Result<PostingOutcome, LedgerError> {
        if state.due_date != Some(date) || !state.statement_balance_due.is_positive() {
            return Ok(PostingOutcome {
                state: state.clone(),
                events: Vec::new(),
            });
        }
        let remaining =
            (state.statement_balance_due - state.paid_toward_statement).max(Money::ZERO);
        let min_remaining = (self.policy.min_required(state.statement_balance_due)
            - state.paid_toward_statement)
            .max(Money::ZERO);
        let amount = match state.payment_habit {
            PaymentHabit::AutomaticPayment => remaining,
            PaymentHabit::ManualOnDueDate => Money::ZERO,
            PaymentHabit::Irregular => {
                let roll: f64 = rng.gen();
                if roll < self.irregular_payment_prob {
                    min_remaining
                } else {
                    Money::ZERO
                }
            }
        };
        if amount.is_positive() {
            post_autopay(state, date, amount)
        } else {
            Ok(PostingOutcome {
                state: state.clone(),
                events: Vec::new(),
            })
        }
    }

    fn prompt_fragments(
        &self,
        state: &LedgerState,
        _date: NaiveDate,
        _outstanding: &[Violation],
        _rng: &mut dyn RngCore,
    ) -> Vec<PromptFragment> {
        match state.due_date {
            Some(due) if state.statement_balance_due.is_positive() => {
                let remaining =
                    (state.statement_balance_due - state.paid_toward_statement).max(Money::ZERO);
                if remaining.is_positive() {
                    vec![PromptFragment::PaymentDue {
                        remaining,
                        minimum: self.policy.min_required(state.statement_balance_due),
                        due_date: due,
                    }]
                } else {
                    Vec::new()
                }
            }
            _ => Vec::new(),
        }
    }
}

// ---------------------------------------------------------------------------
// subscription_carryover
// ---------------------------------------------------------------------------

/// The engine posts every active schedule each period; plans may cancel a
/// schedule but never double-post one.
struct SubscriptionCarryoverRule;

impl Rule for SubscriptionCarryoverRule {
    fn rule_id(&self) -> &str {
        "subscription_carryover"
    }

    fn kind(&self) -> RuleKind {
        RuleKind::Invariant
    }

    fn check(&self, state: &LedgerState, plan: &DailyPlan) -> Vec<Violation> {
        let mut violations = Vec::new();
        let schedule_names: Vec<&str> = state
            .active_subscriptions
            .iter()
            .chain(&state.recurring_bills)
            .map(|s| s.charge.merchant_name.as_str())
            .collect();
        for (i, draft) in plan.proposed_events.iter().enumerate() {
            match draft.kind {
                EventKind::SubscriptionCharge | EventKind::RecurringBill => {
                    if schedule_names.contains(&draft.merchant_name.as_str()) {
                        violations.push(
                            Violation::rule(
                                self.rule_id(),
                                codes::DUPLICATE_SCHEDULED_CHARGE,
                                format!(
                                    "{} is charged automatically on its schedule",
                                    draft.merchant_name
                                ),
                            )
                            .at_index(i)
                            .with_remedy("drop the duplicate scheduled charge"),
                        );
                    }
                }
                EventKind::CancelSubscription
                    if !schedule_names.contains(&draft.merchant_name.as_str()) =>
                {
                    violations.push(
                        Violation::rule(
                            self.rule_id(),
                            codes::UNKNOWN_SCHEDULE,
                            format!("no active schedule named {:?}", draft.merchant_name),
                        )
                        .at_index(i),
                    );
                }
                _ => {}
            }
        }
        violations
    }

    fn update(
        &self,
        state: &LedgerState,
        date: NaiveDate,
        rng: &mut dyn RngCore,
    ) -> Result<PostingOutcome, LedgerError> {
        let subs = post_subscription_charges(state, date)?;
        let mut events = subs.events;
        let bills = post_recurring_bills(&subs.state, date, rng)?;
        events.extend(bills.events);
        Ok(PostingOutcome {
            state: bills.state,
            events,
        })
    }
}

// ---------------------------------------------------------------------------
// liquidity
// ---------------------------------------------------------------------------

/// Rejects plans whose windowed outflows exceed every resource the user can
/// reach: upcoming income, cash on hand, and unused credit.
struct LiquidityRule {
    window_days: i64,
}

/// Sum of scheduled charges (subscriptions at fixed amounts, bills at their
/// means) falling strictly inside `(date, date + window]`.
fn scheduled_outflows_in_window(state: &LedgerState, date: NaiveDate, window_days: i64) -> Money {
    let end = date + Duration::days(window_days);
    let mut total = Money::ZERO;
    for sched in state
        .active_subscriptions
        .iter()
        .chain(&state.recurring_bills)
    {
        let mut next = sched.next_charge_date;
        while next <= end {
            if next > date {
                total += sched.charge.amount;
            }
            next = crate::calendar::add_months_clamped(
                next,
                sched.charge.charge_frequency_month,
                sched.charge.date_to_charge,
            );
        }
    }
    total
}

/// The liquidity inequality from the solvency rule: a violation is returned
/// iff planned-plus-scheduled outflows strictly exceed upcoming inflows plus
/// starting cash plus available credit.
pub fn liquidity_check(
    state: &LedgerState,
    window_days: i64,
    planned: &[crate::ledger::EventDraft],
) -> Option<Violation> {
    assert!(
        window_days >= 1,
        "liquidity window must be at least one day"
    );
    let date = state.current_date;
    let planned_outflows: Money = planned
        .iter()
        .filter(|d| d.kind.is_charge() && d.amount.is_positive())
        .map(|d| d.amount)
        .sum();
    let outflows = planned_outflows + scheduled_outflows_in_window(state, date, window_days);
    let end = date + Duration::days(window_days);
    let paydays = paydays_in_range(date + Duration::days(1), end);
    let inflows = Money::from_cents(state.income_per_paycheck.cents() * paydays.len() as i64);
    let available_credit = (state.credit_limit - state.credit_balance).max(Money::ZERO);
    let resources = inflows + state.cash + available_credit;
    if outflows > resources {
        Some(
            Violation::rule(
                "liquidity",
                codes::LIQUIDITY,
                format!(
                    "outflows {outflows} over the next {window_days} days exceed \
resources {resources} (inflows {inflows} + cash {} + available credit {available_credit})",
                    state.cash
                ),
            )
            .with_remedy(format!(
                "cut planned spending by at least {}",
                outflows - resources
            )),
        )
    } else {
        None
    }
}

impl Rule for LiquidityRule {
    fn rule_id(&self) -> &str {
        "liquidity"
    }

    fn kind(&self) -> RuleKind {
        RuleKind::Invariant
    }

    fn check(&self, state: &LedgerState, plan: &DailyPlan) -> Vec<Violation> {
        liquidity_check(state, self.window_days, &plan.proposed_events)
            .into_iter()
            .collect()
    }
}

// ---------------------------------------------------------------------------
// purchase_cadence (realism)
// ---------------------------------------------------------------------------

/// Tracks last purchase dates for groceries and fuel and flags implausibly
/// frequent repeats. Soft by default: feedback, not rejection.
struct PurchaseCadenceRule {
    min_gap_groceries_days: i64,
    min_gap_fuel_days: i64,
    strict: bool,
}

impl PurchaseCadenceRule {
    fn min_gap(&self, category: &str) -> i64 {
        match category {
            "groceries" => self.min_gap_groceries_days,
            "fuel" => self.min_gap_fuel_days,
            _ => 0,
        }
    }

    fn tracked_categories(&self, state: &LedgerState) -> Vec<&'static str> {
        if state.owns_car {
            vec!["groceries", "fuel"]
        } else {
            vec!["groceries"]
        }
    }
}

impl Rule for PurchaseCadenceRule {
    fn rule_id(&self) -> &str {
        "purchase_cadence"
    }

    fn kind(&self) -> RuleKind {
        RuleKind::Realism
    }

    fn check(&self, state: &LedgerState, plan: &DailyPlan) -> Vec<Violation> {
        let mut violations = Vec::new();
        let mut last_gap: std::collections::BTreeMap<&str, i64> = Default::default();
        for (i, draft) in plan.proposed_events.iter().enumerate() {
            if draft.kind != EventKind::Purchase {
                continue;
            }
            let Some(category) = cadence_category(&draft.merchant_type) else {
                continue;
            };
            let min_gap = self.min_gap(category);
            if min_gap == 0 {
                continue;
            }
            let gap = last_gap.get(category).copied().or_else(|| {
                state
                    .last_purchase_dates
                    .get(category)
                    .map(|d| (state.current_date - *d).num_days())
            });
            if let Some(gap) = gap {
                if gap < min_gap {
                    let violation = Violation::rule(
                        self.rule_id(),
                        codes::CADENCE_TOO_FREQUENT,
                        format!(
                            "{category} purchased again after {gap} day(s); typical gap is {min_gap}"
                        ),
                    )
                    .at_index(i)
                    .with_remedy(format!("skip {category} for now"));
                    violations.push(if self.strict {
                        violation
                    } else {
                        violation.soft()
                    });
                }
            }
            last_gap.insert(category, 0);
        }
        violations
    }

    fn prompt_fragments(
        &self,
        state: &LedgerState,
        date: NaiveDate,
        _outstanding: &[Violation],
        _rng: &mut dyn RngCore,
    ) -> Vec<PromptFragment> {
        self.tracked_categories(state)
            .into_iter()
            .map(|category| PromptFragment::CadenceReminder {
                category: category.to_string(),
                days_since: state
                    .last_purchase_dates
                    .get(category)
                    .map(|d| (date - *d).num_days()),
                min_gap_days: self.min_gap(category),
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// random_events (realism)
// ---------------------------------------------------------------------------

/// With the configured daily probability, instructs the proposer to include
/// one predefined large expense drawn uniformly from the catalog.
struct RandomEventsRule {
    prob: f64,
}

/// One draw decides whether an event triggers today; two more pick the event
/// and its amount. Deterministic given the rng stream.
pub fn maybe_random_event(
    state: &LedgerState,
    _date: NaiveDate,
    rng: &mut dyn RngCore,
    prob: f64,
) -> Option<PromptFragment> {
    let roll: f64 = rng.gen();
    if roll >= prob {
        return None;
    }
    let candidates = catalog().applicable_random_events(state.owns_car);
    let entry = candidates[rng.gen_range(0..candidates.len())];
    let dollars = rng.gen_range(entry.amount_low..=entry.amount_high);
    Some(PromptFragment::ForcedCharge {
        description: entry.description.clone(),
        merchant_name: entry.merchant_name.clone(),
        merchant_type: entry.merchant_type.clone(),
        amount: Money::from_f64_dollars_half_up(dollars),
    })
}

impl Rule for RandomEventsRule {
    fn rule_id(&self) -> &str {
        "random_events"
    }

    fn kind(&self) -> RuleKind {
        RuleKind::Realism
    }

    fn check(&self, _state: &LedgerState, _plan: &DailyPlan) -> Vec<Violation> {
        Vec::new()
    }

    fn prompt_fragments(
        &self,
        state: &LedgerState,
        date: NaiveDate,
        _outstanding: &[Violation],
        rng: &mut dyn RngCore,
    ) -> Vec<PromptFragment> {
        maybe_random_event(state, date, rng, self.prob)
            .into_iter()
            .collect()
    }
}
