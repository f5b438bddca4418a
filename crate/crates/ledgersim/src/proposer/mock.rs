//! Deterministic persona-conditioned mock proposal source.
//!
//! Event counts follow a Poisson draw whose rate rises with the spending
//! archetype; merchants come from the hobby-keyed catalog; amounts are
//! log-normal around each merchant's price band, scaled by the archetype.
//! The mock is rule-aware by construction: payments never exceed cash or
//! balance, planned charges fit the remaining credit, and the liquidity
//! window is respected, so its plans almost never need repair.

use crate::calendar::holiday_name;
use crate::catalog::{catalog, MerchantEntry};
use crate::hash::fnv1a64;
use crate::ledger::{EventDraft, EventKind, LedgerState};
use crate::money::Money;
use crate::persona::{AugmentedPersona, PaymentHabit, SpendingArchetype};
use crate::proposer::{plan_event_time, DailyPlan};
use crate::rules::{liquidity_check, PromptFragment, PromptSpec};
use chrono::{Datelike, Weekday};
use rand::distributions::Distribution;
use rand::{Rng, RngCore};
use rand_distr::Poisson;

#[derive(Debug, Clone)]
pub struct MockProposer {
    /// Scales every sampled purchase amount; presets push this around.
    pub spend_scale: f64,
    /// Scales the daily event rate.
    pub rate_scale: f64,
}

impl Default for MockProposer {
    fn default() -> Self {
        MockProposer {
            spend_scale: 1.0,
            rate_scale: 1.0,
        }
    }
}

/// (daily event rate, amount multiplier) per archetype, most frugal first.
fn archetype_params(archetype: SpendingArchetype) -> (f64, f64) {
    match archetype {
        SpendingArchetype::Survivor => (0.8, 0.6),
        SpendingArchetype::Saver => (1.3, 0.85),
        SpendingArchetype::Planner => (1.7, 1.0),
        SpendingArchetype::Balancer => (2.1, 1.25),
        SpendingArchetype::Spender => (2.8, 1.6),
    }
}

fn day_rate_multiplier(date: chrono::NaiveDate) -> f64 {
    let weekday = match date.weekday() {
        Weekday::Fri => 1.15,
        Weekday::Sat => 1.3,
        Weekday::Sun => 1.1,
        _ => 1.0,
    };
    let holiday = if holiday_name(date).is_some() {
        1.2
    } else {
        1.0
    };
    weekday * holiday
}

impl MockProposer {
    pub fn new() -> MockProposer {
        MockProposer::default()
    }

    pub fn with_scales(spend_scale: f64, rate_scale: f64) -> MockProposer {
        MockProposer {
            spend_scale,
            rate_scale,
        }
    }

    /// Pure function of (persona, prompt, state, rng position).
    pub fn propose(
        &self,
        prompt: &PromptSpec,
        persona: &AugmentedPersona,
        state: &LedgerState,
        rng: &mut dyn RngCore,
    ) -> DailyPlan {
        let date = prompt.date;
        let profile = &persona.user_financial_profile;
        let (base_rate, amount_mult) = archetype_params(profile.archetype());
        let base_rate = base_rate * self.rate_scale;
        let amount_mult = amount_mult * self.spend_scale;
        let available_credit = (state.credit_limit - state.credit_balance).max(Money::ZERO);
        let mut budget = available_credit;
        let mut drafts: Vec<DraftSpec> = Vec::new();

        // Forced charges from the prompt come first and are always honored.
        for fragment in prompt.forced_charges() {
            if let PromptFragment::ForcedCharge {
                merchant_name,
                merchant_type,
                amount,
                ..
            } = fragment
            {
                let amount = (*amount).min(budget);
                if amount.is_positive() {
                    budget -= amount;
                    drafts.push(DraftSpec {
                        merchant_name: merchant_name.clone(),
                        merchant_type: merchant_type.clone(),
                        card_present: true,
                        amount,
                        kind: EventKind::Purchase,
                    });
                }
            }
        }

        // Statement payment, manual habit: 1-3 days before the due date.
        if profile.payment_habit == PaymentHabit::ManualOnDueDate {
            if let Some(PromptFragment::PaymentDue {
                remaining,
                due_date,
                ..
            }) = prompt
                .fragments
                .iter()
                .find(|f| matches!(f, PromptFragment::PaymentDue { .. }))
            {
                let key = format!("{}:{}", persona.user_id, due_date);
                let offset = 1 + (fnv1a64(key.as_bytes()) % 3) as i64;
                let days_until = (*due_date - date).num_days();
                if days_until <= offset && days_until >= 0 {
                    let amount = (*remaining)
                        .min(state.cash.max(Money::ZERO))
                        .min(state.credit_balance);
                    if amount.is_positive() {
                        drafts.push(DraftSpec {
                            merchant_name: "Card Services".to_string(),
                            merchant_type: "Credit Card Payment".to_string(),
                            card_present: false,
                            amount: -amount,
                            kind: EventKind::Payment,
                        });
                    }
                }
            }
        }

        // Violation remedies: the remedy text is advisory, but the caps below
        // already keep resubmissions feasible. Payments were capped at cash
        // and balance above; purchases are capped at the credit budget here.

        // Necessity purchases driven by cadence reminders.
        for fragment in &prompt.fragments {
            if let PromptFragment::CadenceReminder {
                category,
                days_since,
                min_gap_days,
            } = fragment
            {
                let due = days_since.is_none_or(|d| d >= *min_gap_days);
                let probability = match category.as_str() {
                    "groceries" => 0.85,
                    "fuel" => 0.7,
                    _ => 0.0,
                };
                if due && rng.gen::<f64>() < probability {
                    let pool = match category.as_str() {
                        "groceries" => catalog().merchants_with_tag("base"),
                        _ => catalog().merchants_with_tag("car"),
                    };
                    let pool: Vec<&&MerchantEntry> = pool
                        .iter()
                        .filter(|m| {
                            crate::catalog::cadence_category(&m.merchant_type)
                                == Some(category.as_str())
                        })
                        .collect();
                    if let Some(merchant) = pick(&pool, rng) {
                        if let Some(spec) = purchase_from(merchant, amount_mult, &mut budget, rng) {
                            drafts.push(spec);
                        }
                    }
                }
            }
        }

        // Discretionary purchases from the hobby-weighted pool.
        let rate = base_rate * day_rate_multiplier(date);
        let count = Poisson::new(rate)
            .map(|p| p.sample(rng) as usize)
            .unwrap_or(0);
        let pool = hobby_weighted_pool(persona);
        for _ in 0..count {
            if drafts.len() >= 20 {
                break;
            }
            if let Some(merchant) = pick(&pool, rng) {
                if let Some(spec) = purchase_from(merchant, amount_mult, &mut budget, rng) {
                    drafts.push(spec);
                }
            }
        }

        // Liquidity self-check: shed trailing discretionary purchases until
        // the windowed inequality holds.
        let mut events = materialize(drafts, date);
        while liquidity_check(state, 30, &events).is_some() {
            let Some(last_purchase) = events.iter().rposition(|e| e.kind == EventKind::Purchase)
            else {
                break;
            };
            events.remove(last_purchase);
        }

        let reasoning = reasoning_line(persona, &events);
        DailyPlan {
            reasoning: Some(reasoning),
            proposed_events: events,
        }
    }
}

struct DraftSpec {
    merchant_name: String,
    merchant_type: String,
    card_present: bool,
    amount: Money,
    kind: EventKind,
}

fn materialize(drafts: Vec<DraftSpec>, date: chrono::NaiveDate) -> Vec<EventDraft> {
    drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| EventDraft {
            timestamp: plan_event_time(date, i),
            merchant_name: d.merchant_name,
            merchant_type: d.merchant_type,
            card_present_or_not: d.card_present,
            amount: d.amount,
            kind: d.kind,
        })
        .collect()
}

fn pick<T: Copy>(pool: &[T], rng: &mut dyn RngCore) -> Option<T> {
    if pool.is_empty() {
        None
    } else {
        Some(pool[rng.gen_range(0..pool.len())])
    }
}

/// Hobby-tagged merchants are three times as likely as the base pool.
fn hobby_weighted_pool(persona: &AugmentedPersona) -> Vec<&'static MerchantEntry> {
    let cat = catalog();
    let mut pool: Vec<&MerchantEntry> = Vec::new();
    let owns_car = persona.user_financial_profile.owns_car();
    for hobby in &persona.user_persona.hobbies_and_interests_list {
        for tag in cat.tags_for_text(hobby) {
            if tag == "base" || (tag == "car" && !owns_car) {
                continue;
            }
            for merchant in cat.merchants_with_tag(tag) {
                for _ in 0..3 {
                    pool.push(merchant);
                }
            }
        }
    }
    for merchant in cat.merchants_with_tag("base") {
        pool.push(merchant);
    }
    if owns_car {
        for merchant in cat.merchants_with_tag("car") {
            pool.push(merchant);
        }
    }
    pool
}

/// Log-normal amount around the merchant's price band, archetype-scaled,
/// capped by the remaining credit budget.
fn purchase_from(
    merchant: &MerchantEntry,
    amount_mult: f64,
    budget: &mut Money,
    rng: &mut dyn RngCore,
) -> Option<DraftSpec> {
    let z: f64 = rand_distr::StandardNormal.sample(rng);
    let dollars = merchant.price_median * (merchant.price_sigma * z).exp() * amount_mult;
    let amount = Money::from_f64_dollars_half_up(dollars.max(1.0));
    let amount = amount.min(*budget);
    let card_present = rng.gen::<f64>() < merchant.card_present_p;
    if !amount.is_positive() {
        return None;
    }
    *budget -= amount;
    Some(DraftSpec {
        merchant_name: merchant.name.clone(),
        merchant_type: merchant.merchant_type.clone(),
        card_present,
        amount,
        kind: EventKind::Purchase,
    })
}

fn reasoning_line(persona: &AugmentedPersona, events: &[EventDraft]) -> String {
    let purchases = events
        .iter()
        .filter(|e| e.kind == EventKind::Purchase)
        .count();
    let payments = events
        .iter()
        .filter(|e| e.kind == EventKind::Payment)
        .count();
    format!(
        "{} plans {} purchase(s) and {} payment(s) today.",
        persona
            .user_persona
            .persona
            .split_whitespace()
            .rev()
            .find(|w| w.chars().next().is_some_and(|c| c.is_uppercase()))
            .unwrap_or("The user"),
        purchases,
        payments
    )
}
