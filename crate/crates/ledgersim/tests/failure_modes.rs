//! Regression tests for the three classic failure modes of unconstrained
//! plan generators: (A) implausibly frequent staple purchases, (B)
//! subscriptions that silently stop recurring, (C) payments computed from a
//! wrong balance. Each must be caught or made impossible by the engine.

use chrono::NaiveDate;
use ledgersim::engine::{simulate_user, EngineConfig};
use ledgersim::ledger::{init_state, EventKind};
use ledgersim::money::Money;
use ledgersim::persona::bundled_sample_personas;
use ledgersim::proposer::{parse_plan, ProposalSource};
use ledgersim::rules::{codes, default_registry, RuleConfig};

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

#[test]
fn case_a_too_frequent_groceries_draw_cadence_feedback() {
    let registry = default_registry(&RuleConfig::default());
    let persona = &bundled_sample_personas()[0];
    let mut state = init_state(
        &persona.user_id,
        &persona.user_financial_profile,
        d(2024, 3, 2),
        &RuleConfig::default().policy,
    );
    // Groceries were bought yesterday; buying again today is unrealistic.
    state
        .last_purchase_dates
        .insert("groceries".to_string(), d(2024, 3, 1));
    let plan = parse_plan(
        r#"{"transactions": [
            {"merchant_name": "Kroger", "merchant_type": "Grocery Store",
             "card_present_or_not": true, "amount": "85.00", "kind": "purchase"}
        ]}"#,
        state.current_date,
    )
    .unwrap();
    let outcome = registry.evaluate_plan(&state, &plan);
    let cadence: Vec<_> = outcome
        .violations
        .iter()
        .filter(|v| v.code == codes::CADENCE_TOO_FREQUENT)
        .collect();
    assert_eq!(cadence.len(), 1);
    // Realism-class: feedback, not rejection, unless configured strict.
    assert!(!cadence[0].is_hard());
    assert!(!outcome.has_hard_violations());

    let strict = default_registry(&RuleConfig {
        strict_cadence: true,
        ..RuleConfig::default()
    });
    assert!(strict.evaluate_plan(&state, &plan).has_hard_violations());
}

#[test]
fn case_b_subscriptions_carry_forward_without_proposer_help() {
    // The proposal source never mentions subscriptions; the engine posts
    // them every period anyway, and rejects duplicate proposals.
    let persona = &bundled_sample_personas()[0];
    let mut config = EngineConfig::default();
    config.seed = 44;
    config.max_days = 120;
    let registry = default_registry(&config.rules);
    let source = ProposalSource::mock_with(config.mock.clone());
    let trace = simulate_user(persona, &config, &registry, &source).unwrap();
    let netflix_charges = trace
        .events
        .iter()
        .filter(|e| e.merchant_name == "Netflix" && e.kind == EventKind::SubscriptionCharge)
        .count();
    assert_eq!(netflix_charges, 4, "Jan 25, Feb 25, Mar 25, Apr 25");

    // A plan trying to double-post the subscription is rejected.
    let state = init_state(
        &persona.user_id,
        &persona.user_financial_profile,
        d(2024, 3, 2),
        &config.rules.policy,
    );
    let duplicate = parse_plan(
        r#"{"transactions": [
            {"merchant_name": "Netflix", "merchant_type": "Subscription Services",
             "card_present_or_not": false, "amount": "15.49", "kind": "subscription_charge"}
        ]}"#,
        state.current_date,
    )
    .unwrap();
    let outcome = registry.evaluate_plan(&state, &duplicate);
    assert!(outcome
        .violations
        .iter()
        .any(|v| v.code == codes::DUPLICATE_SCHEDULED_CHARGE && v.is_hard()));
}

#[test]
fn case_c_overpayment_from_a_miscomputed_balance_is_rejected_with_a_remedy() {
    let registry = default_registry(&RuleConfig::default());
    let persona = &bundled_sample_personas()[0];
    let mut state = init_state(
        &persona.user_id,
        &persona.user_financial_profile,
        d(2024, 3, 2),
        &RuleConfig::default().policy,
    );
    state.credit_balance = Money::from_cents(5_000);
    let plan = parse_plan(
        r#"{"transactions": [
            {"merchant_name": "Card Services", "merchant_type": "Credit Card Payment",
             "card_present_or_not": false, "amount": "60.00", "kind": "payment"}
        ]}"#,
        state.current_date,
    )
    .unwrap();
    let outcome = registry.evaluate_plan(&state, &plan);
    let overpayment = outcome
        .violations
        .iter()
        .find(|v| v.code == codes::OVERPAYMENT)
        .expect("overpayment flagged");
    assert!(overpayment.is_hard());
    assert_eq!(overpayment.offending_event_index, Some(0));
    let remedy = overpayment.suggested_remedy.as_deref().unwrap();
    assert!(
        remedy.contains("$50.00"),
        "remedy names the true balance: {remedy}"
    );
}
