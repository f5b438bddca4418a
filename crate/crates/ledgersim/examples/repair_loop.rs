//! Watch the repair loop correct a misbehaving backend.
//!
//! A scripted backend first proposes a payment larger than the credit
//! balance (the classic miscomputed-balance overpayment). The rules reject
//! it with targeted feedback, and the backend's corrected second answer is
//! accepted. The audit log records the whole exchange.
//!
//! ```bash
//! cargo run -p ledgersim --example repair_loop
//! ```

use chrono::NaiveDate;
use ledgersim::audit::{AuditKind, AuditLog};
use ledgersim::backend::{ExternalEndpointConfig, ScriptedTransport};
use ledgersim::engine::{simulate_day, EngineConfig};
use ledgersim::ledger::init_state;
use ledgersim::money::Money;
use ledgersim::persona::bundled_sample_personas;
use ledgersim::proposer::{ConversationWindow, ExternalProposer, ProposalSource};
use ledgersim::rules::default_registry;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::sync::Arc;

fn main() {
    let persona = bundled_sample_personas()[0].clone();
    let mut config = EngineConfig::default();
    config.start_date = NaiveDate::from_ymd_opt(2024, 1, 2).unwrap();
    config.rules.random_event_prob = 0.0;
    let registry = default_registry(&config.rules);

    let mut state = init_state(
        &persona.user_id,
        &persona.user_financial_profile,
        config.start_date,
        &config.rules.policy,
    );
    state.credit_balance = Money::from_cents(5_000); // owes $50

    let overpay = r#"{"reasoning": "pay off the card", "transactions": [
        {"merchant_name": "Card Services", "merchant_type": "Credit Card Payment",
         "card_present_or_not": false, "amount": "60.00", "kind": "payment"}]}"#;
    let corrected = r#"{"reasoning": "pay what is owed", "transactions": [
        {"merchant_name": "Card Services", "merchant_type": "Credit Card Payment",
         "card_present_or_not": false, "amount": "50.00", "kind": "payment"}]}"#;
    let source = ProposalSource::External(ExternalProposer::new(
        ExternalEndpointConfig::default(),
        Arc::new(ScriptedTransport::new(vec![
            overpay.to_string(),
            corrected.to_string(),
        ])),
    ));

    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let mut window = ConversationWindow::new();
    let mut audit = AuditLog::new();
    let result = simulate_day(
        &persona,
        &state,
        &source,
        &registry,
        &config,
        &mut rng,
        &mut window,
        &mut audit,
    )
    .expect("day simulates");

    println!("backend proposed a $60.00 payment against a $50.00 balance\n");
    for record in audit.records() {
        match record.kind {
            AuditKind::Rejection => {
                println!("REJECTION  {}", record.detail.as_deref().unwrap_or(""))
            }
            AuditKind::Transition => {
                let event = record.event.as_ref().unwrap();
                println!(
                    "TRANSITION {} {} ({:?})",
                    event.merchant_name,
                    event.amount,
                    record.origin.unwrap()
                );
            }
            _ => {}
        }
    }
    println!(
        "\nfinal: cash {}, balance {}",
        result.state.cash, result.state.credit_balance
    );
}
