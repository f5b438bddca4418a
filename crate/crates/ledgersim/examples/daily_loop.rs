//! Step one user through a week, printing each day's prompt and accepted
//! events: the closed loop at its smallest.
//!
//! ```bash
//! cargo run -p ledgersim --example daily_loop
//! ```

use ledgersim::audit::AuditLog;
use ledgersim::engine::{simulate_day, EngineConfig};
use ledgersim::ledger::{advance_day, init_state};
use ledgersim::persona::bundled_sample_personas;
use ledgersim::proposer::{ConversationWindow, ProposalSource};
use ledgersim::rules::default_registry;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() {
    let persona = bundled_sample_personas()[0].clone();
    let mut config = EngineConfig::default();
    config.seed = 11;
    let registry = default_registry(&config.rules);
    let source = ProposalSource::mock_with(config.mock.clone());

    let mut state = init_state(
        &persona.user_id,
        &persona.user_financial_profile,
        config.start_date,
        &config.rules.policy,
    );
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let mut window = ConversationWindow::new();
    let mut audit = AuditLog::new();

    for _ in 0..7 {
        let date = state.current_date;
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
        .expect("simulation step");
        println!("== {date} ==");
        for event in &result.accepted_events {
            println!(
                "  {} {:<28} {:>10}  ({})",
                event.timestamp.format("%H:%M"),
                event.merchant_name,
                event.amount.to_decimal_string(),
                event.kind.label()
            );
        }
        println!(
            "  cash {:>12}  balance {:>12} / {}",
            result.state.cash, result.state.credit_balance, result.state.credit_limit
        );
        state = advance_day(&result.state);
    }
    println!(
        "\naudit log: {} records over 7 days (checks, prompts, plans, transitions)",
        audit.records().len()
    );
}
