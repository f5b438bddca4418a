//! Exact regeneration: replay a trace from its audit log, then tamper with
//! one byte and watch the hash chain break at that record.
//!
//! ```bash
//! cargo run -p ledgersim --example replay_and_verify
//! ```

use ledgersim::audit::{replay, AuditKind};
use ledgersim::engine::{simulate_user, EngineConfig};
use ledgersim::ledger::state_hash;
use ledgersim::money::Money;
use ledgersim::persona::bundled_sample_personas;
use ledgersim::proposer::ProposalSource;
use ledgersim::rules::default_registry;

fn main() {
    let persona = &bundled_sample_personas()[0];
    let mut config = EngineConfig::default();
    config.seed = 21;
    config.max_days = 90;
    let registry = default_registry(&config.rules);
    let source = ProposalSource::mock_with(config.mock.clone());

    let trace = simulate_user(persona, &config, &registry, &source).expect("simulation");
    println!(
        "simulated {} days, {} events, {} audit records",
        trace.snapshots.len(),
        trace.events.len(),
        trace.audit.len()
    );

    let replayed =
        replay(&trace.audit, &trace.initial_state, &config.rules.policy).expect("clean replay");
    println!(
        "replayed final state hash {:016x} == recorded {:016x}",
        state_hash(&replayed),
        state_hash(trace.final_state())
    );
    assert_eq!(state_hash(&replayed), state_hash(trace.final_state()));

    // Flip one amount by a cent: the chain must break at exactly that index.
    let mut tampered = trace.audit.clone();
    let index = tampered
        .iter()
        .position(|r| r.kind == AuditKind::Transition)
        .unwrap();
    if let Some(event) = tampered[index].event.as_mut() {
        event.amount += Money::from_cents(1);
    }
    match replay(&tampered, &trace.initial_state, &config.rules.policy) {
        Err(e) => println!("tampered log rejected: {e}"),
        Ok(_) => unreachable!("tampering must be detected"),
    }
}
