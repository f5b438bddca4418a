//! Wire an external chat-completion backend as the proposal source.
//!
//! The engine is backend-agnostic: anything answering an OpenAI-compatible
//! chat request works. This example uses the scripted transport so it runs
//! offline; swap in `ExternalProposer::from_config` for a live endpoint.
//!
//! ```bash
//! cargo run -p ledgersim --example external_backend
//! ```

use ledgersim::backend::{ExternalEndpointConfig, ScriptedTransport};
use ledgersim::engine::{simulate_user, EngineConfig};
use ledgersim::persona::bundled_sample_personas;
use ledgersim::proposer::{ExternalProposer, ProposalSource};
use ledgersim::rules::default_registry;
use std::sync::Arc;

fn main() {
    // A live deployment would configure something like this (credentials come
    // from the named environment variable, never the config file):
    let endpoint = ExternalEndpointConfig {
        url: "http://localhost:8000/v1/chat/completions".to_string(),
        model: "my-chat-model".to_string(),
        api_key_env: "LEDGERSIM_API_KEY".to_string(),
        timeout_secs: 60,
        parse_retries: 1,
        temperature: 0.7,
        max_concurrency: 4,
        log_bodies: false,
    };
    println!(
        "endpoint config:\n{}\n",
        serde_json::to_string_pretty(&endpoint).unwrap()
    );
    // let source = ProposalSource::External(ExternalProposer::from_config(endpoint)?);

    // Offline stand-in: a backend that answers twice, then goes dark. The
    // engine degrades dark days to scheduled-items-only and keeps accounting
    // exact either way.
    let canned = r#"{"reasoning": "coffee and groceries", "transactions": [
        {"merchant_name": "Blue Bottle Coffee", "merchant_type": "Coffee Shop",
         "card_present_or_not": true, "amount": "6.75", "kind": "purchase"},
        {"merchant_name": "Kroger", "merchant_type": "Grocery Store",
         "card_present_or_not": true, "amount": "61.20", "kind": "purchase"}]}"#;
    let source = ProposalSource::External(ExternalProposer::new(
        endpoint,
        Arc::new(ScriptedTransport::new(vec![
            canned.to_string(),
            canned.to_string(),
        ])),
    ));

    let persona = &bundled_sample_personas()[0];
    let mut config = EngineConfig::default();
    config.max_days = 4;
    let registry = default_registry(&config.rules);
    let trace = simulate_user(persona, &config, &registry, &source).expect("simulation");

    println!("4 simulated days against the scripted backend:");
    for event in &trace.events {
        println!(
            "  {} {:<24} {:>10} ({})",
            event.timestamp.format("%m-%d %H:%M"),
            event.merchant_name,
            event.amount.to_decimal_string(),
            event.kind.label()
        );
    }
    println!(
        "backend went dark after two answers; trace marked incomplete: {}",
        trace.incomplete_backend
    );
}
