//! Frequency-based one-hot vocabulary and event encoding.
//!
//! ```bash
//! cargo run -p ledgersim --example encode_features
//! ```

use ledgersim::benchmark::{build_vocab, encode_event, sgn_log_amount};
use ledgersim::engine::{run_corpus, EngineConfig};
use ledgersim::persona::synthesize_personas;
use ledgersim::proposer::ProposalSource;

fn main() {
    let personas = synthesize_personas(8, 13);
    let mut config = EngineConfig::default();
    config.seed = 13;
    config.max_days = 90;
    let source = ProposalSource::mock_with(config.mock.clone());
    let out = std::env::temp_dir().join("ledgersim-example-encode");
    let (_, run_dir) = run_corpus(&personas, &config, &source, 4, &out).expect("corpus");
    let loaded = ledgersim::engine::load_run(&run_dir).expect("run loads");

    let vocab = build_vocab(&loaded.events, 10);
    println!(
        "vocabulary at threshold {}: {} merchant names + unknown, {} types + unknown",
        vocab.threshold,
        vocab.name_index.len(),
        vocab.type_index.len()
    );
    println!(
        "feature dimension: {} + {} + 2 = {}",
        vocab.name_dims(),
        vocab.type_dims(),
        vocab.total_dims()
    );

    println!("\nsign-preserving log compression:");
    for dollars in [-250.0, -1.0, 0.0, 1.0, 15.49, 100.0, 4143.26] {
        println!("  {dollars:>10.2} -> {:+.6}", sgn_log_amount(dollars));
    }

    println!("\nfirst three encoded events:");
    for event in loaded.events.iter().take(3) {
        let features = encode_event(event, &vocab);
        let dense = features.to_dense();
        let hot: Vec<usize> = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        println!(
            "  {} {} {} -> {} dims, nonzero at {:?}",
            event.merchant_name,
            event.amount,
            event.kind.label(),
            dense.len(),
            hot
        );
    }
}
