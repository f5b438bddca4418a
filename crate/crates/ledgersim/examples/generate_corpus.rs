//! Generate a small deterministic corpus and write a run directory.
//!
//! ```bash
//! cargo run -p ledgersim --example generate_corpus
//! ```

use ledgersim::engine::{run_corpus, EngineConfig};
use ledgersim::persona::synthesize_personas;
use ledgersim::proposer::ProposalSource;

fn main() {
    let personas = synthesize_personas(20, 7);
    let mut config = EngineConfig::default();
    config.seed = 7;
    config.max_days = 120;

    let source = ProposalSource::mock_with(config.mock.clone());
    let out = std::env::temp_dir().join("ledgersim-example-corpus");
    let (manifest, run_dir) =
        run_corpus(&personas, &config, &source, 4, &out).expect("corpus generation");

    println!("run directory: {}", run_dir.display());
    println!("config hash:   {}", manifest.config_hash);
    println!("users:         {}", manifest.user_count);
    println!(
        "events:        {} ({} exported)",
        manifest.total_events, manifest.total_exported_events
    );
    println!("illiquid:      {}", manifest.illiquid_users);
    for user in manifest.users.iter().take(5) {
        println!(
            "  {}: {} events over {} days ({:?})",
            user.user_id, user.event_count, user.days_simulated, user.termination
        );
    }
    println!("files: events.jsonl, snapshots.jsonl, audit.jsonl, personas.jsonl, manifest.json");
}
