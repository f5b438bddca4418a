//! Corpus statistics: group-by spending tables, the summary distribution
//! table, and per-user credit-utilization series.
//!
//! ```bash
//! cargo run -p ledgersim --example corpus_stats
//! ```

use ledgersim::analytics::{credit_utilization_series, group_stats, summary, GROUP_KEYS};
use ledgersim::engine::{run_corpus, EngineConfig};
use ledgersim::persona::synthesize_personas;
use ledgersim::proposer::ProposalSource;

fn main() {
    let personas = synthesize_personas(15, 29);
    let mut config = EngineConfig::default();
    config.seed = 29;
    config.max_days = 120;
    let source = ProposalSource::mock_with(config.mock.clone());
    let out = std::env::temp_dir().join("ledgersim-example-stats");
    let (manifest, run_dir) = run_corpus(&personas, &config, &source, 4, &out).expect("corpus");
    let loaded = ledgersim::engine::load_run(&run_dir).expect("run loads");

    for key in ["spending_pattern", "car_ownership", "weekday"] {
        let table = group_stats(&loaded.events, &loaded.personas, key).expect("table");
        println!("average {} by {key}:", table.observation);
        for row in &table.rows {
            println!(
                "  {:<24} n={:<5} mean ${:>9.2} std ${:>9.2}",
                row.group, row.count, row.mean, row.std
            );
        }
        println!();
    }
    println!("(all keys: {GROUP_KEYS:?})\n");

    let report = summary(&loaded.events, &manifest.users, 50);
    print!("{}", report.render_text());

    let first_user = &loaded.personas[0].user_id;
    let snapshots: Vec<_> = loaded
        .snapshots
        .iter()
        .filter(|s| &s.state.user_id == first_user)
        .cloned()
        .collect();
    let series = credit_utilization_series(&snapshots);
    let peak =
        series.iter().cloned().fold(
            (None, 0.0),
            |acc, (d, u)| {
                if u >= acc.1 {
                    (Some(d), u)
                } else {
                    acc
                }
            },
        );
    println!(
        "\ncredit utilization for {first_user}: {} points, peak {:.1}% on {}",
        series.len(),
        100.0 * peak.1,
        peak.0.unwrap()
    );
}
