//! Build both benchmark tasks from a freshly generated corpus: sliding-window
//! illiquidity labels and donor-day identity-theft injections.
//!
//! ```bash
//! cargo run -p ledgersim --example build_benchmarks
//! ```

use ledgersim::benchmark::{
    build_illiquidity_examples, events_by_user, inject_identity_theft, split, strip_injected,
    TaskLabel, UserWindow,
};
use ledgersim::engine::{run_corpus, EngineConfig};
use ledgersim::persona::synthesize_personas;
use ledgersim::proposer::ProposalSource;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() {
    let personas = synthesize_personas(10, 3);
    let mut config = EngineConfig::stressed(); // some illiquidity to label
    config.seed = 3;
    config.max_days = 150;
    let source = ProposalSource::mock_with(config.mock.clone());
    let out = std::env::temp_dir().join("ledgersim-example-benchmarks");
    let (manifest, run_dir) = run_corpus(&personas, &config, &source, 4, &out).expect("corpus");
    let loaded = ledgersim::engine::load_run(&run_dir).expect("run loads");
    let by_user = events_by_user(&loaded.events);

    // Task 1: illiquidity classification over 3-month windows.
    let (examples, report) = build_illiquidity_examples(
        &by_user,
        &manifest.users,
        config.start_date,
        3,
        Some(60),
        30,
    )
    .expect("windowing");
    println!(
        "illiquidity: {} examples, {} positive, {} windows excluded",
        report.examples, report.positives, report.windows_excluded_overlap
    );
    let splits = split(examples, &[("train", 0.8), ("test", 0.2)], 3).expect("split");
    for part in &splits {
        println!(
            "  {}: {} examples from {} users, positive rate {:.2}%",
            part.name,
            part.examples.len(),
            part.user_ids.len(),
            100.0 * part.positive_rate
        );
    }

    // Task 2: identity-theft segmentation by donor-day injection.
    let users: Vec<&String> = by_user.keys().collect();
    let primary = UserWindow::slice(users[0], &by_user[users[0]], config.start_date, 3);
    let donor = UserWindow::slice(users[1], &by_user[users[1]], config.start_date, 3);
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let example = inject_identity_theft(&primary, &donor, 3, 0, &mut rng).expect("injection");
    let TaskLabel::IdentityTheft { labels } = &example.label else {
        unreachable!()
    };
    let injected = labels.iter().filter(|b| **b).count();
    println!(
        "\ntheft example: {} events, {} injected from the donor",
        example.events.len(),
        injected
    );
    let recovered = strip_injected(&example);
    println!(
        "stripping labeled events recovers the primary window: {}",
        recovered.len() == primary.events.len()
    );
}
