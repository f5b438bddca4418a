//! Emergent illiquidity under the stressed preset.
//!
//! Thin paychecks plus heavy spending drive some users' checking accounts
//! below the overdraft floor; the engine terminates those traces and labels
//! them illiquid. Nothing tags users up front: insolvency falls out of the
//! accounting.
//!
//! ```bash
//! cargo run -p ledgersim --example stressed_economy
//! ```

use ledgersim::analytics::{credit_utilization_series, mean_std};
use ledgersim::engine::{simulate_user, EngineConfig, Termination};
use ledgersim::persona::synthesize_personas;
use ledgersim::proposer::ProposalSource;
use ledgersim::rules::default_registry;

fn main() {
    let personas = synthesize_personas(30, 99);
    let mut config = EngineConfig::stressed();
    config.seed = 99;
    config.max_days = 180;
    let registry = default_registry(&config.rules);
    let source = ProposalSource::mock_with(config.mock.clone());

    let mut illiquid = 0usize;
    let mut volatility: Vec<(String, Termination, f64)> = Vec::new();
    for persona in &personas {
        let trace = simulate_user(persona, &config, &registry, &source).expect("simulation");
        let series = credit_utilization_series(&trace.snapshots);
        let values: Vec<f64> = series.iter().map(|(_, u)| *u).collect();
        let (_, std) = mean_std(&values);
        volatility.push((trace.user_id.clone(), trace.termination, std));
        if trace.termination == Termination::Illiquid {
            illiquid += 1;
            let last = trace.final_state();
            println!(
                "{} went illiquid on {} with checking at {}",
                trace.user_id,
                trace.illiquid_date.unwrap(),
                last.cash
            );
        }
    }
    println!(
        "\n{illiquid} of {} users terminated illiquid",
        personas.len()
    );

    let mean_vol = |t: Termination| {
        let vals: Vec<f64> = volatility
            .iter()
            .filter(|(_, term, _)| *term == t)
            .map(|(_, _, v)| *v)
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    };
    println!(
        "mean utilization volatility: illiquid {:.3} vs solvent {:.3}",
        mean_vol(Termination::Illiquid),
        mean_vol(Termination::HorizonReached)
    );
}
