//! Derive a financial profile from a bare persona with the deterministic
//! heuristic: income from occupation/education, credit limit from the income
//! band, subscriptions and bills keyed to hobbies through the catalog.
//!
//! ```bash
//! cargo run -p ledgersim --example derive_profiles
//! ```

use ledgersim::persona::{bundled_sample_personas, derive_financial_profile, DerivationMode};

fn main() {
    let sample = &bundled_sample_personas()[0];
    let persona = &sample.user_persona;
    println!("persona: {}", persona.persona);
    println!("hobbies: {:?}", persona.hobbies_and_interests_list);
    println!(
        "age {}, {} / {}",
        persona.age, persona.occupation, persona.education_level
    );

    for seed in [1u64, 2, 3] {
        let profile =
            derive_financial_profile(persona, DerivationMode::Heuristic, seed).expect("heuristic");
        println!("\nseed {seed}:");
        println!("  income level:  {:?}", profile.income_level);
        println!("  credit limit:  ${}", profile.credit_limit);
        println!("  payment habit: {:?}", profile.payment_habit);
        println!("  car ownership: {}", profile.car_ownership);
        println!("  archetype:     {}", profile.archetype());
        println!("  subscriptions:");
        for sub in &profile.subscriptions {
            println!(
                "    day {:>2}  {:<24} {} every {} month(s)",
                sub.date_to_charge, sub.merchant_name, sub.amount, sub.charge_frequency_month
            );
        }
        println!("  recurring bills:");
        for bill in &profile.recurring_variable_bills {
            println!(
                "    day {:>2}  {:<24} {} (std {})",
                bill.date_to_charge, bill.merchant_name, bill.amount, bill.std
            );
        }
    }
}
