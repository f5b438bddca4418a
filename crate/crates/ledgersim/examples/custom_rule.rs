//! Plug in a custom rule alongside the built-ins.
//!
//! Rules follow one template: `check` validates plans, `update` posts
//! bank-initiated events, `prompt_fragments` steers the proposer. This one
//! caps single purchases at a fixed amount, the kind of policy knob an
//! analyst might add without touching the engine.
//!
//! ```bash
//! cargo run -p ledgersim --example custom_rule
//! ```

use chrono::NaiveDate;
use ledgersim::ledger::{init_state, EventKind, LedgerState};
use ledgersim::money::Money;
use ledgersim::persona::bundled_sample_personas;
use ledgersim::proposer::{parse_plan, DailyPlan};
use ledgersim::rules::{default_registry, Rule, RuleConfig, RuleKind, Violation};

struct SinglePurchaseCap {
    cap: Money,
}

impl Rule for SinglePurchaseCap {
    fn rule_id(&self) -> &str {
        "single_purchase_cap"
    }

    fn kind(&self) -> RuleKind {
        RuleKind::Invariant
    }

    fn check(&self, _state: &LedgerState, plan: &DailyPlan) -> Vec<Violation> {
        plan.proposed_events
            .iter()
            .enumerate()
            .filter(|(_, draft)| draft.kind == EventKind::Purchase && draft.amount > self.cap)
            .map(|(i, draft)| {
                Violation::rule(
                    self.rule_id(),
                    "PURCHASE_OVER_CAP",
                    format!("purchase {} exceeds the {} cap", draft.amount, self.cap),
                )
                .at_index(i)
                .with_remedy(format!("split or shrink purchases to at most {}", self.cap))
            })
            .collect()
    }
}

fn main() {
    let mut registry = default_registry(&RuleConfig::default());
    registry
        .register(Box::new(SinglePurchaseCap {
            cap: Money::from_dollars(500),
        }))
        .expect("unique rule id");
    println!("registry now evaluates: {:?}\n", registry.rule_ids());

    let persona = &bundled_sample_personas()[0];
    let state = init_state(
        &persona.user_id,
        &persona.user_financial_profile,
        NaiveDate::from_ymd_opt(2024, 3, 2).unwrap(),
        &RuleConfig::default().policy,
    );
    let plan = parse_plan(
        r#"{"transactions": [
            {"merchant_name": "Kroger", "merchant_type": "Grocery Store",
             "card_present_or_not": true, "amount": "82.00", "kind": "purchase"},
            {"merchant_name": "Best Buy", "merchant_type": "Electronics Store",
             "card_present_or_not": true, "amount": "1299.00", "kind": "purchase"}
        ]}"#,
        state.current_date,
    )
    .expect("plan parses");

    let outcome = registry.evaluate_plan(&state, &plan);
    for violation in &outcome.violations {
        println!(
            "[{}] {} (event {:?})",
            violation.code, violation.message, violation.offending_event_index
        );
        if let Some(remedy) = &violation.suggested_remedy {
            println!("  remedy: {remedy}");
        }
    }
}
