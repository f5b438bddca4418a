//! Rule-grounded, stateful synthetic transaction-stream generation.
//!
//! A persona-conditioned proposal source drafts daily transaction plans; a
//! programmatic engine enforces accounting invariants (exact integer-cent
//! cash and credit identities, balance bounds, due dates, subscription
//! carryover, liquidity), repairs or drops infeasible proposals through
//! targeted reprompts, and logs every check and state transition to an
//! append-only audit stream that supports exact replay. Builders turn
//! generated corpora into two benchmark tasks (illiquidity classification
//! and identity-theft segmentation) plus feature encodings and corpus
//! statistics.
//!
//! Start with the `examples/` directory; each one exercises a capability end
//! to end:
//!
//! - `generate_corpus` - simulate users and write a run directory
//! - `derive_profiles` - persona -> financial profile, deterministically
//! - `daily_loop` - one user stepped through a week
//! - `repair_loop` - violation, targeted feedback, corrected plan
//! - `custom_rule` - register a new rule next to the built-ins
//! - `replay_and_verify` - exact replay and tamper detection
//! - `build_benchmarks` - both task builders
//! - `encode_features` - vocabulary and one-hot encoding
//! - `corpus_stats` - group tables and the summary distribution table
//! - `stressed_economy` - emergent illiquidity under a harsh preset
//! - `external_backend` - the chat-completion wire client
//!
//! ```bash
//! cargo run -p ledgersim --example daily_loop
//! ```
//!
//! The `ledgersim` binary wraps the same library surface in subcommands
//! (`generate`, `replay`, `verify`, `build-task`, `encode`, `stats`,
//! `derive-profiles`).

pub mod analytics;
pub mod audit;
pub mod backend;
pub mod benchmark;
pub mod calendar;
pub mod catalog;
pub mod cli;
pub mod engine;
pub mod hash;
pub mod ledger;
pub mod money;
pub mod persona;
pub mod proposer;
pub mod rules;

pub use engine::{EngineConfig, UserTrace};
pub use ledger::{LedgerState, TransactionEvent};
pub use money::Money;
pub use persona::{AugmentedPersona, FinancialProfile, Persona};
pub use proposer::{DailyPlan, ProposalSource};
pub use rules::{Rule, RuleRegistry, Violation};
