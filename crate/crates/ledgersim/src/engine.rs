//! Closed-loop orchestrator: the day loop, the repair loop, termination, and
//! the corpus runner.
//!
//! One simulated day, in order: bank-initiated updates post (income, autopay,
//! subscriptions, bills), the next prompt is assembled, the proposal source
//! answers with a daily plan, the rules evaluate it, violations trigger
//! reprompts with targeted feedback up to the retry budget (then offending
//! events are dropped and the feasible remainder accepted), accepted events
//! apply, the statement closes if due, and the user terminates illiquid if
//! checking cash sank below the overdraft allowance.
//!
//! Users simulate independently on per-user rng streams keyed by
//! (seed, user_id), so corpus output is a pure function of
//! (personas, config, seed) at any parallelism level.

use crate::audit::{AuditLog, AuditRecord, EventOrigin, Verdict};
use crate::hash::{derive_rng_seed, fnv1a64};
use crate::ledger::{
    advance_day, apply_event, close_statement, init_state, is_statement_close_day, state_hash,
    EventKind, ExportEvent, LedgerError, LedgerState, TransactionEvent,
};
use crate::persona::AugmentedPersona;
use crate::proposer::{ConversationWindow, DailyPlan, ProposalSource, ProposeError, WindowEntry};
use crate::rules::{
    default_registry, PromptFragment, PromptSpec, RuleConfig, RuleOutcome, RuleRegistry,
};
use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Mock proposal source tuning; presets scale these.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MockConfig {
    #[serde(default = "default_scale")]
    pub spend_scale: f64,
    #[serde(default = "default_scale")]
    pub rate_scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            spend_scale: 1.0,
            rate_scale: 1.0,
        }
    }
}

/// Full engine configuration; one JSON document reproduces a run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EngineConfig {
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
    /// Hard cap on simulated days per user.
    #[serde(default = "default_max_days")]
    pub max_days: u32,
    /// Optional per-user horizon sampler: each user's day count is drawn
    /// uniformly from this inclusive range (then capped by `max_days`),
    /// giving corpora varied timespans.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_days_range: Option<(u32, u32)>,
    #[serde(default = "default_repair_retries")]
    pub repair_retries: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub rules: RuleConfig,
    #[serde(default)]
    pub mock: MockConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<crate::backend::ExternalEndpointConfig>,
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()
}
fn default_max_days() -> u32 {
    1101
}
fn default_repair_retries() -> u32 {
    3
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            start_date: default_start_date(),
            max_days: default_max_days(),
            horizon_days_range: None,
            repair_retries: default_repair_retries(),
            seed: 0,
            rules: RuleConfig::default(),
            mock: MockConfig::default(),
            backend: None,
        }
    }
}

impl EngineConfig {
    /// Validates rate ranges and day counts.
    pub fn validate(&self) -> Result<(), EngineError> {
        let rates = [
            (
                "monthly_interest_rate",
                self.rules.policy.monthly_interest_rate,
            ),
            (
                "min_payment_fraction",
                self.rules.policy.min_payment_fraction,
            ),
            ("random_event_prob", self.rules.random_event_prob),
            ("irregular_payment_prob", self.rules.irregular_payment_prob),
        ];
        for (name, rate) in rates {
            if !(0.0..=1.0).contains(&rate) {
                return Err(EngineError::BadConfig(format!(
                    "{name} must be in [0, 1], got {rate}"
                )));
            }
        }
        if self.max_days == 0 {
            return Err(EngineError::BadConfig("max_days must be >= 1".to_string()));
        }
        if let Some((lo, hi)) = self.horizon_days_range {
            if lo == 0 || hi < lo {
                return Err(EngineError::BadConfig(format!(
                    "horizon_days_range must satisfy 1 <= lo <= hi, got ({lo}, {hi})"
                )));
            }
        }
        if self.rules.liquidity_window_days < 1 {
            return Err(EngineError::BadConfig(
                "liquidity_window_days must be >= 1".to_string(),
            ));
        }
        Ok(())
    }

    /// Named preset: `default`, `stressed`, or `affluent`.
    pub fn preset(name: &str) -> Result<EngineConfig, EngineError> {
        match name {
            "default" => Ok(EngineConfig::default()),
            "stressed" => Ok(EngineConfig::stressed()),
            "affluent" => Ok(EngineConfig::affluent()),
            other => Err(EngineError::BadConfig(format!("unknown preset {other:?}"))),
        }
    }

    /// Thin paychecks, thin cash buffer, heavy spending. Illiquidity emerges
    /// when autopay drags checking below the overdraft floor.
    pub fn stressed() -> EngineConfig {
        let mut config = EngineConfig::default();
        config.rules.policy.paycheck_low = 700;
        config.rules.policy.paycheck_med = 1_200;
        config.rules.policy.paycheck_high = 2_400;
        config.rules.policy.starting_cash_multiple = 0.3;
        config.mock.spend_scale = 1.7;
        config.mock.rate_scale = 1.5;
        config
    }

    /// Fat paychecks, deep cash buffer, restrained spending.
    pub fn affluent() -> EngineConfig {
        let mut config = EngineConfig::default();
        config.rules.policy.paycheck_low = 2_800;
        config.rules.policy.paycheck_med = 5_200;
        config.rules.policy.paycheck_high = 10_400;
        config.rules.policy.starting_cash_multiple = 3.0;
        config.mock.spend_scale = 0.7;
        config.mock.rate_scale = 0.8;
        config
    }

    /// Stable hash of the canonical config serialization.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(canonical.as_bytes()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed run artifact {path}: {detail}")]
    MalformedRun { path: String, detail: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    HorizonReached,
    Illiquid,
}

/// End-of-day state snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DailySnapshot {
    pub date: NaiveDate,
    pub state: LedgerState,
}

/// Everything one simulated user produced.
#[derive(Debug, Clone)]
pub struct UserTrace {
    pub user_id: String,
    pub events: Vec<TransactionEvent>,
    pub snapshots: Vec<DailySnapshot>,
    pub termination: Termination,
    pub illiquid_date: Option<NaiveDate>,
    pub audit: Vec<AuditRecord>,
    /// True when the external backend failed permanently for this user.
    pub incomplete_backend: bool,
    pub initial_state: LedgerState,
}

impl UserTrace {
    pub fn final_state(&self) -> &LedgerState {
        self.snapshots
            .last()
            .map(|s| &s.state)
            .unwrap_or(&self.initial_state)
    }
}

/// Result of one simulated day.
pub struct DayResult {
    pub state: LedgerState,
    pub accepted_events: Vec<TransactionEvent>,
    pub terminated_illiquid: bool,
    pub backend_failed: bool,
}

// ---------------------------------------------------------------------------
// Day loop
// ---------------------------------------------------------------------------

/// Applies `events` one by one from `state`, writing TRANSITION records with
/// the hash chain. The fold must land exactly on the posting path's state.
fn audit_apply(
    audit: &mut AuditLog,
    user_id: &str,
    day: NaiveDate,
    state: &LedgerState,
    events: &[TransactionEvent],
    origin: impl Fn(&TransactionEvent) -> EventOrigin,
) -> Result<LedgerState, LedgerError> {
    let mut current = state.clone();
    for event in events {
        let pre = state_hash(&current);
        let next = apply_event(&current, event)?;
        let post = state_hash(&next);
        audit.transition(user_id, day, event.clone(), origin(event), pre, post);
        current = next;
    }
    Ok(current)
}

fn scheduled_notices(events: &[TransactionEvent]) -> Vec<PromptFragment> {
    events
        .iter()
        .filter(|e| {
            matches!(
                e.kind,
                EventKind::SubscriptionCharge | EventKind::RecurringBill
            )
        })
        .map(|e| PromptFragment::ScheduledNotice {
            merchant_name: e.merchant_name.clone(),
            amount: e.amount,
            kind: e.kind,
        })
        .collect()
}

/// Greedy feasibility pass after repair exhaustion: keep each event iff the
/// plan made of already-kept events plus it passes every hard check.
fn drop_infeasible(
    registry: &RuleRegistry,
    state: &LedgerState,
    plan: &DailyPlan,
    audit: &mut AuditLog,
    user_id: &str,
    day: NaiveDate,
) -> DailyPlan {
    let mut kept: Vec<crate::ledger::EventDraft> = Vec::new();
    for (index, draft) in plan.proposed_events.iter().enumerate() {
        let mut candidate = kept.clone();
        candidate.push(draft.clone());
        let outcome = registry.evaluate_plan(
            state,
            &DailyPlan {
                reasoning: None,
                proposed_events: candidate,
            },
        );
        if outcome.has_hard_violations() {
            let codes: Vec<&str> = outcome.hard_violations().map(|v| v.code.as_str()).collect();
            audit.dropped(user_id, day, format!("index {index}: {}", codes.join(",")));
        } else {
            kept.push(draft.clone());
        }
    }
    DailyPlan {
        reasoning: plan.reasoning.clone(),
        proposed_events: kept,
    }
}

/// One full simulated day against a proposal source.
#[allow(clippy::too_many_arguments)]
pub fn simulate_day(
    persona: &AugmentedPersona,
    state: &LedgerState,
    source: &ProposalSource,
    registry: &RuleRegistry,
    config: &EngineConfig,
    rng: &mut ChaCha12Rng,
    window: &mut ConversationWindow,
    audit: &mut AuditLog,
) -> Result<DayResult, EngineError> {
    let date = state.current_date;
    let user_id = &persona.user_id;
    let policy = &config.rules.policy;
    let mut accepted_events: Vec<TransactionEvent> = Vec::new();
    let mut backend_failed = false;

    // (1) Bank-initiated updates: income, autopay, subscriptions, bills.
    let mut current = state.clone();
    for (rule_id, outcome) in registry.run_updates_by_rule(&current, date, rng)? {
        let origin = move |event: &TransactionEvent| match (rule_id.as_str(), event.kind) {
            (_, EventKind::IncomeDeposit) => EventOrigin::Income,
            ("due_date_compliance", _) => EventOrigin::Autopay,
            (_, EventKind::Payment) => EventOrigin::ForcedHeadroom,
            _ => EventOrigin::Scheduled,
        };
        let folded = audit_apply(audit, user_id, date, &current, &outcome.events, origin)?;
        debug_assert_eq!(folded, outcome.state);
        accepted_events.extend(outcome.events);
        current = outcome.state;
    }

    // (2) Assemble the prompt: notices for what just posted, rule fragments,
    // and any outstanding feedback (none on the first round).
    let day_outcome = RuleOutcome {
        violations: Vec::new(),
        forced_events: Vec::new(),
        fragments: scheduled_notices(&accepted_events),
    };
    let base_prompt =
        crate::rules::build_next_prompt(registry, &current, date, &day_outcome, window, rng);
    audit.prompt(user_id, date, fnv1a64(base_prompt.render().as_bytes()));

    // (3)-(4) Propose, evaluate, repair.
    let mut prompt = base_prompt.clone();
    let mut accepted_plan = DailyPlan::empty();
    let mut round = 0u32;
    loop {
        match source.propose(&prompt, persona, &current, window, rng) {
            Ok(plan) => {
                audit.plan(user_id, date, plan.to_wire_json());
                let outcome = registry.evaluate_plan(&current, &plan);
                for rule_id in registry.rule_ids() {
                    let codes: Vec<&str> = outcome
                        .violations
                        .iter()
                        .filter(|v| v.rule_id == rule_id && v.is_hard())
                        .map(|v| v.code.as_str())
                        .collect();
                    let verdict = if codes.is_empty() {
                        Verdict::Pass
                    } else {
                        Verdict::Fail
                    };
                    audit.check(
                        user_id,
                        date,
                        rule_id,
                        verdict,
                        (!codes.is_empty()).then(|| codes.join(",")),
                    );
                }
                if !outcome.has_hard_violations() {
                    accepted_plan = plan;
                    break;
                }
                let summary: Vec<String> = outcome
                    .hard_violations()
                    .map(|v| {
                        format!(
                            "{}:{}{}",
                            v.rule_id,
                            v.code,
                            v.offending_event_index
                                .map(|i| format!("@{i}"))
                                .unwrap_or_default()
                        )
                    })
                    .collect();
                audit.rejection(user_id, date, summary.join(";"));
                if round >= config.repair_retries {
                    accepted_plan =
                        drop_infeasible(registry, &current, &plan, audit, user_id, date);
                    break;
                }
                round += 1;
                prompt = PromptSpec {
                    feedback: outcome.violations.clone(),
                    ..base_prompt.clone()
                };
            }
            Err(error) => {
                // Degrade to a scheduled-items-only day.
                audit.plan(user_id, date, format!("unavailable: {error}"));
                if matches!(error, ProposeError::Backend(_)) {
                    backend_failed = true;
                }
                break;
            }
        }
    }

    // (5) Apply the accepted plan.
    let drafts = std::mem::take(&mut accepted_plan.proposed_events);
    let plan_events: Vec<TransactionEvent> = {
        let mut seq = current.next_seq;
        drafts
            .into_iter()
            .map(|draft| {
                let event = draft.into_event(seq);
                seq += 1;
                event
            })
            .collect()
    };
    current = audit_apply(audit, user_id, date, &current, &plan_events, |_| {
        EventOrigin::Plan
    })?;
    accepted_events.extend(plan_events);

    // (6) Statement close.
    if is_statement_close_day(date) {
        let outcome = close_statement(&current, date, policy)?;
        let folded = audit_apply(
            audit,
            user_id,
            date,
            &current,
            &outcome.events,
            |e| match e.kind {
                EventKind::Payment => EventOrigin::ForcedHeadroom,
                _ => EventOrigin::Remediation,
            },
        )?;
        accepted_events.extend(outcome.events.iter().cloned());
        current = crate::ledger::roll_statement(&folded, date, policy);
        debug_assert_eq!(current, outcome.state);
    }

    // (7) Illiquidity termination.
    let terminated_illiquid = current.cash < policy.overdraft_allowance;
    if terminated_illiquid {
        current.terminated_illiquid = true;
        audit.termination(user_id, date, "illiquid");
    }

    // (8) Window update.
    window.push(WindowEntry {
        date,
        prompt_text: base_prompt.render(),
        plan_json: accepted_plan.to_wire_json(),
    });

    Ok(DayResult {
        state: current,
        accepted_events,
        terminated_illiquid,
        backend_failed,
    })
}

/// Simulates one user for the configured horizon or until illiquidity.
pub fn simulate_user(
    persona: &AugmentedPersona,
    config: &EngineConfig,
    registry: &RuleRegistry,
    source: &ProposalSource,
) -> Result<UserTrace, EngineError> {
    let policy = &config.rules.policy;
    let initial = init_state(
        &persona.user_id,
        &persona.user_financial_profile,
        config.start_date,
        policy,
    );
    let mut state = initial.clone();
    let mut rng = ChaCha12Rng::from_seed(derive_rng_seed(
        config.seed,
        fnv1a64(persona.user_id.as_bytes()),
    ));
    // Per-user horizon drawn before any simulation rng use, so enabling the
    // sampler shifts streams deterministically.
    let horizon_days = match config.horizon_days_range {
        Some((lo, hi)) => rand::Rng::gen_range(&mut rng, lo..=hi).min(config.max_days),
        None => config.max_days,
    };
    let mut window = ConversationWindow::new();
    let mut audit = AuditLog::new();
    let mut events = Vec::new();
    let mut snapshots = Vec::new();
    let mut termination = Termination::HorizonReached;
    let mut illiquid_date = None;
    let mut incomplete_backend = false;

    for day_index in 0..horizon_days {
        let result = simulate_day(
            persona,
            &state,
            source,
            registry,
            config,
            &mut rng,
            &mut window,
            &mut audit,
        )?;
        incomplete_backend |= result.backend_failed;
        events.extend(result.accepted_events);
        snapshots.push(DailySnapshot {
            date: result.state.current_date,
            state: result.state.clone(),
        });
        if result.terminated_illiquid {
            termination = Termination::Illiquid;
            illiquid_date = Some(result.state.current_date);
            break;
        }
        if day_index + 1 == horizon_days {
            audit.termination(
                &persona.user_id,
                result.state.current_date,
                "horizon_reached",
            );
            break;
        }
        state = advance_day(&result.state);
    }

    Ok(UserTrace {
        user_id: persona.user_id.clone(),
        events,
        snapshots,
        termination,
        illiquid_date,
        audit: audit.into_records(),
        incomplete_backend,
        initial_state: initial,
    })
}

// ---------------------------------------------------------------------------
// Corpus runner and run directory
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserSummary {
    pub user_id: String,
    pub termination: Termination,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub illiquid_date: Option<NaiveDate>,
    pub event_count: usize,
    pub exported_event_count: usize,
    pub days_simulated: usize,
    #[serde(default)]
    pub incomplete: bool,
}

/// Manifest written at the end of a run; enough to reproduce it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: EngineConfig,
    pub user_count: usize,
    pub illiquid_users: usize,
    pub total_events: usize,
    pub total_exported_events: usize,
    pub users: Vec<UserSummary>,
    pub output_files: Vec<String>,
    /// Wall-clock seconds; informational, never part of any hash.
    pub elapsed_secs: f64,
}

/// Simulates every persona and writes the run directory. Output bytes are a
/// pure function of (personas, config); `parallelism` only changes wall time.
pub fn run_corpus(
    personas: &[AugmentedPersona],
    config: &EngineConfig,
    source: &ProposalSource,
    parallelism: usize,
    out_dir: &Path,
) -> Result<(CorpusManifest, PathBuf), EngineError> {
    config.validate()?;
    let started = std::time::Instant::now();
    let registry = default_registry(&config.rules);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool");
    let traces: Result<Vec<UserTrace>, EngineError> = pool.install(|| {
        personas
            .par_iter()
            .map(|persona| simulate_user(persona, config, &registry, source))
            .collect()
    });
    let traces = traces?;

    let run_dir = out_dir.join(format!("{}-{}", config.config_hash(), config.seed));
    std::fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
    let manifest = write_run(&run_dir, personas, config, &traces, started.elapsed())?;
    Ok((manifest, run_dir))
}

fn write_jsonl<T: Serialize>(
    path: &Path,
    rows: impl Iterator<Item = T>,
) -> Result<(), EngineError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    for row in rows {
        let line = serde_json::to_string(&row).expect("row serializes");
        writeln!(file, "{line}").map_err(io_err(path))?;
    }
    file.flush().map_err(io_err(path))
}

/// Writes events.jsonl (canonically sorted by user_id then seq),
/// snapshots.jsonl, audit.jsonl, personas.jsonl, and manifest.json.
pub fn write_run(
    run_dir: &Path,
    personas: &[AugmentedPersona],
    config: &EngineConfig,
    traces: &[UserTrace],
    elapsed: std::time::Duration,
) -> Result<CorpusManifest, EngineError> {
    let mut exports: Vec<ExportEvent> = Vec::new();
    for trace in traces {
        for event in &trace.events {
            if event.kind.exportable() {
                exports.push(ExportEvent::from_event(&trace.user_id, event));
            }
        }
    }
    exports.sort_by(|a, b| (a.user_id.as_str(), a.seq).cmp(&(b.user_id.as_str(), b.seq)));
    write_jsonl(&run_dir.join("events.jsonl"), exports.iter())?;

    let mut sorted_traces: Vec<&UserTrace> = traces.iter().collect();
    sorted_traces.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    write_jsonl(
        &run_dir.join("snapshots.jsonl"),
        sorted_traces.iter().flat_map(|t| t.snapshots.iter()),
    )?;
    write_jsonl(
        &run_dir.join("audit.jsonl"),
        sorted_traces.iter().flat_map(|t| t.audit.iter()),
    )?;
    let mut sorted_personas: Vec<&AugmentedPersona> = personas.iter().collect();
    sorted_personas.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    write_jsonl(&run_dir.join("personas.jsonl"), sorted_personas.iter())?;

    let users: Vec<UserSummary> = sorted_traces
        .iter()
        .map(|t| UserSummary {
            user_id: t.user_id.clone(),
            termination: t.termination,
            illiquid_date: t.illiquid_date,
            event_count: t.events.len(),
            exported_event_count: t.events.iter().filter(|e| e.kind.exportable()).count(),
            days_simulated: t.snapshots.len(),
            incomplete: t.incomplete_backend,
        })
        .collect();
    let manifest = CorpusManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.config_hash(),
        seed: config.seed,
        config: config.clone(),
        user_count: traces.len(),
        illiquid_users: users
            .iter()
            .filter(|u| u.termination == Termination::Illiquid)
            .count(),
        total_events: users.iter().map(|u| u.event_count).sum(),
        total_exported_events: users.iter().map(|u| u.exported_event_count).sum(),
        users,
        output_files: vec![
            "events.jsonl".to_string(),
            "snapshots.jsonl".to_string(),
            "audit.jsonl".to_string(),
            "personas.jsonl".to_string(),
        ],
        elapsed_secs: elapsed.as_secs_f64(),
    };
    // Atomic manifest write marks the run complete.
    let tmp = run_dir.join("manifest.json.tmp");
    std::fs::write(
        &tmp,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, run_dir.join("manifest.json")).map_err(io_err(run_dir))?;
    Ok(manifest)
}

/// A run directory read back for replay, verification, tasks, or stats.
pub struct LoadedRun {
    pub manifest: CorpusManifest,
    pub events: Vec<ExportEvent>,
    pub snapshots: Vec<DailySnapshot>,
    pub audit_by_user: BTreeMap<String, Vec<AuditRecord>>,
    pub personas: Vec<AugmentedPersona>,
    pub initial_states: BTreeMap<String, LedgerState>,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, EngineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(line).map_err(|e| EngineError::MalformedRun {
                path: path.display().to_string(),
                detail: format!("line {}: {e}", i + 1),
            })?,
        );
    }
    Ok(rows)
}

pub fn load_run(run_dir: &Path) -> Result<LoadedRun, EngineError> {
    let manifest_path = run_dir.join("manifest.json");
    let manifest_text = std::fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: CorpusManifest =
        serde_json::from_str(&manifest_text).map_err(|e| EngineError::MalformedRun {
            path: manifest_path.display().to_string(),
            detail: e.to_string(),
        })?;
    let events: Vec<ExportEvent> = read_jsonl(&run_dir.join("events.jsonl"))?;
    let snapshots: Vec<DailySnapshot> = read_jsonl(&run_dir.join("snapshots.jsonl"))?;
    let audit: Vec<AuditRecord> = read_jsonl(&run_dir.join("audit.jsonl"))?;
    let personas: Vec<AugmentedPersona> = read_jsonl(&run_dir.join("personas.jsonl"))?;

    let mut audit_by_user: BTreeMap<String, Vec<AuditRecord>> = BTreeMap::new();
    for record in audit {
        audit_by_user
            .entry(record.user_id.clone())
            .or_default()
            .push(record);
    }
    let initial_states = personas
        .iter()
        .map(|p| {
            (
                p.user_id.clone(),
                init_state(
                    &p.user_id,
                    &p.user_financial_profile,
                    manifest.config.start_date,
                    &manifest.config.rules.policy,
                ),
            )
        })
        .collect();
    Ok(LoadedRun {
        manifest,
        events,
        snapshots,
        audit_by_user,
        personas,
        initial_states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::{bundled_sample_personas, synthesize_personas};

    fn small_config(days: u32, seed: u64) -> EngineConfig {
        let mut config = EngineConfig::default();
        config.max_days = days;
        config.seed = seed;
        config
    }

    #[test]
    fn ninety_day_run_is_reproducible_byte_for_byte() {
        let persona = &bundled_sample_personas()[0];
        let config = small_config(90, 7);
        let registry = default_registry(&config.rules);
        let source = ProposalSource::mock();
        let a = simulate_user(persona, &config, &registry, &source).unwrap();
        let b = simulate_user(persona, &config, &registry, &source).unwrap();
        assert_eq!(
            serde_json::to_string(&a.events).unwrap(),
            serde_json::to_string(&b.events).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&a.audit).unwrap(),
            serde_json::to_string(&b.audit).unwrap()
        );
        assert_eq!(a.final_state(), b.final_state());
    }

    #[test]
    fn monthly_subscription_posts_three_times_in_ninety_days() {
        let persona = &bundled_sample_personas()[0];
        let config = small_config(90, 3);
        let registry = default_registry(&config.rules);
        let source = ProposalSource::mock();
        let trace = simulate_user(persona, &config, &registry, &source).unwrap();
        let netflix = trace
            .events
            .iter()
            .filter(|e| e.merchant_name == "Netflix" && e.kind == EventKind::SubscriptionCharge)
            .count();
        assert_eq!(netflix, 3, "90 days from Jan 1 cover Jan/Feb/Mar the 25th");
    }

    #[test]
    fn quiet_day_changes_only_the_date() {
        // No schedules, no payday, no close, and a backend whose answer
        // never parses: the day degrades to scheduled-items-only, which here
        // means nothing at all.
        let mut persona = bundled_sample_personas()[0].clone();
        persona.user_financial_profile.subscriptions.clear();
        persona
            .user_financial_profile
            .recurring_variable_bills
            .clear();
        let mut config = small_config(2, 1);
        config.start_date = NaiveDate::from_ymd_opt(2024, 1, 2).unwrap();
        config.rules.random_event_prob = 0.0;
        let registry = default_registry(&config.rules);
        let state = init_state(
            &persona.user_id,
            &persona.user_financial_profile,
            config.start_date,
            &config.rules.policy,
        );
        let external = ProposalSource::External(crate::proposer::ExternalProposer::new(
            crate::backend::ExternalEndpointConfig {
                parse_retries: 0,
                ..Default::default()
            },
            std::sync::Arc::new(crate::backend::ScriptedTransport::new(vec![
                "nonsense".to_string()
            ])),
        ));
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut window = ConversationWindow::new();
        let mut audit = AuditLog::new();
        let result = simulate_day(
            &persona,
            &state,
            &external,
            &registry,
            &config,
            &mut rng,
            &mut window,
            &mut audit,
        )
        .unwrap();
        assert!(result.accepted_events.is_empty());
        assert_eq!(result.state.cash, state.cash);
        assert_eq!(result.state.credit_balance, state.credit_balance);
        assert_eq!(result.state.current_date, state.current_date);
    }

    #[test]
    fn stressed_preset_yields_illiquidity_and_affluent_none() {
        let personas = synthesize_personas(50, 99);
        let mut stressed = EngineConfig::stressed();
        stressed.max_days = 180;
        stressed.seed = 99;
        let mut affluent = EngineConfig::affluent();
        affluent.max_days = 180;
        affluent.seed = 99;
        let source = ProposalSource::mock_with(stressed.mock.clone());
        let registry = default_registry(&stressed.rules);
        let mut illiquid = 0;
        for persona in &personas {
            let trace = simulate_user(persona, &stressed, &registry, &source).unwrap();
            if trace.termination == Termination::Illiquid {
                illiquid += 1;
                let last = trace.final_state();
                assert!(last.cash < stressed.rules.policy.overdraft_allowance);
                assert_eq!(trace.illiquid_date, Some(last.current_date));
            }
        }
        assert!(illiquid >= 1, "stressed preset should strand someone");

        let source = ProposalSource::mock_with(affluent.mock.clone());
        let registry = default_registry(&affluent.rules);
        for persona in &personas {
            let trace = simulate_user(persona, &affluent, &registry, &source).unwrap();
            assert_eq!(
                trace.termination,
                Termination::HorizonReached,
                "affluent user {} went illiquid",
                persona.user_id
            );
        }
    }

    #[test]
    fn corpus_totals_match_user_sums_and_parallelism_is_invariant() {
        let personas = synthesize_personas(12, 5);
        let mut config = small_config(45, 5);
        config.rules.random_event_prob = 0.05;
        let source = ProposalSource::mock();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let (manifest_a, run_a) = run_corpus(&personas, &config, &source, 1, dir_a.path()).unwrap();
        let (manifest_b, run_b) = run_corpus(&personas, &config, &source, 8, dir_b.path()).unwrap();
        assert_eq!(manifest_a.config_hash, manifest_b.config_hash);
        assert_eq!(
            manifest_a.total_events,
            manifest_a
                .users
                .iter()
                .map(|u| u.event_count)
                .sum::<usize>()
        );
        let events_a = std::fs::read(run_a.join("events.jsonl")).unwrap();
        let events_b = std::fs::read(run_b.join("events.jsonl")).unwrap();
        assert_eq!(events_a, events_b, "parallelism must not change output");
        let audit_a = std::fs::read(run_a.join("audit.jsonl")).unwrap();
        let audit_b = std::fs::read(run_b.join("audit.jsonl")).unwrap();
        assert_eq!(audit_a, audit_b);
    }

    #[test]
    fn adding_personas_does_not_disturb_existing_traces() {
        // Per-user rng streams make corpora extensible: simulating a
        // superset of personas leaves the original traces byte-identical.
        let base = synthesize_personas(5, 61);
        let extended = synthesize_personas(8, 61);
        assert_eq!(&extended[..5], &base[..]);
        let config = small_config(40, 61);
        let source = ProposalSource::mock();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let (_, run_a) = run_corpus(&base, &config, &source, 2, dir_a.path()).unwrap();
        let (_, run_b) = run_corpus(&extended, &config, &source, 2, dir_b.path()).unwrap();
        let events_a = std::fs::read_to_string(run_a.join("events.jsonl")).unwrap();
        let events_b = std::fs::read_to_string(run_b.join("events.jsonl")).unwrap();
        let base_ids: std::collections::BTreeSet<&str> =
            base.iter().map(|p| p.user_id.as_str()).collect();
        let filtered: Vec<&str> = events_b
            .lines()
            .filter(|line| {
                let v: serde_json::Value = serde_json::from_str(line).unwrap();
                base_ids.contains(v["user_id"].as_str().unwrap())
            })
            .collect();
        assert_eq!(events_a.lines().collect::<Vec<_>>(), filtered);
    }

    #[test]
    fn horizon_sampler_varies_timespans_deterministically() {
        let personas = synthesize_personas(8, 21);
        let mut config = small_config(120, 21);
        config.horizon_days_range = Some((30, 120));
        let registry = default_registry(&config.rules);
        let source = ProposalSource::mock();
        let lengths: Vec<usize> = personas
            .iter()
            .map(|p| {
                simulate_user(p, &config, &registry, &source)
                    .unwrap()
                    .snapshots
                    .len()
            })
            .collect();
        let distinct: std::collections::BTreeSet<_> = lengths.iter().collect();
        assert!(distinct.len() > 1, "horizons should vary: {lengths:?}");
        assert!(lengths.iter().all(|l| (30..=120).contains(l)));
        let again: Vec<usize> = personas
            .iter()
            .map(|p| {
                simulate_user(p, &config, &registry, &source)
                    .unwrap()
                    .snapshots
                    .len()
            })
            .collect();
        assert_eq!(lengths, again);
    }

    #[test]
    fn repair_loop_rejects_then_accepts_with_stub_backend() {
        // Stub backend: first an overpayment, then a corrected plan.
        let persona = bundled_sample_personas()[0].clone();
        let mut config = small_config(1, 2);
        config.start_date = NaiveDate::from_ymd_opt(2024, 1, 2).unwrap();
        config.rules.random_event_prob = 0.0;
        let registry = default_registry(&config.rules);
        let policy = &config.rules.policy;
        let mut state = init_state(
            &persona.user_id,
            &persona.user_financial_profile,
            config.start_date,
            policy,
        );
        state.credit_balance = crate::money::Money::from_cents(5_000);
        let overpay = r#"{"transactions": [{"merchant_name": "Card Services",
            "merchant_type": "Credit Card Payment", "card_present_or_not": false,
            "amount": "60.00", "kind": "payment"}]}"#;
        let corrected = r#"{"transactions": [{"merchant_name": "Card Services",
            "merchant_type": "Credit Card Payment", "card_present_or_not": false,
            "amount": "50.00", "kind": "payment"}]}"#;
        let external = ProposalSource::External(crate::proposer::ExternalProposer::new(
            crate::backend::ExternalEndpointConfig::default(),
            std::sync::Arc::new(crate::backend::ScriptedTransport::new(vec![
                overpay.to_string(),
                corrected.to_string(),
            ])),
        ));
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut window = ConversationWindow::new();
        let mut audit = AuditLog::new();
        let result = simulate_day(
            &persona,
            &state,
            &external,
            &registry,
            &config,
            &mut rng,
            &mut window,
            &mut audit,
        )
        .unwrap();
        let rejections = audit
            .records()
            .iter()
            .filter(|r| r.kind == crate::audit::AuditKind::Rejection)
            .count();
        let plan_transitions = audit
            .records()
            .iter()
            .filter(|r| {
                r.kind == crate::audit::AuditKind::Transition && r.origin == Some(EventOrigin::Plan)
            })
            .count();
        assert_eq!(rejections, 1);
        assert_eq!(plan_transitions, 1);
        let payment = result
            .accepted_events
            .iter()
            .find(|e| e.kind == EventKind::Payment)
            .unwrap();
        assert_eq!(payment.amount, crate::money::Money::from_cents(-5_000));
    }

    #[test]
    fn repair_exhaustion_drops_only_offending_events() {
        let persona = bundled_sample_personas()[0].clone();
        let mut config = small_config(1, 2);
        config.start_date = NaiveDate::from_ymd_opt(2024, 1, 2).unwrap();
        config.repair_retries = 0;
        config.rules.random_event_prob = 0.0;
        let registry = default_registry(&config.rules);
        let state = init_state(
            &persona.user_id,
            &persona.user_financial_profile,
            config.start_date,
            &config.rules.policy,
        );
        // Plan: good purchase, impossible payment (nothing owed), good purchase.
        let stub_plan = r#"{"transactions": [
            {"merchant_name": "Kroger", "merchant_type": "Grocery Store",
             "card_present_or_not": true, "amount": "40.00", "kind": "purchase"},
            {"merchant_name": "Card Services", "merchant_type": "Credit Card Payment",
             "card_present_or_not": false, "amount": "999.00", "kind": "payment"},
            {"merchant_name": "Starbucks", "merchant_type": "Coffee Shop",
             "card_present_or_not": true, "amount": "6.00", "kind": "purchase"}
        ]}"#;
        let external = ProposalSource::External(crate::proposer::ExternalProposer::new(
            crate::backend::ExternalEndpointConfig::default(),
            std::sync::Arc::new(crate::backend::ScriptedTransport::new(vec![
                stub_plan.to_string()
            ])),
        ));
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut window = ConversationWindow::new();
        let mut audit = AuditLog::new();
        let result = simulate_day(
            &persona,
            &state,
            &external,
            &registry,
            &config,
            &mut rng,
            &mut window,
            &mut audit,
        )
        .unwrap();
        let plan_events: Vec<_> = result
            .accepted_events
            .iter()
            .filter(|e| e.kind == EventKind::Purchase)
            .collect();
        assert_eq!(plan_events.len(), 2, "both purchases survive");
        assert!(result
            .accepted_events
            .iter()
            .all(|e| e.kind != EventKind::Payment));
        let dropped = audit
            .records()
            .iter()
            .filter(|r| r.kind == crate::audit::AuditKind::Dropped)
            .count();
        assert_eq!(dropped, 1);
    }

    #[test]
    fn replay_reproduces_generated_traces_exactly() {
        let personas = synthesize_personas(4, 11);
        let mut config = small_config(90, 11);
        config.rules.random_event_prob = 0.08;
        let registry = default_registry(&config.rules);
        let source = ProposalSource::mock();
        for persona in &personas {
            let trace = simulate_user(persona, &config, &registry, &source).unwrap();
            let replayed =
                crate::audit::replay(&trace.audit, &trace.initial_state, &config.rules.policy)
                    .unwrap();
            assert_eq!(
                state_hash(&replayed),
                state_hash(trace.final_state()),
                "user {}",
                persona.user_id
            );
        }
    }

    #[test]
    fn replay_detects_a_flipped_byte() {
        let persona = &bundled_sample_personas()[0];
        let config = small_config(40, 13);
        let registry = default_registry(&config.rules);
        let source = ProposalSource::mock();
        let trace = simulate_user(persona, &config, &registry, &source).unwrap();
        let mut tampered = trace.audit.clone();
        let target = tampered
            .iter()
            .position(|r| {
                r.kind == crate::audit::AuditKind::Transition
                    && r.event.as_ref().is_some_and(|e| e.amount.cents() > 10)
            })
            .expect("trace has a transition");
        if let Some(event) = tampered[target].event.as_mut() {
            event.amount = crate::money::Money::from_cents(event.amount.cents() + 1);
        }
        let err = crate::audit::replay(&tampered, &trace.initial_state, &config.rules.policy)
            .unwrap_err();
        match err {
            crate::audit::ReplayError::Divergence { index, .. } => assert_eq!(index, target),
        }
    }
}
