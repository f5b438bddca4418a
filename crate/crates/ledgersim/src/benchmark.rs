//! Benchmark task builders: illiquidity classification windows,
//! identity-theft injection, user-level splits, and feature encoding.

use crate::engine::{Termination, UserSummary};
use crate::hash::{derive_rng_seed, fnv1a64};
use crate::ledger::ExportEvent;
use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskLabel {
    /// Will this user become illiquid after the window?
    Illiquidity { label: bool },
    /// Bit per event: true for injected donor events.
    IdentityTheft { labels: Vec<bool> },
}

/// One benchmark example: an n-month event window plus labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskExample {
    pub example_id: String,
    pub user_id: String,
    pub n_months: u32,
    pub window_start: NaiveDate,
    /// Last calendar day inside the window, inclusive.
    pub window_end: NaiveDate,
    pub events: Vec<ExportEvent>,
    #[serde(flatten)]
    pub label: TaskLabel,
}

impl TaskExample {
    pub fn is_positive(&self) -> bool {
        match &self.label {
            TaskLabel::Illiquidity { label } => *label,
            TaskLabel::IdentityTheft { labels } => labels.iter().any(|b| *b),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error("donor has no day with events inside the window")]
    InjectionInfeasible,
    #[error("split ratios must sum to 1, got {0}")]
    BadRatios(f64),
    #[error("{need} splits requested but only {have} users available")]
    TooFewUsers { need: usize, have: usize },
    #[error("{0}")]
    BadInput(String),
}

pub fn events_by_user(events: &[ExportEvent]) -> BTreeMap<String, Vec<ExportEvent>> {
    let mut map: BTreeMap<String, Vec<ExportEvent>> = BTreeMap::new();
    for event in events {
        map.entry(event.user_id.clone())
            .or_default()
            .push(event.clone());
    }
    for list in map.values_mut() {
        list.sort_by_key(|e| (e.timestamp, e.seq));
    }
    map
}

// ---------------------------------------------------------------------------
// Illiquidity classification
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Serialize)]
pub struct WindowingReport {
    pub users_processed: usize,
    pub users_skipped_short: usize,
    pub windows_excluded_overlap: usize,
    pub examples: usize,
    pub positives: usize,
}

/// Slides an `n_months` calendar window with `stride_days` over each user's
/// trace. A window is labeled positive iff the user's illiquid termination
/// falls within `horizon_days` after the window's last day (`None` means any
/// time after). Windows overlapping the illiquid date itself are excluded;
/// users whose traces fit no window are skipped and counted.
pub fn build_illiquidity_examples(
    events: &BTreeMap<String, Vec<ExportEvent>>,
    users: &[UserSummary],
    trace_start: NaiveDate,
    n_months: u32,
    horizon_days: Option<i64>,
    stride_days: i64,
) -> Result<(Vec<TaskExample>, WindowingReport), BenchmarkError> {
    if stride_days < 1 {
        return Err(BenchmarkError::BadInput(
            "stride_days must be >= 1".to_string(),
        ));
    }
    let mut examples = Vec::new();
    let mut report = WindowingReport::default();
    let empty = Vec::new();
    for user in users {
        report.users_processed += 1;
        let user_events = events.get(&user.user_id).unwrap_or(&empty);
        let trace_end = trace_start + Duration::days(user.days_simulated as i64 - 1);
        let illiquid_date = match user.termination {
            Termination::Illiquid => user.illiquid_date,
            Termination::HorizonReached => None,
        };
        let mut window_index = 0usize;
        let mut start = trace_start;
        let mut produced_any = false;
        loop {
            let window_end = crate::calendar::add_months_clamped(start, n_months, start.day())
                - Duration::days(1);
            if window_end > trace_end {
                break;
            }
            let excluded = illiquid_date.is_some_and(|d| d <= window_end);
            if excluded {
                report.windows_excluded_overlap += 1;
            } else {
                let label = match illiquid_date {
                    Some(d) => match horizon_days {
                        Some(h) => d > window_end && (d - window_end).num_days() <= h,
                        None => d > window_end,
                    },
                    None => false,
                };
                let window_events: Vec<ExportEvent> = user_events
                    .iter()
                    .filter(|e| {
                        let date = e.timestamp.date();
                        date >= start && date <= window_end
                    })
                    .cloned()
                    .collect();
                if label {
                    report.positives += 1;
                }
                examples.push(TaskExample {
                    example_id: format!("{}-ill-{:04}", user.user_id, window_index),
                    user_id: user.user_id.clone(),
                    n_months,
                    window_start: start,
                    window_end,
                    events: window_events,
                    label: TaskLabel::Illiquidity { label },
                });
                produced_any = true;
            }
            window_index += 1;
            start += Duration::days(stride_days);
        }
        if !produced_any {
            report.users_skipped_short += 1;
        }
    }
    report.examples = examples.len();
    Ok((examples, report))
}

// ---------------------------------------------------------------------------
// Identity-theft injection
// ---------------------------------------------------------------------------

/// One user's n-month window of events, ready for injection.
#[derive(Debug, Clone)]
pub struct UserWindow {
    pub user_id: String,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub events: Vec<ExportEvent>,
}

impl UserWindow {
    pub fn slice(
        user_id: &str,
        events: &[ExportEvent],
        window_start: NaiveDate,
        n_months: u32,
    ) -> UserWindow {
        let window_end =
            crate::calendar::add_months_clamped(window_start, n_months, window_start.day())
                - Duration::days(1);
        UserWindow {
            user_id: user_id.to_string(),
            window_start,
            window_end,
            events: events
                .iter()
                .filter(|e| {
                    let d = e.timestamp.date();
                    d >= window_start && d <= window_end
                })
                .cloned()
                .collect(),
        }
    }
}

/// Splices one donor day into the primary window.
///
/// A target day is drawn uniformly inside the primary window; a donor day is
/// drawn uniformly over the donor's non-empty days. Donor events are re-dated
/// to the target day keeping their times and order, relabeled with the
/// primary's user id, and merged by timestamp with ties placing donor events
/// after primary ones. Primary events pass through byte-unchanged.
pub fn inject_identity_theft(
    primary: &UserWindow,
    donor: &UserWindow,
    n_months: u32,
    injection_index: usize,
    rng: &mut ChaCha12Rng,
) -> Result<TaskExample, BenchmarkError> {
    assert_ne!(
        primary.user_id, donor.user_id,
        "donor must differ from primary"
    );
    let mut donor_days: Vec<NaiveDate> = donor.events.iter().map(|e| e.timestamp.date()).collect();
    donor_days.sort();
    donor_days.dedup();
    if donor_days.is_empty() {
        return Err(BenchmarkError::InjectionInfeasible);
    }

    let span_days = (primary.window_end - primary.window_start).num_days() + 1;
    let target_day = primary.window_start + Duration::days(rng.gen_range(0..span_days));
    let donor_day = donor_days[rng.gen_range(0..donor_days.len())];

    let redated: Vec<ExportEvent> = donor
        .events
        .iter()
        .filter(|e| e.timestamp.date() == donor_day)
        .map(|e| {
            let mut event = e.clone();
            event.timestamp = target_day.and_time(e.timestamp.time());
            event.user_id = primary.user_id.clone();
            event
        })
        .collect();

    // Merge: primary events keep their relative order, donor events keep
    // theirs, timestamp ties sort donor after primary.
    let mut merged: Vec<(ExportEvent, bool, usize)> = primary
        .events
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, e)| (e, false, i))
        .chain(redated.into_iter().enumerate().map(|(i, e)| (e, true, i)))
        .collect();
    merged.sort_by_key(|entry| (entry.0.timestamp, entry.1, entry.2));

    let labels: Vec<bool> = merged.iter().map(|(_, is_donor, _)| *is_donor).collect();
    let events: Vec<ExportEvent> = merged.into_iter().map(|(e, _, _)| e).collect();
    Ok(TaskExample {
        example_id: format!("{}-theft-{:04}", primary.user_id, injection_index),
        user_id: primary.user_id.clone(),
        n_months,
        window_start: primary.window_start,
        window_end: primary.window_end,
        events,
        label: TaskLabel::IdentityTheft { labels },
    })
}

/// Removes labeled events, recovering the primary window.
pub fn strip_injected(example: &TaskExample) -> Vec<ExportEvent> {
    match &example.label {
        TaskLabel::IdentityTheft { labels } => example
            .events
            .iter()
            .zip(labels)
            .filter(|(_, is_donor)| !**is_donor)
            .map(|(e, _)| e.clone())
            .collect(),
        TaskLabel::Illiquidity { .. } => example.events.clone(),
    }
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct Split {
    pub name: String,
    pub user_ids: Vec<String>,
    pub examples: Vec<TaskExample>,
    pub positive_rate: f64,
}

/// Splits examples by user id (no user straddles splits), deterministically
/// under `seed`, using largest-remainder apportionment of users.
pub fn split(
    examples: Vec<TaskExample>,
    named_ratios: &[(&str, f64)],
    seed: u64,
) -> Result<Vec<Split>, BenchmarkError> {
    let total: f64 = named_ratios.iter().map(|(_, r)| r).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(BenchmarkError::BadRatios(total));
    }
    let mut users: Vec<String> = examples
        .iter()
        .map(|e| e.user_id.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if users.len() < named_ratios.len() {
        return Err(BenchmarkError::TooFewUsers {
            need: named_ratios.len(),
            have: users.len(),
        });
    }
    let mut rng = ChaCha12Rng::from_seed(derive_rng_seed(seed, 0x5317));
    users.shuffle(&mut rng);

    // Largest remainder keeps counts exact: 10 users at 80/20 gives 8/2.
    let n = users.len();
    let mut counts: Vec<usize> = named_ratios
        .iter()
        .map(|(_, r)| (r * n as f64).floor() as usize)
        .collect();
    let mut remainders: Vec<(usize, f64)> = named_ratios
        .iter()
        .enumerate()
        .map(|(i, (_, r))| (i, r * n as f64 - counts[i] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut leftover = n - counts.iter().sum::<usize>();
    for (i, _) in remainders {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }

    let mut by_user: BTreeMap<String, Vec<TaskExample>> = BTreeMap::new();
    for example in examples {
        by_user
            .entry(example.user_id.clone())
            .or_default()
            .push(example);
    }
    let mut splits = Vec::new();
    let mut cursor = 0usize;
    for ((name, _), count) in named_ratios.iter().zip(counts) {
        let mut user_ids: Vec<String> = users[cursor..cursor + count].to_vec();
        cursor += count;
        user_ids.sort();
        let mut part: Vec<TaskExample> = Vec::new();
        for user_id in &user_ids {
            if let Some(list) = by_user.get(user_id) {
                part.extend(list.iter().cloned());
            }
        }
        let positives = part.iter().filter(|e| e.is_positive()).count();
        let positive_rate = if part.is_empty() {
            0.0
        } else {
            positives as f64 / part.len() as f64
        };
        splits.push(Split {
            name: name.to_string(),
            user_ids,
            examples: part,
            positive_rate,
        });
    }
    Ok(splits)
}

// ---------------------------------------------------------------------------
// Vocabulary and encoding
// ---------------------------------------------------------------------------

/// Frequency-based one-hot vocabulary built from training events only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocab {
    pub threshold: u64,
    pub name_index: BTreeMap<String, usize>,
    pub type_index: BTreeMap<String, usize>,
    /// Unknown buckets occupy the last index of each block.
    pub name_unknown: usize,
    pub type_unknown: usize,
}

impl Vocab {
    pub fn name_dims(&self) -> usize {
        self.name_index.len() + 1
    }

    pub fn type_dims(&self) -> usize {
        self.type_index.len() + 1
    }

    /// name block + type block + card bit + sgn_log_amount.
    pub fn total_dims(&self) -> usize {
        self.name_dims() + self.type_dims() + 2
    }
}

fn rank_by_frequency(counts: BTreeMap<String, u64>, threshold: u64) -> BTreeMap<String, usize> {
    let mut kept: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c > threshold).collect();
    // Descending frequency, ties broken lexicographically ascending.
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    kept.into_iter()
        .enumerate()
        .map(|(i, (k, _))| (k, i))
        .collect()
}

/// Categories with a training frequency strictly above `threshold` receive
/// unique indices (descending frequency, ties lexicographic); the rest share
/// the unknown bucket.
pub fn build_vocab(train_events: &[ExportEvent], threshold: u64) -> Vocab {
    let mut name_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut type_counts: BTreeMap<String, u64> = BTreeMap::new();
    for event in train_events {
        *name_counts.entry(event.merchant_name.clone()).or_default() += 1;
        *type_counts.entry(event.merchant_type.clone()).or_default() += 1;
    }
    let name_index = rank_by_frequency(name_counts, threshold);
    let type_index = rank_by_frequency(type_counts, threshold);
    let name_unknown = name_index.len();
    let type_unknown = type_index.len();
    Vocab {
        threshold,
        name_index,
        type_index,
        name_unknown,
        type_unknown,
    }
}

/// Sign-preserving log compression of a dollar amount.
pub fn sgn_log_amount(dollars: f64) -> f64 {
    if dollars == 0.0 {
        0.0
    } else {
        dollars.signum() * dollars.abs().ln_1p()
    }
}

/// Sparse feature vector; densify with [`FeatureVector::to_dense`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub name_hot: usize,
    pub type_hot: usize,
    pub card_present: bool,
    pub sgn_log_amount: f64,
    pub name_dims: usize,
    pub type_dims: usize,
}

impl FeatureVector {
    pub fn total_dims(&self) -> usize {
        self.name_dims + self.type_dims + 2
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut row = vec![0.0; self.total_dims()];
        row[self.name_hot] = 1.0;
        row[self.name_dims + self.type_hot] = 1.0;
        row[self.name_dims + self.type_dims] = if self.card_present { 1.0 } else { 0.0 };
        row[self.name_dims + self.type_dims + 1] = self.sgn_log_amount;
        row
    }
}

/// One-hot blocks for merchant name and type (unknowns bucketed), the
/// card-present bit, and the compressed signed amount.
pub fn encode_event(event: &ExportEvent, vocab: &Vocab) -> FeatureVector {
    let name_hot = *vocab
        .name_index
        .get(&event.merchant_name)
        .unwrap_or(&vocab.name_unknown);
    let type_hot = *vocab
        .type_index
        .get(&event.merchant_type)
        .unwrap_or(&vocab.type_unknown);
    let dollars = event.amount_money().to_f64_dollars();
    FeatureVector {
        name_hot,
        type_hot,
        card_present: event.card_present_or_not,
        sgn_log_amount: sgn_log_amount(dollars),
        name_dims: vocab.name_dims(),
        type_dims: vocab.type_dims(),
    }
}

pub fn example_id_hash(example: &TaskExample) -> u64 {
    fnv1a64(example.example_id.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::EventKind;
    use chrono::NaiveTime;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn event(
        user: &str,
        seq: u64,
        date: NaiveDate,
        hm: (u32, u32),
        name: &str,
        amount: &str,
    ) -> ExportEvent {
        ExportEvent {
            user_id: user.to_string(),
            seq,
            timestamp: date.and_time(NaiveTime::from_hms_opt(hm.0, hm.1, 0).unwrap()),
            merchant_name: name.to_string(),
            merchant_type: format!("{name} Type"),
            card_present_or_not: true,
            amount: amount.to_string(),
            kind: EventKind::Purchase,
        }
    }

    fn summary(user: &str, days: usize, illiquid: Option<NaiveDate>) -> UserSummary {
        UserSummary {
            user_id: user.to_string(),
            termination: if illiquid.is_some() {
                Termination::Illiquid
            } else {
                Termination::HorizonReached
            },
            illiquid_date: illiquid,
            event_count: 0,
            exported_event_count: 0,
            days_simulated: days,
            incomplete: false,
        }
    }

    #[test]
    fn illiquidity_labels_follow_the_horizon() {
        let start = d(2024, 1, 1);
        // Window 1: Jan 1 .. Mar 31; illiquid Apr 10 (10 days after).
        let users = vec![summary("ua", 130, Some(d(2024, 4, 10)))];
        let events = BTreeMap::new();
        let (examples, _) =
            build_illiquidity_examples(&events, &users, start, 3, Some(30), 30).unwrap();
        let first = &examples[0];
        assert_eq!(first.window_end, d(2024, 3, 31));
        assert_eq!(first.label, TaskLabel::Illiquidity { label: true });

        // Horizon 5 days: termination at +10 is outside.
        let (examples, _) =
            build_illiquidity_examples(&events, &users, start, 3, Some(5), 30).unwrap();
        assert_eq!(examples[0].label, TaskLabel::Illiquidity { label: false });

        // Never-illiquid user: all labels false.
        let users = vec![summary("ub", 365, None)];
        let (examples, _) =
            build_illiquidity_examples(&events, &users, start, 3, None, 30).unwrap();
        assert!(!examples.is_empty());
        assert!(examples.iter().all(|e| !e.is_positive()));
    }

    #[test]
    fn windows_overlapping_the_illiquid_date_are_excluded() {
        let start = d(2024, 1, 1);
        let users = vec![summary("ua", 200, Some(d(2024, 2, 15)))];
        let events = BTreeMap::new();
        let (examples, report) =
            build_illiquidity_examples(&events, &users, start, 3, None, 30).unwrap();
        assert!(examples.is_empty());
        assert!(report.windows_excluded_overlap > 0);
    }

    #[test]
    fn short_traces_are_skipped_and_counted() {
        let start = d(2024, 1, 1);
        let users = vec![summary("ua", 30, None)];
        let events = BTreeMap::new();
        let (examples, report) =
            build_illiquidity_examples(&events, &users, start, 3, None, 30).unwrap();
        assert!(examples.is_empty());
        assert_eq!(report.users_skipped_short, 1);
    }

    fn window_with(user: &str, events: Vec<ExportEvent>) -> UserWindow {
        UserWindow {
            user_id: user.to_string(),
            window_start: d(2024, 1, 1),
            window_end: d(2024, 3, 31),
            events,
        }
    }

    #[test]
    fn injection_labels_match_donor_events_exactly() {
        let primary = window_with(
            "ua",
            vec![
                event("ua", 0, d(2024, 1, 5), (9, 0), "Kroger", "20.00"),
                event("ua", 1, d(2024, 2, 10), (12, 0), "Shell", "40.00"),
            ],
        );
        let donor = window_with(
            "ub",
            vec![
                event("ub", 0, d(2024, 1, 20), (10, 0), "Best Buy", "300.00"),
                event("ub", 1, d(2024, 1, 20), (10, 30), "Starbucks", "6.00"),
                event("ub", 2, d(2024, 1, 20), (11, 0), "Steam", "30.00"),
                event("ub", 3, d(2024, 1, 20), (15, 0), "Uber", "18.00"),
            ],
        );
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let example = inject_identity_theft(&primary, &donor, 3, 0, &mut rng).unwrap();
        let TaskLabel::IdentityTheft { labels } = &example.label else {
            panic!("wrong label kind")
        };
        assert_eq!(labels.len(), example.events.len());
        assert_eq!(labels.iter().filter(|b| **b).count(), 4);
        // Donor events keep their intra-day order after re-dating.
        let donor_names: Vec<&str> = example
            .events
            .iter()
            .zip(labels)
            .filter(|(_, is_donor)| **is_donor)
            .map(|(e, _)| e.merchant_name.as_str())
            .collect();
        assert_eq!(donor_names, vec!["Best Buy", "Starbucks", "Steam", "Uber"]);
        // All injected events landed on one day, relabeled to the primary.
        let donor_dates: std::collections::BTreeSet<NaiveDate> = example
            .events
            .iter()
            .zip(labels)
            .filter(|(_, is_donor)| **is_donor)
            .map(|(e, _)| e.timestamp.date())
            .collect();
        assert_eq!(donor_dates.len(), 1);
        assert!(example.events.iter().all(|e| e.user_id == "ua"));
    }

    #[test]
    fn stripping_labeled_events_recovers_the_primary_bytes() {
        let primary = window_with(
            "ua",
            vec![
                event("ua", 0, d(2024, 1, 5), (9, 0), "Kroger", "20.00"),
                event("ua", 1, d(2024, 1, 5), (9, 30), "Shell", "40.00"),
                event("ua", 2, d(2024, 3, 1), (18, 0), "AMC Theatres", "29.00"),
            ],
        );
        let donor = window_with(
            "ub",
            vec![
                event("ub", 0, d(2024, 2, 2), (9, 0), "Best Buy", "300.00"),
                event("ub", 1, d(2024, 2, 2), (9, 30), "Uber", "18.00"),
            ],
        );
        for seed in 0..50u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let example = inject_identity_theft(&primary, &donor, 3, 0, &mut rng).unwrap();
            let stripped = strip_injected(&example);
            assert_eq!(
                serde_json::to_string(&stripped).unwrap(),
                serde_json::to_string(&primary.events).unwrap(),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn empty_donor_is_infeasible() {
        let primary = window_with(
            "ua",
            vec![event("ua", 0, d(2024, 1, 5), (9, 0), "Kroger", "20.00")],
        );
        let donor = window_with("ub", Vec::new());
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(matches!(
            inject_identity_theft(&primary, &donor, 3, 0, &mut rng),
            Err(BenchmarkError::InjectionInfeasible)
        ));
    }

    fn example_for(user: &str, idx: usize, positive: bool) -> TaskExample {
        TaskExample {
            example_id: format!("{user}-{idx}"),
            user_id: user.to_string(),
            n_months: 3,
            window_start: d(2024, 1, 1),
            window_end: d(2024, 3, 31),
            events: Vec::new(),
            label: TaskLabel::Illiquidity { label: positive },
        }
    }

    #[test]
    fn split_counts_and_user_exclusivity() {
        let mut examples = Vec::new();
        for u in 0..10 {
            for k in 0..3 {
                examples.push(example_for(&format!("user{u:02}"), k, u % 4 == 0));
            }
        }
        let splits = split(examples.clone(), &[("train", 0.8), ("test", 0.2)], 9).unwrap();
        assert_eq!(splits[0].user_ids.len(), 8);
        assert_eq!(splits[1].user_ids.len(), 2);
        for a in &splits[0].user_ids {
            assert!(!splits[1].user_ids.contains(a), "user straddles splits");
        }
        let again = split(examples, &[("train", 0.8), ("test", 0.2)], 9).unwrap();
        assert_eq!(splits[0].user_ids, again[0].user_ids);
    }

    #[test]
    fn bad_ratios_are_rejected() {
        assert!(matches!(
            split(
                vec![example_for("u", 0, false)],
                &[("a", 0.5), ("b", 0.2)],
                0
            ),
            Err(BenchmarkError::BadRatios(_))
        ));
    }

    #[test]
    fn vocab_threshold_and_tie_breaks() {
        let mut events = Vec::new();
        for (name, copies) in [("Alpha", 3), ("Beta", 3), ("Gamma", 1)] {
            for i in 0..copies {
                events.push(event("u", i as u64, d(2024, 1, 1), (9, i), name, "1.00"));
            }
        }
        // threshold 0: everything indexed
        let vocab = build_vocab(&events, 0);
        assert_eq!(vocab.name_index.len(), 3);
        // frequency tie Alpha/Beta: lexicographically smaller gets index 0
        assert_eq!(vocab.name_index["Alpha"], 0);
        assert_eq!(vocab.name_index["Beta"], 1);
        assert_eq!(vocab.name_index["Gamma"], 2);
        // "more than" is strict
        let vocab = build_vocab(&events, 2);
        assert_eq!(vocab.name_index.len(), 2);
        assert!(!vocab.name_index.contains_key("Gamma"));
        let vocab = build_vocab(&events, 3);
        assert!(vocab.name_index.is_empty());
    }

    #[test]
    fn encoding_matches_the_formula() {
        let vocab = build_vocab(&[event("u", 0, d(2024, 1, 1), (9, 0), "Kroger", "1.00")], 0);
        let zero = event("u", 1, d(2024, 1, 1), (9, 0), "Kroger", "0.00");
        assert_eq!(encode_event(&zero, &vocab).sgn_log_amount, 0.0);
        let hundred = event("u", 2, d(2024, 1, 1), (9, 0), "Kroger", "100.00");
        let encoded = encode_event(&hundred, &vocab).sgn_log_amount;
        assert!((encoded - 4.61512051684126).abs() < 1e-11, "{encoded}");
        let negative = event("u", 3, d(2024, 1, 1), (9, 0), "Kroger", "-100.00");
        assert_eq!(encode_event(&negative, &vocab).sgn_log_amount, -encoded);
    }

    proptest::proptest! {
        #[test]
        fn sgn_log_is_odd_and_monotone(a in -1.0e9f64..1.0e9, b in -1.0e9f64..1.0e9) {
            proptest::prop_assert_eq!(sgn_log_amount(-a), -sgn_log_amount(a));
            if a.abs() != b.abs() {
                let (small, large) = if a.abs() < b.abs() { (a, b) } else { (b, a) };
                proptest::prop_assert!(
                    sgn_log_amount(small.abs()) < sgn_log_amount(large.abs())
                );
            }
        }
    }

    #[test]
    fn one_hot_blocks_have_exactly_one_bit() {
        let train = vec![
            event("u", 0, d(2024, 1, 1), (9, 0), "Kroger", "10.00"),
            event("u", 1, d(2024, 1, 1), (9, 5), "Shell", "30.00"),
        ];
        let vocab = build_vocab(&train, 0);
        let unknown = event("u", 2, d(2024, 1, 2), (9, 0), "Mystery Shop", "5.00");
        for e in train.iter().chain([&unknown]) {
            let dense = encode_event(e, &vocab).to_dense();
            assert_eq!(dense.len(), vocab.total_dims());
            let name_hot: f64 = dense[..vocab.name_dims()].iter().sum();
            let type_hot: f64 = dense[vocab.name_dims()..vocab.name_dims() + vocab.type_dims()]
                .iter()
                .sum();
            assert_eq!(name_hot, 1.0);
            assert_eq!(type_hot, 1.0);
        }
    }
}
