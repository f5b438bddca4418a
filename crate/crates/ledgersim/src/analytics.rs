//! Corpus statistics: group-by spending tables, credit-utilization series,
//! and the summary table. Everything recomputes from the exported event
//! stream plus run metadata; there is no hidden state.

use crate::engine::{DailySnapshot, Termination, UserSummary};
use crate::ledger::{EventKind, ExportEvent};
use crate::persona::AugmentedPersona;
use chrono::{Datelike, NaiveDate};
use serde::Serialize;
use std::collections::BTreeMap;

/// Mean and population standard deviation, two-pass, left-to-right.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mut total = 0.0;
    for v in values {
        total += v;
    }
    let mean = total / n;
    let mut sq = 0.0;
    for v in values {
        sq += (v - mean) * (v - mean);
    }
    (mean, (sq / n).sqrt())
}

/// Linear-interpolation quantile over an unsorted slice, computed with
/// selection rather than a full sort.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&q));
    let mut scratch: Vec<f64> = values.to_vec();
    let position = q * (scratch.len() - 1) as f64;
    let lower = position.floor() as usize;
    let upper = position.ceil() as usize;
    let (_, lower_value, _) =
        scratch.select_nth_unstable_by(lower, |a, b| a.partial_cmp(b).unwrap());
    let lower_value = *lower_value;
    if lower == upper {
        return lower_value;
    }
    let (_, upper_value, _) =
        scratch.select_nth_unstable_by(upper, |a, b| a.partial_cmp(b).unwrap());
    let upper_value = *upper_value;
    lower_value + (position - lower as f64) * (upper_value - lower_value)
}

/// One row of the distribution table.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DistRow {
    pub label: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub max: f64,
}

impl DistRow {
    pub fn from_values(label: &str, values: &[f64]) -> DistRow {
        if values.is_empty() {
            return DistRow {
                label: label.to_string(),
                count: 0,
                mean: 0.0,
                std: 0.0,
                min: 0.0,
                q25: 0.0,
                q50: 0.0,
                q75: 0.0,
                max: 0.0,
            };
        }
        let (mean, std) = mean_std(values);
        DistRow {
            label: label.to_string(),
            count: values.len(),
            mean,
            std,
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            q25: quantile(values, 0.25),
            q50: quantile(values, 0.50),
            q75: quantile(values, 0.75),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupRow {
    pub group: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupTable {
    pub key: String,
    /// What one observation is: user-month spend or user-day spend.
    pub observation: String,
    pub rows: Vec<GroupRow>,
}

impl GroupTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},count,mean,std\n", self.key);
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6}\n",
                row.group, row.count, row.mean, row.std
            ));
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error("unknown group key {0:?}")]
    UnknownKey(String),
}

pub const GROUP_KEYS: [&str; 7] = [
    "education_level",
    "car_ownership",
    "age_bucket",
    "spending_pattern",
    "month",
    "weekday",
    "holiday",
];

/// True for events that count as consumer spending: positive amounts
/// excluding interest and fees.
fn is_spending(event: &ExportEvent) -> bool {
    matches!(
        event.kind,
        EventKind::Purchase | EventKind::SubscriptionCharge | EventKind::RecurringBill
    ) && !event.amount.starts_with('-')
}

fn age_bucket(age: u32) -> &'static str {
    match age {
        0..=29 => "18-29",
        30..=39 => "30-39",
        40..=49 => "40-49",
        50..=59 => "50-59",
        60..=69 => "60-69",
        _ => "70+",
    }
}

/// Monthly spend observations per user: (user, year-month) -> dollars.
fn monthly_spend(events: &[ExportEvent]) -> BTreeMap<(String, String), f64> {
    let mut map: BTreeMap<(String, String), f64> = BTreeMap::new();
    for event in events.iter().filter(|e| is_spending(e)) {
        let date = event.timestamp.date();
        let key = (
            event.user_id.clone(),
            format!("{:04}-{:02}", date.year(), date.month()),
        );
        *map.entry(key).or_default() += event.amount_money().to_f64_dollars();
    }
    map
}

/// Daily spend observations per user: (user, date) -> dollars.
fn daily_spend(events: &[ExportEvent]) -> BTreeMap<(String, NaiveDate), f64> {
    let mut map: BTreeMap<(String, NaiveDate), f64> = BTreeMap::new();
    for event in events.iter().filter(|e| is_spending(e)) {
        let key = (event.user_id.clone(), event.timestamp.date());
        *map.entry(key).or_default() += event.amount_money().to_f64_dollars();
    }
    map
}

/// Average spending grouped by a persona attribute (monthly observations) or
/// a temporal feature (monthly for `month`, daily for `weekday`/`holiday`).
pub fn group_stats(
    events: &[ExportEvent],
    personas: &[AugmentedPersona],
    key: &str,
) -> Result<GroupTable, AnalyticsError> {
    let persona_by_id: BTreeMap<&str, &AugmentedPersona> =
        personas.iter().map(|p| (p.user_id.as_str(), p)).collect();
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let observation;
    match key {
        "education_level" | "car_ownership" | "age_bucket" | "spending_pattern" => {
            observation = "user-month spend";
            for ((user_id, _), dollars) in monthly_spend(events) {
                let Some(persona) = persona_by_id.get(user_id.as_str()) else {
                    continue;
                };
                let group = match key {
                    "education_level" => persona.user_persona.education_level.clone(),
                    "car_ownership" => persona.user_financial_profile.car_ownership.clone(),
                    "age_bucket" => age_bucket(persona.user_persona.age).to_string(),
                    _ => persona.user_financial_profile.archetype().to_string(),
                };
                groups.entry(group).or_default().push(dollars);
            }
        }
        "month" => {
            observation = "user-month spend";
            for ((_, month), dollars) in monthly_spend(events) {
                let label = month[5..].to_string();
                groups.entry(label).or_default().push(dollars);
            }
        }
        "weekday" => {
            observation = "user-day spend";
            for ((_, date), dollars) in daily_spend(events) {
                groups
                    .entry(date.weekday().to_string())
                    .or_default()
                    .push(dollars);
            }
        }
        "holiday" => {
            observation = "user-day spend";
            for ((_, date), dollars) in daily_spend(events) {
                let label = if crate::calendar::is_holiday(date) {
                    "holiday"
                } else {
                    "non-holiday"
                };
                groups.entry(label.to_string()).or_default().push(dollars);
            }
        }
        other => return Err(AnalyticsError::UnknownKey(other.to_string())),
    }
    let rows = groups
        .into_iter()
        .map(|(group, values)| {
            let (mean, std) = mean_std(&values);
            GroupRow {
                group,
                count: values.len(),
                mean,
                std,
            }
        })
        .collect();
    Ok(GroupTable {
        key: key.to_string(),
        observation: observation.to_string(),
        rows,
    })
}

/// Credit utilization (balance / limit) per simulated day, from end-of-day
/// snapshots. Values stay in [0, 1] because the ledger bounds the balance.
pub fn credit_utilization_series(snapshots: &[DailySnapshot]) -> Vec<(NaiveDate, f64)> {
    snapshots
        .iter()
        .map(|snap| {
            let limit = snap.state.credit_limit.cents() as f64;
            let balance = snap.state.credit_balance.cents() as f64;
            (snap.date, balance / limit)
        })
        .collect()
}

/// Summary mirroring the corpus statistics table: event counts by kind,
/// merchant coverage, user terminations, and distribution rows.
#[derive(Debug, Serialize)]
pub struct StatsReport {
    pub kind_counts: Vec<(String, usize, f64)>,
    pub merchants_total: usize,
    pub merchants_over_threshold: usize,
    pub merchant_frequency_threshold: u64,
    pub normal_users: usize,
    pub illiquid_users: usize,
    pub distributions: Vec<DistRow>,
}

impl StatsReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("corpus summary\n==============\n");
        out.push_str("events by kind:\n");
        for (kind, count, pct) in &self.kind_counts {
            out.push_str(&format!("  {kind:<24} {count:>9}  {pct:>6.2}%\n"));
        }
        out.push_str(&format!(
            "merchant names: {} total, {} with frequency > {}\n",
            self.merchants_total, self.merchants_over_threshold, self.merchant_frequency_threshold
        ));
        out.push_str(&format!(
            "users: {} normal, {} illiquid\n",
            self.normal_users, self.illiquid_users
        ));
        out.push_str(
            "\ndistribution                     count       mean        std        min        25%        50%        75%        max\n",
        );
        for row in &self.distributions {
            out.push_str(&format!(
                "{:<30} {:>7} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>10.2}\n",
                row.label,
                row.count,
                row.mean,
                row.std,
                row.min,
                row.q25,
                row.q50,
                row.q75,
                row.max
            ));
        }
        out.push_str(
            "\nreference (large published corpus, comparison only): payments 6.2%, recurring subscriptions 13.9%, illiquid users 5.7%\n",
        );
        out
    }

    pub fn distributions_csv(&self) -> String {
        let mut out = String::from("label,count,mean,std,min,q25,q50,q75,max\n");
        for r in &self.distributions {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.label, r.count, r.mean, r.std, r.min, r.q25, r.q50, r.q75, r.max
            ));
        }
        out
    }
}

pub fn summary(
    events: &[ExportEvent],
    users: &[UserSummary],
    merchant_frequency_threshold: u64,
) -> StatsReport {
    let mut kind_counts: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut merchant_counts: BTreeMap<&str, u64> = BTreeMap::new();
    for event in events {
        *kind_counts.entry(event.kind.label()).or_default() += 1;
        *merchant_counts
            .entry(event.merchant_name.as_str())
            .or_default() += 1;
    }
    let total = events.len().max(1);
    let display_order = [
        ("daily transactions", "purchase"),
        ("payments", "payment"),
        ("recurring subscriptions", "subscription_charge"),
        ("recurring bills", "recurring_bill"),
        ("interest", "interest"),
        ("fees", "fee"),
        ("cancellations", "cancel_subscription"),
    ];
    let kind_rows: Vec<(String, usize, f64)> = display_order
        .iter()
        .map(|(label, kind)| {
            let count = kind_counts.get(kind).copied().unwrap_or(0);
            (
                label.to_string(),
                count,
                100.0 * count as f64 / total as f64,
            )
        })
        .collect();

    let timespans: Vec<f64> = users.iter().map(|u| u.days_simulated as f64).collect();
    let per_user: Vec<f64> = users
        .iter()
        .map(|u| u.exported_event_count as f64)
        .collect();
    let mut per_month_counts: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut txn_amounts: Vec<f64> = Vec::new();
    let mut txn_monthly: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut pay_amounts: Vec<f64> = Vec::new();
    let mut pay_monthly: BTreeMap<(String, String), f64> = BTreeMap::new();
    for event in events {
        let date = event.timestamp.date();
        let month_key = (
            event.user_id.clone(),
            format!("{:04}-{:02}", date.year(), date.month()),
        );
        *per_month_counts.entry(month_key.clone()).or_default() += 1.0;
        let dollars = event.amount_money().to_f64_dollars();
        if dollars >= 0.0 {
            txn_amounts.push(dollars);
            *txn_monthly.entry(month_key).or_default() += dollars;
        } else {
            pay_amounts.push(-dollars);
            *pay_monthly.entry(month_key).or_default() += -dollars;
        }
    }
    let collect = |m: BTreeMap<(String, String), f64>| -> Vec<f64> { m.into_values().collect() };

    StatsReport {
        kind_counts: kind_rows,
        merchants_total: merchant_counts.len(),
        merchants_over_threshold: merchant_counts
            .values()
            .filter(|c| **c > merchant_frequency_threshold)
            .count(),
        merchant_frequency_threshold,
        normal_users: users
            .iter()
            .filter(|u| u.termination == Termination::HorizonReached)
            .count(),
        illiquid_users: users
            .iter()
            .filter(|u| u.termination == Termination::Illiquid)
            .count(),
        distributions: vec![
            DistRow::from_values("timespan per user (days)", &timespans),
            DistRow::from_values("transactions per user", &per_user),
            DistRow::from_values("transactions per month", &collect(per_month_counts)),
            DistRow::from_values("transaction amounts", &txn_amounts),
            DistRow::from_values("transaction amounts per month", &collect(txn_monthly)),
            DistRow::from_values("payment amounts", &pay_amounts),
            DistRow::from_values("payment amounts per month", &collect(pay_monthly)),
        ],
    }
}
