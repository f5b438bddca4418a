//! Bundled merchant, subscription, bill, and random-event catalog.
//!
//! The catalog is versioned data compiled into the binary. Heuristic profile
//! derivation and the mock proposal source key into it through hobby tags, so
//! a persona who golfs ends up with golf merchants and a golf subscription
//! without any model in the loop.

use serde::Deserialize;
use std::collections::BTreeMap;
use std::sync::OnceLock;

#[derive(Debug, Deserialize)]
pub struct Catalog {
    pub catalog_version: String,
    /// tag -> lowercase keywords matched against hobby/interest text.
    pub tag_keywords: BTreeMap<String, Vec<String>>,
    pub merchants: Vec<MerchantEntry>,
    pub subscriptions: Vec<SubscriptionEntry>,
    pub bills: Vec<BillTemplate>,
    pub random_events: Vec<RandomEventEntry>,
}

#[derive(Debug, Deserialize)]
pub struct MerchantEntry {
    pub name: String,
    pub merchant_type: String,
    pub tags: Vec<String>,
    /// Median purchase in dollars; amounts are sampled log-normally around it.
    pub price_median: f64,
    pub price_sigma: f64,
    pub card_present_p: f64,
}

#[derive(Debug, Deserialize)]
pub struct SubscriptionEntry {
    pub merchant_name: String,
    pub product_description: String,
    pub amount: f64,
    pub charge_frequency_month: u32,
    pub tags: Vec<String>,
}

#[derive(Debug, Deserialize)]
pub struct BillTemplate {
    pub slot: String,
    pub merchant_names: Vec<String>,
    pub product_description: String,
    pub amount_low: f64,
    pub amount_high: f64,
    pub std_frac: f64,
    pub charge_frequency_month: u32,
    pub requires: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct RandomEventEntry {
    pub description: String,
    pub merchant_name: String,
    pub merchant_type: String,
    pub amount_low: f64,
    pub amount_high: f64,
    pub requires: Option<String>,
}

static CATALOG: OnceLock<Catalog> = OnceLock::new();

/// The bundled catalog. Parsing happens once; the data ships with the crate.
pub fn catalog() -> &'static Catalog {
    CATALOG.get_or_init(|| {
        serde_json::from_str(include_str!("../data/catalog.json"))
            .expect("bundled catalog.json is valid")
    })
}

impl Catalog {
    /// Tags whose keywords appear in the given hobby/interest text.
    pub fn tags_for_text(&self, text: &str) -> Vec<&str> {
        let lower = text.to_lowercase();
        self.tag_keywords
            .iter()
            .filter(|(_, keywords)| keywords.iter().any(|k| lower.contains(k)))
            .map(|(tag, _)| tag.as_str())
            .collect()
    }

    pub fn merchants_with_tag(&self, tag: &str) -> Vec<&MerchantEntry> {
        self.merchants
            .iter()
            .filter(|m| m.tags.iter().any(|t| t == tag))
            .collect()
    }

    pub fn subscriptions_with_tag(&self, tag: &str) -> Vec<&SubscriptionEntry> {
        self.subscriptions
            .iter()
            .filter(|s| s.tags.iter().any(|t| t == tag))
            .collect()
    }

    pub fn bill_template(&self, slot: &str) -> Option<&BillTemplate> {
        self.bills.iter().find(|b| b.slot == slot)
    }

    /// Random events applicable to a user (car-tagged events need a car).
    pub fn applicable_random_events(&self, owns_car: bool) -> Vec<&RandomEventEntry> {
        self.random_events
            .iter()
            .filter(|e| match e.requires.as_deref() {
                Some("car") => owns_car,
                _ => true,
            })
            .collect()
    }
}

/// Cadence category tracked for a merchant type, if any. The purchase-cadence
/// rule watches these.
pub fn cadence_category(merchant_type: &str) -> Option<&'static str> {
    match merchant_type {
        "Grocery Store" => Some("groceries"),
        "Gas Station" => Some("fuel"),
        _ => None,
    }
}
