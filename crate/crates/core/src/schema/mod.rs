//! Constraint records extracted from contract text, their validation,
//! grounding against evidence, and normalization to planning units.

mod extract;
mod master;
mod normalize;
mod record_file;
mod validate;

pub use extract::{Extractor, FixtureExtractor};
pub use master::{AliasResolution, AvlEntry, CalendarRule, EntityKind, EntityRecord, MasterData};
pub use normalize::{
    block_ungrounded, normalize, AmbiguityGate, LeadTimeProfile, NormalizeError, NormalizedConstraint,
    PeakOverride,
};
pub use record_file::RecordFormatError;
pub use validate::{
    check_grounding, numeric_tokens, validate_schema, GroundingReport, GroundingVerdict,
    ValidationReport, Violation, ViolationCode,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::corpus::{DocType, EvidenceSpan};

/// Constraint-bearing fields of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Moq,
    LeadTime,
    CapacityPerPeriod,
    OrderInterval,
    PriceTiers,
    SubstitutionPolicy,
    Conditions,
}

impl Field {
    pub const ALL: [Field; 7] = [
        Field::Moq,
        Field::LeadTime,
        Field::CapacityPerPeriod,
        Field::OrderInterval,
        Field::PriceTiers,
        Field::SubstitutionPolicy,
        Field::Conditions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Field::Moq => "moq",
            Field::LeadTime => "lead_time",
            Field::CapacityPerPeriod => "capacity_per_period",
            Field::OrderInterval => "order_interval",
            Field::PriceTiers => "price_tiers",
            Field::SubstitutionPolicy => "substitution_policy",
            Field::Conditions => "conditions",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Field::Moq => "MOQ",
            Field::LeadTime => "lead time",
            Field::CapacityPerPeriod => "capacity",
            Field::OrderInterval => "order interval",
            Field::PriceTiers => "price tiers",
            Field::SubstitutionPolicy => "substitution policy",
            Field::Conditions => "conditions",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Field::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown field `{s}`"))
    }
}

/// Metadata of the document a record was extracted from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDoc {
    pub version: String,
    pub doc_type: DocType,
    pub signed: bool,
    /// Amendment language present in the document's first block.
    pub amends: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Scope {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sku_family: Option<String>,
}

impl Scope {
    pub fn site(site: impl Into<String>) -> Self {
        Self {
            site: Some(site.into()),
            ..Self::default()
        }
    }

    pub fn is_global(&self) -> bool {
        self.site.is_none() && self.region.is_none() && self.sku_family.is_none()
    }

    /// Number of populated scope dimensions.
    pub fn specificity(&self) -> usize {
        [&self.site, &self.region, &self.sku_family]
            .iter()
            .filter(|v| v.is_some())
            .count()
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = [
            ("site", &self.site),
            ("region", &self.region),
            ("sku family", &self.sku_family),
        ]
        .iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| format!("{k} {v}")))
        .collect();
        if parts.is_empty() {
            f.write_str("all sites")
        } else {
            f.write_str(&parts.join(", "))
        }
    }
}

/// MOQ value; `NotApplicable` is the explicit "no MOQ" null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moq {
    Units(u32),
    NotApplicable,
}

impl Moq {
    pub fn units(self) -> u32 {
        match self {
            Moq::Units(u) => u,
            Moq::NotApplicable => 0,
        }
    }
}

/// A duration as written in the source, e.g. `6 weeks`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Duration {
    pub amount: u32,
    pub unit: String,
}

impl Duration {
    pub fn new(amount: u32, unit: impl Into<String>) -> Self {
        Self {
            amount,
            unit: unit.into(),
        }
    }
}

/// Canonical time units, with their length in days.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnit {
    Day,
    Week,
    Month,
    Period,
}

impl TimeUnit {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().trim_end_matches('s') {
            "day" => Some(TimeUnit::Day),
            "week" => Some(TimeUnit::Week),
            "month" => Some(TimeUnit::Month),
            "period" => Some(TimeUnit::Period),
            _ => None,
        }
    }

    /// Length in days; a month counts 30 days.
    pub fn days(self, period_length_days: u32) -> u32 {
        match self {
            TimeUnit::Day => 1,
            TimeUnit::Week => 7,
            TimeUnit::Month => 30,
            TimeUnit::Period => period_length_days,
        }
    }

    pub fn plural(self) -> &'static str {
        match self {
            TimeUnit::Day => "days",
            TimeUnit::Week => "weeks",
            TimeUnit::Month => "months",
            TimeUnit::Period => "periods",
        }
    }

    pub fn singular(self) -> &'static str {
        match self {
            TimeUnit::Day => "day",
            TimeUnit::Week => "week",
            TimeUnit::Month => "month",
            TimeUnit::Period => "period",
        }
    }
}

const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

pub(crate) fn month_from_abbrev(s: &str) -> Option<u32> {
    MONTHS
        .iter()
        .position(|m| m.eq_ignore_ascii_case(s))
        .map(|i| i as u32 + 1)
}

fn days_in_month(month: u32) -> u32 {
    // Leap days are ignored for recurring windows.
    [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31][(month - 1) as usize]
}

/// Recurring calendar window, inclusive on both ends; may wrap the year end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CalendarWindow {
    pub start_month: u32,
    pub start_day: u32,
    pub end_month: u32,
    pub end_day: u32,
}

impl CalendarWindow {
    pub fn months(start_month: u32, end_month: u32) -> Self {
        Self {
            start_month,
            start_day: 1,
            end_month,
            end_day: days_in_month(end_month),
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        let key = |m: u32, d: u32| m * 100 + d;
        let x = key(date.month(), date.day());
        let a = key(self.start_month, self.start_day);
        let b = key(self.end_month, self.end_day);
        if a <= b {
            a <= x && x <= b
        } else {
            x >= a || x <= b
        }
    }

    fn is_whole_months(&self) -> bool {
        self.start_day == 1 && self.end_day >= days_in_month(self.end_month)
    }
}

impl fmt::Display for CalendarWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = |i: u32| MONTHS[(i - 1) as usize];
        if self.is_whole_months() {
            write!(f, "{}--{}", m(self.start_month), m(self.end_month))
        } else {
            write!(
                f,
                "{:02}-{}--{:02}-{}",
                self.start_day,
                m(self.start_month),
                self.end_day,
                m(self.end_month)
            )
        }
    }
}

impl FromStr for CalendarWindow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("--")
            .ok_or_else(|| format!("calendar window `{s}` lacks `--`"))?;
        let side = |x: &str| -> Result<(Option<u32>, u32), String> {
            match x.split_once('-') {
                Some((d, m)) => {
                    let day = d.parse().map_err(|_| format!("bad day in `{x}`"))?;
                    let month = month_from_abbrev(m).ok_or_else(|| format!("bad month in `{x}`"))?;
                    Ok((Some(day), month))
                }
                None => Ok((None, month_from_abbrev(x).ok_or_else(|| format!("bad month `{x}`"))?)),
            }
        };
        let (sd, sm) = side(a.trim())?;
        let (ed, em) = side(b.trim())?;
        Ok(Self {
            start_month: sm,
            start_day: sd.unwrap_or(1),
            end_month: em,
            end_day: ed.unwrap_or_else(|| days_in_month(em)),
        })
    }
}

impl Serialize for CalendarWindow {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CalendarWindow {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeadTimeClause {
    pub standard: Duration,
    pub peak: Option<Duration>,
    pub peak_window: Option<CalendarWindow>,
}

/// A quantity per unit of time, e.g. 250 units per month.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub quantity: u32,
    pub per: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceTier {
    pub threshold: u32,
    pub unit_price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubstitutionPolicy {
    Allowed,
    Forbidden,
    AllowedWithApproval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Volume,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionClause {
    pub kind: ConditionKind,
    pub threshold: f64,
    pub effect_text: String,
    pub evidence: Vec<EvidenceSpan>,
}

impl ConditionClause {
    /// Parses the `field=value` prefix of the effect, e.g. `moq=100 ...`.
    pub fn effect(&self) -> Option<(Field, f64)> {
        let head = self.effect_text.split_whitespace().next()?;
        let (name, value) = head.split_once('=')?;
        let field = match name {
            "moq" => Field::Moq,
            "lead_time" => Field::LeadTime,
            "capacity" | "capacity_per_period" => Field::CapacityPerPeriod,
            "order_interval" => Field::OrderInterval,
            _ => return None,
        };
        Some((field, value.parse().ok()?))
    }
}

/// One extracted set of contractual terms for a (supplier, part, document).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRecord {
    pub doc_id: String,
    pub source: SourceDoc,
    pub supplier_id: String,
    pub part_id: String,
    pub scope: Scope,
    pub effective_start: Option<NaiveDate>,
    pub effective_end: Option<NaiveDate>,
    pub moq: Option<Moq>,
    pub lead_time: Option<LeadTimeClause>,
    pub capacity_per_period: Option<Rate>,
    pub order_interval: Option<Duration>,
    pub price_tiers: Vec<PriceTier>,
    pub substitution_policy: Option<SubstitutionPolicy>,
    pub conditions: Vec<ConditionClause>,
    pub evidence: BTreeMap<Field, Vec<EvidenceSpan>>,
    pub confidence: BTreeMap<Field, f64>,
}

impl ConstraintRecord {
    pub fn new(
        doc_id: impl Into<String>,
        source: SourceDoc,
        supplier_id: impl Into<String>,
        part_id: impl Into<String>,
    ) -> Self {
        Self {
            doc_id: doc_id.into(),
            source,
            supplier_id: supplier_id.into(),
            part_id: part_id.into(),
            scope: Scope::default(),
            effective_start: None,
            effective_end: None,
            moq: None,
            lead_time: None,
            capacity_per_period: None,
            order_interval: None,
            price_tiers: Vec::new(),
            substitution_policy: None,
            conditions: Vec::new(),
            evidence: BTreeMap::new(),
            confidence: BTreeMap::new(),
        }
    }

    pub fn is_populated(&self, field: Field) -> bool {
        match field {
            Field::Moq => self.moq.is_some(),
            Field::LeadTime => self.lead_time.is_some(),
            Field::CapacityPerPeriod => self.capacity_per_period.is_some(),
            Field::OrderInterval => self.order_interval.is_some(),
            Field::PriceTiers => !self.price_tiers.is_empty(),
            Field::SubstitutionPolicy => self.substitution_policy.is_some(),
            Field::Conditions => !self.conditions.is_empty(),
        }
    }

    pub fn populated_fields(&self) -> Vec<Field> {
        Field::ALL
            .into_iter()
            .filter(|f| self.is_populated(*f))
            .collect()
    }

    /// Evidence for a field; conditions carry their spans inline.
    pub fn field_evidence(&self, field: Field) -> Vec<EvidenceSpan> {
        if field == Field::Conditions {
            return self
                .conditions
                .iter()
                .flat_map(|c| c.evidence.iter().cloned())
                .collect();
        }
        self.evidence.get(&field).cloned().unwrap_or_default()
    }

    /// Removes a field's value and evidence.
    pub fn clear_field(&mut self, field: Field) {
        match field {
            Field::Moq => self.moq = None,
            Field::LeadTime => self.lead_time = None,
            Field::CapacityPerPeriod => self.capacity_per_period = None,
            Field::OrderInterval => self.order_interval = None,
            Field::PriceTiers => self.price_tiers.clear(),
            Field::SubstitutionPolicy => self.substitution_policy = None,
            Field::Conditions => self.conditions.clear(),
        }
        self.evidence.remove(&field);
        self.confidence.remove(&field);
    }

    /// Copies one field (value, evidence, confidence) from `other`.
    pub fn copy_field_from(&mut self, other: &ConstraintRecord, field: Field) {
        match field {
            Field::Moq => self.moq = other.moq,
            Field::LeadTime => self.lead_time = other.lead_time.clone(),
            Field::CapacityPerPeriod => self.capacity_per_period = other.capacity_per_period.clone(),
            Field::OrderInterval => self.order_interval = other.order_interval.clone(),
            Field::PriceTiers => self.price_tiers = other.price_tiers.clone(),
            Field::SubstitutionPolicy => self.substitution_policy = other.substitution_policy,
            Field::Conditions => self.conditions = other.conditions.clone(),
        }
        match other.evidence.get(&field) {
            Some(ev) => {
                self.evidence.insert(field, ev.clone());
            }
            None => {
                self.evidence.remove(&field);
            }
        }
        match other.confidence.get(&field) {
            Some(c) => {
                self.confidence.insert(field, *c);
            }
            None => {
                self.confidence.remove(&field);
            }
        }
    }

    pub fn key(&self) -> (String, String, String, String) {
        (
            self.doc_id.clone(),
            self.source.version.clone(),
            self.supplier_id.clone(),
            self.part_id.clone(),
        )
    }
}
