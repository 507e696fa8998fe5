use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    AliasResolution, CalendarWindow, ConditionClause, ConstraintRecord, Duration, EntityKind, Field,
    GroundingReport, GroundingVerdict, LeadTimeClause, MasterData, Moq, PriceTier, Rate, Scope,
    SourceDoc, SubstitutionPolicy, TimeUnit,
};
use crate::corpus::EvidenceSpan;

/// Normalization refused to pick between several canonical ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguityGate {
    pub doc_id: String,
    pub kind: EntityKind,
    pub alias: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("ambiguous {kind:?} alias `{}` maps to {:?}", .0.alias, .0.candidates, kind = .0.kind)]
    Ambiguity(AmbiguityGate),
    #[error("unknown {field} unit `{unit}`")]
    Unit { field: Field, unit: String },
    #[error("unknown {kind:?} `{raw}`")]
    UnknownEntity { kind: EntityKind, raw: String },
    #[error("price tiers are not monotone after parsing")]
    TierNotMonotone,
    #[error("calendar period length must be positive")]
    InvalidCalendar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakOverride {
    pub window: CalendarWindow,
    pub periods: u32,
}

/// Lead time in planning periods as a function of the order date.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeadTimeProfile {
    pub standard: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub peaks: Vec<PeakOverride>,
}

impl LeadTimeProfile {
    pub fn constant(periods: u32) -> Self {
        Self {
            standard: periods,
            peaks: Vec::new(),
        }
    }

    /// Lead time for an order placed on `date`. Overlapping windows and the
    /// standard value combine by maximum.
    pub fn at(&self, date: NaiveDate) -> u32 {
        self.peaks
            .iter()
            .filter(|p| p.window.contains(date))
            .map(|p| p.periods)
            .fold(self.standard, u32::max)
    }

    pub fn max_periods(&self) -> u32 {
        self.peaks.iter().map(|p| p.periods).fold(self.standard, u32::max)
    }

    /// Pointwise maximum of two profiles.
    pub fn pointwise_max(&self, other: &Self) -> Self {
        let mut peaks = self.peaks.clone();
        for p in &other.peaks {
            if !peaks.contains(p) {
                peaks.push(*p);
            }
        }
        peaks.sort_by_key(|p| (p.window, p.periods));
        Self {
            standard: self.standard.max(other.standard),
            peaks,
        }
    }
}

/// A record in canonical ids, ISO dates and planning periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedConstraint {
    pub doc_id: String,
    pub source: SourceDoc,
    pub supplier_id: String,
    pub part_id: String,
    pub scope: Scope,
    pub effective_start: Option<NaiveDate>,
    pub effective_end: Option<NaiveDate>,
    pub moq: Option<Moq>,
    pub lead_time: Option<LeadTimeProfile>,
    pub capacity_per_period: Option<u32>,
    pub order_interval: Option<u32>,
    pub price_tiers: Vec<PriceTier>,
    pub substitution_policy: Option<SubstitutionPolicy>,
    pub conditions: Vec<ConditionClause>,
    pub evidence: BTreeMap<Field, Vec<EvidenceSpan>>,
    pub confidence: BTreeMap<Field, f64>,
    pub period_length_days: u32,
    /// Conservative rounding applied during unit conversion.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl NormalizedConstraint {
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

    /// Conditions whose effect targets `field`.
    pub fn conditions_on(&self, field: Field) -> Vec<&ConditionClause> {
        self.conditions
            .iter()
            .filter(|c| c.effect().map(|(f, _)| f) == Some(field))
            .collect()
    }

    /// Expresses this constraint as a record in period units, so that it
    /// can be normalized again.
    pub fn to_record(&self) -> ConstraintRecord {
        let periods = |n: u32| Duration::new(n, "periods");
        let lead_time = self.lead_time.as_ref().map(|l| {
            // Only a single peak window is representable in a record.
            let peak = l.peaks.first();
            LeadTimeClause {
                standard: periods(l.standard),
                peak: peak.map(|p| periods(p.periods)),
                peak_window: peak.map(|p| p.window),
            }
        });
        let mut r = ConstraintRecord::new(
            &self.doc_id,
            self.source.clone(),
            &self.supplier_id,
            &self.part_id,
        );
        r.scope = self.scope.clone();
        r.effective_start = self.effective_start;
        r.effective_end = self.effective_end;
        r.moq = self.moq;
        r.lead_time = lead_time;
        r.capacity_per_period = self.capacity_per_period.map(|q| Rate {
            quantity: q,
            per: "period".into(),
        });
        r.order_interval = self.order_interval.map(periods);
        r.price_tiers = self.price_tiers.clone();
        r.substitution_policy = self.substitution_policy;
        r.conditions = self.conditions.clone();
        r.evidence = self.evidence.clone();
        r.confidence = self.confidence.clone();
        r
    }
}

/// Clears every field whose grounding verdict is not `grounded`.
pub fn block_ungrounded(record: &ConstraintRecord, report: &GroundingReport) -> ConstraintRecord {
    let mut out = record.clone();
    for field in record.populated_fields() {
        if report.fields.get(&field) != Some(&GroundingVerdict::Grounded) {
            out.clear_field(field);
        }
    }
    out
}

/// Whole planning periods covering a duration, rounding up.
fn periods_ceil(
    field: Field,
    amount: u64,
    unit: &str,
    period_days: u32,
    notes: &mut Vec<String>,
) -> Result<u32, NormalizeError> {
    let u = TimeUnit::parse(unit).ok_or_else(|| NormalizeError::Unit {
        field,
        unit: unit.to_string(),
    })?;
    let days = amount * u.days(period_days) as u64;
    let p = period_days as u64;
    let (q, r) = (days / p, days % p);
    if r == 0 {
        return Ok(q as u32);
    }
    let out = q + 1;
    notes.push(format!(
        "{field}: {amount} {unit} is {days} days = {days}/{p} periods, rounded up to {out}"
    ));
    Ok(out as u32)
}

fn canonical(
    master: &MasterData,
    kind: EntityKind,
    raw: &str,
    doc_id: &str,
) -> Result<String, NormalizeError> {
    match master.resolve(kind, raw.trim()) {
        AliasResolution::Canonical(id) => Ok(id),
        AliasResolution::Ambiguous(ids) => Err(NormalizeError::Ambiguity(AmbiguityGate {
            doc_id: doc_id.to_string(),
            kind,
            alias: raw.to_string(),
            candidates: ids.into_iter().collect(),
        })),
        AliasResolution::Unknown => Err(NormalizeError::UnknownEntity {
            kind,
            raw: raw.to_string(),
        }),
    }
}

fn canonical_scope(scope: &Scope) -> Scope {
    let c = |v: &Option<String>| v.as_ref().map(|s| s.trim().to_uppercase());
    Scope {
        site: c(&scope.site),
        region: c(&scope.region),
        sku_family: c(&scope.sku_family),
    }
}

/// Converts units to planning periods and links ids to master data.
///
/// Lead times and order intervals round up, capacities round down; every
/// rounding is recorded in `notes`.
pub fn normalize(
    record: &ConstraintRecord,
    master: &MasterData,
) -> Result<NormalizedConstraint, NormalizeError> {
    let period_days = master.calendar.period_length_days;
    if period_days == 0 {
        return Err(NormalizeError::InvalidCalendar);
    }
    let supplier_id = canonical(master, EntityKind::Supplier, &record.supplier_id, &record.doc_id)?;
    let part_id = canonical(master, EntityKind::Part, &record.part_id, &record.doc_id)?;

    if record
        .price_tiers
        .windows(2)
        .any(|w| w[1].threshold <= w[0].threshold || w[1].unit_price >= w[0].unit_price)
    {
        return Err(NormalizeError::TierNotMonotone);
    }

    let mut notes = Vec::new();
    let lead_time = match &record.lead_time {
        None => None,
        Some(l) => {
            let standard = periods_ceil(
                Field::LeadTime,
                l.standard.amount as u64,
                &l.standard.unit,
                period_days,
                &mut notes,
            )?;
            let mut peaks = Vec::new();
            if let (Some(peak), Some(window)) = (&l.peak, l.peak_window) {
                let periods = periods_ceil(
                    Field::LeadTime,
                    peak.amount as u64,
                    &peak.unit,
                    period_days,
                        &mut notes,
                )?;
                peaks.push(PeakOverride { window, periods });
            }
            Some(LeadTimeProfile { standard, peaks })
        }
    };
    let order_interval = record
        .order_interval
        .as_ref()
        .map(|d| {
            periods_ceil(
                Field::OrderInterval,
                d.amount as u64,
                &d.unit,
                period_days,
                &mut notes,
            )
        })
        .transpose()?;
    let capacity_per_period = record
        .capacity_per_period
        .as_ref()
        .map(|rate| -> Result<u32, NormalizeError> {
            let per = TimeUnit::parse(&rate.per).ok_or_else(|| NormalizeError::Unit {
                field: Field::CapacityPerPeriod,
                unit: rate.per.clone(),
            })?;
            let unit_days = per.days(period_days) as u64;
            // quantity per unit → quantity per period = q * P / unit_days
            let scaled = rate.quantity as u64 * period_days as u64;
            let (q, r) = (scaled / unit_days, scaled % unit_days);
            if r != 0 {
                notes.push(format!(
                    "capacity_per_period: {} per {} is {scaled}/{unit_days} per period, rounded down to {q}",
                    rate.quantity, rate.per
                ));
            }
            Ok(q as u32)
        })
        .transpose()?;

    Ok(NormalizedConstraint {
        doc_id: record.doc_id.clone(),
        source: record.source.clone(),
        supplier_id,
        part_id,
        scope: canonical_scope(&record.scope),
        effective_start: record.effective_start,
        effective_end: record.effective_end,
        moq: record.moq,
        lead_time,
        capacity_per_period,
        order_interval,
        price_tiers: record.price_tiers.clone(),
        substitution_policy: record.substitution_policy,
        conditions: record.conditions.clone(),
        evidence: record.evidence.clone(),
        confidence: record.confidence.clone(),
        period_length_days: period_days,
        notes,
    })
}
