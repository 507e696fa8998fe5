use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ConstraintRecord, Field, Moq, Scope, SubstitutionPolicy, TimeUnit};
use crate::corpus::{Corpus, CorpusError, DeclaredScope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    MissingIdentifier,
    TierNotMonotone,
    TierThresholdInvalid,
    NonPositivePrice,
    NonPositiveQuantity,
    UngroundedField,
    InvalidWindow,
    ConfidenceOutOfRange,
    UnknownUnit,
    MalformedCondition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// `None` for record-level violations.
    pub field: Option<Field>,
    pub code: ViolationCode,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    /// Fields with at least one violation.
    pub fn failing_fields(&self) -> Vec<Field> {
        let mut out: Vec<Field> = self.violations.iter().filter_map(|v| v.field).collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Layer-1 checks: identifiers, numeric sanity, tier monotonicity, unit
/// names, windows, and the evidence requirement.
pub fn validate_schema(record: &ConstraintRecord) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |field: Option<Field>, code, message: String| {
        violations.push(Violation {
            field,
            code,
            message,
        })
    };

    for (name, value) in [
        ("doc_id", &record.doc_id),
        ("supplier_id", &record.supplier_id),
        ("part_id", &record.part_id),
    ] {
        if value.trim().is_empty() {
            push(None, ViolationCode::MissingIdentifier, format!("{name} is empty"));
        }
    }

    if let (Some(s), Some(e)) = (record.effective_start, record.effective_end) {
        if s > e {
            push(
                None,
                ViolationCode::InvalidWindow,
                format!("effective_start {s} is after effective_end {e}"),
            );
        }
    }

    for (i, tier) in record.price_tiers.iter().enumerate() {
        if tier.threshold < 1 {
            push(
                Some(Field::PriceTiers),
                ViolationCode::TierThresholdInvalid,
                format!("tier {i} threshold must be at least 1"),
            );
        }
        if !(tier.unit_price > 0.0 && tier.unit_price.is_finite()) {
            push(
                Some(Field::PriceTiers),
                ViolationCode::NonPositivePrice,
                format!("tier {i} unit price {} is not positive", tier.unit_price),
            );
        }
    }
    for (i, pair) in record.price_tiers.windows(2).enumerate() {
        if pair[1].threshold <= pair[0].threshold || pair[1].unit_price >= pair[0].unit_price {
            push(
                Some(Field::PriceTiers),
                ViolationCode::TierNotMonotone,
                format!(
                    "tiers {i} and {}: thresholds must increase and prices decrease ({}@{} then {}@{})",
                    i + 1,
                    pair[0].threshold,
                    pair[0].unit_price,
                    pair[1].threshold,
                    pair[1].unit_price
                ),
            );
        }
    }

    if let Some(cap) = &record.capacity_per_period {
        if cap.quantity == 0 {
            push(
                Some(Field::CapacityPerPeriod),
                ViolationCode::NonPositiveQuantity,
                "capacity must be positive".into(),
            );
        }
        if TimeUnit::parse(&cap.per).is_none() {
            push(
                Some(Field::CapacityPerPeriod),
                ViolationCode::UnknownUnit,
                format!("unknown capacity unit `{}`", cap.per),
            );
        }
    }
    if let Some(lt) = &record.lead_time {
        for d in std::iter::once(&lt.standard).chain(lt.peak.iter()) {
            if TimeUnit::parse(&d.unit).is_none() {
                push(
                    Some(Field::LeadTime),
                    ViolationCode::UnknownUnit,
                    format!("unknown lead-time unit `{}`", d.unit),
                );
            }
        }
        if lt.peak.is_some() != lt.peak_window.is_some() {
            push(
                Some(Field::LeadTime),
                ViolationCode::InvalidWindow,
                "peak lead time and peak window must be given together".into(),
            );
        }
    }
    if let Some(d) = &record.order_interval {
        if TimeUnit::parse(&d.unit).is_none() {
            push(
                Some(Field::OrderInterval),
                ViolationCode::UnknownUnit,
                format!("unknown interval unit `{}`", d.unit),
            );
        }
    }

    for (i, c) in record.conditions.iter().enumerate() {
        if c.effect_text.trim().is_empty() || c.evidence.is_empty() || !(c.threshold >= 0.0) {
            push(
                Some(Field::Conditions),
                ViolationCode::MalformedCondition,
                format!("condition {i} needs a non-negative threshold, effect text and evidence"),
            );
        }
    }

    for field in record.populated_fields() {
        if record.field_evidence(field).is_empty() {
            push(
                Some(field),
                ViolationCode::UngroundedField,
                format!("{field} has no evidence spans"),
            );
        }
    }
    for (field, c) in &record.confidence {
        if !(0.0..=1.0).contains(c) {
            push(
                Some(*field),
                ViolationCode::ConfidenceOutOfRange,
                format!("confidence {c} for {field} outside [0, 1]"),
            );
        }
    }

    ValidationReport {
        ok: violations.is_empty(),
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundingVerdict {
    Grounded,
    ValueNotInSpan,
    MisScoped,
    Missing,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub fields: BTreeMap<Field, GroundingVerdict>,
}

impl GroundingReport {
    pub fn ok(&self) -> bool {
        self.fields.values().all(|v| *v == GroundingVerdict::Grounded)
    }

    pub fn failing_fields(&self) -> Vec<Field> {
        self.fields
            .iter()
            .filter(|(_, v)| **v != GroundingVerdict::Grounded)
            .map(|(f, _)| *f)
            .collect()
    }
}

/// Numeric tokens in text; thousands separators inside a number are dropped.
pub fn numeric_tokens(text: &str) -> Vec<f64> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len()
                && (bytes[i].is_ascii_digit()
                    || ((bytes[i] == b'.' || bytes[i] == b',')
                        && i + 1 < bytes.len()
                        && bytes[i + 1].is_ascii_digit()))
            {
                i += 1;
            }
            let token: String = text[start..i].chars().filter(|c| *c != ',').collect();
            if let Ok(v) = token.parse() {
                out.push(v);
            }
        } else {
            i += 1;
        }
    }
    out
}

fn contains_value(tokens: &[f64], value: f64) -> bool {
    tokens.iter().any(|t| (t - value).abs() < 1e-9)
}

fn scope_consistent(declared: &DeclaredScope, scope: &Scope) -> bool {
    let dim = |d: &Option<String>, s: &Option<String>| match d {
        Some(d) => s.as_ref().is_some_and(|s| s.eq_ignore_ascii_case(d)),
        None => true,
    };
    dim(&declared.site, &scope.site)
        && dim(&declared.region, &scope.region)
        && dim(&declared.sku_family, &scope.sku_family)
}

fn values_for(record: &ConstraintRecord, field: Field) -> Vec<f64> {
    match field {
        Field::Moq => match record.moq {
            Some(Moq::Units(u)) => vec![u as f64],
            _ => vec![],
        },
        Field::LeadTime => record
            .lead_time
            .iter()
            .flat_map(|l| std::iter::once(&l.standard).chain(l.peak.iter()))
            .map(|d| d.amount as f64)
            .collect(),
        Field::CapacityPerPeriod => record
            .capacity_per_period
            .iter()
            .map(|c| c.quantity as f64)
            .collect(),
        Field::OrderInterval => record.order_interval.iter().map(|d| d.amount as f64).collect(),
        Field::PriceTiers => record
            .price_tiers
            .iter()
            .flat_map(|t| [t.threshold as f64, t.unit_price])
            .collect(),
        Field::SubstitutionPolicy => vec![],
        Field::Conditions => record
            .conditions
            .iter()
            .flat_map(|c| std::iter::once(c.threshold).chain(c.effect().map(|(_, v)| v)))
            .collect(),
    }
}

fn keyword_supported(record: &ConstraintRecord, field: Field, text: &str) -> bool {
    let lower = text.to_lowercase();
    match field {
        Field::Moq if record.moq == Some(Moq::NotApplicable) => {
            lower.contains("no moq") || lower.contains("no minimum")
        }
        Field::SubstitutionPolicy => match record.substitution_policy {
            Some(SubstitutionPolicy::Forbidden) => ["not permitted", "not be permitted", "prohibited", "forbidden", "may not", "shall not"]
                .iter()
                .any(|k| lower.contains(k)),
            Some(SubstitutionPolicy::AllowedWithApproval) => lower.contains("approv"),
            Some(SubstitutionPolicy::Allowed) => ["permitted", "allowed", "may substitute", "may be substituted"]
                .iter()
                .any(|k| lower.contains(k)),
            None => false,
        },
        _ => true,
    }
}

/// Layer-2 checks: every populated field must be backed by resolvable
/// spans whose text contains the value and whose declared scope agrees
/// with the record.
pub fn check_grounding(
    record: &ConstraintRecord,
    corpus: &Corpus,
) -> Result<GroundingReport, CorpusError> {
    let mut fields = BTreeMap::new();
    for field in record.populated_fields() {
        let spans = record.field_evidence(field);
        if spans.is_empty() {
            fields.insert(field, GroundingVerdict::Missing);
            continue;
        }
        let mut text = String::new();
        let mut mis_scoped = false;
        for span in &spans {
            let resolved = corpus.resolve_span(span)?;
            text.push_str(resolved);
            text.push('\n');
            if let Some(chunk) = corpus.chunk_for(span) {
                let mut declared = DeclaredScope::parse(&chunk.header_context);
                let inline = DeclaredScope::parse(resolved);
                declared.site = inline.site.or(declared.site);
                declared.region = inline.region.or(declared.region);
                declared.sku_family = inline.sku_family.or(declared.sku_family);
                if !declared.is_empty() && !scope_consistent(&declared, &record.scope) {
                    mis_scoped = true;
                }
            }
        }
        let tokens = numeric_tokens(&text);
        let values_ok = values_for(record, field)
            .into_iter()
            .all(|v| contains_value(&tokens, v))
            && keyword_supported(record, field, &text);
        let verdict = if mis_scoped {
            GroundingVerdict::MisScoped
        } else if !values_ok {
            GroundingVerdict::ValueNotInSpan
        } else {
            GroundingVerdict::Grounded
        };
        fields.insert(field, verdict);
    }
    Ok(GroundingReport { fields })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DocType, EvidenceSpan};
    use crate::schema::{PriceTier, SourceDoc};

    fn record() -> ConstraintRecord {
        ConstraintRecord::new(
            "D",
            SourceDoc {
                version: "1".into(),
                doc_type: DocType::Addendum,
                signed: true,
                amends: true,
            },
            "S",
            "P",
        )
    }

    #[test]
    fn numeric_tokens_handle_separators() {
        assert_eq!(
            numeric_tokens("$12.00 each; 1,500 units. End."),
            vec![12.0, 1500.0]
        );
        assert_eq!(numeric_tokens("100-149 units"), vec![100.0, 149.0]);
    }

    #[test]
    fn out_of_order_tiers_flagged() {
        let mut r = record();
        r.price_tiers = vec![
            PriceTier {
                threshold: 150,
                unit_price: 11.30,
            },
            PriceTier {
                threshold: 100,
                unit_price: 12.00,
            },
        ];
        r.evidence
            .insert(Field::PriceTiers, vec![EvidenceSpan::new("D", "1", 0, 1)]);
        let rep = validate_schema(&r);
        assert!(!rep.ok);
        assert!(rep.has(ViolationCode::TierNotMonotone));
    }

    #[test]
    fn populated_field_without_evidence_flagged() {
        let mut r = record();
        r.moq = Some(Moq::Units(150));
        let rep = validate_schema(&r);
        assert!(rep.has(ViolationCode::UngroundedField));
        assert_eq!(rep.failing_fields(), vec![Field::Moq]);
    }

    #[test]
    fn inverted_window_flagged() {
        let mut r = record();
        r.effective_start = chrono::NaiveDate::from_ymd_opt(2025, 5, 1);
        r.effective_end = chrono::NaiveDate::from_ymd_opt(2025, 4, 1);
        assert!(validate_schema(&r).has(ViolationCode::InvalidWindow));
    }
}
