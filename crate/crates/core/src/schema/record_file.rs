//! JSON layout of constraint records.
//!
//! Durations and rates carry their unit in the key name
//! (`lead_time_weeks`, `capacity_per_month`); `evidence` lists
//! `doc_id:label` pointers while `evidence_spans` keeps exact offsets.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};
use thiserror::Error;

use super::{
    CalendarWindow, ConditionClause, ConditionKind, ConstraintRecord, Duration, Field,
    LeadTimeClause, Moq, NormalizedConstraint, PriceTier, Rate, Scope, SourceDoc,
    SubstitutionPolicy, TimeUnit,
};
use crate::corpus::{Corpus, EvidenceSpan};

#[derive(Debug, Error)]
pub enum RecordFormatError {
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("invalid `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: impl Into<String>, msg: impl ToString) -> RecordFormatError {
    RecordFormatError::Invalid {
        key: key.into(),
        msg: msg.to_string(),
    }
}

fn number(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        json!(v as i64)
    } else {
        json!(v)
    }
}

fn unit_key(prefix: &str, unit: &str, plural: bool) -> String {
    let name = match TimeUnit::parse(unit) {
        Some(u) if plural => u.plural().to_string(),
        Some(u) => u.singular().to_string(),
        None => unit.to_string(),
    };
    format!("{prefix}{name}")
}

fn pointer(span: &EvidenceSpan, corpus: Option<&Corpus>) -> String {
    corpus
        .and_then(|c| c.chunk_for(span))
        .filter(|c| c.span == *span)
        .and_then(|c| c.pointer())
        .unwrap_or_else(|| span.to_string())
}

impl ConstraintRecord {
    /// All evidence spans in document order, deduplicated.
    pub fn all_evidence(&self) -> Vec<EvidenceSpan> {
        let mut spans: Vec<EvidenceSpan> = Field::ALL
            .into_iter()
            .flat_map(|f| self.field_evidence(f))
            .collect();
        spans.sort();
        spans.dedup();
        spans
    }

    pub fn to_json(&self, corpus: Option<&Corpus>, normalized: Option<&NormalizedConstraint>) -> Value {
        let mut m = Map::new();
        m.insert("doc_id".into(), json!(self.doc_id));
        m.insert("supplier_id".into(), json!(self.supplier_id));
        m.insert("part_id".into(), json!(self.part_id));
        m.insert("scope".into(), serde_json::to_value(&self.scope).expect("scope"));
        if let Some(d) = self.effective_start {
            m.insert("effective_start".into(), json!(d.to_string()));
        }
        if let Some(d) = self.effective_end {
            m.insert("effective_end".into(), json!(d.to_string()));
        }
        match self.moq {
            Some(Moq::Units(u)) => {
                m.insert("moq".into(), json!(u));
            }
            Some(Moq::NotApplicable) => {
                m.insert("moq".into(), Value::Null);
            }
            None => {}
        }
        if let Some(l) = &self.lead_time {
            let mut lt = Map::new();
            lt.insert("standard".into(), json!(l.standard.amount));
            if let Some(p) = &l.peak {
                if TimeUnit::parse(&p.unit) == TimeUnit::parse(&l.standard.unit) {
                    lt.insert("peak_season".into(), json!(p.amount));
                } else {
                    lt.insert("peak_season".into(), json!(format!("{} {}", p.amount, p.unit)));
                }
            }
            if let Some(w) = l.peak_window {
                lt.insert("peak_window".into(), json!(w.to_string()));
            }
            m.insert(unit_key("lead_time_", &l.standard.unit, true), Value::Object(lt));
        }
        if let Some(c) = &self.capacity_per_period {
            m.insert(unit_key("capacity_per_", &c.per, false), json!(c.quantity));
        }
        if let Some(d) = &self.order_interval {
            m.insert(unit_key("order_interval_", &d.unit, true), json!(d.amount));
        }
        if !self.price_tiers.is_empty() {
            m.insert(
                "price_tiers".into(),
                Value::Array(
                    self.price_tiers
                        .iter()
                        .map(|t| json!({"threshold": t.threshold, "unit_price": t.unit_price}))
                        .collect(),
                ),
            );
        }
        if let Some(p) = self.substitution_policy {
            m.insert("substitution_policy".into(), serde_json::to_value(p).expect("policy"));
        }
        if !self.conditions.is_empty() {
            m.insert(
                "conditions".into(),
                Value::Array(
                    self.conditions
                        .iter()
                        .map(|c| {
                            json!({
                                "type": c.kind,
                                "threshold": number(c.threshold),
                                "effect": c.effect_text,
                                "evidence_spans": c.evidence,
                            })
                        })
                        .collect(),
                ),
            );
        }
        m.insert(
            "evidence".into(),
            Value::Array(
                self.all_evidence()
                    .iter()
                    .map(|s| json!(pointer(s, corpus)))
                    .collect(),
            ),
        );
        m.insert(
            "source".into(),
            json!({
                "doc_version": self.source.version,
                "doc_type": self.source.doc_type,
                "signed": self.source.signed,
                "amends": self.source.amends,
            }),
        );
        m.insert(
            "evidence_spans".into(),
            serde_json::to_value(&self.evidence).expect("evidence"),
        );
        m.insert(
            "confidence".into(),
            serde_json::to_value(&self.confidence).expect("confidence"),
        );
        if let Some(n) = normalized {
            m.insert("normalized".into(), serde_json::to_value(n).expect("normalized"));
        }
        Value::Object(m)
    }

    pub fn from_json(value: &Value) -> Result<Self, RecordFormatError> {
        let obj = value
            .as_object()
            .ok_or_else(|| invalid("record", "expected an object"))?;
        let string = |key: &'static str| -> Result<String, RecordFormatError> {
            obj.get(key)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or(RecordFormatError::Missing(key))
        };
        let date = |key: &'static str| -> Result<Option<chrono::NaiveDate>, RecordFormatError> {
            match obj.get(key) {
                None | Some(Value::Null) => Ok(None),
                Some(v) => v
                    .as_str()
                    .ok_or_else(|| invalid(key, "expected a date string"))?
                    .parse()
                    .map(Some)
                    .map_err(|e| invalid(key, e)),
            }
        };
        let src = obj.get("source").ok_or(RecordFormatError::Missing("source"))?;
        let source = SourceDoc {
            version: src
                .get("doc_version")
                .and_then(Value::as_str)
                .ok_or(RecordFormatError::Missing("source.doc_version"))?
                .to_string(),
            doc_type: serde_json::from_value(src.get("doc_type").cloned().unwrap_or(Value::Null))
                .map_err(|e| invalid("source.doc_type", e))?,
            signed: src.get("signed").and_then(Value::as_bool).unwrap_or(false),
            amends: src.get("amends").and_then(Value::as_bool).unwrap_or(false),
        };
        let mut r = ConstraintRecord::new(
            string("doc_id")?,
            source,
            string("supplier_id")?,
            string("part_id")?,
        );
        r.scope = match obj.get("scope") {
            Some(v) => serde_json::from_value::<Scope>(v.clone()).map_err(|e| invalid("scope", e))?,
            None => Scope::default(),
        };
        r.effective_start = date("effective_start")?;
        r.effective_end = date("effective_end")?;
        r.moq = match obj.get("moq") {
            None => None,
            Some(Value::Null) => Some(Moq::NotApplicable),
            Some(v) => Some(Moq::Units(
                v.as_u64()
                    .and_then(|u| u32::try_from(u).ok())
                    .ok_or_else(|| invalid("moq", "expected a non-negative integer or null"))?,
            )),
        };
        for (key, value) in obj {
            if let Some(unit) = key.strip_prefix("lead_time_") {
                let standard = value
                    .get("standard")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| invalid(key, "missing integer `standard`"))?;
                let peak = match value.get("peak_season") {
                    None | Some(Value::Null) => None,
                    Some(Value::String(s)) => {
                        let (a, u) = s
                            .split_once(' ')
                            .ok_or_else(|| invalid(key, "peak_season must be `<n> <unit>`"))?;
                        Some(Duration::new(a.parse().map_err(|e| invalid(key, e))?, u))
                    }
                    Some(v) => Some(Duration::new(
                        v.as_u64().ok_or_else(|| invalid(key, "bad peak_season"))? as u32,
                        unit,
                    )),
                };
                let peak_window = match value.get("peak_window").and_then(Value::as_str) {
                    Some(w) => Some(w.parse::<CalendarWindow>().map_err(|e| invalid(key, e))?),
                    None => None,
                };
                r.lead_time = Some(LeadTimeClause {
                    standard: Duration::new(standard as u32, unit),
                    peak,
                    peak_window,
                });
            } else if let Some(per) = key.strip_prefix("capacity_per_") {
                r.capacity_per_period = Some(Rate {
                    quantity: value.as_u64().ok_or_else(|| invalid(key, "expected integer"))? as u32,
                    per: per.to_string(),
                });
            } else if let Some(unit) = key.strip_prefix("order_interval_") {
                r.order_interval = Some(Duration::new(
                    value.as_u64().ok_or_else(|| invalid(key, "expected integer"))? as u32,
                    unit,
                ));
            }
        }
        if let Some(tiers) = obj.get("price_tiers") {
            r.price_tiers = serde_json::from_value::<Vec<PriceTier>>(tiers.clone())
                .map_err(|e| invalid("price_tiers", e))?;
        }
        if let Some(p) = obj.get("substitution_policy") {
            r.substitution_policy = Some(
                serde_json::from_value::<SubstitutionPolicy>(p.clone())
                    .map_err(|e| invalid("substitution_policy", e))?,
            );
        }
        if let Some(conds) = obj.get("conditions").and_then(Value::as_array) {
            for c in conds {
                r.conditions.push(ConditionClause {
                    kind: serde_json::from_value::<ConditionKind>(
                        c.get("type").cloned().unwrap_or(Value::Null),
                    )
                    .map_err(|e| invalid("conditions.type", e))?,
                    threshold: c
                        .get("threshold")
                        .and_then(Value::as_f64)
                        .ok_or_else(|| invalid("conditions.threshold", "expected number"))?,
                    effect_text: c
                        .get("effect")
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                        .to_string(),
                    evidence: serde_json::from_value(
                        c.get("evidence_spans").cloned().unwrap_or(json!([])),
                    )
                    .map_err(|e| invalid("conditions.evidence_spans", e))?,
                });
            }
        }
        if let Some(ev) = obj.get("evidence_spans") {
            r.evidence = serde_json::from_value::<BTreeMap<Field, Vec<EvidenceSpan>>>(ev.clone())
                .map_err(|e| invalid("evidence_spans", e))?;
        }
        if let Some(c) = obj.get("confidence") {
            r.confidence = serde_json::from_value::<BTreeMap<Field, f64>>(c.clone())
                .map_err(|e| invalid("confidence", e))?;
        }
        Ok(r)
    }
}
