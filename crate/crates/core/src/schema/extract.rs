//! Deterministic pattern extractor for the bundled contract fixtures.
//!
//! Each clause chunk is matched against per-field patterns. Exact patterns
//! give confidence 1.0, loose fallbacks 0.5. Clauses that mention no part
//! apply to every part named elsewhere in the same document.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;

use super::{
    month_from_abbrev, CalendarWindow, ConditionClause, ConditionKind, ConstraintRecord, Duration,
    Field, LeadTimeClause, MasterData, Moq, PriceTier, Rate, Scope, SourceDoc, SubstitutionPolicy,
};
use crate::corpus::{header_value, Chunk, Corpus, DeclaredScope, Document, RetrievalHit};

pub const EXACT: f64 = 1.0;
pub const FUZZY: f64 = 0.5;

/// Produces constraint records from a corpus.
pub trait Extractor: Send + Sync {
    fn extract(&self, corpus: &Corpus, master: &MasterData) -> Vec<ConstraintRecord>;

    /// Re-extracts one field of `record` from retrieved chunks, leaving the
    /// field cleared when nothing in the record's document matches.
    fn reextract_field(
        &self,
        record: &ConstraintRecord,
        field: Field,
        hits: &[RetrievalHit<'_>],
    ) -> ConstraintRecord;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FixtureExtractor;

macro_rules! re {
    ($name:ident, $pat:expr) => {
        static $name: LazyLock<Regex> = LazyLock::new(|| Regex::new($pat).expect("valid pattern"));
    };
}

const NUM: &str = r"(\d[\d,]*)";
const UNIT: &str = r"(days?|weeks?|months?)";

re!(PART, r"Part #([A-Za-z0-9][A-Za-z0-9-]*)");
re!(MOQ_EXACT, &format!(r"(?i)\b(?:MOQ|minimum order quantity)\b[^.]*?\bis\s+{NUM}\s*units"));
re!(MOQ_NONE, r"(?i)\bno\s+(?:MOQ|minimum order(?: quantity)?)\b");
re!(MOQ_FUZZY, &format!(r"(?i)minimum (?:order|purchase)[^.]*?{NUM}\s*units"));
re!(
    CONDITION,
    &format!(
        r"(?i)\bif\b[^.]*?\bat least\s+{NUM}\s*units[^.]*?\b(MOQ|lead time|capacity)\b[^.]*?\b(reduced|increased|raised|lowered) to\s+{NUM}"
    )
);
re!(CONDITION_SCOPE, r"(?i)\bfor (subsequent [^.]*?) in that (quarter|month|year)");
re!(LEAD_STANDARD, &format!(r"(?i)standard lead time is\s+(\d+)\s*{UNIT}"));
re!(
    LEAD_PEAK,
    &format!(
        r"(?i)orders placed between\s+(\d{{1,2}})-([A-Za-z]{{3}})\s+and\s+(\d{{1,2}})-([A-Za-z]{{3}})\s+incur lead time\s+(\d+)\s*{UNIT}"
    )
);
re!(LEAD_FUZZY, &format!(r"(?i)lead[ -]time[^.]*?(\d+)\s*{UNIT}"));
re!(TIER_TABLE, r"(?i)price schedule|unit price|price tiers?");
re!(
    TIER_RANGE,
    &format!(r"{NUM}\s*(?:-{{1,2}}|–|to)\s*{NUM}\s*units:\s*\$\s*(\d+(?:\.\d+)?)")
);
re!(TIER_OPEN, &format!(r"(?:≥|>=|at least)\s*{NUM}\s*units:\s*\$\s*(\d+(?:\.\d+)?)"));
re!(
    CAPACITY_EXACT,
    &format!(r"(?i)\bcap (?:shipments|deliveries|allocations?)?\s*to\s+{NUM}\s*units per\s+(day|week|month)")
);
re!(
    CAPACITY_FUZZY,
    &format!(r"(?i)(?:allocation|capacity)[^.]*?{NUM}\s*units per\s+(day|week|month)")
);
re!(
    INTERVAL,
    &format!(r"(?i)(?:interval of|at least)\s+(\d+)\s*{UNIT}\s+between (?:orders|POs|purchase orders)")
);
re!(SUBSTITUTION, r"(?i)substitut");
re!(SUB_FORBIDDEN, r"(?i)not (?:be )?permitted|prohibited|forbidden|may not|shall not");
re!(SUB_APPROVAL, r"(?i)approv");
re!(SUB_ALLOWED, r"(?i)permitted|allowed|may substitute|may be substituted");

fn parse_num(s: &str) -> Option<u32> {
    s.replace(',', "").parse().ok()
}

/// One field value found in one chunk.
#[derive(Debug, Clone)]
enum Finding {
    Moq(Moq),
    LeadTime(LeadTimeClause),
    Capacity(Rate),
    Interval(Duration),
    Tiers(Vec<PriceTier>),
    Substitution(SubstitutionPolicy),
    Condition(ConditionKind, f64, String),
}

impl Finding {
    fn field(&self) -> Field {
        match self {
            Finding::Moq(_) => Field::Moq,
            Finding::LeadTime(_) => Field::LeadTime,
            Finding::Capacity(_) => Field::CapacityPerPeriod,
            Finding::Interval(_) => Field::OrderInterval,
            Finding::Tiers(_) => Field::PriceTiers,
            Finding::Substitution(_) => Field::SubstitutionPolicy,
            Finding::Condition(..) => Field::Conditions,
        }
    }
}

fn condition_finding(text: &str) -> Option<Finding> {
    let caps = CONDITION.captures(text)?;
    let threshold = parse_num(&caps[1])? as f64;
    let field = match caps[2].to_lowercase().as_str() {
        "moq" => "moq",
        "lead time" => "lead_time",
        _ => "capacity",
    };
    let value = parse_num(&caps[4])?;
    let mut effect = format!("{field}={value}");
    if let Some(scope) = CONDITION_SCOPE.captures(text) {
        effect.push_str(&format!(" for {} in-{}", &scope[1], &scope[2]));
    }
    let kind = if text.to_lowercase().contains("volume") {
        ConditionKind::Volume
    } else {
        ConditionKind::Other
    };
    Some(Finding::Condition(kind, threshold, effect))
}

fn field_finding(text: &str, field: Field) -> Option<(Finding, f64)> {
    match field {
        Field::Moq => {
            if MOQ_NONE.is_match(text) {
                return Some((Finding::Moq(Moq::NotApplicable), EXACT));
            }
            if let Some(c) = MOQ_EXACT.captures(text) {
                return Some((Finding::Moq(Moq::Units(parse_num(&c[1])?)), EXACT));
            }
            MOQ_FUZZY
                .captures(text)
                .and_then(|c| Some((Finding::Moq(Moq::Units(parse_num(&c[1])?)), FUZZY)))
        }
        Field::LeadTime => {
            let (standard, conf) = if let Some(c) = LEAD_STANDARD.captures(text) {
                (Duration::new(parse_num(&c[1])?, c[2].to_lowercase()), EXACT)
            } else if let Some(c) = LEAD_FUZZY.captures(text) {
                (Duration::new(parse_num(&c[1])?, c[2].to_lowercase()), FUZZY)
            } else {
                return None;
            };
            let (peak, peak_window) = match LEAD_PEAK.captures(text) {
                Some(c) => {
                    let window = CalendarWindow {
                        start_day: c[1].parse().ok()?,
                        start_month: month_from_abbrev(&c[2])?,
                        end_day: c[3].parse().ok()?,
                        end_month: month_from_abbrev(&c[4])?,
                    };
                    (Some(Duration::new(parse_num(&c[5])?, c[6].to_lowercase())), Some(window))
                }
                None => (None, None),
            };
            Some((
                Finding::LeadTime(LeadTimeClause {
                    standard,
                    peak,
                    peak_window,
                }),
                conf,
            ))
        }
        Field::CapacityPerPeriod => {
            let (c, conf) = match CAPACITY_EXACT.captures(text) {
                Some(c) => (c, EXACT),
                None => (CAPACITY_FUZZY.captures(text)?, FUZZY),
            };
            Some((
                Finding::Capacity(Rate {
                    quantity: parse_num(&c[1])?,
                    per: c[2].to_lowercase(),
                }),
                conf,
            ))
        }
        Field::OrderInterval => INTERVAL.captures(text).and_then(|c| {
            Some((
                Finding::Interval(Duration::new(parse_num(&c[1])?, c[2].to_lowercase())),
                EXACT,
            ))
        }),
        Field::PriceTiers => {
            if !TIER_TABLE.is_match(text) {
                return None;
            }
            let mut tiers: Vec<(usize, PriceTier)> = Vec::new();
            for c in TIER_RANGE.captures_iter(text) {
                tiers.push((
                    c.get(0)?.start(),
                    PriceTier {
                        threshold: parse_num(&c[1])?,
                        unit_price: c[3].parse().ok()?,
                    },
                ));
            }
            for c in TIER_OPEN.captures_iter(text) {
                tiers.push((
                    c.get(0)?.start(),
                    PriceTier {
                        threshold: parse_num(&c[1])?,
                        unit_price: c[2].parse().ok()?,
                    },
                ));
            }
            if tiers.is_empty() {
                return None;
            }
            tiers.sort_by_key(|(pos, _)| *pos);
            Some((Finding::Tiers(tiers.into_iter().map(|(_, t)| t).collect()), EXACT))
        }
        Field::SubstitutionPolicy => {
            if !SUBSTITUTION.is_match(text) {
                return None;
            }
            let policy = if SUB_FORBIDDEN.is_match(text) {
                SubstitutionPolicy::Forbidden
            } else if SUB_APPROVAL.is_match(text) {
                SubstitutionPolicy::AllowedWithApproval
            } else if SUB_ALLOWED.is_match(text) {
                SubstitutionPolicy::Allowed
            } else {
                return None;
            };
            Some((Finding::Substitution(policy), EXACT))
        }
        Field::Conditions => condition_finding(text).map(|f| (f, EXACT)),
    }
}

/// All findings in a chunk. A conditional clause yields only its condition.
fn chunk_findings(text: &str) -> Vec<(Finding, f64)> {
    if let Some(cond) = condition_finding(text) {
        return vec![(cond, EXACT)];
    }
    [
        Field::Moq,
        Field::LeadTime,
        Field::CapacityPerPeriod,
        Field::OrderInterval,
        Field::PriceTiers,
        Field::SubstitutionPolicy,
    ]
    .into_iter()
    .filter_map(|f| field_finding(text, f))
    .collect()
}

fn apply(record: &mut ConstraintRecord, finding: Finding, conf: f64, chunk: &Chunk) {
    let field = finding.field();
    let span = chunk.span.clone();
    match finding {
        Finding::Moq(m) => record.moq = Some(m),
        Finding::LeadTime(l) => record.lead_time = Some(l),
        Finding::Capacity(r) => record.capacity_per_period = Some(r),
        Finding::Interval(d) => record.order_interval = Some(d),
        Finding::Tiers(t) => record.price_tiers = t,
        Finding::Substitution(p) => record.substitution_policy = Some(p),
        Finding::Condition(kind, threshold, effect_text) => {
            record.conditions.push(ConditionClause {
                kind,
                threshold,
                effect_text,
                evidence: vec![span],
            });
            let c = record.confidence.entry(field).or_insert(conf);
            *c = c.min(conf);
            return;
        }
    }
    record.evidence.insert(field, vec![span]);
    record.confidence.insert(field, conf);
}

fn document_header(doc: &Document) -> String {
    doc.chunks
        .first()
        .map(|c| c.header_context.clone())
        .filter(|h| !h.is_empty())
        .or_else(|| {
            doc.first_block
                .as_ref()
                .map(|s| doc.text[s.start..s.end].to_string())
        })
        .unwrap_or_default()
}

fn parts_in(text: &str) -> Vec<String> {
    let mut parts: Vec<String> = Vec::new();
    for c in PART.captures_iter(text) {
        let p = c[1].to_string();
        if !parts.contains(&p) {
            parts.push(p);
        }
    }
    parts
}

impl FixtureExtractor {
    fn extract_document(&self, doc: &Document) -> Vec<ConstraintRecord> {
        let header = document_header(doc);
        let Some(supplier) = header_value(&header, &["supplier"]) else {
            return Vec::new();
        };
        let scope = DeclaredScope::parse(&header);
        let effective_start = header_value(&header, &["effective"])
            .and_then(|d| NaiveDate::parse_from_str(&d, "%Y-%m-%d").ok())
            .or(doc.meta.effective_start);
        let effective_end = header_value(&header, &["expires", "effective until"])
            .and_then(|d| NaiveDate::parse_from_str(&d, "%Y-%m-%d").ok());
        let doc_parts: Vec<String> = {
            let mut all = Vec::new();
            for c in &doc.chunks {
                for p in parts_in(&c.text) {
                    if !all.contains(&p) {
                        all.push(p);
                    }
                }
            }
            all
        };
        if doc_parts.is_empty() {
            return Vec::new();
        }
        let source = SourceDoc {
            version: doc.meta.version.clone(),
            doc_type: doc.meta.doc_type,
            signed: doc.meta.signed,
            amends: doc.has_amendment_language(),
        };
        let mut records: BTreeMap<String, ConstraintRecord> = BTreeMap::new();
        for chunk in &doc.chunks {
            let findings = chunk_findings(&chunk.text);
            if findings.is_empty() {
                continue;
            }
            let mentioned = parts_in(&chunk.text);
            let targets = if mentioned.is_empty() {
                &doc_parts
            } else {
                &mentioned
            };
            for part in targets {
                let record = records.entry(part.clone()).or_insert_with(|| {
                    let mut r = ConstraintRecord::new(
                        &doc.meta.doc_id,
                        source.clone(),
                        &supplier,
                        part.clone(),
                    );
                    r.scope = Scope {
                        site: scope.site.clone(),
                        region: scope.region.clone(),
                        sku_family: scope.sku_family.clone(),
                    };
                    r.effective_start = effective_start;
                    r.effective_end = effective_end;
                    r
                });
                for (finding, conf) in &findings {
                    apply(record, finding.clone(), *conf, chunk);
                }
            }
        }
        // Records are emitted in order of first mention.
        doc_parts
            .iter()
            .filter_map(|p| records.remove(p))
            .collect()
    }
}

impl Extractor for FixtureExtractor {
    fn extract(&self, corpus: &Corpus, _master: &MasterData) -> Vec<ConstraintRecord> {
        corpus
            .documents()
            .flat_map(|doc| self.extract_document(doc))
            .collect()
    }

    fn reextract_field(
        &self,
        record: &ConstraintRecord,
        field: Field,
        hits: &[RetrievalHit<'_>],
    ) -> ConstraintRecord {
        let mut out = record.clone();
        out.clear_field(field);
        for hit in hits {
            let chunk = hit.chunk;
            if chunk.span.doc_id != record.doc_id || chunk.span.version != record.source.version {
                continue;
            }
            let mentioned = parts_in(&chunk.text);
            if !mentioned.is_empty() && !mentioned.contains(&record.part_id) {
                continue;
            }
            if field == Field::Conditions {
                if let Some(f) = condition_finding(&chunk.text) {
                    apply(&mut out, f, EXACT, chunk);
                }
                continue;
            }
            if condition_finding(&chunk.text).is_some() {
                continue;
            }
            if let Some((finding, conf)) = field_finding(&chunk.text, field) {
                apply(&mut out, finding, conf, chunk);
                break;
            }
        }
        out
    }
}
