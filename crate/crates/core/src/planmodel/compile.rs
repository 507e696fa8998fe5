use serde::{Deserialize, Serialize};

use super::{ConstraintKind, Family, LineModel, ModelConstraint, PlanError, PlanningInstance, PlanningModel, Provenance};
use crate::consolidate::{ConsolidatedConstraintSet, ConsolidatedEntry, FieldValue};
use crate::schema::{Field, MasterData, Moq, Scope, SubstitutionPolicy};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileOptions {
    /// A missing MOQ compiles as "no MOQ" instead of failing.
    pub allow_absent_moq: bool,
}

struct Lookup<'a> {
    set: &'a ConsolidatedConstraintSet,
    instance: &'a PlanningInstance,
    site: String,
    region: Option<String>,
}

impl<'a> Lookup<'a> {
    fn applies(&self, scope: &Scope, part: &str) -> bool {
        scope.site.as_ref().is_none_or(|s| s.eq_ignore_ascii_case(&self.site))
            && scope.region.as_ref().is_none_or(|r| self.region.as_ref() == Some(r))
            && scope
                .sku_family
                .as_ref()
                .is_none_or(|f| self.instance.sku_families.get(part) == Some(f))
    }

    /// Most specific applicable entry in force at the start of period `t`.
    fn get(&self, supplier: &str, part: &str, field: Field, t: usize) -> Option<&'a ConsolidatedEntry> {
        let date = self.instance.calendar.period_start(t);
        let mut best: Option<&ConsolidatedEntry> = None;
        for e in self.set.for_line(supplier, part, field) {
            if !self.applies(&e.key.scope, part) || !e.key.window.contains(date) {
                continue;
            }
            if best.is_none_or(|b| e.key.scope.specificity() > b.key.scope.specificity()) {
                best = Some(e);
            }
        }
        best
    }
}

fn provenance(e: &ConsolidatedEntry) -> Provenance {
    match &e.attestation {
        Some(a) if e.provenance.is_empty() => Provenance::HumanAttestation {
            gate_id: a.gate_id.clone(),
            resolved_by: a.resolved_by.clone(),
            note: a.note.clone(),
        },
        _ => Provenance::Evidence {
            spans: e.provenance.clone(),
        },
    }
}

struct Rows(Vec<ModelConstraint>);

impl Rows {
    fn push(&mut self, family: Family, kind: ConstraintKind, provenance: Provenance, cluster: Option<&ConsolidatedEntry>) {
        let id = format!("c{:04}", self.0.len() + 1);
        self.0.push(ModelConstraint {
            id,
            family,
            kind,
            provenance,
            cluster_id: cluster.map(|e| e.cluster_id.clone()),
        });
    }
}

/// Compiles consolidated terms and instance data into a planning model.
pub fn compile(
    consolidated: &ConsolidatedConstraintSet,
    instance: &PlanningInstance,
    master: &MasterData,
    options: &CompileOptions,
) -> Result<PlanningModel, PlanError> {
    let production_order = instance.validate()?;
    let node = instance.node()?;
    let lookup = Lookup {
        set: consolidated,
        instance,
        site: node.id.trim().to_uppercase(),
        region: node.region.clone(),
    };
    let horizon = instance.horizon;
    let grid = instance.grid();
    let grid_max = *grid.last().expect("grid contains 0");
    let mut rows = Rows(Vec::new());
    let mut lines = Vec::new();

    for (li, ol) in instance.order_lines.iter().enumerate() {
        let missing = |field: Field, t: usize| PlanError::MissingConstraint {
            supplier: ol.supplier.clone(),
            part: ol.part.clone(),
            field,
            period: t + 1,
        };

        let mut allowed = true;
        let mut approval = None;
        let mut forbid_prov = Provenance::Structural;
        let mut forbid_entry = None;
        if let Some(base) = &ol.serves {
            let avl = master.approved_substitute(base, &ol.part);
            approval = avl.and_then(|a| a.approval_evidence.clone());
            allowed = avl.is_some();
            if let Some(e) = lookup.get(&ol.supplier, &ol.part, Field::SubstitutionPolicy, 0) {
                if e.value == FieldValue::Substitution(SubstitutionPolicy::Forbidden) {
                    allowed = false;
                    forbid_prov = provenance(e);
                    forbid_entry = Some(e);
                }
            }
        }

        let mut line = LineModel {
            supplier: ol.supplier.clone(),
            part: ol.part.clone(),
            serves: ol.serves.clone(),
            moq: vec![None; horizon],
            cap: vec![None; horizon],
            lead: vec![0; horizon],
            big_m: vec![grid_max; horizon],
            interval: vec![1; horizon],
            tiers: vec![Vec::new(); horizon],
            unit_cost: instance.costs.unit_cost(&ol.supplier, &ol.part),
            allowed,
            approval,
        };

        if !allowed {
            for t in 0..horizon {
                rows.push(
                    Family::Substitution,
                    ConstraintKind::Forbidden { line: li, period: t },
                    forbid_prov.clone(),
                    forbid_entry,
                );
            }
            lines.push(line);
            continue;
        }

        for t in 0..horizon {
            let moq_entry = lookup.get(&ol.supplier, &ol.part, Field::Moq, t);
            line.moq[t] = match moq_entry.map(|e| &e.value) {
                Some(FieldValue::Moq(Moq::Units(u))) if *u > 0 => Some(*u),
                Some(_) => None,
                None if options.allow_absent_moq => None,
                None => return Err(missing(Field::Moq, t)),
            };
            line.lead[t] = match lookup.get(&ol.supplier, &ol.part, Field::LeadTime, t).map(|e| &e.value) {
                Some(FieldValue::LeadTime(l)) => l.at(instance.calendar.period_start(t)),
                _ => return Err(missing(Field::LeadTime, t)),
            };
            let cap_entry = lookup.get(&ol.supplier, &ol.part, Field::CapacityPerPeriod, t);
            if let Some(FieldValue::Capacity(c)) = cap_entry.map(|e| &e.value) {
                line.cap[t] = Some(*c);
                line.big_m[t] = grid_max.min(*c);
            }
            let interval_entry = lookup.get(&ol.supplier, &ol.part, Field::OrderInterval, t);
            if let Some(FieldValue::OrderInterval(i)) = interval_entry.map(|e| &e.value) {
                line.interval[t] = (*i).max(1);
            }
            let tier_entry = lookup.get(&ol.supplier, &ol.part, Field::PriceTiers, t);
            if let Some(FieldValue::PriceTiers(tiers)) = tier_entry.map(|e| &e.value) {
                line.tiers[t] = tiers.clone();
            }
            if line.tiers[t].is_empty() && line.unit_cost.is_none() {
                return Err(PlanError::InvalidInstance(format!(
                    "order line {} has neither a unit cost nor price tiers",
                    line.describe()
                )));
            }

            if let (Some(moq), Some(e)) = (line.moq[t], moq_entry) {
                rows.push(Family::Moq, ConstraintKind::MoqLower { line: li, period: t, moq }, provenance(e), Some(e));
            }
            let (m_prov, m_entry) = match cap_entry {
                Some(e) if line.cap[t].is_some_and(|c| c < grid_max) => (provenance(e), Some(e)),
                _ => (Provenance::Structural, None),
            };
            rows.push(
                Family::Moq,
                ConstraintKind::BigM {
                    line: li,
                    period: t,
                    m: line.big_m[t],
                },
                m_prov,
                m_entry,
            );
            if let (Some(cap), Some(e)) = (line.cap[t], cap_entry) {
                rows.push(Family::Capacity, ConstraintKind::Capacity { line: li, period: t, cap }, provenance(e), Some(e));
            }
            if let (false, Some(e)) = (line.tiers[t].is_empty(), tier_entry) {
                rows.push(Family::Tier, ConstraintKind::TierChoice { line: li, period: t }, provenance(e), Some(e));
                rows.push(Family::Tier, ConstraintKind::TierThreshold { line: li, period: t }, provenance(e), Some(e));
            }
            if let Some(e) = interval_entry {
                for other in t + 1..(t + line.interval[t] as usize).min(horizon) {
                    rows.push(
                        Family::Cadence,
                        ConstraintKind::Cadence { line: li, period: t, other },
                        provenance(e),
                        Some(e),
                    );
                }
            }
        }
        lines.push(line);
    }

    for p in &instance.parts {
        for t in 0..horizon {
            rows.push(
                Family::Balance,
                ConstraintKind::Balance { part: p.clone(), period: t },
                Provenance::Structural,
                None,
            );
            rows.push(
                Family::Service,
                ConstraintKind::Service { part: p.clone(), period: t },
                Provenance::Structural,
                None,
            );
        }
    }

    Ok(PlanningModel {
        node: node.id.clone(),
        horizon,
        period_starts: (0..horizon).map(|t| instance.calendar.period_start(t)).collect(),
        grid,
        parts: instance.parts.clone(),
        production_order,
        lines,
        bom: instance.bom.clone(),
        demand: instance.demand.clone(),
        emergency_cost: instance.costs.emergency_cost.clone(),
        holding_cost: instance.costs.holding_cost.clone(),
        initial_inventory: instance.initial_inventory.clone(),
        constraints: rows.0,
    })
}
