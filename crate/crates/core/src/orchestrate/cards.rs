use serde::{Deserialize, Serialize};

use crate::consolidate::ConsolidatedConstraintSet;
use crate::corpus::{Corpus, EvidenceSpan};
use crate::planmodel::{optimize, ConstraintKind, Family, ModelConstraint, Plan, PlanError, PlanningModel, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingConstraint {
    pub family: Family,
    pub constraint_id: String,
    pub value: String,
    pub provenance: Provenance,
    /// Line pointers such as `Addendum-3:L1`, or raw spans when a chunk has
    /// no label.
    pub evidence: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_id: Option<String>,
    pub human_attested: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionCard {
    pub card_id: String,
    pub decision: String,
    pub binding_constraints: Vec<BindingConstraint>,
    pub sensitivity_note: String,
    pub conditional_collapse_notes: Vec<String>,
}

enum Effect {
    Changed,
    Unchanged,
    Infeasible,
    NotSolved(String),
}

impl Effect {
    fn phrase(&self) -> String {
        match self {
            Effect::Changed => "changes plan".into(),
            Effect::Unchanged => "leaves plan unchanged".into(),
            Effect::Infeasible => "makes the model infeasible".into(),
            Effect::NotSolved(why) => format!("could not be re-solved ({why})"),
        }
    }
}

/// Re-solves `model` after `edit` and compares the decision `x[t][line]`.
fn perturb(model: &PlanningModel, plan: &Plan, line: usize, t: usize, edit: impl FnOnce(&mut PlanningModel)) -> Effect {
    let mut m = model.clone();
    edit(&mut m);
    match optimize(&m) {
        Ok(p) if p.schedule[t][line] == plan.schedule[t][line] => Effect::Unchanged,
        Ok(_) => Effect::Changed,
        Err(PlanError::Infeasible(_)) => Effect::Infeasible,
        Err(e) => Effect::NotSolved(e.to_string()),
    }
}

fn labels(spans: &[EvidenceSpan], corpus: &Corpus) -> Vec<String> {
    spans
        .iter()
        .map(|s| corpus.chunk_for(s).and_then(|c| c.pointer()).unwrap_or_else(|| s.to_string()))
        .collect()
}

fn binding(row: &ModelConstraint, value: String, corpus: &Corpus) -> BindingConstraint {
    BindingConstraint {
        family: row.family,
        constraint_id: row.id.clone(),
        value,
        evidence: labels(row.provenance.spans(), corpus),
        provenance: row.provenance.clone(),
        cluster_id: row.cluster_id.clone(),
        human_attested: matches!(row.provenance, Provenance::HumanAttestation { .. }),
    }
}

fn find(model: &PlanningModel, pred: impl Fn(&ConstraintKind) -> bool) -> Option<&ModelConstraint> {
    model.constraints.iter().find(|c| pred(&c.kind))
}

fn step_up(grid: &[u32], v: u32) -> Option<u32> {
    grid.iter().copied().find(|&g| g > v)
}

fn step_down(grid: &[u32], v: u32) -> Option<u32> {
    grid.iter().rev().copied().find(|&g| g < v)
}

fn collapse_notes(
    model: &PlanningModel,
    line: usize,
    t: usize,
    consolidated: &ConsolidatedConstraintSet,
    corpus: &Corpus,
) -> Vec<String> {
    let mut clusters: Vec<&str> = model
        .constraints
        .iter()
        .filter(|c| match c.kind {
            ConstraintKind::MoqLower { line: l, period, .. }
            | ConstraintKind::BigM { line: l, period, .. }
            | ConstraintKind::Capacity { line: l, period, .. }
            | ConstraintKind::TierChoice { line: l, period }
            | ConstraintKind::TierThreshold { line: l, period }
            | ConstraintKind::Cadence { line: l, period, .. }
            | ConstraintKind::Forbidden { line: l, period } => l == line && period == t,
            _ => false,
        })
        .filter_map(|c| c.cluster_id.as_deref())
        .collect();
    clusters.sort();
    clusters.dedup();
    let mut notes = Vec::new();
    for id in clusters {
        let Some(entry) = consolidated.by_cluster_id(id) else { continue };
        for note in &entry.collapsed_conditions {
            notes.push(format!(
                "conditional clause \"{}\" ({}) not applied; {} kept at {}",
                note.effect,
                labels(&note.evidence, corpus).join(", "),
                entry.key.field.display_name(),
                entry.value
            ));
        }
    }
    notes
}

/// One card per nonzero order, naming the constraints it meets with
/// equality and the tier it falls in, plus one card per substitution
/// decision.
pub fn build_decision_cards(
    plan: &Plan,
    model: &PlanningModel,
    consolidated: &ConsolidatedConstraintSet,
    corpus: &Corpus,
) -> Vec<DecisionCard> {
    let mut cards = Vec::new();
    let mut push = |decision: String, binding: Vec<BindingConstraint>, sensitivity: Vec<String>, notes: Vec<String>| {
        let sensitivity_note = if sensitivity.is_empty() {
            "no contract constraint binds; the quantity is set by cost".to_string()
        } else {
            sensitivity.join("; ")
        };
        cards.push(DecisionCard {
            card_id: format!("card-{:02}", cards.len() + 1),
            decision,
            binding_constraints: binding,
            sensitivity_note,
            conditional_collapse_notes: notes,
        });
    };

    for o in &plan.orders {
        let (l, t, q) = (o.line, o.period - 1, o.quantity);
        let line = &model.lines[l];
        let mut bound = Vec::new();
        let mut sens = Vec::new();

        if line.moq[t] == Some(q) {
            if let Some(row) = find(model, |k| matches!(k, ConstraintKind::MoqLower { line, period, .. } if *line == l && *period == t)) {
                bound.push(binding(row, format!("MOQ {q} units"), corpus));
                sens.push(match step_up(&model.grid, q) {
                    Some(up) => format!(
                        "raising MOQ one step ({q} to {up}) {}",
                        perturb(model, plan, l, t, |m| m.lines[l].moq[t] = Some(up)).phrase()
                    ),
                    None => format!("MOQ {q} is the top of the order grid"),
                });
            }
        }
        if line.cap[t] == Some(q) {
            if let Some(row) = find(model, |k| matches!(k, ConstraintKind::Capacity { line, period, .. } if *line == l && *period == t)) {
                bound.push(binding(row, format!("capacity {q} units per period"), corpus));
                let down = step_down(&model.grid, q).unwrap_or(0);
                let effect = perturb(model, plan, l, t, |m| {
                    m.lines[l].cap[t] = Some(down);
                    m.lines[l].big_m[t] = m.lines[l].big_m[t].min(down);
                });
                sens.push(format!("lowering capacity one step ({q} to {down}) {}", effect.phrase()));
            }
        }
        if let Some(k) = o.tier {
            let tier = line.tiers[t][k];
            if let Some(row) = find(model, |kind| matches!(kind, ConstraintKind::TierThreshold { line, period } if *line == l && *period == t)) {
                let upper = line.tiers[t].get(k + 1).map(|n| format!(", below {}", n.threshold)).unwrap_or_default();
                bound.push(binding(
                    row,
                    format!("tier threshold {} @ {:.2}{upper}", tier.threshold, tier.unit_price),
                    corpus,
                ));
                if tier.threshold > 0 {
                    sens.push(match step_up(&model.grid, tier.threshold) {
                        Some(up) => format!(
                            "raising the {:.2} tier threshold one step ({} to {up}) {}",
                            tier.unit_price,
                            tier.threshold,
                            perturb(model, plan, l, t, |m| m.lines[l].tiers[t][k].threshold = up).phrase()
                        ),
                        None => format!("tier threshold {} is the top of the order grid", tier.threshold),
                    });
                }
            }
        }
        let tier_text = o
            .tier
            .map(|k| format!(" at tier {} @ {:.2}", line.tiers[t][k].threshold, line.tiers[t][k].unit_price))
            .unwrap_or_default();
        let decision = format!(
            "order {q} units of {} in period {}, arriving in period {}{tier_text}",
            line.describe(),
            o.period,
            o.arrival_period
        );
        let notes = collapse_notes(model, l, t, consolidated, corpus);
        push(decision, bound, sens, notes);
    }

    for (l, line) in model.lines.iter().enumerate() {
        let Some(base) = &line.serves else { continue };
        let used = plan.schedule.iter().any(|row| row[l] > 0);
        if !line.allowed {
            let Some(row) = find(model, |k| matches!(k, ConstraintKind::Forbidden { line, .. } if *line == l)) else {
                continue;
            };
            let value = match row.provenance {
                Provenance::Structural => "not on the approved vendor list".to_string(),
                _ => "substitution not permitted".to_string(),
            };
            let decision = format!("do not order {} as a substitute for {base}", line.describe());
            let sens = vec!["withdrawing the prohibition is not re-solved: the substitute line carries no compiled terms".into()];
            push(decision, vec![binding(row, value, corpus)], sens, collapse_notes(model, l, 0, consolidated, corpus));
        } else if used {
            let spans: Vec<EvidenceSpan> = line.approval.iter().cloned().collect();
            let provenance = if spans.is_empty() {
                Provenance::Structural
            } else {
                Provenance::MasterData {
                    spans: spans.clone(),
                    note: "approved vendor list".into(),
                }
            };
            let approval = BindingConstraint {
                family: Family::Substitution,
                constraint_id: format!("avl-{}", l + 1),
                value: format!("{} approved as a substitute for {base}", line.part),
                evidence: labels(&spans, corpus),
                provenance,
                cluster_id: None,
                human_attested: false,
            };
            let t = plan.schedule.iter().position(|row| row[l] > 0).unwrap_or(0);
            let effect = perturb(model, plan, l, t, |m| m.lines[l].allowed = false);
            let decision = format!("use {} as a substitute for {base}", line.describe());
            let sens = vec![format!("withdrawing the approval {}", effect.phrase())];
            push(decision, vec![approval], sens, Vec::new());
        }
    }
    cards
}
