use super::{ConstraintKind, Plan, PlanningModel};

/// Checks every model row against the plan's variable values, rebuilding
/// z, u, arrivals and usage from the plan alone. Returns the violated rows.
pub fn recheck(model: &PlanningModel, plan: &Plan) -> Vec<String> {
    let mut bad = Vec::new();
    let h = model.horizon;
    if plan.schedule.len() != h || plan.schedule.iter().any(|r| r.len() != model.lines.len()) {
        return vec!["schedule shape does not match the model".into()];
    }
    let x = |l: usize, t: usize| plan.schedule[t][l] as i64;
    let z = |l: usize, t: usize| i64::from(plan.schedule[t][l] > 0);
    let series = |m: &std::collections::BTreeMap<String, Vec<i64>>, p: &str, t: usize| {
        m.get(p).and_then(|v| v.get(t)).copied().unwrap_or(0)
    };

    for c in &model.constraints {
        let ok = match &c.kind {
            ConstraintKind::MoqLower { line, period, moq } => x(*line, *period) >= *moq as i64 * z(*line, *period),
            ConstraintKind::BigM { line, period, m } => x(*line, *period) <= *m as i64 * z(*line, *period),
            ConstraintKind::Capacity { line, period, cap } => x(*line, *period) <= *cap as i64,
            ConstraintKind::TierChoice { line, period } => {
                let u = plan.tiers[*period][*line];
                i64::from(u.is_some()) == z(*line, *period)
                    && u.is_none_or(|k| k < model.lines[*line].tiers[*period].len())
            }
            ConstraintKind::TierThreshold { line, period } => {
                let tau = plan.tiers[*period][*line].map_or(0, |k| model.lines[*line].tiers[*period][k].threshold);
                x(*line, *period) >= tau as i64
            }
            ConstraintKind::Cadence { line, period, other } => z(*line, *period) + z(*line, *other) <= 1,
            ConstraintKind::Forbidden { line, period } => x(*line, *period) == 0,
            ConstraintKind::Balance { part, period } => {
                let t = *period;
                let prev = if t == 0 {
                    model.initial_inventory.get(part).copied().unwrap_or(0) as i64
                } else {
                    series(&plan.inventory, part, t - 1)
                };
                let arrivals: i64 = model
                    .lines
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| l.covers() == part)
                    .map(|(li, l)| {
                        (0..=t)
                            .filter(|&s| s + l.lead[s] as usize == t)
                            .map(|s| x(li, s))
                            .sum::<i64>()
                    })
                    .sum();
                let usage: i64 = model
                    .bom
                    .iter()
                    .filter(|e| &e.component == part)
                    .map(|e| e.qty as i64 * series(&plan.production, &e.parent, t))
                    .sum();
                let lhs = series(&plan.inventory, part, t);
                let rhs = prev + arrivals + series(&plan.emergency, part, t) + series(&plan.production, part, t)
                    - usage
                    - model.demand(part, t);
                lhs == rhs
            }
            ConstraintKind::Service { part, period } => {
                series(&plan.inventory, part, *period) >= 0
                    && series(&plan.emergency, part, *period) >= 0
                    && series(&plan.production, part, *period) >= 0
                    && (series(&plan.emergency, part, *period) == 0 || model.emergency_cost.contains_key(part))
            }
        };
        if !ok {
            bad.push(format!("{} [{}] violated", c.id, c.family));
        }
    }

    let mut purchase = 0.0;
    for (t, row) in plan.schedule.iter().enumerate() {
        for (l, &q) in row.iter().enumerate() {
            if q > 0 {
                let line = &model.lines[l];
                let price = match plan.tiers[t][l] {
                    Some(k) => line.tiers[t][k].unit_price,
                    None => line.unit_cost.unwrap_or(f64::NAN),
                };
                purchase += q as f64 * price;
            }
        }
    }
    let emergency: f64 = plan
        .emergency
        .iter()
        .map(|(p, v)| v.iter().sum::<i64>() as f64 * model.emergency_cost.get(p).copied().unwrap_or(0.0))
        .sum();
    let holding: f64 = plan
        .inventory
        .iter()
        .map(|(p, v)| v.iter().sum::<i64>() as f64 * model.holding_cost.get(p).copied().unwrap_or(0.0))
        .sum();
    let total = purchase + emergency + holding;
    if !((total - plan.cost.total).abs() <= 1e-6 * total.abs().max(1.0)) {
        bad.push(format!("cost {} does not match recomputed {total}", plan.cost.total));
    }
    bad
}
