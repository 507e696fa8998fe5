use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{
    ConstraintKind, ConstraintSlack, CostBreakdown, Diagnosis, Family, OrderDecision, Plan, PlanError, PlanningModel,
    SlackWeights,
};

/// Largest number of grid schedules the exact search will visit.
pub const SEARCH_LIMIT: u64 = 10_000_000;

const EPS: f64 = 1e-9;

/// Index-based view of a model for the inner loops.
struct Prepared {
    lines: usize,
    horizon: usize,
    part_names: Vec<String>,
    order: Vec<usize>,
    components: Vec<Vec<(usize, i64)>>,
    demand: Vec<Vec<i64>>,
    emergency: Vec<Option<f64>>,
    holding: Vec<f64>,
    initial: Vec<i64>,
    covers: Vec<usize>,
}

impl Prepared {
    fn new(model: &PlanningModel) -> Self {
        let idx: HashMap<&str, usize> = model.parts.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
        let n = model.parts.len();
        let mut components = vec![Vec::new(); n];
        for e in &model.bom {
            components[idx[e.parent.as_str()]].push((idx[e.component.as_str()], e.qty as i64));
        }
        Self {
            lines: model.lines.len(),
            horizon: model.horizon,
            part_names: model.parts.clone(),
            order: model.production_order.iter().map(|p| idx[p.as_str()]).collect(),
            components,
            demand: model
                .parts
                .iter()
                .map(|p| (0..model.horizon).map(|t| model.demand(p, t)).collect())
                .collect(),
            emergency: model.parts.iter().map(|p| model.emergency_cost.get(p).copied()).collect(),
            holding: model
                .parts
                .iter()
                .map(|p| model.holding_cost.get(p).copied().unwrap_or(0.0))
                .collect(),
            initial: model
                .parts
                .iter()
                .map(|p| model.initial_inventory.get(p).copied().unwrap_or(0) as i64)
                .collect(),
            covers: model.lines.iter().map(|l| idx[l.covers()]).collect(),
        }
    }
}

/// Just-in-time recourse for a fixed order schedule: stock and arrivals
/// first, then production for parts with a bill of materials, then
/// emergency buys where a channel exists. What remains is a service
/// shortfall.
pub(crate) struct Simulation {
    pub production: Vec<Vec<i64>>,
    pub emergency: Vec<Vec<i64>>,
    pub inventory: Vec<Vec<i64>>,
    pub shortfall: Vec<Vec<i64>>,
    pub cost: CostBreakdown,
}

fn simulate(model: &PlanningModel, prep: &Prepared, x: &[Vec<u32>]) -> Simulation {
    let n = prep.part_names.len();
    let h = prep.horizon;
    let mut production = vec![vec![0; h]; n];
    let mut emergency = vec![vec![0; h]; n];
    let mut inventory = vec![vec![0; h]; n];
    let mut shortfall = vec![vec![0; h]; n];
    let mut arrivals = vec![vec![0i64; h]; n];
    let mut cost = CostBreakdown::default();

    for (t, row) in x.iter().enumerate() {
        for (l, &q) in row.iter().enumerate() {
            if q == 0 {
                continue;
            }
            let line = &model.lines[l];
            let price = line
                .unit_price(t, q)
                .or_else(|| line.tiers[t].first().map(|k| k.unit_price))
                .unwrap_or(0.0);
            cost.purchase += q as f64 * price;
            let arrive = t + line.lead[t] as usize;
            if arrive < h {
                arrivals[prep.covers[l]][arrive] += q as i64;
            }
        }
    }

    let mut stock = prep.initial.clone();
    for t in 0..h {
        let mut req: Vec<i64> = (0..n).map(|p| prep.demand[p][t]).collect();
        for &p in &prep.order {
            let avail = stock[p] + arrivals[p][t];
            if avail >= req[p] {
                stock[p] = avail - req[p];
                continue;
            }
            let short = req[p] - avail;
            stock[p] = 0;
            if !prep.components[p].is_empty() {
                production[p][t] = short;
                for &(c, qty) in &prep.components[p] {
                    req[c] += qty * short;
                }
            } else if let Some(c) = prep.emergency[p] {
                emergency[p][t] = short;
                cost.emergency += short as f64 * c;
            } else {
                shortfall[p][t] = short;
            }
        }
        for p in 0..n {
            inventory[p][t] = stock[p];
            cost.holding += stock[p] as f64 * prep.holding[p];
        }
    }
    cost.total = cost.purchase + cost.emergency + cost.holding;
    Simulation {
        production,
        emergency,
        inventory,
        shortfall,
        cost,
    }
}

fn check_size(model: &PlanningModel) -> Result<(), PlanError> {
    let schedules = (model.grid.len() as f64).powi((model.horizon * model.lines.len()) as i32);
    if schedules > SEARCH_LIMIT as f64 {
        return Err(PlanError::InstanceTooLarge {
            schedules,
            limit: SEARCH_LIMIT,
        });
    }
    Ok(())
}

/// Contract rows touching order (t, l) that are fully decided once periods
/// up to `t` are fixed, as (family, slack, cluster) triples.
fn local_slacks(model: &PlanningModel, x: &[Vec<u32>], t: usize, l: usize, out: &mut Vec<(Family, f64, usize)>) {
    let line = &model.lines[l];
    let q = x[t][l];
    for (ci, c) in model.constraints.iter().enumerate() {
        let s = match &c.kind {
            ConstraintKind::MoqLower { line: li, period, moq } if *li == l && *period == t => {
                if q > 0 && q < *moq {
                    (*moq - q) as f64
                } else {
                    0.0
                }
            }
            ConstraintKind::Capacity { line: li, period, cap } if *li == l && *period == t => q.saturating_sub(*cap) as f64,
            ConstraintKind::TierThreshold { line: li, period } if *li == l && *period == t => {
                let min = line.tiers[t].first().map_or(0, |k| k.threshold);
                if q > 0 && q < min {
                    (min - q) as f64
                } else {
                    0.0
                }
            }
            ConstraintKind::Cadence { line: li, period, other } if *li == l && *other == t => {
                if q > 0 && x[*period][l] > 0 {
                    1.0
                } else {
                    0.0
                }
            }
            ConstraintKind::Forbidden { line: li, period } if *li == l && *period == t => q as f64,
            _ => continue,
        };
        if s > 0.0 {
            out.push((c.family, s, ci));
        }
    }
}

/// Fast feasibility of order (t, l) given earlier periods.
fn local_ok(model: &PlanningModel, x: &[Vec<u32>], t: usize, l: usize) -> bool {
    let q = x[t][l];
    if q == 0 {
        return true;
    }
    let line = &model.lines[l];
    if !line.allowed || q > line.big_m[t] {
        return false;
    }
    if line.moq[t].is_some_and(|m| q < m) || line.cap[t].is_some_and(|c| q > c) {
        return false;
    }
    if !line.tiers[t].is_empty() && line.tier_for(t, q).is_none() {
        return false;
    }
    (0..t).all(|s| x[s][l] == 0 || s + line.interval[s] as usize <= t)
}

fn order_cost(model: &PlanningModel, t: usize, l: usize, q: u32) -> f64 {
    if q == 0 {
        return 0.0;
    }
    q as f64 * model.lines[l].unit_price(t, q).unwrap_or(0.0)
}

struct Best {
    cost: f64,
    schedule: Option<Vec<Vec<u32>>>,
}

fn dfs(model: &PlanningModel, prep: &Prepared, x: &mut Vec<Vec<u32>>, v: usize, partial: f64, best: &mut Best) {
    if best.schedule.is_some() && partial >= best.cost - EPS {
        return;
    }
    if v == prep.horizon * prep.lines {
        let sim = simulate(model, prep, x);
        if sim.shortfall.iter().flatten().all(|&s| s == 0) && sim.cost.total < best.cost - EPS {
            best.cost = sim.cost.total;
            best.schedule = Some(x.clone());
        }
        return;
    }
    let (t, l) = (v / prep.lines, v % prep.lines);
    for &q in &model.grid {
        x[t][l] = q;
        if local_ok(model, x, t, l) {
            dfs(model, prep, x, v + 1, partial + order_cost(model, t, l, q), best);
        }
    }
    x[t][l] = 0;
}

fn build_plan(model: &PlanningModel, prep: &Prepared, schedule: Vec<Vec<u32>>) -> Plan {
    let sim = simulate(model, prep, &schedule);
    let mut orders = Vec::new();
    let mut tiers = vec![vec![None; prep.lines]; prep.horizon];
    for (t, row) in schedule.iter().enumerate() {
        for (l, &q) in row.iter().enumerate() {
            if q == 0 {
                continue;
            }
            let line = &model.lines[l];
            let tier = if line.tiers[t].is_empty() { None } else { line.tier_for(t, q) };
            tiers[t][l] = tier;
            orders.push(OrderDecision {
                line: l,
                supplier: line.supplier.clone(),
                part: line.part.clone(),
                period: t + 1,
                quantity: q,
                arrival_period: t + 1 + line.lead[t] as usize,
                tier,
                unit_price: line.unit_price(t, q).unwrap_or(0.0),
            });
        }
    }
    let named = |rows: Vec<Vec<i64>>| -> BTreeMap<String, Vec<i64>> {
        prep.part_names.iter().cloned().zip(rows).collect()
    };
    Plan {
        schedule,
        orders,
        tiers,
        production: named(sim.production),
        emergency: named(sim.emergency),
        inventory: named(sim.inventory),
        cost: sim.cost,
    }
}

/// Minimum-cost grid schedule; ties go to the lexicographically smallest
/// schedule in period-major, line, ascending-quantity order.
pub fn optimize(model: &PlanningModel) -> Result<Plan, PlanError> {
    check_size(model)?;
    let prep = Prepared::new(model);
    let mut x = vec![vec![0u32; prep.lines]; prep.horizon];
    let mut best = Best {
        cost: f64::INFINITY,
        schedule: None,
    };
    dfs(model, &prep, &mut x, 0, 0.0, &mut best);
    match best.schedule {
        Some(s) => Ok(build_plan(model, &prep, s)),
        None => Err(PlanError::Infeasible(Box::new(diagnose(model)?))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(Box<Plan>),
    Infeasible(Box<Diagnosis>),
}

pub fn check_feasibility(model: &PlanningModel) -> Result<Feasibility, PlanError> {
    match optimize(model) {
        Ok(plan) => Ok(Feasibility::Feasible(Box::new(plan))),
        Err(PlanError::Infeasible(d)) => Ok(Feasibility::Infeasible(d)),
        Err(e) => Err(e),
    }
}

pub fn diagnose(model: &PlanningModel) -> Result<Diagnosis, PlanError> {
    diagnose_with(model, &SlackWeights::default())
}

struct SlackSearch<'a> {
    model: &'a PlanningModel,
    prep: Prepared,
    weights: &'a SlackWeights,
    best_total: f64,
    best_structural: f64,
    best: Option<(Vec<Vec<u32>>, Vec<(Family, f64, usize)>)>,
    /// Slack rows seen in schedules tied at `best_total`.
    tied_rows: BTreeSet<usize>,
}

impl SlackSearch<'_> {
    fn visit(&mut self, x: &mut Vec<Vec<u32>>, v: usize, local: &mut Vec<(Family, f64, usize)>, partial: f64) {
        if partial > self.best_total + EPS {
            return;
        }
        let prep = &self.prep;
        if v == prep.horizon * prep.lines {
            let sim = simulate(self.model, prep, x);
            let mut rows = local.clone();
            for (ci, c) in self.model.constraints.iter().enumerate() {
                if let ConstraintKind::Service { part, period } = &c.kind {
                    let p = prep.part_names.iter().position(|n| n == part).expect("known part");
                    let s = sim.shortfall[p][*period];
                    if s > 0 {
                        rows.push((Family::Service, s as f64, ci));
                    }
                }
            }
            let structural: f64 = rows
                .iter()
                .filter(|r| r.0.is_structural())
                .map(|r| self.weights.weight(r.0) * r.1)
                .sum();
            let total = partial + structural;
            if total < self.best_total - EPS {
                self.tied_rows.clear();
            }
            if total <= self.best_total + EPS {
                self.tied_rows.extend(rows.iter().map(|r| r.2));
            }
            let better = total < self.best_total - EPS
                || ((total - self.best_total).abs() <= EPS && structural < self.best_structural - EPS);
            if better {
                self.best_total = self.best_total.min(total);
                self.best_structural = structural;
                self.best = Some((x.clone(), rows));
            }
            return;
        }
        let (t, l) = (v / prep.lines, v % prep.lines);
        let grid = self.model.grid.clone();
        for q in grid {
            x[t][l] = q;
            let mark = local.len();
            local_slacks(self.model, x, t, l, local);
            let added: f64 = local[mark..].iter().map(|r| self.weights.weight(r.0) * r.1).sum();
            self.visit(x, v + 1, local, partial + added);
            local.truncate(mark);
        }
        x[t][l] = 0;
    }
}

/// Minimizes the weighted slack sum over the grid. Among schedules with
/// equal weighted slack the one with least structural (service) slack is
/// reported, so that contract families are named when they explain the
/// infeasibility as well as unmet demand does.
pub fn diagnose_with(model: &PlanningModel, weights: &SlackWeights) -> Result<Diagnosis, PlanError> {
    check_size(model)?;
    let prep = Prepared::new(model);
    let mut search = SlackSearch {
        model,
        weights,
        prep,
        best_total: f64::INFINITY,
        best_structural: f64::INFINITY,
        best: None,
        tied_rows: BTreeSet::new(),
    };
    let mut x = vec![vec![0u32; search.prep.lines]; search.prep.horizon];
    search.visit(&mut x, 0, &mut Vec::new(), 0.0);
    let (schedule, rows) = search.best.expect("the grid is non-empty");

    let mut family_totals: BTreeMap<Family, f64> = BTreeMap::new();
    let mut slacks = Vec::new();
    for &(family, slack, ci) in &rows {
        let w = weights.weight(family);
        *family_totals.entry(family).or_default() += w * slack;
        slacks.push(ConstraintSlack {
            id: model.constraints[ci].id.clone(),
            family,
            slack,
            weight: w,
        });
    }
    slacks.sort_by(|a, b| a.id.cmp(&b.id));
    let dominant_family = family_totals
        .iter()
        .fold(None::<(Family, f64)>, |acc, (&f, &v)| match acc {
            Some((_, best)) if best >= v - EPS => acc,
            _ if v > EPS => Some((f, v)),
            _ => acc,
        })
        .map(|(f, _)| f);
    let mut conflicting_families = BTreeSet::new();
    let mut implicated_clusters = BTreeSet::new();
    for &ci in &search.tied_rows {
        let c = &model.constraints[ci];
        if !c.family.is_structural() {
            conflicting_families.insert(c.family);
            if let Some(id) = &c.cluster_id {
                implicated_clusters.insert(id.clone());
            }
        }
    }
    Ok(Diagnosis {
        feasible: search.best_total <= EPS,
        schedule,
        slacks,
        family_totals,
        total_weighted_slack: search.best_total,
        dominant_family,
        conflicting_families,
        implicated_clusters,
    })
}

/// Cost of one schedule under the model's recourse, ignoring contract rows.
pub fn schedule_cost(model: &PlanningModel, schedule: &[Vec<u32>]) -> CostBreakdown {
    simulate(model, &Prepared::new(model), schedule).cost
}
