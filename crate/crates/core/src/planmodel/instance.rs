use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use petgraph::algo::toposort;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::PlanError;

/// Default quantized order grid.
pub const DEFAULT_GRID: [u32; 9] = [0, 50, 100, 150, 200, 300, 400, 450, 600];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningCalendar {
    pub start_date: NaiveDate,
    pub period_length_days: u32,
}

impl PlanningCalendar {
    pub fn period_start(&self, t: usize) -> NaiveDate {
        self.start_date + Duration::days(t as i64 * self.period_length_days as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderLine {
    pub supplier: String,
    pub part: String,
    /// Part whose requirements this line's arrivals cover, when it is a
    /// substitute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub serves: Option<String>,
}

impl OrderLine {
    pub fn covers(&self) -> &str {
        self.serves.as_deref().unwrap_or(&self.part)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BomEdge {
    pub parent: String,
    pub component: String,
    /// Units of `component` per unit of `parent`.
    pub qty: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitCost {
    pub supplier: String,
    pub part: String,
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Costs {
    #[serde(default)]
    pub unit_cost: Vec<UnitCost>,
    /// Parts without an entry have no emergency channel.
    #[serde(default)]
    pub emergency_cost: BTreeMap<String, f64>,
    #[serde(default)]
    pub holding_cost: BTreeMap<String, f64>,
}

impl Costs {
    pub fn unit_cost(&self, supplier: &str, part: &str) -> Option<f64> {
        self.unit_cost
            .iter()
            .find(|u| u.supplier == supplier && u.part == part)
            .map(|u| u.cost)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningInstance {
    pub nodes: Vec<Node>,
    pub horizon: usize,
    pub calendar: PlanningCalendar,
    #[serde(default)]
    pub suppliers: Vec<String>,
    pub parts: Vec<String>,
    #[serde(default)]
    pub finished_goods: Vec<String>,
    pub order_lines: Vec<OrderLine>,
    #[serde(default)]
    pub bom: Vec<BomEdge>,
    /// Per-part demand by period, length `horizon`.
    #[serde(default)]
    pub demand: BTreeMap<String, Vec<u32>>,
    #[serde(default)]
    pub costs: Costs,
    #[serde(default)]
    pub initial_inventory: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sku_families: BTreeMap<String, String>,
}

impl PlanningInstance {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PlanError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PlanError::InvalidInstance(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PlanError::InvalidInstance(format!("{}: {e}", path.display())))
    }

    pub fn grid(&self) -> Vec<u32> {
        let mut g = self.grid.clone().unwrap_or_else(|| DEFAULT_GRID.to_vec());
        g.sort_unstable();
        g.dedup();
        g
    }

    pub fn node(&self) -> Result<&Node, PlanError> {
        match self.nodes.as_slice() {
            [n] => Ok(n),
            [] => Err(PlanError::InvalidInstance("instance declares no node".into())),
            many => Err(PlanError::MultiNodeUnsupported(many.len())),
        }
    }

    /// Checks referential integrity and returns parts in production order:
    /// every parent before its components.
    pub fn validate(&self) -> Result<Vec<String>, PlanError> {
        self.node()?;
        let bad = |m: String| Err(PlanError::InvalidInstance(m));
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.calendar.period_length_days == 0 {
            return bad("period_length_days must be positive".into());
        }
        let parts: BTreeSet<&str> = self.parts.iter().map(String::as_str).collect();
        if parts.len() != self.parts.len() {
            return bad("duplicate part id".into());
        }
        let known = |p: &str, ctx: &str| {
            if parts.contains(p) {
                Ok(())
            } else {
                Err(PlanError::InvalidInstance(format!("{ctx} references unknown part {p}")))
            }
        };
        for f in &self.finished_goods {
            known(f, "finished_goods")?;
        }
        for l in &self.order_lines {
            known(&l.part, "order line")?;
            if let Some(s) = &l.serves {
                known(s, "order line")?;
            }
            if !self.suppliers.is_empty() && !self.suppliers.contains(&l.supplier) {
                return bad(format!("order line references unknown supplier {}", l.supplier));
            }
        }
        for (p, d) in &self.demand {
            known(p, "demand")?;
            if d.len() != self.horizon {
                return bad(format!("demand for {p} has {} periods, horizon is {}", d.len(), self.horizon));
            }
        }
        for p in self.initial_inventory.keys() {
            known(p, "initial_inventory")?;
        }
        let costs = self
            .costs
            .unit_cost
            .iter()
            .map(|u| u.cost)
            .chain(self.costs.emergency_cost.values().copied())
            .chain(self.costs.holding_cost.values().copied());
        for c in costs {
            if !(c.is_finite() && c >= 0.0) {
                return bad(format!("cost {c} is not a non-negative number"));
            }
        }
        if self.grid().first() != Some(&0) {
            return bad("order grid must contain 0".into());
        }

        let mut graph = DiGraph::<&str, u32>::new();
        let idx: BTreeMap<&str, _> = self.parts.iter().map(|p| (p.as_str(), graph.add_node(p))).collect();
        for e in &self.bom {
            known(&e.parent, "bom")?;
            known(&e.component, "bom")?;
            graph.add_edge(idx[e.parent.as_str()], idx[e.component.as_str()], e.qty);
        }
        let order = toposort(&graph, None).map_err(|_| PlanError::CyclicBom)?;
        Ok(order.into_iter().map(|n| graph[n].to_string()).collect())
    }
}
