use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{enumerate_optimal, execute, plan_cost, CostParams, Optimum, Schedule};

pub const TOY_DEMAND: [u32; 3] = [50, 50, 50];
pub const TOY_MOQ: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub h: f64,
    pub l_true: u32,
    pub l_ext: u32,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            h: 0.1,
            l_true: 2,
            l_ext: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub config: ToyConfig,
    pub costs: CostParams,
    /// (100,0,0) executed under the true terms.
    pub baseline_cost: f64,
    /// (0,100,0), the plan chosen under the extracted lead time.
    pub extracted_plan_planned_cost: f64,
    pub extracted_plan_executed_cost: f64,
    /// Executed cost of the extracted plan minus the baseline.
    pub baseline_regret: f64,
    pub true_optimum: Optimum,
    pub extracted_optimum: Optimum,
    pub extracted_optimum_executed_cost: f64,
    /// Executed cost of the extracted optimum minus the true optimum.
    pub enumerated_regret: f64,
}

pub fn toy(config: ToyConfig) -> ToyReport {
    let costs = CostParams {
        c_cheap: 10.0,
        c_exp: 20.0,
        h: config.h,
    };
    let baseline = Schedule::from_quantities(&[100, 0, 0]).expect("on grid");
    let extracted = Schedule::from_quantities(&[0, 100, 0]).expect("on grid");
    let exec = |s: &Schedule| execute(s, TOY_MOQ, config.l_true, &costs, &TOY_DEMAND).cost.total;
    let baseline_cost = exec(&baseline);
    let extracted_plan_executed_cost = exec(&extracted);
    let true_optimum = enumerate_optimal(TOY_MOQ, config.l_true, &costs, &TOY_DEMAND);
    let extracted_optimum = enumerate_optimal(TOY_MOQ, config.l_ext, &costs, &TOY_DEMAND);
    let extracted_optimum_executed_cost = exec(&extracted_optimum.schedule);
    ToyReport {
        config,
        costs,
        baseline_cost,
        extracted_plan_planned_cost: plan_cost(&extracted, TOY_MOQ, config.l_ext, &costs, &TOY_DEMAND)
            .expect("meets the MOQ"),
        extracted_plan_executed_cost,
        baseline_regret: extracted_plan_executed_cost - baseline_cost,
        enumerated_regret: extracted_optimum_executed_cost - true_optimum.cost,
        true_optimum,
        extracted_optimum,
        extracted_optimum_executed_cost,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

impl ToyReport {
    /// Internal consistency checks, plus the hand-computed figures when the
    /// configuration is the default one.
    pub fn checks(&self) -> Vec<(String, bool)> {
        let mut out = vec![
            (
                "true optimum is no worse than any executed plan".to_string(),
                self.true_optimum.cost <= self.baseline_cost + 1e-9
                    && self.true_optimum.cost <= self.extracted_plan_executed_cost + 1e-9,
            ),
            ("enumerated regret is non-negative".to_string(), self.enumerated_regret >= -1e-9),
            ("729 schedules enumerated".to_string(), self.true_optimum.evaluated == 729),
        ];
        if self.config.l_true == self.config.l_ext {
            out.push(("matching lead times give zero regret".into(), close(self.enumerated_regret, 0.0)));
        }
        let c = self.config;
        if c.l_true == 2 && c.l_ext == 1 && (close(c.h, 0.1) || close(c.h, 0.0)) {
            let hold = if close(c.h, 0.1) { 5.0 } else { 0.0 };
            out.push((format!("(100,0,0) executes to {}", 3000.0 + hold), close(self.baseline_cost, 3000.0 + hold)));
            out.push(("(0,100,0) executes to 4000".into(), close(self.extracted_plan_executed_cost, 4000.0)));
            out.push((format!("baseline regret {}", 1000.0 - hold), close(self.baseline_regret, 1000.0 - hold)));
            out.push((
                "true optimum (0,0,0) at 3000".into(),
                close(self.true_optimum.cost, 3000.0) && self.true_optimum.schedule == Schedule::zeros(3),
            ));
        }
        out
    }

    pub fn ok(&self) -> bool {
        self.checks().iter().all(|(_, ok)| *ok)
    }

    pub fn render(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "toy: d=(50,50,50) MOQ={} c_cheap=10 c_exp=20 h={} L_true={} L_ext={}",
            TOY_MOQ, c.h, c.l_true, c.l_ext
        );
        let _ = writeln!(s, "executed (100,0,0) under true terms: {:.2}", self.baseline_cost);
        let _ = writeln!(
            s,
            "extracted plan (0,100,0): planned {:.2}, executed {:.2}",
            self.extracted_plan_planned_cost, self.extracted_plan_executed_cost
        );
        let _ = writeln!(s, "regret against (100,0,0) baseline: {:.2}", self.baseline_regret);
        let _ = writeln!(
            s,
            "enumerated true optimum: {} at {:.2} ({} schedules)",
            self.true_optimum.schedule, self.true_optimum.cost, self.true_optimum.evaluated
        );
        let _ = writeln!(
            s,
            "enumerated extracted optimum: {} planned {:.2}, executed {:.2}, regret {:.2}",
            self.extracted_optimum.schedule,
            self.extracted_optimum.cost,
            self.extracted_optimum_executed_cost,
            self.enumerated_regret
        );
        let _ = writeln!(s, "regret against enumerated optimum (extracted plan): {:.2}", self.extracted_plan_executed_cost - self.true_optimum.cost);
        for (name, ok) in self.checks() {
            let _ = writeln!(s, "[{}] {name}", if ok { "ok" } else { "FAIL" });
        }
        s
    }
}
