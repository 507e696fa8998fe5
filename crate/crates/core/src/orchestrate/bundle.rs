use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Outcome, RunState, RunStatus};

/// Files written for every outcome; `diagnosis.json` is added when present.
pub const BUNDLE_FILES: [&str; 8] = [
    "outcome.json",
    "plan.json",
    "cards.json",
    "constraints.json",
    "history.json",
    "gates.json",
    "config.json",
    "state.json",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSummary {
    pub run_id: String,
    pub status: RunStatus,
    pub iteration: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub gates: Vec<String>,
    pub cards: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
}

impl BundleSummary {
    pub fn of(outcome: &Outcome) -> Self {
        Self {
            run_id: outcome.state.run_id.clone(),
            status: outcome.status(),
            iteration: outcome.state.iteration,
            failure: outcome.failure.clone(),
            gates: outcome.gates().iter().map(|g| g.gate_id.clone()).collect(),
            cards: outcome.cards.len(),
            cost: outcome.plan.as_ref().map(|p| p.cost.total),
        }
    }
}

fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(dir.join(name), text)
}

/// Writes the outcome bundle into `dir`, replacing files from an earlier
/// step of the same run.
pub fn write_bundle(outcome: &Outcome, config: &impl Serialize, dir: &Path) -> io::Result<BundleSummary> {
    fs::create_dir_all(dir)?;
    let summary = BundleSummary::of(outcome);
    write_json(dir, "outcome.json", &summary)?;
    write_json(dir, "plan.json", &outcome.plan)?;
    write_json(dir, "cards.json", &outcome.cards)?;
    write_json(dir, "constraints.json", &outcome.consolidated)?;
    write_json(dir, "history.json", &outcome.state.history)?;
    write_json(dir, "gates.json", &outcome.state.open_gates)?;
    write_json(dir, "config.json", config)?;
    write_json(dir, "state.json", &outcome.state)?;
    let diagnosis = dir.join("diagnosis.json");
    match &outcome.diagnosis {
        Some(d) => write_json(dir, "diagnosis.json", d)?,
        None if diagnosis.exists() => fs::remove_file(diagnosis)?,
        None => {}
    }
    Ok(summary)
}

pub fn read_state(dir: &Path) -> io::Result<RunState> {
    let text = fs::read_to_string(dir.join("state.json"))?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
