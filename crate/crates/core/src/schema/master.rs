use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::EvidenceSpan;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvlEntry {
    pub part_id: String,
    pub substitute_part_id: String,
    #[serde(default)]
    pub approval_evidence: Option<EvidenceSpan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarRule {
    pub period_length_days: u32,
}

impl Default for CalendarRule {
    fn default() -> Self {
        Self {
            period_length_days: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Supplier,
    Part,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AliasResolution {
    Canonical(String),
    Ambiguous(BTreeSet<String>),
    Unknown,
}

/// Supplier and part masters, approved vendor list, calendar rule.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MasterData {
    #[serde(default)]
    pub suppliers: Vec<EntityRecord>,
    #[serde(default)]
    pub parts: Vec<EntityRecord>,
    #[serde(default)]
    pub avl: Vec<AvlEntry>,
    #[serde(default)]
    pub calendar: CalendarRule,
}

impl MasterData {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, std::io::Error> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    fn entities(&self, kind: EntityKind) -> &[EntityRecord] {
        match kind {
            EntityKind::Supplier => &self.suppliers,
            EntityKind::Part => &self.parts,
        }
    }

    /// Alias → set of canonical ids. Sets with more than one id are
    /// ambiguity sets.
    pub fn alias_index(&self, kind: EntityKind) -> BTreeMap<String, BTreeSet<String>> {
        let mut index: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for e in self.entities(kind) {
            for alias in &e.aliases {
                index
                    .entry(alias.to_lowercase())
                    .or_default()
                    .insert(e.id.clone());
            }
        }
        index
    }

    /// Canonical ids win over aliases; an empty master passes ids through.
    pub fn resolve(&self, kind: EntityKind, raw: &str) -> AliasResolution {
        let entities = self.entities(kind);
        if entities.is_empty() {
            return AliasResolution::Canonical(raw.to_string());
        }
        if entities.iter().any(|e| e.id == raw) {
            return AliasResolution::Canonical(raw.to_string());
        }
        match self.alias_index(kind).remove(&raw.to_lowercase()) {
            Some(ids) if ids.len() == 1 => {
                AliasResolution::Canonical(ids.into_iter().next().expect("one id"))
            }
            Some(ids) => AliasResolution::Ambiguous(ids),
            None => AliasResolution::Unknown,
        }
    }

    /// AVL entry granting `substitute` for `part` with approval evidence.
    pub fn approved_substitute(&self, part: &str, substitute: &str) -> Option<&AvlEntry> {
        self.avl.iter().find(|e| {
            e.part_id == part && e.substitute_part_id == substitute && e.approval_evidence.is_some()
        })
    }
}
