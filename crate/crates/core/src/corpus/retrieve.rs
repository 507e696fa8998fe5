use serde::{Deserialize, Serialize};

use super::{Chunk, Corpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Moq,
    LeadTime,
    PriceTiers,
    Capacity,
    Substitution,
    Condition,
    OrderInterval,
}

impl FieldKind {
    /// Synonym rings, innermost first. Ring 0 is always searched; each
    /// widening step adds the next ring.
    fn rings(self) -> &'static [&'static [(&'static str, u32)]] {
        match self {
            FieldKind::Moq => &[
                &[("moq", 3), ("minimum order quantity", 3)],
                &[("minimum order", 2), ("minimum purchase", 2)],
                &[("per po line", 1), ("order quantity", 1)],
            ],
            FieldKind::LeadTime => &[
                &[("lead time", 3)],
                &[("lead-time", 2), ("delivery time", 2)],
                &[("weeks", 1), ("days", 1)],
            ],
            FieldKind::PriceTiers => &[
                &[("price schedule", 3), ("unit price", 3)],
                &[("each", 1), ("tier", 2), ("pricing", 2)],
                &[("$", 1), ("discount", 1)],
            ],
            FieldKind::Capacity => &[
                &[("cap shipments", 3), ("allocation", 3)],
                &[("units per month", 2), ("units per week", 2), ("capacity", 2)],
                &[("per month", 1), ("per week", 1)],
            ],
            FieldKind::Substitution => &[
                &[("substitut", 3)],
                &[("alternate", 2), ("approved vendor", 2)],
                &[("replace", 1), ("approval", 1)],
            ],
            FieldKind::Condition => &[
                &[("if ", 2), ("condition", 3)],
                &[("reduced", 2), ("cumulative", 2)],
                &[("at least", 1), ("subsequent", 1)],
            ],
            FieldKind::OrderInterval => &[
                &[("order interval", 3), ("between orders", 3)],
                &[("cadence", 2), ("no more than one order", 2)],
                &[("interval", 1)],
            ],
        }
    }

    pub fn max_widening(self) -> usize {
        self.rings().len() - 1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldQuery {
    pub field: Option<FieldKind>,
    pub supplier: Option<String>,
    pub part: Option<String>,
    pub site: Option<String>,
    /// Extra synonym rings beyond ring 0.
    #[serde(default)]
    pub widen: usize,
}

impl FieldQuery {
    pub fn new(field: FieldKind) -> Self {
        Self {
            field: Some(field),
            ..Self::default()
        }
    }

    pub fn part(mut self, part: impl Into<String>) -> Self {
        self.part = Some(part.into());
        self
    }

    pub fn supplier(mut self, supplier: impl Into<String>) -> Self {
        self.supplier = Some(supplier.into());
        self
    }

    pub fn site(mut self, site: impl Into<String>) -> Self {
        self.site = Some(site.into());
        self
    }

    pub fn widened(mut self, widen: usize) -> Self {
        self.widen = widen;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalHit<'a> {
    pub chunk: &'a Chunk,
    pub score: u32,
}

/// Pluggable evidence retriever.
pub trait Retriever: Send + Sync {
    fn retrieve<'a>(&self, corpus: &'a Corpus, query: &FieldQuery) -> Vec<RetrievalHit<'a>>;
}

/// Deterministic keyword scorer: weighted synonym hits plus an identifier
/// bonus for each query hint found in the chunk or its header.
#[derive(Debug, Clone, Copy)]
pub struct KeywordRetriever {
    pub identifier_bonus: u32,
}

impl Default for KeywordRetriever {
    fn default() -> Self {
        Self {
            identifier_bonus: 1,
        }
    }
}

fn count(haystack: &str, needle: &str) -> u32 {
    haystack.matches(needle).count() as u32
}

impl KeywordRetriever {
    pub fn score(&self, chunk: &Chunk, query: &FieldQuery) -> u32 {
        let text = chunk.text.to_lowercase();
        let mut score = 0;
        if let Some(field) = query.field {
            let rings = field.rings();
            let depth = query.widen.min(rings.len() - 1);
            for ring in &rings[..=depth] {
                for (term, weight) in ring.iter() {
                    score += weight * count(&text, term);
                }
            }
            if score == 0 {
                return 0;
            }
        }
        let context = format!("{}\n{}", chunk.header_context.to_lowercase(), text);
        for hint in [&query.supplier, &query.part, &query.site].into_iter().flatten() {
            if context.contains(&hint.to_lowercase()) {
                score += self.identifier_bonus;
            }
        }
        score
    }
}

impl Retriever for KeywordRetriever {
    fn retrieve<'a>(&self, corpus: &'a Corpus, query: &FieldQuery) -> Vec<RetrievalHit<'a>> {
        let mut hits: Vec<_> = corpus
            .chunks()
            .filter_map(|chunk| {
                let score = self.score(chunk, query);
                (score > 0).then_some(RetrievalHit { chunk, score })
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .cmp(&a.score)
                .then_with(|| a.chunk.span.doc_id.cmp(&b.chunk.span.doc_id))
                .then_with(|| a.chunk.span.version.cmp(&b.chunk.span.version))
                .then_with(|| a.chunk.span.start.cmp(&b.chunk.span.start))
        });
        hits
    }
}
