//! Versioned document corpus with clause-aware chunks and byte-exact
//! evidence spans.
//!
//! Documents are split into line-blocks. A block whose lines start with a
//! fixture label (`L1.`, `L2.`, ...) is split at each label; an unlabeled
//! block whose first two words are upper-case is a header and becomes the
//! `header_context` of every chunk that follows it.

mod retrieve;

pub use retrieve::{FieldKind, FieldQuery, KeywordRetriever, RetrievalHit, Retriever};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("duplicate document {doc_id}@{version}")]
    DuplicateDocument { doc_id: String, version: String },
    #[error("cannot read text for {doc_id}@{version} at {path}: {source}")]
    MissingText {
        doc_id: String,
        version: String,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("unknown document {doc_id}@{version}")]
    UnknownDocument { doc_id: String, version: String },
    #[error("span [{start}, {end}) out of range for {doc_id}@{version} (length {len})")]
    OutOfRange {
        doc_id: String,
        version: String,
        start: usize,
        end: usize,
        len: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocType {
    Master,
    Addendum,
    Exhibit,
    Email,
    Tender,
    Catalog,
    Policy,
}

impl DocType {
    pub fn as_str(self) -> &'static str {
        match self {
            DocType::Master => "master",
            DocType::Addendum => "addendum",
            DocType::Exhibit => "exhibit",
            DocType::Email => "email",
            DocType::Tender => "tender",
            DocType::Catalog => "catalog",
            DocType::Policy => "policy",
        }
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentMeta {
    pub doc_id: String,
    pub version: String,
    pub doc_type: DocType,
    pub effective_start: Option<NaiveDate>,
    pub signed: bool,
    pub text_path: PathBuf,
}

/// Byte-offset reference `[start, end)` into one version of a document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EvidenceSpan {
    pub doc_id: String,
    pub version: String,
    pub start: usize,
    pub end: usize,
}

impl EvidenceSpan {
    pub fn new(doc_id: impl Into<String>, version: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            doc_id: doc_id.into(),
            version: version.into(),
            start,
            end,
        }
    }
}

impl fmt::Display for EvidenceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}[{}..{})", self.doc_id, self.version, self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub span: EvidenceSpan,
    pub header_context: String,
    pub label: Option<String>,
    pub text: String,
}

impl Chunk {
    /// `doc_id:label` pointer, e.g. `Addendum-3:L1`.
    pub fn pointer(&self) -> Option<String> {
        self.label.as_ref().map(|l| format!("{}:{}", self.span.doc_id, l))
    }
}

#[derive(Debug, Clone)]
pub struct Document {
    pub meta: DocumentMeta,
    pub text: String,
    pub chunks: Vec<Chunk>,
    /// Span of the first non-empty line-block, header or clause.
    pub first_block: Option<EvidenceSpan>,
}

impl Document {
    /// Tokens that mark a document as amending an earlier one.
    const AMENDMENT_TOKENS: [&'static str; 3] = ["addendum", "amendment", "supersede"];

    pub fn has_amendment_language(&self) -> bool {
        let Some(span) = &self.first_block else {
            return false;
        };
        let block = self.text[span.start..span.end].to_lowercase();
        Self::AMENDMENT_TOKENS.iter().any(|t| block.contains(t))
    }
}

pub type DocKey = (String, String);

/// Immutable after load.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: BTreeMap<DocKey, Document>,
}

impl Corpus {
    /// Loads `corpus.json`; `text_path` entries are relative to the manifest.
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let manifest_path = manifest_path.as_ref();
        let raw = std::fs::read_to_string(manifest_path)
            .map_err(|e| CorpusError::MalformedManifest(format!("{}: {e}", manifest_path.display())))?;
        let metas: Vec<DocumentMeta> =
            serde_json::from_str(&raw).map_err(|e| CorpusError::MalformedManifest(e.to_string()))?;
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let mut docs = Vec::with_capacity(metas.len());
        for meta in metas {
            let path = base.join(&meta.text_path);
            let text = std::fs::read_to_string(&path).map_err(|source| CorpusError::MissingText {
                doc_id: meta.doc_id.clone(),
                version: meta.version.clone(),
                path: path.clone(),
                source,
            })?;
            docs.push((meta, text));
        }
        Self::from_documents(docs)
    }

    pub fn from_documents(
        docs: impl IntoIterator<Item = (DocumentMeta, String)>,
    ) -> Result<Self, CorpusError> {
        let mut map = BTreeMap::new();
        for (meta, text) in docs {
            if meta.doc_id.trim().is_empty() || meta.version.trim().is_empty() {
                return Err(CorpusError::MalformedManifest(
                    "doc_id and version must be non-empty".into(),
                ));
            }
            let key = (meta.doc_id.clone(), meta.version.clone());
            if map.contains_key(&key) {
                return Err(CorpusError::DuplicateDocument {
                    doc_id: meta.doc_id,
                    version: meta.version,
                });
            }
            let (chunks, first_block) = chunk_document(&meta, &text);
            map.insert(
                key,
                Document {
                    meta,
                    text,
                    chunks,
                    first_block,
                },
            );
        }
        Ok(Self { docs: map })
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.docs.values()
    }

    pub fn document(&self, doc_id: &str, version: &str) -> Option<&Document> {
        self.docs.get(&(doc_id.to_string(), version.to_string()))
    }

    /// All chunks in (doc_id, version, start) order.
    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.docs.values().flat_map(|d| d.chunks.iter())
    }

    pub fn chunk_count(&self) -> usize {
        self.docs.values().map(|d| d.chunks.len()).sum()
    }

    /// The chunk whose span contains `span`, if any.
    pub fn chunk_for(&self, span: &EvidenceSpan) -> Option<&Chunk> {
        self.document(&span.doc_id, &span.version)?
            .chunks
            .iter()
            .find(|c| c.span.start <= span.start && span.end <= c.span.end)
    }

    pub fn chunk_by_label(&self, doc_id: &str, version: &str, label: &str) -> Option<&Chunk> {
        self.document(doc_id, version)?
            .chunks
            .iter()
            .find(|c| c.label.as_deref() == Some(label))
    }

    pub fn resolve_span(&self, span: &EvidenceSpan) -> Result<&str, CorpusError> {
        let doc = self
            .document(&span.doc_id, &span.version)
            .ok_or_else(|| CorpusError::UnknownDocument {
                doc_id: span.doc_id.clone(),
                version: span.version.clone(),
            })?;
        let len = doc.text.len();
        let out_of_range = || CorpusError::OutOfRange {
            doc_id: span.doc_id.clone(),
            version: span.version.clone(),
            start: span.start,
            end: span.end,
            len,
        };
        if span.end > len || span.start >= span.end {
            return Err(out_of_range());
        }
        // Spans are byte ranges; a range that splits a code point is rejected
        // rather than lossily decoded.
        doc.text.get(span.start..span.end).ok_or_else(out_of_range)
    }
}

fn is_label(line: &str) -> Option<String> {
    let rest = line.strip_prefix('L')?;
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        return None;
    }
    let after = &rest[digits.len()..];
    if after.starts_with('.') {
        Some(format!("L{digits}"))
    } else {
        None
    }
}

fn is_header_line(line: &str) -> bool {
    if line.starts_with('#') {
        return true;
    }
    let mut words = line.split_whitespace();
    let upper = |w: Option<&str>| {
        w.is_some_and(|w| w.len() >= 2 && w.chars().all(|c| c.is_ascii_uppercase()))
    };
    upper(words.next()) && upper(words.next())
}

struct Line {
    start: usize,
    end: usize,
}

fn chunk_document(meta: &DocumentMeta, text: &str) -> (Vec<Chunk>, Option<EvidenceSpan>) {
    let mut blocks: Vec<Vec<Line>> = Vec::new();
    let mut current: Vec<Line> = Vec::new();
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let content = raw.trim_end_matches(['\n', '\r']);
        let start = offset;
        offset += raw.len();
        if content.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
            continue;
        }
        current.push(Line {
            start,
            end: start + content.len(),
        });
    }
    if !current.is_empty() {
        blocks.push(current);
    }

    let span = |s: usize, e: usize| EvidenceSpan::new(&meta.doc_id, &meta.version, s, e);
    let first_block = blocks
        .first()
        .map(|b| span(b[0].start, b[b.len() - 1].end));

    let mut chunks = Vec::new();
    let mut header = String::new();
    for block in &blocks {
        let labels: Vec<Option<String>> = block
            .iter()
            .map(|l| is_label(text[l.start..l.end].trim_start()))
            .collect();
        let first_label = labels.iter().position(Option::is_some);
        match first_label {
            Some(first) => {
                if first > 0 {
                    header = text[block[0].start..block[first - 1].end].to_string();
                }
                let mut i = first;
                while i < block.len() {
                    let mut j = i + 1;
                    while j < block.len() && labels[j].is_none() {
                        j += 1;
                    }
                    let (s, e) = (block[i].start, block[j - 1].end);
                    chunks.push(Chunk {
                        span: span(s, e),
                        header_context: header.clone(),
                        label: labels[i].clone(),
                        text: text[s..e].to_string(),
                    });
                    i = j;
                }
            }
            None => {
                let (s, e) = (block[0].start, block[block.len() - 1].end);
                if is_header_line(&text[block[0].start..block[0].end]) {
                    header = text[s..e].to_string();
                } else {
                    chunks.push(Chunk {
                        span: span(s, e),
                        header_context: header.clone(),
                        label: None,
                        text: text[s..e].to_string(),
                    });
                }
            }
        }
    }
    (chunks, first_block)
}

/// Scope declared by a header or clause, e.g. `Site scope: MX-01`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeclaredScope {
    pub site: Option<String>,
    pub region: Option<String>,
    pub sku_family: Option<String>,
}

impl DeclaredScope {
    pub fn parse(text: &str) -> Self {
        Self {
            site: header_value(text, &["site scope", "site"]),
            region: header_value(text, &["region scope", "region"]),
            sku_family: header_value(text, &["sku family", "sku scope"]),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.site.is_none() && self.region.is_none() && self.sku_family.is_none()
    }
}

/// Value following `Key:` in header-style text (first matching key wins).
pub fn header_value(text: &str, keys: &[&str]) -> Option<String> {
    let lower = text.to_lowercase();
    for key in keys {
        let needle = format!("{key}:");
        let mut from = 0;
        while let Some(pos) = lower[from..].find(&needle) {
            let at = from + pos;
            // Require a word boundary so "site" does not match inside "website".
            let boundary = at == 0
                || !lower[..at]
                    .chars()
                    .next_back()
                    .is_some_and(|c| c.is_alphanumeric());
            if boundary {
                let rest = text[at + needle.len()..].trim_start();
                let value: String = rest
                    .chars()
                    .take_while(|c| !c.is_whitespace() && *c != ';' && *c != ',')
                    .collect();
                if !value.is_empty() {
                    return Some(value);
                }
            }
            from = at + needle.len();
        }
    }
    None
}
