//! Corpus analytics for AI-era lexical frequency change.
//!
//! The pipeline runs in stages, each backed by one module:
//!
//! 1. [`corpus`] — stream documents from JSONL or PubMed XML into a uniform
//!    time-sliced representation (one slice = one publication year).
//! 2. [`tagging`] — turn document text into (surface, lemma, UPOS) tokens,
//!    either with the built-in lexicon/suffix baseline or by reading
//!    pre-tagged TSV produced by an external tagger.
//! 3. [`counts`] — sharded, mergeable per-slice frequency tables keyed by
//!    lemma+POS, with occurrences-per-million derivation and CSV snapshots.
//! 4. [`stats`] / [`trends`] — percent change and chi-square keyness between
//!    anchor slices, ranked spike/collapse scans, long-term OPM series.
//! 5. [`clusters`] — thesaurus-driven synonym clusters around focal words,
//!    LLM relevance filtering, and replacement-hypothesis verdicts.
//! 6. [`regen`] — the regenerated-abstract experiment: sample, summarize to
//!    keywords, regenerate, recount, and compare human vs AI corpora.
//! 7. [`chart`] / [`synth`] — SVG series charts and a deterministic
//!    synthetic-corpus generator for desk-scale testing.

pub mod chart;
pub mod clusters;
pub mod corpus;
pub mod counts;
#[cfg(feature = "net")]
pub mod fetch;
pub mod llm;
pub mod regen;
pub mod stats;
pub mod synth;
pub mod tagging;
pub mod trends;

pub use counts::{CountTable, LemmaPosKey, SliceTotals};
pub use tagging::{TaggedDocument, Token, Upos};
pub use trends::{Direction, TrendRecord};
