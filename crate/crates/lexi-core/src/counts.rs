//! Per-slice raw frequency tables keyed by (lemma, UPOS).
//!
//! Counts are exact integers; occurrences-per-million is always derived,
//! never stored, so shard merges are exact and order-independent. Snapshots
//! are canonical CSV: sorted rows, byte-stable across repeated saves.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::tagging::{TaggedDocument, Upos};

/// The unit of analysis: a lowercase lemma paired with a coarse POS tag,
/// written `crucial_ADJ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LemmaPosKey {
    pub lemma: String,
    pub upos: Upos,
}

impl LemmaPosKey {
    pub fn new(lemma: impl Into<String>, upos: Upos) -> LemmaPosKey {
        LemmaPosKey { lemma: lemma.into(), upos }
    }
}

impl fmt::Display for LemmaPosKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.lemma, self.upos)
    }
}

impl FromStr for LemmaPosKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lemma, tag) = s
            .rsplit_once('_')
            .ok_or_else(|| format!("expected lemma_UPOS, got {s:?}"))?;
        if lemma.is_empty() {
            return Err(format!("empty lemma in {s:?}"));
        }
        let upos = Upos::from_str(tag)?;
        Ok(LemmaPosKey { lemma: lemma.to_lowercase(), upos })
    }
}

/// Token and document totals for one year slice — the OPM denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SliceTotals {
    pub token_total: u64,
    pub doc_total: u64,
}

#[derive(Debug, Error)]
pub enum CountsError {
    #[error("unknown slice {0}")]
    UnknownSlice(i32),
    #[error("slice {0} has zero token total")]
    ZeroTotal(i32),
    #[error("totals are missing slice {0} referenced by counts")]
    MissingTotals(i32),
    #[error("{file} row {row}: {msg}")]
    Snapshot { file: String, row: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Sharded, mergeable map from [`LemmaPosKey`] to per-slice raw counts,
/// plus per-slice token/document totals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountTable {
    entries: HashMap<LemmaPosKey, BTreeMap<i32, u64>>,
    totals: BTreeMap<i32, SliceTotals>,
}

impl CountTable {
    pub fn new() -> CountTable {
        CountTable::default()
    }

    pub fn add_token(&mut self, key: LemmaPosKey, slice: i32) {
        *self.entries.entry(key).or_default().entry(slice).or_insert(0) += 1;
        self.totals.entry(slice).or_default().token_total += 1;
    }

    pub fn note_document(&mut self, slice: i32) {
        self.totals.entry(slice).or_default().doc_total += 1;
    }

    /// Tally one tagged document: every token increments exactly one
    /// (key, slice) cell and the slice token total.
    pub fn absorb_document(&mut self, doc: &TaggedDocument) {
        self.note_document(doc.slice);
        for token in &doc.tokens {
            self.add_token(LemmaPosKey::new(token.lemma.clone(), token.upos), doc.slice);
        }
    }

    /// Insert a raw cell directly (fixture construction, snapshot loading).
    /// Slice totals must be set separately via [`CountTable::set_totals`].
    pub fn set_count(&mut self, key: LemmaPosKey, slice: i32, count: u64) {
        self.entries.entry(key).or_default().insert(slice, count);
    }

    pub fn set_totals(&mut self, slice: i32, totals: SliceTotals) {
        self.totals.insert(slice, totals);
    }

    pub fn count(&self, key: &LemmaPosKey, slice: i32) -> u64 {
        self.entries
            .get(key)
            .and_then(|cells| cells.get(&slice))
            .copied()
            .unwrap_or(0)
    }

    pub fn totals(&self, slice: i32) -> Option<SliceTotals> {
        self.totals.get(&slice).copied()
    }

    pub fn slices(&self) -> Vec<i32> {
        self.totals.keys().copied().collect()
    }

    pub fn has_slice(&self, slice: i32) -> bool {
        self.totals.contains_key(&slice)
    }

    pub fn n_keys(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.totals.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &LemmaPosKey> {
        self.entries.keys()
    }

    pub fn cells(&self, key: &LemmaPosKey) -> Option<&BTreeMap<i32, u64>> {
        self.entries.get(key)
    }

    /// Occurrences per million: `1e6 x count / token_total`. Absent keys
    /// give 0; unknown slices and zero totals are errors.
    pub fn opm(&self, key: &LemmaPosKey, slice: i32) -> Result<f64, CountsError> {
        let totals = self.totals.get(&slice).ok_or(CountsError::UnknownSlice(slice))?;
        if totals.token_total == 0 {
            return Err(CountsError::ZeroTotal(slice));
        }
        Ok(self.count(key, slice) as f64 * 1e6 / totals.token_total as f64)
    }

    /// Cellwise and totalwise sum. Merging is commutative and associative
    /// with the empty table as identity.
    pub fn merge_from(&mut self, other: CountTable) {
        for (key, cells) in other.entries {
            let target = self.entries.entry(key).or_default();
            for (slice, n) in cells {
                *target.entry(slice).or_insert(0) += n;
            }
        }
        for (slice, t) in other.totals {
            let target = self.totals.entry(slice).or_default();
            target.token_total += t.token_total;
            target.doc_total += t.doc_total;
        }
    }

    // ---------- snapshots ----------

    /// Conventional totals path for a counts path: `x.csv` → `x.totals.csv`.
    pub fn totals_path_for(counts_path: &Path) -> PathBuf {
        match counts_path.extension().and_then(|e| e.to_str()) {
            Some(ext) => counts_path.with_extension(format!("totals.{ext}")),
            None => counts_path.with_extension("totals"),
        }
    }

    /// Write the canonical snapshot pair. Rows are sorted by
    /// (lemma, upos, slice); repeated saves are byte-identical.
    pub fn save_snapshot(&self, counts_path: &Path, totals_path: &Path) -> Result<(), CountsError> {
        let mut keys: Vec<&LemmaPosKey> = self.entries.keys().collect();
        keys.sort();

        let mut w = csv::Writer::from_writer(std::fs::File::create(counts_path)?);
        w.write_record(["lemma", "upos", "slice", "count"]).map_err(csv_io)?;
        for key in keys {
            for (slice, count) in &self.entries[key] {
                w.write_record([
                    key.lemma.as_str(),
                    key.upos.as_str(),
                    &slice.to_string(),
                    &count.to_string(),
                ])
                .map_err(csv_io)?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_writer(std::fs::File::create(totals_path)?);
        w.write_record(["slice", "token_total", "doc_total"]).map_err(csv_io)?;
        for (slice, t) in &self.totals {
            w.write_record([
                slice.to_string(),
                t.token_total.to_string(),
                t.doc_total.to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Load a snapshot pair, validating the cross-file invariant that every
    /// slice referenced by counts appears in totals.
    pub fn load_snapshot(counts_path: &Path, totals_path: &Path) -> Result<CountTable, CountsError> {
        let mut table = CountTable::new();

        let snap_err = |file: &Path, row: usize, msg: String| CountsError::Snapshot {
            file: file.display().to_string(),
            row,
            msg,
        };

        let mut rd = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(totals_path)
            .map_err(|e| csv_open(totals_path, e))?;
        for (idx, rec) in rd.records().enumerate() {
            let row = idx + 2; // header is row 1
            let rec = rec.map_err(|e| snap_err(totals_path, row, e.to_string()))?;
            if rec.len() != 3 {
                return Err(snap_err(totals_path, row, format!("expected 3 fields, got {}", rec.len())));
            }
            let slice: i32 = parse_field(&rec[0]).map_err(|m| snap_err(totals_path, row, m))?;
            let token_total: u64 = parse_field(&rec[1]).map_err(|m| snap_err(totals_path, row, m))?;
            let doc_total: u64 = parse_field(&rec[2]).map_err(|m| snap_err(totals_path, row, m))?;
            table.totals.insert(slice, SliceTotals { token_total, doc_total });
        }

        let mut rd = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(counts_path)
            .map_err(|e| csv_open(counts_path, e))?;
        for (idx, rec) in rd.records().enumerate() {
            let row = idx + 2;
            let rec = rec.map_err(|e| snap_err(counts_path, row, e.to_string()))?;
            if rec.len() != 4 {
                return Err(snap_err(counts_path, row, format!("expected 4 fields, got {}", rec.len())));
            }
            let lemma = rec[0].to_string();
            if lemma.is_empty() {
                return Err(snap_err(counts_path, row, "empty lemma".into()));
            }
            let upos =
                Upos::from_str(&rec[1]).map_err(|m| snap_err(counts_path, row, m))?;
            let slice: i32 = parse_field(&rec[2]).map_err(|m| snap_err(counts_path, row, m))?;
            let count: u64 = parse_field(&rec[3]).map_err(|m| snap_err(counts_path, row, m))?;
            if !table.totals.contains_key(&slice) {
                return Err(CountsError::MissingTotals(slice));
            }
            table.set_count(LemmaPosKey::new(lemma, upos), slice, count);
        }
        Ok(table)
    }
}

fn parse_field<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.trim().parse().map_err(|e| format!("invalid value {s:?}: {e}"))
}

fn csv_io(e: csv::Error) -> CountsError {
    CountsError::Io(io::Error::other(e))
}

fn csv_open(path: &Path, e: csv::Error) -> CountsError {
    CountsError::Snapshot { file: path.display().to_string(), row: 0, msg: e.to_string() }
}

/// Tally a stream of tagged documents into a single count-table shard.
pub fn count_tokens(docs: impl IntoIterator<Item = TaggedDocument>) -> CountTable {
    let mut table = CountTable::new();
    for doc in docs {
        table.absorb_document(&doc);
    }
    table
}

/// Fold any number of shards into one table. The result is independent of
/// shard order and grouping.
pub fn merge(shards: impl IntoIterator<Item = CountTable>) -> CountTable {
    let mut out = CountTable::new();
    for shard in shards {
        out.merge_from(shard);
    }
    out
}

/// Count documents split round-robin across `shards` worker shards, then
/// merge. Produces exactly the same table as a single sequential pass.
#[cfg(feature = "parallel")]
pub fn count_tokens_sharded(
    docs: impl IntoIterator<Item = TaggedDocument>,
    shards: usize,
) -> CountTable {
    use rayon::prelude::*;

    let shards = shards.max(1);
    let mut buckets: Vec<Vec<TaggedDocument>> = (0..shards).map(|_| Vec::new()).collect();
    for (i, doc) in docs.into_iter().enumerate() {
        buckets[i % shards].push(doc);
    }
    let counted: Vec<CountTable> = buckets.into_par_iter().map(count_tokens).collect();
    merge(counted)
}
