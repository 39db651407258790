//! Percent-change and significance scans between anchor slices, plus
//! long-term OPM series extraction.

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use thiserror::Error;

use crate::counts::{CountTable, CountsError, LemmaPosKey};
use crate::stats::{chi_square_2x2, percent_change, ContingencyTable2x2, StatsError};
use crate::tagging::Upos;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
    Flat,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Flat => "flat",
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "up" => Ok(Direction::Up),
            "down" => Ok(Direction::Down),
            "flat" => Ok(Direction::Flat),
            other => Err(format!("not a direction: {other:?}")),
        }
    }
}

/// Which end of the ranking a scan asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanDirection {
    Up,
    Down,
}

/// One key's movement between two anchor slices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendRecord {
    pub key: LemmaPosKey,
    pub opm_from: f64,
    pub opm_to: f64,
    pub pct_change: f64,
    pub chi2: f64,
    pub p: f64,
    pub direction: Direction,
}

#[derive(Debug, Error)]
pub enum TrendError {
    #[error(transparent)]
    Counts(#[from] CountsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("exclusion list line {line}: {msg}")]
    Exclusion { line: usize, msg: String },
    #[error("trends csv row {row}: {msg}")]
    Csv { row: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Tags dropped from rankings: punctuation, symbol, number, proper noun,
/// and the "other" category.
pub fn default_blacklist() -> BTreeSet<Upos> {
    BTreeSet::from([Upos::PUNCT, Upos::SYM, Upos::NUM, Upos::PROPN, Upos::X])
}

#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub pos_blacklist: BTreeSet<Upos>,
    /// Raw count required in at least one anchor slice; keeps the ranking
    /// from being dominated by +inf on one-off words.
    pub min_count: u64,
    pub continuity_correction: bool,
    /// |pct_change| below this classifies as flat.
    pub flat_epsilon: f64,
    /// Significance level used by downstream filters.
    pub p_threshold: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            pos_blacklist: default_blacklist(),
            min_count: 5,
            continuity_correction: true,
            flat_epsilon: 0.5,
            p_threshold: 0.01,
        }
    }
}

pub fn classify_direction(pct_change: f64, flat_epsilon: f64) -> Direction {
    if pct_change.abs() < flat_epsilon {
        Direction::Flat
    } else if pct_change > 0.0 {
        Direction::Up
    } else {
        Direction::Down
    }
}

// ---------- exclusion lists ----------

#[derive(Debug)]
struct ExclusionEntry {
    pattern: Regex,
    reason: String,
}

/// Keys and regex patterns removed from rankings, each with a reason.
/// Patterns match against the full `lemma_UPOS` form, anchored.
#[derive(Debug, Default)]
pub struct ExclusionList {
    entries: Vec<ExclusionEntry>,
}

impl ExclusionList {
    pub fn empty() -> ExclusionList {
        ExclusionList::default()
    }

    pub fn from_path(path: &Path) -> Result<ExclusionList, TrendError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(io::BufReader::new(file))
    }

    /// One entry per line: `key-or-regex<TAB>reason`. Lines starting with
    /// `#` are ignored.
    pub fn from_reader(r: impl BufRead) -> Result<ExclusionList, TrendError> {
        let mut list = ExclusionList::default();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            list.add_line(line, idx + 1)?;
        }
        Ok(list)
    }

    pub fn add(&mut self, pattern: &str, reason: &str) -> Result<(), TrendError> {
        self.add_entry(pattern, reason, 0)
    }

    fn add_line(&mut self, line: &str, line_no: usize) -> Result<(), TrendError> {
        let (pattern, reason) = line.split_once('\t').ok_or(TrendError::Exclusion {
            line: line_no,
            msg: "expected key-or-regex<TAB>reason".into(),
        })?;
        self.add_entry(pattern, reason, line_no)
    }

    fn add_entry(&mut self, pattern: &str, reason: &str, line_no: usize) -> Result<(), TrendError> {
        let reason = reason.trim();
        if reason.is_empty() {
            return Err(TrendError::Exclusion { line: line_no, msg: "empty reason".into() });
        }
        let anchored = format!("^(?:{pattern})$");
        let pattern = Regex::new(&anchored).map_err(|e| TrendError::Exclusion {
            line: line_no,
            msg: format!("invalid pattern: {e}"),
        })?;
        self.entries.push(ExclusionEntry { pattern, reason: reason.to_string() });
        Ok(())
    }

    pub fn is_excluded(&self, key: &LemmaPosKey) -> bool {
        let form = key.to_string();
        self.entries.iter().any(|e| e.pattern.is_match(&form))
    }

    pub fn reason_for(&self, key: &LemmaPosKey) -> Option<&str> {
        let form = key.to_string();
        self.entries
            .iter()
            .find(|e| e.pattern.is_match(&form))
            .map(|e| e.reason.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

// ---------- scanning ----------

/// Compute one key's trend record between two slices present in the table.
pub fn record_for(
    table: &CountTable,
    key: &LemmaPosKey,
    slice_from: i32,
    slice_to: i32,
    cfg: &ScanConfig,
) -> Result<TrendRecord, TrendError> {
    let totals_from =
        table.totals(slice_from).ok_or(CountsError::UnknownSlice(slice_from))?;
    let totals_to = table.totals(slice_to).ok_or(CountsError::UnknownSlice(slice_to))?;
    let count_from = table.count(key, slice_from);
    let count_to = table.count(key, slice_to);
    let opm_from = table.opm(key, slice_from)?;
    let opm_to = table.opm(key, slice_to)?;
    let pct_change = percent_change(opm_from, opm_to);

    // an all-zero target column is the proportional limit, not a testable
    // table
    let (chi2, p) = if count_from == 0 && count_to == 0 {
        (0.0, 1.0)
    } else {
        let t = ContingencyTable2x2::from_counts(
            count_from,
            totals_from.token_total,
            count_to,
            totals_to.token_total,
        )?;
        let r = chi_square_2x2(&t, cfg.continuity_correction)?;
        (r.chi2, r.p)
    };

    Ok(TrendRecord {
        key: key.clone(),
        opm_from,
        opm_to,
        pct_change,
        chi2,
        p,
        direction: classify_direction(pct_change, cfg.flat_epsilon),
    })
}

/// Rank every key surviving the POS blacklist, the min-count floor, and the
/// exclusion list by percent change between the anchor slices.
///
/// `direction = Up` sorts from highest increase down; `Down` from steepest
/// decrease up. Ties break by chi2 descending, then key order. A zero
/// baseline sorts as +inf, above every finite increase.
pub fn trend_scan(
    table: &CountTable,
    slice_from: i32,
    slice_to: i32,
    cfg: &ScanConfig,
    exclusions: &ExclusionList,
    direction: ScanDirection,
) -> Result<Vec<TrendRecord>, TrendError> {
    if !table.has_slice(slice_from) {
        return Err(CountsError::UnknownSlice(slice_from).into());
    }
    if !table.has_slice(slice_to) {
        return Err(CountsError::UnknownSlice(slice_to).into());
    }

    let mut records = Vec::new();
    for key in table.keys() {
        if cfg.pos_blacklist.contains(&key.upos) || exclusions.is_excluded(key) {
            continue;
        }
        let count_from = table.count(key, slice_from);
        let count_to = table.count(key, slice_to);
        if count_from.max(count_to) < cfg.min_count {
            continue;
        }
        records.push(record_for(table, key, slice_from, slice_to, cfg)?);
    }

    records.sort_by(|x, y| {
        let primary = match direction {
            ScanDirection::Up => y.pct_change.total_cmp(&x.pct_change),
            ScanDirection::Down => x.pct_change.total_cmp(&y.pct_change),
        };
        primary
            .then_with(|| y.chi2.total_cmp(&x.chi2))
            .then_with(|| x.key.cmp(&y.key))
    });
    Ok(records)
}

/// Long-term OPM series for one key: one point per slice in the table,
/// zero where the key is absent.
pub fn series(table: &CountTable, key: &LemmaPosKey) -> Vec<(i32, f64)> {
    table
        .slices()
        .into_iter()
        .map(|slice| {
            let totals = table.totals(slice).expect("slice came from the table");
            let opm = if totals.token_total == 0 {
                0.0
            } else {
                table.count(key, slice) as f64 * 1e6 / totals.token_total as f64
            };
            (slice, opm)
        })
        .collect()
}

// ---------- trends CSV ----------

pub const TRENDS_CSV_HEADER: &str = "lemma,upos,opm_from,opm_to,pct_change,chi2,p,direction";

/// Write ranked records as CSV. +inf percent change serializes as `inf`.
pub fn write_trends_csv<'a, W: Write>(
    records: impl IntoIterator<Item = &'a TrendRecord>,
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "{TRENDS_CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.key.lemma, r.key.upos, r.opm_from, r.opm_to, r.pct_change, r.chi2, r.p, r.direction
        )?;
    }
    Ok(())
}

pub fn read_trends_csv(r: impl BufRead) -> Result<Vec<TrendRecord>, TrendError> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let row = idx + 1;
        if row == 1 {
            if line.trim() != TRENDS_CSV_HEADER {
                return Err(TrendError::Csv { row, msg: "unexpected header".into() });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(TrendError::Csv {
                row,
                msg: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let err = |msg: String| TrendError::Csv { row, msg };
        let upos = Upos::from_str(fields[1]).map_err(err)?;
        let parse_f = |s: &str| -> Result<f64, TrendError> {
            s.parse::<f64>().map_err(|e| TrendError::Csv { row, msg: format!("{s:?}: {e}") })
        };
        out.push(TrendRecord {
            key: LemmaPosKey::new(fields[0].to_string(), upos),
            opm_from: parse_f(fields[2])?,
            opm_to: parse_f(fields[3])?,
            pct_change: parse_f(fields[4])?,
            chi2: parse_f(fields[5])?,
            p: parse_f(fields[6])?,
            direction: Direction::from_str(fields[7]).map_err(err)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counts::SliceTotals;

    fn key(lemma: &str, upos: Upos) -> LemmaPosKey {
        LemmaPosKey::new(lemma, upos)
    }

    /// Two-slice fixture: background keys at a steady rate, one planted key
    /// whose 2024 rate is `growth` times its 2020 rate.
    fn planted_table(growth: u64) -> (CountTable, LemmaPosKey) {
        let mut table = CountTable::new();
        let planted = key("spiker", Upos::ADJ);
        for i in 0..20 {
            let k = key(&format!("bg{i:02}"), Upos::NOUN);
            table.set_count(k.clone(), 2020, 1000);
            table.set_count(k, 2024, 1000);
        }
        table.set_count(planted.clone(), 2020, 50);
        table.set_count(planted.clone(), 2024, 50 * growth);
        table.set_totals(2020, SliceTotals { token_total: 1_000_000, doc_total: 100 });
        table.set_totals(2024, SliceTotals { token_total: 1_000_000, doc_total: 100 });
        (table, planted)
    }

    #[test]
    fn blacklist_removes_tagged_keys() {
        let mut table = CountTable::new();
        for upos in [Upos::PUNCT, Upos::SYM, Upos::NUM, Upos::PROPN, Upos::X, Upos::ADJ] {
            let k = key("w", upos);
            table.set_count(k.clone(), 2020, 100);
            table.set_count(k, 2024, 200);
        }
        table.set_totals(2020, SliceTotals { token_total: 10_000, doc_total: 10 });
        table.set_totals(2024, SliceTotals { token_total: 10_000, doc_total: 10 });
        let out = trend_scan(
            &table,
            2020,
            2024,
            &ScanConfig::default(),
            &ExclusionList::empty(),
            ScanDirection::Up,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].key.upos, Upos::ADJ);
    }

    #[test]
    fn planted_spike_ranks_first_up() {
        let (table, planted) = planted_table(8);
        let out = trend_scan(
            &table,
            2020,
            2024,
            &ScanConfig::default(),
            &ExclusionList::empty(),
            ScanDirection::Up,
        )
        .unwrap();
        assert_eq!(out[0].key, planted);
        assert_eq!(out.len(), 21);
        // brute-force check of every percent change from raw counts
        for r in &out {
            let cf = table.count(&r.key, 2020) as f64;
            let ct = table.count(&r.key, 2024) as f64;
            let want = 100.0 * (ct - cf) / cf;
            assert!((r.pct_change - want).abs() <= want.abs().max(1.0) * 1e-12);
        }
    }

    #[test]
    fn mirrored_plant_ranks_first_down() {
        let (mut table, planted) = planted_table(1);
        // reverse the construction: high in 2020, low in 2024
        table.set_count(planted.clone(), 2020, 400);
        table.set_count(planted.clone(), 2024, 50);
        let out = trend_scan(
            &table,
            2020,
            2024,
            &ScanConfig::default(),
            &ExclusionList::empty(),
            ScanDirection::Down,
        )
        .unwrap();
        assert_eq!(out[0].key, planted);
        assert_eq!(out[0].direction, Direction::Down);
    }

    #[test]
    fn scan_is_a_permutation_of_filtered_keys() {
        let (table, _) = planted_table(8);
        let up = trend_scan(
            &table,
            2020,
            2024,
            &ScanConfig::default(),
            &ExclusionList::empty(),
            ScanDirection::Up,
        )
        .unwrap();
        let down = trend_scan(
            &table,
            2020,
            2024,
            &ScanConfig::default(),
            &ExclusionList::empty(),
            ScanDirection::Down,
        )
        .unwrap();
        let mut a: Vec<String> = up.iter().map(|r| r.key.to_string()).collect();
        let mut b: Vec<String> = down.iter().map(|r| r.key.to_string()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_baseline_sorts_above_finite_increases() {
        let mut table = CountTable::new();
        table.set_count(key("fresh", Upos::NOUN), 2024, 50);
        table.set_count(key("grower", Upos::NOUN), 2020, 10);
        table.set_count(key("grower", Upos::NOUN), 2024, 1000);
        table.set_totals(2020, SliceTotals { token_total: 100_000, doc_total: 10 });
        table.set_totals(2024, SliceTotals { token_total: 100_000, doc_total: 10 });
        let out = trend_scan(
            &table,
            2020,
            2024,
            &ScanConfig::default(),
            &ExclusionList::empty(),
            ScanDirection::Up,
        )
        .unwrap();
        assert_eq!(out[0].key.lemma, "fresh");
        assert!(out[0].pct_change.is_infinite());
    }

    #[test]
    fn ties_break_by_chi2_then_key() {
        let mut table = CountTable::new();
        // identical pct_change (x2), different magnitudes → different chi2
        table.set_count(key("big", Upos::NOUN), 2020, 1000);
        table.set_count(key("big", Upos::NOUN), 2024, 2000);
        table.set_count(key("small", Upos::NOUN), 2020, 10);
        table.set_count(key("small", Upos::NOUN), 2024, 20);
        // exact tie on pct and chi2 → lexicographic
        table.set_count(key("alpha", Upos::NOUN), 2020, 100);
        table.set_count(key("alpha", Upos::NOUN), 2024, 200);
        table.set_count(key("beta", Upos::NOUN), 2020, 100);
        table.set_count(key("beta", Upos::NOUN), 2024, 200);
        table.set_totals(2020, SliceTotals { token_total: 1_000_000, doc_total: 1 });
        table.set_totals(2024, SliceTotals { token_total: 1_000_000, doc_total: 1 });
        let out = trend_scan(
            &table,
            2020,
            2024,
            &ScanConfig::default(),
            &ExclusionList::empty(),
            ScanDirection::Up,
        )
        .unwrap();
        let order: Vec<&str> = out.iter().map(|r| r.key.lemma.as_str()).collect();
        assert_eq!(order, vec!["big", "alpha", "beta", "small"]);
    }

    #[test]
    fn min_count_floor_applies_to_both_anchors() {
        let mut table = CountTable::new();
        table.set_count(key("rare", Upos::NOUN), 2020, 2);
        table.set_count(key("rare", Upos::NOUN), 2024, 4);
        table.set_count(key("kept", Upos::NOUN), 2024, 5);
        table.set_totals(2020, SliceTotals { token_total: 1000, doc_total: 1 });
        table.set_totals(2024, SliceTotals { token_total: 1000, doc_total: 1 });
        let out = trend_scan(
            &table,
            2020,
            2024,
            &ScanConfig::default(),
            &ExclusionList::empty(),
            ScanDirection::Up,
        )
        .unwrap();
        let names: Vec<&str> = out.iter().map(|r| r.key.lemma.as_str()).collect();
        assert_eq!(names, vec!["kept"]);
    }

    #[test]
    fn unknown_slice_is_an_error() {
        let (table, _) = planted_table(2);
        let err = trend_scan(
            &table,
            2020,
            1999,
            &ScanConfig::default(),
            &ExclusionList::empty(),
            ScanDirection::Up,
        )
        .unwrap_err();
        assert!(matches!(err, TrendError::Counts(CountsError::UnknownSlice(1999))));
    }

    #[test]
    fn record_pct_recomputes_from_opms() {
        let (table, _) = planted_table(8);
        let out = trend_scan(
            &table,
            2020,
            2024,
            &ScanConfig::default(),
            &ExclusionList::empty(),
            ScanDirection::Up,
        )
        .unwrap();
        for r in &out {
            let again = percent_change(r.opm_from, r.opm_to);
            assert!((again - r.pct_change).abs() <= r.pct_change.abs().max(1e-12) * 1e-12);
        }
    }

    #[test]
    fn exclusion_list_parses_keys_and_patterns() {
        let src = "# covid-era vocabulary\nlockdown_NOUN\tpandemic topic\n.*_NUM\tyear numbers\n";
        let list = ExclusionList::from_reader(src.as_bytes()).unwrap();
        assert_eq!(list.len(), 2);
        assert!(list.is_excluded(&key("lockdown", Upos::NOUN)));
        assert!(!list.is_excluded(&key("lockdown", Upos::VERB)));
        assert!(list.is_excluded(&key("2020", Upos::NUM)));
        assert_eq!(list.reason_for(&key("2020", Upos::NUM)), Some("year numbers"));
    }

    #[test]
    fn exclusion_list_requires_reason_and_valid_pattern() {
        let err = ExclusionList::from_reader("word_NOUN\t \n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 1"));
        let err = ExclusionList::from_reader("wor(d_NOUN\toops\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("invalid pattern"));
    }

    #[test]
    fn excluded_keys_leave_the_ranking() {
        let (table, planted) = planted_table(8);
        let mut excl = ExclusionList::empty();
        excl.add("spiker_ADJ", "planted for the test").unwrap();
        let out =
            trend_scan(&table, 2020, 2024, &ScanConfig::default(), &excl, ScanDirection::Up)
                .unwrap();
        assert!(out.iter().all(|r| r.key != planted));
    }

    #[test]
    fn series_absent_key_is_all_zero_full_length() {
        let mut table = CountTable::new();
        for year in 1975..=2024 {
            table.set_totals(year, SliceTotals { token_total: 1000, doc_total: 1 });
        }
        let s = series(&table, &key("ghost", Upos::NOUN));
        assert_eq!(s.len(), 50);
        assert!(s.iter().all(|&(_, opm)| opm == 0.0));
    }

    #[test]
    fn series_flat_then_spike_shape() {
        let mut table = CountTable::new();
        let k = key("crucial", Upos::ADJ);
        for year in 1975..=2024 {
            table.set_totals(year, SliceTotals { token_total: 1_000_000, doc_total: 100 });
            // flat background until the final two slices spike
            let count = match year {
                2023 => 600,
                2024 => 1500,
                _ => 200,
            };
            table.set_count(k.clone(), year, count);
        }
        let s = series(&table, &k);
        assert_eq!(s.len(), 50);
        let last = s[49].1;
        let prev = s[48].1;
        let before = s[47].1;
        assert!(before < prev && prev < last, "expected monotone rise at the end");
        // inverse of the OPM definition recovers raw counts
        for &(slice, opm) in &s {
            let total = table.totals(slice).unwrap().token_total as f64;
            let back = (opm * total / 1e6).round() as u64;
            assert_eq!(back, table.count(&k, slice));
        }
    }

    #[test]
    fn trends_csv_roundtrip_including_inf() {
        let records = vec![
            TrendRecord {
                key: key("fresh", Upos::NOUN),
                opm_from: 0.0,
                opm_to: 12.5,
                pct_change: f64::INFINITY,
                chi2: 42.125,
                p: 1.25e-10,
                direction: Direction::Up,
            },
            TrendRecord {
                key: key("fade", Upos::VERB),
                opm_from: 10.0,
                opm_to: 5.0,
                pct_change: -50.0,
                chi2: 3.5,
                p: 0.06125,
                direction: Direction::Down,
            },
        ];
        let mut buf = Vec::new();
        write_trends_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains(",inf,"), "expected inf serialization, got: {text}");
        let back = read_trends_csv(buf.as_slice()).unwrap();
        assert_eq!(back, records);
    }
}
