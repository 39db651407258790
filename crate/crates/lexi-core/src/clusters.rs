//! Synonym clusters around focal words and the replacement-hypothesis
//! verdict.
//!
//! Focal words come from a CSV list, candidate synonyms from a thesaurus
//! file (never scraped), and the candidate set is narrowed to the five most
//! relevant synonyms for academic writing by a chat endpoint. Each cluster
//! then carries trend records for the focal key and every member, and is
//! classified as co-rising, replacing, or mixed.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::counts::{CountTable, LemmaPosKey};
use crate::llm::{is_refusal, ChatEndpoint, LlmError};
use crate::trends::{record_for, Direction, ScanConfig, TrendError, TrendRecord};
use crate::tagging::Upos;

/// Fraction of members that must move together for a verdict.
pub const DEFAULT_RISE_FRACTION: f64 = 0.6;

/// Fig.-3-style histogram bucket edges, in percent.
pub const DEFAULT_HISTOGRAM_EDGES: [f64; 4] = [-100.0, 0.0, 100.0, 300.0];

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("focal words row {row}: {msg}")]
    Focal { row: usize, msg: String },
    #[error("thesaurus row {row}: {msg}")]
    Thesaurus { row: usize, msg: String },
    #[error("filter-refused: {0}")]
    FilterRefused(String),
    #[error("no candidates to filter")]
    NoCandidates,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Trend(#[from] TrendError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A lexical entry flagged in the literature as abruptly overused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FocalWord {
    pub key: LemmaPosKey,
    pub provenance: String,
}

/// Thesaurus candidates for one focal key, deduplicated, single words only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThesaurusEntry {
    pub key: LemmaPosKey,
    pub candidates: Vec<String>,
}

/// File-backed thesaurus. Focal keys without a row yield empty candidate
/// lists (their clusters come out as singletons).
#[derive(Debug, Default)]
pub struct Thesaurus {
    entries: BTreeMap<LemmaPosKey, ThesaurusEntry>,
}

impl Thesaurus {
    pub fn entry_for(&self, key: &LemmaPosKey) -> ThesaurusEntry {
        self.entries
            .get(key)
            .cloned()
            .unwrap_or_else(|| ThesaurusEntry { key: key.clone(), candidates: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Load `lemma,upos,provenance` rows.
pub fn load_focal_words(path: &Path) -> Result<Vec<FocalWord>, ClusterError> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| ClusterError::Focal { row: 0, msg: e.to_string() })?;
    let mut out = Vec::new();
    for (idx, rec) in rd.records().enumerate() {
        let row = idx + 2;
        let rec = rec.map_err(|e| ClusterError::Focal { row, msg: e.to_string() })?;
        if rec.len() < 2 {
            return Err(ClusterError::Focal { row, msg: "expected lemma,upos,provenance".into() });
        }
        let key = parse_key(&rec[0], &rec[1])
            .map_err(|msg| ClusterError::Focal { row, msg })?;
        let provenance = rec.get(2).unwrap_or("").to_string();
        out.push(FocalWord { key, provenance });
    }
    Ok(out)
}

/// Load `lemma,upos,candidates` rows with semicolon-separated candidates.
/// Candidates are lowercased and deduplicated in order; multi-word
/// candidates are dropped with a warning.
pub fn load_thesaurus(path: &Path) -> Result<Thesaurus, ClusterError> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| ClusterError::Thesaurus { row: 0, msg: e.to_string() })?;
    let mut thesaurus = Thesaurus::default();
    for (idx, rec) in rd.records().enumerate() {
        let row = idx + 2;
        let rec = rec.map_err(|e| ClusterError::Thesaurus { row, msg: e.to_string() })?;
        if rec.len() != 3 {
            return Err(ClusterError::Thesaurus {
                row,
                msg: format!("expected 3 fields, got {}", rec.len()),
            });
        }
        let key = parse_key(&rec[0], &rec[1])
            .map_err(|msg| ClusterError::Thesaurus { row, msg })?;
        let mut candidates: Vec<String> = Vec::new();
        for raw in rec[2].split(';') {
            let cand = raw.trim().to_lowercase();
            if cand.is_empty() {
                continue;
            }
            if cand.contains(char::is_whitespace) {
                log::warn!("thesaurus row {row}: dropping multi-word candidate {cand:?}");
                continue;
            }
            if !candidates.contains(&cand) {
                candidates.push(cand);
            }
        }
        thesaurus
            .entries
            .insert(key.clone(), ThesaurusEntry { key, candidates });
    }
    Ok(thesaurus)
}

fn parse_key(lemma: &str, tag: &str) -> Result<LemmaPosKey, String> {
    let lemma = lemma.trim().to_lowercase();
    if lemma.is_empty() {
        return Err("empty lemma".into());
    }
    let upos: Upos = tag.trim().parse()?;
    Ok(LemmaPosKey::new(lemma, upos))
}

// ---------- LLM relevance filter ----------

/// The relevance-filter prompt sent for one focal word and its thesaurus
/// candidates.
pub fn relevance_prompt(target_pos: &str, target_word: &str, candidates: &[String]) -> String {
    format!(
        "I am looking for synonyms in the context of academic writing. \
         Given the following {target_pos} \"{target_word}\", I have found these synonyms: {}. \
         Which of these are most relevant in the context of the given part of speech in an \
         academic abstract? Please disregard any repeats and only reply with a list of the \
         5 most relevant synonyms separated by commas (csv-like).",
        candidates.join(", ")
    )
}

/// Ask the endpoint for the five most relevant candidates. The reply is
/// parsed CSV-like; entries outside the candidate list are dropped with a
/// warning; at most five survive.
pub fn llm_filter_top5(
    endpoint: &dyn ChatEndpoint,
    focal: &LemmaPosKey,
    candidates: &[String],
) -> Result<Vec<String>, ClusterError> {
    if candidates.is_empty() {
        return Err(ClusterError::NoCandidates);
    }
    let prompt = relevance_prompt(focal.upos.as_str(), &focal.lemma, candidates);
    let reply = match endpoint.complete(&prompt) {
        Ok(reply) => reply,
        Err(LlmError::EmptyReply) => return Err(ClusterError::FilterRefused("empty reply".into())),
        Err(LlmError::Refused(r)) => return Err(ClusterError::FilterRefused(r)),
        Err(e) => return Err(ClusterError::Llm(e)),
    };
    if is_refusal(&reply) {
        return Err(ClusterError::FilterRefused(reply));
    }

    let mut out: Vec<String> = Vec::new();
    for raw in reply.split(',') {
        let lemma = raw.trim().trim_matches(['"', '\'']).to_lowercase();
        if lemma.is_empty() || out.contains(&lemma) {
            continue;
        }
        if !candidates.contains(&lemma) {
            log::warn!("filter reply for {focal} contains non-candidate {lemma:?}; dropped");
            continue;
        }
        out.push(lemma);
        if out.len() == 5 {
            break;
        }
    }
    Ok(out)
}

// ---------- clusters ----------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Focal word significantly up and most members up with it.
    CoRise,
    /// Focal word significantly up while most members are significantly
    /// down — the replacement hypothesis.
    Replacement,
    Mixed,
    /// No members to compare against.
    Singleton,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::CoRise => "co_rise",
            Verdict::Replacement => "replacement",
            Verdict::Mixed => "mixed",
            Verdict::Singleton => "singleton",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A focal word, its filtered synonyms (POS inherited from the focal key),
/// their trend records, and a replacement-hypothesis verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct SynonymCluster {
    pub focal: FocalWord,
    pub members: Vec<LemmaPosKey>,
    pub focal_trend: TrendRecord,
    pub member_trends: Vec<TrendRecord>,
    pub verdict: Verdict,
}

/// Attach trend records for the focal key and every member between the
/// anchor slices, and classify with the default thresholds.
pub fn build_cluster(
    focal: &FocalWord,
    members: &[String],
    table: &CountTable,
    slice_from: i32,
    slice_to: i32,
    cfg: &ScanConfig,
) -> Result<SynonymCluster, ClusterError> {
    let member_keys: Vec<LemmaPosKey> = members
        .iter()
        .filter(|m| **m != focal.key.lemma)
        .map(|m| LemmaPosKey::new(m.clone(), focal.key.upos))
        .collect();
    let focal_trend = record_for(table, &focal.key, slice_from, slice_to, cfg)?;
    let member_trends: Vec<TrendRecord> = member_keys
        .iter()
        .map(|k| record_for(table, k, slice_from, slice_to, cfg))
        .collect::<Result<_, _>>()?;
    let verdict =
        classify(&focal_trend, &member_trends, cfg.p_threshold, DEFAULT_RISE_FRACTION);
    Ok(SynonymCluster {
        focal: focal.clone(),
        members: member_keys,
        focal_trend,
        member_trends,
        verdict,
    })
}

/// Re-derive a cluster's verdict under explicit thresholds.
pub fn classify_cluster(cluster: &SynonymCluster, p_threshold: f64, rise_fraction: f64) -> Verdict {
    classify(&cluster.focal_trend, &cluster.member_trends, p_threshold, rise_fraction)
}

fn classify(
    focal: &TrendRecord,
    members: &[TrendRecord],
    p_threshold: f64,
    rise_fraction: f64,
) -> Verdict {
    if members.is_empty() {
        return Verdict::Singleton;
    }
    let focal_sig_up = focal.direction == Direction::Up && focal.p < p_threshold;
    if !focal_sig_up {
        return Verdict::Mixed;
    }
    let n = members.len() as f64;
    let up = members.iter().filter(|m| m.direction == Direction::Up).count() as f64;
    let sig_down = members
        .iter()
        .filter(|m| m.direction == Direction::Down && m.p < p_threshold)
        .count() as f64;
    if up / n >= rise_fraction {
        Verdict::CoRise
    } else if sig_down / n >= rise_fraction {
        Verdict::Replacement
    } else {
        Verdict::Mixed
    }
}

/// Histogram over member percent changes. Bucket `i` covers
/// `(edges[i], edges[i+1]]`, except the first bucket which includes its
/// lower edge, and the last which extends to +inf.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bucket_label(&self, i: usize) -> String {
        let lo = self.edges[i];
        match self.edges.get(i + 1) {
            Some(hi) => format!("({lo},{hi}]"),
            None => format!("({lo},inf)"),
        }
    }
}

/// Distribution of member percent changes across all clusters. The bucket
/// sum always equals the number of member trends.
pub fn cluster_distribution(clusters: &[SynonymCluster], edges: &[f64]) -> Histogram {
    assert!(edges.len() >= 2, "need at least two bucket edges");
    assert!(edges.windows(2).all(|w| w[0] < w[1]), "edges must be ascending");
    let mut counts = vec![0u64; edges.len()];
    for cluster in clusters {
        for trend in &cluster.member_trends {
            let pct = trend.pct_change;
            let mut idx = edges.len() - 1;
            for i in 1..edges.len() {
                if pct <= edges[i] {
                    idx = i - 1;
                    break;
                }
            }
            counts[idx] += 1;
        }
    }
    Histogram { edges: edges.to_vec(), counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counts::SliceTotals;

    fn key(lemma: &str, upos: Upos) -> LemmaPosKey {
        LemmaPosKey::new(lemma, upos)
    }

    /// Snapshot reverse-engineered from published OPM/percent values:
    /// counts at token totals of 1e10 so percentages land within ±0.1pp.
    fn table_one_fixture() -> CountTable {
        let mut table = CountTable::new();
        let mut put = |lemma: &str, upos: Upos, opm_2020: f64, pct: f64| {
            let c2020 = (opm_2020 * 1e4).round() as u64;
            let c2024 = (opm_2020 * (1.0 + pct / 100.0) * 1e4).round() as u64;
            table.set_count(key(lemma, upos), 2020, c2020);
            table.set_count(key(lemma, upos), 2024, c2024);
        };
        // focal rows carry their published 2020 OPM; member rows use a
        // nominal 100 OPM baseline, which leaves percent change untouched
        put("underscore", Upos::VERB, 12.9, 765.78);
        put("emphasize", Upos::VERB, 100.0, 180.97);
        put("reinforce", Upos::VERB, 100.0, 2.96);
        put("highlight", Upos::VERB, 100.0, 79.33);
        put("stress", Upos::VERB, 100.0, -3.3);
        put("accentuate", Upos::VERB, 100.0, 47.29);
        put("significant", Upos::ADJ, 934.0, 27.42);
        put("substantial", Upos::ADJ, 100.0, 53.18);
        put("important", Upos::ADJ, 100.0, -23.43);
        put("notable", Upos::ADJ, 100.0, 263.69);
        put("noteworthy", Upos::ADJ, 100.0, 153.51);
        let totals = SliceTotals { token_total: 10_000_000_000, doc_total: 1_000_000 };
        table.set_totals(2020, totals);
        table.set_totals(2024, totals);
        table
    }

    #[test]
    fn thesaurus_parses_candidates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("thesaurus.csv");
        std::fs::write(
            &path,
            "lemma,upos,candidates\n\
             delve,VERB,explore;surf;sift\n\
             crucial,ADJ,essential;Essential;key;of great import;vital\n",
        )
        .unwrap();
        let th = load_thesaurus(&path).unwrap();
        assert_eq!(
            th.entry_for(&key("delve", Upos::VERB)).candidates,
            vec!["explore", "surf", "sift"]
        );
        // dedup preserves order; the multi-word candidate is dropped
        assert_eq!(
            th.entry_for(&key("crucial", Upos::ADJ)).candidates,
            vec!["essential", "key", "vital"]
        );
    }

    #[test]
    fn thesaurus_missing_focal_yields_empty_candidates() {
        let th = Thesaurus::default();
        let entry = th.entry_for(&key("comprehending", Upos::ADJ));
        assert!(entry.candidates.is_empty());
    }

    #[test]
    fn thesaurus_malformed_row_reports_row_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("thesaurus.csv");
        std::fs::write(&path, "lemma,upos,candidates\ndelve,NOTATAG,explore\n").unwrap();
        let err = load_thesaurus(&path).unwrap_err();
        assert!(err.to_string().contains("row 2"), "got: {err}");
    }

    #[test]
    fn relevance_prompt_is_verbatim() {
        let candidates = vec!["explore".to_string(), "surf".into(), "sift".into()];
        let got = relevance_prompt("VERB", "delve", &candidates);
        assert_eq!(
            got,
            "I am looking for synonyms in the context of academic writing. Given the following \
             VERB \"delve\", I have found these synonyms: explore, surf, sift. Which of these \
             are most relevant in the context of the given part of speech in an academic \
             abstract? Please disregard any repeats and only reply with a list of the 5 most \
             relevant synonyms separated by commas (csv-like)."
        );
    }

    fn candidates(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn filter_parses_csv_reply() {
        let ep = |_: &str| Ok("explore, examine, investigate, probe, analyze".to_string());
        let cands =
            candidates(&["explore", "examine", "investigate", "probe", "analyze", "surf"]);
        let got = llm_filter_top5(&ep, &key("delve", Upos::VERB), &cands).unwrap();
        assert_eq!(got, candidates(&["explore", "examine", "investigate", "probe", "analyze"]));
    }

    #[test]
    fn filter_truncates_to_five() {
        let ep = |_: &str| Ok("a, b, c, d, e, f, g".to_string());
        let cands = candidates(&["a", "b", "c", "d", "e", "f", "g"]);
        let got = llm_filter_top5(&ep, &key("x", Upos::NOUN), &cands).unwrap();
        assert_eq!(got.len(), 5);
        assert_eq!(got, candidates(&["a", "b", "c", "d", "e"]));
    }

    #[test]
    fn filter_drops_non_candidates() {
        let ep = |_: &str| Ok("explore, surf".to_string());
        let cands = candidates(&["explore", "examine"]);
        let got = llm_filter_top5(&ep, &key("delve", Upos::VERB), &cands).unwrap();
        assert_eq!(got, candidates(&["explore"]));
    }

    #[test]
    fn filter_refusal_is_an_error() {
        let ep = |_: &str| Ok("I'm sorry, I can't pick synonyms.".to_string());
        let cands = candidates(&["explore"]);
        let err = llm_filter_top5(&ep, &key("delve", Upos::VERB), &cands).unwrap_err();
        assert!(matches!(err, ClusterError::FilterRefused(_)));
    }

    #[test]
    fn filter_requires_candidates() {
        let ep = |_: &str| Ok("whatever".to_string());
        let err = llm_filter_top5(&ep, &key("delve", Upos::VERB), &[]).unwrap_err();
        assert!(matches!(err, ClusterError::NoCandidates));
    }

    #[test]
    fn cluster_matches_published_percentages() {
        let table = table_one_fixture();
        let cfg = ScanConfig::default();
        let focal = FocalWord { key: key("significant", Upos::ADJ), provenance: String::new() };
        let members = candidates(&["substantial", "important", "notable", "noteworthy"]);
        let cluster = build_cluster(&focal, &members, &table, 2020, 2024, &cfg).unwrap();

        assert!((cluster.focal_trend.pct_change - 27.42).abs() < 0.1);
        let want = [53.18, -23.43, 263.69, 153.51];
        for (trend, want) in cluster.member_trends.iter().zip(want) {
            assert!(
                (trend.pct_change - want).abs() < 0.1,
                "{}: got {}, want {want}",
                trend.key,
                trend.pct_change
            );
        }
        // 3 of 4 members rising meets the 0.6 fraction
        assert_eq!(cluster.verdict, Verdict::CoRise);
    }

    #[test]
    fn underscore_cluster_percentages() {
        let table = table_one_fixture();
        let cfg = ScanConfig::default();
        let focal = FocalWord { key: key("underscore", Upos::VERB), provenance: String::new() };
        let members = candidates(&["emphasize", "reinforce", "highlight", "stress", "accentuate"]);
        let cluster = build_cluster(&focal, &members, &table, 2020, 2024, &cfg).unwrap();
        assert!((cluster.focal_trend.pct_change - 765.78).abs() < 0.1);
        assert!((cluster.member_trends[0].pct_change - 180.97).abs() < 0.1);
    }

    #[test]
    fn empty_members_is_singleton() {
        let table = table_one_fixture();
        let cfg = ScanConfig::default();
        let focal = FocalWord { key: key("underscore", Upos::VERB), provenance: String::new() };
        let cluster = build_cluster(&focal, &[], &table, 2020, 2024, &cfg).unwrap();
        assert_eq!(cluster.verdict, Verdict::Singleton);
        assert!(cluster.member_trends.is_empty());
    }

    #[test]
    fn all_members_down_is_replacement() {
        let mut table = CountTable::new();
        table.set_count(key("riser", Upos::ADJ), 2020, 10_000);
        table.set_count(key("riser", Upos::ADJ), 2024, 20_000);
        for i in 0..5 {
            let k = key(&format!("fader{i}"), Upos::ADJ);
            table.set_count(k.clone(), 2020, 10_000);
            table.set_count(k, 2024, 5_000);
        }
        let totals = SliceTotals { token_total: 100_000_000, doc_total: 1000 };
        table.set_totals(2020, totals);
        table.set_totals(2024, totals);

        let cfg = ScanConfig::default();
        let focal = FocalWord { key: key("riser", Upos::ADJ), provenance: String::new() };
        let members = candidates(&["fader0", "fader1", "fader2", "fader3", "fader4"]);
        let cluster = build_cluster(&focal, &members, &table, 2020, 2024, &cfg).unwrap();
        assert_eq!(cluster.verdict, Verdict::Replacement);
    }

    #[test]
    fn split_members_are_mixed() {
        let mut table = CountTable::new();
        table.set_count(key("riser", Upos::ADJ), 2020, 10_000);
        table.set_count(key("riser", Upos::ADJ), 2024, 20_000);
        for (i, to) in [(0, 20_000u64), (1, 20_000), (2, 5_000), (3, 5_000)] {
            let k = key(&format!("m{i}"), Upos::ADJ);
            table.set_count(k.clone(), 2020, 10_000);
            table.set_count(k, 2024, to);
        }
        let totals = SliceTotals { token_total: 100_000_000, doc_total: 1000 };
        table.set_totals(2020, totals);
        table.set_totals(2024, totals);

        let cfg = ScanConfig::default();
        let focal = FocalWord { key: key("riser", Upos::ADJ), provenance: String::new() };
        let members = candidates(&["m0", "m1", "m2", "m3"]);
        let cluster = build_cluster(&focal, &members, &table, 2020, 2024, &cfg).unwrap();
        assert_eq!(cluster.verdict, Verdict::Mixed);
    }

    #[test]
    fn distribution_buckets_published_values() {
        let table = table_one_fixture();
        let cfg = ScanConfig::default();
        let focal = FocalWord { key: key("significant", Upos::ADJ), provenance: String::new() };
        let members = candidates(&["substantial", "important", "notable", "noteworthy"]);
        let cluster = build_cluster(&focal, &members, &table, 2020, 2024, &cfg).unwrap();
        let hist = cluster_distribution(&[cluster], &DEFAULT_HISTOGRAM_EDGES);
        // (+53.18, −23.43, +263.69, +153.51) → one negative, one in (0,100],
        // two in (100,300]
        assert_eq!(hist.counts, vec![1, 1, 2, 0]);
        assert_eq!(hist.total(), 4);
    }

    #[test]
    fn distribution_of_nothing_is_zero() {
        let hist = cluster_distribution(&[], &DEFAULT_HISTOGRAM_EDGES);
        assert_eq!(hist.counts, vec![0, 0, 0, 0]);
        assert_eq!(hist.total(), 0);
    }

    #[test]
    fn distribution_conserves_mass() {
        let table = table_one_fixture();
        let cfg = ScanConfig::default();
        let mut clusters = Vec::new();
        for (lemma, upos, members) in [
            ("significant", Upos::ADJ, candidates(&["substantial", "important", "notable"])),
            ("underscore", Upos::VERB, candidates(&["emphasize", "reinforce"])),
        ] {
            let focal = FocalWord { key: key(lemma, upos), provenance: String::new() };
            clusters.push(build_cluster(&focal, &members, &table, 2020, 2024, &cfg).unwrap());
        }
        let hist = cluster_distribution(&clusters, &DEFAULT_HISTOGRAM_EDGES);
        let member_total: usize = clusters.iter().map(|c| c.member_trends.len()).sum();
        assert_eq!(hist.total(), member_total as u64);
    }

    #[test]
    fn infinite_pct_lands_in_last_bucket() {
        let mut table = CountTable::new();
        table.set_count(key("riser", Upos::ADJ), 2020, 1000);
        table.set_count(key("riser", Upos::ADJ), 2024, 2000);
        table.set_count(key("fresh", Upos::ADJ), 2024, 1000);
        let totals = SliceTotals { token_total: 1_000_000, doc_total: 10 };
        table.set_totals(2020, totals);
        table.set_totals(2024, totals);
        let cfg = ScanConfig::default();
        let focal = FocalWord { key: key("riser", Upos::ADJ), provenance: String::new() };
        let cluster = build_cluster(
            &focal,
            &candidates(&["fresh"]),
            &table,
            2020,
            2024,
            &cfg,
        )
        .unwrap();
        let hist = cluster_distribution(&[cluster], &DEFAULT_HISTOGRAM_EDGES);
        assert_eq!(hist.counts, vec![0, 0, 0, 1]);
    }

    #[test]
    fn verdict_invariant_under_uniform_scaling_when_significance_holds() {
        let build = |scale: u64| {
            let mut table = CountTable::new();
            table.set_count(key("riser", Upos::ADJ), 2020, 10_000 * scale);
            table.set_count(key("riser", Upos::ADJ), 2024, 20_000 * scale);
            for i in 0..4 {
                let k = key(&format!("m{i}"), Upos::ADJ);
                table.set_count(k.clone(), 2020, 10_000 * scale);
                table.set_count(k, 2024, 15_000 * scale);
            }
            let totals = SliceTotals {
                token_total: 100_000_000 * scale,
                doc_total: 1000 * scale,
            };
            table.set_totals(2020, totals);
            table.set_totals(2024, totals);
            let cfg = ScanConfig::default();
            let focal = FocalWord { key: key("riser", Upos::ADJ), provenance: String::new() };
            build_cluster(
                &focal,
                &candidates(&["m0", "m1", "m2", "m3"]),
                &table,
                2020,
                2024,
                &cfg,
            )
            .unwrap()
        };
        let base = build(1);
        let scaled = build(7);
        assert_eq!(base.verdict, scaled.verdict);
        for (a, b) in base.member_trends.iter().zip(&scaled.member_trends) {
            assert_eq!(a.pct_change, b.pct_change);
            assert_eq!(a.direction, b.direction);
        }
    }
}
