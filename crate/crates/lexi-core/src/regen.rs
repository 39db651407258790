//! The regenerated-abstract experiment: sample human abstracts, summarize
//! them to keywords, regenerate abstracts from the keywords, and compare
//! the human and AI corpora key by key.
//!
//! Every endpoint request and raw reply is persisted to a JSONL audit log;
//! refusals are recorded, never silently dropped.

use std::collections::{BTreeSet, HashMap};
use std::io::{self, BufRead, Write};

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand::SeedableRng;
use serde_json::Value;
use thiserror::Error;

use crate::corpus::Document;
use crate::counts::{CountTable, CountsError, LemmaPosKey};
use crate::llm::{is_refusal, ChatEndpoint, LlmError};
use crate::stats::{chi_square_2x2, percent_change, ContingencyTable2x2, StatsError};
use crate::trends::{Direction, TrendRecord};

#[derive(Debug, Error)]
pub enum RegenError {
    #[error("no keywords to regenerate from")]
    NoKeywords,
    #[error("{0} table must contain exactly one slice")]
    NotSingleSlice(&'static str),
    #[error("regen jsonl line {line}: {msg}")]
    Record { line: usize, msg: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Counts(#[from] CountsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One original abstract with its keyword summary and regenerated text,
/// or a refusal marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegenPair {
    pub original: Document,
    pub keywords: Vec<String>,
    pub regenerated: Option<String>,
    pub refused: bool,
}

// ---------- sampling ----------

/// Uniform sample without replacement from one slice of a document stream
/// (reservoir sampling, deterministic for a fixed seed). If fewer than `n`
/// documents exist, all of them come back with a warning.
pub fn sample_abstracts(
    docs: impl IntoIterator<Item = Document>,
    slice: i32,
    n: usize,
    seed: u64,
) -> Vec<Document> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut reservoir: Vec<Document> = Vec::new();
    let mut seen = 0usize;
    for doc in docs {
        if doc.slice != slice {
            continue;
        }
        if seen < n {
            reservoir.push(doc);
        } else {
            let j = rng.random_range(0..=seen);
            if j < n {
                reservoir[j] = doc;
            }
        }
        seen += 1;
    }
    if seen < n {
        log::warn!("sample: requested {n} documents but slice {slice} has only {seen}");
    }
    reservoir
}

// ---------- the two prompts ----------

pub fn summarize_prompt(abstract_text: &str) -> String {
    format!(
        "The following text is an abstract from a scientific paper: {abstract_text} \
         Summarize the abstract in keywords, separate keywords by commas"
    )
}

pub fn regenerate_prompt(keywords: &[String]) -> String {
    format!(
        "Please write an abstract for a scientific paper, about 200 words in length, \
         based on the following notes. {}",
        keywords.join(", ")
    )
}

/// Split a keyword reply on commas, trim, and drop empty fragments.
pub fn parse_keywords(reply: &str) -> Vec<String> {
    reply
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Ask the endpoint for a keyword summary of one abstract.
pub fn summarize_keywords(
    endpoint: &dyn ChatEndpoint,
    doc: &Document,
) -> Result<Vec<String>, LlmError> {
    let reply = endpoint.complete(&summarize_prompt(&doc.text))?;
    if is_refusal(&reply) {
        return Err(LlmError::Refused(reply));
    }
    let keywords = parse_keywords(&reply);
    if keywords.is_empty() {
        return Err(LlmError::EmptyReply);
    }
    Ok(keywords)
}

/// Regenerate an abstract from keyword notes. The reply comes back
/// unmodified.
pub fn regenerate_abstract(
    endpoint: &dyn ChatEndpoint,
    keywords: &[String],
) -> Result<String, RegenError> {
    if keywords.is_empty() {
        return Err(RegenError::NoKeywords);
    }
    let reply = endpoint.complete(&regenerate_prompt(keywords))?;
    if is_refusal(&reply) {
        return Err(LlmError::Refused(reply).into());
    }
    Ok(reply)
}

// ---------- the harness ----------

/// Run summarize + regenerate over sampled documents. Refusals are retried
/// at most `refusal_retries` times and then recorded as refused pairs;
/// transport failures abort the run. Every prompt and raw reply lands in
/// the audit log as one JSON line.
pub fn run_regen(
    endpoint: &dyn ChatEndpoint,
    docs: &[Document],
    audit: &mut dyn Write,
    refusal_retries: u32,
) -> Result<Vec<RegenPair>, RegenError> {
    let mut pairs = Vec::with_capacity(docs.len());
    for doc in docs {
        let prompt = summarize_prompt(&doc.text);
        let keywords = match stage_with_retries(
            endpoint,
            audit,
            "summarize",
            &doc.id,
            &prompt,
            refusal_retries,
        )? {
            Some(reply) => {
                let kw = parse_keywords(&reply);
                if kw.is_empty() {
                    pairs.push(RegenPair {
                        original: doc.clone(),
                        keywords: Vec::new(),
                        regenerated: None,
                        refused: true,
                    });
                    continue;
                }
                kw
            }
            None => {
                pairs.push(RegenPair {
                    original: doc.clone(),
                    keywords: Vec::new(),
                    regenerated: None,
                    refused: true,
                });
                continue;
            }
        };

        let prompt = regenerate_prompt(&keywords);
        match stage_with_retries(endpoint, audit, "regenerate", &doc.id, &prompt, refusal_retries)?
        {
            Some(text) => pairs.push(RegenPair {
                original: doc.clone(),
                keywords,
                regenerated: Some(text),
                refused: false,
            }),
            None => pairs.push(RegenPair {
                original: doc.clone(),
                keywords,
                regenerated: None,
                refused: true,
            }),
        }
    }
    Ok(pairs)
}

/// One audited endpoint exchange with refusal retries. `Ok(None)` means the
/// endpoint refused every attempt.
fn stage_with_retries(
    endpoint: &dyn ChatEndpoint,
    audit: &mut dyn Write,
    stage: &str,
    id: &str,
    prompt: &str,
    retries: u32,
) -> Result<Option<String>, RegenError> {
    for attempt in 0..=retries {
        match endpoint.complete(prompt) {
            Ok(reply) => {
                let refused = is_refusal(&reply);
                audit_line(audit, stage, id, attempt, prompt, Some(&reply), refused, None)?;
                if !refused {
                    return Ok(Some(reply));
                }
            }
            Err(LlmError::EmptyReply) => {
                audit_line(audit, stage, id, attempt, prompt, None, true, None)?;
            }
            Err(LlmError::Refused(reply)) => {
                audit_line(audit, stage, id, attempt, prompt, Some(&reply), true, None)?;
            }
            Err(e) => {
                audit_line(audit, stage, id, attempt, prompt, None, false, Some(&e.to_string()))?;
                return Err(e.into());
            }
        }
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn audit_line(
    audit: &mut dyn Write,
    stage: &str,
    id: &str,
    attempt: u32,
    prompt: &str,
    reply: Option<&str>,
    refused: bool,
    error: Option<&str>,
) -> io::Result<()> {
    let line = serde_json::json!({
        "stage": stage,
        "id": id,
        "attempt": attempt,
        "prompt": prompt,
        "reply": reply,
        "refused": refused,
        "error": error,
    });
    writeln!(audit, "{line}")
}

// ---------- regen JSONL ----------

/// One object per pair: `id`, `keywords` (array), `regenerated` (string or
/// null), `refused` (boolean).
pub fn write_regen_jsonl<'a, W: Write>(
    pairs: impl IntoIterator<Item = &'a RegenPair>,
    mut w: W,
) -> io::Result<()> {
    for pair in pairs {
        let line = serde_json::json!({
            "id": pair.original.id,
            "keywords": pair.keywords,
            "regenerated": pair.regenerated,
            "refused": pair.refused,
        });
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Read back the fields persisted by [`write_regen_jsonl`] as
/// (id, keywords, regenerated, refused) rows.
pub fn read_regen_jsonl(
    r: impl BufRead,
) -> Result<Vec<(String, Vec<String>, Option<String>, bool)>, RegenError> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = idx + 1;
        let err = |msg: String| RegenError::Record { line: row, msg };
        let v: Value =
            serde_json::from_str(&line).map_err(|e| err(format!("invalid JSON: {e}")))?;
        let id = v
            .get("id")
            .and_then(Value::as_str)
            .ok_or_else(|| err("missing field id".into()))?
            .to_string();
        let keywords = v
            .get("keywords")
            .and_then(Value::as_array)
            .ok_or_else(|| err("missing field keywords".into()))?
            .iter()
            .filter_map(Value::as_str)
            .map(str::to_string)
            .collect();
        let regenerated = match v.get("regenerated") {
            Some(Value::String(s)) => Some(s.clone()),
            Some(Value::Null) | None => None,
            Some(_) => return Err(err("field regenerated must be string or null".into())),
        };
        let refused = v.get("refused").and_then(Value::as_bool).unwrap_or(false);
        out.push((id, keywords, regenerated, refused));
    }
    Ok(out)
}

// ---------- corpus comparison ----------

/// One key's OPM in the human corpus vs the AI-regenerated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRecord {
    pub key: LemmaPosKey,
    pub opm_human: f64,
    pub opm_ai: f64,
    pub pct_delta: f64,
    pub chi2: f64,
    pub p: f64,
}

/// Compare two single-slice tables over the union of their keys: OPMs,
/// human→AI percent delta, and the same chi-square test used for
/// time trends. Output is sorted by key and covers every key exactly once.
pub fn compare_corpora(
    human: &CountTable,
    ai: &CountTable,
    continuity_correction: bool,
) -> Result<Vec<ComparisonRecord>, RegenError> {
    let human_slice = single_slice(human, "human")?;
    let ai_slice = single_slice(ai, "ai")?;
    let human_total = human.totals(human_slice).expect("slice exists").token_total;
    let ai_total = ai.totals(ai_slice).expect("slice exists").token_total;
    if human_total == 0 {
        return Err(CountsError::ZeroTotal(human_slice).into());
    }
    if ai_total == 0 {
        return Err(CountsError::ZeroTotal(ai_slice).into());
    }

    let keys: BTreeSet<&LemmaPosKey> = human.keys().chain(ai.keys()).collect();
    let mut out = Vec::with_capacity(keys.len());
    for key in keys {
        let count_human = human.count(key, human_slice);
        let count_ai = ai.count(key, ai_slice);
        let opm_human = count_human as f64 * 1e6 / human_total as f64;
        let opm_ai = count_ai as f64 * 1e6 / ai_total as f64;
        let (chi2, p) = if count_human == 0 && count_ai == 0 {
            (0.0, 1.0)
        } else {
            let t =
                ContingencyTable2x2::from_counts(count_human, human_total, count_ai, ai_total)?;
            let r = chi_square_2x2(&t, continuity_correction)?;
            (r.chi2, r.p)
        };
        out.push(ComparisonRecord {
            key: key.clone(),
            opm_human,
            opm_ai,
            pct_delta: percent_change(opm_human, opm_ai),
            chi2,
            p,
        });
    }
    Ok(out)
}

fn single_slice(table: &CountTable, name: &'static str) -> Result<i32, RegenError> {
    let slices = table.slices();
    match slices.as_slice() {
        [only] => Ok(*only),
        _ => Err(RegenError::NotSingleSlice(name)),
    }
}

pub const COMPARISON_CSV_HEADER: &str = "lemma,upos,opm_human,opm_ai,pct_delta,chi2,p";

pub fn write_comparison_csv<'a, W: Write>(
    records: impl IntoIterator<Item = &'a ComparisonRecord>,
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "{COMPARISON_CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.key.lemma, r.key.upos, r.opm_human, r.opm_ai, r.pct_delta, r.chi2, r.p
        )?;
    }
    Ok(())
}

pub fn read_comparison_csv(r: impl BufRead) -> Result<Vec<ComparisonRecord>, RegenError> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let row = idx + 1;
        if row == 1 {
            if line.trim() != COMPARISON_CSV_HEADER {
                return Err(RegenError::Record { line: row, msg: "unexpected header".into() });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(RegenError::Record {
                line: row,
                msg: format!("expected 7 fields, got {}", fields.len()),
            });
        }
        let err = |msg: String| RegenError::Record { line: row, msg };
        let upos = fields[1].parse().map_err(err)?;
        let parse_f = |s: &str| -> Result<f64, RegenError> {
            s.parse::<f64>()
                .map_err(|e| RegenError::Record { line: row, msg: format!("{s:?}: {e}") })
        };
        out.push(ComparisonRecord {
            key: LemmaPosKey::new(fields[0].to_string(), upos),
            opm_human: parse_f(fields[2])?,
            opm_ai: parse_f(fields[3])?,
            pct_delta: parse_f(fields[4])?,
            chi2: parse_f(fields[5])?,
            p: parse_f(fields[6])?,
        });
    }
    Ok(out)
}

// ---------- decreasing focal words ----------

/// Intersect words significantly down over time with words underused by the
/// AI corpus: keys whose time trend is significantly down AND whose
/// human→AI delta is negative (significantly so unless `relaxed`). Ordered
/// by time percent change ascending.
pub fn decreasing_focal_words(
    time_decreases: &[TrendRecord],
    ai_comparison: &[ComparisonRecord],
    p_threshold: f64,
    relaxed: bool,
) -> Vec<LemmaPosKey> {
    let by_key: HashMap<&LemmaPosKey, &ComparisonRecord> =
        ai_comparison.iter().map(|r| (&r.key, r)).collect();
    let mut hits: Vec<&TrendRecord> = time_decreases
        .iter()
        .filter(|t| t.direction == Direction::Down && t.p < p_threshold)
        .filter(|t| match by_key.get(&t.key) {
            Some(ai) => ai.pct_delta < 0.0 && (relaxed || ai.p < p_threshold),
            None => false,
        })
        .collect();
    hits.sort_by(|a, b| {
        a.pct_change.total_cmp(&b.pct_change).then_with(|| a.key.cmp(&b.key))
    });
    hits.into_iter().map(|t| t.key.clone()).collect()
}
