//! Document ingestion: JSONL corpora and PubMed efetch XML.
//!
//! Everything downstream works on [`Document`]s bucketed into integer year
//! slices. Readers validate the document invariants (non-empty id and text,
//! slice inside the configured range) and report malformed records with
//! their line numbers instead of aborting the stream.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocumentSource {
    Jsonl,
    PubmedXml,
    Fetched,
}

/// One abstract (or abstract-like text) in one year slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub slice: i32,
    pub text: String,
    pub source: DocumentSource,
}

/// Inclusive year window a corpus is allowed to span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceRange {
    pub min: i32,
    pub max: i32,
}

impl Default for SliceRange {
    fn default() -> Self {
        SliceRange { min: 1975, max: 2024 }
    }
}

impl SliceRange {
    pub fn new(min: i32, max: i32) -> SliceRange {
        SliceRange { min, max }
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.min..=self.max).contains(&year)
    }
}

/// Per-slice document counts plus provenance notes for a produced corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusManifest {
    pub slices: Vec<i32>,
    pub doc_counts: BTreeMap<i32, u64>,
    pub provenance: Vec<String>,
}

impl CorpusManifest {
    pub fn from_counts(doc_counts: BTreeMap<i32, u64>, provenance: Vec<String>) -> CorpusManifest {
        let slices = doc_counts.keys().copied().collect();
        CorpusManifest { slices, doc_counts, provenance }
    }

    pub fn total_docs(&self) -> u64 {
        self.doc_counts.values().sum()
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] io::Error),
    /// One bad record; the stream continues.
    #[error("line {line}: {msg}")]
    Record { line: usize, msg: String },
    /// Unparseable XML; the stream stops.
    #[error("xml error at byte {offset}: {msg}")]
    Xml { offset: u64, msg: String },
}

impl IngestError {
    pub fn is_fatal(&self) -> bool {
        !matches!(self, IngestError::Record { .. })
    }
}

fn validate(id: &str, year: i32, text: &str, range: SliceRange) -> Result<(), String> {
    if id.is_empty() {
        return Err("empty id".into());
    }
    if text.trim().is_empty() {
        return Err("empty text".into());
    }
    if !range.contains(year) {
        return Err(format!("year {year} outside slice range {}..={}", range.min, range.max));
    }
    Ok(())
}

// ---------- JSONL ----------

/// Streaming reader for the JSONL document format: one object per line with
/// required keys `id` (string), `year` (integer), `text` (string).
pub struct JsonlReader<R: BufRead> {
    lines: io::Lines<R>,
    line_no: usize,
    range: SliceRange,
    done: bool,
}

impl JsonlReader<io::BufReader<std::fs::File>> {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(Self::new(io::BufReader::new(file)))
    }
}

impl<R: BufRead> JsonlReader<R> {
    pub fn new(r: R) -> Self {
        JsonlReader { lines: r.lines(), line_no: 0, range: SliceRange::default(), done: false }
    }

    pub fn with_range(mut self, range: SliceRange) -> Self {
        self.range = range;
        self
    }

    fn parse_line(&self, line: &str) -> Result<Document, IngestError> {
        let line_no = self.line_no;
        let record = |msg: String| IngestError::Record { line: line_no, msg };

        let value: Value = serde_json::from_str(line)
            .map_err(|e| record(format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| record("expected a JSON object".into()))?;

        let id = match obj.get("id") {
            None => return Err(record("missing field id".into())),
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(record("field id must be a string".into())),
        };
        let year = match obj.get("year") {
            None => return Err(record("missing field year".into())),
            Some(v) => v
                .as_i64()
                .and_then(|y| i32::try_from(y).ok())
                .ok_or_else(|| record("field year must be an integer".into()))?,
        };
        let text = match obj.get("text") {
            None => return Err(record("missing field text".into())),
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(record("field text must be a string".into())),
        };
        validate(&id, year, &text, self.range).map_err(record)?;
        Ok(Document { id, slice: year, text, source: DocumentSource::Jsonl })
    }
}

impl<R: BufRead> Iterator for JsonlReader<R> {
    type Item = Result<Document, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            match self.lines.next()? {
                Ok(line) => {
                    self.line_no += 1;
                    if line.trim().is_empty() {
                        continue;
                    }
                    return Some(self.parse_line(&line));
                }
                Err(e) => {
                    // non-UTF-8 and I/O problems are fatal
                    self.done = true;
                    return Some(Err(IngestError::Io(e)));
                }
            }
        }
    }
}

/// Write documents as JSONL (UTF-8, LF). `JsonlReader` is a left inverse of
/// this writer for id, year, and text.
pub fn write_jsonl<'a, W: Write>(
    docs: impl IntoIterator<Item = &'a Document>,
    mut w: W,
) -> io::Result<()> {
    for doc in docs {
        write_jsonl_one(doc, &mut w)?;
    }
    Ok(())
}

pub fn write_jsonl_one<W: Write>(doc: &Document, mut w: W) -> io::Result<()> {
    let line = serde_json::json!({
        "id": doc.id,
        "year": doc.slice,
        "text": doc.text,
    });
    writeln!(w, "{line}")
}

// ---------- PubMed efetch XML ----------

/// Streaming reader for PubMed `PubmedArticleSet` XML. Yields one document
/// per article that has a non-empty abstract; abstract-less articles are
/// skipped and counted, multi-part abstracts are joined with single spaces.
pub struct PubmedXmlReader<R: BufRead> {
    reader: quick_xml::Reader<R>,
    buf: Vec<u8>,
    range: SliceRange,
    skipped_no_abstract: u64,
    skipped_invalid: u64,
    done: bool,
}

impl PubmedXmlReader<io::BufReader<std::fs::File>> {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(Self::new(io::BufReader::new(file)))
    }
}

#[derive(Default)]
struct ArticleState {
    pmid: Option<String>,
    year: Option<i32>,
    abstract_parts: Vec<String>,
}

impl<R: BufRead> PubmedXmlReader<R> {
    pub fn new(r: R) -> Self {
        let mut reader = quick_xml::Reader::from_reader(r);
        reader.config_mut().trim_text(true);
        PubmedXmlReader {
            reader,
            buf: Vec::new(),
            range: SliceRange::default(),
            skipped_no_abstract: 0,
            skipped_invalid: 0,
            done: false,
        }
    }

    pub fn with_range(mut self, range: SliceRange) -> Self {
        self.range = range;
        self
    }

    /// Articles skipped because they carry no abstract.
    pub fn skipped_no_abstract(&self) -> u64 {
        self.skipped_no_abstract
    }

    /// Articles skipped for missing ids/years or out-of-range years.
    pub fn skipped_invalid(&self) -> u64 {
        self.skipped_invalid
    }

    fn xml_err(&self, e: impl std::fmt::Display) -> IngestError {
        IngestError::Xml { offset: self.reader.buffer_position(), msg: e.to_string() }
    }

    fn finish_article(&mut self, st: ArticleState) -> Option<Document> {
        if st.abstract_parts.is_empty() {
            self.skipped_no_abstract += 1;
            return None;
        }
        let text = st.abstract_parts.join(" ");
        let (Some(id), Some(year)) = (st.pmid, st.year) else {
            self.skipped_invalid += 1;
            return None;
        };
        if validate(&id, year, &text, self.range).is_err() {
            self.skipped_invalid += 1;
            return None;
        }
        Some(Document { id, slice: year, text, source: DocumentSource::PubmedXml })
    }
}

impl<R: BufRead> Iterator for PubmedXmlReader<R> {
    type Item = Result<Document, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        use quick_xml::events::Event;

        if self.done {
            return None;
        }
        let mut article: Option<ArticleState> = None;
        // path of open element names, relative to the document root
        let mut path: Vec<String> = Vec::new();
        loop {
            self.buf.clear();
            let event = match self.reader.read_event_into(&mut self.buf) {
                Ok(ev) => ev,
                Err(e) => {
                    self.done = true;
                    return Some(Err(self.xml_err(e)));
                }
            };
            match event {
                Event::Start(ref e) => {
                    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                    if name == "PubmedArticle" {
                        article = Some(ArticleState::default());
                    }
                    path.push(name);
                }
                Event::End(ref e) => {
                    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                    path.pop();
                    if name == "PubmedArticle" {
                        if let Some(st) = article.take() {
                            if let Some(doc) = self.finish_article(st) {
                                return Some(Ok(doc));
                            }
                        }
                    }
                }
                Event::Text(ref t) => {
                    let Some(st) = article.as_mut() else { continue };
                    let text = match t.xml_content() {
                        Ok(c) => c.into_owned(),
                        Err(e) => {
                            self.done = true;
                            return Some(Err(self.xml_err(e)));
                        }
                    };
                    if text.is_empty() {
                        continue;
                    }
                    match path.last().map(String::as_str) {
                        Some("PMID") if st.pmid.is_none() && in_citation(&path) => {
                            st.pmid = Some(text);
                        }
                        Some("Year") if st.year.is_none() && in_pubdate(&path) => {
                            st.year = text.parse().ok();
                        }
                        Some("MedlineDate") if st.year.is_none() && in_pubdate(&path) => {
                            st.year = text.get(0..4).and_then(|y| y.parse().ok());
                        }
                        _ => {
                            // abstract text may contain inline markup; collect
                            // every text fragment under AbstractText
                            if path.iter().any(|n| n == "AbstractText") {
                                st.abstract_parts.push(text);
                            }
                        }
                    }
                }
                Event::Eof => {
                    self.done = true;
                    return None;
                }
                _ => {}
            }
        }
    }
}

fn in_citation(path: &[String]) -> bool {
    path.iter().rev().skip(1).take(1).any(|n| n == "MedlineCitation")
}

fn in_pubdate(path: &[String]) -> bool {
    path.iter().any(|n| n == "PubDate")
}
