//! PubMed E-utilities fetcher: paginated esearch per year slice, efetch for
//! the id pages, JSONL output, resumable via a cursor file.
//!
//! The fetcher serializes its own request schedule and keeps the request
//! rate under a configurable ceiling. HTTP access goes through the
//! [`Transport`] trait so tests can run against canned responses.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::io::{self, BufRead, Read, Seek, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusManifest, Document, DocumentSource, IngestError, PubmedXmlReader, SliceRange};

pub const E_UTILS_BASE: &str = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("http status {status} from {url}")]
    Http { status: u16, url: String },
    #[error("retries exhausted for {url}")]
    Exhausted { url: String },
    #[error("esearch parse: {0}")]
    Parse(String),
    #[error("cursor file: {0}")]
    Cursor(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub struct TransportResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal GET abstraction so the fetch schedule can be tested offline.
pub trait Transport {
    fn get(&self, url: &str) -> Result<TransportResponse, FetchError>;
}

/// Live HTTP transport.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> HttpTransport {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { agent }
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<TransportResponse, FetchError> {
        let mut resp = self
            .agent
            .get(url)
            .call()
            .map_err(|e| FetchError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| FetchError::Transport(e.to_string()))?;
        Ok(TransportResponse { status, body })
    }
}

#[derive(Debug, Clone)]
pub struct FetchConfig {
    pub base_url: String,
    pub query: String,
    pub year_from: i32,
    pub year_to: i32,
    /// Request rate ceiling (requests per second).
    pub rate_per_sec: f64,
    pub page_size: usize,
    pub max_retries: u32,
    pub backoff_base: Duration,
    /// Drop ids already present in the output.
    pub dedup: bool,
}

impl FetchConfig {
    pub fn new(query: impl Into<String>, year_from: i32, year_to: i32) -> FetchConfig {
        FetchConfig {
            base_url: E_UTILS_BASE.to_string(),
            query: query.into(),
            year_from,
            year_to,
            rate_per_sec: 3.0,
            page_size: 200,
            max_retries: 5,
            backoff_base: Duration::from_millis(250),
            dedup: true,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Cursor {
    query: String,
    per_slice: BTreeMap<i32, SliceCursor>,
}

#[derive(Debug, Default, Clone, Copy, Serialize, Deserialize)]
struct SliceCursor {
    retstart: usize,
    done: bool,
}

pub struct Fetcher<'t> {
    transport: &'t dyn Transport,
    cfg: FetchConfig,
    last_request: Option<Instant>,
}

impl<'t> Fetcher<'t> {
    pub fn new(transport: &'t dyn Transport, cfg: FetchConfig) -> Fetcher<'t> {
        Fetcher { transport, cfg, last_request: None }
    }

    /// Default cursor path for an output path: `out.jsonl.cursor.json`.
    pub fn cursor_path_for(out: &Path) -> PathBuf {
        let mut name = out.as_os_str().to_owned();
        name.push(".cursor.json");
        PathBuf::from(name)
    }

    /// Fetch every configured year slice into `out` (JSONL, appended).
    /// Interrupted runs resume from the cursor file without duplicating
    /// ids. On persistent request failure the partial output and cursor
    /// stay on disk and the error is returned.
    pub fn run(&mut self, out: &Path, cursor_path: &Path) -> Result<CorpusManifest, FetchError> {
        let mut cursor = load_cursor(cursor_path, &self.cfg.query)?;
        let mut seen = repair_and_collect_ids(out)?;
        let mut doc_counts: BTreeMap<i32, u64> = BTreeMap::new();

        let mut out_file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(out)?;

        let range = SliceRange::new(self.cfg.year_from, self.cfg.year_to);
        for year in self.cfg.year_from..=self.cfg.year_to {
            let mut slice_cursor = cursor.per_slice.get(&year).copied().unwrap_or_default();
            while !slice_cursor.done {
                let url = self.esearch_url(year, slice_cursor.retstart);
                let body = self.get_with_retry(&url)?;
                let page = parse_esearch(&body)?;

                if !page.ids.is_empty() {
                    let wanted: Vec<&str> = page
                        .ids
                        .iter()
                        .map(String::as_str)
                        .filter(|id| !self.cfg.dedup || !seen.contains(*id))
                        .collect();
                    if !wanted.is_empty() {
                        let url = self.efetch_url(&wanted);
                        let xml = self.get_with_retry(&url)?;
                        let mut reader =
                            PubmedXmlReader::new(xml.as_bytes()).with_range(range);
                        for item in reader.by_ref() {
                            let doc = item?;
                            if self.cfg.dedup && seen.contains(&doc.id) {
                                continue;
                            }
                            let doc = Document { source: DocumentSource::Fetched, ..doc };
                            crate::corpus::write_jsonl_one(&doc, &mut out_file)?;
                            *doc_counts.entry(doc.slice).or_insert(0) += 1;
                            seen.insert(doc.id);
                        }
                        if reader.skipped_no_abstract() > 0 {
                            log::info!(
                                "slice {year}: skipped {} abstract-less articles",
                                reader.skipped_no_abstract()
                            );
                        }
                        out_file.flush()?;
                    }
                }

                slice_cursor.retstart += page.ids.len();
                if page.ids.is_empty() || slice_cursor.retstart >= page.count {
                    slice_cursor.done = true;
                }
                cursor.per_slice.insert(year, slice_cursor);
                save_cursor(cursor_path, &cursor)?;
            }
        }

        let provenance = vec![
            format!("query: {}", self.cfg.query),
            format!("years: {}-{}", self.cfg.year_from, self.cfg.year_to),
            format!("endpoint: {}", self.cfg.base_url),
        ];
        Ok(CorpusManifest::from_counts(doc_counts, provenance))
    }

    fn esearch_url(&self, year: i32, retstart: usize) -> String {
        format!(
            "{}/esearch.fcgi?db=pubmed&term={}&mindate={year}&maxdate={year}&datetype=pdat&retstart={retstart}&retmax={}",
            self.cfg.base_url,
            percent_encode(&self.cfg.query),
            self.cfg.page_size
        )
    }

    fn efetch_url(&self, ids: &[&str]) -> String {
        format!(
            "{}/efetch.fcgi?db=pubmed&id={}&retmode=xml",
            self.cfg.base_url,
            ids.join(",")
        )
    }

    /// Sleep as needed to keep the inter-request gap at or above the rate
    /// ceiling, then issue the request, retrying with exponential backoff.
    fn get_with_retry(&mut self, url: &str) -> Result<String, FetchError> {
        let mut delay = self.cfg.backoff_base;
        for attempt in 0..=self.cfg.max_retries {
            self.throttle();
            match self.transport.get(url) {
                Ok(r) if r.status == 200 => return Ok(r.body),
                Ok(r) if r.status == 429 || r.status >= 500 => {
                    log::warn!("attempt {attempt}: http {} from {url}", r.status);
                }
                Ok(r) => return Err(FetchError::Http { status: r.status, url: url.into() }),
                Err(e) => log::warn!("attempt {attempt}: {e}"),
            }
            if attempt < self.cfg.max_retries {
                std::thread::sleep(delay);
                delay = delay.saturating_mul(2);
            }
        }
        Err(FetchError::Exhausted { url: url.into() })
    }

    fn throttle(&mut self) {
        let min_gap = Duration::from_secs_f64(1.0 / self.cfg.rate_per_sec.max(0.001));
        if let Some(last) = self.last_request {
            let elapsed = last.elapsed();
            if elapsed < min_gap {
                std::thread::sleep(min_gap - elapsed);
            }
        }
        self.last_request = Some(Instant::now());
    }
}

fn load_cursor(path: &Path, query: &str) -> Result<Cursor, FetchError> {
    match std::fs::read_to_string(path) {
        Ok(text) => {
            let cursor: Cursor = serde_json::from_str(&text)
                .map_err(|e| FetchError::Cursor(format!("{}: {e}", path.display())))?;
            if cursor.query != query {
                return Err(FetchError::Cursor(format!(
                    "cursor was written for query {:?}, current query is {:?}",
                    cursor.query, query
                )));
            }
            Ok(cursor)
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            Ok(Cursor { query: query.to_string(), per_slice: BTreeMap::new() })
        }
        Err(e) => Err(e.into()),
    }
}

fn save_cursor(path: &Path, cursor: &Cursor) -> Result<(), FetchError> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(serde_json::to_string_pretty(cursor).expect("serializable").as_bytes())?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Collect ids already written to a partial output. A run killed mid-write
/// can leave a truncated final line; it is cut back to the last complete
/// line before appending resumes.
fn repair_and_collect_ids(out: &Path) -> Result<HashSet<String>, FetchError> {
    let mut seen = HashSet::new();
    let mut file = match std::fs::OpenOptions::new().read(true).write(true).open(out) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(seen),
        Err(e) => return Err(e.into()),
    };
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let complete_len = match bytes.iter().rposition(|&b| b == b'\n') {
        Some(pos) => pos + 1,
        None => 0,
    };
    if complete_len < bytes.len() {
        log::warn!(
            "{}: truncating {} bytes of incomplete trailing record",
            out.display(),
            bytes.len() - complete_len
        );
        file.set_len(complete_len as u64)?;
        file.seek(io::SeekFrom::Start(complete_len as u64))?;
    }
    for line in bytes[..complete_len].split(|&b| b == b'\n') {
        if line.is_empty() {
            continue;
        }
        if let Ok(v) = serde_json::from_slice::<serde_json::Value>(line) {
            if let Some(id) = v.get("id").and_then(|x| x.as_str()) {
                seen.insert(id.to_string());
            }
        }
    }
    Ok(seen)
}

struct EsearchPage {
    count: usize,
    ids: Vec<String>,
}

/// Pull `<Count>` and the `<IdList>` ids out of an esearch XML reply.
fn parse_esearch(xml: &str) -> Result<EsearchPage, FetchError> {
    use quick_xml::events::Event;

    let mut reader = quick_xml::Reader::from_str(xml);
    reader.config_mut().trim_text(true);
    let mut count: Option<usize> = None;
    let mut ids = Vec::new();
    let mut path: Vec<String> = Vec::new();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        match reader
            .read_event_into(&mut buf)
            .map_err(|e| FetchError::Parse(e.to_string()))?
        {
            Event::Start(e) => {
                path.push(String::from_utf8_lossy(e.name().as_ref()).into_owned())
            }
            Event::End(_) => {
                path.pop();
            }
            Event::Text(t) => {
                let text = t
                    .xml_content()
                    .map_err(|e| FetchError::Parse(e.to_string()))?;
                match path.last().map(String::as_str) {
                    Some("Count") if count.is_none() && path.len() == 2 => {
                        count = Some(
                            text.trim()
                                .parse()
                                .map_err(|e| FetchError::Parse(format!("Count: {e}")))?,
                        );
                    }
                    Some("Id") if path.iter().any(|p| p == "IdList") => {
                        ids.push(text.trim().to_string());
                    }
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    let count = count.ok_or_else(|| FetchError::Parse("no Count element".into()))?;
    Ok(EsearchPage { count, ids })
}

fn percent_encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for byte in s.bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(byte as char)
            }
            b' ' => out.push('+'),
            _ => out.push_str(&format!("%{byte:02X}")),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct MockTransport {
        log: Mutex<Vec<(Instant, String)>>,
        handler: Box<dyn Fn(&str) -> Result<TransportResponse, FetchError> + Send + Sync>,
    }

    impl MockTransport {
        fn new(
            handler: impl Fn(&str) -> Result<TransportResponse, FetchError> + Send + Sync + 'static,
        ) -> MockTransport {
            MockTransport { log: Mutex::new(Vec::new()), handler }
        }

        fn calls(&self) -> Vec<(Instant, String)> {
            self.log.lock().unwrap().clone()
        }
    }

    impl Transport for MockTransport {
        fn get(&self, url: &str) -> Result<TransportResponse, FetchError> {
            self.log.lock().unwrap().push((Instant::now(), url.to_string()));
            (self.handler)(url)
        }
    }

    fn esearch_body(count: usize, ids: &[&str]) -> String {
        let id_xml: String = ids.iter().map(|id| format!("<Id>{id}</Id>")).collect();
        format!(
            "<?xml version=\"1.0\"?><eSearchResult><Count>{count}</Count>\
             <RetMax>{}</RetMax><RetStart>0</RetStart><IdList>{id_xml}</IdList>\
             </eSearchResult>",
            ids.len()
        )
    }

    fn efetch_body(articles: &[(&str, i32)]) -> String {
        let mut xml = String::from("<?xml version=\"1.0\"?><PubmedArticleSet>");
        for (pmid, year) in articles {
            xml.push_str(&format!(
                "<PubmedArticle><MedlineCitation><PMID>{pmid}</PMID><Article>\
                 <Journal><JournalIssue><PubDate><Year>{year}</Year></PubDate></JournalIssue></Journal>\
                 <Abstract><AbstractText>Abstract text for {pmid}.</AbstractText></Abstract>\
                 </Article></MedlineCitation></PubmedArticle>"
            ));
        }
        xml.push_str("</PubmedArticleSet>");
        xml
    }

    fn ok(body: String) -> Result<TransportResponse, FetchError> {
        Ok(TransportResponse { status: 200, body })
    }

    #[test]
    fn esearch_parse_extracts_count_and_ids() {
        let page = parse_esearch(&esearch_body(2, &["101", "102"])).unwrap();
        assert_eq!(page.count, 2);
        assert_eq!(page.ids, vec!["101", "102"]);
    }

    #[test]
    fn mocked_fetch_writes_documents() {
        let transport = MockTransport::new(|url| {
            if url.contains("esearch") {
                ok(esearch_body(2, &["101", "102"]))
            } else {
                ok(efetch_body(&[("101", 2020), ("102", 2020)]))
            }
        });
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("docs.jsonl");
        let cursor = Fetcher::cursor_path_for(&out);
        let mut cfg = FetchConfig::new("cancer", 2020, 2020);
        cfg.rate_per_sec = 1000.0;
        let manifest = Fetcher::new(&transport, cfg).run(&out, &cursor).unwrap();
        assert_eq!(manifest.total_docs(), 2);

        let docs: Vec<_> = crate::corpus::JsonlReader::open(&out)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].id, "101");
    }

    #[test]
    fn rate_ceiling_keeps_minimum_gap() {
        let transport = MockTransport::new(|url| {
            if url.contains("esearch") {
                ok(esearch_body(2, &["1", "2"]))
            } else {
                ok(efetch_body(&[("1", 2020), ("2", 2020)]))
            }
        });
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("docs.jsonl");
        let mut cfg = FetchConfig::new("q", 2020, 2020);
        cfg.rate_per_sec = 3.0;
        Fetcher::new(&transport, cfg)
            .run(&out, &Fetcher::cursor_path_for(&out))
            .unwrap();
        let calls = transport.calls();
        assert!(calls.len() >= 2);
        for pair in calls.windows(2) {
            let gap = pair[1].0.duration_since(pair[0].0);
            assert!(
                gap >= Duration::from_millis(333),
                "inter-request gap {gap:?} under the ceiling"
            );
        }
    }

    #[test]
    fn transient_failures_are_retried() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let attempts = std::sync::Arc::new(AtomicUsize::new(0));
        let attempts2 = attempts.clone();
        let transport = MockTransport::new(move |url| {
            if url.contains("esearch") {
                if attempts2.fetch_add(1, Ordering::SeqCst) == 0 {
                    return Ok(TransportResponse { status: 500, body: String::new() });
                }
                ok(esearch_body(1, &["7"]))
            } else {
                ok(efetch_body(&[("7", 2020)]))
            }
        });
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("docs.jsonl");
        let mut cfg = FetchConfig::new("q", 2020, 2020);
        cfg.rate_per_sec = 1000.0;
        cfg.backoff_base = Duration::from_millis(1);
        let manifest = Fetcher::new(&transport, cfg)
            .run(&out, &Fetcher::cursor_path_for(&out))
            .unwrap();
        assert_eq!(manifest.total_docs(), 1);
        assert!(attempts.load(Ordering::SeqCst) >= 2);
    }

    #[test]
    fn four_xx_is_fatal_without_retries() {
        let transport =
            MockTransport::new(|_| Ok(TransportResponse { status: 400, body: String::new() }));
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("docs.jsonl");
        let mut cfg = FetchConfig::new("q", 2020, 2020);
        cfg.rate_per_sec = 1000.0;
        let err = Fetcher::new(&transport, cfg)
            .run(&out, &Fetcher::cursor_path_for(&out))
            .unwrap_err();
        assert!(matches!(err, FetchError::Http { status: 400, .. }));
        assert_eq!(transport.calls().len(), 1);
    }

    #[test]
    fn resume_after_failure_has_no_duplicate_ids() {
        // first run: year 2020 succeeds, year 2021 fails persistently
        let flaky = MockTransport::new(|url| {
            if url.contains("mindate=2020") {
                ok(esearch_body(2, &["11", "12"]))
            } else if url.contains("esearch") {
                Ok(TransportResponse { status: 503, body: String::new() })
            } else {
                ok(efetch_body(&[("11", 2020), ("12", 2020)]))
            }
        });
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("docs.jsonl");
        let cursor = Fetcher::cursor_path_for(&out);
        let mut cfg = FetchConfig::new("q", 2020, 2021);
        cfg.rate_per_sec = 1000.0;
        cfg.max_retries = 1;
        cfg.backoff_base = Duration::from_millis(1);
        let err = Fetcher::new(&flaky, cfg.clone()).run(&out, &cursor).unwrap_err();
        assert!(matches!(err, FetchError::Exhausted { .. }));
        // partial output exists
        assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 2);

        // simulate a kill mid-write: append a truncated record
        {
            let mut f = std::fs::OpenOptions::new().append(true).open(&out).unwrap();
            f.write_all(b"{\"id\":\"13\",\"year\":2021,\"te").unwrap();
        }

        // second run with a healthy transport resumes and completes
        let healthy = MockTransport::new(|url| {
            if url.contains("mindate=2020") {
                ok(esearch_body(2, &["11", "12"]))
            } else if url.contains("mindate=2021") {
                ok(esearch_body(2, &["13", "14"]))
            } else {
                ok(efetch_body(&[("13", 2021), ("14", 2021)]))
            }
        });
        let manifest = Fetcher::new(&healthy, cfg).run(&out, &cursor).unwrap();
        assert_eq!(manifest.doc_counts.get(&2021), Some(&2));

        let docs: Vec<_> = crate::corpus::JsonlReader::open(&out)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        let ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
        let unique: HashSet<&&str> = ids.iter().collect();
        assert_eq!(unique.len(), ids.len(), "duplicate ids after resume: {ids:?}");
        assert_eq!(ids.len(), 4);
        // the 2020 slice was already marked done: no repeated esearch for it
        assert!(healthy
            .calls()
            .iter()
            .all(|(_, url)| !url.contains("mindate=2020")));
    }

    #[test]
    fn fetch_is_complete_relative_to_fixture() {
        // three pages of two ids each
        let transport = MockTransport::new(|url| {
            if url.contains("esearch") {
                let retstart: usize = url
                    .split("retstart=")
                    .nth(1)
                    .unwrap()
                    .split('&')
                    .next()
                    .unwrap()
                    .parse()
                    .unwrap();
                let ids: Vec<String> = (retstart..(retstart + 2).min(6))
                    .map(|i| format!("{}", 100 + i))
                    .collect();
                let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
                ok(esearch_body(6, &refs))
            } else {
                let ids: Vec<(&str, i32)> = url
                    .split("id=")
                    .nth(1)
                    .unwrap()
                    .split('&')
                    .next()
                    .unwrap()
                    .split(',')
                    .map(|s| (s, 2020))
                    .collect();
                ok(efetch_body(&ids))
            }
        });
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("docs.jsonl");
        let mut cfg = FetchConfig::new("q", 2020, 2020);
        cfg.rate_per_sec = 1000.0;
        cfg.page_size = 2;
        let manifest = Fetcher::new(&transport, cfg)
            .run(&out, &Fetcher::cursor_path_for(&out))
            .unwrap();
        assert_eq!(manifest.total_docs(), 6);
        let docs: Vec<_> = crate::corpus::JsonlReader::open(&out)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        let mut ids: Vec<String> = docs.into_iter().map(|d| d.id).collect();
        ids.sort();
        assert_eq!(ids, vec!["100", "101", "102", "103", "104", "105"]);
    }
}
