//! Tokenization, lemmatization, and part-of-speech tagging.
//!
//! Two routes produce [`TaggedDocument`]s: the built-in baseline tagger
//! (lexicon lookup, then suffix rules, then a configurable default tag) and
//! [`PretaggedReader`], which ingests TSV written by an external tagger.
//! The baseline keeps the toolchain self-contained; the pre-tagged route is
//! the fidelity route.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use once_cell::sync::Lazy;
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::Document;

/// The 17-tag Universal POS inventory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[allow(clippy::upper_case_acronyms)]
pub enum Upos {
    ADJ,
    ADP,
    ADV,
    AUX,
    CCONJ,
    DET,
    INTJ,
    NOUN,
    NUM,
    PART,
    PRON,
    PROPN,
    PUNCT,
    SCONJ,
    SYM,
    VERB,
    X,
}

impl Upos {
    pub const ALL: [Upos; 17] = [
        Upos::ADJ,
        Upos::ADP,
        Upos::ADV,
        Upos::AUX,
        Upos::CCONJ,
        Upos::DET,
        Upos::INTJ,
        Upos::NOUN,
        Upos::NUM,
        Upos::PART,
        Upos::PRON,
        Upos::PROPN,
        Upos::PUNCT,
        Upos::SCONJ,
        Upos::SYM,
        Upos::VERB,
        Upos::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Upos::ADJ => "ADJ",
            Upos::ADP => "ADP",
            Upos::ADV => "ADV",
            Upos::AUX => "AUX",
            Upos::CCONJ => "CCONJ",
            Upos::DET => "DET",
            Upos::INTJ => "INTJ",
            Upos::NOUN => "NOUN",
            Upos::NUM => "NUM",
            Upos::PART => "PART",
            Upos::PRON => "PRON",
            Upos::PROPN => "PROPN",
            Upos::PUNCT => "PUNCT",
            Upos::SCONJ => "SCONJ",
            Upos::SYM => "SYM",
            Upos::VERB => "VERB",
            Upos::X => "X",
        }
    }
}

impl fmt::Display for Upos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Upos {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ADJ" => Ok(Upos::ADJ),
            "ADP" => Ok(Upos::ADP),
            "ADV" => Ok(Upos::ADV),
            "AUX" => Ok(Upos::AUX),
            "CCONJ" => Ok(Upos::CCONJ),
            "DET" => Ok(Upos::DET),
            "INTJ" => Ok(Upos::INTJ),
            "NOUN" => Ok(Upos::NOUN),
            "NUM" => Ok(Upos::NUM),
            "PART" => Ok(Upos::PART),
            "PRON" => Ok(Upos::PRON),
            "PROPN" => Ok(Upos::PROPN),
            "PUNCT" => Ok(Upos::PUNCT),
            "SCONJ" => Ok(Upos::SCONJ),
            "SYM" => Ok(Upos::SYM),
            "VERB" => Ok(Upos::VERB),
            "X" => Ok(Upos::X),
            other => Err(format!("not a UPOS tag: {other:?}")),
        }
    }
}

/// One token: original surface form plus its lowercase lemma and UPOS tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub upos: Upos,
}

/// A document whose text has been resolved into tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedDocument {
    pub id: String,
    pub slice: i32,
    pub tokens: Vec<Token>,
}

#[derive(Debug, Error)]
pub enum TagError {
    #[error("lexicon: {0}")]
    Lexicon(String),
    /// Recoverable per-line problem; the reader keeps going.
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    /// Inconsistent document structure; the reader stops.
    #[error("line {line}: {msg}")]
    Boundary { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl TagError {
    pub fn is_fatal(&self) -> bool {
        matches!(self, TagError::Boundary { .. } | TagError::Io(_) | TagError::Lexicon(_))
    }
}

// ---------- Tokenization ----------

/// Split text into surface tokens: Unicode word segmentation, with
/// punctuation as standalone tokens and internal hyphens kept inside a word
/// ("state-of-the-art" stays whole).
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for (off, seg) in text.split_word_bound_indices() {
        if seg.chars().all(char::is_whitespace) {
            continue;
        }
        spans.push((off, off + seg.len()));
    }

    let mut out: Vec<&str> = Vec::with_capacity(spans.len());
    let mut i = 0;
    while i < spans.len() {
        let (start, mut end) = spans[i];
        if is_wordlike(&text[start..end]) {
            // fold [word][-][word] runs that are contiguous in the source
            while i + 2 < spans.len() {
                let (hs, he) = spans[i + 1];
                let (ws, we) = spans[i + 2];
                if hs == end && &text[hs..he] == "-" && he == ws && is_wordlike(&text[ws..we]) {
                    end = we;
                    i += 2;
                } else {
                    break;
                }
            }
        }
        out.push(&text[start..end]);
        i += 1;
    }
    out
}

fn is_wordlike(s: &str) -> bool {
    s.chars().any(char::is_alphanumeric)
}

// ---------- Lexicon ----------

#[derive(Debug, Clone)]
struct LexEntry {
    lemma: String,
    upos: Upos,
}

/// Surface → (lemma, UPOS) lookup table. Row order in the source file is
/// the priority order when one surface has several readings.
#[derive(Debug, Default)]
pub struct Lexicon {
    by_surface: HashMap<String, Vec<LexEntry>>,
    by_surface_pos: HashMap<(String, Upos), String>,
    lemma_pos: HashSet<(String, Upos)>,
}

static EMBEDDED: Lazy<Arc<Lexicon>> = Lazy::new(|| {
    let src = include_str!("../assets/lexicon.tsv");
    Arc::new(Lexicon::from_reader(src.as_bytes()).expect("embedded lexicon is valid"))
});

impl Lexicon {
    /// The lexicon shipped with the crate: function words, irregular
    /// inflections, and a core academic vocabulary.
    pub fn embedded() -> Arc<Lexicon> {
        Arc::clone(&EMBEDDED)
    }

    pub fn from_path(path: &Path) -> Result<Arc<Lexicon>, TagError> {
        let file = std::fs::File::open(path)
            .map_err(|e| TagError::Lexicon(format!("{}: {e}", path.display())))?;
        Ok(Arc::new(Self::from_reader(io::BufReader::new(file))?))
    }

    /// Parse TSV rows `surface<TAB>lemma<TAB>upos`. `#` comments and blank
    /// lines are skipped.
    pub fn from_reader(r: impl BufRead) -> Result<Lexicon, TagError> {
        let mut lex = Lexicon::default();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (surface, lemma, tag) = match (parts.next(), parts.next(), parts.next()) {
                (Some(s), Some(l), Some(t)) if !s.is_empty() && !l.is_empty() => (s, l, t),
                _ => {
                    return Err(TagError::Lexicon(format!(
                        "line {}: expected surface<TAB>lemma<TAB>upos",
                        idx + 1
                    )))
                }
            };
            let upos = Upos::from_str(tag.trim())
                .map_err(|e| TagError::Lexicon(format!("line {}: {e}", idx + 1)))?;
            lex.insert(&surface.to_lowercase(), &lemma.to_lowercase(), upos);
        }
        Ok(lex)
    }

    fn insert(&mut self, surface: &str, lemma: &str, upos: Upos) {
        self.by_surface
            .entry(surface.to_string())
            .or_default()
            .push(LexEntry { lemma: lemma.to_string(), upos });
        self.by_surface_pos
            .entry((surface.to_string(), upos))
            .or_insert_with(|| lemma.to_string());
        self.lemma_pos.insert((lemma.to_string(), upos));
    }

    fn readings(&self, surface_lower: &str) -> &[LexEntry] {
        self.by_surface
            .get(surface_lower)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    fn lemma_for(&self, surface_lower: &str, upos: Upos) -> Option<&str> {
        self.by_surface_pos
            .get(&(surface_lower.to_string(), upos))
            .map(String::as_str)
    }

    fn has_lemma(&self, lemma: &str, upos: Upos) -> bool {
        self.lemma_pos.contains(&(lemma.to_string(), upos))
    }

    pub fn len(&self) -> usize {
        self.by_surface.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_surface.is_empty()
    }
}

// ---------- Lemmatization ----------

/// Reduce a surface form to its lowercase lemma for the given tag.
/// Lexicon lookup wins; otherwise suffix stripping for VERB (-ing/-ed/-es/-s
/// with silent-e and doubled-consonant repair) and NOUN (-s/-es/-ies);
/// otherwise the lowercased surface. Never returns an empty string.
pub fn lemmatize(lex: &Lexicon, surface: &str, upos: Upos) -> String {
    let lower = surface.to_lowercase();
    if lower.is_empty() {
        return surface.to_string();
    }
    if let Some(hit) = lex.lemma_for(&lower, upos) {
        return hit.to_string();
    }
    let stripped = match upos {
        Upos::VERB => strip_verb(lex, &lower),
        Upos::NOUN => strip_noun(lex, &lower),
        _ => None,
    };
    stripped.filter(|s| !s.is_empty()).unwrap_or(lower)
}

fn ends_sibilant(stem: &str) -> bool {
    stem.ends_with(['s', 'x', 'z']) || stem.ends_with("ch") || stem.ends_with("sh")
}

fn strip_verb(lex: &Lexicon, lower: &str) -> Option<String> {
    if let Some(stem) = lower.strip_suffix("ing") {
        if stem.len() >= 2 {
            return Some(repair_stem(lex, stem, Upos::VERB));
        }
    }
    if let Some(stem) = lower.strip_suffix("ed") {
        if stem.len() >= 2 {
            return Some(repair_stem(lex, stem, Upos::VERB));
        }
    }
    if let Some(stem) = lower.strip_suffix("es") {
        if stem.len() >= 2 && ends_sibilant(stem) {
            return Some(repair_stem(lex, stem, Upos::VERB));
        }
    }
    if let Some(stem) = lower.strip_suffix('s') {
        if stem.len() >= 2 && !stem.ends_with('s') {
            return Some(repair_stem(lex, stem, Upos::VERB));
        }
    }
    None
}

fn strip_noun(lex: &Lexicon, lower: &str) -> Option<String> {
    if let Some(stem) = lower.strip_suffix("ies") {
        if stem.len() >= 2 {
            return Some(format!("{stem}y"));
        }
    }
    if let Some(stem) = lower.strip_suffix("es") {
        if stem.len() >= 2 && ends_sibilant(stem) {
            return Some(repair_stem(lex, stem, Upos::NOUN));
        }
    }
    if let Some(stem) = lower.strip_suffix('s') {
        if stem.len() >= 2 && !stem.ends_with(['s', 'u', 'i']) {
            return Some(stem.to_string());
        }
    }
    None
}

/// Undo the orthographic changes inflection applies to a stem: restore a
/// silent e, collapse a doubled final consonant.
fn repair_stem(lex: &Lexicon, stem: &str, upos: Upos) -> String {
    if lex.has_lemma(stem, upos) {
        return stem.to_string();
    }
    let with_e = format!("{stem}e");
    if lex.has_lemma(&with_e, upos) {
        return with_e;
    }
    if stem.ends_with("at") || stem.ends_with("bl") || stem.ends_with("iz") {
        return with_e;
    }
    let bytes = stem.as_bytes();
    if bytes.len() >= 3 {
        let last = bytes[bytes.len() - 1];
        let prev = bytes[bytes.len() - 2];
        if last == prev && last.is_ascii_alphabetic() && !matches!(last, b'l' | b's' | b'z') {
            let undoubled = &stem[..stem.len() - 1];
            if !is_ascii_vowel(last) {
                return undoubled.to_string();
            }
        }
    }
    if is_short_cvc(stem) {
        return with_e;
    }
    stem.to_string()
}

fn is_ascii_vowel(b: u8) -> bool {
    matches!(b, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn is_short_cvc(stem: &str) -> bool {
    let b = stem.as_bytes();
    if b.len() < 3 || b.len() > 4 || !b.iter().all(u8::is_ascii_alphabetic) {
        return false;
    }
    let n = b.len();
    let (c1, v, c2) = (b[n - 3], b[n - 2], b[n - 1]);
    !is_ascii_vowel(c1)
        && is_ascii_vowel(v)
        && !is_ascii_vowel(c2)
        && !matches!(c2, b'w' | b'x' | b'y')
}

// ---------- Baseline tagger ----------

/// Lexicon-first baseline tagger. Deterministic for a fixed lexicon.
#[derive(Clone)]
pub struct Tagger {
    lexicon: Arc<Lexicon>,
    default_pos: Upos,
}

impl Tagger {
    /// Tagger over the embedded lexicon with the default unknown-word tag
    /// (NOUN, the majority class in scientific abstracts).
    pub fn new() -> Tagger {
        Tagger { lexicon: Lexicon::embedded(), default_pos: Upos::NOUN }
    }

    pub fn with_lexicon(lexicon: Arc<Lexicon>) -> Tagger {
        Tagger { lexicon, default_pos: Upos::NOUN }
    }

    pub fn from_lexicon_path(path: &Path) -> Result<Tagger, TagError> {
        Ok(Tagger::with_lexicon(Lexicon::from_path(path)?))
    }

    pub fn default_pos(mut self, upos: Upos) -> Tagger {
        self.default_pos = upos;
        self
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn tag(&self, doc: &Document) -> TaggedDocument {
        let tokens = tokenize(&doc.text)
            .into_iter()
            .map(|surface| self.tag_token(surface))
            .collect();
        TaggedDocument { id: doc.id.clone(), slice: doc.slice, tokens }
    }

    /// Assign exactly one (lemma, UPOS) pair to a surface form.
    pub fn tag_token(&self, surface: &str) -> Token {
        let lower = surface.to_lowercase();

        if let Some(upos) = classify_nonword(surface) {
            return Token { surface: surface.to_string(), lemma: lower, upos };
        }
        if is_numeric_token(surface) {
            return Token { surface: surface.to_string(), lemma: lower, upos: Upos::NUM };
        }
        if let Some(entry) = self.lexicon.readings(&lower).first() {
            return Token {
                surface: surface.to_string(),
                lemma: entry.lemma.clone(),
                upos: entry.upos,
            };
        }
        if let Some((lemma, upos)) = self.suffix_guess(&lower) {
            return Token { surface: surface.to_string(), lemma, upos };
        }
        let upos = self.default_pos;
        Token { surface: surface.to_string(), lemma: lemmatize(&self.lexicon, surface, upos), upos }
    }

    /// Inflection and derivation heuristics for out-of-lexicon words.
    fn suffix_guess(&self, lower: &str) -> Option<(String, Upos)> {
        // inflections of known lemmas first
        if let Some(stem) = strip_noun(&self.lexicon, lower) {
            if self.lexicon.has_lemma(&stem, Upos::NOUN) {
                return Some((stem, Upos::NOUN));
            }
        }
        if let Some(stem) = strip_verb(&self.lexicon, lower) {
            if self.lexicon.has_lemma(&stem, Upos::VERB) {
                return Some((stem, Upos::VERB));
            }
        }
        // derivational endings
        if lower.len() > 4 && lower.ends_with("ly") {
            return Some((lower.to_string(), Upos::ADV));
        }
        const NOUN_ENDINGS: [&str; 7] = ["tion", "ment", "ness", "ity", "ism", "ance", "ence"];
        if lower.len() > 5 && NOUN_ENDINGS.iter().any(|e| lower.ends_with(e)) {
            return Some((lower.to_string(), Upos::NOUN));
        }
        const ADJ_ENDINGS: [&str; 8] =
            ["ous", "ive", "able", "ible", "ical", "ic", "al", "ary"];
        if lower.len() > 4 && ADJ_ENDINGS.iter().any(|e| lower.ends_with(e)) {
            return Some((lower.to_string(), Upos::ADJ));
        }
        if lower.len() > 4 && (lower.ends_with("ize") || lower.ends_with("ise")) {
            return Some((lower.to_string(), Upos::VERB));
        }
        None
    }
}

impl Default for Tagger {
    fn default() -> Self {
        Tagger::new()
    }
}

fn classify_nonword(surface: &str) -> Option<Upos> {
    if surface.chars().any(char::is_alphanumeric) {
        return None;
    }
    let symish = surface.chars().any(|c| {
        matches!(c, '+' | '=' | '<' | '>' | '|' | '~' | '^' | '$' | '%' | '&' | '*' | '#' | '@')
            || ('\u{2190}'..='\u{22FF}').contains(&c)
    });
    Some(if symish { Upos::SYM } else { Upos::PUNCT })
}

fn is_numeric_token(surface: &str) -> bool {
    let mut saw_digit = false;
    for c in surface.chars() {
        if c.is_ascii_digit() {
            saw_digit = true;
        } else if !matches!(c, '.' | ',' | '-' | '+' | '%' | '/') {
            return false;
        }
    }
    saw_digit
}

// ---------- Pre-tagged TSV interchange ----------

/// Write documents in the pre-tagged TSV format: a `# id=<id> year=<year>`
/// header, one `surface<TAB>lemma<TAB>upos` line per token, and a blank
/// line closing each document.
pub fn write_pretagged<'a, W: Write>(
    docs: impl IntoIterator<Item = &'a TaggedDocument>,
    mut w: W,
) -> io::Result<()> {
    for doc in docs {
        writeln!(w, "# id={} year={}", doc.id, doc.slice)?;
        for t in &doc.tokens {
            writeln!(w, "{}\t{}\t{}", t.surface, t.lemma, t.upos)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Streaming reader for the pre-tagged TSV format.
///
/// Token lines that fail validation (unknown tag, empty fields) surface as
/// recoverable [`TagError::Line`] items and the line is dropped; structural
/// problems (tokens outside a document) are fatal and end the stream.
/// Lemmas are lowercased on read.
pub struct PretaggedReader<R: BufRead> {
    lines: io::Lines<R>,
    line_no: usize,
    open: Option<TaggedDocument>,
    pending: VecDeque<Result<TaggedDocument, TagError>>,
    done: bool,
}

impl PretaggedReader<io::BufReader<std::fs::File>> {
    pub fn open(path: &Path) -> Result<Self, TagError> {
        let file = std::fs::File::open(path)?;
        Ok(Self::new(io::BufReader::new(file)))
    }
}

impl<R: BufRead> PretaggedReader<R> {
    pub fn new(r: R) -> Self {
        PretaggedReader {
            lines: r.lines(),
            line_no: 0,
            open: None,
            pending: VecDeque::new(),
            done: false,
        }
    }

    fn close_open(&mut self) {
        if let Some(doc) = self.open.take() {
            self.pending.push_back(Ok(doc));
        }
    }

    fn handle_line(&mut self, line: &str) {
        let line_no = self.line_no;
        if line.trim().is_empty() {
            self.close_open();
            return;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if self.open.is_some() {
                self.pending.push_back(Err(TagError::Boundary {
                    line: line_no,
                    msg: "document header before previous document was closed".into(),
                }));
                self.done = true;
                return;
            }
            match parse_doc_header(rest) {
                Ok((id, year)) => {
                    self.open = Some(TaggedDocument { id, slice: year, tokens: Vec::new() })
                }
                Err(msg) => {
                    self.pending.push_back(Err(TagError::Boundary { line: line_no, msg }));
                    self.done = true;
                }
            }
            return;
        }
        let Some(doc) = self.open.as_mut() else {
            self.pending.push_back(Err(TagError::Boundary {
                line: line_no,
                msg: "token line outside any document".into(),
            }));
            self.done = true;
            return;
        };
        let mut parts = line.split('\t');
        let (surface, lemma, tag) = match (parts.next(), parts.next(), parts.next(), parts.next())
        {
            (Some(s), Some(l), Some(t), None) => (s, l, t),
            _ => {
                self.pending.push_back(Err(TagError::Line {
                    line: line_no,
                    msg: "expected surface<TAB>lemma<TAB>upos".into(),
                }));
                return;
            }
        };
        if surface.is_empty() || lemma.is_empty() {
            self.pending.push_back(Err(TagError::Line {
                line: line_no,
                msg: "empty surface or lemma".into(),
            }));
            return;
        }
        match Upos::from_str(tag) {
            Ok(upos) => doc.tokens.push(Token {
                surface: surface.to_string(),
                lemma: lemma.to_lowercase(),
                upos,
            }),
            Err(_) => self.pending.push_back(Err(TagError::Line {
                line: line_no,
                msg: format!("not a UPOS tag: {tag:?}"),
            })),
        }
    }
}

fn parse_doc_header(rest: &str) -> Result<(String, i32), String> {
    let rest = rest.trim();
    let body = rest
        .strip_prefix("id=")
        .ok_or_else(|| "header must look like `# id=<id> year=<year>`".to_string())?;
    let (id, year_part) = body
        .rsplit_once(" year=")
        .ok_or_else(|| "header must look like `# id=<id> year=<year>`".to_string())?;
    if id.is_empty() {
        return Err("empty document id".into());
    }
    let year: i32 = year_part
        .trim()
        .parse()
        .map_err(|_| format!("invalid year: {year_part:?}"))?;
    Ok((id.to_string(), year))
}

impl<R: BufRead> Iterator for PretaggedReader<R> {
    type Item = Result<TaggedDocument, TagError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(item) = self.pending.pop_front() {
                return Some(item);
            }
            if self.done {
                return None;
            }
            match self.lines.next() {
                Some(Ok(line)) => {
                    self.line_no += 1;
                    self.handle_line(&line);
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(TagError::Io(e)));
                }
                None => {
                    self.done = true;
                    self.close_open();
                }
            }
        }
    }
}
