//! Deterministic synthetic corpus generator for desk-scale testing.
//!
//! Background vocabulary is Zipf-distributed; planted keys get their rate
//! multiplied in chosen slices so spike/collapse detection can be tested
//! against a known ground truth. Identical seeds give identical corpora.

use std::collections::BTreeMap;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Zipf};

use crate::corpus::{CorpusManifest, Document, DocumentSource};
use crate::counts::LemmaPosKey;
use crate::tagging::{TaggedDocument, Token, Upos};

/// A key whose base Zipf rate is multiplied in one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpike {
    pub key: LemmaPosKey,
    pub slice: i32,
    pub multiplier: f64,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_docs: usize,
    pub vocab_size: usize,
    pub slices: Vec<i32>,
    /// Inclusive bounds on tokens per document, before sentence periods.
    pub tokens_per_doc: (usize, usize),
    pub zipf_exponent: f64,
    pub planted: Vec<PlantedSpike>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            n_docs: 1000,
            vocab_size: 1000,
            slices: vec![2020, 2024],
            tokens_per_doc: (120, 260),
            zipf_exponent: 1.07,
            planted: Vec::new(),
        }
    }
}

struct VocabEntry {
    lemma: String,
    upos: Upos,
}

/// Per-slice planted adjustment resolved against the vocabulary.
struct Plant {
    rank_idx: usize,
    multiplier: f64,
    /// Probability of short-circuiting to this key (multiplier > 1 only).
    extra: f64,
}

/// Streaming generator yielding (plain document, pre-tagged document)
/// pairs. Implements `Iterator`.
pub struct SynthGenerator {
    cfg: SynthConfig,
    vocab: Vec<VocabEntry>,
    plants: BTreeMap<i32, Vec<Plant>>,
    zipf: Zipf<f64>,
    rng: ChaCha12Rng,
    next_doc: usize,
}

const CONTENT_POS: [Upos; 6] =
    [Upos::NOUN, Upos::VERB, Upos::NOUN, Upos::ADJ, Upos::NOUN, Upos::ADV];

pub fn synth_corpus(cfg: SynthConfig) -> SynthGenerator {
    assert!(cfg.vocab_size >= 10, "vocabulary too small");
    assert!(cfg.tokens_per_doc.0 >= 1 && cfg.tokens_per_doc.0 <= cfg.tokens_per_doc.1);
    assert!(cfg.planted.iter().all(|p| p.multiplier > 0.0), "rates must be positive");

    let mut vocab: Vec<VocabEntry> = (0..cfg.vocab_size)
        .map(|i| VocabEntry {
            lemma: format!("w{i:05}"),
            upos: CONTENT_POS[i % CONTENT_POS.len()],
        })
        .collect();

    // planted keys take over mid-frequency ranks so their base rate is
    // neither dominant nor lost in the tail
    let mut plants: BTreeMap<i32, Vec<Plant>> = BTreeMap::new();
    let harmonic: f64 = (1..=cfg.vocab_size)
        .map(|r| (r as f64).powf(-cfg.zipf_exponent))
        .sum();
    for (i, plant) in cfg.planted.iter().enumerate() {
        let rank_idx = cfg.vocab_size / 10 + i * (cfg.vocab_size / 50).max(1);
        assert!(rank_idx < cfg.vocab_size, "too many planted keys for the vocabulary");
        vocab[rank_idx] =
            VocabEntry { lemma: plant.key.lemma.clone(), upos: plant.key.upos };
        let base_p = ((rank_idx + 1) as f64).powf(-cfg.zipf_exponent) / harmonic;
        let extra = if plant.multiplier > 1.0 {
            let boost = (plant.multiplier - 1.0) * base_p;
            boost / (1.0 + boost)
        } else {
            0.0
        };
        plants.entry(plant.slice).or_default().push(Plant {
            rank_idx,
            multiplier: plant.multiplier,
            extra,
        });
    }

    let zipf = Zipf::new(cfg.vocab_size as f64, cfg.zipf_exponent)
        .expect("valid zipf parameters");
    let rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    SynthGenerator { cfg, vocab, plants, zipf, rng, next_doc: 0 }
}

impl SynthGenerator {
    fn draw_vocab_index(&mut self, slice: i32) -> usize {
        if let Some(plants) = self.plants.get(&slice) {
            for plant in plants {
                if plant.extra > 0.0 && self.rng.random::<f64>() < plant.extra {
                    return plant.rank_idx;
                }
            }
            // thinning for decreasing plants
            for _ in 0..100 {
                let idx = self.zipf.sample(&mut self.rng) as usize - 1;
                let thinned = plants
                    .iter()
                    .find(|p| p.rank_idx == idx && p.multiplier < 1.0);
                match thinned {
                    Some(p) if self.rng.random::<f64>() >= p.multiplier => continue,
                    _ => return idx,
                }
            }
            self.zipf.sample(&mut self.rng) as usize - 1
        } else {
            self.zipf.sample(&mut self.rng) as usize - 1
        }
    }
}

impl Iterator for SynthGenerator {
    type Item = (Document, TaggedDocument);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_doc >= self.cfg.n_docs {
            return None;
        }
        let i = self.next_doc;
        self.next_doc += 1;

        let slice = self.cfg.slices[i % self.cfg.slices.len()];
        let (lo, hi) = self.cfg.tokens_per_doc;
        let n_words = self.rng.random_range(lo..=hi);

        let mut tokens: Vec<Token> = Vec::with_capacity(n_words + n_words / 12 + 1);
        let mut text = String::with_capacity(n_words * 7);
        let mut sentence_len = 0usize;
        let mut sentence_target = self.rng.random_range(9..=18);
        for w in 0..n_words {
            let idx = self.draw_vocab_index(slice);
            let entry = &self.vocab[idx];
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(&entry.lemma);
            tokens.push(Token {
                surface: entry.lemma.clone(),
                lemma: entry.lemma.clone(),
                upos: entry.upos,
            });
            sentence_len += 1;
            if sentence_len >= sentence_target || w + 1 == n_words {
                text.push_str(" .");
                tokens.push(Token { surface: ".".into(), lemma: ".".into(), upos: Upos::PUNCT });
                sentence_len = 0;
                sentence_target = self.rng.random_range(9..=18);
            }
        }

        let id = format!("synth-{i:06}");
        let doc = Document {
            id: id.clone(),
            slice,
            text,
            source: DocumentSource::Jsonl,
        };
        let tagged = TaggedDocument { id, slice, tokens };
        Some((doc, tagged))
    }
}

/// Generate and write both corpus views: JSONL text documents and the
/// pre-tagged TSV with the ground-truth tags.
pub fn write_synth(
    cfg: SynthConfig,
    jsonl_path: &Path,
    pretagged_path: &Path,
) -> Result<CorpusManifest, io::Error> {
    let mut jsonl = BufWriter::new(std::fs::File::create(jsonl_path)?);
    let mut tsv = BufWriter::new(std::fs::File::create(pretagged_path)?);
    let mut doc_counts: BTreeMap<i32, u64> = BTreeMap::new();
    let seed = cfg.seed;
    let n_docs = cfg.n_docs;
    for (doc, tagged) in synth_corpus(cfg) {
        crate::corpus::write_jsonl_one(&doc, &mut jsonl)?;
        crate::tagging::write_pretagged([&tagged], &mut tsv)?;
        *doc_counts.entry(doc.slice).or_insert(0) += 1;
    }
    jsonl.flush()?;
    tsv.flush()?;
    Ok(CorpusManifest::from_counts(
        doc_counts,
        vec![format!("synthetic corpus, seed {seed}, {n_docs} documents")],
    ))
}
