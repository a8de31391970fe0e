//! Cleaning of mapped records into labeled text payloads.
//!
//! Records pass three steps in order: mapping onto disciplines (dropping records
//! that are not annotatable or automatically labeled), deduplication, and payload
//! construction with an English filter and a 10-word floor.

use std::collections::{BTreeSet, HashSet};
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::RawRecord;
use crate::scheme_map::{LabelSet, MapOutcome, MappingTable};

/// Minimum number of whitespace-separated words in a payload.
pub const MIN_PAYLOAD_WORDS: usize = 10;
pub const DEFAULT_ENGLISH_THRESHOLD: f64 = 0.25;

const ENGLISH_WORDS: &str = include_str!("../data/english_words.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPayload {
    pub id: String,
    pub payload: String,
    pub labels: LabelSet,
    pub word_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
}

impl LabeledPayload {
    pub fn new(id: impl Into<String>, payload: impl Into<String>, labels: LabelSet) -> Self {
        let payload = payload.into();
        Self { id: id.into(), word_count: word_count(&payload), payload, labels, year: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanStats {
    pub input: u64,
    pub not_annotatable: u64,
    pub auto_labeled: u64,
    pub duplicates: u64,
    pub unfit: u64,
    pub output: u64,
}

impl CleanStats {
    /// Every input record is accounted for by exactly one counter.
    pub fn is_partition(&self) -> bool {
        self.input == self.not_annotatable + self.auto_labeled + self.duplicates + self.unfit + self.output
    }
}

/// Decides whether one payload part is English.
pub trait LanguageDetector {
    fn is_english(&self, part: &str) -> bool;
}

/// Share of tokens found in a list of frequent English words.
#[derive(Debug, Clone)]
pub struct CommonWordDetector {
    words: HashSet<String>,
    threshold: f64,
}

fn english_words() -> &'static HashSet<String> {
    static WORDS: OnceLock<HashSet<String>> = OnceLock::new();
    WORDS.get_or_init(|| {
        ENGLISH_WORDS
            .lines()
            .filter(|l| !l.starts_with('#'))
            .flat_map(str::split_whitespace)
            .map(str::to_string)
            .collect()
    })
}

impl CommonWordDetector {
    pub fn new(threshold: f64) -> Self {
        Self { words: english_words().clone(), threshold }
    }

    pub fn ratio(&self, part: &str) -> Option<f64> {
        let mut total = 0usize;
        let mut known = 0usize;
        for token in part.split(|c: char| !c.is_alphabetic()).filter(|t| !t.is_empty()) {
            total += 1;
            if self.words.contains(&token.to_lowercase()) {
                known += 1;
            }
        }
        (total > 0).then(|| known as f64 / total as f64)
    }
}

impl Default for CommonWordDetector {
    fn default() -> Self {
        Self::new(DEFAULT_ENGLISH_THRESHOLD)
    }
}

impl LanguageDetector for CommonWordDetector {
    fn is_english(&self, part: &str) -> bool {
        self.ratio(part).is_some_and(|r| r >= self.threshold)
    }
}

/// English check with the bundled word list and the default threshold.
pub fn is_mostly_english(part: &str) -> bool {
    static DETECTOR: OnceLock<CommonWordDetector> = OnceLock::new();
    DETECTOR.get_or_init(CommonWordDetector::default).is_english(part)
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("payload has {words} words, fewer than {MIN_PAYLOAD_WORDS}")]
pub struct TooShort {
    pub words: usize,
}

/// Concatenates titles, descriptions and the subject values not used for
/// labeling, keeping only English parts.
pub fn build_payload(
    record: &RawRecord,
    consumed_subjects: &BTreeSet<usize>,
    detector: &dyn LanguageDetector,
) -> Result<String, TooShort> {
    let leftover = record
        .subjects
        .iter()
        .enumerate()
        .filter(|(i, _)| !consumed_subjects.contains(i))
        .map(|(_, s)| s.value.as_str());
    let parts: Vec<&str> = record
        .titles
        .iter()
        .chain(&record.descriptions)
        .map(String::as_str)
        .chain(leftover)
        .map(str::trim)
        .filter(|p| !p.is_empty() && detector.is_english(p))
        .collect();
    let payload = parts.join(" ");
    let words = word_count(&payload);
    if words < MIN_PAYLOAD_WORDS {
        return Err(TooShort { words });
    }
    Ok(payload)
}

/// What identifies two records as duplicates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DedupKey {
    Payload,
    #[default]
    #[serde(rename = "payload+labels")]
    PayloadLabels,
    Id,
}

impl FromStr for DedupKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "payload" => Ok(Self::Payload),
            "payload+labels" => Ok(Self::PayloadLabels),
            "id" => Ok(Self::Id),
            other => Err(format!("unknown dedup key {other:?} (payload|payload+labels|id)")),
        }
    }
}

fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

type KeyDigest = [u8; 32];

fn digest<'a>(parts: impl IntoIterator<Item = &'a str>) -> KeyDigest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0x1f]);
    }
    h.finalize().into()
}

fn label_suffix(labels: Option<LabelSet>) -> String {
    labels.map(|l| format!("{:?}", l.codes())).unwrap_or_default()
}

/// Remembers keys and reports whether a key was seen before.
#[derive(Debug, Default)]
pub struct Deduplicator {
    seen: HashSet<KeyDigest>,
    duplicates: u64,
}

impl Deduplicator {
    pub fn new() -> Self {
        Self::default()
    }

    /// True the first time a key is offered.
    fn admit(&mut self, key: KeyDigest) -> bool {
        let fresh = self.seen.insert(key);
        if !fresh {
            self.duplicates += 1;
        }
        fresh
    }

    /// Keyed on the normalized payload, plus the label codes when given.
    pub fn admit_payload(&mut self, payload: &str, labels: Option<LabelSet>) -> bool {
        let norm = normalize_text(payload);
        let suffix = label_suffix(labels);
        self.admit(digest([norm.as_str(), suffix.as_str()]))
    }

    /// Pre-payload key: sorted normalized titles and descriptions, plus labels when given.
    pub fn admit_record(&mut self, record: &RawRecord, labels: Option<LabelSet>) -> bool {
        let mut titles: Vec<String> = record.titles.iter().map(|t| normalize_text(t)).collect();
        let mut descriptions: Vec<String> = record.descriptions.iter().map(|d| normalize_text(d)).collect();
        titles.sort();
        descriptions.sort();
        let suffix = label_suffix(labels);
        let parts = titles
            .iter()
            .map(String::as_str)
            .chain(["\u{1e}"])
            .chain(descriptions.iter().map(String::as_str))
            .chain(["\u{1e}", suffix.as_str()]);
        self.admit(digest(parts))
    }

    pub fn admit_id(&mut self, id: &str) -> bool {
        self.admit(digest([id]))
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }
}

/// Keeps the first record of each duplicate group; returns survivors and the
/// number dropped.
pub fn dedup<I>(items: I, key: DedupKey) -> (Vec<(String, String, LabelSet)>, u64)
where
    I: IntoIterator<Item = (String, String, LabelSet)>,
{
    let mut d = Deduplicator::new();
    let kept = items
        .into_iter()
        .filter(|(id, payload, labels)| match key {
            DedupKey::Payload => d.admit_payload(payload, None),
            DedupKey::PayloadLabels => d.admit_payload(payload, Some(*labels)),
            DedupKey::Id => d.admit_id(id),
        })
        .collect();
    (kept, d.duplicates())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CleanConfig {
    pub dedup_key: DedupKey,
    pub english_threshold: f64,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self { dedup_key: DedupKey::default(), english_threshold: DEFAULT_ENGLISH_THRESHOLD }
    }
}

/// Streaming cleaner. Feed records in order with [`Cleaner::push`].
pub struct Cleaner<'a> {
    table: &'a MappingTable,
    detector: Box<dyn LanguageDetector + 'a>,
    dedup_key: DedupKey,
    dedup: Deduplicator,
    stats: CleanStats,
}

impl<'a> Cleaner<'a> {
    pub fn new(table: &'a MappingTable, cfg: CleanConfig) -> Self {
        Self::with_detector(table, cfg.dedup_key, Box::new(CommonWordDetector::new(cfg.english_threshold)))
    }

    pub fn with_detector(
        table: &'a MappingTable,
        dedup_key: DedupKey,
        detector: Box<dyn LanguageDetector + 'a>,
    ) -> Self {
        Self { table, detector, dedup_key, dedup: Deduplicator::new(), stats: CleanStats::default() }
    }

    pub fn push(&mut self, record: &RawRecord) -> Option<LabeledPayload> {
        self.stats.input += 1;
        let (labels, consumed) = match self.table.map_record(record) {
            MapOutcome::NotAnnotatable => {
                self.stats.not_annotatable += 1;
                return None;
            }
            MapOutcome::AutoLabeled => {
                self.stats.auto_labeled += 1;
                return None;
            }
            MapOutcome::Labeled { labels, consumed_subjects } => (labels, consumed_subjects),
        };
        let fresh = match self.dedup_key {
            DedupKey::Payload => self.dedup.admit_record(record, None),
            DedupKey::PayloadLabels => self.dedup.admit_record(record, Some(labels)),
            DedupKey::Id => self.dedup.admit_id(&record.identifier),
        };
        if !fresh {
            self.stats.duplicates += 1;
            return None;
        }
        match build_payload(record, &consumed, self.detector.as_ref()) {
            Ok(payload) => {
                self.stats.output += 1;
                Some(LabeledPayload {
                    id: record.identifier.clone(),
                    word_count: word_count(&payload),
                    payload,
                    labels,
                    year: record.publication_year,
                })
            }
            Err(TooShort { .. }) => {
                self.stats.unfit += 1;
                None
            }
        }
    }

    pub fn stats(&self) -> CleanStats {
        self.stats
    }
}

pub fn clean<'r, I>(records: I, table: &MappingTable, cfg: CleanConfig) -> (Vec<LabeledPayload>, CleanStats)
where
    I: IntoIterator<Item = &'r RawRecord>,
{
    let mut cleaner = Cleaner::new(table, cfg);
    let out = records.into_iter().filter_map(|r| cleaner.push(r)).collect();
    (out, cleaner.stats())
}
