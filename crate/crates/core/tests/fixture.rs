//! The bundled 1,000-record DataCite fixture through ingest, cleaning and splitting.

use rdclass::clean::{clean, CleanConfig, CleanStats};
use rdclass::ingest::{ingest_document, RawRecord};
use rdclass::recordio::NdjsonWriter;
use rdclass::sample::{assign_best_labels_for, dataset_stats, stratified_split, SplitConfig};
use rdclass::scheme_map::MappingTable;
use sha2::{Digest, Sha256};

const FIXTURE: &str = include_str!("fixtures/datacite_1000.xml");

fn records() -> Vec<RawRecord> {
    let mut out = Vec::new();
    let stats = ingest_document(FIXTURE, |r| {
        out.push(r);
        Ok(())
    })
    .unwrap();
    assert_eq!(stats.records_seen, 1000);
    assert_eq!(stats.records_qualified, 940);
    out
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the cleaned NDJSON, frozen from the first audited run.
const CLEANED_SHA256: &str = "55adfb3e93433a035f7acb39ea7478f226f95153f2bcbeb063b3dde9a603b4d7";

#[test]
fn counts_follow_the_fixture_construction() {
    let recs = records();
    let (payloads, stats) = clean(&recs, &MappingTable::builtin(), CleanConfig::default());
    assert_eq!(
        stats,
        CleanStats { input: 940, not_annotatable: 40, auto_labeled: 30, duplicates: 50, unfit: 70, output: 750 }
    );
    assert!(stats.is_partition());
    assert!(payloads.iter().all(|p| p.id.starts_with("oai:fixture:good-")));
    assert!(payloads.iter().all(|p| p.word_count >= 10));
}

#[test]
fn cleaned_output_is_frozen() {
    let recs = records();
    let (payloads, _) = clean(&recs, &MappingTable::builtin(), CleanConfig::default());
    let mut w = NdjsonWriter::new(Vec::new());
    for p in &payloads {
        w.write(p).unwrap();
    }
    assert_eq!(hex(&Sha256::digest(w.into_inner().unwrap())), CLEANED_SHA256);
}

#[test]
fn split_and_stats_on_fixture() {
    let recs = records();
    let (payloads, _) = clean(&recs, &MappingTable::builtin(), CleanConfig::default());
    let best = assign_best_labels_for(&payloads).unwrap();
    let cfg = SplitConfig { seed: 42, ..Default::default() };
    let split = stratified_split(&best, &cfg);
    assert_eq!((split.train.len(), split.holdout.len()), (670, 80));
    assert_eq!(split, stratified_split(&best, &cfg));
    let st = dataset_stats(&payloads);
    assert_eq!(st.n, 750);
    assert_eq!(st.labelset_count, 226);
    assert!((st.cardinality - 1.488).abs() < 1e-12);
}
