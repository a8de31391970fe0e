//! Writes the 1,000-record DataCite test fixture to standard output.
//!
//! The record mix is fixed: 60 without a scheme-qualified subject, 40 tagged only
//! with an unknown scheme, 30 carrying an automatically derived scheme, 50 copies
//! of earlier records, 40 with fewer than ten words, 30 in German and 750
//! usable English records. Four deleted headers are interleaved as well.
//!
//! Run with `cargo run -p rdclass-core --example make_fixture > crates/core/tests/fixtures/datacite_1000.xml`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOPICS: [[&str; 8]; 20] = [
    ["algebra", "topology", "theorem", "polynomial", "manifold", "combinatorics", "integer", "lattice"],
    ["quantum", "photon", "magnetic", "particle", "laser", "plasma", "neutron", "optics"],
    ["molecule", "catalyst", "polymer", "synthesis", "reaction", "crystal", "solvent", "spectroscopy"],
    ["sediment", "glacier", "rainfall", "erosion", "seismic", "groundwater", "climate", "ocean"],
    ["protein", "genome", "species", "enzyme", "bacteria", "cell", "evolution", "insect"],
    ["crop", "livestock", "soil", "wheat", "veterinary", "cattle", "irrigation", "harvest"],
    ["algorithm", "software", "network", "database", "computing", "encryption", "compiler", "robot"],
    ["turbine", "bridge", "welding", "sensor", "circuit", "concrete", "engine", "voltage"],
    ["patient", "clinical", "cancer", "vaccine", "hospital", "therapy", "diabetes", "surgery"],
    ["architecture", "building", "urban", "housing", "facade", "landscape", "planning", "interior"],
    ["teacher", "classroom", "pupils", "curriculum", "school", "learning", "literacy", "student"],
    ["inflation", "market", "price", "trade", "labour", "income", "tax", "monetary"],
    ["tourism", "marketing", "firm", "management", "retail", "accounting", "hotel", "business"],
    ["migration", "gender", "community", "sociology", "welfare", "political", "household", "census"],
    ["cognition", "memory", "emotion", "perception", "anxiety", "attention", "personality", "behaviour"],
    ["court", "legal", "contract", "legislation", "judge", "rights", "criminal", "constitution"],
    ["music", "painting", "theatre", "poetry", "film", "sculpture", "dance", "novel"],
    ["dialect", "grammar", "linguistic", "translation", "vocabulary", "speech", "media", "culture"],
    ["archaeology", "medieval", "excavation", "ancient", "archive", "pottery", "roman", "century"],
    ["ethics", "religion", "theology", "metaphysics", "logic", "moral", "buddhism", "church"],
];

/// ANZSRC division codes per discipline; merged pairs have two.
const DIVISIONS: [&[&str]; 20] = [
    &["01"],
    &["02"],
    &["03"],
    &["04", "05"],
    &["06"],
    &["07"],
    &["08"],
    &["09", "10"],
    &["11"],
    &["12"],
    &["13"],
    &["14"],
    &["15"],
    &["16"],
    &["17"],
    &["18"],
    &["19"],
    &["20"],
    &["21"],
    &["22"],
];

/// Dewey classes usable for some disciplines.
const DEWEY: [(usize, &str); 6] = [(0, "510"), (1, "530"), (2, "540"), (6, "005.1"), (10, "370"), (11, "330")];

const PLACES: [&str; 8] = [
    "northern valley",
    "coastal town",
    "mountain region",
    "river basin",
    "city centre",
    "small island",
    "southern plain",
    "border area",
];
const SEASONS: [&str; 4] = ["spring", "summer", "autumn", "winter"];

const GERMAN: [&str; 6] = [
    "Untersuchung zur Bodenfeuchte im Alpenraum anhand neuer Messreihen aus mehreren Jahren",
    "Erhebung über Wohnverhältnisse städtischer Haushalte nach Stadtteilen geordnet",
    "Messreihen zur Wasserqualität deutscher Flüsse zwischen Quelle und Mündung",
    "Sammlung mittelalterlicher Urkunden aus klösterlichen Archiven Süddeutschlands",
    "Befragung von Lehrkräften über Unterrichtsmethoden an Grundschulen",
    "Ergebnisse einer Langzeitstudie über Ernährungsgewohnheiten älterer Menschen",
];

struct Subject {
    value: String,
    scheme: Option<String>,
    uri: Option<String>,
}

struct Rec {
    id: String,
    titles: Vec<String>,
    descriptions: Vec<String>,
    subjects: Vec<Subject>,
    year: u32,
}

fn anzsrc(code: &str, name_form: bool) -> Subject {
    if name_form {
        Subject {
            value: code.to_string(),
            scheme: None,
            uri: Some("http://purl.org/au-research/vocabulary/anzsrc-for/2008/".into()),
        }
    } else {
        Subject { value: format!("FOR {code}"), scheme: Some("ANZSRC".into()), uri: None }
    }
}

fn english_text(rng: &mut ChaCha8Rng, labels: &[usize], n: usize) -> (String, String) {
    let pick = |rng: &mut ChaCha8Rng| {
        let d = labels[rng.gen_range(0..labels.len())];
        TOPICS[d][rng.gen_range(0..8)]
    };
    let place = PLACES[rng.gen_range(0..PLACES.len())];
    let title = format!("Observations of {} and {} in the {} (series {n})", pick(rng), pick(rng), place);
    let description = format!(
        "This collection contains records of {} that were made during the {} of {}. \
         It can be used to see how {} and {} change over time in the {} and what that means for {}.",
        pick(rng),
        SEASONS[rng.gen_range(0..4)],
        1990 + rng.gen_range(0..30),
        pick(rng),
        pick(rng),
        place,
        pick(rng)
    );
    (title, description)
}

fn labeled_subjects(rng: &mut ChaCha8Rng, labels: &[usize]) -> Vec<Subject> {
    labels
        .iter()
        .map(|&d| {
            if let Some((_, class)) = DEWEY.iter().find(|(l, _)| *l == d).filter(|_| rng.gen_bool(0.3)) {
                Subject { value: class.to_string(), scheme: Some("DDC".into()), uri: None }
            } else {
                let divisions = DIVISIONS[d];
                let div = divisions[rng.gen_range(0..divisions.len())];
                let code =
                    if rng.gen_bool(0.5) { format!("{div}{:02}", rng.gen_range(1..10)) } else { div.to_string() };
                anzsrc(&code, rng.gen_bool(0.3))
            }
        })
        .collect()
}

fn label_set(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = match rng.gen_range(0..10) {
        0..=5 => 1,
        6..=8 => 2,
        _ => 3,
    };
    let mut all: Vec<usize> = (0..20).collect();
    all.shuffle(rng);
    let mut l = all[..k].to_vec();
    l.sort_unstable();
    l
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn write_record(out: &mut String, r: &Rec) {
    out.push_str("<record><header>");
    out.push_str(&format!("<identifier>oai:fixture:{}</identifier>", r.id));
    out.push_str("<datestamp>2020-01-01T00:00:00Z</datestamp></header><metadata>");
    out.push_str("<resource xmlns=\"http://datacite.org/schema/kernel-4\">");
    out.push_str(&format!("<identifier identifierType=\"DOI\">10.9999/fixture.{}</identifier>", r.id));
    out.push_str("<titles>");
    for t in &r.titles {
        out.push_str(&format!("<title xml:lang=\"en\">{}</title>", escape(t)));
    }
    out.push_str("</titles>");
    if !r.subjects.is_empty() {
        out.push_str("<subjects>");
        for s in &r.subjects {
            out.push_str("<subject");
            if let Some(v) = &s.scheme {
                out.push_str(&format!(" subjectScheme=\"{}\"", escape(v)));
            }
            if let Some(v) = &s.uri {
                out.push_str(&format!(" schemeURI=\"{}\"", escape(v)));
            }
            out.push_str(&format!(">{}</subject>", escape(&s.value)));
        }
        out.push_str("</subjects>");
    }
    out.push_str(&format!("<publicationYear>{}</publicationYear>", r.year));
    if !r.descriptions.is_empty() {
        out.push_str("<descriptions>");
        for d in &r.descriptions {
            out.push_str(&format!("<description descriptionType=\"Abstract\">{}</description>", escape(d)));
        }
        out.push_str("</descriptions>");
    }
    out.push_str("</resource></metadata></record>\n");
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_210_607);
    let mut records: Vec<Rec> = Vec::new();
    let mut counter = 0;
    let mut next_id = |prefix: &str| {
        counter += 1;
        (format!("{prefix}-{counter:04}"), counter)
    };

    for _ in 0..750 {
        let labels = label_set(&mut rng);
        let (id, n) = next_id("good");
        let (title, description) = english_text(&mut rng, &labels, n);
        let mut subjects = labeled_subjects(&mut rng, &labels);
        if rng.gen_bool(0.2) {
            let d = labels[0];
            subjects.push(Subject { value: TOPICS[d][rng.gen_range(0..8)].into(), scheme: None, uri: None });
        }
        records.push(Rec {
            id,
            titles: vec![title],
            descriptions: vec![description],
            subjects,
            year: 2000 + rng.gen_range(0..21),
        });
    }
    for _ in 0..60 {
        let labels = label_set(&mut rng);
        let (id, n) = next_id("plain");
        let (title, description) = english_text(&mut rng, &labels, n);
        let subjects = vec![Subject { value: TOPICS[labels[0]][0].into(), scheme: None, uri: None }];
        records.push(Rec { id, titles: vec![title], descriptions: vec![description], subjects, year: 2015 });
    }
    for _ in 0..40 {
        let labels = label_set(&mut rng);
        let (id, n) = next_id("unknown");
        let (title, description) = english_text(&mut rng, &labels, n);
        let subjects = vec![Subject {
            value: "Geography -- Maps".into(),
            scheme: Some("LCSH".into()),
            uri: Some("http://id.loc.gov/authorities/subjects".into()),
        }];
        records.push(Rec { id, titles: vec![title], descriptions: vec![description], subjects, year: 2016 });
    }
    for _ in 0..30 {
        let labels = label_set(&mut rng);
        let (id, n) = next_id("auto");
        let (title, description) = english_text(&mut rng, &labels, n);
        let mut subjects = labeled_subjects(&mut rng, &labels);
        subjects.push(Subject { value: "Natural Sciences".into(), scheme: Some("linsearch".into()), uri: None });
        records.push(Rec { id, titles: vec![title], descriptions: vec![description], subjects, year: 2017 });
    }
    for _ in 0..40 {
        let labels = label_set(&mut rng);
        let (id, n) = next_id("short");
        let title = format!("{} {} survey {n}", TOPICS[labels[0]][1], TOPICS[labels[0]][2]);
        let subjects = labeled_subjects(&mut rng, &labels);
        records.push(Rec { id, titles: vec![title], descriptions: vec![], subjects, year: 2018 });
    }
    for i in 0..30 {
        let labels = label_set(&mut rng);
        let (id, _) = next_id("german");
        let title = format!("{} Teil {}", GERMAN[i % GERMAN.len()], i + 1);
        let description = GERMAN[(i + 1) % GERMAN.len()].to_string();
        let subjects = labeled_subjects(&mut rng, &labels);
        records.push(Rec { id, titles: vec![title], descriptions: vec![description], subjects, year: 2019 });
    }

    records.shuffle(&mut rng);
    let good_positions: Vec<usize> =
        records.iter().enumerate().filter(|(_, r)| r.id.starts_with("good")).map(|(i, _)| i).collect();
    let mut picks: Vec<usize> = good_positions.choose_multiple(&mut rng, 50).copied().collect();
    picks.sort_unstable();
    // copies are placed after their originals; insert from the back to keep indices valid
    let mut inserts: Vec<(usize, Rec)> = picks
        .iter()
        .map(|&p| {
            let src = &records[p];
            let (id, _) = next_id("copy");
            let at = rng.gen_range(p + 1..=records.len());
            let subjects = src
                .subjects
                .iter()
                .map(|s| Subject { value: s.value.clone(), scheme: s.scheme.clone(), uri: s.uri.clone() })
                .collect();
            (
                at,
                Rec {
                    id,
                    titles: src.titles.clone(),
                    descriptions: src.descriptions.clone(),
                    subjects,
                    year: src.year,
                },
            )
        })
        .collect();
    inserts.sort_by_key(|(at, _)| std::cmp::Reverse(*at));
    for (at, r) in inserts {
        records.insert(at, r);
    }

    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<OAI-PMH xmlns=\"http://www.openarchives.org/OAI/2.0/\">\n");
    out.push_str("<responseDate>2021-06-07T00:00:00Z</responseDate>\n");
    out.push_str("<request verb=\"ListRecords\" metadataPrefix=\"oai_datacite\">https://example.org/oai</request>\n");
    out.push_str("<ListRecords>\n");
    for (i, r) in records.iter().enumerate() {
        if i % 250 == 125 {
            out.push_str(&format!(
                "<record><header status=\"deleted\"><identifier>oai:fixture:deleted-{i}</identifier><datestamp>2020-01-01T00:00:00Z</datestamp></header></record>\n"
            ));
        }
        write_record(&mut out, r);
    }
    out.push_str("</ListRecords>\n</OAI-PMH>\n");
    print!("{out}");
}
