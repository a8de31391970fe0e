//! The 20 base disciplines and the mapping of subject tags onto them.
//!
//! A mapping table is a line-oriented text file. Blank lines and lines starting
//! with `#` are ignored; every other line starts with a keyword and carries
//! `|`-separated fields:
//!
//! ```text
//! scheme   anzsrc | ANZSRC-FOR | http://purl.org/au-research/vocabulary/anzsrc-for/2008
//! notation anzsrc | ^\s*(\d{2}|\d{4}|\d{6})\b
//! exclude  linsearch
//! rule     anzsrc | prefix | 04 | Earth and Environmental Sciences
//! rule     ddc    | exact  | mathematics | 0; 1
//! ```
//!
//! `scheme` declares the aliases (subject `subjectScheme` values or `schemeURI`s)
//! that identify a scheme. `notation` adds a regular expression whose first capture
//! group extracts a notation code from a subject value or value URI. Rules match
//! either a prefix of an extracted notation, or the exact notation or exact
//! normalized subject value. Targets are discipline codes (0–19) or names,
//! separated by `;`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ingest::RawRecord;

pub const NUM_DISCIPLINES: usize = 20;

/// Base classes, in table order. Codes are the enum discriminants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Discipline {
    MathematicalSciences = 0,
    PhysicalSciences,
    ChemicalSciences,
    EarthAndEnvironmentalSciences,
    BiologicalSciences,
    AgriculturalAndVeterinarySciences,
    InformationAndComputingSciences,
    EngineeringAndTechnology,
    MedicalAndHealthSciences,
    BuiltEnvironmentAndDesign,
    Education,
    Economics,
    CommerceManagementTourismAndServices,
    StudiesInHumanSociety,
    PsychologyAndCognitiveSciences,
    LawAndLegalStudies,
    StudiesInCreativeArtsAndWriting,
    LanguageCommunicationAndCulture,
    HistoryAndArchaeology,
    PhilosophyAndReligiousStudies,
}

const NAMES: [&str; NUM_DISCIPLINES] = [
    "Mathematical Sciences",
    "Physical Sciences",
    "Chemical Sciences",
    "Earth and Environmental Sciences",
    "Biological Sciences",
    "Agricultural and Veterinary Sciences",
    "Information and Computing Sciences",
    "Engineering and Technology",
    "Medical and Health Sciences",
    "Built Environment and Design",
    "Education",
    "Economics",
    "Commerce, Management, Tourism and Services",
    "Studies in Human Society",
    "Psychology and Cognitive Sciences",
    "Law and Legal Studies",
    "Studies in Creative Arts and Writing",
    "Language, Communication and Culture",
    "History and Archaeology",
    "Philosophy and Religious Studies",
];

impl Discipline {
    pub const ALL: [Discipline; NUM_DISCIPLINES] = {
        use Discipline::*;
        [
            MathematicalSciences,
            PhysicalSciences,
            ChemicalSciences,
            EarthAndEnvironmentalSciences,
            BiologicalSciences,
            AgriculturalAndVeterinarySciences,
            InformationAndComputingSciences,
            EngineeringAndTechnology,
            MedicalAndHealthSciences,
            BuiltEnvironmentAndDesign,
            Education,
            Economics,
            CommerceManagementTourismAndServices,
            StudiesInHumanSociety,
            PsychologyAndCognitiveSciences,
            LawAndLegalStudies,
            StudiesInCreativeArtsAndWriting,
            LanguageCommunicationAndCulture,
            HistoryAndArchaeology,
            PhilosophyAndReligiousStudies,
        ]
    };

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        NAMES[self.index()]
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Case-insensitive lookup by full name.
    pub fn from_name(name: &str) -> Option<Self> {
        let name = name.trim();
        NAMES.iter().position(|n| n.eq_ignore_ascii_case(name)).map(|i| Self::ALL[i])
    }
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Discipline {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for Discipline {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let code = u8::deserialize(d)?;
        Discipline::from_code(code).ok_or_else(|| serde::de::Error::custom(format!("unknown discipline code {code}")))
    }
}

/// A set of disciplines. Iteration is in code order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSet(u32);

impl LabelSet {
    pub fn new() -> Self {
        Self(0)
    }

    pub fn insert(&mut self, d: Discipline) {
        self.0 |= 1 << d.code();
    }

    pub fn contains(&self, d: Discipline) -> bool {
        self.0 & (1 << d.code()) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Self) -> Self {
        Self(self.0 | other.0)
    }

    pub fn bits(&self) -> u32 {
        self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = Discipline> + '_ {
        Discipline::ALL.into_iter().filter(move |d| self.contains(*d))
    }

    pub fn codes(&self) -> Vec<u8> {
        self.iter().map(Discipline::code).collect()
    }

    /// Dense 0/1 indicator row of length [`NUM_DISCIPLINES`].
    pub fn indicator(&self) -> [bool; NUM_DISCIPLINES] {
        let mut row = [false; NUM_DISCIPLINES];
        for d in self.iter() {
            row[d.index()] = true;
        }
        row
    }
}

impl FromIterator<Discipline> for LabelSet {
    fn from_iter<I: IntoIterator<Item = Discipline>>(iter: I) -> Self {
        let mut set = LabelSet::new();
        for d in iter {
            set.insert(d);
        }
        set
    }
}

impl Serialize for LabelSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.codes().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let codes = Vec::<Discipline>::deserialize(d)?;
        Ok(codes.into_iter().collect())
    }
}

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("line {line}: {message}")]
    InvalidMapping { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchKind {
    Prefix,
    Exact,
}

#[derive(Debug, Clone)]
pub struct MappingRule {
    pub scheme_id: String,
    pub kind: MatchKind,
    pub pattern: String,
    pub targets: LabelSet,
}

impl MappingRule {
    fn matches(&self, keys: &SubjectKeys) -> bool {
        match self.kind {
            MatchKind::Prefix => keys.notations.iter().any(|n| n.starts_with(&self.pattern)),
            MatchKind::Exact => keys.notations.contains(&self.pattern) || keys.name == self.pattern,
        }
    }
}

/// Match keys derived from one subject tag.
struct SubjectKeys {
    notations: Vec<String>,
    name: String,
}

#[derive(Debug, Clone, Default)]
pub struct MappingTable {
    pub rules: Vec<MappingRule>,
    /// Normalized alias to scheme id.
    pub scheme_recognizers: HashMap<String, String>,
    pub excluded_schemes: BTreeSet<String>,
    notation_patterns: HashMap<String, Vec<Regex>>,
}

/// Outcome of mapping one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MapOutcome {
    Labeled { labels: LabelSet, consumed_subjects: BTreeSet<usize> },
    NotAnnotatable,
    AutoLabeled,
}

const DEFAULT_TABLE: &str = include_str!("../data/mapping.txt");

/// Lower-cases, trims and drops a trailing slash.
pub fn normalize_alias(alias: &str) -> String {
    alias.trim().trim_end_matches('/').to_lowercase()
}

/// Lower-cases, collapses whitespace, trims trailing punctuation.
fn normalize_value(value: &str) -> String {
    let joined = value.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    joined.trim_end_matches(['.', ',', ';', ':']).to_string()
}

impl MappingTable {
    /// The shipped table covering ANZSRC, DDC, Basisklassifikation, Narcis and
    /// the Digital Commons taxonomy, with linsearch excluded.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_TABLE).expect("shipped mapping table is valid")
    }

    pub fn load(path: &Path) -> Result<Self, MappingError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, MappingError> {
        let mut table = MappingTable::default();
        let mut seen_rules = HashSet::new();
        let mut rule_lines = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let invalid = |message: String| MappingError::InvalidMapping { line: line_no, message };
            let (keyword, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let fields: Vec<&str> = rest.split('|').map(str::trim).collect();
            match keyword {
                "scheme" => {
                    let id = normalize_alias(fields[0]);
                    if id.is_empty() {
                        return Err(invalid("empty scheme id".into()));
                    }
                    for alias in std::iter::once(fields[0]).chain(fields[1..].iter().copied()) {
                        let alias = normalize_alias(alias);
                        if alias.is_empty() {
                            continue;
                        }
                        if let Some(prev) = table.scheme_recognizers.get(&alias) {
                            if *prev != id {
                                return Err(invalid(format!("alias {alias:?} already names scheme {prev}")));
                            }
                        }
                        table.scheme_recognizers.insert(alias, id.clone());
                    }
                }
                "notation" => {
                    // the pattern may itself contain '|'
                    let Some((scheme, pattern)) = rest.split_once('|') else {
                        return Err(invalid("expected: notation <scheme> | <regex>".into()));
                    };
                    let re = Regex::new(pattern.trim()).map_err(|e| invalid(e.to_string()))?;
                    if re.captures_len() < 2 {
                        return Err(invalid("notation pattern needs a capture group".into()));
                    }
                    table.notation_patterns.entry(normalize_alias(scheme)).or_default().push(re);
                }
                "exclude" => {
                    let id = normalize_alias(fields[0]);
                    table.scheme_recognizers.entry(id.clone()).or_insert_with(|| id.clone());
                    table.excluded_schemes.insert(id);
                }
                "rule" => {
                    if fields.len() != 4 {
                        return Err(invalid("expected: rule <scheme> | prefix|exact | <pattern> | <targets>".into()));
                    }
                    let scheme_id = normalize_alias(fields[0]);
                    let kind = match fields[1].to_lowercase().as_str() {
                        "prefix" => MatchKind::Prefix,
                        "exact" => MatchKind::Exact,
                        other => return Err(invalid(format!("unknown matcher kind {other:?}"))),
                    };
                    let pattern = normalize_value(fields[2]);
                    if pattern.is_empty() {
                        return Err(invalid("empty matcher pattern".into()));
                    }
                    let mut targets = LabelSet::new();
                    for t in fields[3].split(';').map(str::trim).filter(|t| !t.is_empty()) {
                        let d = match t.parse::<u8>() {
                            Ok(code) => Discipline::from_code(code),
                            Err(_) => Discipline::from_name(t),
                        }
                        .ok_or_else(|| invalid(format!("unknown discipline {t:?}")))?;
                        targets.insert(d);
                    }
                    if targets.is_empty() {
                        return Err(invalid("rule has no targets".into()));
                    }
                    if !seen_rules.insert((scheme_id.clone(), kind, pattern.clone())) {
                        return Err(invalid(format!("duplicate rule {scheme_id} {pattern}")));
                    }
                    rule_lines.push(line_no);
                    table.rules.push(MappingRule { scheme_id, kind, pattern, targets });
                }
                other => return Err(invalid(format!("unknown keyword {other:?}"))),
            }
        }

        let known: HashSet<&String> = table.scheme_recognizers.values().collect();
        for (rule, line) in table.rules.iter().zip(rule_lines) {
            if !known.contains(&rule.scheme_id) {
                return Err(MappingError::InvalidMapping {
                    line,
                    message: format!("scheme {} has no recognizer", rule.scheme_id),
                });
            }
        }
        Ok(table)
    }

    /// Resolves a subject's scheme id from its `subjectScheme`, then its `schemeURI`.
    pub fn recognize(&self, scheme_name: Option<&str>, scheme_uri: Option<&str>) -> Option<&str> {
        [scheme_name, scheme_uri]
            .into_iter()
            .flatten()
            .find_map(|alias| self.scheme_recognizers.get(&normalize_alias(alias)))
            .map(String::as_str)
    }

    fn keys(&self, scheme_id: &str, value: &str, value_uri: Option<&str>) -> SubjectKeys {
        let mut notations = Vec::new();
        if let Some(patterns) = self.notation_patterns.get(scheme_id) {
            for candidate in std::iter::once(value).chain(value_uri) {
                for re in patterns {
                    if let Some(m) = re.captures(candidate).and_then(|c| c.get(1)) {
                        let n = m.as_str().to_lowercase();
                        if !notations.contains(&n) {
                            notations.push(n);
                        }
                    }
                }
            }
        }
        SubjectKeys { notations, name: normalize_value(value) }
    }

    /// Maps a qualified record onto the union of all matching rule targets.
    pub fn map_record(&self, record: &RawRecord) -> MapOutcome {
        let mut labels = LabelSet::new();
        let mut consumed = BTreeSet::new();
        for (i, subject) in record.subjects.iter().enumerate() {
            let Some(scheme) = self.recognize(subject.scheme_name.as_deref(), subject.scheme_uri.as_deref()) else {
                continue;
            };
            if self.excluded_schemes.contains(scheme) {
                return MapOutcome::AutoLabeled;
            }
            let keys = self.keys(scheme, &subject.value, subject.value_uri.as_deref());
            for rule in self.rules.iter().filter(|r| r.scheme_id == scheme) {
                if rule.matches(&keys) {
                    labels = labels.union(rule.targets);
                    consumed.insert(i);
                }
            }
        }
        if labels.is_empty() {
            MapOutcome::NotAnnotatable
        } else {
            MapOutcome::Labeled { labels, consumed_subjects: consumed }
        }
    }

    /// Lints ANZSRC rules that would split one of the merged division pairs
    /// (04/05 into Earth and Environmental Sciences, 09/10 into Engineering and
    /// Technology).
    pub fn merge_semantics_check(&self) -> Vec<String> {
        let merged = [
            (["04", "05"], Discipline::EarthAndEnvironmentalSciences),
            (["09", "10"], Discipline::EngineeringAndTechnology),
        ];
        let mut warnings = Vec::new();
        for rule in self.rules.iter().filter(|r| r.scheme_id == "anzsrc") {
            for (divisions, class) in merged {
                let Some(division) = divisions.iter().find(|d| rule.pattern.starts_with(*d)) else {
                    continue;
                };
                let expected: LabelSet = [class].into_iter().collect();
                if rule.targets != expected {
                    warnings.push(format!(
                        "ANZSRC {} rule {:?} maps to {:?} instead of only {:?}",
                        division,
                        rule.pattern,
                        rule.targets.iter().map(Discipline::name).collect::<Vec<_>>(),
                        class.name()
                    ));
                }
            }
        }
        warnings
    }
}
