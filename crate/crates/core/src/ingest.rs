//! Retrieval of DataCite metadata over OAI-PMH.
//!
//! Records are parsed by local element name, so every DataCite kernel version
//! (2.x to 4.x) is handled by the same code path regardless of its namespace URI.
//! Only "qualified" records, those with at least one subject carrying a
//! `schemeURI` or `subjectScheme` attribute, are passed on to the sink.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("record has no identifier")]
    MissingIdentifier,
    #[error("endpoint unreachable after {attempts} attempt(s): {last}")]
    EndpointUnreachable { attempts: u32, last: String },
    #[error("OAI-PMH error {code}: {message}")]
    ProtocolError { code: String, message: String },
    #[error("invalid endpoint URL: {0}")]
    InvalidUrl(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One subject element of a DataCite record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectTag {
    pub value: String,
    #[serde(rename = "schemeURI", default, skip_serializing_if = "Option::is_none")]
    pub scheme_uri: Option<String>,
    #[serde(rename = "subjectScheme", default, skip_serializing_if = "Option::is_none")]
    pub scheme_name: Option<String>,
    #[serde(rename = "valueURI", default, skip_serializing_if = "Option::is_none")]
    pub value_uri: Option<String>,
}

impl SubjectTag {
    /// Unqualified tag without any scheme attributes.
    pub fn plain(value: impl Into<String>) -> Self {
        Self { value: value.into(), scheme_uri: None, scheme_name: None, value_uri: None }
    }

    pub fn with_scheme(value: impl Into<String>, scheme_name: impl Into<String>) -> Self {
        Self { scheme_name: Some(scheme_name.into()), ..Self::plain(value) }
    }

    pub fn qualified(&self) -> bool {
        self.scheme_uri.is_some() || self.scheme_name.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(rename = "id")]
    pub identifier: String,
    #[serde(default)]
    pub titles: Vec<String>,
    #[serde(default)]
    pub descriptions: Vec<String>,
    #[serde(default)]
    pub subjects: Vec<SubjectTag>,
    #[serde(rename = "year", default, skip_serializing_if = "Option::is_none")]
    pub publication_year: Option<i32>,
}

impl RawRecord {
    pub fn new(identifier: impl Into<String>) -> Self {
        Self {
            identifier: identifier.into(),
            titles: Vec::new(),
            descriptions: Vec::new(),
            subjects: Vec::new(),
            publication_year: None,
        }
    }
}

/// True iff at least one subject carries a scheme URI or a scheme name.
pub fn is_qualified(record: &RawRecord) -> bool {
    record.subjects.iter().any(SubjectTag::qualified)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestStats {
    pub requests_made: u64,
    pub records_seen: u64,
    pub records_qualified: u64,
    pub resumption_tokens_followed: u64,
}

/// One `<record>` of a ListRecords response.
#[derive(Debug)]
pub enum PageEntry {
    Record(RawRecord),
    Deleted(String),
    Invalid(IngestError),
}

/// A parsed ListRecords response.
#[derive(Debug, Default)]
pub struct ListRecordsPage {
    pub entries: Vec<PageEntry>,
    pub resumption_token: Option<String>,
    /// OAI error code and message, if the response carried one.
    pub error: Option<(String, String)>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Field {
    OaiId,
    Doi,
    Title,
    Description,
    Subject,
    Year,
    Token,
    Error,
}

#[derive(Default)]
struct RecordBuilder {
    oai_id: Option<String>,
    doi: Option<String>,
    deleted: bool,
    titles: Vec<String>,
    descriptions: Vec<String>,
    subjects: Vec<SubjectTag>,
    year: Option<i32>,
}

impl RecordBuilder {
    fn finish(self) -> Result<RawRecord, IngestError> {
        let identifier = self.oai_id.or(self.doi).filter(|id| !id.is_empty()).ok_or(IngestError::MissingIdentifier)?;
        Ok(RawRecord {
            identifier,
            titles: self.titles,
            descriptions: self.descriptions,
            subjects: self.subjects,
            publication_year: self.year,
        })
    }
}

fn local_name(e: &BytesStart<'_>) -> String {
    String::from_utf8_lossy(e.local_name().as_ref()).into_owned()
}

fn attribute(e: &BytesStart<'_>, name: &str) -> Result<Option<String>, IngestError> {
    for attr in e.attributes() {
        let attr = attr.map_err(|err| IngestError::MalformedXml(err.to_string()))?;
        if attr.key.local_name().as_ref() == name.as_bytes() {
            let value = attr.unescape_value().map_err(|err| IngestError::MalformedXml(err.to_string()))?;
            let value = value.trim();
            return Ok((!value.is_empty()).then(|| value.to_string()));
        }
    }
    Ok(None)
}

/// Streaming state shared by the single-record and the ListRecords parsers.
struct Parser {
    stack: Vec<String>,
    current: Option<RecordBuilder>,
    field: Option<Field>,
    text: String,
    subject_attrs: (Option<String>, Option<String>, Option<String>),
    error_code: String,
    page: ListRecordsPage,
    record_depth: usize,
}

impl Parser {
    fn new() -> Self {
        Self {
            stack: Vec::new(),
            current: None,
            field: None,
            text: String::new(),
            subject_attrs: (None, None, None),
            error_code: String::new(),
            page: ListRecordsPage::default(),
            record_depth: 0,
        }
    }

    fn start(&mut self, e: &BytesStart<'_>) -> Result<(), IngestError> {
        let name = local_name(e);
        let parent = self.stack.last().cloned().unwrap_or_default();
        self.stack.push(name.clone());
        let depth = self.stack.len();
        match (name.as_str(), parent.as_str()) {
            ("record", "ListRecords" | "GetRecord" | "") => {
                self.current = Some(RecordBuilder::default());
                self.record_depth = depth;
            }
            ("resource", _) if self.current.is_none() => {
                self.current = Some(RecordBuilder::default());
                self.record_depth = depth;
            }
            ("header", _) => {
                if attribute(e, "status")?.as_deref() == Some("deleted") {
                    if let Some(b) = self.current.as_mut() {
                        b.deleted = true;
                    }
                }
            }
            ("identifier", "header") => self.begin(Field::OaiId),
            ("identifier", "resource") => self.begin(Field::Doi),
            ("title", "titles") if !self.stack.iter().any(|s| s == "relatedItem") => self.begin(Field::Title),
            ("description", "descriptions") => self.begin(Field::Description),
            ("subject", "subjects") => {
                self.subject_attrs =
                    (attribute(e, "schemeURI")?, attribute(e, "subjectScheme")?, attribute(e, "valueURI")?);
                self.begin(Field::Subject)
            }
            ("publicationYear", _) => self.begin(Field::Year),
            ("resumptionToken", _) => self.begin(Field::Token),
            ("error", "OAI-PMH") => {
                self.error_code = attribute(e, "code")?.unwrap_or_default();
                self.begin(Field::Error)
            }
            _ => {}
        }
        Ok(())
    }

    fn begin(&mut self, field: Field) {
        if self.field.is_none() {
            self.field = Some(field);
            self.text.clear();
        }
    }

    fn text(&mut self, s: &str) {
        if self.field.is_some() {
            self.text.push_str(s);
        }
    }

    fn end(&mut self) {
        let closes_record = self.current.is_some() && self.stack.len() == self.record_depth;
        let name = self.stack.pop().unwrap_or_default();
        let owner = match (self.field, name.as_str()) {
            (Some(Field::OaiId | Field::Doi), "identifier")
            | (Some(Field::Title), "title")
            | (Some(Field::Description), "description")
            | (Some(Field::Subject), "subject")
            | (Some(Field::Year), "publicationYear")
            | (Some(Field::Token), "resumptionToken")
            | (Some(Field::Error), "error") => self.field.take(),
            _ => None,
        };
        if let Some(field) = owner {
            let text = std::mem::take(&mut self.text);
            let value = text.trim();
            self.store(field, value);
        } else if closes_record {
            if let Some(builder) = self.current.take() {
                let entry = if builder.deleted {
                    PageEntry::Deleted(builder.oai_id.unwrap_or_default())
                } else {
                    match builder.finish() {
                        Ok(r) => PageEntry::Record(r),
                        Err(e) => PageEntry::Invalid(e),
                    }
                };
                self.page.entries.push(entry);
            }
        }
    }

    fn store(&mut self, field: Field, value: &str) {
        match field {
            Field::Token => {
                if !value.is_empty() {
                    self.page.resumption_token = Some(value.to_string());
                }
            }
            Field::Error => {
                self.page.error = Some((std::mem::take(&mut self.error_code), value.to_string()));
            }
            _ => {
                let Some(b) = self.current.as_mut() else { return };
                if value.is_empty() {
                    return;
                }
                match field {
                    Field::OaiId => b.oai_id = Some(value.to_string()),
                    Field::Doi => {
                        if b.doi.is_none() {
                            b.doi = Some(value.to_string())
                        }
                    }
                    Field::Title => b.titles.push(value.to_string()),
                    Field::Description => b.descriptions.push(value.to_string()),
                    Field::Subject => {
                        let (scheme_uri, scheme_name, value_uri) = std::mem::take(&mut self.subject_attrs);
                        b.subjects.push(SubjectTag { value: value.to_string(), scheme_uri, scheme_name, value_uri });
                    }
                    Field::Year => b.year = value.parse().ok(),
                    Field::Token | Field::Error => unreachable!(),
                }
            }
        }
    }

    fn run(mut self, xml: &str) -> Result<ListRecordsPage, IngestError> {
        let mut reader = Reader::from_str(xml);
        reader.config_mut().check_end_names = true;
        let malformed = |e: quick_xml::Error| IngestError::MalformedXml(e.to_string());
        loop {
            match reader.read_event().map_err(malformed)? {
                Event::Start(e) => self.start(&e)?,
                Event::Empty(e) => {
                    self.start(&e)?;
                    self.end();
                }
                Event::End(_) => self.end(),
                Event::Text(t) => {
                    let s = t.unescape().map_err(malformed)?;
                    self.text(&s);
                }
                Event::CData(t) => {
                    let s = String::from_utf8_lossy(&t).into_owned();
                    self.text(&s);
                }
                Event::Eof => break,
                _ => {}
            }
        }
        if !self.stack.is_empty() {
            return Err(IngestError::MalformedXml(format!("unclosed element <{}>", self.stack.last().unwrap())));
        }
        Ok(self.page)
    }
}

/// Parses one DataCite record. Accepts either a bare `<resource>` document or an
/// OAI-PMH `<record>` envelope around one.
pub fn parse_datacite_record(xml: &str) -> Result<RawRecord, IngestError> {
    let mut page = Parser::new().run(xml)?;
    match page.entries.pop() {
        Some(PageEntry::Record(r)) => Ok(r),
        Some(PageEntry::Invalid(e)) => Err(e),
        Some(PageEntry::Deleted(_)) | None => Err(IngestError::MissingIdentifier),
    }
}

/// Parses a complete OAI-PMH ListRecords response.
pub fn parse_list_records(xml: &str) -> Result<ListRecordsPage, IngestError> {
    Parser::new().run(xml)
}

/// Error raised by a [`Transport`].
#[derive(Debug, Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Fetches the body of an HTTP GET request.
pub trait Transport {
    fn get(&mut self, url: &str) -> Result<String, TransportError>;
}

#[cfg(feature = "http")]
pub struct HttpTransport {
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        Self { agent: ureq::AgentBuilder::new().timeout(timeout).build() }
    }
}

#[cfg(feature = "http")]
impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

#[cfg(feature = "http")]
impl Transport for HttpTransport {
    fn get(&mut self, url: &str) -> Result<String, TransportError> {
        let response = self.agent.get(url).call().map_err(|e| TransportError(e.to_string()))?;
        response.into_string().map_err(|e| TransportError(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct HarvestConfig {
    pub endpoint: String,
    pub metadata_prefix: String,
    pub from: Option<String>,
    pub until: Option<String>,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    /// Holds the last resumption token so an interrupted harvest can resume.
    pub cursor_file: Option<PathBuf>,
}

impl HarvestConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            metadata_prefix: "oai_datacite".into(),
            from: None,
            until: None,
            max_attempts: 5,
            initial_backoff: Duration::from_secs(1),
            cursor_file: None,
        }
    }

    fn initial_url(&self) -> Result<String, IngestError> {
        let mut url = url::Url::parse(&self.endpoint).map_err(|e| IngestError::InvalidUrl(e.to_string()))?;
        {
            let mut q = url.query_pairs_mut();
            q.append_pair("verb", "ListRecords");
            q.append_pair("metadataPrefix", &self.metadata_prefix);
            if let Some(from) = &self.from {
                q.append_pair("from", from);
            }
            if let Some(until) = &self.until {
                q.append_pair("until", until);
            }
        }
        Ok(url.into())
    }

    fn resume_url(&self, token: &str) -> Result<String, IngestError> {
        let mut url = url::Url::parse(&self.endpoint).map_err(|e| IngestError::InvalidUrl(e.to_string()))?;
        url.query_pairs_mut().append_pair("verb", "ListRecords").append_pair("resumptionToken", token);
        Ok(url.into())
    }
}

fn fetch_with_retry<T: Transport>(
    transport: &mut T,
    url: &str,
    cfg: &HarvestConfig,
    stats: &mut HarvestStats,
) -> Result<String, IngestError> {
    let attempts = cfg.max_attempts.max(1);
    let mut delay = cfg.initial_backoff;
    let mut last = String::new();
    for attempt in 1..=attempts {
        stats.requests_made += 1;
        match transport.get(url) {
            Ok(body) => return Ok(body),
            Err(e) => {
                last = e.0;
                if attempt < attempts {
                    thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
        }
    }
    Err(IngestError::EndpointUnreachable { attempts, last })
}

fn write_cursor(path: &Path, token: &str) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, token)?;
    fs::rename(tmp, path)
}

/// Runs a ListRecords harvest, following resumption tokens until the list is
/// exhausted. Each qualified record reaches `sink` once per run; deleted and
/// unqualified records are dropped.
pub fn harvest<T, S>(transport: &mut T, cfg: &HarvestConfig, mut sink: S) -> Result<HarvestStats, IngestError>
where
    T: Transport,
    S: FnMut(RawRecord) -> io::Result<()>,
{
    let mut stats = HarvestStats::default();
    let mut seen_ids = HashSet::new();

    let resumed = match &cfg.cursor_file {
        Some(path) if path.exists() => {
            let token = fs::read_to_string(path)?;
            let token = token.trim();
            (!token.is_empty()).then(|| token.to_string())
        }
        _ => None,
    };
    let mut url = match &resumed {
        Some(token) => cfg.resume_url(token)?,
        None => cfg.initial_url()?,
    };

    loop {
        let body = fetch_with_retry(transport, &url, cfg, &mut stats)?;
        let page = parse_list_records(&body)?;
        if let Some((code, message)) = page.error {
            if code == "noRecordsMatch" {
                break;
            }
            return Err(IngestError::ProtocolError { code, message });
        }
        for entry in page.entries {
            let PageEntry::Record(record) = entry else { continue };
            if !seen_ids.insert(record.identifier.clone()) {
                continue;
            }
            stats.records_seen += 1;
            if is_qualified(&record) {
                stats.records_qualified += 1;
                sink(record)?;
            }
        }
        match page.resumption_token {
            Some(token) => {
                if let Some(path) = &cfg.cursor_file {
                    write_cursor(path, &token)?;
                }
                stats.resumption_tokens_followed += 1;
                url = cfg.resume_url(&token)?;
            }
            None => break,
        }
    }

    if let Some(path) = &cfg.cursor_file {
        if path.exists() {
            fs::remove_file(path)?;
        }
    }
    Ok(stats)
}

/// Offline counterpart of [`harvest`] for a saved ListRecords response or a bare
/// DataCite document. Deleted and malformed records are skipped.
pub fn ingest_document<F>(xml: &str, mut sink: F) -> Result<HarvestStats, IngestError>
where
    F: FnMut(RawRecord) -> io::Result<()>,
{
    let page = parse_list_records(xml)?;
    if let Some((code, message)) = page.error {
        if code != "noRecordsMatch" {
            return Err(IngestError::ProtocolError { code, message });
        }
    }
    let mut stats = HarvestStats::default();
    let mut seen_ids = HashSet::new();
    for entry in page.entries {
        let PageEntry::Record(record) = entry else { continue };
        if !seen_ids.insert(record.identifier.clone()) {
            continue;
        }
        stats.records_seen += 1;
        if is_qualified(&record) {
            stats.records_qualified += 1;
            sink(record)?;
        }
    }
    Ok(stats)
}
