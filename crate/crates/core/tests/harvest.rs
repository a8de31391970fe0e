//! Harvesting against a local mock OAI-PMH endpoint.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use rdclass::ingest::{harvest, HarvestConfig, HarvestStats, HttpTransport, IngestError, RawRecord};

const HEAD: &str = r#"<?xml version="1.0" encoding="UTF-8"?><OAI-PMH xmlns="http://www.openarchives.org/OAI/2.0/"><responseDate>2021-01-01T00:00:00Z</responseDate>"#;

fn record(id: &str, scheme: Option<&str>) -> String {
    let attr = scheme.map(|s| format!(r#" subjectScheme="{s}""#)).unwrap_or_default();
    format!(
        r#"<record><header><identifier>{id}</identifier></header><metadata><resource xmlns="http://datacite.org/schema/kernel-4"><titles><title>Title of {id}</title></titles><subjects><subject{attr}>0401</subject></subjects></resource></metadata></record>"#
    )
}

fn page(records: &[String], token: Option<&str>) -> String {
    let token = token.map(|t| format!("<resumptionToken>{t}</resumptionToken>")).unwrap_or_default();
    format!("{HEAD}<ListRecords>{}{token}</ListRecords></OAI-PMH>", records.concat())
}

fn error(code: &str) -> String {
    format!(r#"{HEAD}<error code="{code}">problem</error></OAI-PMH>"#)
}

/// Serves `respond(url, request_number)` until the test ends.
fn serve<F>(respond: F) -> (String, Arc<AtomicUsize>)
where
    F: Fn(&str, usize) -> (u16, String) + Send + 'static,
{
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let addr = server.server_addr().to_ip().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for req in server.incoming_requests() {
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let (status, body) = respond(req.url(), n);
            let _ = req.respond(tiny_http::Response::from_string(body).with_status_code(status));
        }
    });
    (format!("http://{addr}/oai"), hits)
}

fn run(endpoint: &str, cfg: impl FnOnce(&mut HarvestConfig)) -> (Result<HarvestStats, IngestError>, Vec<RawRecord>) {
    let mut c = HarvestConfig::new(endpoint);
    c.initial_backoff = Duration::from_millis(5);
    cfg(&mut c);
    let mut out = Vec::new();
    let mut transport = HttpTransport::new(Duration::from_secs(10));
    let r = harvest(&mut transport, &c, |rec| {
        out.push(rec);
        Ok(())
    });
    (r, out)
}

#[test]
fn no_records_match_is_an_empty_harvest() {
    let (url, _) = serve(|_, _| (200, error("noRecordsMatch")));
    let (stats, recs) = run(&url, |_| {});
    let stats = stats.unwrap();
    assert_eq!(stats.requests_made, 1);
    assert_eq!(stats.records_seen, 0);
    assert!(recs.is_empty());
}

fn two_pages(url: &str, _: usize) -> (u16, String) {
    if url.contains("resumptionToken=tok%2F1") {
        (200, page(&[record("c", Some("ANZSRC"))], None))
    } else {
        assert!(url.contains("verb=ListRecords") && url.contains("metadataPrefix=oai_datacite"), "{url}");
        (200, page(&[record("a", Some("ANZSRC")), record("b", None)], Some("tok/1")))
    }
}

#[test]
fn follows_resumption_tokens() {
    let (url, _) = serve(two_pages);
    let (stats, recs) = run(&url, |_| {});
    let stats = stats.unwrap();
    assert_eq!(
        stats,
        HarvestStats { requests_made: 2, records_seen: 3, records_qualified: 2, resumption_tokens_followed: 1 }
    );
    let ids: Vec<&str> = recs.iter().map(|r| r.identifier.as_str()).collect();
    assert_eq!(ids, ["a", "c"]);
}

#[test]
fn protocol_errors_surface() {
    let (url, _) = serve(|_, _| (200, error("badArgument")));
    let (stats, _) = run(&url, |_| {});
    assert!(matches!(stats, Err(IngestError::ProtocolError { code, .. }) if code == "badArgument"));
}

#[test]
fn transient_failures_are_retried() {
    let (url, hits) = serve(|u, n| if n < 2 { (503, "busy".into()) } else { two_pages(u, n) });
    let (stats, _) = run(&url, |_| {});
    let stats = stats.unwrap();
    assert_eq!(stats.requests_made, 4);
    assert_eq!(stats.records_qualified, 2);
    assert_eq!(hits.load(Ordering::SeqCst), 4);
}

#[test]
fn gives_up_after_max_attempts() {
    let (url, hits) = serve(|_, _| (500, "down".into()));
    let (stats, _) = run(&url, |c| c.max_attempts = 3);
    assert!(matches!(stats, Err(IngestError::EndpointUnreachable { attempts: 3, .. })));
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn resumes_from_cursor_file() {
    let dir = tempfile::tempdir().unwrap();
    let cursor = dir.path().join("cursor");
    std::fs::write(&cursor, "tok/1\n").unwrap();
    let (url, _) = serve(two_pages);
    let (stats, recs) = run(&url, |c| c.cursor_file = Some(cursor.clone()));
    assert_eq!(stats.unwrap().records_seen, 1);
    assert_eq!(recs[0].identifier, "c");
    assert!(!cursor.exists());
}
