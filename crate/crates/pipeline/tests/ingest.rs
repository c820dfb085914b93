use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, TimeZone, Utc};
use ffoundry_core::SeedSource;
use ffoundry_pipeline::config::{SeedConfig, SeedSourceKind};
use ffoundry_pipeline::ingest::recorded::{RecordedResponse, RecordedTransport};
use ffoundry_pipeline::ingest::{self, gdelt, mediacloud, IngestError, SeedQuery};
use serde_json::json;

fn now() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 5, 12, 0, 0).unwrap()
}

fn page(title: &str) -> String {
    format!(
        "<html><head><title>{title} | Site</title></head><body><nav>Home News</nav>\
         <article><h1>{title}</h1><p>{title} was reported today by several outlets.</p>\
         <p>Officials said more details would follow next week.</p></article>\
         <footer>Copyright</footer></body></html>"
    )
}

fn ok(url: impl Into<String>, body: impl Into<String>) -> RecordedResponse {
    RecordedResponse {
        url: url.into(),
        status: 200,
        body: body.into(),
    }
}

const TYPES: [&str; 5] = ["conflict", "economy", "elections", "health", "climate"];

fn gdelt_config(max: usize) -> SeedConfig {
    let mut c = SeedConfig {
        source: SeedSourceKind::Gdelt,
        max_seeds: max,
        lookback_days: Some(14),
        ..SeedConfig::default()
    };
    c.gdelt.event_queries = TYPES.iter().map(|t| (t.to_string(), format!("{t} news"))).collect::<BTreeMap<_, _>>();
    c
}

/// Five event-type listings with six articles each; every article is served.
fn gdelt_fixture(cfg: &SeedConfig) -> Vec<RecordedResponse> {
    let mut out = Vec::new();
    for (t, q) in &cfg.gdelt.event_queries {
        let url = gdelt::query_url(&cfg.gdelt.endpoint, q, now() - Duration::days(14), now(), cfg.gdelt.max_records).unwrap();
        let articles: Vec<_> = (0..6)
            .map(|i| json!({"url": format!("https://{t}.example/a{i}"), "title": format!("{t} story {i}"), "sourcecountry": if i % 2 == 0 { "France" } else { "Kenya" }}))
            .collect();
        out.push(ok(url, json!({ "articles": articles }).to_string()));
        for i in 0..6 {
            out.push(ok(format!("https://{t}.example/a{i}"), page(&format!("{t} story {i}"))));
        }
    }
    out
}

fn query<'a>(config: &'a SeedConfig, dir: &'a std::path::Path) -> SeedQuery<'a> {
    SeedQuery {
        config,
        base_dir: dir,
        now: now(),
        seed: 11,
    }
}

#[test]
fn gdelt_harvest_is_capped_and_stratified() {
    let cfg = gdelt_config(10);
    let http = RecordedTransport::new(gdelt_fixture(&cfg));
    let seeds = ingest::fetch_gdelt(&query(&cfg, std::path::Path::new(".")), &http).unwrap();
    assert_eq!(seeds.len(), 10);
    let types: BTreeSet<_> = seeds.iter().map(|s| s.extra["event_type"].as_str().unwrap().to_string()).collect();
    assert!(types.len() >= 3, "{types:?}");
    for s in &seeds {
        assert_eq!(s.source, SeedSource::Gdelt);
        assert!(s.content.contains("was reported today"));
        assert!(!s.content.contains("Copyright"));
        assert!(s.url.as_deref().unwrap().starts_with("https://"));
    }
    let listing_calls = http.requests().iter().filter(|u| u.contains("mode=ArtList")).count();
    assert_eq!(listing_calls, 5);
}

#[test]
fn gdelt_order_depends_only_on_the_seed() {
    let cfg = gdelt_config(7);
    let dir = std::path::Path::new(".");
    let ids = |seed| {
        let http = RecordedTransport::new(gdelt_fixture(&cfg));
        let q = SeedQuery { seed, ..query(&cfg, dir) };
        ingest::fetch_gdelt(&q, &http).unwrap().into_iter().map(|s| s.id).collect::<Vec<_>>()
    };
    assert_eq!(ids(3), ids(3));
}

#[test]
fn dead_links_are_skipped_and_replaced() {
    let cfg = gdelt_config(10);
    let fixture: Vec<_> = gdelt_fixture(&cfg).into_iter().filter(|r| !r.url.ends_with("/a0")).collect();
    let http = RecordedTransport::new(fixture);
    let seeds = ingest::fetch_gdelt(&query(&cfg, std::path::Path::new(".")), &http).unwrap();
    assert_eq!(seeds.len(), 10);
    assert!(seeds.iter().all(|s| !s.url.as_deref().unwrap().ends_with("/a0")));
}

#[test]
fn zero_max_seeds_is_rejected() {
    let cfg = gdelt_config(0);
    let err = ingest::fetch_gdelt(&query(&cfg, std::path::Path::new(".")), &RecordedTransport::default()).unwrap_err();
    assert!(matches!(err, IngestError::Precondition(_)));
}

#[test]
fn no_fetchable_article_is_an_empty_harvest() {
    let cfg = gdelt_config(10);
    let listings: Vec<_> = gdelt_fixture(&cfg).into_iter().filter(|r| r.url.contains("ArtList")).collect();
    let err = ingest::fetch_gdelt(&query(&cfg, std::path::Path::new(".")), &RecordedTransport::new(listings)).unwrap_err();
    assert!(matches!(err, IngestError::EmptyHarvest(_)), "{err:?}");
}

#[test]
fn unreachable_gdelt_is_reported() {
    let cfg = gdelt_config(10);
    let err = ingest::fetch_gdelt(&query(&cfg, std::path::Path::new(".")), &RecordedTransport::default()).unwrap_err();
    assert!(matches!(err, IngestError::UpstreamUnavailable(_)), "{err:?}");
}

fn mediacloud_config(max: usize, key_var: &str) -> SeedConfig {
    let mut c = SeedConfig {
        source: SeedSourceKind::Mediacloud,
        max_seeds: max,
        ..SeedConfig::default()
    };
    c.mediacloud.auth_env = key_var.to_string();
    c.mediacloud.query = "election".into();
    c
}

#[test]
fn mediacloud_lists_five_days_and_fetches_stories() {
    let var = "FFOUNDRY_TEST_MC_KEY_OK";
    std::env::set_var(var, "secret");
    let cfg = mediacloud_config(5, var);
    let list_url = mediacloud::query_url(&cfg.mediacloud, now(), 5, None).unwrap();
    let stories: Vec<_> = (0..8)
        .map(|i| json!({"url": format!("https://paper{i}.example/story"), "title": format!("Story {i}"), "media_name": "paper"}))
        .collect();
    let mut fixture = vec![ok(list_url, json!({ "stories": stories }).to_string())];
    fixture.extend((0..8).map(|i| ok(format!("https://paper{i}.example/story"), page(&format!("Story {i}")))));
    let http = RecordedTransport::new(fixture);

    let seeds = ingest::fetch_mediacloud(&query(&cfg, std::path::Path::new(".")), &http).unwrap();
    assert_eq!(seeds.len(), 5);
    assert!(seeds.iter().all(|s| s.source == SeedSource::Mediacloud));

    let listing = &http.requests()[0];
    let params: BTreeMap<String, String> = url::Url::parse(listing).unwrap().query_pairs().into_owned().collect();
    assert_eq!(params["start"], "2024-12-31");
    assert_eq!(params["end"], "2025-01-05");
    assert_eq!(params["q"], "election");
}

#[test]
fn mediacloud_without_key_names_the_variable() {
    let var = "FFOUNDRY_TEST_MC_KEY_UNSET";
    std::env::remove_var(var);
    let cfg = mediacloud_config(5, var);
    let err = ingest::fetch_mediacloud(&query(&cfg, std::path::Path::new(".")), &RecordedTransport::default()).unwrap_err();
    let IngestError::UpstreamUnavailable(msg) = err else {
        panic!("expected unavailable, got {err:?}");
    };
    assert!(msg.contains(var));
}

#[test]
fn text_seeds_from_directory_and_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs");
    std::fs::create_dir(&docs).unwrap();
    std::fs::write(docs.join("b.txt"), "Second article body.").unwrap();
    std::fs::write(docs.join("a.txt"), "First article body.").unwrap();
    std::fs::write(docs.join("empty.txt"), "   \n").unwrap();
    let seeds = ingest::load_text_seeds(&docs, 1000, now()).unwrap();
    assert_eq!(seeds.len(), 2);
    assert_eq!(seeds[0].content, "First article body.");
    assert_eq!(seeds[0].extra["file"], "a.txt");

    let jsonl = dir.path().join("seeds.jsonl");
    std::fs::write(
        &jsonl,
        "{\"content\": \"One.\", \"url\": \"https://x.example/1\", \"lang\": \"en\"}\n\n{\"text\": \"Two.\"}\n",
    )
    .unwrap();
    let seeds = ingest::load_text_seeds(&jsonl, 1000, now()).unwrap();
    assert_eq!(seeds.len(), 2);
    assert_eq!(seeds[0].url.as_deref(), Some("https://x.example/1"));
    assert_eq!(seeds[0].extra["lang"], "en");
    assert_eq!(seeds[1].content, "Two.");

    // Same content gives the same id on reload.
    let again = ingest::load_text_seeds(&jsonl, 1000, now()).unwrap();
    assert_eq!(seeds[1].id, again[1].id);
}

#[test]
fn text_ingest_caps_and_sorts() {
    let dir = tempfile::tempdir().unwrap();
    let lines: String = (0..6).map(|i| format!("{{\"content\": \"Article {i}.\"}}\n")).collect();
    std::fs::write(dir.path().join("s.jsonl"), lines).unwrap();
    let cfg = SeedConfig {
        path: Some("s.jsonl".into()),
        max_seeds: 4,
        ..SeedConfig::default()
    };
    let seeds = ingest::ingest(&query(&cfg, dir.path())).unwrap();
    assert_eq!(seeds.len(), 4);
    assert!(seeds.windows(2).all(|w| w[0].id < w[1].id));
}

#[test]
fn long_articles_are_truncated_with_a_marker() {
    let body = "word ".repeat(5000);
    let t = ingest::truncate(&body, 1000);
    assert!(t.chars().count() <= 1000);
    assert!(t.ends_with(ingest::TRUNCATION_MARKER));
}
