use ffoundry_core::{FinalResolution, ForecastRecord, ProtoQuestion, Question, ResolutionVote, Strategy};
use ffoundry_pipeline::stages::dedup::DedupRow;
use ffoundry_pipeline::{run_stage, Config, Gateway, RunDir, RunError, Stage, StageOptions, StageSummary};
use ffoundry_pipeline::prompts::TemplateId;
use tempfile::TempDir;

fn quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// Builds a mock fixture file one rule at a time.
#[derive(Default)]
struct Fixture(String);

impl Fixture {
    fn rule(&mut self, template: &str, matches: &[&str], text: &str) -> &mut Self {
        self.rule_with(template, matches, text, "")
    }

    fn rule_with(&mut self, template: &str, matches: &[&str], text: &str, extra: &str) -> &mut Self {
        let m: Vec<String> = matches.iter().map(|s| quote(s)).collect();
        self.0.push_str(&format!(
            "[[response]]\ntemplate = {}\nmatch = [{}]\ntext = {}\n{extra}\n",
            quote(template),
            m.join(", "),
            quote(text)
        ));
        self
    }

    /// Generic answers that let every question through every stage.
    fn permissive(&mut self) -> &mut Self {
        self.rule("background_research", &[], "Nothing further.")
            .rule("quality", &[], "rationale_quality: fine\nfinal_answer_quality: great")
            .rule("ambiguity", &[], "rationale_ambiguity: clear\nfinal_answer_ambiguity: great")
            .rule(
                "resolvability",
                &[],
                "rationale_resolvability: public\nfinal_answer_resolvability: very certainly yes",
            )
            .rule("forecast_verifier", &[], "rationale_forecast: unsure\nfinal_answer_forecast: 40")
            .rule("deduplication", &[], "Different.\nduplicate: no")
            .rule("topic_label", &[], "label: News")
            .rule("similarity", &[], "similarity: 1")
            .rule("research", &[], "Final Answer: Sources disagree.")
            .rule("forecast", &[], "final_answer_forecast: 50")
            .rule("resolution_v1", &[], "resolution: True\nresolution_derivation: Confirmed.")
            .rule(
                "resolution_v2",
                &[],
                "resolution: True\nresolution_derivation: Confirmed.\nresolution_weaknesses: None.",
            )
    }

    /// One seed that yields one proto that refines to `title`.
    fn question(&mut self, seed_marker: &str, title: &str, background: &str) -> &mut Self {
        let proto = format!("Proto for {seed_marker}?");
        self.rule(
            "proto_generation",
            &[seed_marker],
            &format!("QUESTION: {proto}\nRATIONALE: Dated outcome."),
        )
        .rule("refinement", &[&proto], &refined(title, background, "2025-01-10", "2025-03-15"))
    }
}

fn refined(title: &str, background: &str, start: &str, end: &str) -> String {
    format!(
        "title: {title}\nbackground: {background}\nresolution_criteria: Resolves YES if credible reports confirm it.\n\
         window_start: {start}\nwindow_end: {end}"
    )
}

struct Harness {
    _dir: TempDir,
    cfg: Config,
    run: RunDir,
    gw: Gateway,
}

const BASE_CONFIG: &str = r#"
[run]
window_start = "2025-01-06"
window_end = "2025-03-31"
seed = 3
workers = 3
clock = "2025-01-05T12:00:00Z"

[backends.mock]
kind = "mock"

[backends.mock_c]
kind = "mock"

[backends.mock_t]
kind = "mock"

[mock]
fixtures = ["mock.toml"]

[seeds]
source = "text"
path = "seeds.jsonl"
"#;

impl Harness {
    fn new(seed_markers: &[&str], fixture: &Fixture, extra_config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let seeds: String = seed_markers
            .iter()
            .map(|m| format!("{}\n", serde_json::json!({ "content": format!("{m}\n\nArticle about {m}.") })))
            .collect();
        std::fs::write(dir.path().join("seeds.jsonl"), seeds).unwrap();
        std::fs::write(dir.path().join("mock.toml"), &fixture.0).unwrap();
        let roles = if extra_config.contains("[roles]") {
            ""
        } else {
            "[roles]\ndefault = \"mock\"\nresolver_c = \"mock_c\"\ntiebreaker = \"mock_t\"\n"
        };
        let forecast = if extra_config.contains("[forecast]") { "" } else { "[forecast]\nsubq_sample = 0\n" };
        let config_path = dir.path().join("config.toml");
        std::fs::write(&config_path, format!("{BASE_CONFIG}\n{roles}\n{forecast}\n{extra_config}")).unwrap();
        let cfg = Config::load(&config_path).unwrap();
        let run = RunDir::open(&dir.path().join("run")).unwrap();
        let gw = Gateway::from_config(&cfg, &run.transcripts()).unwrap();
        Self { _dir: dir, cfg, run, gw }
    }

    fn stage_with(&self, stage: Stage, opts: &StageOptions) -> Result<StageSummary, RunError> {
        run_stage(stage, &self.cfg, &self.run, &self.gw, opts)
    }

    fn stage(&self, stage: Stage) -> StageSummary {
        self.stage_with(stage, &as_of()).unwrap()
    }

    fn through(&self, last: Stage) {
        for s in Stage::ALL {
            if s > last {
                break;
            }
            self.stage(s);
        }
    }

    fn read<T: serde::de::DeserializeOwned>(&self, name: &str) -> Vec<T> {
        self.run.read_jsonl(name).unwrap()
    }

    fn path(&self, name: &str) -> std::path::PathBuf {
        self.run.path(name)
    }
}

fn as_of() -> StageOptions {
    StageOptions {
        as_of: Some(chrono::NaiveDate::from_ymd_opt(2025, 4, 1).unwrap()),
        ..StageOptions::default()
    }
}

const TOPICS: [(&str, &str); 6] = [
    ("Will Norway lift its salmon export quota by March 2025?", "Fisheries regulators review salmon quotas."),
    ("Will Kenya open the Lamu coal plant by March 2025?", "Energy planners debate coal generation near Lamu."),
    ("Will Chile elect a new Senate president by March 2025?", "Chilean senators vote on chamber leadership."),
    ("Will Portugal ban short term rentals in Lisbon by March 2025?", "Housing activists oppose tourist apartments."),
    ("Will Vietnam launch its first radar satellite by March 2025?", "Space engineers prepare an orbital radar mission."),
    ("Will Peru declare a drought emergency in Puno by March 2025?", "Farmers near Lake Titicaca report failing harvests."),
];

fn standard(n: usize) -> (Vec<String>, Fixture) {
    let mut f = Fixture::default();
    let markers: Vec<String> = (0..n).map(|i| format!("SEED-{i:02}")).collect();
    for (m, (t, b)) in markers.iter().zip(TOPICS) {
        f.question(m, t, b);
    }
    f.permissive();
    (markers, f)
}

fn markers(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn generation_keeps_at_most_seven_protos_and_accepts_empty_lists() {
    let mut f = Fixture::default();
    let nine: String = (1..=9).map(|i| format!("QUESTION: Will event {i} happen?\nRATIONALE: Reason {i}.\n")).collect();
    f.rule("proto_generation", &["SEED-A"], &nine)
        .rule("proto_generation", &["SEED-B"], "There are no suitable questions in this article.");
    let h = Harness::new(&["SEED-A", "SEED-B"], &f, "");
    h.stage(Stage::Seed);
    let s = h.stage(Stage::Generate);
    assert_eq!((s.processed, s.rejected, s.failed), (2, 0, 0));
    let protos: Vec<ProtoQuestion> = h.read("protos.jsonl");
    assert_eq!(protos.len(), 7);
    let mut titles: Vec<&str> = protos.iter().map(|p| p.title.as_str()).collect();
    titles.sort();
    assert_eq!(titles.first(), Some(&"Will event 1 happen?"));
    assert_eq!(titles.last(), Some(&"Will event 7 happen?"));
}

#[test]
fn refinement_enforces_window_and_criteria() {
    let mut f = Fixture::default();
    let protos = "QUESTION: Good one?\nRATIONALE: r\nQUESTION: Too late?\nRATIONALE: r\n\
                  QUESTION: No criteria?\nRATIONALE: r\nQUESTION: Fixed on retry?\nRATIONALE: r";
    f.rule("proto_generation", &["SEED-A"], protos)
        .rule("refinement", &["Good one?"], &refined("Will the good thing happen by March 2025?", "b", "2025-01-10", "2025-03-01"))
        .rule("refinement", &["Too late?"], &refined("Will the late thing happen by 2026?", "b", "2025-01-10", "2026-06-30"))
        .rule(
            "refinement",
            &["No criteria?"],
            "title: Will the vague thing happen?\nbackground: b\nresolution_criteria: \nwindow_start: 2025-01-10\nwindow_end: 2025-03-01",
        )
        .rule("refinement", &["Fixed on retry?"], &refined("Will the fixed thing happen?", "b", "2024-06-01", "2024-07-01"))
        .rule(
            "refinement",
            &["Fixed on retry?", "previous answer was rejected"],
            &refined("Will the fixed thing happen by March 2025?", "b", "2025-01-10", "2025-02-28"),
        )
        .permissive();
    let h = Harness::new(&["SEED-A"], &f, "");
    h.through(Stage::Generate);
    let s = h.stage(Stage::Refine);
    assert_eq!((s.processed, s.rejected), (4, 2));
    let qs: Vec<Question> = h.read("questions.jsonl");
    let mut titles: Vec<&str> = qs.iter().map(|q| q.title.as_str()).collect();
    titles.sort();
    assert_eq!(
        titles,
        ["Will the fixed thing happen by March 2025?", "Will the good thing happen by March 2025?"]
    );
    assert!(qs.iter().all(|q| q.extra["additional_information"] == "Nothing further."));
    let rejects = std::fs::read_to_string(h.path("rejects.jsonl")).unwrap();
    assert_eq!(rejects.lines().filter(|l| l.contains("\"refine\"")).count(), 2);
}

#[test]
fn verification_gate_and_trivial_forecasts() {
    let (m, mut f) = standard(4);
    f.rule("quality", &[TOPICS[0].0], "rationale_quality: meh\nfinal_answer_quality: bad")
        .rule("forecast_verifier", &[TOPICS[1].0], "rationale_forecast: sure\nfinal_answer_forecast: 99");
    let h = Harness::new(&markers(&m), &f, "");
    h.through(Stage::Refine);
    let s = h.stage(Stage::Verify);
    assert_eq!(s.failed, 0);
    let gates: Vec<serde_json::Value> = h.read("gate_results.jsonl");
    assert_eq!(gates.len(), 4);
    assert_eq!(gates.iter().filter(|g| g["passed"] == true).count(), 3);
    assert_eq!(gates.iter().filter(|g| g["trivial_flag"] == true).count(), 1);
}

#[test]
fn dedup_removes_only_confirmed_pairs_within_a_cluster() {
    let near = [
        "Will the city council approve the harbour bridge budget by March 2025?",
        "Will the city council approve the harbour bridge budget plan by March 2025?",
        "Will the city council approve the harbour bridge budget proposal by March 2025?",
    ];
    let bg = "Councillors debate funding for the harbour bridge renovation.";
    let mut f = Fixture::default();
    for (i, t) in near.iter().enumerate() {
        f.question(&format!("SEED-N{i}"), t, bg);
    }
    f.question("SEED-X", TOPICS[0].0, TOPICS[0].1)
        .question("SEED-Y", TOPICS[1].0, TOPICS[1].1)
        .rule("deduplication", &[near[0], near[1]], "Same event.\nduplicate: yes")
        .permissive();
    let h = Harness::new(&["SEED-N0", "SEED-N1", "SEED-N2", "SEED-X", "SEED-Y"], &f, "");
    h.through(Stage::Verify);
    let s = h.stage(Stage::Dedup);
    assert_eq!(s.failed, 0);

    let report: Vec<DedupRow> = h.read("dedup_report.jsonl");
    let pairs: Vec<_> = report
        .iter()
        .filter_map(|r| match r {
            DedupRow::Pair { cluster_id, duplicate, .. } => Some((*cluster_id, *duplicate)),
            _ => None,
        })
        .collect();
    assert_eq!(pairs.len(), 3, "{report:?}");
    assert!(pairs.iter().all(|(c, _)| *c == pairs[0].0));
    assert_eq!(pairs.iter().filter(|(_, d)| *d == Some(true)).count(), 1);
    let removed = report.iter().filter(|r| matches!(r, DedupRow::Removed { .. })).count();
    assert_eq!(removed, 1);

    let finals: Vec<Question> = h.read("final_questions.jsonl");
    assert_eq!(finals.len(), 4);
    let kept_near = finals.iter().filter(|q| near.contains(&q.title.as_str())).count();
    assert_eq!(kept_near, 2);
    assert!(finals.iter().any(|q| q.title == near[2]));
}

#[test]
fn forecasts_parse_zero_and_never_research() {
    let (m, mut f) = standard(3);
    f.rule("forecast", &[TOPICS[0].0], "Very unlikely.\nfinal_answer_forecast: 0")
        .rule("forecast", &[TOPICS[1].0], "final_answer_forecast: 73%");
    let h = Harness::new(&markers(&m), &f, "");
    h.through(Stage::Research);
    let research_before = h.gw.stats().research_requests();
    assert_eq!(h.gw.stats().requests_for(TemplateId::Research), 3);
    let s = h.stage(Stage::Forecast);
    assert_eq!((s.processed, s.failed), (3, 0));
    assert_eq!(h.gw.stats().research_requests(), research_before);

    let fs: Vec<ForecastRecord> = h.read("forecasts.jsonl");
    let prob = |title: &str| {
        let qs: Vec<Question> = h.read("final_questions.jsonl");
        let id = &qs.iter().find(|q| q.title == title).unwrap().id;
        fs.iter().find(|f| &f.question_id == id).unwrap().probability
    };
    assert_eq!(prob(TOPICS[0].0), Some(0.0));
    assert_eq!(prob(TOPICS[1].0), Some(0.73));
    assert_eq!(prob(TOPICS[2].0), Some(0.5));
}

#[test]
fn tiebreaker_runs_only_on_split_votes() {
    let (m, mut f) = standard(3);
    f.rule_with(
        "resolution_v2",
        &[TOPICS[1].0],
        "resolution: False\nresolution_derivation: Not confirmed.\nresolution_weaknesses: Thin sourcing.",
        "backend = \"mock_c\"",
    );
    let h = Harness::new(&markers(&m), &f, "");
    h.through(Stage::Dedup);
    let s = h.stage(Stage::Resolve);
    assert_eq!((s.processed, s.failed, s.parked), (3, 0, 0));
    assert_eq!(h.gw.stats().requests_by("mock_t", TemplateId::ResolutionV2), 1);
    assert_eq!(h.gw.stats().requests_by("mock_c", TemplateId::ResolutionV2), 3);
    let votes: Vec<ResolutionVote> = h.read("votes.jsonl");
    assert_eq!(votes.len(), 3 * 3 + 1);
    let res: Vec<FinalResolution> = h.read("resolutions.jsonl");
    assert_eq!(res.len(), 3);
    assert_eq!(res.iter().filter(|r| r.votes.len() == 4).count(), 1);
}

#[test]
fn questions_not_yet_due_are_left_alone() {
    let (m, f) = standard(2);
    let h = Harness::new(&markers(&m), &f, "");
    h.through(Stage::Dedup);
    let early = StageOptions {
        as_of: Some(chrono::NaiveDate::from_ymd_opt(2025, 3, 10).unwrap()),
        ..StageOptions::default()
    };
    let s = h.stage_with(Stage::Resolve, &early).unwrap();
    assert_eq!(s.processed, 0);
    assert!(h.read::<FinalResolution>("resolutions.jsonl").is_empty());
}

#[test]
fn rerun_processes_nothing_and_changes_nothing() {
    let (m, f) = standard(4);
    let h = Harness::new(&markers(&m), &f, "");
    h.through(Stage::Verify);
    let before = std::fs::read(h.path("gate_results.jsonl")).unwrap();
    let calls = h.gw.stats().requests_for(TemplateId::Quality);
    let s = h.stage(Stage::Verify);
    assert_eq!((s.processed, s.skipped), (0, 4));
    assert_eq!(h.gw.stats().requests_for(TemplateId::Quality), calls);
    assert_eq!(std::fs::read(h.path("gate_results.jsonl")).unwrap(), before);
}

#[test]
fn limit_leaves_the_rest_pending() {
    let (m, f) = standard(6);
    let h = Harness::new(&markers(&m), &f, "");
    h.through(Stage::Refine);
    let limited = StageOptions {
        limit: Some(5),
        ..as_of()
    };
    let s = h.stage_with(Stage::Verify, &limited).unwrap();
    assert_eq!((s.processed, s.pending), (5, 1));
    let s = h.stage(Stage::Verify);
    assert_eq!((s.processed, s.skipped, s.pending), (1, 5, 0));
    assert_eq!(h.read::<serde_json::Value>("gate_results.jsonl").len(), 6);
}

#[test]
fn edited_upstream_output_is_detected() {
    let (m, f) = standard(2);
    let h = Harness::new(&markers(&m), &f, "");
    h.through(Stage::Refine);
    let p = h.path("questions.jsonl");
    let mut text = std::fs::read_to_string(&p).unwrap();
    text.push('\n');
    std::fs::write(&p, text).unwrap();
    let err = h.stage_with(Stage::Verify, &as_of()).unwrap_err();
    assert!(matches!(err, RunError::MissingUpstream { ref stage, .. } if stage == "refine"), "{err}");
}

#[test]
fn missing_upstream_marker_is_reported() {
    let (m, f) = standard(1);
    let h = Harness::new(&markers(&m), &f, "");
    let err = h.stage_with(Stage::Score, &as_of()).unwrap_err();
    assert!(matches!(err, RunError::MissingUpstream { .. }), "{err}");
}

#[test]
fn exhausted_retries_fail_the_item_until_a_rerun() {
    let (m, mut f) = standard(3);
    f.rule_with("forecast", &[TOPICS[2].0], "final_answer_forecast: 20", "fail_times = 4");
    let h = Harness::new(&markers(&m), &f, "");
    h.through(Stage::Research);
    let s = h.stage(Stage::Forecast);
    assert_eq!((s.processed, s.failed), (2, 1));
    assert_eq!(h.read::<ForecastRecord>("forecasts.jsonl").len(), 2);
    let s = h.stage(Stage::Forecast);
    assert_eq!((s.processed, s.skipped, s.failed), (1, 2, 0));
    let fs: Vec<ForecastRecord> = h.read("forecasts.jsonl");
    assert_eq!(fs.len(), 3);
    assert!(fs.iter().any(|f| f.probability == Some(0.2)));
}

#[test]
fn report_marks_subquestions_not_run() {
    let (m, f) = standard(4);
    let h = Harness::new(&markers(&m), &f, "");
    h.through(Stage::Report);
    let md = std::fs::read_to_string(h.path("report.md")).unwrap();
    let subq = md.split("## Subquestions").nth(1).unwrap();
    let section = subq.split("\n## ").next().unwrap();
    assert!(section.contains("Not run."), "{section}");
    assert!(md.contains("## Scores"));
}

#[test]
fn subquestion_strategy_records_bundles() {
    let (m, mut f) = standard(3);
    f.rule(
        "decomposition",
        &[],
        "SUBQUESTION: Will officials comment?\nBACKGROUND: b\nRESOLUTION_CRITERIA: c\n\
         SUBQUESTION: Will newspapers report it?\nBACKGROUND: b\nRESOLUTION_CRITERIA: c",
    )
    .rule("subquestion_forecast", &[], "final_answer_forecast: 45");
    let h = Harness::new(&markers(&m), &f, "[forecast]\nsubq_sample = 2\n");
    h.through(Stage::Forecast);
    let subq = StageOptions {
        strategy: Strategy::Subquestions,
        ..as_of()
    };
    let s = h.stage_with(Stage::Forecast, &subq).unwrap();
    assert_eq!(s.failed, 0);
    let bundles: Vec<serde_json::Value> = h.read("subq_bundles.jsonl");
    let rejects = std::fs::read_to_string(h.path("rejects.jsonl")).unwrap_or_default();
    assert_eq!(bundles.len(), 2, "{s:?} {rejects}");
    let subq: Vec<ForecastRecord> = h.read("subq_forecasts.jsonl");
    assert_eq!(subq.len(), 2);
    assert!(subq.iter().all(|f| f.strategy == Strategy::Subquestions && f.probability == Some(0.45)));
    assert_eq!(h.read::<ForecastRecord>("forecasts.jsonl").len(), 3);
}
