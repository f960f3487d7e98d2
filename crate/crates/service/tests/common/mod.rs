#![allow(dead_code)]

use std::path::Path;
use std::time::Duration;

use combitrial::conduct::{OutcomeEntry, Recommendation, RecommendationKind};
use combitrial::config::Design;
use combitrial::inference::McmcConfig;
use combitrial::math::StdDose;
use combitrial::simulator::{build_scenario, scenario_outcomes, Scenario, ScenarioSpec, TrialEnd};
use combitrial_service::api::{AppState, OutcomeResponse, TrialView};
use combitrial_service::store::EventStore;
use serde_json::{json, Value};

pub struct Server {
    pub base: String,
    handle: tokio::task::JoinHandle<()>,
}

impl Server {
    pub async fn start(data: &Path, design: Design) -> Server {
        let app = AppState::load(EventStore::open(data).unwrap(), design).unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let handle = tokio::spawn(async move {
            combitrial_service::api::serve(listener, app).await.unwrap();
        });
        Server { base, handle }
    }

    pub fn stop(self) {
        self.handle.abort();
    }
}

/// Small MCMC so HTTP tests stay quick.
pub fn quick_design() -> Design {
    let mut d = Design::ciscab_desk();
    d.mcmc = McmcConfig {
        chains: 1,
        burn_in: 200,
        kept_per_chain: 400,
        thin: 1,
    };
    d.stage2.grid_size = 101;
    d
}

pub fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.spec.json"));
    let spec: ScenarioSpec = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    build_scenario(&spec).unwrap()
}

pub async fn create(client: &reqwest::Client, base: &str, design: &Design, seed: u64) -> TrialView {
    let r = client
        .post(format!("{base}/trials?seed={seed}"))
        .body(serde_json::to_string(design).unwrap())
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 201);
    r.json().await.unwrap()
}

pub async fn post_outcomes(
    client: &reqwest::Client,
    base: &str,
    id: &str,
    query: &str,
    outcomes: &[OutcomeEntry],
) -> reqwest::Response {
    client
        .post(format!("{base}/trials/{id}/outcomes?{query}"))
        .json(&json!({ "outcomes": outcomes }))
        .send()
        .await
        .unwrap()
}

pub async fn get_json(client: &reqwest::Client, url: String) -> Value {
    client.get(url).send().await.unwrap().json().await.unwrap()
}

pub async fn recommendation(client: &reqwest::Client, base: &str, id: &str) -> Recommendation {
    loop {
        let r: Recommendation = client
            .get(format!("{base}/trials/{id}/recommendation"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        if r.kind != RecommendationKind::Pending {
            return r;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

/// Conducts a whole trial through the API, drawing each patient's outcomes
/// from the scenario exactly as the simulator does. Returns the trial id
/// and its terminal state.
pub async fn conduct(
    client: &reqwest::Client,
    base: &str,
    design: &Design,
    scenario: &Scenario,
    seed: u64,
    wait: bool,
) -> (String, TrialView) {
    let id = create(client, base, design, seed).await.id.to_string();
    let mut source = scenario_outcomes(scenario, seed);
    let mut rec = recommendation(client, base, &id).await;
    while rec.kind == RecommendationKind::Dose {
        let cohort = rec.cohort.as_ref().unwrap();
        let batch: Vec<OutcomeEntry> = cohort
            .patients
            .iter()
            .map(|p| {
                let o = source(p.patient, cohort.stage, StdDose { x: p.dose.x, y: p.dose.y });
                OutcomeEntry {
                    patient: p.patient,
                    stage: Some(cohort.stage),
                    z: Some(o.z),
                    e: Some(o.e),
                }
            })
            .collect();
        let query = if wait { "wait=true" } else { "" };
        let r = post_outcomes(client, base, &id, query, &batch).await;
        assert!(r.status().is_success(), "{}", r.text().await.unwrap());
        let body: OutcomeResponse = r.json().await.unwrap();
        rec = if body.refit_pending {
            recommendation(client, base, &id).await
        } else {
            body.recommendation
        };
    }
    assert_eq!(rec.kind, RecommendationKind::Decision);
    let view: TrialView = client
        .get(format!("{base}/trials/{id}"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    (id, view)
}

pub fn end_of(view: &TrialView) -> TrialEnd {
    view.state.recommendation.decision.as_ref().unwrap().end
}
