//! Drives trials through the conduct API the way a site would: one cohort
//! at a time, posting outcomes and following recommendations.

use std::path::Path;
use std::time::Duration;

use combitrial::conduct::{OutcomeEntry, Recommendation, RecommendationKind};
use combitrial::config::Design;
use combitrial::math::StdDose;
use combitrial::simulator::{scenario_outcomes, Scenario};
use combitrial_service::api::{AppState, OutcomeResponse, TrialView};
use combitrial_service::store::EventStore;
use serde_json::json;

pub struct Server {
    pub base: String,
    handle: tokio::task::JoinHandle<()>,
}

impl Server {
    /// Serves a store rooted at `data` on an ephemeral local port.
    pub async fn start(data: &Path, design: Design) -> Server {
        let app = AppState::load(EventStore::open(data).expect("store opens"), design).expect("state loads");
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
        let base = format!("http://{}", listener.local_addr().expect("local addr"));
        let handle = tokio::spawn(async move {
            combitrial_service::api::serve(listener, app).await.expect("serve");
        });
        Server { base, handle }
    }

    pub fn stop(self) {
        self.handle.abort();
    }
}

async fn recommendation(client: &reqwest::Client, base: &str, id: &str) -> Recommendation {
    loop {
        let r: Recommendation = client
            .get(format!("{base}/trials/{id}/recommendation"))
            .send()
            .await
            .expect("recommendation request")
            .json()
            .await
            .expect("recommendation body");
        if r.kind != RecommendationKind::Pending {
            return r;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

/// Conducts a full trial with seed `seed`, answering every cohort with the
/// scenario's outcomes for those patients. Returns the terminal view.
pub async fn conduct(
    client: &reqwest::Client,
    base: &str,
    design: &Design,
    scenario: &Scenario,
    seed: u64,
) -> TrialView {
    let r = client
        .post(format!("{base}/trials?seed={seed}"))
        .body(serde_json::to_string(design).expect("design serializes"))
        .send()
        .await
        .expect("create request");
    assert_eq!(r.status(), 201);
    let id = r.json::<TrialView>().await.expect("trial view").id.to_string();

    let mut source = scenario_outcomes(scenario, seed);
    let mut rec = recommendation(client, base, &id).await;
    while rec.kind == RecommendationKind::Dose {
        let cohort = rec.cohort.as_ref().expect("dose recommendation has a cohort");
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
        let r = client
            .post(format!("{base}/trials/{id}/outcomes"))
            .json(&json!({ "outcomes": batch }))
            .send()
            .await
            .expect("outcomes request");
        assert!(r.status().is_success(), "outcomes rejected: {}", r.status());
        let body: OutcomeResponse = r.json().await.expect("outcome response");
        rec = if body.refit_pending {
            recommendation(client, base, &id).await
        } else {
            body.recommendation
        };
    }
    assert_eq!(rec.kind, RecommendationKind::Decision);
    client
        .get(format!("{base}/trials/{id}"))
        .send()
        .await
        .expect("trial request")
        .json()
        .await
        .expect("trial body")
}
