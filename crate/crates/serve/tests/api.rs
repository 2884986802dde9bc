use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use abuse_forecast::corpus::{synth_corpus, SynthConfig};
use abuse_forecast::ensembles::{artifact_id, ModelArtifact, ModelKind};
use abuse_forecast::eval::{fit_artifact, TrainConfig};
use abuse_forecast::features::{FeatureExtractor, FeatureMask, Stage};
use abuse_forecast::lexicons::{builtin_terms, LexiconKind, LexiconRegistry};
use abuse_forecast_serve::{
    router, AppState, PredictRequest, PredictResponse, Snapshot, TOP_ATTRIBUTIONS,
};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

struct Fixture {
    dir: tempfile::TempDir,
    prepost: Vec<u8>,
    prepost_rf: Vec<u8>,
    posthoc: Vec<u8>,
    boosted: Vec<u8>,
}

impl Fixture {
    fn write(&self, name: &str, bytes: &[u8]) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    }
}

fn train(kind: ModelKind, mask: &str, stage: Stage) -> Vec<u8> {
    let corpus = synth_corpus(
        &SynthConfig {
            n_conversations: 600,
            ..SynthConfig::default()
        },
        5,
    )
    .unwrap();
    let mut cfg = TrainConfig::new(kind, mask.parse::<FeatureMask>().unwrap(), stage);
    cfg.params = cfg.params.with_trees(8);
    cfg.background_size = 40;
    let ex = FeatureExtractor::new(LexiconRegistry::builtin());
    fit_artifact(&corpus, &cfg, &ex).unwrap().to_bytes()
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| Fixture {
        dir: tempfile::tempdir().unwrap(),
        prepost: train(ModelKind::ExtraTrees, "te,mt,tw,ac", Stage::PrePost),
        prepost_rf: train(ModelKind::RandomForest, "mt,tw", Stage::PrePost),
        posthoc: train(ModelKind::ExtraTrees, "mt,tw", Stage::PostHoc),
        boosted: train(ModelKind::AdaBoostR2, "mt,tw", Stage::PrePost),
    })
}

fn snapshot(bytes: &[u8]) -> Snapshot {
    Snapshot::new(
        ModelArtifact::from_slice(bytes).unwrap(),
        artifact_id(bytes),
    )
    .unwrap()
}

fn app_with(bytes: Option<&[u8]>) -> (Router, Arc<AppState>) {
    let state = AppState::new(bytes.map(snapshot), Duration::from_secs(30));
    (router(state.clone(), None), state)
}

async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<String>,
) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, bytes)
}

async fn predict(app: &Router, req: &PredictRequest) -> (StatusCode, Vec<u8>) {
    call(
        app,
        "POST",
        "/v1/predict",
        Some(serde_json::to_string(req).unwrap()),
    )
    .await
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

const BENIGN: &str = "Lovely weather for the museum concert today";

fn hostile() -> String {
    let terms = builtin_terms(LexiconKind::Abusive);
    terms.iter().take(12).cloned().collect::<Vec<_>>().join(" ")
}

#[tokio::test]
async fn predict_returns_prediction_and_attributions() {
    let f = fixture();
    let (app, _) = app_with(Some(&f.prepost));
    let (status, body) = predict(&app, &PredictRequest::new(BENIGN)).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let r: PredictResponse = serde_json::from_slice(&body).unwrap();
    let a = ModelArtifact::from_slice(&f.prepost).unwrap();
    assert!(r.predicted_abusive_replies >= 0.0);
    assert!(r.predicted_abusive_replies >= a.training.target_min);
    assert!(r.predicted_abusive_replies <= a.training.target_max);
    assert_eq!(r.stage, Stage::PrePost);
    assert_eq!(r.model_id, artifact_id(&f.prepost));
    assert_eq!(r.top_attributions.len(), TOP_ATTRIBUTIONS);
    let gap = r.base_value.unwrap() + r.attribution_sum.unwrap() - r.predicted_abusive_replies;
    assert!(gap.abs() < 1e-4, "{gap}");
    let mags: Vec<f64> = r
        .top_attributions
        .iter()
        .map(|t| t.attribution.abs())
        .collect();
    assert!(mags.windows(2).all(|w| w[0] >= w[1]));
    let names = a.feature_manifest.names();
    assert!(r
        .top_attributions
        .iter()
        .all(|t| names.contains(&t.feature)));
}

#[tokio::test]
async fn identical_requests_give_identical_bodies() {
    let (app, _) = app_with(Some(&fixture().prepost));
    let req = PredictRequest {
        hashtags: Some(2),
        ..PredictRequest::new("#news from @council about the election")
    };
    let (s1, b1) = predict(&app, &req).await;
    let (s2, b2) = predict(&app, &req).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(b1, b2);
}

#[tokio::test]
async fn hostile_draft_scores_above_benign() {
    for bytes in [&fixture().prepost, &fixture().prepost_rf] {
        let (app, _) = app_with(Some(bytes));
        let benign: PredictResponse =
            serde_json::from_slice(&predict(&app, &PredictRequest::new(BENIGN)).await.1).unwrap();
        let bad: PredictResponse =
            serde_json::from_slice(&predict(&app, &PredictRequest::new(&hostile())).await.1)
                .unwrap();
        assert!(
            bad.predicted_abusive_replies > benign.predicted_abusive_replies,
            "{} vs {}",
            bad.predicted_abusive_replies,
            benign.predicted_abusive_replies
        );
        assert_eq!(
            bad.verdict_of_draft.verdict,
            abuse_forecast::lexicons::AbuseVerdict::Abusive
        );
    }
}

#[tokio::test]
async fn malformed_requests_are_400() {
    let (app, _) = app_with(Some(&fixture().prepost));
    for body in [
        r#"{"draft_text": ""}"#,
        r#"{"draft_text": "   "}"#,
        r#"{"draft_text": "ok", "retweets": 3}"#,
        r#"{"text": "wrong field"}"#,
        r#"{"draft_text": "ok", "hashtags": -1}"#,
        "not json",
    ] {
        let (status, b) = call(&app, "POST", "/v1/predict", Some(body.into())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(json(&b)["error"]["message"].is_string());
    }
}

#[tokio::test]
async fn partial_account_block_is_accepted() {
    let (app, _) = app_with(Some(&fixture().prepost));
    let body =
        r#"{"draft_text": "hello there", "account": {"followers_count": 120, "verified": true}}"#;
    let (status, _) = call(&app, "POST", "/v1/predict", Some(body.into())).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn no_model_is_503() {
    let (app, _) = app_with(None);
    assert_eq!(
        predict(&app, &PredictRequest::new(BENIGN)).await.0,
        StatusCode::SERVICE_UNAVAILABLE
    );
    assert_eq!(
        call(&app, "GET", "/v1/model", None).await.0,
        StatusCode::SERVICE_UNAVAILABLE
    );
    let (status, body) = call(&app, "GET", "/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body)["model_loaded"], false);
}

#[tokio::test]
async fn model_info_matches_file_digest() {
    let f = fixture();
    let (app, _) = app_with(Some(&f.prepost));
    let (status, body) = call(&app, "GET", "/v1/model", None).await;
    assert_eq!(status, StatusCode::OK);
    let v = json(&body);
    assert_eq!(v["model_id"], artifact_id(&f.prepost));
    assert_eq!(v["stage"], "prepost");
    assert_eq!(v["mask"], "te,mt,tw,ac");
    assert_eq!(v["kind"], "etr");
    assert!(v["feature_manifest"].as_array().unwrap().len() > 50);
    assert_eq!(v["training"]["n_conversations"], 600);
}

#[tokio::test]
async fn boosted_model_predicts_without_attributions() {
    let (app, _) = app_with(Some(&fixture().boosted));
    let (status, body) = predict(&app, &PredictRequest::new(BENIGN)).await;
    assert_eq!(status, StatusCode::OK);
    let r: PredictResponse = serde_json::from_slice(&body).unwrap();
    assert!(r.top_attributions.is_empty());
    assert!(r.base_value.is_none());
}

#[tokio::test]
async fn posthoc_models_are_refused() {
    let f = fixture();
    let path = f.write("posthoc.json", &f.posthoc);
    assert!(matches!(
        Snapshot::load(&path),
        Err(abuse_forecast_serve::ServeError::StageMismatch(
            Stage::PostHoc
        ))
    ));

    let (app, state) = app_with(Some(&f.prepost));
    let body = serde_json::json!({ "path": path }).to_string();
    let (status, b) = call(&app, "POST", "/v1/reload", Some(body)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(json(&b)["error"]["code"], "stage_mismatch");
    assert_eq!(state.snapshot().unwrap().model_id, artifact_id(&f.prepost));

    // A post-hoc snapshot forced in is still refused per request.
    let forced =
        Snapshot::new_unchecked(ModelArtifact::from_slice(&f.posthoc).unwrap(), "x".into());
    state.swap(forced);
    assert_eq!(
        predict(&app, &PredictRequest::new(BENIGN)).await.0,
        StatusCode::CONFLICT
    );
}

#[tokio::test]
async fn reload_swaps_and_rejects_bad_files() {
    let f = fixture();
    let (app, state) = app_with(Some(&f.prepost));
    let good = f.write("rf.json", &f.prepost_rf);
    let (status, body) = call(
        &app,
        "POST",
        "/v1/reload",
        Some(serde_json::json!({ "path": good }).to_string()),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body)["model_id"], artifact_id(&f.prepost_rf));
    assert_eq!(
        state.snapshot().unwrap().model_id,
        artifact_id(&f.prepost_rf)
    );

    let mut broken = f.prepost.clone();
    broken.truncate(broken.len() / 2);
    let corrupt = f.write("broken.json", &broken);
    let missing = f.dir.path().join("nope.json");
    for p in [&corrupt, &missing] {
        let (status, b) = call(
            &app,
            "POST",
            "/v1/reload",
            Some(serde_json::json!({ "path": p }).to_string()),
        )
        .await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(json(&b)["error"]["code"], "invalid_artifact");
    }
    let (status, _) = call(&app, "POST", "/v1/reload", Some("{}".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(
        state.snapshot().unwrap().model_id,
        artifact_id(&f.prepost_rf)
    );
    assert!(!state.is_reloading());
}

#[tokio::test]
async fn health_reports_reloading() {
    let (app, state) = app_with(Some(&fixture().prepost));
    let guard = state.begin_reload();
    let (status, body) = call(&app, "GET", "/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body)["status"], "reloading");
    drop(guard);
    assert_eq!(
        json(&call(&app, "GET", "/v1/health", None).await.1)["status"],
        "ok"
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_health_calls_all_answered() {
    let (app, _) = app_with(None);
    let tasks: Vec<_> = (0..64)
        .map(|_| {
            let app = app.clone();
            tokio::spawn(async move { call(&app, "GET", "/v1/health", None).await.0 })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn responses_stay_consistent_under_reload() {
    let f = fixture();
    let paths = [
        f.write("a.json", &f.prepost),
        f.write("b.json", &f.prepost_rf),
    ];
    let req = PredictRequest::new(&format!("{BENIGN} {}", hostile()));
    let mut expected = HashMap::new();
    for bytes in [&f.prepost, &f.prepost_rf] {
        let r = snapshot(bytes).predict(&req).unwrap();
        expected.insert(r.model_id.clone(), r.predicted_abusive_replies);
    }
    assert_eq!(expected.len(), 2);

    let (app, _) = app_with(Some(&f.prepost));
    let reloader = {
        let app = app.clone();
        let paths = paths.clone();
        tokio::spawn(async move {
            for i in 0..10 {
                let body = serde_json::json!({ "path": paths[(i + 1) % 2] }).to_string();
                assert_eq!(
                    call(&app, "POST", "/v1/reload", Some(body)).await.0,
                    StatusCode::OK
                );
            }
        })
    };
    let predictors: Vec<_> = (0..4)
        .map(|_| {
            let (app, req) = (app.clone(), req.clone());
            tokio::spawn(async move {
                let mut out = Vec::new();
                for _ in 0..15 {
                    let (status, body) = predict(&app, &req).await;
                    assert_eq!(status, StatusCode::OK);
                    let r: PredictResponse = serde_json::from_slice(&body).unwrap();
                    out.push((r.model_id, r.predicted_abusive_replies));
                }
                out
            })
        })
        .collect();
    reloader.await.unwrap();
    for p in predictors {
        for (id, value) in p.await.unwrap() {
            assert_eq!(expected[&id], value);
        }
    }
}

#[tokio::test]
async fn static_ui_bundle_is_served() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>composer</html>").unwrap();
    let state = AppState::new(Some(snapshot(&fixture().prepost)), Duration::from_secs(30));
    let app = router(state, Some(Path::new(ui.path())));
    let (status, body) = call(&app, "GET", "/", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<html>composer</html>");
    assert_eq!(
        call(&app, "GET", "/v1/health", None).await.0,
        StatusCode::OK
    );
}
