use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use metanet::engine::LoadedModel;
use metanet::service::{router, ServiceConfig};
use metanet_core::design::{achieved_profile, DesignObjective, InnerConfig, ObjectiveKind};
use metanet_core::fem::MaterialParams;
use metanet_core::model::AnalyticModel;
use serde_json::{json, Value};
use tower::ServiceExt;

fn two_param() -> AnalyticModel {
    AnalyticModel::two_parameter(MaterialParams::default())
}

fn app() -> Router {
    router(Some(LoadedModel::from_analytic(two_param())), ServiceConfig::default())
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value, axum::http::HeaderMap) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, v, headers)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(uri: &str, body: Value) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

#[tokio::test]
async fn families_lists_every_family_and_the_model() {
    let (status, v, _) = call(&app(), get("/families")).await;
    assert_eq!(status, StatusCode::OK);
    let fams = v["families"].as_array().unwrap();
    assert_eq!(fams.len(), 4);
    assert_eq!(fams[0]["family_id"], "solid_cell");
    assert_eq!(v["model"]["kind"], "analytic");
    assert_eq!(v["model"]["param_count"], 2);
}

#[tokio::test]
async fn evaluate_at_rest_is_stress_free() {
    let (status, v, _) = call(
        &app(),
        post("/evaluate", json!({"params": [0.3, 0.5], "strains": [{"exx": 0.0, "eyy": 0.0, "exy": 0.0}]})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert!(v["energies"][0].as_f64().unwrap().abs() < 1e-15);
    for c in ["sxx", "syy", "sxy"] {
        assert!(v["stresses"][0][c].as_f64().unwrap().abs() < 1e-14, "{v}");
    }
}

#[tokio::test]
async fn evaluate_matches_the_model_and_draws_profiles() {
    let model = two_param();
    let params = [0.3, 0.5];
    let strain = metanet_core::tensor::StrainState::new(0.04, -0.01, 0.02);
    let body = json!({
        "params": params,
        "strains": [strain],
        "profile": {"directions": 8, "magnitude": 0.001},
        "curve": {"alpha": 0.5, "magnitudes": [0.01, 0.05, 0.1]},
    });
    let (status, v, _) = call(&app(), post("/evaluate", body)).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    use metanet_core::model::EnergyModel;
    let psi = model.energy(&params, &strain);
    assert!((v["energies"][0].as_f64().unwrap() - psi).abs() <= 1e-14 * psi.abs().max(1.0));
    let stiff = v["profile"]["stiffness"].as_array().unwrap();
    assert_eq!(stiff.len(), 8);
    let e = model.material_at(&params).youngs_modulus;
    for s in stiff {
        assert!((s.as_f64().unwrap() - e).abs() < 0.01 * e);
    }
    let curve: Vec<f64> = serde_json::from_value(v["curve"]["stress"].clone()).unwrap();
    assert!(curve.windows(2).all(|w| w[1] > w[0]), "{curve:?}");
}

#[tokio::test]
async fn evaluate_is_idempotent_and_fast() {
    let app = app();
    let body = json!({"params": [0.4, 0.6], "profile": {"directions": 64, "magnitude": 0.05}});
    let start = Instant::now();
    let (status, first, _) = call(&app, post("/evaluate", body.clone())).await;
    let elapsed = start.elapsed();
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first["profile"]["poisson"].as_array().unwrap().len(), 64);
    assert!(elapsed < Duration::from_millis(100), "{elapsed:?}");
    let (_, second, _) = call(&app, post("/evaluate", body)).await;
    assert_eq!(first, second);
}

#[tokio::test]
async fn current_profile_as_target_gives_zero_objective() {
    let app = app();
    let params = [0.35, 0.8];
    let (_, v, _) = call(&app, post("/evaluate", json!({"params": params, "profile": {"directions": 6, "magnitude": 0.1}}))).await;
    let body = json!({
        "kind": "poisson_ratio",
        "directions": v["profile"]["directions"],
        "magnitudes": [0.1],
        "targets": v["profile"]["poisson"],
        "init": params,
        "starts": 1,
        "max_iterations": 0,
    });
    let (status, v, _) = call(&app, post("/design", body)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    let id = v["id"].as_str().unwrap().to_string();
    let deadline = Instant::now() + Duration::from_secs(30);
    let record = loop {
        let (_, v, _) = call(&app, get(&format!("/jobs/{id}"))).await;
        if v["status"] == "done" || v["status"] == "failed" {
            break v;
        }
        assert!(Instant::now() < deadline);
        tokio::time::sleep(Duration::from_millis(5)).await;
    };
    assert_eq!(record["status"], "done", "{record}");
    assert_eq!(record["kind"], "design");
    assert_eq!(record["request"]["init"], json!(params));
    assert!(record["result"]["best"]["objective"].as_f64().unwrap() < 1e-20, "{record}");
}

#[tokio::test]
async fn evaluate_rejects_bad_requests() {
    let (status, v, _) = call(&app(), post("/evaluate", json!({"params": [0.3]}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "ParamCount");

    let req = Request::post("/evaluate")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let (status, v, _) = call(&app(), req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "BadRequest");
    assert!(!v["detail"].as_str().unwrap().is_empty());

    let (status, _, _) = call(
        &app(),
        post("/evaluate", json!({"params": [0.3, 0.5], "strains": [{"exx": -0.6, "eyy": 0.0, "exy": 0.0}]})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn requests_needing_a_model_fail_without_one() {
    let app = router(None, ServiceConfig::default());
    let (status, v, _) = call(&app, post("/evaluate", json!({"params": []}))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["error"], "ModelNotLoaded");
    let (status, _, _) = call(&app, get("/families")).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn unknown_job_is_not_found() {
    let (status, v, _) = call(&app(), get("/jobs/job-999")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "JobNotFound");
}

#[tokio::test]
async fn design_job_runs_to_completion() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(
        Some(LoadedModel::from_analytic(two_param())),
        ServiceConfig {
            design_workers: 1,
            jobs_dir: Some(dir.path().to_path_buf()),
            ui_dir: None,
        },
    );
    let objective = DesignObjective {
        kind: ObjectiveKind::DirectionalStiffness,
        directions: vec![0.0, 0.7],
        magnitudes: vec![0.2],
        targets: vec![0.0; 2],
        weights: None,
    };
    let targets = achieved_profile(&two_param(), &[0.6, 0.3], &objective, &InnerConfig::default()).unwrap();
    let body = json!({
        "kind": "directional_stiffness",
        "directions": objective.directions,
        "magnitudes": objective.magnitudes,
        "targets": targets,
        "starts": 3,
        "seed": 5,
    });
    let (status, v, _) = call(&app, post("/design", body)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    let id = v["id"].as_str().unwrap().to_string();

    let deadline = Instant::now() + Duration::from_secs(60);
    let mut seen = Vec::new();
    let record = loop {
        let (status, v, _) = call(&app, get(&format!("/jobs/{id}"))).await;
        assert_eq!(status, StatusCode::OK);
        if let Some(b) = v["progress"]["objective"].as_f64() {
            seen.push(b);
        }
        match v["status"].as_str().unwrap() {
            "done" => break v,
            "failed" => panic!("job failed: {v}"),
            _ => {}
        }
        assert!(Instant::now() < deadline, "job did not finish");
        tokio::time::sleep(Duration::from_millis(5)).await;
    };
    assert!(seen.windows(2).all(|w| w[1] <= w[0]), "{seen:?}");
    let best = &record["result"]["best"];
    assert!(best["objective"].as_f64().unwrap() < 1e-10, "{best}");
    assert_eq!(record["result"]["runs"].as_array().unwrap().len(), 3);
    assert!(dir.path().join(format!("{id}.json")).exists());
}

#[tokio::test]
async fn design_rejects_invalid_objectives() {
    let body = json!({"kind": "poisson_ratio", "directions": [0.0, 1.0], "magnitudes": [0.1], "targets": [0.1, 0.2, 0.3]});
    let (status, v, _) = call(&app(), post("/design", body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "InvalidInput");
    let body = json!({"kind": "sideways", "directions": [0.0], "magnitudes": [0.1], "targets": [0.1]});
    let (status, _, _) = call(&app(), post("/design", body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn mesh_outline_endpoint() {
    let (status, v, _) = call(&app(), get("/mesh?family=honeycomb2&params=0.05,0.02")).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert!(!v["polylines"].as_array().unwrap().is_empty());
    assert_eq!(v["params"], json!([0.05, 0.02]));
    let (status, v, _) = call(&app(), get("/mesh?family=honeycomb&params=0.9")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "ParamOutOfBounds");
    let (status, _, _) = call(&app(), get("/mesh")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn cors_headers_are_sent() {
    let req = Request::get("/families")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let (_, _, headers) = call(&app(), req).await;
    assert_eq!(headers.get("access-control-allow-origin").unwrap(), "*");
}

#[tokio::test]
async fn static_ui_directory_is_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>studio</html>").unwrap();
    let app = router(
        None,
        ServiceConfig {
            design_workers: 1,
            jobs_dir: None,
            ui_dir: Some(dir.path().to_path_buf()),
        },
    );
    let resp = app.oneshot(get("/index.html")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&body[..], b"<html>studio</html>");
}
