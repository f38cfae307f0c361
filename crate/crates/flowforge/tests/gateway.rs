use std::io::{BufRead, BufReader};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, HeaderMap, Request};
use axum::Router;
use flowforge::fixture::routes_csv;
use flowforge::gateway::{router, RunningServer};
use flowforge::platform::Platform;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

const TOKEN: &str = "s3cret";

struct Api {
    dir: TempDir,
    platform: Arc<Platform>,
    app: Router,
    token: Option<&'static str>,
}

#[derive(Debug)]
struct Resp {
    status: u16,
    headers: HeaderMap,
    text: String,
    json: Value,
}

impl Resp {
    fn code(&self) -> &str {
        self.json["code"].as_str().unwrap_or("")
    }
}

fn api() -> Api {
    api_with(None, None)
}

fn api_with(token: Option<&'static str>, ui_dir: Option<std::path::PathBuf>) -> Api {
    let dir = tempfile::tempdir().unwrap();
    let platform = Arc::new(Platform::open(dir.path().join("data")).unwrap());
    let app = router(platform.clone(), token.map(String::from), ui_dir);
    Api { dir, platform, app, token }
}

impl Api {
    async fn raw(&self, method: &str, path: &str, body: Vec<u8>, token: Option<&str>) -> Resp {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        if !body.is_empty() {
            req = req.header(header::CONTENT_TYPE, "application/json");
        }
        let resp = self.app.clone().oneshot(req.body(Body::from(body)).unwrap()).await.unwrap();
        let status = resp.status().as_u16();
        let headers = resp.headers().clone();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let json = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        Resp { status, headers, text, json }
    }

    async fn call(&self, method: &str, path: &str, body: Option<Value>) -> Resp {
        let bytes = body.map(|b| serde_json::to_vec(&b).unwrap()).unwrap_or_default();
        self.raw(method, path, bytes, self.token).await
    }

    async fn get(&self, path: &str) -> Resp {
        self.call("GET", path, None).await
    }

    async fn post(&self, path: &str, body: Value) -> Resp {
        self.call("POST", path, Some(body)).await
    }

    fn routes_file(&self, rows: usize) -> String {
        let path = self.dir.path().join(format!("routes_{rows}.csv"));
        std::fs::write(&path, routes_csv(rows, 42)).unwrap();
        path.display().to_string()
    }

    async fn wait_run(&self, run_id: &str, pred: impl Fn(&Value) -> bool) -> Value {
        let deadline = Instant::now() + Duration::from_secs(20);
        loop {
            let r = self.get(&format!("/api/runs/{run_id}")).await;
            assert_eq!(r.status, 200);
            if pred(&r.json) || Instant::now() > deadline {
                return r.json;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
    }

    /// Everything observable through list endpoints.
    async fn snapshot(&self) -> Vec<String> {
        let mut out = Vec::new();
        for p in ["/api/services", "/api/streams", "/api/tasks", "/api/runs", "/api/viz/sources"] {
            out.push(self.get(p).await.text);
        }
        out
    }
}

fn descriptor(name: &str, version: &str) -> Value {
    json!({
        "name": name,
        "version": version,
        "kind": "processor",
        "description": "custom step",
        "params": [{"name": "factor", "dtype": "float", "default": 1.0}],
        "artifact_ref": "builtin:filter",
        "tags": ["custom"]
    })
}

fn terminal(run: &Value) -> bool {
    matches!(run["state"].as_str(), Some("completed" | "failed" | "undeployed"))
}

#[tokio::test(flavor = "multi_thread")]
async fn health_needs_no_token_and_api_does() {
    let a = api_with(Some(TOKEN), None);
    let health = a.raw("GET", "/health", vec![], None).await;
    assert_eq!((health.status, health.json["status"].as_str()), (200, Some("ok")));
    let missing = a.raw("GET", "/api/services", vec![], None).await;
    assert_eq!((missing.status, missing.code()), (401, "unauthorized"));
    assert_eq!(missing.headers[header::WWW_AUTHENTICATE], "Bearer");
    let wrong = a.raw("GET", "/api/services", vec![], Some("nope")).await;
    assert_eq!(wrong.status, 401);
    let right = a.raw("GET", "/api/services", vec![], Some(TOKEN)).await;
    assert_eq!(right.status, 200);
    assert!(right.json.as_array().unwrap().len() >= 10);
    let unauth_post = a.raw("POST", "/api/services", serde_json::to_vec(&descriptor("x", "1.0.0")).unwrap(), None).await;
    assert_eq!(unauth_post.status, 401);
    assert_eq!(a.raw("GET", "/api/services/x", vec![], None).await.status, 401);
    assert_eq!(a.raw("GET", "/api/services/x", vec![], Some(TOKEN)).await.status, 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn service_endpoints() {
    let a = api();
    let created = a.post("/api/services", descriptor("scaler", "1.0.0")).await;
    assert_eq!(created.status, 201);
    assert_eq!(created.headers[header::LOCATION], "/api/services/scaler/1.0.0");
    assert_eq!(created.json, json!({"name": "scaler", "version": "1.0.0"}));
    assert_eq!(a.post("/api/services", descriptor("scaler", "1.2.0")).await.status, 201);

    let dup = a.post("/api/services", descriptor("scaler", "1.0.0")).await;
    assert_eq!((dup.status, dup.code()), (409, "duplicate_service"));
    let mut bad = descriptor("Bad Name", "one");
    bad["params"] = json!([{"name": "p", "dtype": "enum"}]);
    let invalid = a.post("/api/services", bad).await;
    assert_eq!((invalid.status, invalid.code()), (422, "invalid_descriptor"));
    let fields: Vec<&str> = invalid.json["details"]["issues"].as_array().unwrap().iter().map(|i| i["field"].as_str().unwrap()).collect();
    assert!(fields.contains(&"name") && fields.contains(&"version") && fields.contains(&"params[0]"), "{fields:?}");
    let garbage = a.raw("POST", "/api/services", b"{not json".to_vec(), None).await;
    assert_eq!((garbage.status, garbage.code()), (400, "invalid_request"));

    assert_eq!(a.get("/api/services/scaler").await.json["version"], "1.2.0");
    assert_eq!(a.get("/api/services/scaler/1.0.0").await.json["version"], "1.0.0");
    let missing = a.get("/api/services/scaler/9.9.9").await;
    assert_eq!((missing.status, missing.code()), (404, "not_found"));
    let custom = a.get("/api/services?tag=custom").await;
    assert_eq!(custom.json.as_array().unwrap().len(), 2);
    let sinks = a.get("/api/services?kind=sink").await.json;
    assert!(sinks.as_array().unwrap().iter().all(|d| d["kind"] == "sink"));
    assert_eq!(a.get("/api/services?text=k-means").await.json.as_array().unwrap().len(), 2);
    assert_eq!(a.get("/api/services?kind=widget").await.status, 400);

    let removed = a.call("DELETE", "/api/services/scaler/1.0.0", None).await;
    assert_eq!(removed.status, 200);
    assert_eq!(removed.json["version"], "1.0.0");
    assert_eq!(a.call("DELETE", "/api/services/scaler/1.0.0", None).await.status, 404);

    assert_eq!(a.post("/api/streams", json!({"name": "uses", "dsl": "tick-source | log-sink"})).await.status, 201);
    let in_use = a.call("DELETE", "/api/services/log-sink/1.0.0", None).await;
    assert_eq!((in_use.status, in_use.code()), (409, "in_use"));
}

#[tokio::test(flavor = "multi_thread")]
async fn stream_lifecycle() {
    let a = api();
    let path = a.routes_file(50);
    let dsl = format!(
        "file-source --path={path} | string-indexer --columns=sourceAirport,destinationAirport \
         | kmeans --k=3 --seed=42 | table-sink --name=clustered"
    );
    let created = a.post("/api/streams", json!({"name": "routes", "dsl": dsl})).await;
    assert_eq!(created.status, 201, "{}", created.text);
    assert_eq!(created.headers[header::LOCATION], "/api/streams/routes");
    assert_eq!(created.json["definition"]["nodes"].as_array().unwrap().len(), 4);
    assert_eq!(created.json["active_run"], Value::Null);

    let exists = a.post("/api/streams", json!({"name": "routes", "dsl": "tick-source | log-sink"})).await;
    assert_eq!((exists.status, exists.code()), (409, "workflow_exists"));
    let syntax = a.post("/api/streams", json!({"name": "s", "dsl": "tick-source |"})).await;
    assert_eq!((syntax.status, syntax.code()), (400, "syntax_error"));
    assert!(syntax.json["details"]["line"].is_u64() && syntax.json["details"]["column"].is_u64());
    let invalid = a.post("/api/streams", json!({"name": "s", "dsl": "tick-source | nosuch"})).await;
    assert_eq!((invalid.status, invalid.code()), (422, "validation_error"));
    let bad_name = a.post("/api/streams", json!({"name": "no spaces", "dsl": "tick-source | log-sink"})).await;
    assert_eq!((bad_name.status, bad_name.code()), (400, "invalid_request"));
    let wrong_mode = a.post("/api/streams", json!({"name": "s", "dsl": "noop && noop"})).await;
    assert!(wrong_mode.status >= 400 && wrong_mode.status < 500);

    let deployed = a.call("POST", "/api/streams/routes/deploy", None).await;
    assert_eq!(deployed.status, 201, "{}", deployed.text);
    let run_id = deployed.json["run_id"].as_str().unwrap().to_string();
    assert_eq!(deployed.headers[header::LOCATION], format!("/api/runs/{run_id}"));
    let again = a.call("POST", "/api/streams/routes/deploy", None).await;
    assert_eq!((again.status, again.code()), (409, "already_deployed"));
    assert_eq!(a.get("/api/streams/routes").await.json["active_run"], run_id.as_str());

    let run = a
        .wait_run(&run_id, |r| r["node_states"].as_object().unwrap().values().all(|s| s == "succeeded"))
        .await;
    assert_eq!(run["state"], "running");
    let metrics = a.get(&format!("/api/runs/{run_id}/metrics")).await;
    assert_eq!(metrics.status, 200);
    assert_eq!(metrics.json["nodes"]["n3"]["records_in"], 50);
    let listed = a.get("/api/runs?workflow=routes&state=running").await.json;
    assert_eq!(listed.as_array().unwrap().len(), 1);
    assert_eq!(a.get("/api/runs?state=failed").await.json, json!([]));

    let table = a.post("/api/viz/query", json!({"table": "clustered", "limit": 5})).await;
    assert_eq!(table.status, 200);
    assert_eq!(table.json["rows"].as_array().unwrap().len(), 5);

    let undeployed = a.call("DELETE", "/api/streams/routes", None).await;
    assert_eq!(undeployed.status, 200);
    assert_eq!(undeployed.json["run"]["state"], "undeployed");
    assert_eq!(undeployed.json["destroyed"], false);
    let twice = a.call("DELETE", "/api/streams/routes", None).await;
    assert_eq!((twice.status, twice.code()), (409, "not_running"));
    assert_eq!(a.call("DELETE", "/api/streams/routes?destroy=maybe", None).await.status, 400);
    let destroyed = a.call("DELETE", "/api/streams/routes?destroy=true", None).await;
    assert_eq!((destroyed.status, &destroyed.json["destroyed"]), (200, &json!(true)));
    assert_eq!(a.get("/api/streams/routes").await.status, 404);
    assert_eq!(a.call("POST", "/api/streams/routes/deploy", None).await.status, 404);
    assert_eq!(a.get("/api/runs/run-424242").await.code(), "not_found");
    assert_eq!(a.get("/api/runs/run-424242/metrics").await.status, 404);
    // runs outlive their workflow definitions
    assert_eq!(a.get(&format!("/api/runs/{run_id}")).await.status, 200);
}

#[tokio::test(flavor = "multi_thread")]
async fn operator_init_errors_surface_with_the_node() {
    let a = api();
    let mut d = descriptor("mystery", "1.0.0");
    d["kind"] = json!("sink");
    d["params"] = json!([]);
    d["artifact_ref"] = json!("builtin:does-not-exist");
    assert_eq!(a.post("/api/services", d).await.status, 201);
    assert_eq!(a.post("/api/streams", json!({"name": "m", "dsl": "tick-source | sink: mystery"})).await.status, 201);
    let r = a.call("POST", "/api/streams/m/deploy", None).await;
    assert_eq!((r.status, r.code()), (422, "operator_init_error"));
    assert_eq!(r.json["details"]["node"], "sink");
    assert_eq!(a.get("/api/runs").await.json, json!([]));
}

#[tokio::test(flavor = "multi_thread")]
async fn task_lifecycle() {
    let a = api();
    let created = a.post("/api/tasks", json!({"name": "nap", "dsl": "noop && <a: sleep --ms=300 || b: noop> && noop"})).await;
    assert_eq!(created.status, 201, "{}", created.text);
    assert_eq!(created.headers[header::LOCATION], "/api/tasks/nap");
    assert_eq!(a.get("/api/tasks").await.json.as_array().unwrap().len(), 1);
    assert_eq!(a.get("/api/streams").await.json, json!([]));

    let launched = a.call("POST", "/api/tasks/nap/launch", None).await;
    assert_eq!(launched.status, 202);
    let run_id = launched.json["run_id"].as_str().unwrap().to_string();
    let busy = a.call("DELETE", "/api/tasks/nap", None).await;
    assert_eq!((busy.status, busy.code()), (409, "workflow_active"));
    let run = a.wait_run(&run_id, terminal).await;
    assert_eq!(run["state"], "completed");
    let metrics = a.get(&format!("/api/runs/{run_id}/metrics")).await.json;
    assert!(metrics["execution_time_ms"].as_f64().unwrap() >= 300.0);

    let failing = a.post("/api/tasks", json!({"name": "bad", "dsl": "fail --message=nope && noop"})).await;
    assert_eq!(failing.status, 201);
    let id = a.call("POST", "/api/tasks/bad/launch", None).await.json["run_id"].as_str().unwrap().to_string();
    let run = a.wait_run(&id, terminal).await;
    assert_eq!(run["state"], "failed");
    assert_eq!(run["node_states"]["n1"], "pending");
    assert_eq!(a.get("/api/runs?state=failed").await.json.as_array().unwrap().len(), 1);

    assert_eq!(a.call("POST", "/api/tasks/ghost/launch", None).await.status, 404);
    let deleted = a.call("DELETE", "/api/tasks/nap", None).await;
    assert_eq!(deleted.status, 200);
    assert_eq!(a.get("/api/tasks/nap").await.status, 404);
    assert_eq!(a.call("DELETE", "/api/tasks/nap", None).await.status, 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn optimizer_endpoints() {
    let a = api();
    let submitted = a.post("/api/optimizer/jobs", json!({"seed": 7, "training_n": 40})).await;
    assert_eq!(submitted.status, 202, "{}", submitted.text);
    let job_id = submitted.json["job_id"].as_str().unwrap().to_string();
    assert_eq!(submitted.headers[header::LOCATION], format!("/api/optimizer/jobs/{job_id}"));
    let deadline = Instant::now() + Duration::from_secs(30);
    let report = loop {
        let r = a.get(&format!("/api/optimizer/jobs/{job_id}")).await;
        assert_eq!(r.status, 200);
        if r.json["state"] != "running" || Instant::now() > deadline {
            break r.json;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    };
    assert_eq!(report["state"], "completed");
    assert_eq!(report["samples"].as_array().unwrap().len(), 40);
    assert!(report["recommended"]["values"].is_object() || report["recommended"].is_object());

    let empty = a.raw("POST", "/api/optimizer/jobs", vec![], None).await;
    assert_eq!(empty.status, 202);
    let bad = a.post("/api/optimizer/jobs", json!({"k": 0})).await;
    assert_eq!((bad.status, bad.code()), (422, "invalid_job"));
    let bad_rrs = a.post("/api/optimizer/jobs", json!({"rrs": {"q": 2.0}})).await;
    assert_eq!((bad_rrs.status, bad_rrs.code()), (422, "invalid_job"));
    assert_eq!(a.post("/api/optimizer/jobs", json!({"seed": "x"})).await.status, 400);
    assert_eq!(a.post("/api/optimizer/jobs", json!({"rrs": {"budget": 10}})).await.status, 400);
    assert_eq!(a.get("/api/optimizer/jobs/opt-999999").await.status, 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn viz_endpoints() {
    let a = api();
    let path = a.routes_file(40);
    let sources = a.get("/api/viz/sources").await;
    assert_eq!(sources.json.as_array().unwrap().len(), 1);
    let added = a.post("/api/viz/sources", json!({"kind": "delimited-file", "location": path})).await;
    assert_eq!(added.status, 201, "{}", added.text);
    let id = added.json["id"].as_str().unwrap().to_string();
    let tables = a.get(&format!("/api/viz/sources/{id}/tables")).await;
    assert_eq!(tables.json[0]["name"], "routes_40");
    assert_eq!(tables.json[0]["row_count"], 40);

    let dup = a.post("/api/viz/sources", json!({"id": id, "kind": "jsonl-file", "location": path})).await;
    assert_eq!((dup.status, dup.code()), (409, "duplicate_source"));
    let kind = a.post("/api/viz/sources", json!({"kind": "excel", "location": path})).await;
    assert_eq!((kind.status, kind.code()), (422, "unsupported_kind"));
    let gone = a.post("/api/viz/sources", json!({"kind": "delimited-file", "location": "/nope.csv"})).await;
    assert_eq!((gone.status, gone.code()), (422, "unreachable_source"));
    let delim = a.post("/api/viz/sources", json!({"kind": "delimited-file", "location": path, "options": {"delimiter": "::"}})).await;
    assert_eq!((delim.status, delim.code()), (422, "invalid_source"));
    assert_eq!(a.get("/api/viz/sources/ghost/tables").await.status, 404);

    let q = json!({
        "source_id": id, "table": "routes_40",
        "group_by": ["airline"], "aggregates": [{"fn": "count", "column": "*"}]
    });
    let grouped = a.post("/api/viz/query", q.clone()).await;
    assert_eq!(grouped.status, 200, "{}", grouped.text);
    let counts: i64 = grouped.json["rows"].as_array().unwrap().iter().map(|r| r[1].as_i64().unwrap()).sum();
    assert_eq!(counts, 40);
    let unknown = a.post("/api/viz/query", json!({"source_id": id, "table": "routes_40", "select": ["nope"]})).await;
    assert_eq!((unknown.status, unknown.code()), (422, "unknown_column"));
    let typed = a
        .post("/api/viz/query", json!({"source_id": id, "table": "routes_40", "aggregates": [{"fn": "sum", "column": "airline"}]}))
        .await;
    assert_eq!((typed.status, typed.code()), (422, "type_error"));
    assert_eq!(a.post("/api/viz/query", json!({"table": "missing"})).await.status, 404);

    let frame = json!({
        "schema": [{"name": "x", "dtype": "float"}, {"name": "y", "dtype": "float"}, {"name": "g", "dtype": "int"}],
        "rows": (0..60).map(|i| json!([i as f64, (i * 7 % 11) as f64, i % 3])).collect::<Vec<_>>()
    });
    let recs = a.post("/api/viz/recommend", json!({"frame": frame})).await;
    assert_eq!(recs.status, 200, "{}", recs.text);
    assert_eq!(recs.json[0]["chart_type"], "scatter");
    assert_eq!(recs.json[0]["encoding"]["color"], "g");
    let via_query = a.post("/api/viz/recommend", json!({"query": q})).await;
    assert_eq!(via_query.status, 200);
    assert_eq!(a.post("/api/viz/recommend", json!({"frame": frame, "query": q})).await.status, 400);
    assert_eq!(a.post("/api/viz/recommend", json!({})).await.status, 400);
    let empty = json!({"frame": {"schema": [{"name": "x", "dtype": "int"}], "rows": []}});
    let e = a.post("/api/viz/recommend", empty).await;
    assert_eq!((e.status, e.code()), (422, "empty_frame"));

    let short = a.get("/api/viz/refresh?query=%7B%22table%22%3A%22t%22%7D&interval_ms=10").await;
    assert_eq!(short.status, 400);
    assert_eq!(a.get("/api/viz/refresh").await.status, 400);
    assert_eq!(a.get("/api/viz/refresh?query=%7B&interval_ms=500").await.status, 400);
}

#[tokio::test(flavor = "multi_thread")]
async fn dsl_endpoints() {
    let a = api();
    let parsed = a.post("/api/dsl/parse", json!({"mode": "batch", "dsl": "prep: noop && <x: sleep --ms=1 || y: noop> && noop"})).await;
    assert_eq!(parsed.status, 200, "{}", parsed.text);
    let def = parsed.json.clone();
    assert_eq!(def["nodes"].as_array().unwrap().len(), 4);
    assert_eq!(def["edges"].as_array().unwrap().len(), 4);
    let serialized = a.post("/api/dsl/serialize", def.clone()).await;
    assert_eq!(serialized.status, 200);
    let reparsed = a.post("/api/dsl/parse", json!({"mode": "batch", "dsl": serialized.json["dsl"]})).await;
    assert_eq!(reparsed.json, def);

    let syntax = a.post("/api/dsl/parse", json!({"mode": "stream", "dsl": "a | | b"})).await;
    assert_eq!((syntax.status, syntax.code()), (400, "syntax_error"));
    assert_eq!(syntax.json["details"]["line"], 1);
    let unvalidated = a.post("/api/dsl/parse", json!({"mode": "stream", "dsl": "ghost | log-sink"})).await;
    assert_eq!(unvalidated.status, 200);
    let validated = a.post("/api/dsl/parse", json!({"mode": "stream", "dsl": "ghost | log-sink", "validate": true})).await;
    assert_eq!((validated.status, validated.code()), (422, "validation_error"));
    assert_eq!(a.post("/api/dsl/parse", json!({"dsl": "a"})).await.status, 400);
    let bad_def = json!({"name": "d", "mode": "batch", "nodes": [], "edges": []});
    assert_eq!(a.post("/api/dsl/serialize", bad_def).await.status, 422);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_routes_and_methods() {
    let a = api();
    let missing = a.get("/api/nothing/here").await;
    assert_eq!((missing.status, missing.code()), (404, "not_found"));
    assert_eq!(a.get("/elsewhere").await.status, 404);
    let method = a.call("PUT", "/api/services", None).await;
    assert_eq!((method.status, method.code()), (405, "method_not_allowed"));
    assert!(missing.text.ends_with('\n'));
}

#[tokio::test(flavor = "multi_thread")]
async fn ui_is_served_from_a_directory_or_a_placeholder() {
    let placeholder = api();
    let page = placeholder.get("/ui").await;
    assert_eq!(page.status, 200);
    assert!(page.headers[header::CONTENT_TYPE].to_str().unwrap().starts_with("text/html"));
    assert!(page.text.contains("/api"));

    let assets = tempfile::tempdir().unwrap();
    std::fs::write(assets.path().join("index.html"), "<h1>dashboard</h1>").unwrap();
    std::fs::write(assets.path().join("app.js"), "console.log(1)").unwrap();
    let served = api_with(Some(TOKEN), Some(assets.path().into()));
    let index = served.raw("GET", "/ui/", vec![], None).await;
    assert_eq!((index.status, index.text.as_str()), (200, "<h1>dashboard</h1>"));
    let js = served.raw("GET", "/ui/app.js", vec![], None).await;
    assert_eq!(js.status, 200);
    assert!(js.headers[header::CONTENT_TYPE].to_str().unwrap().contains("javascript"));
    assert_eq!(served.raw("GET", "/ui/missing.css", vec![], None).await.status, 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn rejected_requests_change_nothing() {
    let a = api();
    assert_eq!(a.post("/api/streams", json!({"name": "ok", "dsl": "tick-source | log-sink"})).await.status, 201);
    assert_eq!(a.post("/api/tasks", json!({"name": "t", "dsl": "noop"})).await.status, 201);
    let before = a.snapshot().await;
    let rejected = [
        a.post("/api/services", descriptor("log-sink", "1.0.0")).await,
        a.post("/api/services", json!({"name": "x"})).await,
        a.call("DELETE", "/api/services/log-sink/1.0.0", None).await,
        a.post("/api/streams", json!({"name": "ok", "dsl": "tick-source | log-sink"})).await,
        a.post("/api/streams", json!({"name": "s2", "dsl": "tick-source | ghost"})).await,
        a.post("/api/tasks", json!({"name": "t2", "dsl": "noop &&"})).await,
        a.call("DELETE", "/api/streams/ok", None).await,
        a.call("POST", "/api/streams/nope/deploy", None).await,
        a.call("POST", "/api/tasks/ok/launch", None).await,
        a.post("/api/optimizer/jobs", json!({"k": 0})).await,
        a.post("/api/viz/sources", json!({"kind": "excel", "location": "x"})).await,
        a.post("/api/viz/sources", json!({"id": "internal", "kind": "internal", "location": ""})).await,
    ];
    for r in &rejected {
        assert!((400..500).contains(&r.status), "{r:?}");
        assert!(r.json["message"].is_string());
    }
    assert_eq!(a.snapshot().await, before);
    // the workflow journal agrees after a reopen
    let reopened = Platform::open(a.platform.data_dir()).unwrap();
    assert_eq!(reopened.list_workflows(flowforge_core::dsl::WorkflowMode::Stream).len(), 1);
}

#[test]
fn server_sends_refresh_events() {
    let dir = tempfile::tempdir().unwrap();
    let platform = Arc::new(Platform::open(dir.path()).unwrap());
    let frame = serde_json::from_value(json!({"schema": [{"name": "v", "dtype": "int"}], "rows": [[1], [2]]})).unwrap();
    platform.tables().put("live", &frame).unwrap();
    let server = RunningServer::start(platform, "127.0.0.1:0".parse().unwrap(), Some(TOKEN.into()), None).unwrap();
    let agent: ureq::Agent =
        ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(Duration::from_secs(10))).build().into();
    let url = format!("{}/api/viz/refresh", server.url());
    let resp = agent
        .get(&url)
        .query("query", r#"{"table":"live"}"#)
        .query("interval_ms", "100")
        .header("Authorization", format!("Bearer {TOKEN}"))
        .call()
        .unwrap();
    assert_eq!(resp.status(), 200);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    let mut lines = BufReader::new(resp.into_body().into_reader()).lines();
    let started = Instant::now();
    let mut frames = Vec::new();
    while frames.len() < 2 {
        let line = lines.next().unwrap().unwrap();
        if line == "event: frame" {
            let data = lines.next().unwrap().unwrap();
            let body: Value = serde_json::from_str(data.strip_prefix("data: ").unwrap()).unwrap();
            frames.push(body);
        }
    }
    assert!(started.elapsed() >= Duration::from_millis(90));
    assert_eq!(frames[0]["rows"], json!([[1], [2]]));
    drop(lines);

    let missing = agent
        .get(&url)
        .query("query", r#"{"table":"absent"}"#)
        .query("interval_ms", "100")
        .header("Authorization", format!("Bearer {TOKEN}"))
        .call()
        .unwrap();
    let mut lines = BufReader::new(missing.into_body().into_reader()).lines();
    let first_event = lines.find(|l| l.as_ref().is_ok_and(|l| l.starts_with("event:"))).unwrap().unwrap();
    assert_eq!(first_event, "event: error");
    let unauth = agent.get(&url).query("query", "{}").call().unwrap();
    assert_eq!(unauth.status(), 401);
    server.stop();
}
