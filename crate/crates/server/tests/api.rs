mod common;

use std::sync::Arc;

use common::*;
use etb_core::access::{Actor, Role};
use etb_core::model::Visibility;
use etb_server::instance::Instance;
use etb_server::logging::{read_log, Level};
use reqwest::Method;
use serde_json::json;
use uuid::Uuid;

struct Fixture {
    _dir: tempfile::TempDir,
    instance: Instance,
    server: Server,
    group: Uuid,
    collection: Uuid,
}

/// A node with one user per role in group "terms", an outsider, and a
/// public collection.
fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let instance = Instance::open(node_config(dir.path())).unwrap();
    let node = instance.node().unwrap().clone();
    let group = node.create_group("terms", &Actor::System).unwrap();
    for role in Role::ALL {
        let user = node.add_user(&format!("{role}-user"), "pw", &Actor::System).unwrap();
        node.set_role(user, group, Some(role), &Actor::System).unwrap();
    }
    node.add_user("visitor", "pw", &Actor::System).unwrap();
    let mut meta = etb_core::model::CollectionMeta::new("Datorzinātne");
    meta.declared_languages = vec!["lv".into(), "en".into()];
    let collection = node.create_collection(meta, group, &Actor::System).unwrap();
    node.set_visibility(collection, Visibility::Public, &Actor::System).unwrap();
    let server = spawn(instance.router());
    Fixture { _dir: dir, instance, server, group, collection }
}

#[test]
fn authentication() {
    let f = fixture();
    let api = Api::new(&f.server);
    let (status, session) =
        api.post("/api/v1/auth/token", &json!({ "username": "reader-user", "credential": "pw" }));
    assert_eq!(status, 200);
    assert_eq!(session["token"].as_str().unwrap().len(), 43);
    assert!(session["expires_at"].is_string());

    let wrong = api.post("/api/v1/auth/token", &json!({ "username": "reader-user", "credential": "nope" }));
    let unknown = api.post("/api/v1/auth/token", &json!({ "username": "ghost", "credential": "pw" }));
    assert_eq!(wrong.0, 401);
    assert_eq!(wrong.1["code"], "INVALID_CREDENTIALS");
    assert_eq!(wrong, unknown);

    let stale = api.as_user("not-a-token");
    let (status, body) = stale.get("/api/v1/collections");
    assert_eq!((status, body["code"].as_str()), (401, Some("UNAUTHENTICATED")));
}

#[test]
fn missing_token_and_unknown_routes() {
    let f = fixture();
    let api = Api::new(&f.server);
    let (status, body) = api.post("/api/v1/collections", &json!({ "name": "x", "owner_group": f.group }));
    assert_eq!((status, body["code"].as_str()), (401, Some("UNAUTHENTICATED")));
    let (status, body) = api.post(&format!("/api/v1/collections/{}/entries", f.collection), &entry_json("lv", "dators"));
    assert_eq!((status, body["code"].as_str()), (401, Some("UNAUTHENTICATED")));
    let (status, body) = api.get("/api/v1/nope");
    assert_eq!((status, body["code"].as_str()), (404, Some("NOT_FOUND")));
    assert_eq!(body["http_status"], 404);
}

#[test]
fn entry_workflow() {
    let f = fixture();
    let api = Api::new(&f.server);
    let contributor = api.login("contributor-user", "pw");
    let approver = api.login("approver-user", "pw");
    let reader = api.login("reader-user", "pw");
    let entries = format!("/api/v1/collections/{}/entries", f.collection);

    let (status, created) = contributor.post(&entries, &entry_json("lv", "dators"));
    assert_eq!(status, 201, "{created}");
    assert_eq!(created["revision"], 1);
    let eid = created["entry_id"].as_str().unwrap().to_string();
    let path = format!("{entries}/{eid}");

    // Drafts are invisible to outsiders and anonymous callers.
    assert_eq!(api.get(&path).0, 404);
    assert_eq!(api.get("/api/v1/search?q=dators").1["total"], 0);
    let (status, entry) = reader.get(&path);
    assert_eq!(status, 200);
    assert_eq!(entry["workflow_status"], "draft");

    // Optimistic concurrency on edits.
    let mut edit = entry.clone();
    edit["definition"] = json!("Elektroniska skaitļošanas ierīce");
    edit["revision"] = json!(0);
    let (status, body) = contributor.send(Method::PUT, &path, &edit);
    assert_eq!((status, body["code"].as_str()), (409, Some("STALE_REVISION")));
    assert_eq!(body["current_revision"], 1);
    edit["revision"] = json!(1);
    let (status, body) = contributor.send(Method::PUT, &path, &edit);
    assert_eq!((status, body["revision"].as_u64()), (200, Some(2)));

    // Validation, role floors and id mismatch.
    let (status, body) = contributor.post(&entries, &entry_json("lv", "a\nb"));
    assert_eq!((status, body["code"].as_str()), (422, Some("VALIDATION_FAILED")));
    assert_eq!(body["issues"][0]["code"], "MULTILINE_TERM");
    let (status, body) = reader.post(&entries, &entry_json("lv", "pele"));
    assert_eq!((status, body["code"].as_str()), (403, Some("UNAUTHORIZED")));
    let (status, body) = contributor.post(&format!("{path}/approve"), &json!({}));
    assert_eq!((status, body["code"].as_str()), (403, Some("UNAUTHORIZED")));
    let (status, _) = contributor.send(Method::PUT, &format!("{entries}/{}", Uuid::new_v4()), &edit);
    assert_eq!(status, 400);

    let (status, body) = approver.post(&format!("{path}/approve"), &json!({}));
    assert_eq!((status, body["revision"].as_u64()), (200, Some(3)));
    let (status, body) = approver.post(&format!("{path}/approve"), &json!({}));
    assert_eq!((status, body["code"].as_str()), (409, Some("ALREADY_APPROVED")));

    let (status, results) = api.get("/api/v1/search?q=dators");
    assert_eq!(status, 200);
    assert_eq!(results["total"], 1);
    assert_eq!(results["hits"][0]["entry_id"], eid.as_str());
    assert_eq!(results["hits"][0]["score"], 3);
    assert!(results["hits"][0].get("node_id").is_none());
    let (_, facets) = api.get("/api/v1/facets");
    assert_eq!(facets["languages"]["lv"], 1);

    let (status, tombstone) = contributor.send(Method::DELETE, &path, &json!(null));
    assert_eq!((status, tombstone["revision"].as_u64()), (200, Some(4)));
    assert_eq!(api.get(&path).0, 404);
    assert_eq!(api.get("/api/v1/search?q=dators").1["total"], 0);
}

#[test]
fn malformed_requests_are_bad_requests() {
    let f = fixture();
    let contributor = Api::new(&f.server).login("contributor-user", "pw");
    let entries = format!("/api/v1/collections/{}/entries", f.collection);
    let raw = contributor
        .request(Method::POST, &entries)
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .unwrap();
    let (status, body) = read(raw);
    assert_eq!((status, body["code"].as_str()), (400, Some("BAD_REQUEST")));
    let (status, body) = contributor.post(&entries, &json!({ "lang_sections": "nope" }));
    assert_eq!((status, body["code"].as_str()), (400, Some("BAD_REQUEST")));
    let (status, body) = contributor.get("/api/v1/collections/not-a-uuid");
    assert_eq!((status, body["code"].as_str()), (400, Some("BAD_REQUEST")));
    let (status, body) = contributor.get("/api/v1/search?q=x&limit=1000");
    assert_eq!((status, body["code"].as_str()), (400, Some("INVALID_QUERY")));
    let (status, body) = contributor.get("/api/v1/search?q=x&include_drafts=maybe");
    assert_eq!((status, body["code"].as_str()), (400, Some("BAD_REQUEST")));
    let (status, body) = contributor.get(&format!("/api/v1/collections/{}/export?format=xlsx", f.collection));
    assert_eq!((status, body["code"].as_str()), (400, Some("BAD_REQUEST")));
}

#[test]
fn collections_and_visibility() {
    let f = fixture();
    let api = Api::new(&f.server);
    let admin = api.login("admin-user", "pw");
    let contributor = api.login("contributor-user", "pw");
    let visitor = api.login("visitor", "pw");

    let (status, created) = contributor.post(
        "/api/v1/collections",
        &json!({ "name": "Ķīmija", "owner_group": f.group, "declared_languages": ["lv"] }),
    );
    assert_eq!(status, 201, "{created}");
    assert_eq!(created["visibility"], "private");
    let cid = created["meta"]["id"].as_str().unwrap().to_string();
    let (status, body) = contributor.post("/api/v1/collections", &json!({ "name": "ĶĪMIJA", "owner_group": f.group }));
    assert_eq!((status, body["code"].as_str()), (409, Some("DUPLICATE_NAME")));

    assert_eq!(visitor.get(&format!("/api/v1/collections/{cid}")).0, 404);
    assert_eq!(visitor.get("/api/v1/collections").1.as_array().unwrap().len(), 1);
    let visibility = format!("/api/v1/collections/{cid}/visibility");
    let (status, body) = contributor.send(Method::PATCH, &visibility, &json!({ "visibility": "group" }));
    assert_eq!((status, body["code"].as_str()), (403, Some("UNAUTHORIZED")));
    let (status, body) = admin.send(Method::PATCH, &visibility, &json!({ "visibility": "group" }));
    assert_eq!((status, body["visibility"].as_str()), (200, Some("group")));
    assert_eq!(visitor.get(&format!("/api/v1/collections/{cid}")).0, 200);
    assert_eq!(api.get(&format!("/api/v1/collections/{cid}")).0, 404);
}

#[test]
fn import_export_and_content_types() {
    let f = fixture();
    let api = Api::new(&f.server);
    let contributor = api.login("contributor-user", "pw");
    let csv = "id,term:lv,term:en\r\n,dators,computer\r\n,pele|datorpele,mouse\r\n";
    let import = contributor
        .request(Method::POST, &format!("/api/v1/collections/{}/import?format=csv", f.collection))
        .header("content-type", "text/csv")
        .body(csv)
        .send()
        .unwrap();
    let (status, report) = read(import);
    assert_eq!(status, 200, "{report}");
    assert_eq!(report["created"], 2);

    let export = |who: &Api, query: &str| {
        let r = who.request(Method::GET, &format!("/api/v1/collections/{}/export?{query}", f.collection)).send().unwrap();
        let ct = r.headers()["content-type"].to_str().unwrap().to_string();
        (r.status().as_u16(), ct, r.bytes().unwrap().to_vec())
    };
    let (status, ct, body) = export(&contributor, "format=tbx&include_drafts=true");
    assert_eq!(status, 200);
    assert_eq!(ct, "application/x-tbx+xml; charset=utf-8");
    let doc = etb_core::tbx::parse_tbx(&body).unwrap();
    assert_eq!(doc.entries.len(), 2);
    let (_, ct, body) = export(&contributor, "format=csv&include_drafts=true");
    assert_eq!(ct, "text/csv; charset=utf-8");
    assert!(String::from_utf8(body).unwrap().contains("pele|datorpele"));
    // Drafts never leave the group.
    let (_, _, body) = export(&api, "format=tbx&include_drafts=true");
    assert!(etb_core::tbx::parse_tbx(&body).unwrap().entries.is_empty());

    let bad = contributor
        .request(Method::POST, &format!("/api/v1/collections/{}/import?format=tbx", f.collection))
        .body("<tbx")
        .send()
        .unwrap();
    let (status, body) = read(bad);
    assert_eq!((status, body["code"].as_str()), (400, Some("PARSE_FAILED")));
}

#[test]
fn comment_threads() {
    let f = fixture();
    let node = f.instance.node().unwrap();
    let entry = etb_core::model::TermEntry::new(vec![etb_core::model::LangSection::new(
        "lv",
        vec![etb_core::model::TermRecord::new("tīkls")],
    )]);
    let eid = entry.id;
    node.upsert_entry(f.collection, entry, &Actor::System).unwrap();
    node.approve_entry(f.collection, eid, &Actor::System).unwrap();

    let api = Api::new(&f.server);
    let path = format!("/api/v1/entries/{eid}/comments");
    let (status, body) = api.post(&path, &json!({ "body": "anonymous" }));
    assert_eq!((status, body["code"].as_str()), (401, Some("UNAUTHENTICATED")));
    let visitor = api.login("visitor", "pw");
    for text in ["first", "second", "third"] {
        assert_eq!(visitor.post(&path, &json!({ "body": text })).0, 201);
    }
    let (status, body) = visitor.post(&path, &json!({ "body": "  " }));
    assert_eq!((status, body["code"].as_str()), (400, Some("EMPTY_BODY")));
    let (status, thread) = api.get(&path);
    assert_eq!(status, 200);
    let bodies: Vec<&str> = thread.as_array().unwrap().iter().map(|c| c["body"].as_str().unwrap()).collect();
    assert_eq!(bodies, ["first", "second", "third"]);
    assert_eq!(api.get(&format!("/api/v1/entries/{}/comments", Uuid::new_v4())).0, 404);
}

#[test]
fn one_log_line_per_request_with_echoed_ids() {
    let f = fixture();
    let api = Api::new(&f.server);
    let reader = api.login("reader-user", "pw");
    let mut ids = Vec::new();
    let requests: Vec<(Method, String)> = vec![
        (Method::GET, "/api/v1/search?q=dators".into()),
        (Method::GET, "/api/v1/nope".into()),
        (Method::POST, format!("/api/v1/collections/{}/entries", f.collection)),
        (Method::GET, "/api/v1/collections".into()),
    ];
    for (i, (method, path)) in requests.iter().enumerate() {
        let mut request = reader.request(method.clone(), path).header("x-request-id", format!("req-{i}"));
        if *method == Method::POST {
            request = request.json(&entry_json("lv", "x"));
        }
        let response = request.send().unwrap();
        ids.push(response.headers()["x-request-id"].to_str().unwrap().to_string());
    }
    let generated = reader.request(Method::GET, "/api/v1/collections").send().unwrap();
    let generated_id = generated.headers()["x-request-id"].to_str().unwrap().to_string();
    assert_eq!(generated_id.len(), 36);
    assert_eq!(ids, ["req-0", "req-1", "req-2", "req-3"]);

    let lines: Vec<_> = read_log(&f.instance.config.log_path(), Level::Debug, None)
        .unwrap()
        .into_iter()
        .filter(|l| l.request_id.is_some())
        .collect();
    // The login request plus the five above.
    assert_eq!(lines.len(), 6);
    let by_id = |id: &str| lines.iter().find(|l| l.request_id.as_deref() == Some(id)).unwrap();
    let search = by_id("req-0");
    assert_eq!((search.level, search.outcome.as_str()), (Level::Info, "200"));
    assert_eq!(search.actor, "reader-user");
    assert_eq!(search.route, "GET /api/v1/search");
    assert_eq!(by_id("req-1").outcome, "404");
    let denied = by_id("req-2");
    assert_eq!((denied.level, denied.outcome.as_str()), (Level::Warn, "403"));
    assert_eq!(denied.route, "POST /api/v1/collections/:cid/entries");
    assert_eq!(denied.detail.as_deref(), Some("UNAUTHORIZED"));
    assert!(by_id(&generated_id).ts >= search.ts);
}

#[test]
fn concurrent_requests_serialize_cleanly() {
    let f = fixture();
    let api = Arc::new(Api::new(&f.server).login("contributor-user", "pw"));
    let entries = format!("/api/v1/collections/{}/entries", f.collection);
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let api = api.clone();
            let entries = entries.clone();
            std::thread::spawn(move || {
                (0..10).map(|j| api.post(&entries, &entry_json("lv", &format!("vārds{i}x{j}"))).0).collect::<Vec<_>>()
            })
        })
        .collect();
    for h in handles {
        assert!(h.join().unwrap().iter().all(|s| *s == 201));
    }
    let node = f.instance.node().unwrap();
    assert_eq!(node.all_entries().len(), 80);
}
