mod common;

use std::io::Read;

use provcat::service::ServerHandle;
use provcat::store::sha256_hex;
use serde_json::{json, Value};

fn server(n: usize) -> (tempfile::TempDir, ServerHandle, Vec<provcat::Rid>) {
    let dir = tempfile::tempdir().unwrap();
    let (ws, images) = common::image_workspace(&dir.path().join("ws"), n);
    let srv = ServerHandle::start(ws, "127.0.0.1:0".parse().unwrap()).unwrap();
    (dir, srv, images)
}

fn send(method: &str, url: &str, body: Option<Value>) -> (u16, ureq::Response) {
    let req = ureq::request(method, url);
    let r = match body {
        Some(b) => req.set("Content-Type", "application/json").send_string(&b.to_string()),
        None => req.call(),
    };
    match r {
        Ok(resp) => (resp.status(), resp),
        Err(ureq::Error::Status(code, resp)) => (code, resp),
        Err(e) => panic!("{e}"),
    }
}

fn json_of(resp: ureq::Response) -> Value {
    serde_json::from_reader(resp.into_reader()).unwrap()
}

#[test]
fn entity_reads_as_of_snapshot_survive_deletes() {
    let (_dir, srv, _) = server(2);
    let base = srv.url();
    let (s, resp) = send("POST", &format!("{base}/entity/Subject"), Some(json!([{"Name": "extra"}])));
    assert_eq!(s, 201);
    let snap: u64 = resp.header("Deriva-Snapshot").unwrap().parse().unwrap();
    let rows = json_of(resp);
    let rid = rows[0]["RID"].as_str().unwrap().to_string();

    let (s, resp) = send("DELETE", &format!("{base}/entity/Subject?RID={rid}"), None);
    assert_eq!(s, 200);
    let after: u64 = resp.header("Deriva-Snapshot").unwrap().parse().unwrap();
    assert_eq!(after, snap + 1);

    let now = json_of(send("GET", &format!("{base}/entity/Subject"), None).1);
    let then = json_of(send("GET", &format!("{base}/entity/Subject@{snap}"), None).1);
    assert_eq!(now.as_array().unwrap().len(), 3);
    assert_eq!(then.as_array().unwrap().len(), 4);
    assert!(then.as_array().unwrap().iter().any(|r| r["RID"] == rid.as_str()));

    let filtered = json_of(send("GET", &format!("{base}/entity/Subject@{snap}?Name=extra"), None).1);
    assert_eq!(filtered.as_array().unwrap().len(), 1);

    let (s, resp) = send("GET", &format!("{base}/entity/Subject@{}", after + 50), None);
    assert_eq!(s, 404);
    assert_eq!(json_of(resp)["code"], "future_snapshot");
}

#[test]
fn gets_do_not_advance_the_snapshot() {
    let (_dir, srv, _) = server(1);
    let base = srv.url();
    let before = json_of(send("GET", &format!("{base}/snapshot"), None).1)["snapshot"].clone();
    for path in ["/schema", "/schema/Image", "/entity/Image", "/vocab", "/dataset", "/workflow", "/execution"] {
        let (s, resp) = send("GET", &format!("{base}{path}"), None);
        assert_eq!(s, 200, "{path}");
        assert!(resp.header("Deriva-Snapshot").is_none());
    }
    let after = json_of(send("GET", &format!("{base}/snapshot"), None).1)["snapshot"].clone();
    assert_eq!(before, after);
}

#[test]
fn version_bump_over_http() {
    let (_dir, srv, images) = server(3);
    let base = srv.url();
    let created = json_of(send("POST", &format!("{base}/dataset"), Some(json!({"description": "pool"}))).1);
    let d = created["rid"].as_str().unwrap().to_string();
    assert_eq!(created["version"], "0.1.0");
    // 0.1.0 -> 1.0.0 -> 1.1.0 -> 1.2.0 -> 1.2.1 -> 1.2.2 -> 1.2.3
    send("POST", &format!("{base}/dataset/{d}/version"), Some(json!({"level": "major"})));
    send("POST", &format!("{base}/dataset/{d}/members"), Some(json!({"members": [images[0]]})));
    send("POST", &format!("{base}/dataset/{d}/members"), Some(json!({"members": [images[1]]})));
    for _ in 0..3 {
        send("POST", &format!("{base}/dataset/{d}/version"), Some(json!({"level": "patch"})));
    }
    let versions = json_of(send("GET", &format!("{base}/dataset/{d}/versions"), None).1);
    assert_eq!(versions.as_array().unwrap().last().unwrap()["version"], "1.2.3");

    let (s, resp) = send(
        "POST",
        &format!("{base}/dataset/{d}/version"),
        Some(json!({"level": "patch", "description": "fix labels"})),
    );
    assert_eq!(s, 201);
    let text = resp.into_string().unwrap();
    assert!(text.contains("1.2.4"), "{text}");

    let old = json_of(send("GET", &format!("{base}/dataset/{d}/members@1.1.0"), None).1);
    assert_eq!(old.as_array().unwrap().len(), 1);
    let cur = json_of(send("GET", &format!("{base}/dataset/{d}/members"), None).1);
    assert_eq!(cur.as_array().unwrap().len(), 2);
}

#[test]
fn error_mapping() {
    let (_dir, srv, _) = server(1);
    let base = srv.url();
    let (s, resp) = send("GET", &format!("{base}/id/minid:0000000000ZZ"), None);
    assert_eq!(s, 404);
    let body = json_of(resp);
    assert_eq!(body["code"], "id_not_found");
    assert_eq!(body["class"], "user");

    let (s, resp) = send("GET", &format!("{base}/entity/Nope"), None);
    assert_eq!((s, json_of(resp)["code"].clone()), (404, json!("unknown_table")));

    let (s, resp) = send("POST", &format!("{base}/schema"), Some(json!({"name": "Image", "kind": {"type": "plain"}})));
    assert_eq!((s, json_of(resp)["code"].clone()), (409, json!("duplicate_table")));

    let (s, resp) = send("POST", &format!("{base}/dataset"), Some(json!({"description": "x", "types": ["bogus"]})));
    assert_eq!(s, 404);
    assert_eq!(json_of(resp)["code"], "not_found");

    let (s, _) = send("PUT", &format!("{base}/store/a/b.bin"), None);
    assert_eq!(s, 201);
    let bad = ureq::put(&format!("{base}/store/a/c.bin"))
        .set("X-Content-SHA256", &"0".repeat(64))
        .send_bytes(b"abc");
    match bad {
        Err(ureq::Error::Status(422, r)) => assert_eq!(json_of(r)["code"], "checksum_mismatch"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn csv_content_negotiation() {
    let (_dir, srv, _) = server(1);
    let base = srv.url();
    let resp = ureq::post(&format!("{base}/entity/Subject"))
        .set("Content-Type", "text/csv")
        .set("Accept", "text/csv")
        .send_string("Name\nfrom-csv-1\nfrom-csv-2\n")
        .unwrap();
    assert_eq!(resp.status(), 201);
    assert!(resp.content_type().starts_with("text/csv"));
    let text = resp.into_string().unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "RID,RCT,RMT,Name");
    assert_eq!(lines.count(), 2);

    let all = ureq::get(&format!("{base}/entity/Subject?Name=from-csv-2"))
        .set("Accept", "text/csv")
        .call()
        .unwrap()
        .into_string()
        .unwrap();
    assert_eq!(all.lines().count(), 2);
    assert!(all.contains("from-csv-2"));
}

#[test]
fn object_store_pass_through() {
    let (_dir, srv, _) = server(1);
    let base = srv.url();
    let payload = b"model weights".to_vec();
    let put = ureq::put(&format!("{base}/store/models/m1.bin"))
        .set("X-Content-SHA256", &sha256_hex(&payload))
        .send_bytes(&payload)
        .unwrap();
    assert_eq!(put.status(), 201);
    let first = json_of(put);
    ureq::put(&format!("{base}/store/models/m1.bin")).send_bytes(b"v2").unwrap();

    let get = ureq::get(&format!("{base}/store/models/m1.bin")).call().unwrap();
    assert!(sha256_hex(b"v2").starts_with(get.header("X-Object-Version").unwrap()));
    let mut body = Vec::new();
    get.into_reader().read_to_end(&mut body).unwrap();
    assert_eq!(body, b"v2");

    let version = first["version_id"].as_str().unwrap();
    let old = ureq::get(&format!("{base}/store/models/m1.bin:{version}")).call().unwrap();
    assert_eq!(old.header("X-Content-SHA256").unwrap(), sha256_hex(&payload).as_str());
    let mut body = Vec::new();
    old.into_reader().read_to_end(&mut body).unwrap();
    assert_eq!(body, payload);

    let head = ureq::head(&format!("{base}/store/models/m1.bin")).call().unwrap();
    assert_eq!(head.header("Content-Length").unwrap(), "2");

    let listing = json_of(ureq::get(&format!("{base}/store/models")).call().unwrap());
    assert_eq!(listing, json!(["/models/m1.bin"]));
}

#[test]
fn execution_and_lineage_over_http() {
    let (dir, srv, images) = server(2);
    let base = srv.url();
    let d = json_of(send("POST", &format!("{base}/dataset"), Some(json!({"description": "pool"}))).1)["rid"].clone();
    send("POST", &format!("{base}/dataset/{}/members", d.as_str().unwrap()), Some(json!({"members": images})));
    send("POST", &format!("{base}/vocab/Workflow_Type"), Some(json!({"name": "training"})));
    let config = json!({
        "workflow": {"name": "train", "url": "https://example.org/train.sh", "workflow_type": "training",
                     "checksum": sha256_hex(b"#!/bin/sh\n")},
        "datasets": [{"rid": d, "materialize": false}],
        "parameters": {"lr": 0.1},
    });
    let root = dir.path().join("run1");
    let (s, resp) = send("POST", &format!("{base}/execution?root={}", root.display()), Some(config));
    assert_eq!(s, 201, "{:?}", resp.into_string());
    let exec = json_of(ureq::get(&format!("{base}/execution")).call().unwrap());
    let rid = exec[0]["rid"].as_str().unwrap().to_string();
    assert_eq!(exec[0]["status"], "running");

    std::fs::write(root.join("outputs/Image/pred.png"), b"prediction").unwrap();
    let (s, resp) = send("POST", &format!("{base}/execution/{rid}/finish"), Some(json!({})));
    assert_eq!(s, 200);
    let out = json_of(resp);
    assert_eq!(out["execution"]["status"], "completed");
    let asset = out["outputs"][0]["rid"].as_str().unwrap().to_string();

    let shown = json_of(send("GET", &format!("{base}/execution/{rid}"), None).1);
    assert_eq!(shown["datasets"].as_array().unwrap().len(), 1);

    let g = json_of(send("GET", &format!("{base}/lineage/{asset}?direction=upstream"), None).1);
    let rids: Vec<&str> = g["nodes"].as_array().unwrap().iter().map(|n| n["rid"].as_str().unwrap()).collect();
    assert!(rids.contains(&rid.as_str()));
    // asset, execution, dataset version, its two images, workflow, config
    assert_eq!(rids.len(), 7, "{g}");

    let dot = send("GET", &format!("{base}/lineage/{asset}?depth=1&format=dot"), None).1.into_string().unwrap();
    assert!(dot.starts_with("digraph"));
    let (s, _) = send("GET", &format!("{base}/lineage/{asset}?depth=0"), None);
    assert_eq!(s, 400);
}
