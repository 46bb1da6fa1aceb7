//! Serve a catalog over HTTP and talk to it with a plain client.

use provcat::catalog::CatalogOptions;
use provcat::service::ServerHandle;
use provcat::Workspace;

fn main() -> provcat::Result<()> {
    let dir = tempfile::tempdir()?;
    let ws = Workspace::init(dir.path(), CatalogOptions::logical())?;
    let server = ServerHandle::start(ws, "127.0.0.1:0".parse().unwrap())?;
    let base = server.url();
    println!("serving on {base}");

    let post = |path: &str, body: &str| -> String {
        let resp = ureq::post(&format!("{base}{path}"))
            .set("Content-Type", "application/json")
            .send_string(body)
            .expect("request");
        let snap = resp.header("deriva-snapshot").unwrap_or("-").to_string();
        format!("[snapshot {snap}] {}", resp.into_string().unwrap())
    };
    let get = |path: &str| ureq::get(&format!("{base}{path}")).call().unwrap().into_string().unwrap();

    println!("{}", post("/schema", r#"{"name":"Specimen","kind":{"type":"plain"},"columns":[{"name":"Label","kind":"text"}]}"#));
    println!("{}", post("/entity/Specimen", r#"[{"Label":"s1"},{"Label":"s2"}]"#));
    println!("{}", post("/dataset", r#"{"description":"specimens"}"#));
    println!("{}", get("/entity/Specimen?Label=s2"));
    println!("{}", get("/snapshot"));

    match ureq::get(&format!("{base}/entity/Nope")).call() {
        Err(ureq::Error::Status(code, r)) => println!("{code}: {}", r.into_string().unwrap()),
        other => println!("unexpected: {other:?}"),
    }
    Ok(())
}
