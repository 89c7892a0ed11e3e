use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_docvault");

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let out = Command::new(BIN).args(args).envs(envs.iter().copied()).output().unwrap();
    assert!(
        out.status.success(),
        "docvault {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn corpus_generate_writes_truth_and_templates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run(&["corpus", "generate", "--out", out, "--per-template", "1", "--seed", "3"], &[]);
    let truth: Value = serde_json::from_slice(&std::fs::read(dir.path().join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth.as_array().unwrap().len(), 3);
    assert!(dir.path().join("templates/id_card.json").exists());
}

#[test]
fn harness_anchor_reports_exactly_once() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("lat.csv");
    let out = run(
        &["harness", "anchor", "--n", "200", "--parallelism", "16", "--seal-ms", "5", "--csv", csv.to_str().unwrap()],
        &[],
    );
    let report = json(&out);
    assert_eq!(report["inclusions"], 200);
    assert_eq!(report["duplicates"], 0);
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 201);
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn wait_for_state(server: &[(&str, &str)], id: &str, want: &str) {
    let deadline = Instant::now() + Duration::from_secs(120);
    loop {
        let v = json(&run(&["status", id], server));
        if v["state"] == want {
            return;
        }
        assert_ne!(v["state"], "FAILED", "{v}");
        assert!(Instant::now() < deadline, "stuck in {}", v["state"]);
        std::thread::sleep(Duration::from_millis(100));
    }
}

#[test]
fn end_to_end_against_a_live_server() {
    let dir = tempfile::tempdir().unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let bind = format!("127.0.0.1:{port}");
    let base = format!("http://{bind}");
    let data = dir.path().join("data");
    let local = [
        ("DOCVAULT_DATA_DIR", data.to_str().unwrap()),
        ("DOCVAULT_BIND", bind.as_str()),
        ("DOCVAULT_BASE_URL", base.as_str()),
        ("DOCVAULT_MASTER_PASSPHRASE", "cli test passphrase"),
        ("DOCVAULT_PBKDF2_ITERATIONS", "1000"),
        ("DOCVAULT_PASSWORD_ITERATIONS", "1000"),
    ];
    run(&["admin", "create-user", "owner", "--password", "owner-pass"], &local);
    let notary = json(&run(
        &["admin", "create-user", "notary", "--password", "notary-pass", "--scopes", "notary"],
        &local,
    ));
    run(&["admin", "register-notary", notary["user_id"].as_str().unwrap()], &local);

    let _server = Server(
        Command::new(BIN)
            .arg("serve")
            .envs(local.iter().copied())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let remote = [("DOCVAULT_SERVER", base.as_str())];
    let deadline = Instant::now() + Duration::from_secs(60);
    while std::net::TcpStream::connect(&bind).is_err() {
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(50));
    }
    let login = |u: &str, p: &str| {
        String::from_utf8(run(&["login", u, "--password", p], &remote).stdout).unwrap().trim().to_string()
    };
    let owner_token = login("owner", "owner-pass");
    let notary_token = login("notary", "notary-pass");
    let owner = [("DOCVAULT_SERVER", base.as_str()), ("DOCVAULT_TOKEN", owner_token.as_str())];
    let notary = [("DOCVAULT_SERVER", base.as_str()), ("DOCVAULT_TOKEN", notary_token.as_str())];

    let card = dir.path().join("card.png");
    let layout = docvault_core::extract::corpus::layout("id_card").unwrap();
    std::fs::write(&card, docvault_core::extract::corpus::document(&layout, 77).image.encode_png()).unwrap();
    let up = json(&run(&["upload", card.to_str().unwrap(), "--description", "id"], &owner));
    let id = up["id"].as_str().unwrap().to_string();
    wait_for_state(&owner, &id, "NOTARIZATION_AWAITING");
    let queue = json(&run(&["notary", "queue"], &notary));
    assert_eq!(queue[0]["document_id"], id.as_str());
    run(&["notary", "approve", &id], &notary);
    wait_for_state(&owner, &id, "COMPLETED");

    let doc = json(&run(&["status", &id], &owner));
    let zone = doc["zones"][0]["zone_id"].to_string();
    let link = json(&run(&["share", &id, "--zones", &zone, "--max-accesses", "2"], &owner));
    let uuid = link["uuid"].as_str().unwrap().to_string();
    let revealed = dir.path().join("revealed.png");
    let view = json(&run(&["open", &uuid, "--out", revealed.to_str().unwrap()], &remote));
    assert_eq!(view["content_id"], doc["content_id"]);
    assert!(Path::new(&revealed).exists());
    let report = json(&run(&["verify", doc["content_id"].as_str().unwrap()], &remote));
    assert_eq!(report["hash_match"], true);
    assert_eq!(report["anchored"], true);
    assert_eq!(report["notary_signature_valid"], true);
    run(&["revoke", &uuid], &owner);
    let out = Command::new(BIN).args(["open", &uuid]).envs(remote).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("410"));
    // The server wrote its own log next to the event log.
    assert!(data.join("logs/server.log").exists());
}
