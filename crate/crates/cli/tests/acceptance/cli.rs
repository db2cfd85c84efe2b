use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn multicake(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multicake"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn write(dir: &TempDir, name: &str, value: &Value) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, serde_json::to_string(value).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn prism(dir: &TempDir) -> PathBuf {
    write(
        dir,
        "prism.json",
        &json!({"config": [2, 3], "players": [
            {"kind": "log_utility", "seed": 0, "linkage_strength": 0.5},
            {"kind": "log_utility", "seed": 1, "linkage_strength": 0.5}
        ]}),
    )
}

#[test]
fn solve_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("prism.out");
    let run = multicake(&[
        "solve",
        "--config",
        s(&prism(&dir)),
        "--seed",
        "3",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let report = read_json(&out);
    assert!(report["delta"].as_f64().unwrap() <= 1e-3);
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("converged"));

    let square = write(
        &dir,
        "square.json",
        &json!({"config": [2, 2], "players": [
            {"kind": "linked_bonus", "beta": 0.5, "mode": "same"},
            {"kind": "linked_bonus", "beta": 0.5, "mode": "different"}
        ]}),
    );
    let out = dir.path().join("square.out");
    let run = multicake(&["solve", "--config", s(&square), "--out", s(&out)]);
    assert_eq!(code(&run), 2);
    let flags = read_json(&out)["flags"].clone();
    assert!(flags
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f == "no existence guarantee"));

    let c444 = write(
        &dir,
        "c444.json",
        &json!({"config": [4, 4, 4], "players": [
            {"kind": "log_utility", "seed": 0, "linkage_strength": 0.5},
            {"kind": "log_utility", "seed": 1, "linkage_strength": 0.5}
        ], "schedule": [1, 2], "tol": 0.05}),
    );
    assert_eq!(code(&multicake(&["solve", "--config", s(&c444)])), 0);
}

#[test]
fn invalid_inputs_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", &json!({"config": [2, 3], "players": []}));
    let run = multicake(&["solve", "--config", s(&bad)]);
    assert_eq!(code(&run), 1);
    assert!(String::from_utf8_lossy(&run.stderr).contains("at least one player"));

    let cfg = prism(&dir);
    let run = multicake(&["solve", "--config", s(&cfg), "--mesh", "8,4"]);
    assert_eq!(code(&run), 1);
    assert_eq!(
        code(&multicake(&["solve", "--config", s(&cfg), "--tol", "0"])),
        1
    );
    assert_eq!(
        code(&multicake(&["solve", "--config", "/nonexistent.json"])),
        1
    );

    let humans = write(
        &dir,
        "h.json",
        &json!({"config": [2, 3], "players": [{"kind": "human"}, {"kind": "human"}]}),
    );
    let run = multicake(&["solve", "--config", s(&humans)]);
    assert_eq!(code(&run), 1);
    assert!(String::from_utf8_lossy(&run.stderr).contains("session server"));
}

#[test]
fn caps_are_enforced() {
    let dir = TempDir::new().unwrap();
    let cfg = prism(&dir);
    let run = multicake(&["solve", "--config", s(&cfg), "--cap", "100"]);
    assert_eq!(code(&run), 1);
    assert!(String::from_utf8_lossy(&run.stderr).contains("exceeds resource cap"));
    let run = multicake(&[
        "sweep",
        "--config",
        s(&cfg),
        "--grid",
        "50",
        "--cap",
        "1000",
    ]);
    assert_eq!(code(&run), 1);
    let run = multicake(&["explore-m4", "--grid", "12"]);
    assert_eq!(code(&run), 1);
    assert!(String::from_utf8_lossy(&run.stderr).contains("exceeds resource cap"));
}

#[test]
fn verify_flags_envy() {
    let dir = TempDir::new().unwrap();
    let cfg = prism(&dir);
    let report = dir.path().join("r.json");
    assert_eq!(
        code(&multicake(&[
            "solve",
            "--config",
            s(&cfg),
            "--seed",
            "4",
            "--out",
            s(&report)
        ])),
        0
    );
    let run = multicake(&[
        "verify",
        "--config",
        s(&cfg),
        "--seed",
        "4",
        "--division",
        s(&report),
        "--allocation",
        s(&report),
    ]);
    assert_eq!(code(&run), 0);

    // both players handed the other's selection
    let r = read_json(&report);
    let swapped = write(
        &dir,
        "swapped.json",
        &json!([r["allocation"]["B"], r["allocation"]["A"]]),
    );
    let division = write(&dir, "division.json", &r["division"]);
    let envy = dir.path().join("envy.json");
    let run = multicake(&[
        "verify",
        "--config",
        s(&cfg),
        "--seed",
        "4",
        "--division",
        s(&division),
        "--allocation",
        s(&swapped),
        "--out",
        s(&envy),
    ]);
    assert_eq!(code(&run), 2);
    assert!(read_json(&envy)["delta"].as_f64().unwrap() > 0.0);
}

#[test]
fn sweep_modes_and_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = prism(&dir);
    let cert = dir.path().join("cert.json");
    let run = multicake(&[
        "sweep",
        "--config",
        s(&cfg),
        "--grid",
        "24",
        "--out",
        s(&cert),
    ]);
    assert_eq!(code(&run), 2);
    let c = read_json(&cert);
    assert_eq!(c["certified"], false);
    assert!(c["solutions_found"].as_u64().unwrap() >= 1);
    assert!(c["hits"].as_array().unwrap().len() <= 1);

    let csv = dir.path().join("hits.csv");
    let run = multicake(&[
        "sweep",
        "--config",
        s(&cfg),
        "--grid",
        "24",
        "--mode",
        "collect",
        "--out",
        s(&cert),
        "--csv",
        s(&csv),
    ]);
    assert_eq!(code(&run), 0);
    let c = read_json(&cert);
    let found = c["solutions_found"].as_u64().unwrap();
    assert_eq!(c["hits"].as_array().unwrap().len() as u64, found);
    assert!(c.get("certified").is_none());
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count() as u64, found + 1);
}

#[test]
fn lemma_reports_each_part() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("lemma.json");
    let run = multicake(&["lemma", "--seed", "2", "--count", "300", "--out", s(&out)]);
    let r = read_json(&out);
    assert_eq!(r["random"]["count"], 300);
    assert_eq!(r["random"]["pass"], true);
    // the center lies on a face of every containing cell, so the positivity check decides the exit code
    assert_eq!(r["center_cell"]["weights_strictly_positive"], false);
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stdout).contains("FAIL"));
}

#[test]
fn explore_m4_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert_eq!(
        code(&multicake(&["explore-m4", "--grid", "3", "--out", s(&a)])),
        0
    );
    assert_eq!(
        code(&multicake(&[
            "--threads",
            "1",
            "explore-m4",
            "--grid",
            "3",
            "--out",
            s(&b)
        ])),
        0
    );
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = read_json(&a);
    assert_eq!(c["divisions_examined"], 20u64.pow(4));
    assert_eq!(c["mode"], "COLLECT");
}

#[test]
fn serve_answers_http() {
    use std::io::{Read, Write};
    use std::net::{TcpListener, TcpStream};
    use std::time::{Duration, Instant};

    let dir = TempDir::new().unwrap();
    let journal = dir.path().join("sessions.jsonl");
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let addr = format!("127.0.0.1:{port}");
    let mut child = Command::new(env!("CARGO_BIN_EXE_multicake"))
        .args(["serve", "--addr", &addr, "--journal", s(&journal)])
        .stdout(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(10);
    let mut stream = loop {
        match TcpStream::connect(&addr) {
            Ok(s) => break s,
            Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(50)),
            Err(e) => panic!("server did not start: {e}"),
        }
    };
    write!(
        stream,
        "GET /sessions/missing HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 404"), "{response}");
    assert!(response.contains("unknown_session"));
    assert!(journal.exists());
}
