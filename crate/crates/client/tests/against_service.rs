use std::net::SocketAddr;
use std::thread;

use clap::Parser;
use serde_json::Value;

use sectrain_client::{execute, Cli, Client, Command, Format};
use sectrain_service::{router, AppState};

/// Serves the real router on an ephemeral port from a background runtime.
fn start_service() -> SocketAddr {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || rt.block_on(async { axum::serve(listener, router(AppState::default())).await.unwrap() }));
    addr
}

fn cli(addr: SocketAddr, args: &[&str]) -> Cli {
    let port = addr.port().to_string();
    let mut all = vec!["sectrain", "--host", "127.0.0.1", "--port", &port];
    all.extend_from_slice(args);
    Cli::try_parse_from(all).unwrap()
}

#[test]
fn counts_to_csv_file() {
    let addr = start_service();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("counts.csv");
    let out_s = out.to_str().unwrap();
    execute(&cli(addr, &["--command", "counts", "--inputs", "8,16", "--kernels", "3", "--out", out_s])).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("sweep,input,kernel"));
    assert!(lines.next().unwrap().starts_with("toy,"));
    assert_eq!(text.lines().count(), 1 + 1 + 2 + 1);
}

#[test]
fn train_json_report_with_verification() {
    let addr = start_service();
    let body = execute(&cli(
        addr,
        &["--command", "train", "--samples", "2", "--batch", "2", "--verify", "--format", "json", "--seed", "3"],
    ))
    .unwrap();
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["matches_reference"], true);
    assert_eq!(v["server"]["errors"], 0);
    assert!(v["metrics"][0]["bytes_offline"].as_u64().unwrap() > 0);
}

#[test]
fn service_errors_surface_with_their_message() {
    let addr = start_service();
    let err = execute(&cli(addr, &["--command", "bench-he", "--backend", "clear"])).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("bench-he failed") && msg.contains("rlwe"), "{msg}");
}

#[test]
fn health_and_unreachable_service() {
    let addr = start_service();
    let c = Client::new("127.0.0.1", addr.port(), std::time::Duration::from_secs(5)).unwrap();
    assert_eq!(c.health().unwrap()["status"], "ok");
    let closed = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let c = Client::new("127.0.0.1", closed, std::time::Duration::from_secs(5)).unwrap();
    let err = c.run(Command::Counts, &Value::Null, Format::Json).unwrap_err();
    assert!(format!("{err:#}").contains("cannot reach"));
}
