use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use kpcast::fetch::{fetch, parse_manifest, sha256_hex, FetchOptions, FetchStatus, CHECKSUM_FILE};

/// Minimal HTTP server. `/flaky` fails once before succeeding; unknown paths
/// are 404. Returns the base URL and per-path hit counts.
fn serve() -> (String, Arc<Mutex<HashMap<String, usize>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(Mutex::new(HashMap::new()));
    let counter = Arc::clone(&hits);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
            loop {
                let mut h = String::new();
                if reader.read_line(&mut h).unwrap() == 0 || h == "\r\n" {
                    break;
                }
            }
            let n = {
                let mut m = counter.lock().unwrap();
                let c = m.entry(path.clone()).or_insert(0);
                *c += 1;
                *c
            };
            let (status, body): (&str, &[u8]) = match path.as_str() {
                "/kp.txt" => ("200 OK", b"kp data\n"),
                "/tampered.bin" => ("200 OK", b"not what was pinned"),
                "/flaky.csv" if n == 1 => ("503 Service Unavailable", b"busy"),
                "/flaky.csv" => ("200 OK", b"a,b\n1,2\n"),
                _ => ("404 Not Found", b"missing"),
            };
            let head = format!("HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len());
            let _ = stream.write_all(head.as_bytes());
            let _ = stream.write_all(body);
        }
    });
    (base, hits)
}

fn opts() -> FetchOptions {
    FetchOptions {
        attempts: 3,
        timeout: Duration::from_secs(5),
        backoff: Duration::from_millis(10),
        jobs: 2,
    }
}

#[test]
fn downloads_verifies_retries_and_skips() {
    let (base, hits) = serve();
    let dir = tempfile::tempdir().unwrap();
    let kp_sha = sha256_hex(b"kp data\n");
    let manifest = format!(
        "{base}/kp.txt {kp_sha}\n{base}/flaky.csv\n{base}/tampered.bin {}\n{base}/gone.txt\n",
        sha256_hex(b"pinned")
    );
    let entries = parse_manifest(&manifest).unwrap();
    let out = fetch(&entries, dir.path(), &opts()).unwrap();
    let status: Vec<&FetchStatus> = out.files.iter().map(|(_, s)| s).collect();
    assert_eq!(status[0], &FetchStatus::Downloaded);
    assert_eq!(status[1], &FetchStatus::Downloaded);
    assert!(matches!(status[2], FetchStatus::Failed(m) if m.contains("checksum")));
    assert!(matches!(status[3], FetchStatus::Failed(m) if m.contains("404")));
    assert!(!out.is_complete());
    assert_eq!(std::fs::read(dir.path().join("kp.txt")).unwrap(), b"kp data\n");
    assert!(!dir.path().join("tampered.bin").exists());
    {
        let h = hits.lock().unwrap();
        assert_eq!(h["/flaky.csv"], 2);
        assert_eq!(h["/tampered.bin"], 3);
        assert_eq!(h["/gone.txt"], 1);
    }
    let records = std::fs::read_to_string(dir.path().join(CHECKSUM_FILE)).unwrap();
    assert!(records.contains(&format!("{kp_sha}  kp.txt")));
    assert!(!records.contains("tampered.bin"));

    let again = fetch(&entries[..2], dir.path(), &opts()).unwrap();
    assert!(again.files.iter().all(|(_, s)| *s == FetchStatus::Skipped));
    let h = hits.lock().unwrap();
    assert_eq!((h["/kp.txt"], h["/flaky.csv"]), (1, 2));
}

#[test]
fn cli_fetch_reports_missing_files() {
    let (base, _) = serve();
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("urls.txt"), format!("{base}/kp.txt\n{base}/nope.txt\n")).unwrap();
    let cfg = dir.path().join("fetch.cfg");
    std::fs::write(&cfg, "[fetch]\nmanifest = urls.txt\nout_dir = raw\nbackoff_ms = 1\n").unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(kpcast::cli::run(["kpcast", "fetch", "--config", c]), 1);
    assert!(dir.path().join("raw/kp.txt").exists());
    std::fs::write(dir.path().join("urls.txt"), format!("{base}/kp.txt\n")).unwrap();
    assert_eq!(kpcast::cli::run(["kpcast", "fetch", "--config", c]), 0);
}
