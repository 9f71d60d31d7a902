//! Download of configured URLs with SHA-256 bookkeeping.
//!
//! Manifest lines are `url [sha256|-] [file_name]`; blank lines and lines
//! starting with `#` are ignored. The file name defaults to the last path
//! segment of the URL. Checksums of completed downloads are recorded in
//! `checksums.sha256` inside the output directory.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CHECKSUM_FILE: &str = "checksums.sha256";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub url: String,
    pub sha256: Option<String>,
    pub file_name: String,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts.len() > 3 {
            return Err(Error::Parse { line: n + 1, message: "expected `url [sha256|-] [file_name]`".into() });
        }
        let url = parts[0].to_string();
        let sha256 = match parts.get(1) {
            None | Some(&"-") => None,
            Some(s) if s.len() == 64 && s.chars().all(|c| c.is_ascii_hexdigit()) => Some(s.to_ascii_lowercase()),
            Some(s) => return Err(Error::Parse { line: n + 1, message: format!("bad sha256 {s:?}") }),
        };
        let file_name = match parts.get(2) {
            Some(name) => name.to_string(),
            None => url
                .split(['?', '#'])
                .next()
                .and_then(|u| u.rsplit('/').next())
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Parse { line: n + 1, message: format!("cannot derive a file name from {url}") })?
                .to_string(),
        };
        if file_name.contains(['/', '\\']) || file_name == ".." || file_name == CHECKSUM_FILE {
            return Err(Error::Parse { line: n + 1, message: format!("unsafe file name {file_name:?}") });
        }
        out.push(ManifestEntry { url, sha256, file_name });
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub attempts: usize,
    pub timeout: Duration,
    pub backoff: Duration,
    pub jobs: usize,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            attempts: 3,
            timeout: Duration::from_secs(60),
            backoff: Duration::from_millis(500),
            jobs: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchStatus {
    Downloaded,
    Skipped,
    Failed(String),
}

#[derive(Debug, Clone, Default)]
pub struct FetchOutcome {
    pub files: Vec<(PathBuf, FetchStatus)>,
}

impl FetchOutcome {
    pub fn count(&self, pred: impl Fn(&FetchStatus) -> bool) -> usize {
        self.files.iter().filter(|(_, s)| pred(s)).count()
    }

    pub fn failures(&self) -> Vec<(&Path, &str)> {
        self.files
            .iter()
            .filter_map(|(p, s)| match s {
                FetchStatus::Failed(m) => Some((p.as_path(), m.as_str())),
                _ => None,
            })
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.failures().is_empty()
    }
}

fn read_records(dir: &Path) -> BTreeMap<String, String> {
    let Ok(text) = std::fs::read_to_string(dir.join(CHECKSUM_FILE)) else {
        return BTreeMap::new();
    };
    text.lines()
        .filter_map(|l| l.split_once("  "))
        .map(|(h, n)| (n.trim().to_string(), h.trim().to_string()))
        .collect()
}

fn write_records(dir: &Path, records: &BTreeMap<String, String>) -> Result<()> {
    let text: String = records.iter().map(|(n, h)| format!("{h}  {n}\n")).collect();
    let path = dir.join(CHECKSUM_FILE);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Body of `url`, or the error and whether another attempt may help.
fn download(url: &str, timeout: Duration) -> std::result::Result<Vec<u8>, (Error, bool)> {
    let fail = |message: String, retry: bool| (Error::Fetch { url: url.to_string(), message }, retry);
    let resp = ureq::get(url).timeout(timeout).call().map_err(|e| match e {
        ureq::Error::Status(code, _) => fail(format!("status code {code}"), !(400..500).contains(&code) || code == 429),
        ureq::Error::Transport(t) => fail(t.to_string(), true),
    })?;
    let mut bytes = Vec::new();
    resp.into_reader().read_to_end(&mut bytes).map_err(|e| fail(e.to_string(), true))?;
    Ok(bytes)
}

fn fetch_one(entry: &ManifestEntry, dir: &Path, recorded: Option<&String>, opts: &FetchOptions) -> (FetchStatus, Option<String>) {
    let path = dir.join(&entry.file_name);
    let expected = entry.sha256.as_ref().or(recorded);
    if let (Some(want), Ok(bytes)) = (expected, std::fs::read(&path)) {
        if &sha256_hex(&bytes) == want {
            return (FetchStatus::Skipped, Some(want.clone()));
        }
    }
    let mut last = String::new();
    for attempt in 0..opts.attempts.max(1) {
        if attempt > 0 {
            std::thread::sleep(opts.backoff * attempt as u32);
        }
        match download(&entry.url, opts.timeout) {
            Ok(bytes) => {
                let got = sha256_hex(&bytes);
                if let Some(want) = &entry.sha256 {
                    if &got != want {
                        last = format!("checksum mismatch: expected {want}, got {got}");
                        log::warn!("{}: {last} (attempt {})", entry.url, attempt + 1);
                        continue;
                    }
                }
                let tmp = dir.join(format!(".{}.part", entry.file_name));
                let res = std::fs::write(&tmp, &bytes).and_then(|_| std::fs::rename(&tmp, &path));
                return match res {
                    Ok(()) => (FetchStatus::Downloaded, Some(got)),
                    Err(e) => (FetchStatus::Failed(format!("{}: {e}", path.display())), None),
                };
            }
            Err((e, retry)) => {
                last = e.to_string();
                log::warn!("{last} (attempt {})", attempt + 1);
                if !retry {
                    break;
                }
            }
        }
    }
    (FetchStatus::Failed(last), None)
}

/// Fetches every manifest entry into `out_dir`, at most `opts.jobs` at a
/// time. Per-file failures are reported in the outcome, not as an error.
pub fn fetch(entries: &[ManifestEntry], out_dir: &Path, opts: &FetchOptions) -> Result<FetchOutcome> {
    if entries.is_empty() {
        return Ok(FetchOutcome::default());
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut records = read_records(out_dir);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let results: Vec<(FetchStatus, Option<String>)> = pool.install(|| {
        entries
            .par_iter()
            .map(|e| fetch_one(e, out_dir, records.get(&e.file_name), opts))
            .collect()
    });
    let mut outcome = FetchOutcome::default();
    for (entry, (status, hash)) in entries.iter().zip(results) {
        match hash {
            Some(h) => {
                records.insert(entry.file_name.clone(), h);
            }
            None => {
                records.remove(&entry.file_name);
            }
        }
        outcome.files.push((out_dir.join(&entry.file_name), status));
    }
    write_records(out_dir, &records)?;
    Ok(outcome)
}
