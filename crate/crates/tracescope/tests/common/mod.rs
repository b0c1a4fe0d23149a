#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::Arc;

use tracescope::api::{ApiConfig, AppState};
use tracescope::Store;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tracescope"))
}

/// Agent that reports 4xx/5xx as ordinary responses.
pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

pub struct Reply {
    pub status: u16,
    pub content_type: String,
    pub headers: ureq::http::HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(name).and_then(|v| v.to_str().ok())
    }
}

fn finish(mut r: ureq::http::Response<ureq::Body>) -> Reply {
    let content_type = r
        .headers()
        .get("content-type")
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_owned();
    Reply {
        status: r.status().as_u16(),
        content_type,
        headers: r.headers().clone(),
        body: r.body_mut().read_to_vec().expect("read body"),
    }
}

pub fn get(base: &str, path: &str) -> Reply {
    finish(agent().get(format!("{base}{path}")).call().expect("GET"))
}

pub fn get_binary(base: &str, path: &str) -> Reply {
    finish(
        agent()
            .get(format!("{base}{path}"))
            .header("Accept", "application/octet-stream")
            .call()
            .expect("GET"),
    )
}

pub fn delete(base: &str, path: &str) -> Reply {
    finish(agent().delete(format!("{base}{path}")).call().expect("DELETE"))
}

/// Multipart parts: `(field, file name, bytes)`.
pub fn post_multipart(base: &str, path: &str, parts: &[(&str, Option<&str>, &[u8])]) -> Reply {
    let boundary = "tracescope-test-boundary";
    let mut body = Vec::new();
    for (field, file, bytes) in parts {
        body.extend_from_slice(format!("--{boundary}\r\n").as_bytes());
        match file {
            Some(f) => body.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{field}\"; filename=\"{f}\"\r\nContent-Type: application/octet-stream\r\n\r\n").as_bytes(),
            ),
            None => body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{field}\"\r\n\r\n").as_bytes()),
        }
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    finish(
        agent()
            .post(format!("{base}{path}"))
            .header("Content-Type", format!("multipart/form-data; boundary={boundary}"))
            .send(&body[..])
            .expect("POST"),
    )
}

/// Poll a bundling job until it leaves the running state.
pub fn wait_job(base: &str, job_id: &str) -> serde_json::Value {
    for _ in 0..500 {
        let j = get(base, &format!("/api/v1/jobs/{job_id}")).json();
        if j["status"] != "running" {
            return j;
        }
        std::thread::sleep(std::time::Duration::from_millis(10));
    }
    panic!("job {job_id} did not finish");
}

/// In-process server on an ephemeral port; stops with the test process.
pub fn spawn_server(store: Arc<Store>, config: ApiConfig) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            tracescope::api::serve(listener, AppState::new(store, config))
                .await
                .unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

/// `tracescope serve --port 0` as a child process; killed on drop.
pub struct ServerProcess {
    pub child: Child,
    pub base: String,
}

impl ServerProcess {
    pub fn start(data_dir: &std::path::Path) -> ServerProcess {
        let mut child = bin()
            .args(["serve", "--port", "0", "--data-dir"])
            .arg(data_dir)
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawn server");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let base = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_owned();
        ServerProcess { child, base }
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Twenty requests covering every query type.
pub fn probe_set(ds: &tracescope_core::Dataset) -> Vec<(String, tracescope::service::Params)> {
    let span = ds.span();
    let (q1, mid) = (span / 4, span / 2);
    let last_guid = ds.intervals.last().map_or(1, |i| i.guid.0);
    let first_guid = ds.intervals.first().map_or(1, |i| i.guid.0);
    let counter = ds.meta.counter_names.first().cloned().unwrap_or_default();
    let node = ds.tree.len().saturating_sub(1);
    let mut raw: Vec<(String, String)> = [
        ("", String::new()),
        ("utilization", "width=64".into()),
        ("utilization", format!("t0={q1}&t1={mid}&width=17&overdraw=1")),
        (
            "utilization",
            format!("width=40&node={node}&selection=durations:0..{q1}"),
        ),
        ("utilization", "width=33&loc0=0&loc1=1&selection=node:0".into()),
        ("gantt", "width=50".into()),
        (
            "gantt",
            format!("t0={q1}&t1={}&width=9&selection=interval:{first_guid}", mid + 1),
        ),
        ("histogram", "bins=7".into()),
        ("histogram", "bins=16&scale=log&node=0".into()),
        ("tree", String::new()),
        ("tree", "depth=2&root=0".into()),
        ("agg-gantt", "node=0&width=25".into()),
        ("agg-gantt", format!("node={node}&t0=0&t1={mid}&width=11&overdraw=2")),
        ("counters", String::new()),
        ("counter", format!("name={counter}&width=20&per_location=true")),
        ("interval-at", format!("time={mid}&loc=0")),
        ("source", String::new()),
        ("utilization", "width=1920&overdraw=3".into()),
    ]
    .into_iter()
    .map(|(e, q): (&str, String)| (e.to_owned(), q))
    .collect();
    raw.push((format!("interval/{last_guid}"), String::new()));
    raw.push((format!("deps/{first_guid}"), "descendants=true".into()));
    raw.into_iter()
        .map(|(e, q)| {
            let params = q
                .split('&')
                .filter(|s| !s.is_empty())
                .map(|kv| {
                    let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
                    (k.to_owned(), v.to_owned())
                })
                .collect();
            (e, params)
        })
        .collect()
}

/// JSON bytes of every probe query (errors included, by code).
pub fn probe(ds: &tracescope_core::Dataset) -> Vec<Vec<u8>> {
    use tracescope::service::{execute, Query, DEFAULT_OVERDRAW};
    use tracescope_core::query::Cancel;
    probe_set(ds)
        .iter()
        .map(|(endpoint, params)| {
            match Query::parse(ds, endpoint, params, DEFAULT_OVERDRAW).and_then(|q| execute(ds, &q, Cancel::NEVER)) {
                Ok(a) => a.to_json(),
                Err(e) => format!("error {}", e.code).into_bytes(),
            }
        })
        .collect()
}
