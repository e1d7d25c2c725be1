#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use capens::core::digest::sha256_hex;
use capens::core::{BenchmarkInstance, BenchmarkManifest, Category, CompoundNoun, ImageRef};

#[derive(Debug, Clone)]
pub struct Recorded {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Recorded {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).expect("request body is JSON")
    }
}

type Handler = dyn Fn(&Recorded) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server answering each request with `handler`.
pub struct StubServer {
    pub url: String,
    requests: Arc<Mutex<Vec<Recorded>>>,
}

impl StubServer {
    pub fn start(handler: impl Fn(&Recorded) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        let handler: Arc<Handler> = Arc::new(handler);
        std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let (log, handler) = (Arc::clone(&log), Arc::clone(&handler));
                std::thread::spawn(move || serve(stream, &log, &*handler));
            }
        });
        Self { url, requests }
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, log: &Mutex<Vec<Recorded>>, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).unwrap();
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .map_or(0, |(_, v)| v.parse().unwrap());
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let req = Recorded { method, path, headers, body };
    let (status, resp) = handler(&req);
    log.lock().unwrap().push(req);
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} STUB\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{resp}",
        resp.len()
    );
    let _ = stream.flush();
}

/// A local address with nothing listening on it.
pub fn dead_endpoint() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", l.local_addr().unwrap());
    drop(l);
    url
}

pub fn fake_hash(image_id: &str) -> String {
    sha256_hex(image_id.as_bytes())
}

/// `cns[i]` becomes instance `inst-{i}` with images `img-{i}-{p,n1,n2}`,
/// each carrying a content hash derived from its id.
pub fn manifest(name: &str, version: &str, cns: &[String]) -> BenchmarkManifest {
    let img = |id: String| {
        let h = fake_hash(&id);
        ImageRef::new(id.clone(), format!("images/{id}.jpg")).with_hash(h)
    };
    BenchmarkManifest {
        name: name.into(),
        version: version.into(),
        instances: cns
            .iter()
            .enumerate()
            .map(|(i, cn)| BenchmarkInstance {
                id: format!("inst-{i:03}"),
                compound_noun: CompoundNoun::new(cn).unwrap(),
                positive: img(format!("img-{i}-p")),
                negatives: [img(format!("img-{i}-n1")), img(format!("img-{i}-n2"))],
                category: Category::ALL[i % 3],
            })
            .collect(),
    }
}

pub fn two_token_cns(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("noun{i} thing{i}")).collect()
}

pub fn write_manifest(dir: &Path, m: &BenchmarkManifest) -> PathBuf {
    let path = dir.join("manifest.json");
    std::fs::write(&path, capens::manifest::serialize_manifest(m)).unwrap();
    path
}

fn record(ns: &str, key: &str, v: &[f64]) -> String {
    serde_json::json!({"ns": ns, "model": "fixture", "key": key, "dim": v.len(), "v": v}).to_string()
}

/// File-store records that make every base and reversed prompt match the
/// positive image (`separable`) or a negative (`!separable`).
pub fn write_store(dir: &Path, m: &BenchmarkManifest, separable: bool) -> PathBuf {
    use capens::core::prompt::{build_base_prompt, build_reversed_prompt};
    let e = |i: usize| {
        let mut v = vec![0.0; 3];
        v[i] = 1.0;
        v
    };
    let mut lines = Vec::new();
    for inst in &m.instances {
        lines.push(record("text", &build_base_prompt(&inst.compound_noun), &e(0)));
        if let Ok(rev) = build_reversed_prompt(&inst.compound_noun) {
            lines.push(record("text", &rev, &e(0)));
        }
        let (p, n1) = if separable { (e(0), e(1)) } else { (e(1), e(0)) };
        lines.push(record("image", inst.positive.content_hash.as_ref().unwrap(), &p));
        lines.push(record("image", inst.negatives[0].content_hash.as_ref().unwrap(), &n1));
        lines.push(record("image", inst.negatives[1].content_hash.as_ref().unwrap(), &e(2)));
    }
    let path = dir.join(if separable { "separable.jsonl" } else { "adversarial.jsonl" });
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

pub fn store_spec(path: &Path) -> String {
    format!("file-store:path={},model=fixture,dim=3", path.display())
}

/// Runs the CLI in-process; returns (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = capens::cli::run_args(std::iter::once("capens").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}
