mod common;

use std::sync::Arc;
use std::time::Duration;

use base64::Engine;
use capens::cache::DiskCache;
use capens::core::eval::Embedder;
use capens::core::ImageRef;
use capens::http::HttpClient;
use capens::provider::{EmbeddingProviderSpec, Provider, ProviderError};
use common::{dead_endpoint, StubServer};

fn quick_http() -> HttpClient {
    HttpClient::new(Some("sekret".into())).with_retries(1, Duration::from_millis(5))
}

fn open(spec: &str, cache: Option<Arc<DiskCache>>, base: &std::path::Path) -> Provider {
    Provider::open(spec.parse().unwrap(), cache, base, quick_http()).unwrap()
}

/// Text i -> [len, first byte, i]; images -> [decoded byte count, 0, i].
fn echo_server() -> StubServer {
    StubServer::start(|req| {
        let body = if req.body.is_empty() { serde_json::Value::Null } else { req.json() };
        match req.path.as_str() {
            "/v1/health" => (200, r#"{"status":"ok","model":"echo","dim":3}"#.into()),
            "/v1/embed/text" => {
                let rows: Vec<Vec<f64>> = body["texts"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let t = t.as_str().unwrap();
                        vec![t.len() as f64, f64::from(t.as_bytes()[0]), i as f64]
                    })
                    .collect();
                (200, serde_json::json!({"model": "echo", "dim": 3, "embeddings": rows}).to_string())
            }
            "/v1/embed/image" => {
                let rows: Vec<Vec<f64>> = body["images_b64"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .enumerate()
                    .map(|(i, b)| {
                        let bytes = base64::engine::general_purpose::STANDARD.decode(b.as_str().unwrap()).unwrap();
                        vec![bytes.len() as f64, 0.0, i as f64]
                    })
                    .collect();
                (200, serde_json::json!({"model": "echo", "dim": 3, "embeddings": rows}).to_string())
            }
            _ => (404, "{}".into()),
        }
    })
}

#[test]
fn http_echo_fixture_preserves_order() {
    let server = echo_server();
    let dir = tempfile::tempdir().unwrap();
    let p = open(&format!("http:endpoint={},model=echo,dim=3", server.url), None, dir.path());
    assert_eq!(p.health().unwrap().dim, 3);

    let texts: Vec<String> = ["A photo of a snow ball", "xy", "a photo of a lab coat. An example"].map(String::from).to_vec();
    let got = p.embed_texts(&texts).unwrap();
    let want: Vec<Vec<f64>> = texts.iter().enumerate().map(|(i, t)| vec![t.len() as f64, f64::from(t.as_bytes()[0]), i as f64]).collect();
    assert_eq!(got.iter().map(|v| v.values().to_vec()).collect::<Vec<_>>(), want);

    let text_req = server.requests().into_iter().find(|r| r.path == "/v1/embed/text").unwrap();
    assert_eq!(text_req.method, "POST");
    assert_eq!(text_req.header("authorization"), Some("Bearer sekret"));
    assert_eq!(text_req.json(), serde_json::json!({"model": "echo", "texts": texts}));
}

#[test]
fn http_images_are_sent_as_base64_bytes() {
    let server = echo_server();
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("img")).unwrap();
    std::fs::write(dir.path().join("img/a.jpg"), b"12345").unwrap();
    std::fs::write(dir.path().join("img/b.jpg"), b"1").unwrap();
    let p = open(&format!("http:endpoint={},model=echo,dim=3", server.url), None, dir.path());
    let got = p.embed_images(&[ImageRef::new("a", "img/a.jpg"), ImageRef::new("b", "img/b.jpg")]).unwrap();
    assert_eq!(got[0].values(), [5.0, 0.0, 0.0]);
    assert_eq!(got[1].values(), [1.0, 0.0, 1.0]);
    let req = server.requests().into_iter().find(|r| r.path == "/v1/embed/image").unwrap();
    assert_eq!(req.json()["images_b64"][0], "MTIzNDU=");
}

#[test]
fn http_dim_and_count_mismatches() {
    let server = StubServer::start(|req| match req.path.as_str() {
        "/v1/health" => (200, r#"{"status":"ok","model":"m","dim":4}"#.into()),
        _ => (200, r#"{"model":"m","dim":3,"embeddings":[[1,2,3]]}"#.into()),
    });
    let dir = tempfile::tempdir().unwrap();
    let p = open(&format!("http:endpoint={},model=m,dim=3", server.url), None, dir.path());
    assert!(matches!(p.health(), Err(ProviderError::DimMismatch { expected: 3, got: 4 })));
    assert!(matches!(p.embed_texts(&["a".into(), "b".into()]), Err(ProviderError::ProviderUnavailable(_))));
    let p4 = open(&format!("http:endpoint={},model=m,dim=4", server.url), None, dir.path());
    assert!(matches!(p4.embed_texts(&["a".into()]), Err(ProviderError::DimMismatch { expected: 4, got: 3 })));
}

#[test]
fn http_retries_transient_failures() {
    let calls = Arc::new(std::sync::atomic::AtomicUsize::new(0));
    let c = Arc::clone(&calls);
    let server = StubServer::start(move |_| {
        if c.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 0 {
            (503, r#"{"detail":"loading"}"#.into())
        } else {
            (200, r#"{"model":"m","dim":2,"embeddings":[[0.6,0.8]]}"#.into())
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let p = open(&format!("http:endpoint={},model=m,dim=2", server.url), None, dir.path());
    assert_eq!(p.embed_texts(&["a".into()]).unwrap()[0].values(), [0.6, 0.8]);
    assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), 2);
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let p = open(&format!("http:endpoint={},model=m,dim=2", dead_endpoint()), None, dir.path());
    assert!(matches!(p.embed_texts(&["a".into()]), Err(ProviderError::ProviderUnavailable(_))));
}

#[test]
fn synthetic_hash_is_deterministic_and_content_addressed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("one.jpg"), b"same bytes").unwrap();
    std::fs::write(dir.path().join("two.jpg"), b"same bytes").unwrap();
    std::fs::write(dir.path().join("three.jpg"), b"other bytes").unwrap();
    let p = open("synthetic-hash:dim=16,seed=7", None, dir.path());

    let twice = p.embed_texts(&["A photo of a snow ball".into(), "A photo of a snow ball".into()]).unwrap();
    assert_eq!(twice[0].values().iter().map(|x| x.to_bits()).collect::<Vec<_>>(), twice[1].values().iter().map(|x| x.to_bits()).collect::<Vec<_>>());

    let abs = dir.path().join("two.jpg");
    let imgs = [
        ImageRef::new("a", "one.jpg"),
        ImageRef::new("b", format!("file://{}", abs.display())),
        ImageRef::new("c", "three.jpg"),
    ];
    let v = p.embed_images(&imgs).unwrap();
    assert_eq!(v[0], v[1]);
    assert_ne!(v[0], v[2]);
    assert!(v.iter().all(|x| x.dim() == 16 && x.is_normalized()));
}

#[test]
fn std_and_core_synthetic_embedders_agree() {
    use capens::core::synthetic::{SyntheticEmbedder, SyntheticKind};
    let dir = tempfile::tempdir().unwrap();
    let p = open("synthetic-hash:dim=8,seed=3,model=synthetic", None, dir.path());
    let core = SyntheticEmbedder::new(SyntheticKind::Hash, 3, 8, "synthetic");
    let img = [ImageRef::new("x", "unused").with_hash("abcd")];
    assert_eq!(p.embed_images(&img).unwrap(), core.embed_images(&img).unwrap());
    assert_eq!(p.embed_texts(&["t".into()]).unwrap(), core.embed_texts(&["t".into()]).unwrap());
}

#[test]
fn unreadable_uri_names_the_uri() {
    let dir = tempfile::tempdir().unwrap();
    let p = open("synthetic-hash:dim=4,seed=1", None, dir.path());
    match p.embed_images(&[ImageRef::new("gone", "missing/gone.jpg")]) {
        Err(ProviderError::ProviderUnavailable(detail)) => assert!(detail.contains("missing/gone.jpg"), "{detail}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn file_store_missing_embedding() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.jsonl");
    let lines: Vec<String> = ["t1", "t2", "t3"]
        .iter()
        .map(|k| serde_json::json!({"ns": "text", "model": "clip", "key": k, "dim": 2, "v": [1.0, 0.0]}).to_string())
        .collect();
    std::fs::write(&path, lines.join("\n")).unwrap();
    let p = open(&format!("file-store:path={},model=clip,dim=2", path.display()), None, dir.path());
    let texts: Vec<String> = ["t1", "t2", "t3", "t4"].map(String::from).to_vec();
    assert!(matches!(p.embed_texts(&texts), Err(ProviderError::MissingEmbedding(t)) if t == "t4"));
    assert_eq!(p.embed_texts(&texts[..3]).unwrap().len(), 3);
}

#[test]
fn file_store_bulk_load_1200_images() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.jsonl");
    let dim = 32;
    let mut body = String::new();
    let mut images = Vec::new();
    for i in 0..1200 {
        let hash = common::fake_hash(&format!("img-{i}"));
        let v: Vec<f64> = (0..dim).map(|j| ((i * 31 + j) % 17) as f64 - 8.0).collect();
        body.push_str(&serde_json::json!({"ns": "image", "model": "clip", "key": hash, "dim": dim, "v": v}).to_string());
        body.push('\n');
        images.push(ImageRef::new(format!("img-{i}"), format!("{i}.jpg")).with_hash(hash));
    }
    std::fs::write(&path, body).unwrap();
    let p = open(&format!("file-store:path={},model=clip,dim={dim}", path.display()), None, dir.path());
    let v = p.embed_images(&images).unwrap();
    assert_eq!(v.len(), 1200);
    assert!(v.iter().all(|x| x.dim() == dim));
}

#[test]
fn cache_is_transparent_and_skips_the_provider_when_warm() {
    let server = echo_server();
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(DiskCache::open(dir.path().join("cache")).unwrap());
    let spec = format!("http:endpoint={},model=echo,dim=3", server.url);
    let texts: Vec<String> = ["alpha", "beta"].map(String::from).to_vec();

    let cold = open(&spec, Some(Arc::clone(&cache)), dir.path()).embed_texts(&texts).unwrap();
    let n = server.requests().len();
    let warm = open(&spec, Some(Arc::clone(&cache)), dir.path()).embed_texts(&texts).unwrap();
    assert_eq!(cold, warm);
    assert_eq!(server.requests().len(), n, "warm run must not call the service");

    // Only the miss goes over the wire, and order is kept.
    let mixed: Vec<String> = ["gamma", "alpha"].map(String::from).to_vec();
    let got = open(&spec, Some(cache), dir.path()).embed_texts(&mixed).unwrap();
    assert_eq!(got[1], cold[0]);
    let last = server.requests().pop().unwrap();
    assert_eq!(last.json()["texts"], serde_json::json!(["gamma"]));
}

#[test]
fn synthetic_cache_scope_includes_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(DiskCache::open(dir.path().join("cache")).unwrap());
    let a = open("synthetic-random:dim=4,seed=1", Some(Arc::clone(&cache)), dir.path());
    let b = open("synthetic-random:dim=4,seed=2", Some(cache), dir.path());
    let t = vec!["x".to_string()];
    assert_ne!(a.embed_texts(&t).unwrap(), b.embed_texts(&t).unwrap());
}

#[test]
fn spec_validation_on_open() {
    let dir = tempfile::tempdir().unwrap();
    let spec: EmbeddingProviderSpec = "http:dim=3".parse().unwrap();
    assert!(matches!(Provider::open(spec, None, dir.path(), quick_http()), Err(ProviderError::InvalidSpec(_))));
    let missing: EmbeddingProviderSpec = "file-store:path=/nonexistent.jsonl,dim=3".parse().unwrap();
    assert!(matches!(Provider::open(missing, None, dir.path(), quick_http()), Err(ProviderError::ProviderUnavailable(_))));
}
