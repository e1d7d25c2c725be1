//! Caption sources (a chat-completion endpoint or a local replies file) and
//! the cache-backed service that hands out caption sets.

use std::collections::HashMap;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use capens_core::captions::{
    generate_captions, CaptionRequest, CaptionSet, CompletionSource, GenerateError, DEFAULT_RETRIES, DEFAULT_TEMPERATURE,
    DEFAULT_TOP_P,
};
use capens_core::digest::{sha256_fields, sha256_hex, to_hex};
use capens_core::CompoundNoun;
use serde::{Deserialize, Serialize};

use crate::cache::{CacheKey, CacheNamespace, DiskCache};
use crate::http::{HttpClient, HttpError};
use crate::provider::parse_pairs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaptionerKind {
    /// Chat-completion HTTP endpoint.
    Chat,
    /// JSON object mapping each compound noun to a reply string or a list of captions.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionerSpec {
    pub kind: CaptionerKind,
    /// Full URL of the chat-completions route.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_retries")]
    pub retries: usize,
}

fn default_model() -> String {
    "default".into()
}
fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_top_p() -> f64 {
    DEFAULT_TOP_P
}
fn default_retries() -> usize {
    DEFAULT_RETRIES
}

impl CaptionerSpec {
    pub fn validate(&self) -> Result<(), CaptionerError> {
        match self.kind {
            CaptionerKind::Chat if self.endpoint.is_none() => Err(CaptionerError::InvalidSpec("chat: endpoint is required".into())),
            CaptionerKind::File if self.path.is_none() => Err(CaptionerError::InvalidSpec("file: path is required".into())),
            _ => Ok(()),
        }
    }
}

/// Parses `kind[:key=value,...]`, e.g. `chat:endpoint=http://host/v1/chat/completions,model=gpt-4`.
impl FromStr for CaptionerSpec {
    type Err = CaptionerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let kind = match kind.trim() {
            "chat" => CaptionerKind::Chat,
            "file" => CaptionerKind::File,
            other => return Err(CaptionerError::InvalidSpec(format!("unknown captioner kind {other:?}"))),
        };
        let mut spec = CaptionerSpec {
            kind,
            endpoint: None,
            path: None,
            model: default_model(),
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            retries: DEFAULT_RETRIES,
        };
        for (key, value) in parse_pairs(rest).map_err(CaptionerError::InvalidSpec)? {
            let bad = |e: String| CaptionerError::InvalidSpec(format!("{key}={value}: {e}"));
            match key {
                "endpoint" => spec.endpoint = Some(value.into()),
                "path" => spec.path = Some(value.into()),
                "model" => spec.model = value.into(),
                "temperature" => spec.temperature = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "top_p" => spec.top_p = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "retries" => spec.retries = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                _ => return Err(CaptionerError::InvalidSpec(format!("unknown captioner option {key:?}"))),
            }
        }
        Ok(spec)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CaptionerError {
    #[error("caption endpoint: {0}")]
    Http(#[from] HttpError),
    #[error("caption endpoint returned no message content")]
    EmptyReply,
    #[error("no caption reply for {0:?} in the replies file")]
    Missing(String),
    #[error("replies file {path}: {detail}")]
    BadFile { path: String, detail: String },
    #[error("invalid captioner spec: {0}")]
    InvalidSpec(String),
    #[error("caption cache: {0}")]
    Cache(#[from] crate::cache::CacheError),
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    top_p: f64,
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Debug, Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ChatCaptioner {
    endpoint: String,
    model: String,
    provider_id: String,
    http: HttpClient,
}

impl ChatCaptioner {
    pub fn new(endpoint: &str, model: &str, http: HttpClient) -> Self {
        Self { endpoint: endpoint.into(), model: model.into(), provider_id: format!("chat:{model}"), http }
    }
}

impl CompletionSource for ChatCaptioner {
    type Error = CaptionerError;

    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn complete(&self, request: &CaptionRequest) -> Result<String, CaptionerError> {
        let body = ChatRequest {
            model: &self.model,
            messages: [ChatMessage { role: "user", content: &request.instruction }],
            temperature: request.temperature,
            top_p: request.top_p,
        };
        let resp: ChatResponse = self.http.post_json(&self.endpoint, &body)?;
        resp.choices.into_iter().next().and_then(|c| c.message.content).ok_or(CaptionerError::EmptyReply)
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum FileReply {
    Raw(String),
    Captions(Vec<String>),
}

/// Replies read from a JSON file, keyed by lower-cased compound noun.
#[derive(Debug, Clone)]
pub struct FileCaptioner {
    replies: HashMap<String, String>,
    provider_id: String,
}

impl FileCaptioner {
    pub fn load(path: &std::path::Path) -> Result<Self, CaptionerError> {
        let bad = |detail: String| CaptionerError::BadFile { path: path.display().to_string(), detail };
        let raw = std::fs::read(path).map_err(|e| bad(e.to_string()))?;
        let map: HashMap<String, FileReply> = serde_json::from_slice(&raw).map_err(|e| bad(e.to_string()))?;
        let replies = map
            .into_iter()
            .map(|(cn, reply)| {
                let cn = CompoundNoun::new(&cn).map_err(|e| bad(format!("{cn:?}: {e}")))?.prompt_text();
                let text = match reply {
                    FileReply::Raw(s) => s,
                    FileReply::Captions(list) => serde_json::to_string(&list).expect("strings serialize"),
                };
                Ok((cn, text))
            })
            .collect::<Result<_, CaptionerError>>()?;
        // The content digest scopes the cache, so editing the file invalidates it.
        Ok(Self { replies, provider_id: format!("file:{}", &sha256_hex(&raw)[..16]) })
    }
}

impl CompletionSource for FileCaptioner {
    type Error = CaptionerError;

    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn complete(&self, request: &CaptionRequest) -> Result<String, CaptionerError> {
        let cn = request.compound_noun.prompt_text();
        self.replies.get(&cn).cloned().ok_or(CaptionerError::Missing(cn))
    }
}

#[derive(Debug, Clone)]
pub enum Captioner {
    Chat(ChatCaptioner),
    File(FileCaptioner),
}

impl Captioner {
    pub fn open(spec: &CaptionerSpec, http: HttpClient) -> Result<Self, CaptionerError> {
        spec.validate()?;
        Ok(match spec.kind {
            CaptionerKind::Chat => Captioner::Chat(ChatCaptioner::new(spec.endpoint.as_deref().expect("validated"), &spec.model, http)),
            CaptionerKind::File => Captioner::File(FileCaptioner::load(spec.path.as_deref().expect("validated"))?),
        })
    }
}

impl CompletionSource for Captioner {
    type Error = CaptionerError;

    fn provider_id(&self) -> &str {
        match self {
            Captioner::Chat(c) => c.provider_id(),
            Captioner::File(c) => c.provider_id(),
        }
    }

    fn complete(&self, request: &CaptionRequest) -> Result<String, CaptionerError> {
        match self {
            Captioner::Chat(c) => c.complete(request),
            Captioner::File(c) => c.complete(request),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptionOrigin {
    Generated,
    Cached,
}

/// Caption sets through the disk cache, keyed on the compound noun, `k`, the
/// instruction digest and the captioner identity.
#[derive(Debug)]
pub struct CaptionService<'a, S> {
    source: &'a S,
    cache: Option<&'a DiskCache>,
    temperature: f64,
    top_p: f64,
    retries: usize,
}

impl<'a, S: CompletionSource<Error = CaptionerError>> CaptionService<'a, S> {
    pub fn new(source: &'a S, cache: Option<&'a DiskCache>) -> Self {
        Self { source, cache, temperature: DEFAULT_TEMPERATURE, top_p: DEFAULT_TOP_P, retries: DEFAULT_RETRIES }
    }

    pub fn with_decoding(mut self, temperature: f64, top_p: f64, retries: usize) -> Self {
        self.temperature = temperature;
        self.top_p = top_p;
        self.retries = retries;
        self
    }

    pub fn request(&self, cn: &CompoundNoun, k: usize) -> CaptionRequest {
        let mut req = CaptionRequest::new(cn.clone(), k);
        req.temperature = self.temperature;
        req.top_p = self.top_p;
        req
    }

    pub fn cache_key(&self, req: &CaptionRequest) -> CacheKey {
        let k = req.k.to_string();
        let instruction = sha256_hex(req.instruction.as_bytes());
        let decoding = format!("{}/{}", req.temperature, req.top_p);
        let payload = sha256_fields(&[
            req.compound_noun.prompt_text().as_bytes(),
            k.as_bytes(),
            instruction.as_bytes(),
            decoding.as_bytes(),
        ]);
        CacheKey {
            namespace: CacheNamespace::Captions,
            provider_id: self.source.provider_id().into(),
            model_id: String::new(),
            payload_digest: to_hex(&payload),
        }
    }

    pub fn get(&self, cn: &CompoundNoun, k: usize) -> Result<(CaptionSet, CaptionOrigin), GenerateError<CaptionerError>> {
        let req = self.request(cn, k);
        req.validate()?;
        let key = self.cache_key(&req);
        if let Some(set) = self.cache.and_then(|c| c.lookup::<CaptionSet>(&key)).filter(|s| s.len() == k) {
            return Ok((set, CaptionOrigin::Cached));
        }
        let set = generate_captions(self.source, &req, self.retries, unix_now())?;
        if let Some(cache) = self.cache {
            cache.store(&key, &set).map_err(|e| GenerateError::Provider(e.into()))?;
        }
        Ok((set, CaptionOrigin::Generated))
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    const CROCODILE: &str = "[\"Pastry chef sculpting a chocolate crocodile with finesse.\", \"Kids discovering a chocolate crocodile in a candy treasure hunt.\", \"Artist painting a whimsical chocolate crocodile in a foodie gallery.\", \"Chocolate crocodile starring in a whimsical patisserie window display.\", \"Chocolate crocodile sunbathing on a dessert island paradise.\"]";

    struct Counting {
        calls: Cell<usize>,
    }

    impl CompletionSource for Counting {
        type Error = CaptionerError;
        fn provider_id(&self) -> &str {
            "counting"
        }
        fn complete(&self, _: &CaptionRequest) -> Result<String, CaptionerError> {
            self.calls.set(self.calls.get() + 1);
            Ok(CROCODILE.into())
        }
    }

    #[test]
    fn spec_strings() {
        let s: CaptionerSpec = "chat:endpoint=http://h:1/v1/chat/completions,model=gpt-4,retries=0".parse().unwrap();
        assert_eq!((s.kind, s.model.as_str(), s.retries, s.temperature, s.top_p), (CaptionerKind::Chat, "gpt-4", 0, 0.1, 1.0));
        s.validate().unwrap();
        assert!("file".parse::<CaptionerSpec>().unwrap().validate().is_err());
        assert!("llm:x=1".parse::<CaptionerSpec>().is_err());
        assert!("chat:temperature=hot".parse::<CaptionerSpec>().is_err());
    }

    #[test]
    fn second_request_is_served_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        let source = Counting { calls: Cell::new(0) };
        let svc = CaptionService::new(&source, Some(&cache));
        let cn = CompoundNoun::new("chocolate crocodile").unwrap();
        let (a, oa) = svc.get(&cn, 5).unwrap();
        let (b, ob) = svc.get(&cn, 5).unwrap();
        assert_eq!((oa, ob), (CaptionOrigin::Generated, CaptionOrigin::Cached));
        assert_eq!(a, b);
        assert_eq!(source.calls.get(), 1);
        assert_eq!(a.captions()[0], "Pastry chef sculpting a chocolate crocodile with finesse.");
        // A different k is a different instruction and a different entry.
        let (c, oc) = svc.get(&cn, 3).unwrap();
        assert_eq!((c.len(), oc), (3, CaptionOrigin::Generated));
    }

    #[test]
    fn file_captioner_accepts_raw_and_list_replies() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replies.json");
        std::fs::write(&path, format!(r#"{{"Chocolate Crocodile": {CROCODILE:?}, "snow ball": ["a snow ball", "two snow ball fights"]}}"#)).unwrap();
        let f = FileCaptioner::load(&path).unwrap();
        assert!(f.provider_id().starts_with("file:"));
        let svc = CaptionService::new(&f, None);
        assert_eq!(svc.get(&CompoundNoun::new("chocolate crocodile").unwrap(), 5).unwrap().0.len(), 5);
        assert_eq!(svc.get(&CompoundNoun::new("snow ball").unwrap(), 2).unwrap().0.captions()[1], "two snow ball fights");
        assert!(matches!(
            svc.get(&CompoundNoun::new("ice cream").unwrap(), 2),
            Err(GenerateError::Provider(CaptionerError::Missing(cn))) if cn == "ice cream"
        ));
    }
}
