//! Blocking JSON-over-HTTP helpers shared by the embedding and caption clients.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub const API_KEY_ENV: &str = "CAPENS_API_KEY";

#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    api_key: Option<String>,
    retries: usize,
    backoff: Duration,
}

#[derive(Debug, thiserror::Error)]
pub enum HttpError {
    #[error("{url}: {detail}")]
    Transport { url: String, detail: String },
    #[error("{url}: HTTP {status}: {body}")]
    Status { url: String, status: u16, body: String },
    #[error("{url}: unexpected response body: {detail}")]
    Decode { url: String, detail: String },
}

impl HttpClient {
    /// Bearer token taken from `CAPENS_API_KEY` when set.
    pub fn from_env() -> Self {
        Self::new(std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()))
    }

    pub fn new(api_key: Option<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build();
        Self { agent: config.into(), api_key, retries: 2, backoff: Duration::from_millis(200) }
    }

    /// Transient failures (transport errors, 429, 5xx) are retried this many times.
    pub fn with_retries(mut self, retries: usize, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }

    pub fn post_json<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, HttpError> {
        self.with_retry(url, || {
            let mut req = self.agent.post(url);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            req.send_json(body)
        })
    }

    pub fn get_json<R: DeserializeOwned>(&self, url: &str) -> Result<R, HttpError> {
        self.with_retry(url, || {
            let mut req = self.agent.get(url);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            req.call()
        })
    }

    pub fn get_bytes(&self, url: &str) -> Result<Vec<u8>, HttpError> {
        let mut attempt = 0;
        loop {
            match self.agent.get(url).call() {
                Ok(resp) if resp.status().is_success() => {
                    return resp
                        .into_body()
                        .read_to_vec()
                        .map_err(|e| HttpError::Transport { url: url.into(), detail: e.to_string() })
                }
                Ok(resp) if attempt < self.retries && retryable(resp.status().as_u16()) => {}
                Ok(resp) => return Err(status_error(url, resp)),
                Err(e) if attempt < self.retries => log::debug!("{url}: {e}; retrying"),
                Err(e) => return Err(HttpError::Transport { url: url.into(), detail: e.to_string() }),
            }
            std::thread::sleep(self.backoff * 2u32.pow(attempt as u32));
            attempt += 1;
        }
    }

    fn with_retry<R: DeserializeOwned>(
        &self,
        url: &str,
        send: impl Fn() -> Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<R, HttpError> {
        let mut attempt = 0;
        loop {
            match send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp
                        .into_body()
                        .read_json()
                        .map_err(|e| HttpError::Decode { url: url.into(), detail: e.to_string() })
                }
                Ok(resp) if attempt < self.retries && retryable(resp.status().as_u16()) => {
                    log::debug!("{url}: HTTP {}; retrying", resp.status());
                }
                Ok(resp) => return Err(status_error(url, resp)),
                Err(e) if attempt < self.retries => log::debug!("{url}: {e}; retrying"),
                Err(e) => return Err(HttpError::Transport { url: url.into(), detail: e.to_string() }),
            }
            std::thread::sleep(self.backoff * 2u32.pow(attempt as u32));
            attempt += 1;
        }
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || status >= 500
}

fn status_error(url: &str, resp: ureq::http::Response<ureq::Body>) -> HttpError {
    let status = resp.status().as_u16();
    let mut body = resp.into_body().read_to_string().unwrap_or_default();
    body.truncate(200);
    HttpError::Status { url: url.into(), status, body }
}

pub(crate) fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}
