//! Chat-completion client with retries and a requests-per-minute cap, plus
//! the audit log for unreadable responses.

use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sot_core::llm_gen::{parse_response, FormatError};
use sot_core::{ExecConfig, SceneGraph, SoTTrace};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("client config: {0}")]
pub struct ClientConfigError(String);

#[derive(Debug, Clone, PartialEq)]
pub struct GenClientConfig {
    endpoint: String,
    model: String,
    temperature: f64,
    max_retries: u32,
    timeout: Duration,
    requests_per_minute: u32,
    max_tokens: u32,
    api_key_env: String,
}

impl GenClientConfig {
    pub fn new(
        endpoint: &str,
        model: &str,
        temperature: f64,
        max_retries: u32,
        timeout: Duration,
        requests_per_minute: u32,
    ) -> Result<Self, ClientConfigError> {
        if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
            return Err(ClientConfigError(format!("endpoint {endpoint:?} is not an http(s) URL")));
        }
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(ClientConfigError(format!("temperature {temperature} must be >= 0")));
        }
        if requests_per_minute == 0 {
            return Err(ClientConfigError("requests_per_minute must be at least 1".into()));
        }
        if timeout.is_zero() {
            return Err(ClientConfigError("timeout must be positive".into()));
        }
        Ok(GenClientConfig {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            temperature,
            max_retries,
            timeout,
            requests_per_minute,
            max_tokens: 2048,
            api_key_env: "SOTKIT_API_KEY".into(),
        })
    }

    pub fn with_max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn with_api_key_env(mut self, var: &str) -> Self {
        self.api_key_env = var.to_string();
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn max_retries(&self) -> u32 {
        self.max_retries
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn requests_per_minute(&self) -> u32 {
        self.requests_per_minute
    }

    pub fn max_tokens(&self) -> u32 {
        self.max_tokens
    }

    pub fn api_key_env(&self) -> &str {
        &self.api_key_env
    }
}

/// Time source for rate limiting and backoff.
pub trait Clock: Send + Sync {
    /// Time since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Manual clock: `sleep` advances time instantly.
#[derive(Default)]
pub struct MockClock {
    now: Mutex<Duration>,
}

impl MockClock {
    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
}

impl Clock for MockClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.advance(d)
    }
}

/// Sliding one-minute window: at most `cap` permits in any 60 s span.
pub struct RateLimiter {
    cap: usize,
    window: Duration,
    clock: Arc<dyn Clock>,
    sent: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn per_minute(cap: u32, clock: Arc<dyn Clock>) -> Self {
        RateLimiter {
            cap: cap.max(1) as usize,
            window: Duration::from_secs(60),
            clock,
            sent: Mutex::new(VecDeque::new()),
        }
    }

    /// Blocks until a request may be sent, records it and returns the time
    /// it was granted.
    pub fn acquire(&self) -> Duration {
        let mut sent = self.sent.lock().unwrap();
        loop {
            let now = self.clock.now();
            while sent.front().is_some_and(|t| now.saturating_sub(*t) >= self.window) {
                sent.pop_front();
            }
            if sent.len() < self.cap {
                sent.push_back(now);
                return now;
            }
            let oldest = *sent.front().expect("window is full");
            self.clock.sleep(oldest + self.window - now);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("unexpected response body: {0}")]
    Decode(String),
}

impl ClientError {
    fn retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Status { code, .. } => *code == 429 || *code >= 500,
            ClientError::Decode(_) => false,
        }
    }
}

/// Anything that turns a prompt into response text.
pub trait CompletionService: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ClientError>;
}

/// JSON-over-HTTP chat-completion client.
pub struct HttpService {
    cfg: GenClientConfig,
    agent: ureq::Agent,
    limiter: RateLimiter,
    clock: Arc<dyn Clock>,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl HttpService {
    /// Reads the bearer token from the configured environment variable.
    pub fn new(cfg: GenClientConfig, clock: Arc<dyn Clock>) -> Self {
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        let limiter = RateLimiter::per_minute(cfg.requests_per_minute, clock.clone());
        HttpService {
            cfg,
            agent,
            limiter,
            clock,
            api_key,
        }
    }

    fn send_once(&self, prompt: &str) -> Result<String, ClientError> {
        let body = json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let code = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !(200..300).contains(&code) {
            return Err(ClientError::Status { code, body: text });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| ClientError::Decode(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ClientError::Decode("no choices".into()))
    }
}

impl CompletionService for HttpService {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let mut attempt = 0;
        loop {
            self.limiter.acquire();
            match self.send_once(prompt) {
                Ok(text) => return Ok(text),
                Err(e) if e.retryable() && attempt < self.cfg.max_retries => {
                    let backoff = Duration::from_millis(500u64 << attempt.min(6));
                    self.clock.sleep(backoff);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{error}")]
    Format { error: FormatError, response: String },
}

/// Sends one prompt and decodes the reply against `sg`.
pub fn generate_candidate(
    prompt: &str,
    service: &dyn CompletionService,
    sg: &SceneGraph,
    cfg: &ExecConfig,
) -> Result<SoTTrace, GenError> {
    let response = service.complete(prompt)?;
    parse_response(&response, sg, cfg).map_err(|error| GenError::Format { error, response })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub question_id: String,
    pub image_id: String,
    pub error: String,
    /// The response text exactly as received.
    pub response: String,
}

/// Append-only JSONL log of responses that could not be decoded.
pub struct AuditLog {
    file: Mutex<File>,
}

impl AuditLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            file: Mutex::new(file),
        })
    }

    pub fn record(&self, r: &AuditRecord) -> std::io::Result<()> {
        let mut line = serde_json::to_string(r).expect("records serialize");
        line.push('\n');
        let mut f = self.file.lock().unwrap();
        f.write_all(line.as_bytes())?;
        f.flush()
    }
}
